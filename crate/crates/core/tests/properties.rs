use proptest::prelude::*;

use qkdsim_core::experiments::report::{read_csv, write_csv};
use qkdsim_core::experiments::sweeps::ReachRow;
use qkdsim_core::experiments::ExperimentConfig;
use qkdsim_core::link::{apply_rotation, drift_step, LossElement, PolarizationRotation};
use qkdsim_core::optics::{mean_photon_number, Basis, JonesVector, SourceSpec};
use qkdsim_core::protocol::keyrate::qber_threshold;
use qkdsim_core::protocol::sifting::{sift, AliceRecord, BobRecord};
use qkdsim_core::protocol::{
    aes_gcm_capacity, run_session, secret_fraction, skr_from_rkr, Mode, SessionConfig,
};
use qkdsim_core::rng::substream;

fn basis(b: bool) -> Basis {
    if b { Basis::HV } else { Basis::RL }
}

fn analytic_qber(loss_db: f64, e: f64) -> f64 {
    let mut s = SessionConfig { mode: Mode::Analytic, intrinsic_error: e, ..Default::default() };
    s.link.elements = vec![LossElement::fiber_with_loss(1.0, loss_db)];
    run_session(&s).unwrap().result.qber
}

proptest! {
    #[test]
    fn secret_fraction_non_increasing(a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(secret_fraction(lo) >= secret_fraction(hi));
    }

    #[test]
    fn secret_fraction_continuous(q in 0.0f64..0.49) {
        let d = 1e-9;
        prop_assert!((secret_fraction(q + d) - secret_fraction(q)).abs() < 1e-6);
    }

    #[test]
    fn secret_fraction_range(q in 0.0f64..=0.5) {
        let f = secret_fraction(q);
        prop_assert!((0.0..=1.0).contains(&f));
        if q >= 0.1105 {
            prop_assert_eq!(f, 0.0);
        }
        if q > 0.0 {
            prop_assert!(f < 1.0);
        }
    }

    #[test]
    fn skr_bounded_by_rkr(rkr in 0.0f64..1e7, q in 0.0f64..0.5) {
        let skr = skr_from_rkr(rkr, q).unwrap();
        prop_assert!(skr >= 0.0 && skr <= rkr);
        prop_assert_eq!(aes_gcm_capacity(skr).unwrap(), 2e9 * skr);
    }

    #[test]
    fn qber_monotone_in_link_loss(a in 0.0f64..40.0, b in 0.0f64..40.0, e in 0.0f64..0.1) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(analytic_qber(lo, e) <= analytic_qber(hi, e) + 1e-12);
    }

    #[test]
    fn rotations_stay_unitary(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                              angle in -10.0f64..10.0, seed in any::<u64>()) {
        let n = (x * x + y * y + z * z).sqrt();
        prop_assume!(n > 1e-3);
        let mut rot = PolarizationRotation::about_axis([x / n, y / n, z / n], angle);
        prop_assert!(rot.unitarity_error() < 1e-12);
        let mut rng = substream(seed, 0);
        for _ in 0..50 {
            rot = drift_step(&rot, 60.0, 1e-3, &mut rng).unwrap();
        }
        prop_assert!(rot.unitarity_error() < 1e-12);
        let out = apply_rotation(&rot, &JonesVector::diagonal());
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&rot.bb84_flip_probability()));
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((0.0f64..100.0, 0.0f64..30.0, 0.0f64..1e6, 0.0f64..0.5), 0..20)) {
        let rows: Vec<ReachRow> = rows
            .into_iter()
            .map(|(km, loss_db, rkr, qber)| ReachRow { km, loss_db, rkr, qber, qber_sigma: qber / 10.0, skr: rkr / 2.0 })
            .collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back: Vec<ReachRow> = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn override_round_trip(e in 0.0f64..0.5, mu in 0.001f64..2.0, seed in any::<u32>()) {
        let overrides = vec![
            format!("session.intrinsic_error={e:?}"),
            format!("lab.external_mu={mu:?}"),
            format!("session.seed={seed}"),
        ];
        let cfg = ExperimentConfig::from_toml_str("", &overrides).unwrap();
        prop_assert_eq!(cfg.session.intrinsic_error, e);
        prop_assert_eq!(cfg.lab.external_mu, mu);
        prop_assert_eq!(cfg.session.seed, seed as u64);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn sifting_keeps_only_matching_valid(symbols in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()), 0..200)) {
        let alice: Vec<_> = symbols.iter().map(|s| AliceRecord { bit: s.0 as u8, basis: basis(s.1) }).collect();
        let bob: Vec<_> = symbols.iter().map(|s| BobRecord { bit: s.2 as u8, basis: basis(s.3), valid: s.4 }).collect();
        let pairs = sift(&alice, &bob).unwrap();
        let expect = symbols.iter().filter(|s| s.1 == s.3 && s.4).count();
        prop_assert_eq!(pairs.len(), expect);
        let errors = symbols.iter().filter(|s| s.1 == s.3 && s.4 && s.0 != s.2).count();
        prop_assert_eq!(pairs.iter().filter(|p| p.is_error()).count(), errors);
    }

    #[test]
    fn mu_monotone_in_losses(step in 0.01f64..5.0, pic in 0.0f64..10.0, filt in 0.0f64..10.0) {
        let src = SourceSpec { pic_loss_db: pic, ..Default::default() };
        let mu = |s: &SourceSpec, f: f64| mean_photon_number(s, 193.4, 0.2, f).unwrap();
        let m0 = mu(&src, filt);
        let pic_up = mu(&SourceSpec { pic_loss_db: pic + step, ..src.clone() }, filt);
        let asym_up = mu(&SourceSpec { coupling_asymmetry_db: src.coupling_asymmetry_db + step, ..src.clone() }, filt);
        let drive_up = mu(&SourceSpec { drive_current_ma: src.drive_current_ma + step, ..src.clone() }, filt);
        prop_assert!(pic_up < m0);
        prop_assert!(asym_up < m0);
        prop_assert!(mu(&src, filt + step) < m0);
        prop_assert!(drive_up > m0);
    }
}

#[test]
fn secret_fraction_pinned_points() {
    assert_eq!(secret_fraction(0.0), 1.0);
    let t = qber_threshold();
    assert!(secret_fraction(t - 1e-6) > 0.0);
    assert_eq!(secret_fraction(t + 1e-9), 0.0);
}
