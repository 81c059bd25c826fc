//! Parameter fitting against measured anchors.
//!
//! Every fit is a bracketed one-dimensional solve on the analytic model. The
//! full sequence in [`fit_parameters`] runs:
//!
//! 1. coupling asymmetry so that μ = target on channel 34;
//! 2. WDM-run receiver loss from the channel-34 RKR, then its intrinsic
//!    error from the channel-34 QBER (alternated until both hold);
//! 3. spectrum FWHM from the channel counts, re-solving the asymmetry for
//!    every candidate so μ on channel 34 stays on target;
//! 4. lab receiver loss and intrinsic error from the 0 dB external-laser point;
//! 5. field receiver loss and intrinsic error from the field-link point.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plan::Channel;
use super::sweeps::{channel_session, lab_session, sweep_channel, sweep_values};
use crate::error::{Error, Result};
use crate::protocol::session::{run_session, LaunchKind, Mode, SessionConfig, SessionResult};
use crate::rootfind::bisect;

/// Physical range searched for a receiver insertion loss, dB.
pub const INSERTION_LOSS_RANGE_DB: (f64, f64) = (0.0, 20.0);
const ASYMMETRY_RANGE_DB: (f64, f64) = (-40.0, 40.0);
const MAX_RELATIVE_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResidual {
    pub target: String,
    pub goal: f64,
    pub achieved: f64,
}

impl FitResidual {
    pub fn relative(&self) -> f64 {
        if self.goal == 0.0 { self.achieved.abs() } else { (self.achieved / self.goal - 1.0).abs() }
    }
}

fn fit_err(target: &str, reason: impl Into<String>) -> Error {
    Error::Fit { target: target.to_string(), reason: reason.into() }
}

fn analytic(session: &SessionConfig) -> Result<SessionResult> {
    let s = SessionConfig { mode: Mode::Analytic, realign_schedule: None, time_series: false, ..session.clone() };
    Ok(run_session(&s)?.result)
}

fn checked(r: FitResidual) -> Result<FitResidual> {
    if r.relative() < MAX_RELATIVE_RESIDUAL {
        Ok(r)
    } else {
        Err(fit_err(&r.target, format!("residual {:.3e} (achieved {} vs {})", r.relative(), r.achieved, r.goal)))
    }
}

/// Coupling asymmetry that gives `mu_target` photons per symbol for `session`.
pub fn fit_coupling_asymmetry(session: &SessionConfig, mu_target: f64) -> Result<f64> {
    if !(mu_target > 0.0) {
        return Err(fit_err("mu", "target must be > 0"));
    }
    let mut s = session.clone();
    s.launch.kind = LaunchKind::InternalSige;
    let mut ln_ratio = |asym: f64| {
        s.source.coupling_asymmetry_db = asym;
        s.launch_mu().map(|mu| (mu / mu_target).ln()).unwrap_or(f64::NAN)
    };
    let (lo, hi) = ASYMMETRY_RANGE_DB;
    let root = bisect(&mut ln_ratio, lo, hi, 1e-12, 0.0, 200)
        .map_err(|e| fit_err("mu", format!("no coupling asymmetry in [{lo}, {hi}] dB: {e}")))?;
    let mut s = session.clone();
    s.launch.kind = LaunchKind::InternalSige;
    s.source.coupling_asymmetry_db = root.x;
    checked(FitResidual { target: "mu".into(), goal: mu_target, achieved: s.launch_mu()? })?;
    Ok(root.x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverFit {
    pub insertion_loss_db: f64,
    pub intrinsic_error: f64,
    pub residuals: Vec<FitResidual>,
}

/// Receiver insertion loss from an RKR anchor and intrinsic error from a QBER anchor.
pub fn fit_receiver(session: &SessionConfig, label: &str, rkr_target: f64, qber_target: f64) -> Result<ReceiverFit> {
    let rkr_name = format!("{label}_rkr");
    let qber_name = format!("{label}_qber");
    let mut s = session.clone();
    let (lo, hi) = INSERTION_LOSS_RANGE_DB;
    for _ in 0..20 {
        let mut rkr_gap = |loss: f64| {
            let mut t = s.clone();
            t.receiver.insertion_loss_db = loss;
            analytic(&t).map(|r| r.rkr / rkr_target - 1.0).unwrap_or(f64::NAN)
        };
        let loss = bisect(&mut rkr_gap, lo, hi, 1e-12, 0.0, 200)
            .map_err(|_| fit_err(&rkr_name, format!("RKR {rkr_target} needs an insertion loss outside [{lo}, {hi}] dB")))?
            .x;
        s.receiver.insertion_loss_db = loss;
        let mut qber_gap = |e: f64| {
            let t = SessionConfig { intrinsic_error: e, ..s.clone() };
            analytic(&t).map(|r| r.qber - qber_target).unwrap_or(f64::NAN)
        };
        let e = bisect(&mut qber_gap, 0.0, 0.5, 1e-14, 0.0, 200)
            .map_err(|_| fit_err(&qber_name, format!("QBER {qber_target} is unreachable with intrinsic error in [0, 0.5]")))?
            .x;
        s.intrinsic_error = e;
        let r = analytic(&s)?;
        if (r.rkr / rkr_target - 1.0).abs() < 1e-9 && (r.qber / qber_target - 1.0).abs() < 1e-9 {
            break;
        }
    }
    let r = analytic(&s)?;
    let residuals = vec![
        checked(FitResidual { target: rkr_name, goal: rkr_target, achieved: r.rkr })?,
        checked(FitResidual { target: qber_name, goal: qber_target, achieved: r.qber })?,
    ];
    Ok(ReceiverFit { insertion_loss_db: s.receiver.insertion_loss_db, intrinsic_error: s.intrinsic_error, residuals })
}

pub fn anchor_channel(cfg: &ExperimentConfig) -> Channel {
    let f = cfg.sweep_channel.plan.anchor_thz;
    Channel { number: ((f - 190.0) / 0.1).round() as i32, frequency_thz: f, wavelength_nm: crate::units::thz_to_nm(f) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwhmFit {
    pub fwhm_thz: f64,
    pub coupling_asymmetry_db: f64,
    pub secure_channels: usize,
    pub channels_above_1k: usize,
    /// `|n_1k − target| + |n_secure − target|` at the chosen width.
    pub score: u32,
    /// Interval of widths sharing the best score.
    pub interval: (f64, f64),
}

fn channel_counts(cfg: &ExperimentConfig, fwhm: f64) -> Result<(f64, usize, usize)> {
    let mut c = cfg.clone();
    c.session.mode = Mode::Analytic;
    c.session.source.fwhm_thz = fwhm;
    let asym = fit_coupling_asymmetry(&channel_session(&c, &anchor_channel(&c)), cfg.fit.mu)?;
    c.session.source.coupling_asymmetry_db = asym;
    let r = sweep_channel(&c)?;
    Ok((asym, r.secure_channels(), r.channels_above_1k()))
}

/// Scans the spectral FWHM and picks the middle of the widest run of grid
/// points that best matches both channel counts.
pub fn fit_spectrum_fwhm(cfg: &ExperimentConfig) -> Result<FwhmFit> {
    let t = &cfg.fit;
    let grid = sweep_values(t.fwhm_min_thz, t.fwhm_max_thz, t.fwhm_step_thz);
    let mut scores = Vec::with_capacity(grid.len());
    for &w in &grid {
        let (_, n0, n1) = channel_counts(cfg, w)?;
        scores.push(n1.abs_diff(t.channels_above_1k as usize) as u32 + n0.abs_diff(t.channels_secure as usize) as u32);
    }
    let best = *scores.iter().min().ok_or_else(|| fit_err("fwhm", "empty FWHM grid"))?;
    // longest contiguous run at the best score
    let (mut run_start, mut best_run) = (None, (0usize, 0usize));
    for i in 0..=scores.len() {
        let hit = i < scores.len() && scores[i] == best;
        match (hit, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > best_run.1 - best_run.0 {
                    best_run = (s, i);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    let (a, b) = (grid[best_run.0], grid[best_run.1 - 1]);
    let fwhm = grid[(best_run.0 + best_run.1 - 1) / 2];
    let (asym, n0, n1) = channel_counts(cfg, fwhm)?;
    Ok(FwhmFit { fwhm_thz: fwhm, coupling_asymmetry_db: asym, secure_channels: n0, channels_above_1k: n1, score: best, interval: (a, b) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameters {
    pub coupling_asymmetry_db: f64,
    pub fwhm_thz: f64,
    pub lab_insertion_loss_db: f64,
    pub lab_intrinsic_error: f64,
    pub field_insertion_loss_db: f64,
    pub field_intrinsic_error: f64,
    pub channel_insertion_loss_db: f64,
    pub channel_intrinsic_error: f64,
}

impl FittedParameters {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            coupling_asymmetry_db: cfg.session.source.coupling_asymmetry_db,
            fwhm_thz: cfg.session.source.fwhm_thz,
            lab_insertion_loss_db: cfg.lab.receiver.insertion_loss_db,
            lab_intrinsic_error: cfg.lab.intrinsic_error,
            field_insertion_loss_db: cfg.session.receiver.insertion_loss_db,
            field_intrinsic_error: cfg.session.intrinsic_error,
            channel_insertion_loss_db: cfg.sweep_channel.receiver.insertion_loss_db,
            channel_intrinsic_error: cfg.sweep_channel.intrinsic_error,
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.session.source.coupling_asymmetry_db = self.coupling_asymmetry_db;
        cfg.session.source.fwhm_thz = self.fwhm_thz;
        cfg.lab.receiver.insertion_loss_db = self.lab_insertion_loss_db;
        cfg.lab.intrinsic_error = self.lab_intrinsic_error;
        cfg.session.receiver.insertion_loss_db = self.field_insertion_loss_db;
        cfg.session.intrinsic_error = self.field_intrinsic_error;
        cfg.sweep_channel.receiver.insertion_loss_db = self.channel_insertion_loss_db;
        cfg.sweep_channel.intrinsic_error = self.channel_intrinsic_error;
    }

    /// The same values as `--override` arguments.
    pub fn overrides(&self) -> Vec<String> {
        vec![
            format!("session.source.coupling_asymmetry_db={:?}", self.coupling_asymmetry_db),
            format!("session.source.fwhm_thz={:?}", self.fwhm_thz),
            format!("lab.receiver.insertion_loss_db={:?}", self.lab_insertion_loss_db),
            format!("lab.intrinsic_error={:?}", self.lab_intrinsic_error),
            format!("session.receiver.insertion_loss_db={:?}", self.field_insertion_loss_db),
            format!("session.intrinsic_error={:?}", self.field_intrinsic_error),
            format!("sweep_channel.receiver.insertion_loss_db={:?}", self.channel_insertion_loss_db),
            format!("sweep_channel.intrinsic_error={:?}", self.channel_intrinsic_error),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: FittedParameters,
    pub fwhm: FwhmFit,
    pub residuals: Vec<FitResidual>,
}

pub fn fit_parameters(cfg: &ExperimentConfig) -> Result<FitReport> {
    let t = &cfg.fit;
    let mut c = cfg.clone();
    c.session.mode = Mode::Analytic;
    let mut residuals = Vec::new();

    let ch = anchor_channel(&c);
    c.session.source.coupling_asymmetry_db = fit_coupling_asymmetry(&channel_session(&c, &ch), t.mu)?;
    let chan = fit_receiver(&channel_session(&c, &ch), "channel", t.channel_rkr, t.channel_qber)?;
    c.sweep_channel.receiver.insertion_loss_db = chan.insertion_loss_db;
    c.sweep_channel.intrinsic_error = chan.intrinsic_error;
    residuals.extend(chan.residuals);

    let fwhm = fit_spectrum_fwhm(&c)?;
    c.session.source.fwhm_thz = fwhm.fwhm_thz;
    c.session.source.coupling_asymmetry_db = fwhm.coupling_asymmetry_db;
    let mut ch_session = channel_session(&c, &ch);
    ch_session.launch.kind = LaunchKind::InternalSige;
    residuals.push(checked(FitResidual { target: "mu".into(), goal: t.mu, achieved: ch_session.launch_mu()? })?);

    let lab = fit_receiver(&lab_session(&c, LaunchKind::ExternalLaser), "lab", t.lab_rkr, t.lab_qber)?;
    c.lab.receiver.insertion_loss_db = lab.insertion_loss_db;
    c.lab.intrinsic_error = lab.intrinsic_error;
    residuals.extend(lab.residuals);

    let mut field_session = c.session.clone();
    field_session.launch.kind = LaunchKind::InternalSige;
    let field = fit_receiver(&field_session, "field", t.field_rkr, t.field_qber)?;
    c.session.receiver.insertion_loss_db = field.insertion_loss_db;
    c.session.intrinsic_error = field.intrinsic_error;
    residuals.extend(field.residuals);

    Ok(FitReport { params: FittedParameters::from_config(&c), fwhm, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetry_hits_mu_target() {
        let cfg = ExperimentConfig::default();
        let s = channel_session(&cfg, &anchor_channel(&cfg));
        let a = fit_coupling_asymmetry(&s, 0.015).unwrap();
        let mut s2 = s.clone();
        s2.source.coupling_asymmetry_db = a;
        assert!((s2.launch_mu().unwrap() - 0.015).abs() < 1e-4 * 0.015);
    }

    #[test]
    fn receiver_round_trip() {
        // targets synthesized from known parameters come back out
        let mut s = lab_session(&ExperimentConfig::default(), LaunchKind::ExternalLaser);
        s.receiver.insertion_loss_db = 4.321;
        s.intrinsic_error = 0.0456;
        let r = analytic(&s).unwrap();
        let fit = fit_receiver(&s, "synthetic", r.rkr, r.qber).unwrap();
        assert!((fit.insertion_loss_db - 4.321).abs() < 1e-6, "{}", fit.insertion_loss_db);
        assert!((fit.intrinsic_error - 0.0456).abs() < 1e-6, "{}", fit.intrinsic_error);
    }

    #[test]
    fn unreachable_rkr_names_the_target() {
        let s = lab_session(&ExperimentConfig::default(), LaunchKind::ExternalLaser);
        match fit_receiver(&s, "lab", 1e9, 0.05) {
            Err(Error::Fit { target, .. }) => assert_eq!(target, "lab_rkr"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreachable_qber_names_the_target() {
        let s = lab_session(&ExperimentConfig::default(), LaunchKind::ExternalLaser);
        match fit_receiver(&s, "lab", 5e4, 1e-9) {
            Err(Error::Fit { target, .. }) => assert_eq!(target, "lab_qber"),
            other => panic!("{other:?}"),
        }
    }
}
