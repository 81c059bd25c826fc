//! Everything between the transmitter output coupler and the receiver input:
//! loss elements, WDM filters, fiber spans, polarization drift and background.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::JonesVector;
use crate::units::db_to_linear;

/// Lab fiber attenuation, dB/km.
pub const LAB_FIBER_DB_PER_KM: f64 = 0.277;
pub const FIELD_LINK_KM: f64 = 45.9;
pub const FIELD_LINK_LOSS_DB: f64 = 16.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossElement {
    Voa { loss_db: f64 },
    Fiber { length_km: f64, attenuation_db_per_km: f64 },
    /// Ideal flat-top passband with scalar insertion loss; out-of-band light is blocked.
    Filter { center_thz: f64, width_thz: f64, loss_db: f64 },
    Connector { loss_db: f64 },
}

impl LossElement {
    pub fn fiber(length_km: f64, attenuation_db_per_km: f64) -> Self {
        LossElement::Fiber { length_km, attenuation_db_per_km }
    }

    /// A span defined by its measured end-to-end loss.
    pub fn fiber_with_loss(length_km: f64, loss_db: f64) -> Self {
        let attenuation_db_per_km = if length_km > 0.0 { loss_db / length_km } else { 0.0 };
        LossElement::Fiber { length_km, attenuation_db_per_km }
    }

    /// In-band insertion loss, dB.
    pub fn loss_db(&self) -> f64 {
        match *self {
            LossElement::Voa { loss_db }
            | LossElement::Connector { loss_db }
            | LossElement::Filter { loss_db, .. } => loss_db,
            LossElement::Fiber { length_km, attenuation_db_per_km } => length_km * attenuation_db_per_km,
        }
    }

    /// Loss seen by light at `frequency_thz`; infinite outside a filter passband.
    pub fn loss_at(&self, frequency_thz: f64) -> f64 {
        match *self {
            LossElement::Filter { center_thz, width_thz, loss_db } => {
                if (frequency_thz - center_thz).abs() <= 0.5 * width_thz {
                    loss_db
                } else {
                    f64::INFINITY
                }
            }
            _ => self.loss_db(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LossElement::Voa { loss_db } | LossElement::Connector { loss_db } => loss_db >= 0.0,
            LossElement::Fiber { length_km, attenuation_db_per_km } => {
                length_km >= 0.0 && attenuation_db_per_km >= 0.0
            }
            LossElement::Filter { width_thz, loss_db, .. } => width_thz > 0.0 && loss_db >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid loss element {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSpec {
    pub elements: Vec<LossElement>,
    /// Angular diffusion of the polarization state on the Poincaré sphere, rad²/s.
    pub drift_coefficient: f64,
    /// Unpolarized in-band background photons per second at the receiver input.
    pub background_rate: f64,
    /// A band-pass filter at the link end removes the background entirely.
    pub background_filter: bool,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self { elements: Vec::new(), drift_coefficient: 0.0, background_rate: 0.0, background_filter: true }
    }
}

impl LinkSpec {
    pub fn new(elements: Vec<LossElement>) -> Self {
        Self { elements, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.elements {
            e.validate()?;
        }
        if !(self.drift_coefficient >= 0.0) {
            return Err(Error::config("link.drift_coefficient must be >= 0"));
        }
        if !(self.background_rate >= 0.0) {
            return Err(Error::config("link.background_rate must be >= 0"));
        }
        Ok(())
    }

    /// Loss for the quantum signal at `frequency_thz`.
    pub fn loss_at(&self, frequency_thz: f64) -> f64 {
        self.elements.iter().map(|e| e.loss_at(frequency_thz)).sum()
    }

    /// Background rate that actually reaches the receiver.
    pub fn effective_background(&self) -> f64 {
        if self.background_filter { 0.0 } else { self.background_rate }
    }
}

/// Sum of the in-band element losses, dB.
pub fn total_budget(link: &LinkSpec) -> f64 {
    link.elements.iter().map(LossElement::loss_db).sum()
}

/// Mean photon number after `loss_db` of attenuation.
pub fn attenuate(mu: f64, loss_db: f64) -> Result<f64> {
    if !(mu >= 0.0) || !(loss_db >= 0.0) {
        return Err(Error::domain(format!("attenuate needs mu >= 0 and loss >= 0, got ({mu}, {loss_db})")));
    }
    Ok(mu * db_to_linear(loss_db))
}

/// A 2×2 unitary acting on Jones vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationRotation {
    /// Row-major `[[u00, u01], [u10, u11]]`.
    pub unitary: [[Complex64; 2]; 2],
}

impl Default for PolarizationRotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl PolarizationRotation {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self { unitary: [[one, zero], [zero, one]] }
    }

    /// Rotation of the Stokes vector by `angle` (right-handed) about the unit `axis`.
    ///
    /// `U = cos(θ/2)·I − i·sin(θ/2)·(a₁σz + a₂σx + a₃σy)`
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let (a1, a2, a3) = (axis[0] / n, axis[1] / n, axis[2] / n);
        let (s, c) = (0.5 * angle).sin_cos();
        let i = Complex64::i();
        let u00 = Complex64::new(c, 0.0) - i * s * a1;
        let u11 = Complex64::new(c, 0.0) + i * s * a1;
        // −i·s·(a₂σx + a₃σy): off-diagonals −i·s·(a₂ ∓ i·a₃)
        let u01 = -i * s * Complex64::new(a2, -a3);
        let u10 = -i * s * Complex64::new(a2, a3);
        Self { unitary: [[u00, u01], [u10, u11]] }
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &PolarizationRotation) -> PolarizationRotation {
        let a = &self.unitary;
        let b = &other.unitary;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        PolarizationRotation { unitary: m }
    }

    /// Gram–Schmidt on the columns, restoring `U†U = I` after rounding drift.
    pub fn reunitarized(&self) -> PolarizationRotation {
        let u = &self.unitary;
        let (mut c0, mut c1) = ([u[0][0], u[1][0]], [u[0][1], u[1][1]]);
        let n0 = (c0[0].norm_sqr() + c0[1].norm_sqr()).sqrt();
        c0 = [c0[0] / n0, c0[1] / n0];
        let proj = c0[0].conj() * c1[0] + c0[1].conj() * c1[1];
        c1 = [c1[0] - proj * c0[0], c1[1] - proj * c0[1]];
        let n1 = (c1[0].norm_sqr() + c1[1].norm_sqr()).sqrt();
        c1 = [c1[0] / n1, c1[1] / n1];
        PolarizationRotation { unitary: [[c0[0], c1[0]], [c0[1], c1[1]]] }
    }

    /// Largest entry of `|U†U − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let u = &self.unitary;
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let v = u[0][r].conj() * u[0][c] + u[1][r].conj() * u[1][c];
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    /// Rotation angle on the Poincaré sphere, from `|tr U| = 2·cos(θ/2)`.
    pub fn rotation_angle(&self) -> f64 {
        let tr = (self.unitary[0][0] + self.unitary[1][1]).norm();
        2.0 * (0.5 * tr).clamp(0.0, 1.0).acos()
    }

    /// `sin²(θ/2)`: worst-case flip probability between a state and its image.
    /// Bit-flip probability averaged over the four BB84 states.
    pub fn bb84_flip_probability(&self) -> f64 {
        let states = [
            JonesVector::horizontal(),
            JonesVector::vertical(),
            JonesVector::right_circular(),
            JonesVector::left_circular(),
        ];
        states.iter().map(|s| 1.0 - s.fidelity(&apply_rotation(self, s))).sum::<f64>() / 4.0
    }

    pub fn misalignment(&self) -> f64 {
        let tr = (self.unitary[0][0] + self.unitary[1][1]).norm();
        (1.0 - 0.25 * tr * tr).max(0.0)
    }
}

/// Matrix–vector product, renormalized.
pub fn apply_rotation(rot: &PolarizationRotation, state: &JonesVector) -> JonesVector {
    let u = &rot.unitary;
    JonesVector::raw(u[0][0] * state.ex + u[0][1] * state.ey, u[1][0] * state.ex + u[1][1] * state.ey)
        .normalized()
}

/// One step of isotropic angular diffusion: a rotation by
/// `θ ~ |Normal(0, √(coeff·dt))|` about a uniformly random axis, applied
/// after `current`.
pub fn drift_step<R: Rng + ?Sized>(
    current: &PolarizationRotation,
    dt: f64,
    coeff: f64,
    rng: &mut R,
) -> Result<PolarizationRotation> {
    if !(dt > 0.0) {
        return Err(Error::domain("drift_step needs dt > 0"));
    }
    if !(coeff >= 0.0) {
        return Err(Error::domain("drift coefficient must be >= 0"));
    }
    if coeff == 0.0 {
        return Ok(*current);
    }
    let sigma = (coeff * dt).sqrt();
    let theta: f64 = Normal::new(0.0, sigma)
        .map_err(|e| Error::domain(e.to_string()))?
        .sample(rng)
        .abs();
    let axis = random_axis(rng);
    Ok(PolarizationRotation::about_axis(axis, theta).compose(current).reunitarized())
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Manual polarization-controller compensation at the receiver.
pub fn realign(_current: &PolarizationRotation) -> PolarizationRotation {
    PolarizationRotation::identity()
}

/// Expected flip probability of a BB84 state after isotropic diffusion for
/// `elapsed` seconds: `(1 − exp(−coeff·t/3))/2`.
pub fn expected_drift_error(coeff: f64, elapsed: f64) -> f64 {
    0.5 * (1.0 - (-coeff * elapsed / 3.0).exp())
}

/// Time average of [`expected_drift_error`] over `[t0, t1]` since the last realignment.
pub fn mean_drift_error(coeff: f64, t0: f64, t1: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    if t1 <= t0 {
        return expected_drift_error(coeff, t0);
    }
    let k = coeff / 3.0;
    // ∫(1 − e^{−kt})/2 dt over [t0, t1], divided by the span
    let integral = 0.5 * ((t1 - t0) + ((-k * t1).exp() - (-k * t0).exp()) / k);
    integral / (t1 - t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rodrigues(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
        let (s, c) = angle.sin_cos();
        let dot = v[0] * axis[0] + v[1] * axis[1] + v[2] * axis[2];
        let cross = [
            axis[1] * v[2] - axis[2] * v[1],
            axis[2] * v[0] - axis[0] * v[2],
            axis[0] * v[1] - axis[1] * v[0],
        ];
        [0, 1, 2].map(|i| v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
    }

    #[test]
    fn empty_link_has_no_loss() {
        assert_eq!(total_budget(&LinkSpec::default()), 0.0);
    }

    #[test]
    fn field_span_budget() {
        let link = LinkSpec::new(vec![LossElement::fiber_with_loss(FIELD_LINK_KM, FIELD_LINK_LOSS_DB)]);
        assert!((total_budget(&link) - 16.5).abs() < 1e-12);
    }

    #[test]
    fn lab_reach_budget() {
        let link = LinkSpec::new(vec![LossElement::fiber(61.0, LAB_FIBER_DB_PER_KM)]);
        assert!((total_budget(&link) - 16.897).abs() < 1e-9);
    }

    #[test]
    fn attenuate_examples() {
        assert_eq!(attenuate(0.015, 0.0).unwrap(), 0.015);
        assert!((attenuate(0.1, 10.0).unwrap() - 0.01).abs() < 1e-16);
        assert!((attenuate(0.1, 16.8).unwrap() - 2.0893e-3).abs() < 1e-7);
        assert!(attenuate(-1.0, 0.0).is_err());
        assert!(attenuate(1.0, -1.0).is_err());
    }

    #[test]
    fn filter_blocks_out_of_band() {
        let f = LossElement::Filter { center_thz: 193.4, width_thz: 0.2, loss_db: 0.8 };
        assert_eq!(f.loss_at(193.45), 0.8);
        assert_eq!(f.loss_at(193.6), f64::INFINITY);
    }

    #[test]
    fn axis_rotation_matches_rodrigues() {
        let axis = [0.36, -0.48, 0.8];
        let u = PolarizationRotation::about_axis(axis, 0.9);
        let s = JonesVector::new(Complex64::new(0.6, 0.1), Complex64::new(0.2, -0.7)).unwrap();
        let out = apply_rotation(&u, &s).stokes();
        let expect = rodrigues(s.stokes(), axis, 0.9);
        for i in 0..3 {
            assert!((out[i] - expect[i]).abs() < 1e-12, "{out:?} vs {expect:?}");
        }
    }

    #[test]
    fn quarter_turn_about_s3_unbiases_h() {
        let u = PolarizationRotation::about_axis([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        let h = JonesVector::horizontal();
        assert!((h.fidelity(&apply_rotation(&u, &h)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_leaves_state() {
        let s = JonesVector::right_circular();
        assert!((apply_rotation(&PolarizationRotation::identity(), &s).fidelity(&s) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficient_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = PolarizationRotation::about_axis([1.0, 0.0, 0.0], 0.2);
        assert_eq!(drift_step(&u, 1.0, 0.0, &mut rng).unwrap(), u);
        assert!(drift_step(&u, 0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn single_step_misalignment_mean() {
        // E[sin²(θ/2)] ≈ E[θ²]/4 = coeff·dt/4 for small steps
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (coeff, dt, n) = (1e-4, 1.0, 10_000);
        let mean: f64 = (0..n)
            .map(|_| drift_step(&PolarizationRotation::identity(), dt, coeff, &mut rng).unwrap().misalignment())
            .sum::<f64>()
            / n as f64;
        let target = coeff * dt / 4.0;
        // sd of θ²/4 is √2·target, so the mean has 1.4% relative sd
        assert!((mean / target - 1.0).abs() < 0.06, "mean={mean:e} target={target:e}");
    }

    #[test]
    fn realign_returns_identity() {
        let u = PolarizationRotation::about_axis([0.0, 1.0, 0.0], 1.0);
        assert_eq!(realign(&u), PolarizationRotation::identity());
    }

    #[test]
    fn mean_drift_error_matches_quadrature() {
        let (c, t0, t1) = (2e-4, 100.0, 700.0);
        let n = 20_000;
        let h = (t1 - t0) / n as f64;
        let quad: f64 = (0..n).map(|i| expected_drift_error(c, t0 + (i as f64 + 0.5) * h)).sum::<f64>() / n as f64;
        assert!((mean_drift_error(c, t0, t1) - quad).abs() < 1e-10);
    }
}
