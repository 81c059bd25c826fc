//! Factory calibration of the thermo-optic phase shifter (TOPS).
//!
//! Reverse-injected light in a fixed diagonal state reaches the monitor
//! diodes with, by reciprocity, the same branch power split as the forward
//! path. With PM1 parked at π/2 the imbalance
//! `(PIN₁ − PIN₂)/(PIN₁ + PIN₂) = sin(phi_tops + α₀)` has two zeros per period.
//! The calibration picks the one crossed from negative to positive, which
//! resolves the π ambiguity and lands on `phi_tops ≡ −α₀`. The other zero
//! would swap the bit labels in both bases.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::circuit::{wrap_phase, Transmitter};
use crate::error::{Error, Result};

/// PM1 setting during calibration.
pub const CALIBRATION_PM1: f64 = FRAC_PI_2;

/// A transmitter whose offset is hidden behind its monitor photocurrents.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    transmitter: Transmitter,
    /// Monitor responsivity, A per unit branch power.
    responsivity: f64,
    /// Relative 1σ multiplicative noise on each photocurrent reading.
    noise: f64,
    rng: ChaCha8Rng,
}

impl SimulatedDevice {
    pub fn new(alpha_offset: f64, noise: f64, seed: u64) -> Self {
        Self {
            transmitter: Transmitter { alpha_offset },
            responsivity: 1e-6,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A device whose monitors return no light.
    pub fn dark(seed: u64) -> Self {
        let mut d = Self::new(0.0, 0.0, seed);
        d.responsivity = 0.0;
        d
    }

    /// Photocurrents `(PIN₁, PIN₂)` for the TE and TM branches.
    pub fn monitor_currents(&mut self, phi_tops: f64) -> (f64, f64) {
        let (te, tm) = self.transmitter.branch_powers(CALIBRATION_PM1, phi_tops);
        let mut read = |p: f64| {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            (self.responsivity * p * (1.0 + self.noise * n)).max(0.0)
        };
        (read(te), read(tm))
    }

    pub(crate) fn hidden_offset(&self) -> f64 {
        self.transmitter.alpha_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Bracket width at which bisection stops, radians.
    pub tolerance: f64,
    pub max_iter: usize,
    pub scan_points: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iter: 200, scan_points: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub phi_tops: f64,
    /// Imbalance read back from the monitors at the returned setting.
    pub residual_imbalance: f64,
    pub iterations: usize,
}

fn imbalance(device: &mut SimulatedDevice, phi_tops: f64) -> f64 {
    let (a, b) = device.monitor_currents(phi_tops);
    let sum = a + b;
    if sum > 0.0 { (a - b) / sum } else { f64::NAN }
}

/// Finds the TOPS phase that balances the TE and TM branch powers.
pub fn calibrate_tops(device: &mut SimulatedDevice, opts: &CalibrationOptions) -> Result<CalibrationOutcome> {
    if !(opts.tolerance > 0.0) {
        return Err(Error::domain("calibration tolerance must be > 0"));
    }
    let n = opts.scan_points.max(4);
    let step = TAU / n as f64;
    let samples: Vec<f64> = (0..n).map(|i| imbalance(device, i as f64 * step)).collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calibration("monitor photocurrents are zero; no light reaches the diodes".into()));
    }
    // the period wraps, so the last interval closes on the first sample
    let start = (0..n)
        .find(|&i| samples[i] < 0.0 && samples[(i + 1) % n] >= 0.0)
        .ok_or_else(|| Error::Calibration("no rising imbalance crossing in one period".into()))?;
    let end = (start + 1) % n;
    if samples[end].abs() <= 1e-12 {
        // the scan landed on the balance point itself
        let phi_tops = end as f64 * step;
        return Ok(CalibrationOutcome { phi_tops, residual_imbalance: samples[end], iterations: 0 });
    }
    // Bisect on the signs the scan established; re-reading the end points
    // under noise can lose a bracket whose root sits next to an end.
    let (mut a, mut b) = (start as f64 * step, (start + 1) as f64 * step);
    let mut iterations = 0;
    while b - a > opts.tolerance {
        if iterations == opts.max_iter {
            return Err(Error::Calibration(format!("bisection did not converge in {} steps", opts.max_iter)));
        }
        let mid = 0.5 * (a + b);
        if imbalance(device, mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        iterations += 1;
    }
    let phi_tops = wrap_phase(0.5 * (a + b));
    Ok(CalibrationOutcome {
        phi_tops,
        residual_imbalance: imbalance(device, phi_tops),
        iterations,
    })
}

/// Signed phase error of a calibration result against the device's hidden offset.
pub fn residual_phase_error(device: &SimulatedDevice, phi_tops: f64) -> f64 {
    super::circuit::wrap_signed(phi_tops + device.hidden_offset())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_balanced_device_needs_no_tops() {
        let mut dev = SimulatedDevice::new(0.0, 0.0, 1);
        let out = calibrate_tops(&mut dev, &CalibrationOptions::default()).unwrap();
        let err = residual_phase_error(&dev, out.phi_tops);
        assert!(err.abs() < 1e-6, "phi_tops={} err={err}", out.phi_tops);
    }

    #[test]
    fn closed_form_root_for_known_offset() {
        // imbalance = sin(phi + 0.7), rising zero at phi = 2π − 0.7
        let mut dev = SimulatedDevice::new(0.7, 0.0, 2);
        let out = calibrate_tops(&mut dev, &CalibrationOptions::default()).unwrap();
        assert!((out.phi_tops - (TAU - 0.7)).abs() < 1e-6);
        assert!(out.residual_imbalance.abs() < 1e-6);
    }

    #[test]
    fn dark_device_fails() {
        let mut dev = SimulatedDevice::dark(3);
        assert!(matches!(
            calibrate_tops(&mut dev, &CalibrationOptions::default()),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn iteration_cap_fails() {
        let mut dev = SimulatedDevice::new(0.3, 0.0, 4);
        let opts = CalibrationOptions { tolerance: 1e-300, max_iter: 8, scan_points: 16 };
        assert!(matches!(calibrate_tops(&mut dev, &opts), Err(Error::Calibration(_))));
    }
}
