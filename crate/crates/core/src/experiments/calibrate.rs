//! Repeated TOPS calibration on devices with random hidden offsets.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::optics::calibration::residual_phase_error;
use crate::optics::{bb84_settings, calibrate_tops, Bb84Symbol, CalibrationOptions, SimulatedDevice, Transmitter};
use crate::rng::{streams, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub trial: usize,
    pub hidden_offset: f64,
    pub phi_tops: f64,
    pub residual_imbalance: f64,
    pub phase_error: f64,
    pub iterations: usize,
    /// Worst fidelity of the four BB84 states prepared after calibration.
    pub min_fidelity: f64,
}

pub fn run_calibration(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRow>> {
    let c = &cfg.calibrate;
    let opts = CalibrationOptions { tolerance: c.tolerance, max_iter: c.max_iter, scan_points: c.scan_points };
    let mut offsets = substream(cfg.session.seed, streams::WINDOW - 1);
    (0..c.trials)
        .map(|trial| {
            let alpha = offsets.random::<f64>() * TAU;
            let mut dev = SimulatedDevice::new(alpha, c.noise, cfg.session.seed.wrapping_add(trial as u64));
            let out = calibrate_tops(&mut dev, &opts)?;
            let tx = Transmitter { alpha_offset: alpha };
            let min_fidelity = Bb84Symbol::ALL
                .iter()
                .map(|&s| tx.prepare(&bb84_settings(s).with_tops(out.phi_tops)).fidelity(&s.ideal_state()))
                .fold(1.0, f64::min);
            Ok(CalibrationRow {
                trial,
                hidden_offset: alpha,
                phi_tops: out.phi_tops,
                residual_imbalance: out.residual_imbalance,
                phase_error: residual_phase_error(&dev, out.phi_tops),
                iterations: out.iterations,
                min_fidelity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_trials_restore_states() {
        let mut cfg = ExperimentConfig::default();
        cfg.calibrate.noise = 0.0;
        cfg.calibrate.trials = 20;
        for r in run_calibration(&cfg).unwrap() {
            assert!(r.residual_imbalance.abs() < 1e-6);
            assert!(r.min_fidelity > 1.0 - 1e-9, "{r:?}");
        }
    }
}
