//! Direct-modulation waveforms: super-Gaussian pulse carving and random decoy
//! intensity levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Super-Gaussian order n (1 = Gaussian).
    pub order: u32,
    /// Pulse width as a fraction of the symbol slot, where the amplitude drops to 1/e.
    pub carve_fraction: f64,
    /// Decoy intensity relative to the signal level.
    pub decoy_ratio: f64,
    pub decoy_probability: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { order: 2, carve_fraction: 0.5, decoy_ratio: 0.25, decoy_probability: 0.25 }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::domain("super-Gaussian order must be positive"));
        }
        if !(self.carve_fraction > 0.0 && self.carve_fraction <= 1.0) {
            return Err(Error::domain("carve_fraction must lie in (0, 1]"));
        }
        if !(self.decoy_ratio > 0.0 && self.decoy_ratio <= 1.0) {
            return Err(Error::domain("decoy_ratio must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.decoy_probability) {
            return Err(Error::domain("decoy_probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Carved amplitude at fractional symbol time `t ∈ [0, 1)`; peaks at 1 in the slot center.
pub fn carve_amplitude(t: f64, shape: &PulseShape) -> f64 {
    let x = (t - 0.5) / (0.5 * shape.carve_fraction);
    (-x.abs().powf(2.0 * shape.order as f64)).exp()
}

/// Per-symbol intensity factors: `decoy_ratio` with probability
/// `decoy_probability`, otherwise 1.
pub fn decoy_sequence(n: usize, shape: &PulseShape, seed: u64) -> Result<Vec<f64>> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < shape.decoy_probability {
                shape.decoy_ratio
            } else {
                1.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_and_width() {
        let s = PulseShape::default();
        assert_eq!(carve_amplitude(0.5, &s), 1.0);
        let e = (-1f64).exp();
        assert!((carve_amplitude(0.25, &s) - e).abs() < 1e-15);
        assert!((carve_amplitude(0.75, &s) - e).abs() < 1e-15);
    }

    #[test]
    fn edge_probabilities() {
        let mut s = PulseShape { decoy_probability: 0.0, ..Default::default() };
        assert!(decoy_sequence(1000, &s, 1).unwrap().iter().all(|&v| v == 1.0));
        s.decoy_probability = 1.0;
        assert!(decoy_sequence(1000, &s, 1).unwrap().iter().all(|&v| v == s.decoy_ratio));
        assert!(decoy_sequence(0, &s, 1).unwrap().is_empty());
    }

    #[test]
    fn reproducible_from_seed() {
        let s = PulseShape::default();
        assert_eq!(decoy_sequence(500, &s, 9).unwrap(), decoy_sequence(500, &s, 9).unwrap());
        assert_ne!(decoy_sequence(500, &s, 9).unwrap(), decoy_sequence(500, &s, 10).unwrap());
    }

    #[test]
    fn invalid_shape_rejected() {
        let s = PulseShape { order: 0, ..Default::default() };
        assert!(decoy_sequence(10, &s, 0).is_err());
    }
}
