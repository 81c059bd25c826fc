//! Jones vectors for the TE/TM field pair leaving the 2D grating coupler.
//!
//! Stokes convention: `S1 = |ex|² − |ey|²`, `S2 = 2·Re(ex*·ey)`,
//! `S3 = 2·Im(ex*·ey)`. With this choice the Pauli triple
//! (σz, σx, σy) generates right-handed rotations of the Stokes vector.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JonesVector {
    /// TE branch amplitude (maps to H at the polarizing 2D-GC).
    pub ex: Complex64,
    /// TM branch amplitude (maps to V).
    pub ey: Complex64,
}

impl JonesVector {
    /// Builds a normalized vector. The zero vector has no polarization state.
    pub fn new(ex: Complex64, ey: Complex64) -> Result<Self> {
        let n = (ex.norm_sqr() + ey.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::domain("Jones vector must have finite, non-zero norm"));
        }
        Ok(Self { ex: ex / n, ey: ey / n })
    }

    pub(crate) fn raw(ex: Complex64, ey: Complex64) -> Self {
        Self { ex, ey }
    }

    pub fn horizontal() -> Self {
        Self::raw(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn vertical() -> Self {
        Self::raw(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    }

    /// `(1, 1)/√2`
    pub fn diagonal() -> Self {
        let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::raw(a, a)
    }

    /// `(1, −1)/√2`
    pub fn antidiagonal() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self::raw(Complex64::new(a, 0.0), Complex64::new(-a, 0.0))
    }

    /// `(1, −i)/√2`
    pub fn right_circular() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self::raw(Complex64::new(a, 0.0), Complex64::new(0.0, -a))
    }

    /// `(1, i)/√2`
    pub fn left_circular() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self::raw(Complex64::new(a, 0.0), Complex64::new(0.0, a))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        Self::raw(self.ex / n, self.ey / n)
    }

    /// Inner product `⟨self|other⟩`.
    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.ex.conj() * other.ex + self.ey.conj() * other.ey
    }

    /// `|⟨a|b⟩|²`, insensitive to global phase.
    pub fn fidelity(&self, other: &JonesVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// The state orthogonal to `self` (unique up to global phase).
    pub fn orthogonal(&self) -> Self {
        Self::raw(-self.ey.conj(), self.ex.conj())
    }

    /// Normalized Stokes vector `[S1, S2, S3]`.
    pub fn stokes(&self) -> [f64; 3] {
        let n = self.norm_sqr();
        let c = self.ex.conj() * self.ey;
        [
            (self.ex.norm_sqr() - self.ey.norm_sqr()) / n,
            2.0 * c.re / n,
            2.0 * c.im / n,
        ]
    }
}

/// Angle between two unit Stokes vectors, in radians.
pub fn stokes_angle(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_states_sit_on_the_poles() {
        assert_eq!(JonesVector::horizontal().stokes(), [1.0, 0.0, 0.0]);
        let d = JonesVector::diagonal().stokes();
        assert!((d[1] - 1.0).abs() < 1e-15);
        let r = JonesVector::right_circular().stokes();
        assert!((r[2] + 1.0).abs() < 1e-15);
        let l = JonesVector::left_circular().stokes();
        assert!((l[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fidelity_ignores_global_phase() {
        let h = JonesVector::horizontal();
        let phase = Complex64::from_polar(1.0, 1.234);
        let h2 = JonesVector::raw(h.ex * phase, h.ey * phase);
        assert!((h.fidelity(&h2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let s = JonesVector::new(Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.7)).unwrap();
        assert!(s.fidelity(&s.orthogonal()) < 1e-30);
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(JonesVector::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)).is_err());
    }
}
