//! State-preparation circuit: PM1 interferometer closed by a 2×2 MMI, then
//! independent phase modulators on the TE (PM2-X) and TM (PM2-Y) branches.
//!
//! Convention. Both MMIs apply `(1/√2)·[[1, i], [i, 1]]`. Light enters the
//! first MMI on port A, arm A then carries the phase
//! `φ = phi_pm1 + phi_tops + α₀` and arm B none. After the second MMI
//!
//! ```text
//! ex = (e^{iφ} − 1)/2 · e^{i·phi_pm2x}      |ex|² = sin²(φ/2)
//! ey = i(e^{iφ} + 1)/2 · e^{i·phi_pm2y}     |ey|² = cos²(φ/2)
//! ```
//!
//! so `φ = π` routes everything to TE (H), `φ = 0` to TM (V) and `φ = π/2`
//! balances the branches. The branch phase difference `phi_pm2y − phi_pm2x`
//! then sets the azimuth on the Poincaré sphere.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::jones::JonesVector;
use crate::error::{Error, Result};

/// Phases applied by the four controllable elements, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSettings {
    pub phi_pm1: f64,
    pub phi_pm2x: f64,
    pub phi_pm2y: f64,
    pub phi_tops: f64,
}

impl PhaseSettings {
    pub fn new(phi_pm1: f64, phi_pm2x: f64, phi_pm2y: f64, phi_tops: f64) -> Result<Self> {
        let s = Self { phi_pm1, phi_pm2x, phi_pm2y, phi_tops };
        if [phi_pm1, phi_pm2x, phi_pm2y, phi_tops].iter().all(|p| p.is_finite()) {
            Ok(s.reduced())
        } else {
            Err(Error::domain("phase settings must be finite"))
        }
    }

    /// Every phase wrapped into `[0, 2π)`.
    pub fn reduced(&self) -> Self {
        Self {
            phi_pm1: wrap_phase(self.phi_pm1),
            phi_pm2x: wrap_phase(self.phi_pm2x),
            phi_pm2y: wrap_phase(self.phi_pm2y),
            phi_tops: wrap_phase(self.phi_tops),
        }
    }

    pub fn with_tops(mut self, phi_tops: f64) -> Self {
        self.phi_tops = wrap_phase(phi_tops);
        self
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU { 0.0 } else { r }
}

/// Wrap into `(−π, π]`.
pub fn wrap_signed(phi: f64) -> f64 {
    let r = wrap_phase(phi);
    if r > PI { r - TAU } else { r }
}

/// Ideal 50:50 coupler `(1/√2)·[[1, i], [i, 1]]`.
pub fn mmi2x2(in_a: Complex64, in_b: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    (
        (in_a + i * in_b) * FRAC_1_SQRT_2,
        (i * in_a + in_b) * FRAC_1_SQRT_2,
    )
}

/// The transmitter PIC, with a fabrication phase offset on the PM1 arm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transmitter {
    pub alpha_offset: f64,
}

impl Transmitter {
    pub fn ideal() -> Self {
        Self { alpha_offset: 0.0 }
    }

    /// Complex amplitudes of the two branches before PM2-X/PM2-Y.
    pub fn branch_fields(&self, phi_pm1: f64, phi_tops: f64) -> (Complex64, Complex64) {
        let (a, b) = mmi2x2(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let arm_a = a * Complex64::from_polar(1.0, phi_pm1 + phi_tops + self.alpha_offset);
        mmi2x2(arm_a, b)
    }

    /// Relative branch powers `(P_TE, P_TM)` as seen by the monitor diodes.
    pub fn branch_powers(&self, phi_pm1: f64, phi_tops: f64) -> (f64, f64) {
        let (te, tm) = self.branch_fields(phi_pm1, phi_tops);
        (te.norm_sqr(), tm.norm_sqr())
    }

    pub fn prepare(&self, settings: &PhaseSettings) -> JonesVector {
        let (te, tm) = self.branch_fields(settings.phi_pm1, settings.phi_tops);
        let ex = te * Complex64::from_polar(1.0, settings.phi_pm2x);
        let ey = tm * Complex64::from_polar(1.0, settings.phi_pm2y);
        JonesVector::raw(ex, ey).normalized()
    }
}

/// Output polarization of the ideal (offset-free) circuit.
pub fn prepare_state(settings: &PhaseSettings) -> JonesVector {
    Transmitter::ideal().prepare(settings)
}

/// The four BB84 symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bb84Symbol {
    H,
    V,
    R,
    L,
}

impl Bb84Symbol {
    pub const ALL: [Bb84Symbol; 4] = [Bb84Symbol::H, Bb84Symbol::V, Bb84Symbol::R, Bb84Symbol::L];

    pub fn basis(self) -> Basis {
        match self {
            Bb84Symbol::H | Bb84Symbol::V => Basis::HV,
            Bb84Symbol::R | Bb84Symbol::L => Basis::RL,
        }
    }

    /// Bit value: H and R encode 0, V and L encode 1.
    pub fn bit(self) -> u8 {
        match self {
            Bb84Symbol::H | Bb84Symbol::R => 0,
            Bb84Symbol::V | Bb84Symbol::L => 1,
        }
    }

    pub fn from_basis_bit(basis: Basis, bit: u8) -> Self {
        match (basis, bit & 1) {
            (Basis::HV, 0) => Bb84Symbol::H,
            (Basis::HV, _) => Bb84Symbol::V,
            (Basis::RL, 0) => Bb84Symbol::R,
            (Basis::RL, _) => Bb84Symbol::L,
        }
    }

    /// Target Jones vector.
    pub fn ideal_state(self) -> JonesVector {
        match self {
            Bb84Symbol::H => JonesVector::horizontal(),
            Bb84Symbol::V => JonesVector::vertical(),
            Bb84Symbol::R => JonesVector::right_circular(),
            Bb84Symbol::L => JonesVector::left_circular(),
        }
    }
}

impl fmt::Display for Bb84Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Bb84Symbol::H => "H",
            Bb84Symbol::V => "V",
            Bb84Symbol::R => "R",
            Bb84Symbol::L => "L",
        };
        f.write_str(s)
    }
}

impl FromStr for Bb84Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H" => Ok(Bb84Symbol::H),
            "V" => Ok(Bb84Symbol::V),
            "R" => Ok(Bb84Symbol::R),
            "L" => Ok(Bb84Symbol::L),
            other => Err(Error::domain(format!("unknown BB84 symbol `{other}`"))),
        }
    }
}

/// Measurement bases of the polarization analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    HV,
    RL,
}

impl Basis {
    /// Outcome states `(first, second)` = `(bit 0, bit 1)`.
    pub fn states(self) -> (JonesVector, JonesVector) {
        match self {
            Basis::HV => (JonesVector::horizontal(), JonesVector::vertical()),
            Basis::RL => (JonesVector::right_circular(), JonesVector::left_circular()),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Basis::HV => 0,
            Basis::RL => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i & 1 == 0 { Basis::HV } else { Basis::RL }
    }
}

/// Phase table for the ideal circuit with the TOPS at zero.
pub fn bb84_settings(symbol: Bb84Symbol) -> PhaseSettings {
    let (pm1, pm2y) = match symbol {
        Bb84Symbol::H => (PI, 0.0),
        Bb84Symbol::V => (0.0, 0.0),
        Bb84Symbol::R => (FRAC_PI_2, 3.0 * FRAC_PI_2),
        Bb84Symbol::L => (FRAC_PI_2, FRAC_PI_2),
    };
    PhaseSettings { phi_pm1: pm1, phi_pm2x: 0.0, phi_pm2y: pm2y, phi_tops: 0.0 }
}

/// Parses a symbol name and returns its phase table entry.
pub fn bb84_settings_by_name(name: &str) -> Result<PhaseSettings> {
    Ok(bb84_settings(name.parse()?))
}
