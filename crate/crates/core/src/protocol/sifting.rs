use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Basis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceRecord {
    pub bit: u8,
    pub basis: Basis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobRecord {
    pub bit: u8,
    pub basis: Basis,
    /// False when nothing was detected in the gate or the symbol was a double click.
    pub valid: bool,
}

impl BobRecord {
    pub const NONE: BobRecord = BobRecord { bit: 0, basis: Basis::HV, valid: false };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedPair {
    pub alice: u8,
    pub bob: u8,
}

impl SiftedPair {
    pub fn is_error(&self) -> bool {
        self.alice != self.bob
    }
}

/// Keeps the symbols Bob detected in Alice's basis.
pub fn sift(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<Vec<SiftedPair>> {
    if alice.len() != bob.len() {
        return Err(Error::domain(format!(
            "sift needs equal-length streams, got {} and {}",
            alice.len(),
            bob.len()
        )));
    }
    Ok(alice
        .iter()
        .zip(bob)
        .filter(|(a, b)| b.valid && a.basis == b.basis)
        .map(|(a, b)| SiftedPair { alice: a.bit, bob: b.bit })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub qber: f64,
    /// Binomial standard error `√(Q(1−Q)/N)`.
    pub sigma: f64,
    pub sifted: u64,
    pub errors: u64,
}

impl QberEstimate {
    pub fn from_counts(errors: u64, sifted: u64) -> Result<Self> {
        if sifted == 0 {
            return Err(Error::domain("QBER estimate needs at least one sifted pair"));
        }
        if errors > sifted {
            return Err(Error::domain("more errors than sifted pairs"));
        }
        let n = sifted as f64;
        let q = errors as f64 / n;
        Ok(Self { qber: q, sigma: (q * (1.0 - q) / n).sqrt(), sifted, errors })
    }
}

pub fn qber_estimate(pairs: &[SiftedPair]) -> Result<QberEstimate> {
    let errors = pairs.iter().filter(|p| p.is_error()).count() as u64;
    QberEstimate::from_counts(errors, pairs.len() as u64)
}

/// Sifted-key size at which the binomial standard error equals `sigma` for a given QBER.
pub fn sifted_size_for_sigma(qber: f64, sigma: f64) -> f64 {
    qber * (1.0 - qber) / (sigma * sigma)
}
