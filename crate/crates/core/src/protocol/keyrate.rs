//! Asymptotic key accounting and AES-GCM re-keying capacity.

use crate::error::{Error, Result};

/// One fresh AES-256 key per 64 GB of traffic.
pub const AES_KEY_BITS: f64 = 256.0;
pub const AES_REKEY_BYTES: f64 = 64e9;
/// Protected traffic per secret bit: 64e9·8/256 = 2e9.
pub const CAPACITY_PER_SECRET_BIT: f64 = AES_REKEY_BYTES * 8.0 / AES_KEY_BITS;

/// `h₂(x) = −x·log₂x − (1−x)·log₂(1−x)`, with `h₂(0) = h₂(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("binary entropy needs x in [0, 1], got {x}")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Secret fraction `max(0, 1 − 2·h₂(Q))` of the sifted key.
pub fn secret_fraction(qber: f64) -> f64 {
    secret_fraction_with_ec(qber, 1.0)
}

/// Secret fraction with an error-correction inefficiency `f`:
/// `max(0, 1 − f·h₂(Q) − h₂(Q))`. QBER above 1/2 yields nothing.
pub fn secret_fraction_with_ec(qber: f64, ec_efficiency: f64) -> f64 {
    if !(0.0..=0.5).contains(&qber) {
        return 0.0;
    }
    let h = binary_entropy(qber).unwrap_or(1.0);
    (1.0 - (1.0 + ec_efficiency) * h).max(0.0)
}

pub fn skr_from_rkr(rkr: f64, qber: f64) -> Result<f64> {
    if !(rkr >= 0.0) {
        return Err(Error::domain("raw key rate must be >= 0"));
    }
    Ok(rkr * secret_fraction(qber))
}

/// Classical traffic (b/s) that a secret-key rate can re-key under AES-GCM limits.
pub fn aes_gcm_capacity(skr: f64) -> Result<f64> {
    if !(skr >= 0.0) {
        return Err(Error::domain("secret key rate must be >= 0"));
    }
    Ok(skr * CAPACITY_PER_SECRET_BIT)
}

pub fn min_skr_for_capacity(capacity: f64) -> Result<f64> {
    if !(capacity >= 0.0) {
        return Err(Error::domain("capacity must be >= 0"));
    }
    Ok(capacity / CAPACITY_PER_SECRET_BIT)
}

/// QBER at which `1 − 2·h₂(Q)` reaches zero.
pub fn qber_threshold() -> f64 {
    crate::rootfind::bisect(|q| secret_fraction_raw(q), 0.05, 0.2, 1e-15, 0.0, 200)
        .map(|r| r.x)
        .unwrap_or(0.110_028)
}

fn secret_fraction_raw(q: f64) -> f64 {
    1.0 - 2.0 * binary_entropy(q).unwrap_or(1.0)
}
