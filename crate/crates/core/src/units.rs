//! Physical constants and unit conversions shared across the crate.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Linear power transmission for a loss in dB. `+inf` maps to 0.
pub fn db_to_linear(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Loss in dB for a linear transmission factor.
pub fn linear_to_db(transmission: f64) -> f64 {
    -10.0 * transmission.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Vacuum wavelength in nm to optical frequency in THz.
pub fn nm_to_thz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9) / 1e12
}

pub fn thz_to_nm(frequency_thz: f64) -> f64 {
    SPEED_OF_LIGHT / (frequency_thz * 1e12) * 1e9
}

/// Photon energy in joules at the given optical frequency.
pub fn photon_energy(frequency_thz: f64) -> f64 {
    PLANCK * frequency_thz * 1e12
}
