//! SiGe light-emitter model: L–I power law, Gaussian emission spectrum and
//! the photon budget that turns rear-facet power into photons per symbol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_watts, nm_to_thz, photon_energy};

/// FWHM to standard deviation for a Gaussian: `2·√(2 ln 2)`.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    /// Forward current of the L–I anchor point, mA.
    pub anchor_current_ma: f64,
    /// Rear-facet (1D-GC) power at the anchor current and 25 °C, dBm.
    pub anchor_power_dbm: f64,
    /// Slope of the L–I power law (1 = linear in current).
    pub power_exponent: f64,
    pub temperature_c: f64,
    /// Emission derating per °C above 25 °C, dB/°C.
    pub temp_derating_db_per_c: f64,
    pub center_wavelength_nm: f64,
    /// Spectral FWHM in THz.
    pub fwhm_thz: f64,
    pub symbol_rate_hz: f64,
    /// Modulator and output-coupler loss of the PIC, dB.
    pub pic_loss_db: f64,
    /// Forward-path emission relative to the rear facet, dB (negative means
    /// the forward path receives more light than the rear monitor).
    pub coupling_asymmetry_db: f64,
    /// Operating forward current, mA.
    pub drive_current_ma: f64,
    /// Forward voltage at the anchor point. Recorded only.
    pub forward_voltage_v: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            anchor_current_ma: 25.0,
            anchor_power_dbm: -66.9,
            power_exponent: 1.0,
            temperature_c: 25.0,
            temp_derating_db_per_c: 0.0,
            center_wavelength_nm: 1550.12,
            fwhm_thz: DEFAULT_FWHM_THZ,
            symbol_rate_hz: 100e6,
            pic_loss_db: 19.5,
            coupling_asymmetry_db: DEFAULT_COUPLING_ASYMMETRY_DB,
            drive_current_ma: 25.0,
            forward_voltage_v: 2.2,
        }
    }
}

/// Spectral FWHM produced by `fit_spectrum_fwhm` against the channel-count targets.
pub const DEFAULT_FWHM_THZ: f64 = 5.535;
/// Coupling asymmetry produced by `fit_coupling_asymmetry` for μ = 0.015 on channel 34.
pub const DEFAULT_COUPLING_ASYMMETRY_DB: f64 = -7.831546039920454;

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_thz > 0.0) {
            return Err(Error::config("source.fwhm_thz must be > 0"));
        }
        if !(self.symbol_rate_hz > 0.0) {
            return Err(Error::config("source.symbol_rate_hz must be > 0"));
        }
        if !(self.pic_loss_db >= 0.0) {
            return Err(Error::config("source.pic_loss_db must be >= 0"));
        }
        if !(self.anchor_current_ma > 0.0) {
            return Err(Error::config("source.anchor_current_ma must be > 0"));
        }
        if !(self.center_wavelength_nm > 0.0) {
            return Err(Error::config("source.center_wavelength_nm must be > 0"));
        }
        Ok(())
    }

    /// Emission peak frequency, THz.
    pub fn center_thz(&self) -> f64 {
        nm_to_thz(self.center_wavelength_nm)
    }
}

/// Rear-facet optical power at `forward_current_ma`.
///
/// Returns `-inf` at zero drive.
pub fn led_power_dbm(spec: &SourceSpec, forward_current_ma: f64) -> Result<f64> {
    if !(forward_current_ma >= 0.0) {
        return Err(Error::domain(format!(
            "forward current must be >= 0 mA, got {forward_current_ma}"
        )));
    }
    if forward_current_ma == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(spec.anchor_power_dbm
        + 10.0 * spec.power_exponent * (forward_current_ma / spec.anchor_current_ma).log10()
        - spec.temp_derating_db_per_c * (spec.temperature_c - 25.0))
}

/// Fraction of the Gaussian emission spectrum inside a flat-top passband
/// `[center ± width/2]`.
pub fn spectral_fraction(spec: &SourceSpec, filter_center_thz: f64, filter_width_thz: f64) -> Result<f64> {
    if !(filter_width_thz > 0.0) {
        return Err(Error::domain("filter width must be > 0"));
    }
    if filter_width_thz.is_infinite() {
        return Ok(1.0);
    }
    let sigma = spec.fwhm_thz / FWHM_PER_SIGMA;
    let scale = sigma * std::f64::consts::SQRT_2;
    let lo = (filter_center_thz - 0.5 * filter_width_thz - spec.center_thz()) / scale;
    let hi = (filter_center_thz + 0.5 * filter_width_thz - spec.center_thz()) / scale;
    // erfc differences keep precision in the far tails
    let frac = if lo >= 0.0 {
        0.5 * (libm::erfc(lo) - libm::erfc(hi))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi) - libm::erfc(-lo))
    } else {
        0.5 * (libm::erf(hi) - libm::erf(lo))
    };
    Ok(frac.clamp(0.0, 1.0))
}

/// Mean photon number per symbol after the channel-defining filter.
pub fn mean_photon_number(
    spec: &SourceSpec,
    filter_center_thz: f64,
    filter_width_thz: f64,
    filter_loss_db: f64,
) -> Result<f64> {
    spec.validate()?;
    if !(filter_loss_db >= 0.0) {
        return Err(Error::domain("filter loss must be >= 0 dB"));
    }
    let rear_dbm = led_power_dbm(spec, spec.drive_current_ma)?;
    let forward_dbm = rear_dbm - spec.pic_loss_db - spec.coupling_asymmetry_db;
    let power_w = dbm_to_watts(forward_dbm)
        * db_to_linear(filter_loss_db)
        * spectral_fraction(spec, filter_center_thz, filter_width_thz)?;
    Ok(power_w / (photon_energy(filter_center_thz) * spec.symbol_rate_hz))
}
