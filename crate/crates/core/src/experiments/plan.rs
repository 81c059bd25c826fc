use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{nm_to_thz, thz_to_nm};

/// Frequency grid anchored on 193.4 THz (1550.12 nm, channel 34).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelPlan {
    pub grid_spacing_ghz: f64,
    pub start_nm: f64,
    pub stop_nm: f64,
    pub anchor_thz: f64,
    /// Band edges are quoted wavelengths; grid points within this distance
    /// of an edge count as inside.
    pub edge_tolerance_nm: f64,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self { grid_spacing_ghz: 200.0, start_nm: 1520.25, stop_nm: 1576.20, anchor_thz: 193.4, edge_tolerance_nm: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    /// ITU-T number on the 100 GHz grid: `(f − 190 THz)/0.1 THz`.
    pub number: i32,
    pub frequency_thz: f64,
    pub wavelength_nm: f64,
}

impl ChannelPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_tolerance_nm >= 0.0) {
            return Err(Error::config("channel plan edge_tolerance_nm must be >= 0"));
        }
        if !(self.grid_spacing_ghz > 0.0) || !(self.start_nm > 0.0) || !(self.stop_nm > self.start_nm) {
            return Err(Error::config("channel plan needs spacing > 0 and stop_nm > start_nm > 0"));
        }
        Ok(())
    }

    /// Band edges in THz, widened by the edge tolerance.
    pub fn band_thz(&self) -> (f64, f64) {
        (nm_to_thz(self.stop_nm + self.edge_tolerance_nm), nm_to_thz(self.start_nm - self.edge_tolerance_nm))
    }

    /// Grid points between the band edges, highest wavelength last.
    pub fn channels(&self) -> Result<Vec<Channel>> {
        self.validate()?;
        let spacing = self.grid_spacing_ghz * 1e-3;
        let (f_lo, f_hi) = self.band_thz();
        let k_lo = ((f_lo - self.anchor_thz) / spacing).ceil() as i64;
        let k_hi = ((f_hi - self.anchor_thz) / spacing).floor() as i64;
        Ok((k_lo..=k_hi)
            .rev()
            .map(|k| {
                let f = self.anchor_thz + k as f64 * spacing;
                Channel { number: ((f - 190.0) / 0.1).round() as i32, frequency_thz: f, wavelength_nm: thz_to_nm(f) }
            })
            .collect())
    }
}
