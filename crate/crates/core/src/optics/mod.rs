//! Transmitter PIC model.

pub mod calibration;
pub mod circuit;
pub mod jones;
pub mod source;
pub mod waveform;

pub use calibration::{calibrate_tops, CalibrationOptions, CalibrationOutcome, SimulatedDevice};
pub use circuit::{
    bb84_settings, mmi2x2, prepare_state, Basis, Bb84Symbol, PhaseSettings, Transmitter,
};
pub use jones::JonesVector;
pub use source::{led_power_dbm, mean_photon_number, spectral_fraction, SourceSpec};
pub use waveform::{carve_amplitude, decoy_sequence, PulseShape};
