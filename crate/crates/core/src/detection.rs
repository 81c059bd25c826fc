//! Bob's polarization analyzer and single-photon detectors.
//!
//! Two views of the same physics live here: closed-form per-symbol click
//! probabilities, and a Monte Carlo event generator with per-detector dead
//! time and temporal gating. The session runner builds its analytic and
//! sampled estimates on these.
//!
//! Detector layout:
//!
//! * `TwoDetectorSwitched`: Bob picks a basis per symbol (HV with
//!   probability `basis_choice_probability`); detector 0 reports the first
//!   outcome (H or R), detector 1 the second (V or L).
//! * `FourDetectorPassive`: a splitter sends a fraction
//!   `basis_choice_probability` of the light to the HV analyzer (detectors
//!   0, 1) and the rest to the RL analyzer (detectors 2, 3).

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{apply_rotation, PolarizationRotation};
use crate::optics::{Basis, JonesVector};
use crate::units::db_to_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub label: String,
    pub efficiency: f64,
    /// Dark counts per second over the full symbol slot.
    pub dark_rate: f64,
    /// Dead time after an accepted event, seconds.
    pub dead_time: f64,
}

impl DetectorSpec {
    pub fn new(label: impl Into<String>, efficiency: f64, dark_rate: f64, dead_time: f64) -> Self {
        Self { label: label.into(), efficiency, dark_rate, dead_time }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("detector `{}`: efficiency must lie in [0, 1]", self.label)));
        }
        if !(self.dark_rate >= 0.0) || !(self.dead_time >= 0.0) {
            return Err(Error::config(format!(
                "detector `{}`: dark_rate and dead_time must be >= 0",
                self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisScheme {
    TwoDetectorSwitched,
    FourDetectorPassive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    First,
    Second,
}

impl Outcome {
    pub fn bit(self) -> u8 {
        match self {
            Outcome::First => 0,
            Outcome::Second => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSpec {
    pub detectors: Vec<DetectorSpec>,
    pub basis_scheme: BasisScheme,
    /// Analyzer and coupling loss ahead of the detectors, dB.
    pub insertion_loss_db: f64,
    /// Central fraction of the symbol slot kept by temporal filtering.
    pub gate_fraction: f64,
    pub basis_choice_probability: f64,
    /// When set, signal photons spread over the whole slot and the gate cuts them too.
    pub signal_gate_penalty: bool,
}

/// Receiver insertion loss fitted to the lab RKR anchor with the InGaAs pair.
pub const DEFAULT_SPAD_INSERTION_LOSS_DB: f64 = 5.806043133096068;
/// Receiver insertion loss fitted to the field-link RKR anchor with the SNSPD pair.
pub const DEFAULT_SNSPD_INSERTION_LOSS_DB: f64 = 8.616955673808775;

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self::snspd()
    }
}

impl ReceiverSpec {
    /// Lab receiver: two InGaAs SPADs.
    pub fn ingaas_spad() -> Self {
        Self {
            detectors: vec![
                DetectorSpec::new("spad0", 0.08, 251.0, 10e-6),
                DetectorSpec::new("spad1", 0.08, 308.0, 10e-6),
            ],
            basis_scheme: BasisScheme::TwoDetectorSwitched,
            insertion_loss_db: DEFAULT_SPAD_INSERTION_LOSS_DB,
            gate_fraction: 0.5,
            basis_choice_probability: 0.5,
            signal_gate_penalty: false,
        }
    }

    /// Field receiver: two NbTiN SNSPDs.
    pub fn snspd() -> Self {
        Self {
            detectors: vec![
                DetectorSpec::new("snspd0", 0.65, 75.0, 50e-9),
                DetectorSpec::new("snspd1", 0.65, 123.0, 50e-9),
            ],
            basis_scheme: BasisScheme::TwoDetectorSwitched,
            insertion_loss_db: DEFAULT_SNSPD_INSERTION_LOSS_DB,
            gate_fraction: 0.5,
            basis_choice_probability: 0.5,
            signal_gate_penalty: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = match self.basis_scheme {
            BasisScheme::TwoDetectorSwitched => 2,
            BasisScheme::FourDetectorPassive => 4,
        };
        if self.detectors.len() != need {
            return Err(Error::config(format!(
                "{:?} needs exactly {need} detectors, got {}",
                self.basis_scheme,
                self.detectors.len()
            )));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        if !(self.gate_fraction > 0.0 && self.gate_fraction <= 1.0) {
            return Err(Error::config("receiver.gate_fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.basis_choice_probability) {
            return Err(Error::config("receiver.basis_choice_probability must lie in [0, 1]"));
        }
        if !(self.insertion_loss_db >= 0.0) {
            return Err(Error::config("receiver.insertion_loss_db must be >= 0"));
        }
        Ok(())
    }

    pub fn transmission(&self) -> f64 {
        db_to_linear(self.insertion_loss_db)
    }

    /// Share of the light (passive) or of the symbols (switched) analyzed in `basis`.
    pub fn basis_weight(&self, basis: Basis) -> f64 {
        match basis {
            Basis::HV => self.basis_choice_probability,
            Basis::RL => 1.0 - self.basis_choice_probability,
        }
    }

    /// Photon-flux share reaching the detectors of `basis`: 1 when switched,
    /// the splitter ratio when passive.
    pub fn basis_factor(&self, basis: Basis) -> f64 {
        match self.basis_scheme {
            BasisScheme::TwoDetectorSwitched => 1.0,
            BasisScheme::FourDetectorPassive => self.basis_weight(basis),
        }
    }

    /// `(basis, outcome)` reported by detector `j`, given Bob's switched basis choice.
    pub fn detector_role(&self, j: usize, switched_basis: Basis) -> (Basis, Outcome) {
        let outcome = if j % 2 == 0 { Outcome::First } else { Outcome::Second };
        match self.basis_scheme {
            BasisScheme::TwoDetectorSwitched => (switched_basis, outcome),
            BasisScheme::FourDetectorPassive => (Basis::from_index(j / 2), outcome),
        }
    }

    /// Fold an unpolarized background rate at the receiver input into
    /// per-detector dark-count equivalents.
    pub fn with_background(&self, background_rate: f64) -> ReceiverSpec {
        let mut rx = self.clone();
        if background_rate <= 0.0 {
            return rx;
        }
        let t = self.transmission();
        for (j, d) in rx.detectors.iter_mut().enumerate() {
            let share = match self.basis_scheme {
                BasisScheme::TwoDetectorSwitched => 1.0,
                BasisScheme::FourDetectorPassive => self.basis_weight(Basis::from_index(j / 2)),
            };
            d.dark_rate += background_rate * t * d.efficiency * 0.5 * share;
        }
        rx
    }

    /// Fraction of signal clicks that fall inside the gate.
    pub fn signal_gate_share(&self) -> f64 {
        if self.signal_gate_penalty { self.gate_fraction } else { 1.0 }
    }
}

/// Born-rule probability of `outcome` when measuring `state` in `basis`.
pub fn projection_probability(state: &JonesVector, basis: Basis, outcome: Outcome) -> f64 {
    let (first, second) = basis.states();
    let target = match outcome {
        Outcome::First => first,
        Outcome::Second => second,
    };
    target.fidelity(state) / state.norm_sqr()
}

/// Poisson signal-click probability for one detector.
pub fn signal_probability(mu_rx: f64, det: &DetectorSpec, rx: &ReceiverSpec, basis: Basis, p_proj: f64) -> f64 {
    let mean = mu_rx * rx.transmission() * det.efficiency * p_proj * rx.basis_factor(basis);
    -(-mean).exp_m1()
}

/// Probability of an in-gate click of `det` in one symbol.
pub fn click_probability(
    mu_rx: f64,
    det: &DetectorSpec,
    rx: &ReceiverSpec,
    basis: Basis,
    p_proj: f64,
    symbol_period: f64,
) -> f64 {
    let p_sig = signal_probability(mu_rx, det, rx, basis, p_proj);
    let p_dark_slot = (det.dark_rate * symbol_period).min(1.0);
    let p = p_sig * rx.signal_gate_share() + (1.0 - p_sig) * p_dark_slot * rx.gate_fraction;
    p.clamp(0.0, 1.0)
}

/// Probability that `det` fires anywhere in the slot (gated or not).
pub fn event_probability(mu_rx: f64, det: &DetectorSpec, rx: &ReceiverSpec, basis: Basis, p_proj: f64, symbol_period: f64) -> f64 {
    let p_sig = signal_probability(mu_rx, det, rx, basis, p_proj);
    let p_dark_slot = (det.dark_rate * symbol_period).min(1.0);
    (p_sig + (1.0 - p_sig) * p_dark_slot).clamp(0.0, 1.0)
}

/// Non-paralyzable dead-time model: `R / (1 + R·τ)`.
pub fn dead_time_throughput(true_rate: f64, dead_time: f64) -> Result<f64> {
    if !(true_rate >= 0.0) || !(dead_time >= 0.0) {
        return Err(Error::domain("dead_time_throughput needs non-negative rate and dead time"));
    }
    if true_rate.is_infinite() {
        return Ok(if dead_time > 0.0 { 1.0 / dead_time } else { f64::INFINITY });
    }
    Ok(true_rate / (1.0 + true_rate * dead_time))
}

/// One symbol handed to the detection stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolInput {
    pub state: JonesVector,
    /// Mean photon number at the receiver input.
    pub mu_rx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub symbol_index: u64,
    pub detector: u8,
    /// Basis the firing detector was analyzing.
    pub basis: Basis,
    /// Absolute event time, seconds from the start of the stream.
    pub time: f64,
    pub within_gate: bool,
}

/// Sequential event generator carrying per-detector dead-time state.
#[derive(Debug, Clone)]
pub struct DetectionEngine {
    rx: ReceiverSpec,
    symbol_period: f64,
    gate_lo: f64,
    gate_width: f64,
    live_from: Vec<f64>,
}

impl DetectionEngine {
    pub fn new(rx: &ReceiverSpec, symbol_period: f64) -> Result<Self> {
        rx.validate()?;
        if !(symbol_period > 0.0) {
            return Err(Error::domain("symbol period must be > 0"));
        }
        let gate_width = rx.gate_fraction * symbol_period;
        Ok(Self {
            rx: rx.clone(),
            symbol_period,
            gate_lo: 0.5 * (symbol_period - gate_width),
            gate_width,
            live_from: vec![f64::NEG_INFINITY; rx.detectors.len()],
        })
    }

    pub fn receiver(&self) -> &ReceiverSpec {
        &self.rx
    }

    /// Simulates one symbol whose `state` already includes any channel rotation.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        index: u64,
        state: &JonesVector,
        mu_rx: f64,
        rng: &mut R,
        out: &mut Vec<DetectionEvent>,
    ) {
        let switched_basis = match self.rx.basis_scheme {
            BasisScheme::TwoDetectorSwitched => {
                if rng.random::<f64>() < self.rx.basis_choice_probability {
                    Basis::HV
                } else {
                    Basis::RL
                }
            }
            BasisScheme::FourDetectorPassive => Basis::HV,
        };
        let slot_start = index as f64 * self.symbol_period;
        for j in 0..self.rx.detectors.len() {
            let (basis, outcome) = self.rx.detector_role(j, switched_basis);
            let det = &self.rx.detectors[j];
            let p_proj = projection_probability(state, basis, outcome);
            let p_sig = signal_probability(mu_rx, det, &self.rx, basis, p_proj);
            let p_dark = (det.dark_rate * self.symbol_period).min(1.0);
            let p_any = p_sig + (1.0 - p_sig) * p_dark;
            let u: f64 = rng.random();
            if u >= p_any {
                continue;
            }
            let offset = if u < p_sig && !self.rx.signal_gate_penalty {
                self.gate_lo + rng.random::<f64>() * self.gate_width
            } else {
                rng.random::<f64>() * self.symbol_period
            };
            let t = slot_start + offset;
            if t < self.live_from[j] {
                continue;
            }
            self.live_from[j] = t + det.dead_time;
            out.push(DetectionEvent {
                symbol_index: index,
                detector: j as u8,
                basis,
                time: t,
                within_gate: offset >= self.gate_lo && offset < self.gate_lo + self.gate_width,
            });
        }
    }
}

/// Monte Carlo detection of a finite symbol stream starting at `start_index`.
///
/// Detectors start live. The receiver sees each state after `rot`.
pub fn simulate_detection<I, R>(
    symbols: I,
    start_index: u64,
    rot: &PolarizationRotation,
    rx: &ReceiverSpec,
    symbol_period: f64,
    rng: &mut R,
) -> Result<Vec<DetectionEvent>>
where
    I: IntoIterator<Item = SymbolInput>,
    R: Rng + ?Sized,
{
    let mut engine = DetectionEngine::new(rx, symbol_period)?;
    let mut events = Vec::new();
    for (k, s) in symbols.into_iter().enumerate() {
        let state = apply_rotation(rot, &s.state);
        engine.step(start_index + k as u64, &state, s.mu_rx, rng, &mut events);
    }
    Ok(events)
}

/// Writes events as columnar CSV: `symbol_index,detector_id,gate_flag`.
pub fn write_events_csv<W: Write>(events: &[DetectionEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["symbol_index", "detector_id", "gate_flag"])?;
    for e in events {
        w.write_record([e.symbol_index.to_string(), e.detector.to_string(), u8::from(e.within_gate).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columnar event record as read back from CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub symbol_index: u64,
    pub detector_id: u8,
    pub gate_flag: u8,
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<EventRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
