//! BB84 session runner: closed-form rates and block-partitioned Monte Carlo.
//!
//! Both modes share one physical model. Alice picks basis and bit uniformly
//! and, with probability `intrinsic_error`, emits the orthogonal state
//! instead (the residual preparation/analysis imperfection). The state then
//! crosses the link rotation and reaches the detectors. Bob keeps a symbol
//! when exactly one detector fires inside the gate; double clicks are
//! discarded. RKR is the sifted rate after that filtering.
//!
//! Monte Carlo splits the symbol stream into fixed-size blocks. Block `b`
//! draws Alice's choices from substream `ALICE + b` and detector randomness
//! from `DETECTION + b`, and starts with all detectors live, so the result
//! does not depend on how many threads process the blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{BasisScheme, DetectionEngine, DetectionEvent, ReceiverSpec};
use crate::error::{Error, Result};
use crate::link::{apply_rotation, drift_step, expected_drift_error, LinkSpec, LossElement, PolarizationRotation};
use crate::optics::{mean_photon_number, Basis, Bb84Symbol, JonesVector, SourceSpec};
use crate::protocol::keyrate::{aes_gcm_capacity, secret_fraction_with_ec};
use crate::protocol::sifting::{sift, AliceRecord, BobRecord, QberEstimate};
use crate::rng::{streams, substream};
use crate::units::db_to_linear;
use rand::Rng;

/// Residual error floor fitted to the field-link QBER.
pub const DEFAULT_FIELD_INTRINSIC_ERROR: f64 = 0.035673139125044884;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    #[serde(alias = "mc", alias = "monte_carlo")]
    Montecarlo,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Mode::Analytic),
            "mc" | "montecarlo" | "monte_carlo" => Ok(Mode::Montecarlo),
            other => Err(Error::config(format!("unknown mode `{other}` (analytic|mc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaunchKind {
    /// On-chip SiGe LED; μ follows from the source model and the channel filter.
    InternalSige,
    /// External attenuated laser with a fixed μ after the channel filter.
    ExternalLaser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Launch {
    pub kind: LaunchKind,
    pub external_mu: f64,
}

impl Default for Launch {
    fn default() -> Self {
        Self { kind: LaunchKind::InternalSige, external_mu: 0.1 }
    }
}

/// Tunable filter that carves one WDM channel out of the broadband emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelFilter {
    pub center_thz: f64,
    pub width_thz: f64,
    pub loss_db: f64,
}

impl Default for ChannelFilter {
    fn default() -> Self {
        Self { center_thz: 193.4, width_thz: 0.2, loss_db: 3.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub symbol_rate: f64,
    /// Session length, seconds.
    pub duration: f64,
    pub mode: Mode,
    pub seed: u64,
    pub source: SourceSpec,
    pub launch: Launch,
    pub filter: ChannelFilter,
    pub link: LinkSpec,
    pub receiver: ReceiverSpec,
    pub intrinsic_error: f64,
    /// Error-correction inefficiency factor in the secret fraction.
    pub ec_efficiency: f64,
    /// Static link rotation as a rotation vector (axis × angle) on the Poincaré sphere.
    pub static_rotation: [f64; 3],
    /// Realignment times, seconds. Presence switches on the time series.
    pub realign_schedule: Option<Vec<f64>>,
    /// Emit a time series even without realign events.
    pub time_series: bool,
    /// Spacing of time-series samples, seconds.
    pub sample_interval: f64,
    /// Simulated seconds per Monte Carlo time-series sample.
    pub mc_window: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            symbol_rate: 100e6,
            duration: 1.0,
            mode: Mode::Analytic,
            seed: 0,
            source: SourceSpec::default(),
            launch: Launch::default(),
            filter: ChannelFilter::default(),
            link: LinkSpec::new(vec![LossElement::fiber_with_loss(
                crate::link::FIELD_LINK_KM,
                crate::link::FIELD_LINK_LOSS_DB,
            )]),
            receiver: ReceiverSpec::snspd(),
            intrinsic_error: DEFAULT_FIELD_INTRINSIC_ERROR,
            ec_efficiency: 1.0,
            static_rotation: [0.0; 3],
            realign_schedule: None,
            time_series: false,
            sample_interval: 60.0,
            mc_window: 0.05,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration must be > 0"));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate.is_finite()) {
            return Err(Error::config("symbol_rate must be > 0"));
        }
        if !(0.0..=0.5).contains(&self.intrinsic_error) {
            return Err(Error::config("intrinsic_error must lie in [0, 0.5]"));
        }
        if !(self.ec_efficiency >= 0.0) {
            return Err(Error::config("ec_efficiency must be >= 0"));
        }
        if self.launch.kind == LaunchKind::ExternalLaser && !(self.launch.external_mu >= 0.0) {
            return Err(Error::config("launch.external_mu must be >= 0"));
        }
        if !(self.filter.width_thz > 0.0) || !(self.filter.loss_db >= 0.0) {
            return Err(Error::config("filter needs width_thz > 0 and loss_db >= 0"));
        }
        if !self.static_rotation.iter().all(|v| v.is_finite()) {
            return Err(Error::config("static_rotation must be finite"));
        }
        if self.wants_series() {
            if !(self.sample_interval > 0.0) {
                return Err(Error::config("sample_interval must be > 0"));
            }
            if !(self.mc_window > 0.0) {
                return Err(Error::config("mc_window must be > 0"));
            }
        }
        if let Some(times) = &self.realign_schedule {
            if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(Error::config("realign times must be finite and >= 0"));
            }
        }
        self.source.validate()?;
        self.link.validate()?;
        self.receiver.validate()
    }

    pub fn wants_series(&self) -> bool {
        self.time_series || self.realign_schedule.is_some()
    }

    pub fn symbol_period(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    /// Mean photon number per symbol leaving Alice (after the channel filter).
    pub fn launch_mu(&self) -> Result<f64> {
        match self.launch.kind {
            LaunchKind::ExternalLaser => Ok(self.launch.external_mu),
            LaunchKind::InternalSige => {
                let mut src = self.source.clone();
                src.symbol_rate_hz = self.symbol_rate;
                mean_photon_number(&src, self.filter.center_thz, self.filter.width_thz, self.filter.loss_db)
            }
        }
    }

    /// Link loss seen by the quantum signal, dB.
    pub fn link_loss_db(&self) -> f64 {
        self.link.loss_at(self.filter.center_thz)
    }

    pub fn static_rotation(&self) -> PolarizationRotation {
        let [x, y, z] = self.static_rotation;
        let angle = (x * x + y * y + z * z).sqrt();
        if angle == 0.0 {
            PolarizationRotation::identity()
        } else {
            PolarizationRotation::about_axis([x / angle, y / angle, z / angle], angle)
        }
    }

    /// Receiver with link background folded into the dark rates.
    pub fn effective_receiver(&self) -> ReceiverSpec {
        self.receiver.with_background(self.link.effective_background())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub mode: Mode,
    pub mu_tx: f64,
    pub mu_rx: f64,
    pub link_loss_db: f64,
    /// Accepted in-gate events per detector over `counted_time`.
    pub per_detector_counts: Vec<f64>,
    pub sifted_bits: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    /// Sifted-key rate, b/s.
    pub rkr: f64,
    pub skr: f64,
    pub aes_capacity: f64,
    /// Seconds of link time behind the counts (simulated windows only, for sampled runs).
    pub counted_time: f64,
}

impl SessionResult {
    /// SKR a four-detector receiver would deliver: both bases analyzed on
    /// every symbol, so twice the two-detector (per-basis) figure.
    pub fn four_detector_skr(&self) -> f64 {
        2.0 * self.skr
    }

    pub fn to_record(&self) -> SessionRecord {
        let det = |j: usize| self.per_detector_counts.get(j).copied();
        SessionRecord {
            mode: self.mode,
            mu_tx: self.mu_tx,
            mu_rx: self.mu_rx,
            link_loss_db: self.link_loss_db,
            det0: det(0),
            det1: det(1),
            det2: det(2),
            det3: det(3),
            sifted_bits: self.sifted_bits,
            qber: self.qber,
            qber_sigma: self.qber_sigma,
            rkr: self.rkr,
            skr: self.skr,
            skr_four_detector: self.four_detector_skr(),
            aes_capacity: self.aes_capacity,
            counted_time: self.counted_time,
        }
    }
}

/// Flat, CSV-friendly view of a [`SessionResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub mode: Mode,
    pub mu_tx: f64,
    pub mu_rx: f64,
    pub link_loss_db: f64,
    pub det0: Option<f64>,
    pub det1: Option<f64>,
    pub det2: Option<f64>,
    pub det3: Option<f64>,
    pub sifted_bits: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    pub rkr: f64,
    pub skr: f64,
    pub skr_four_detector: f64,
    pub aes_capacity: f64,
    pub counted_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSample {
    pub t: f64,
    pub rkr: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    pub skr: f64,
    /// Flip probability contributed by drift at this sample.
    pub drift_error: f64,
    /// A realign event fell in `(previous sample, t]`.
    pub realigned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutput {
    pub result: SessionResult,
    pub series: Option<Vec<SeriesSample>>,
}

/// Expected per-symbol detection statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticRates {
    /// Accepted in-gate events per symbol, per detector.
    pub detector_per_symbol: Vec<f64>,
    /// Probability that a symbol ends in the sifted key.
    pub sifted_per_symbol: f64,
    /// Probability that a symbol ends in the sifted key with a wrong bit.
    pub error_per_symbol: f64,
}

impl AnalyticRates {
    pub fn qber(&self) -> Option<f64> {
        (self.sifted_per_symbol > 0.0).then(|| self.error_per_symbol / self.sifted_per_symbol)
    }
}

/// Every (Alice basis, bit, flip, Bob basis) branch with its probability.
fn branches(rx: &ReceiverSpec, flip: f64) -> Vec<(f64, Basis, u8, bool, Basis)> {
    let bob: Vec<(f64, Basis)> = match rx.basis_scheme {
        BasisScheme::TwoDetectorSwitched => vec![
            (rx.basis_choice_probability, Basis::HV),
            (1.0 - rx.basis_choice_probability, Basis::RL),
        ],
        BasisScheme::FourDetectorPassive => vec![(1.0, Basis::HV)],
    };
    let mut out = Vec::with_capacity(16);
    for a in [Basis::HV, Basis::RL] {
        for bit in [0u8, 1] {
            for (pf, flipped) in [(1.0 - flip, false), (flip, true)] {
                for &(pb, b) in &bob {
                    let w = 0.25 * pf * pb;
                    if w > 0.0 {
                        out.push((w, a, bit, flipped, b));
                    }
                }
            }
        }
    }
    out
}

/// Closed-form per-symbol statistics.
///
/// Each detector's in-gate click probability follows from Poisson signal
/// statistics plus gated darks. Dead time enters through the stationary live
/// fraction `1/(1 + R·a·τ)`, where `a` is the detector's mean event
/// probability per symbol over all branches.
pub fn analytic_rates(
    mu_rx: f64,
    rx: &ReceiverSpec,
    rotation: &PolarizationRotation,
    flip: f64,
    symbol_rate: f64,
) -> Result<AnalyticRates> {
    rx.validate()?;
    if !(mu_rx >= 0.0) {
        return Err(Error::domain("mu_rx must be >= 0"));
    }
    let period = 1.0 / symbol_rate;
    let n = rx.detectors.len();
    let branches = branches(rx, flip);
    // per branch: (in-gate probability, any-event probability) per detector
    let mut table = Vec::with_capacity(branches.len());
    let mut mean_any = vec![0.0; n];
    let mut mean_gate = vec![0.0; n];
    for &(w, a, bit, flipped, b) in &branches {
        let sent = Bb84Symbol::from_basis_bit(a, bit ^ u8::from(flipped)).ideal_state();
        let state = apply_rotation(rotation, &sent);
        let mut row = Vec::with_capacity(n);
        for (j, det) in rx.detectors.iter().enumerate() {
            let (basis, outcome) = rx.detector_role(j, b);
            let p_proj = crate::detection::projection_probability(&state, basis, outcome);
            let q = crate::detection::click_probability(mu_rx, det, rx, basis, p_proj, period);
            let any = crate::detection::event_probability(mu_rx, det, rx, basis, p_proj, period);
            mean_any[j] += w * any;
            mean_gate[j] += w * q;
            row.push(q);
        }
        table.push(row);
    }
    let live: Vec<f64> = rx
        .detectors
        .iter()
        .zip(&mean_any)
        .map(|(d, &a)| 1.0 / (1.0 + symbol_rate * a * d.dead_time))
        .collect();

    let mut sifted = 0.0;
    let mut errors = 0.0;
    for (&(w, a, bit, _, b), row) in branches.iter().zip(&table) {
        let eff: Vec<f64> = row.iter().zip(&live).map(|(q, l)| q * l).collect();
        for j in 0..n {
            let (basis, outcome) = rx.detector_role(j, b);
            if basis != a {
                continue;
            }
            let others: f64 = (0..n).filter(|&k| k != j).map(|k| 1.0 - eff[k]).product();
            let single = eff[j] * others;
            sifted += w * single;
            if outcome.bit() != bit {
                errors += w * single;
            }
        }
    }
    Ok(AnalyticRates {
        detector_per_symbol: mean_gate.iter().zip(&live).map(|(q, l)| q * l).collect(),
        sifted_per_symbol: sifted,
        error_per_symbol: errors,
    })
}

/// Independent flips compose as `e(1−d) + d(1−e)`.
pub fn compose_flips(e: f64, d: f64) -> f64 {
    e * (1.0 - d) + d * (1.0 - e)
}

fn finish(
    cfg: &SessionConfig,
    mu_tx: f64,
    mu_rx: f64,
    counts: Vec<f64>,
    sifted: f64,
    errors: f64,
    counted_time: f64,
) -> Result<SessionResult> {
    let (qber, sigma) = if sifted > 0.0 {
        let q = (errors / sifted).clamp(0.0, 1.0);
        (q, (q * (1.0 - q) / sifted).sqrt())
    } else {
        // nothing sifted: no information about the bits
        (0.5, 0.5)
    };
    let rkr = sifted / counted_time;
    let skr = rkr * secret_fraction_with_ec(qber, cfg.ec_efficiency);
    Ok(SessionResult {
        mode: cfg.mode,
        mu_tx,
        mu_rx,
        link_loss_db: cfg.link_loss_db(),
        per_detector_counts: counts,
        sifted_bits: sifted,
        qber,
        qber_sigma: sigma,
        rkr,
        skr,
        aes_capacity: aes_gcm_capacity(skr)?,
        counted_time,
    })
}

fn mu_pair(cfg: &SessionConfig) -> Result<(f64, f64)> {
    let mu_tx = cfg.launch_mu()?;
    let mu_rx = mu_tx * db_to_linear(cfg.link_loss_db());
    Ok((mu_tx, mu_rx))
}

/// Analytic statistics for a span of `seconds` with a given drift flip probability.
fn analytic_span(cfg: &SessionConfig, drift_error: f64, seconds: f64) -> Result<SessionResult> {
    let (mu_tx, mu_rx) = mu_pair(cfg)?;
    let rx = cfg.effective_receiver();
    let flip = compose_flips(cfg.intrinsic_error, drift_error);
    let rates = analytic_rates(mu_rx, &rx, &cfg.static_rotation(), flip, cfg.symbol_rate)?;
    let n = cfg.symbol_rate * seconds;
    let counts = rates.detector_per_symbol.iter().map(|p| p * n).collect();
    finish(cfg, mu_tx, mu_rx, counts, rates.sifted_per_symbol * n, rates.error_per_symbol * n, seconds)
}

/// Raw Monte Carlo tallies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McTally {
    pub per_detector: Vec<u64>,
    pub sifted: u64,
    pub errors: u64,
    pub symbols: u64,
}

impl McTally {
    fn merge(mut self, other: McTally) -> McTally {
        if self.per_detector.len() < other.per_detector.len() {
            self.per_detector.resize(other.per_detector.len(), 0);
        }
        for (a, b) in self.per_detector.iter_mut().zip(&other.per_detector) {
            *a += b;
        }
        self.sifted += other.sifted;
        self.errors += other.errors;
        self.symbols += other.symbols;
        self
    }

    pub fn qber_estimate(&self) -> Result<QberEstimate> {
        QberEstimate::from_counts(self.errors, self.sifted)
    }
}

/// Symbols per Monte Carlo block: at least 2^20, and long enough that a
/// dead-time window spans under 1e-4 of a block.
pub fn block_symbols(rx: &ReceiverSpec, symbol_rate: f64) -> u64 {
    let tau = rx.detectors.iter().map(|d| d.dead_time).fold(0.0, f64::max);
    let need = (1e4 * tau * symbol_rate).ceil().max(1.0) as u64;
    need.next_power_of_two().max(1 << 20)
}

struct McSetup<'a> {
    rx: &'a ReceiverSpec,
    mu_rx: f64,
    flip: f64,
    period: f64,
}

/// One block of `len` symbols starting at absolute index `start`.
fn mc_block(
    setup: &McSetup,
    rotation: &PolarizationRotation,
    seed: u64,
    stream: u64,
    start: u64,
    len: u64,
    mut capture: Option<&mut Vec<DetectionEvent>>,
) -> Result<McTally> {
    let mut alice_rng = substream(seed, streams::ALICE + stream);
    let mut det_rng = substream(seed, streams::DETECTION + stream);
    let mut engine = DetectionEngine::new(setup.rx, setup.period)?;
    // index = 2·basis + sent bit
    let states: Vec<JonesVector> = (0..4)
        .map(|k| apply_rotation(rotation, &Bb84Symbol::from_basis_bit(Basis::from_index(k >> 1), (k & 1) as u8).ideal_state()))
        .collect();
    let n_det = setup.rx.detectors.len();
    let mut events = Vec::new();
    let mut alice = Vec::new();
    let mut bob = Vec::new();
    let mut counts = vec![0u64; n_det];
    for i in start..start + len {
        let choice: u32 = alice_rng.random();
        let basis = Basis::from_index((choice & 1) as usize);
        let bit = ((choice >> 1) & 1) as u8;
        let flipped = setup.flip > 0.0 && alice_rng.random::<f64>() < setup.flip;
        let sent = bit ^ u8::from(flipped);
        events.clear();
        engine.step(i, &states[2 * basis.index() + sent as usize], setup.mu_rx, &mut det_rng, &mut events);
        if let Some(c) = capture.as_deref_mut() {
            c.extend_from_slice(&events);
        }
        let mut gated = events.iter().filter(|e| e.within_gate);
        let Some(first) = gated.next() else { continue };
        counts[first.detector as usize] += 1;
        let mut valid = true;
        for extra in gated {
            counts[extra.detector as usize] += 1;
            valid = false;
        }
        let role = setup.rx.detector_role(first.detector as usize, first.basis).1;
        alice.push(AliceRecord { bit, basis });
        bob.push(BobRecord { bit: role.bit(), basis: first.basis, valid });
    }
    let pairs = sift(&alice, &bob)?;
    Ok(McTally {
        per_detector: counts,
        sifted: pairs.len() as u64,
        errors: pairs.iter().filter(|p| p.is_error()).count() as u64,
        symbols: len,
    })
}

/// Monte Carlo over `n_symbols`, blocks run in parallel and merged in order.
/// `rotation_for_block` gives the channel rotation held during each block.
fn mc_span<F>(setup: &McSetup, seed: u64, stream_base: u64, n_symbols: u64, block: u64, rotation_for_block: F) -> Result<McTally>
where
    F: Fn(u64) -> PolarizationRotation + Sync,
{
    let n_blocks = n_symbols.div_ceil(block);
    let tallies: Vec<Result<McTally>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let len = block.min(n_symbols - start);
            mc_block(setup, &rotation_for_block(b), seed, stream_base + b, start, len, None)
        })
        .collect();
    let mut total = McTally { per_detector: vec![0; setup.rx.detectors.len()], ..Default::default() };
    for t in tallies {
        total = total.merge(t?);
    }
    Ok(total)
}

fn tally_result(cfg: &SessionConfig, mu_tx: f64, mu_rx: f64, t: &McTally) -> Result<SessionResult> {
    let counts = t.per_detector.iter().map(|&c| c as f64).collect();
    let seconds = t.symbols as f64 / cfg.symbol_rate;
    finish(cfg, mu_tx, mu_rx, counts, t.sifted as f64, t.errors as f64, seconds)
}

fn monte_carlo_session(cfg: &SessionConfig) -> Result<SessionResult> {
    let (mu_tx, mu_rx) = mu_pair(cfg)?;
    let rx = cfg.effective_receiver();
    let setup = McSetup { rx: &rx, mu_rx, flip: cfg.intrinsic_error, period: cfg.symbol_period() };
    let n_symbols = (cfg.duration * cfg.symbol_rate).round().max(1.0) as u64;
    let block = block_symbols(&rx, cfg.symbol_rate);
    let n_blocks = n_symbols.div_ceil(block);
    // drift path held piecewise constant per block
    let mut rotations = Vec::with_capacity(n_blocks as usize);
    let mut rot = cfg.static_rotation();
    let mut drift_rng = substream(cfg.seed, streams::DRIFT);
    let block_time = block as f64 / cfg.symbol_rate;
    for _ in 0..n_blocks {
        rotations.push(rot);
        rot = drift_step(&rot, block_time, cfg.link.drift_coefficient, &mut drift_rng)?;
    }
    let tally = mc_span(&setup, cfg.seed, 0, n_symbols, block, |b| rotations[b as usize])?;
    tally_result(cfg, mu_tx, mu_rx, &tally)
}

/// Sample times `0, Δ, 2Δ, …` up to and including the session end.
fn sample_times(cfg: &SessionConfig) -> Vec<f64> {
    let n = (cfg.duration / cfg.sample_interval + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * cfg.sample_interval).collect()
}

/// Most recent realign time at or before `t`.
fn last_realign(schedule: &[f64], t: f64) -> f64 {
    schedule.iter().copied().filter(|&r| r <= t).fold(0.0, f64::max)
}

fn sample_of(t: f64, r: &SessionResult, drift_error: f64, realigned: bool) -> SeriesSample {
    SeriesSample { t, rkr: r.rkr, qber: r.qber, qber_sigma: r.qber_sigma, skr: r.skr, drift_error, realigned }
}

fn series_session(cfg: &SessionConfig) -> Result<SessionOutput> {
    let schedule = cfg.realign_schedule.clone().unwrap_or_default();
    let times = sample_times(cfg);
    let realigned_at = |k: usize| k > 0 && schedule.iter().any(|&r| r > times[k - 1] && r <= times[k]);
    let coeff = cfg.link.drift_coefficient;
    let mut series = Vec::with_capacity(times.len());
    let result = match cfg.mode {
        Mode::Analytic => {
            // each sample's statistics stand for the interval it opens
            let mut counts = vec![0.0; cfg.receiver.detectors.len()];
            let (mut sifted, mut errors) = (0.0, 0.0);
            let (mut mu_tx, mut mu_rx) = (0.0, 0.0);
            for (k, &t) in times.iter().enumerate() {
                let d = expected_drift_error(coeff, t - last_realign(&schedule, t));
                let span = cfg.sample_interval.min(cfg.duration - t);
                let r = analytic_span(cfg, d, cfg.sample_interval)?;
                series.push(sample_of(t, &r, d, realigned_at(k)));
                if span > 0.0 {
                    let w = span / cfg.sample_interval;
                    for (c, x) in counts.iter_mut().zip(&r.per_detector_counts) {
                        *c += w * x;
                    }
                    sifted += w * r.sifted_bits;
                    errors += w * r.sifted_bits * r.qber;
                }
                (mu_tx, mu_rx) = (r.mu_tx, r.mu_rx);
            }
            finish(cfg, mu_tx, mu_rx, counts, sifted, errors, cfg.duration)?
        }
        Mode::Montecarlo => {
            let (mu_tx, mu_rx) = mu_pair(cfg)?;
            let rx = cfg.effective_receiver();
            let setup = McSetup { rx: &rx, mu_rx, flip: cfg.intrinsic_error, period: cfg.symbol_period() };
            let block = block_symbols(&rx, cfg.symbol_rate);
            let n_window = (cfg.mc_window.min(cfg.sample_interval) * cfg.symbol_rate).round().max(1.0) as u64;
            let mut drift_rng = substream(cfg.seed, streams::DRIFT);
            let base = cfg.static_rotation();
            let mut rot = base;
            let mut total = McTally { per_detector: vec![0; rx.detectors.len()], ..Default::default() };
            for (k, &t) in times.iter().enumerate() {
                if k > 0 {
                    if realigned_at(k) {
                        let r = last_realign(&schedule, t);
                        rot = base;
                        if t > r {
                            rot = drift_step(&rot, t - r, coeff, &mut drift_rng)?;
                        }
                    } else {
                        rot = drift_step(&rot, cfg.sample_interval, coeff, &mut drift_rng)?;
                    }
                }
                let stream_base = streams::WINDOW + ((k as u64) << 24);
                let tally = mc_span(&setup, cfg.seed, stream_base, n_window, block, |_| rot)?;
                let r = tally_result(cfg, mu_tx, mu_rx, &tally)?;
                let misalign = rot.compose(&base_inverse(&base)).bb84_flip_probability();
                series.push(sample_of(t, &r, misalign, realigned_at(k)));
                total = total.merge(tally);
            }
            tally_result(cfg, mu_tx, mu_rx, &total)?
        }
    };
    Ok(SessionOutput { result, series: Some(series) })
}

/// Inverse of a unitary: its conjugate transpose.
fn base_inverse(u: &PolarizationRotation) -> PolarizationRotation {
    let m = u.unitary;
    PolarizationRotation { unitary: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]] }
}

/// Raw detector events for the first `n_symbols` of a Monte Carlo session,
/// drawn from the same substreams as block 0.
pub fn session_events(cfg: &SessionConfig, n_symbols: u64) -> Result<Vec<DetectionEvent>> {
    cfg.validate()?;
    let (_, mu_rx) = mu_pair(cfg)?;
    let rx = cfg.effective_receiver();
    let setup = McSetup { rx: &rx, mu_rx, flip: cfg.intrinsic_error, period: cfg.symbol_period() };
    let mut events = Vec::new();
    mc_block(&setup, &cfg.static_rotation(), cfg.seed, 0, 0, n_symbols, Some(&mut events))?;
    Ok(events)
}

pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutput> {
    cfg.validate()?;
    if cfg.wants_series() {
        return series_session(cfg);
    }
    let result = match cfg.mode {
        Mode::Analytic => analytic_span(cfg, 0.0, cfg.duration)?,
        Mode::Montecarlo => monte_carlo_session(cfg)?,
    };
    Ok(SessionOutput { result, series: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorSpec;

    fn dark_free(rx: &mut ReceiverSpec) {
        for d in &mut rx.detectors {
            d.dark_rate = 0.0;
        }
    }

    #[test]
    fn no_darks_gives_intrinsic_error_exactly() {
        for e in [0.0, 0.013, 0.05, 0.2] {
            let mut cfg = SessionConfig { intrinsic_error: e, ..Default::default() };
            dark_free(&mut cfg.receiver);
            let r = run_session(&cfg).unwrap().result;
            assert!((r.qber - e).abs() < 1e-12, "{e} -> {}", r.qber);
        }
    }

    #[test]
    fn darks_only_give_half_error() {
        let cfg = SessionConfig {
            launch: Launch { kind: LaunchKind::ExternalLaser, external_mu: 0.0 },
            ..Default::default()
        };
        let r = run_session(&cfg).unwrap().result;
        assert!((r.qber - 0.5).abs() < 1e-12);
        assert_eq!(r.skr, 0.0);
    }

    #[test]
    fn low_rate_limit_matches_hand_formula() {
        // weak signal, no dead time: sifted ≈ ½·Σ_j p_j, errors from darks at ½
        let mut cfg = SessionConfig::default();
        for d in &mut cfg.receiver.detectors {
            d.dead_time = 0.0;
        }
        let r = run_session(&cfg).unwrap().result;
        let mu_rx = r.mu_rx;
        let t = cfg.receiver.transmission();
        let mut sig = 0.0;
        let mut dark = 0.0;
        for d in &cfg.receiver.detectors {
            sig += 0.5 * mu_rx * t * d.efficiency;
            dark += d.dark_rate * 1e-8 * cfg.receiver.gate_fraction;
        }
        let sifted = 0.5 * (sig + dark);
        let q = (0.5 * dark + cfg.intrinsic_error * sig) / (sig + dark);
        assert!((r.rkr / 1e8 - sifted).abs() / sifted < 2e-3, "{} vs {}", r.rkr / 1e8, sifted);
        assert!((r.qber - q).abs() < 1e-4, "{} vs {q}", r.qber);
    }

    #[test]
    fn capacity_is_exact_multiple() {
        let r = run_session(&SessionConfig::default()).unwrap().result;
        assert_eq!(r.aes_capacity, r.skr * 2e9);
        assert!(r.skr <= r.rkr);
    }

    #[test]
    fn four_detector_passive_counts_both_bases() {
        let mut cfg = SessionConfig::default();
        let d = cfg.receiver.detectors[0].clone();
        cfg.receiver.basis_scheme = BasisScheme::FourDetectorPassive;
        cfg.receiver.detectors = vec![d.clone(), d.clone(), d.clone(), DetectorSpec { label: "x".into(), ..d }];
        let r = run_session(&cfg).unwrap().result;
        assert_eq!(r.per_detector_counts.len(), 4);
        assert!(r.rkr > 0.0);
    }

    #[test]
    fn flip_composition() {
        assert_eq!(compose_flips(0.0, 0.1), 0.1);
        assert_eq!(compose_flips(0.1, 0.0), 0.1);
        assert!((compose_flips(0.05, 0.02) - (0.05 * 0.98 + 0.02 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(run_session(&SessionConfig { duration: 0.0, ..Default::default() }).is_err());
        assert!(run_session(&SessionConfig { intrinsic_error: 0.6, ..Default::default() }).is_err());
    }

    #[test]
    fn block_size_tracks_dead_time() {
        assert_eq!(block_symbols(&ReceiverSpec::snspd(), 1e8), 1 << 20);
        assert_eq!(block_symbols(&ReceiverSpec::ingaas_spad(), 1e8), 1 << 24);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let cfg = SessionConfig { mode: Mode::Montecarlo, duration: 5e-3, seed: 9, ..Default::default() };
        let a = run_session(&cfg).unwrap();
        let b = run_session(&cfg).unwrap();
        assert_eq!(a, b);
        let c = run_session(&SessionConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn captured_events_match_block_tally() {
        let cfg = SessionConfig { mode: Mode::Montecarlo, duration: 2e-3, seed: 3, ..Default::default() };
        let n = (cfg.duration * cfg.symbol_rate) as u64;
        let events = session_events(&cfg, n).unwrap();
        let r = run_session(&cfg).unwrap().result;
        let gated = events.iter().filter(|e| e.within_gate).count() as f64;
        assert_eq!(gated, r.per_detector_counts.iter().sum::<f64>());
    }

    #[test]
    fn series_flat_without_drift() {
        let cfg = SessionConfig { time_series: true, duration: 600.0, ..Default::default() };
        let s = run_session(&cfg).unwrap().series.unwrap();
        assert_eq!(s.len(), 11);
        assert!(s.iter().all(|x| x.qber == s[0].qber));
    }

    #[test]
    fn realign_restores_baseline() {
        let mut cfg = SessionConfig { duration: 3600.0, realign_schedule: Some(vec![1800.0]), ..Default::default() };
        cfg.link.drift_coefficient = 2.5e-5;
        let s = run_session(&cfg).unwrap().series.unwrap();
        let at = s.iter().position(|x| x.t == 1800.0).unwrap();
        assert!(s[at].realigned);
        assert_eq!(s[at].qber, s[0].qber);
        assert!(s[at - 1].qber > s[0].qber);
    }
}
