//! Scenario sweeps. Points are independent and run in parallel; tables come
//! back in sweep order. Point `i` uses seed `session.seed + i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::plan::Channel;
use crate::error::Result;
use crate::link::{LinkSpec, LossElement};
use crate::protocol::keyrate::qber_threshold;
use crate::protocol::session::{run_session, LaunchKind, SeriesSample, SessionConfig, SessionResult};

/// QBER limit quoted for the optical-budget sweep.
pub const OB_QBER_LIMIT: f64 = 0.11;

/// `start, start+step, …` up to `stop` inclusive.
pub fn sweep_values(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// First upward crossing of `level` by `ys`, linearly interpolated in `xs`.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    xs.windows(2).zip(ys.windows(2)).find_map(|(x, y)| {
        (y[0] < level && y[1] >= level).then(|| x[0] + (level - y[0]) * (x[1] - x[0]) / (y[1] - y[0]))
    })
}

fn run_points<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n).into_par_iter().map(&f).collect()
}

fn point(base: &SessionConfig, i: usize) -> SessionConfig {
    SessionConfig { seed: base.seed.wrapping_add(i as u64), ..base.clone() }
}

/// Lab bench session with an empty link; callers add the loss elements.
pub fn lab_session(cfg: &ExperimentConfig, source: LaunchKind) -> SessionConfig {
    let mut s = cfg.session.clone();
    s.receiver = cfg.lab.receiver.clone();
    s.intrinsic_error = cfg.lab.intrinsic_error;
    s.launch.kind = source;
    s.launch.external_mu = cfg.lab.external_mu;
    s.link = LinkSpec { elements: Vec::new(), drift_coefficient: 0.0, ..cfg.session.link.clone() };
    s.realign_schedule = None;
    s.time_series = false;
    s
}

pub fn channel_session(cfg: &ExperimentConfig, channel: &Channel) -> SessionConfig {
    let c = &cfg.sweep_channel;
    let mut s = cfg.session.clone();
    s.receiver = c.receiver.clone();
    s.intrinsic_error = c.intrinsic_error;
    s.launch.kind = LaunchKind::InternalSige;
    s.filter.center_thz = channel.frequency_thz;
    s.link = LinkSpec {
        elements: vec![LossElement::fiber(c.span_km, c.attenuation_db_per_km)],
        drift_coefficient: 0.0,
        ..cfg.session.link.clone()
    };
    s.realign_schedule = None;
    s.time_series = false;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObRow {
    pub source: LaunchKind,
    pub ob_db: f64,
    pub mu_tx: f64,
    pub rkr: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    pub skr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObSweepResult {
    pub rows: Vec<ObRow>,
    /// Loss at which each source's QBER reaches [`OB_QBER_LIMIT`].
    pub crossings: Vec<(LaunchKind, Option<f64>)>,
}

impl ObSweepResult {
    pub fn crossing_for(&self, source: LaunchKind) -> Option<f64> {
        self.crossings.iter().find(|(k, _)| *k == source).and_then(|c| c.1)
    }
}

pub fn sweep_ob(cfg: &ExperimentConfig) -> Result<ObSweepResult> {
    let sw = &cfg.sweep_ob;
    let losses = sweep_values(sw.start_db, sw.stop_db, sw.step_db);
    let mut rows = Vec::new();
    let mut crossings = Vec::new();
    for (v, &source) in sw.sources.iter().enumerate() {
        let base = lab_session(cfg, source);
        let offset = v * losses.len();
        let part = run_points(losses.len(), |i| {
            let mut s = point(&base, offset + i);
            s.link.elements = vec![LossElement::Voa { loss_db: losses[i] }];
            let r = run_session(&s)?.result;
            Ok(ObRow { source, ob_db: losses[i], mu_tx: r.mu_tx, rkr: r.rkr, qber: r.qber, qber_sigma: r.qber_sigma, skr: r.skr })
        })?;
        let qs: Vec<f64> = part.iter().map(|r| r.qber).collect();
        crossings.push((source, crossing(&losses, &qs, OB_QBER_LIMIT)));
        rows.extend(part);
    }
    Ok(ObSweepResult { rows, crossings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachRow {
    pub km: f64,
    pub loss_db: f64,
    pub rkr: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    pub skr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult {
    pub rows: Vec<ReachRow>,
    /// Fiber length at which the secret fraction reaches zero.
    pub max_secure_km: Option<f64>,
}

impl ReachResult {
    pub fn max_secure_loss_db(&self, attenuation_db_per_km: f64) -> Option<f64> {
        self.max_secure_km.map(|km| km * attenuation_db_per_km)
    }
}

pub fn sweep_reach(cfg: &ExperimentConfig) -> Result<ReachResult> {
    let sw = &cfg.sweep_reach;
    let kms = sweep_values(sw.start_km, sw.stop_km, sw.step_km);
    let base = lab_session(cfg, sw.source);
    let rows = run_points(kms.len(), |i| {
        let mut s = point(&base, i);
        s.link.elements = vec![LossElement::fiber(kms[i], sw.attenuation_db_per_km)];
        let r = run_session(&s)?.result;
        Ok(ReachRow { km: kms[i], loss_db: r.link_loss_db, rkr: r.rkr, qber: r.qber, qber_sigma: r.qber_sigma, skr: r.skr })
    })?;
    let qs: Vec<f64> = rows.iter().map(|r| r.qber).collect();
    let max_secure_km = crossing(&kms, &qs, qber_threshold());
    Ok(ReachResult { rows, max_secure_km })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub channel: i32,
    pub wavelength_nm: f64,
    pub frequency_thz: f64,
    pub mu: f64,
    pub rkr: f64,
    pub qber: f64,
    pub qber_sigma: f64,
    pub skr: f64,
    pub skr_four_detector: f64,
    pub aes_capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResult {
    pub rows: Vec<ChannelRow>,
}

impl ChannelResult {
    pub fn secure_channels(&self) -> usize {
        self.rows.iter().filter(|r| r.skr > 0.0).count()
    }

    /// Channels whose four-detector SKR exceeds 1 kb/s.
    pub fn channels_above_1k(&self) -> usize {
        self.rows.iter().filter(|r| r.skr_four_detector > 1e3).count()
    }

    pub fn channel(&self, number: i32) -> Option<&ChannelRow> {
        self.rows.iter().find(|r| r.channel == number)
    }
}

pub fn sweep_channel(cfg: &ExperimentConfig) -> Result<ChannelResult> {
    let channels = cfg.sweep_channel.plan.channels()?;
    let rows = run_points(channels.len(), |i| {
        let ch = &channels[i];
        let s = point(&channel_session(cfg, ch), i);
        let r: SessionResult = run_session(&s)?.result;
        Ok(ChannelRow {
            channel: ch.number,
            wavelength_nm: ch.wavelength_nm,
            frequency_thz: ch.frequency_thz,
            mu: r.mu_tx,
            rkr: r.rkr,
            qber: r.qber,
            qber_sigma: r.qber_sigma,
            skr: r.skr,
            skr_four_detector: r.four_detector_skr(),
            aes_capacity: r.aes_capacity,
        })
    })?;
    Ok(ChannelResult { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongrunResult {
    pub series: Vec<SeriesSample>,
    pub result: SessionResult,
}

impl LongrunResult {
    /// `(max − min)/mean` of the RKR column.
    pub fn rkr_variation(&self) -> f64 {
        let r: Vec<f64> = self.series.iter().map(|s| s.rkr).collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let (lo, hi) = r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if mean > 0.0 { (hi - lo) / mean } else { 0.0 }
    }

    /// Least-squares QBER slope over the stretch before the first realign, per hour.
    pub fn qber_rise_per_hour(&self) -> f64 {
        let first_realign = self.series.iter().skip(1).position(|s| s.realigned).map(|p| p + 1);
        let stretch = &self.series[..first_realign.unwrap_or(self.series.len())];
        if stretch.len() < 2 {
            return 0.0;
        }
        let n = stretch.len() as f64;
        let mt = stretch.iter().map(|s| s.t).sum::<f64>() / n;
        let mq = stretch.iter().map(|s| s.qber).sum::<f64>() / n;
        let cov: f64 = stretch.iter().map(|s| (s.t - mt) * (s.qber - mq)).sum();
        let var: f64 = stretch.iter().map(|s| (s.t - mt).powi(2)).sum();
        3600.0 * cov / var
    }
}

pub fn longrun_session(cfg: &ExperimentConfig) -> SessionConfig {
    let l = &cfg.longrun;
    let mut s = cfg.session.clone();
    s.duration = l.duration;
    s.sample_interval = l.sample_interval;
    s.mc_window = l.mc_window;
    s.link.drift_coefficient = l.drift_coefficient;
    s.time_series = true;
    s.realign_schedule = (!l.realign_schedule.is_empty()).then(|| l.realign_schedule.clone());
    s
}

pub fn longrun(cfg: &ExperimentConfig) -> Result<LongrunResult> {
    let out = run_session(&longrun_session(cfg))?;
    Ok(LongrunResult { series: out.series.unwrap_or_default(), result: out.result })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_inclusive() {
        assert_eq!(sweep_values(0.0, 1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(sweep_values(2.0, 2.0, 1.0), vec![2.0]);
    }

    #[test]
    fn crossing_interpolates() {
        let x = [0.0, 1.0, 2.0];
        let y = [0.05, 0.09, 0.13];
        assert!((crossing(&x, &y, 0.11).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(crossing(&x, &y, 0.2), None);
    }

    #[test]
    fn ob_qber_non_decreasing() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep_ob.step_db = 1.0;
        let r = sweep_ob(&cfg).unwrap();
        for src in &cfg.sweep_ob.sources {
            let q: Vec<f64> = r.rows.iter().filter(|x| x.source == *src).map(|x| x.qber).collect();
            assert!(q.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        }
    }

    #[test]
    fn zero_km_matches_zero_db() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep_ob.sources = vec![LaunchKind::InternalSige];
        cfg.sweep_ob.stop_db = 1.0;
        cfg.sweep_reach.stop_km = 1.0;
        let ob = sweep_ob(&cfg).unwrap();
        let reach = sweep_reach(&cfg).unwrap();
        let (a, b) = (&ob.rows[0], &reach.rows[0]);
        assert_eq!((a.rkr, a.qber, a.skr), (b.rkr, b.qber, b.skr));
    }
}
