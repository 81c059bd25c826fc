//! Experiment configuration: one TOML tree holding every physical parameter.
//!
//! The top-level `[session]` table is the field-link deployment and the base
//! for every scenario. Scenario tables override only what differs (receiver,
//! link, intrinsic error, sweep ranges). `key.path=value` overrides are
//! applied on the raw tree before deserialization, so any field is reachable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use super::plan::ChannelPlan;
use crate::detection::ReceiverSpec;
use crate::error::{Error, Result};
use crate::link::LAB_FIBER_DB_PER_KM;
use crate::protocol::session::{LaunchKind, SessionConfig};

/// Lab receiver QBER floor fitted to the 0 dB external-laser point.
pub const DEFAULT_LAB_INTRINSIC_ERROR: f64 = 0.06321978651231319;
/// Receiver insertion loss fitted to the channel-34 anchor of the WDM run.
pub const DEFAULT_CHANNEL_INSERTION_LOSS_DB: f64 = 10.305793087690631;
pub const DEFAULT_CHANNEL_INTRINSIC_ERROR: f64 = 0.07455893683444259;

/// Lab bench: attenuated external laser or on-chip source into InGaAs SPADs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabScenario {
    pub receiver: ReceiverSpec,
    pub intrinsic_error: f64,
    pub external_mu: f64,
}

impl Default for LabScenario {
    fn default() -> Self {
        Self { receiver: ReceiverSpec::ingaas_spad(), intrinsic_error: DEFAULT_LAB_INTRINSIC_ERROR, external_mu: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObSweep {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
    pub sources: Vec<LaunchKind>,
}

impl Default for ObSweep {
    fn default() -> Self {
        Self {
            start_db: 0.0,
            stop_db: 30.0,
            step_db: 0.25,
            sources: vec![LaunchKind::ExternalLaser, LaunchKind::InternalSige],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachSweep {
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
    pub attenuation_db_per_km: f64,
    pub source: LaunchKind,
}

impl Default for ReachSweep {
    fn default() -> Self {
        Self {
            start_km: 0.0,
            stop_km: 80.0,
            step_km: 0.5,
            attenuation_db_per_km: LAB_FIBER_DB_PER_KM,
            source: LaunchKind::InternalSige,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSweep {
    pub plan: ChannelPlan,
    pub span_km: f64,
    pub attenuation_db_per_km: f64,
    pub receiver: ReceiverSpec,
    pub intrinsic_error: f64,
}

impl Default for ChannelSweep {
    fn default() -> Self {
        let mut receiver = ReceiverSpec::ingaas_spad();
        receiver.insertion_loss_db = DEFAULT_CHANNEL_INSERTION_LOSS_DB;
        Self {
            plan: ChannelPlan::default(),
            span_km: 4.3,
            attenuation_db_per_km: LAB_FIBER_DB_PER_KM,
            receiver,
            intrinsic_error: DEFAULT_CHANNEL_INTRINSIC_ERROR,
        }
    }
}

/// Drift rate giving roughly a 1.5-point QBER rise per hour.
pub const DEFAULT_DRIFT_COEFFICIENT: f64 = 2.5e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongrunScenario {
    pub duration: f64,
    pub sample_interval: f64,
    pub drift_coefficient: f64,
    pub realign_schedule: Vec<f64>,
    pub mc_window: f64,
}

impl Default for LongrunScenario {
    fn default() -> Self {
        Self {
            duration: 3600.0,
            sample_interval: 60.0,
            drift_coefficient: DEFAULT_DRIFT_COEFFICIENT,
            realign_schedule: vec![1800.0],
            mc_window: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateScenario {
    pub trials: usize,
    /// Relative 1σ photocurrent noise.
    pub noise: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    pub scan_points: usize,
}

impl Default for CalibrateScenario {
    fn default() -> Self {
        Self { trials: 100, noise: 0.01, tolerance: 1e-6, max_iter: 200, scan_points: 16 }
    }
}

/// Measured anchors the fitting helpers solve against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitTargets {
    pub mu: f64,
    pub lab_rkr: f64,
    pub lab_qber: f64,
    pub field_rkr: f64,
    pub field_qber: f64,
    pub channel_rkr: f64,
    pub channel_qber: f64,
    pub channels_secure: u32,
    pub channels_above_1k: u32,
    pub fwhm_min_thz: f64,
    pub fwhm_max_thz: f64,
    pub fwhm_step_thz: f64,
}

impl Default for FitTargets {
    fn default() -> Self {
        Self {
            mu: 0.015,
            lab_rkr: 51.2e3,
            lab_qber: 0.0638,
            field_rkr: 1.55e3,
            field_qber: 0.0505,
            channel_rkr: 4.2e3,
            channel_qber: 0.0881,
            channels_secure: 32,
            channels_above_1k: 11,
            fwhm_min_thz: 1.0,
            fwhm_max_thz: 12.0,
            fwhm_step_thz: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub session: SessionConfig,
    pub lab: LabScenario,
    pub sweep_ob: ObSweep,
    pub sweep_reach: ReachSweep,
    pub sweep_channel: ChannelSweep,
    pub longrun: LongrunScenario,
    pub calibrate: CalibrateScenario,
    pub fit: FitTargets,
}

fn check_range(name: &str, start: f64, stop: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::config(format!("{name}: need step > 0 and stop >= start")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        self.lab.receiver.validate()?;
        self.sweep_channel.receiver.validate()?;
        check_range("sweep_ob", self.sweep_ob.start_db, self.sweep_ob.stop_db, self.sweep_ob.step_db)?;
        check_range("sweep_reach", self.sweep_reach.start_km, self.sweep_reach.stop_km, self.sweep_reach.step_km)?;
        if self.sweep_ob.start_db < 0.0 || self.sweep_reach.start_km < 0.0 {
            return Err(Error::config("sweep ranges must start at >= 0"));
        }
        if self.sweep_ob.sources.is_empty() {
            return Err(Error::config("sweep_ob.sources must not be empty"));
        }
        self.sweep_channel.plan.validate()?;
        if !(0.0..=0.5).contains(&self.lab.intrinsic_error) || !(0.0..=0.5).contains(&self.sweep_channel.intrinsic_error) {
            return Err(Error::config("intrinsic_error must lie in [0, 0.5]"));
        }
        if !(self.longrun.duration > 0.0) || !(self.longrun.sample_interval > 0.0) {
            return Err(Error::config("longrun needs duration > 0 and sample_interval > 0"));
        }
        check_range("fit fwhm", self.fit.fwhm_min_thz, self.fit.fwhm_max_thz, self.fit.fwhm_step_thz)?;
        Ok(())
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: Value = text
            .parse::<toml::Table>()
            .map(Value::Table)
            .map_err(|e| Error::config(format!("TOML parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ExperimentConfig =
            tree.try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("reading {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// and falls back to a bare string.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{spec}` is not key=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::config(format!("override `{spec}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut node = tree;
    let keys: Vec<&str> = path.split('.').collect();
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{path}`: `{key}` is not inside a table")))?;
        node = table.entry(key.to_string()).or_insert_with(|| Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::config(format!("override `{path}`: parent is not a table")))?;
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::session::Mode;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = ExperimentConfig::from_toml_str(
            "",
            &[
                "session.mode=\"montecarlo\"".into(),
                "session.duration=2.5".into(),
                "sweep_ob.step_db=1".into(),
                "session.receiver.insertion_loss_db=3.0".into(),
                "sweep_ob.sources=[\"external_laser\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.session.mode, Mode::Montecarlo);
        assert_eq!(cfg.session.duration, 2.5);
        assert_eq!(cfg.sweep_ob.step_db, 1.0);
        assert_eq!(cfg.session.receiver.insertion_loss_db, 3.0);
        assert_eq!(cfg.sweep_ob.sources, vec![LaunchKind::ExternalLaser]);
    }

    #[test]
    fn bare_strings_are_accepted() {
        let cfg = ExperimentConfig::from_toml_str("", &["session.mode=analytic".into()]).unwrap();
        assert_eq!(cfg.session.mode, Mode::Analytic);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for bad in ["nokey", "=3", "session..x=1", "session.nonexistent=1", "sweep_ob.step_db=0"] {
            let r = ExperimentConfig::from_toml_str("", &[bad.into()]);
            assert!(matches!(r, Err(Error::Config(_))), "{bad}: {r:?}");
        }
        assert!(matches!(ExperimentConfig::from_toml_str("[[[", &[]), Err(Error::Config(_))));
    }
}
