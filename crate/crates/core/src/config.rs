//! Run configuration: TOML files (or bundled presets), dotted `--set`
//! overrides and cross-field validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, DEFAULT_VELOCITY_WINDOW_US};
use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::frontend::{check_anti_folding, ReceiverConfig};
use crate::keyrate::KeyrateInput;
use crate::planner::{distance_grid, paper_reach_targets, ReachTarget, ScenarioPair};
use crate::transmitter::TxConfig;

/// Bundled presets, addressable as `builtin:NAME`.
pub const BUILTIN_CONFIGS: [(&str, &str); 4] = [
    ("paper_heterodyne", include_str!("../configs/paper_heterodyne.toml")),
    ("paper_intradyne", include_str!("../configs/paper_intradyne.toml")),
    (
        "paper_plan_untrusted",
        include_str!("../configs/paper_plan_untrusted.toml"),
    ),
    ("paper_plan_trusted", include_str!("../configs/paper_plan_trusted.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; per-frame stream seeds are derived from it.
    pub seed: u64,
    pub tx: TxConfig,
    pub channel: ChannelConfig,
    pub receiver: ReceiverConfig,
    pub dsp: DspConfig,
    pub keyrate: KeyrateOverrides,
    pub planner: PlannerConfig,
    pub simulation: SimulationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            tx: TxConfig::default(),
            channel: ChannelConfig::default(),
            receiver: ReceiverConfig::heterodyne(),
            dsp: DspConfig::default(),
            keyrate: KeyrateOverrides::default(),
            planner: PlannerConfig::default(),
            simulation: SimulationConfig::default(),
            calibration: None,
            output: OutputConfig::default(),
        }
    }
}

/// Values that replace the estimate-derived key-rate inputs of `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyrateOverrides {
    pub beta_rec: f64,
    pub trusted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mod_snu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_det: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol_rate_baud: Option<f64>,
}

impl Default for KeyrateOverrides {
    fn default() -> Self {
        Self {
            beta_rec: 0.97,
            trusted: false,
            v_mod_snu: None,
            eta_det: None,
            symbol_rate_baud: None,
        }
    }
}

impl KeyrateOverrides {
    pub fn apply(&self, mut k: KeyrateInput) -> KeyrateInput {
        k.beta_rec = self.beta_rec;
        k.trusted = self.trusted;
        if let Some(v) = self.v_mod_snu {
            k.v_mod_snu = v;
        }
        if let Some(v) = self.eta_det {
            k.eta_det = v;
        }
        if let Some(v) = self.symbol_rate_baud {
            k.symbol_rate_baud = v;
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub scenario: ScenarioPair,
    pub grid: GridConfig,
    pub rate_targets_bps: Vec<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioPair::default(),
            grid: GridConfig::default(),
            rate_targets_bps: vec![1e6, 1e7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub start_km: f64,
    pub stop_km: f64,
    pub step_km: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            start_km: 0.0,
            stop_km: 60.0,
            step_km: 0.1,
        }
    }
}

impl GridConfig {
    pub fn distances(&self) -> Result<Vec<f64>> {
        distance_grid(self.start_km, self.stop_km, self.step_km)
            .map_err(|e| Error::Config(format!("planner.grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub frames: usize,
    pub symbols_per_frame: usize,
    /// Frames of vacuum and dark records used for shot-noise calibration.
    pub calibration_frames: usize,
    /// Symbols dropped at each frame edge (filter transients).
    pub guard_symbols: usize,
    pub psd: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            frames: 10,
            symbols_per_frame: 100_000,
            calibration_frames: 2,
            guard_symbols: 64,
            psd: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub targets: Vec<ReachTarget>,
    pub eta_min: f64,
    pub eta_max: f64,
    pub phase_velocity_target_rad_per_us: f64,
    pub velocity_window_us: f64,
    pub trace_duration_s: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            targets: paper_reach_targets(),
            eta_min: 0.4,
            eta_max: 0.95,
            phase_velocity_target_rad_per_us: 35.0,
            velocity_window_us: DEFAULT_VELOCITY_WINDOW_US,
            trace_duration_s: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Accepted spellings that map onto a canonical dotted key.
const KEY_ALIASES: [(&str, &str); 1] = [("channel.alpha", "channel.alpha_db_per_km")];

impl RunConfig {
    /// Load from `builtin:NAME` or a file path, then apply `KEY=VALUE`
    /// overrides and validate.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self> {
        let text = match source.strip_prefix("builtin:") {
            Some(name) => builtin(name)?.to_string(),
            None => std::fs::read_to_string(Path::new(source))
                .map_err(|e| Error::Config(format!("cannot read {source}: {e}")))?,
        };
        Self::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    /// Field checks of every section plus the cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.tx.samples_per_symbol()?;
        self.channel.validate()?;
        self.receiver.validate()?;
        self.dsp.validate()?;
        if (self.dsp.matched_filter_rolloff - self.tx.pulse_rolloff).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "dsp.matched_filter_rolloff {} must equal tx.pulse_rolloff {}",
                self.dsp.matched_filter_rolloff, self.tx.pulse_rolloff
            )));
        }
        check_anti_folding(&self.receiver, &self.tx)?;
        let nyquist = self.tx.sample_rate_hz / 2.0;
        let pilot_line = (self.tx.pilot_freq_hz - self.receiver.lo_detuning_hz).abs();
        if pilot_line + self.tx.symbol_rate_baud >= nyquist || self.receiver.lo_detuning_hz >= nyquist {
            return Err(Error::Config(format!(
                "pilot beat at {pilot_line} Hz or IF {} Hz too close to Nyquist {nyquist} Hz",
                self.receiver.lo_detuning_hz
            )));
        }
        self.planner.scenario.validate()?;
        self.planner.grid.distances()?;
        if self.planner.rate_targets_bps.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("planner.rate_targets_bps must be positive".into()));
        }
        let k = &self.keyrate;
        if !(k.beta_rec > 0.0 && k.beta_rec <= 1.0) {
            return Err(Error::Config(format!(
                "keyrate.beta_rec must lie in (0, 1], got {}",
                k.beta_rec
            )));
        }
        let s = &self.simulation;
        if s.frames == 0 || s.calibration_frames == 0 {
            return Err(Error::Config(
                "simulation.frames and simulation.calibration_frames must be ≥ 1".into(),
            ));
        }
        if s.symbols_per_frame <= 2 * s.guard_symbols {
            return Err(Error::Config(
                "simulation.symbols_per_frame must exceed twice guard_symbols".into(),
            ));
        }
        if let Some(c) = &self.calibration {
            if c.targets.is_empty() {
                return Err(Error::Config("calibration.targets is empty".into()));
            }
            if !(c.eta_min > 0.0 && c.eta_max <= 1.0 && c.eta_min < c.eta_max) {
                return Err(Error::Config(
                    "calibration eta range must satisfy 0 < eta_min < eta_max ≤ 1".into(),
                ));
            }
            if c.targets.iter().any(|t| !(t.rate_bps > 0.0 && t.distance_km > 0.0)) {
                return Err(Error::Config(
                    "calibration targets need positive rate and distance".into(),
                ));
            }
            if !(c.phase_velocity_target_rad_per_us > 0.0 && c.velocity_window_us > 0.0 && c.trace_duration_s > 0.0) {
                return Err(Error::Config(
                    "calibration phase-velocity settings must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn builtin(name: &str) -> Result<&'static str> {
    BUILTIN_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = BUILTIN_CONFIGS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!(
                "unknown builtin config '{name}' (available: {})",
                names.join(", ")
            ))
        })
}

/// Set a dotted key. The value is read as a TOML literal, falling back to a
/// bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    let key = key.trim();
    let key = KEY_ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, c)| *c);
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
