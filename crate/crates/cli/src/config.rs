//! TOML run configuration.
//!
//! Every key has a default matching the reference setup (20 stops, 400 m
//! spacing, 80-passenger buses, 20 km/h, 1500 pax/h, threshold 1.5), so an
//! empty file is a valid configuration. Unknown keys are rejected. Speeds are
//! configured in km/h and converted to m/s at this boundary.

use busline_core::domain::{LineParameters, PolicyKind, PolicySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigPolicy {
    None,
    StopSkipping,
    BusSplitting,
}

impl ConfigPolicy {
    pub fn kind(self) -> PolicyKind {
        match self {
            ConfigPolicy::None => PolicyKind::NoControl,
            ConfigPolicy::StopSkipping => PolicyKind::StopSkipping,
            ConfigPolicy::BusSplitting => PolicyKind::BusSplitting,
        }
    }
}

impl std::str::FromStr for ConfigPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ConfigPolicy::None),
            "stop-skipping" => Ok(ConfigPolicy::StopSkipping),
            "bus-splitting" => Ok(ConfigPolicy::BusSplitting),
            other => Err(format!(
                "unknown policy {other:?}; expected none, stop-skipping, or bus-splitting"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitKind {
    Visits,
    Curves,
    Metrics,
}

impl std::str::FromStr for EmitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "visits" => Ok(EmitKind::Visits),
            "curves" => Ok(EmitKind::Curves),
            "metrics" => Ok(EmitKind::Metrics),
            other => Err(format!(
                "unknown emitter {other:?}; expected visits, curves, or metrics"
            )),
        }
    }
}

fn d_stops() -> u32 {
    20
}
fn d_spacing() -> f64 {
    400.0
}
fn d_capacity() -> u32 {
    80
}
fn d_cruise_kmh() -> f64 {
    20.0
}
fn d_walk_kmh() -> f64 {
    4.5
}
fn d_stop_loss() -> f64 {
    20.0
}
fn d_board_time() -> f64 {
    4.0
}
fn d_alight_time() -> f64 {
    3.0
}
fn d_wait_weight() -> f64 {
    2.1
}
fn d_walk_weight() -> f64 {
    2.2
}
fn d_fleet_multiplier() -> f64 {
    1.5
}
fn d_demand() -> f64 {
    1500.0
}
fn d_noise_shape() -> f64 {
    2.0
}
fn d_noise_scale_fraction() -> f64 {
    0.3
}
fn d_cv() -> f64 {
    0.10
}
fn d_policy() -> ConfigPolicy {
    ConfigPolicy::None
}
fn d_eta() -> f64 {
    1.5
}
fn d_iterations() -> u32 {
    500
}
fn d_warmup() -> u32 {
    2
}
fn d_eval_duration() -> f64 {
    3600.0
}
fn d_output_dir() -> String {
    "out".to_string()
}
fn d_emit() -> Vec<EmitKind> {
    vec![EmitKind::Visits, EmitKind::Curves, EmitKind::Metrics]
}
fn d_sweep_demands() -> Vec<f64> {
    (1..=10).map(|k| f64::from(k) * 250.0).collect()
}
fn d_sweep_thresholds() -> Vec<f64> {
    vec![1.1, 1.3, 1.5, 1.7, 1.9]
}

/// Full run configuration: line parameters in configuration units plus
/// output selection and sweep grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_stops")]
    pub stops: u32,
    #[serde(default = "d_spacing")]
    pub mean_spacing_m: f64,
    #[serde(default = "d_capacity")]
    pub bus_capacity: u32,
    #[serde(default = "d_cruise_kmh")]
    pub cruise_speed_kmh: f64,
    #[serde(default = "d_walk_kmh")]
    pub walk_speed_kmh: f64,
    #[serde(default = "d_stop_loss")]
    pub fixed_stop_loss_s: f64,
    #[serde(default = "d_board_time")]
    pub board_time_s: f64,
    #[serde(default = "d_alight_time")]
    pub alight_time_s: f64,
    #[serde(default = "d_wait_weight")]
    pub wait_weight: f64,
    #[serde(default = "d_walk_weight")]
    pub walk_weight: f64,
    #[serde(default = "d_fleet_multiplier")]
    pub fleet_multiplier: f64,
    #[serde(default = "d_demand")]
    pub hourly_demand: f64,
    #[serde(default = "d_noise_shape")]
    pub noise_shape: f64,
    #[serde(default = "d_noise_scale_fraction")]
    pub noise_scale_fraction: f64,
    #[serde(default = "d_cv")]
    pub heterogeneity_cv: f64,
    #[serde(default = "d_policy")]
    pub policy: ConfigPolicy,
    #[serde(default = "d_eta")]
    pub eta: f64,
    /// Absent means: use `BUSLINE_SEED` from the environment if set,
    /// otherwise 42.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default = "d_iterations")]
    pub iterations: u32,
    #[serde(default = "d_warmup")]
    pub warmup_cycles: u32,
    #[serde(default = "d_eval_duration")]
    pub eval_duration_s: f64,
    #[serde(default)]
    pub freeze_line: bool,
    #[serde(default = "d_output_dir")]
    pub output_dir: String,
    #[serde(default = "d_emit")]
    pub emit: Vec<EmitKind>,
    #[serde(default = "d_sweep_demands")]
    pub sweep_demands: Vec<f64>,
    #[serde(default = "d_sweep_thresholds")]
    pub sweep_thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("empty config is valid")
    }
}

pub const DEFAULT_SEED: u64 = 42;

/// Parse a configuration document, applying defaults for omitted keys.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text)?;
    // Surface domain invariant violations now, naming the offending key via
    // the core validator's message.
    config.to_line_parameters(DEFAULT_SEED)?;
    Ok(config)
}

/// Serialize back to the canonical TOML form (all defaults materialized).
pub fn serialize_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

const KMH_TO_MS: f64 = 1.0 / 3.6;

impl RunConfig {
    /// Seed precedence: explicit config value, then the environment
    /// override, then the built-in default.
    pub fn resolve_seed(&self, env_seed: Option<u64>) -> u64 {
        self.master_seed.or(env_seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn to_line_parameters(&self, seed: u64) -> Result<LineParameters, ConfigError> {
        let policy = match self.policy.kind() {
            PolicyKind::NoControl => PolicySpec::no_control(),
            PolicyKind::StopSkipping => PolicySpec::stop_skipping(self.eta),
            PolicyKind::BusSplitting => PolicySpec::bus_splitting(self.eta),
        };
        let params = LineParameters {
            stop_count: self.stops,
            mean_spacing_m: self.mean_spacing_m,
            bus_capacity: self.bus_capacity,
            cruise_speed_ms: self.cruise_speed_kmh * KMH_TO_MS,
            walk_speed_ms: self.walk_speed_kmh * KMH_TO_MS,
            fixed_stop_loss_s: self.fixed_stop_loss_s,
            board_time_s: self.board_time_s,
            alight_time_s: self.alight_time_s,
            wait_weight: self.wait_weight,
            walk_weight: self.walk_weight,
            fleet_multiplier: self.fleet_multiplier,
            hourly_demand: self.hourly_demand,
            noise_shape: self.noise_shape,
            noise_scale_fraction: self.noise_scale_fraction,
            heterogeneity_cv: self.heterogeneity_cv,
            policy,
            master_seed: seed,
            iteration_count: self.iterations,
            warmup_cycles: self.warmup_cycles,
            eval_duration_s: self.eval_duration_s,
            freeze_line: self.freeze_line,
        };
        params
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(params)
    }
}
