//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Energies are given in mJ.
//! List-valued keys (`policy`, `profile`, `capacitance_farads`) take comma-
//! or space-separated values and expand into a sweep.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::harness::{RunConfig, SweepConfig};
use crate::policies::PolicyKind;
use crate::trace::Profile;

pub const KEYS: &[&str] = &[
    "policy",
    "profile",
    "capacitance_farads",
    "days",
    "eval_days",
    "seed",
    "updates_per_day",
    "t_ann_steps",
    "supply_voltage",
    "e_m_mj",
    "e_ann_mj",
    "e_tr_min_mj",
    "e_tr_max_mj",
    "eta",
    "step_seconds",
    "initial_charge_frac",
    "buffer_len",
    "batch_size",
    "gamma",
    "target_sync_period",
    "eps_start",
    "eps_end",
    "eps_decay_steps",
    "learning_rate",
    "memory_capacity",
    "dropout",
    "aoi_scale",
    "tx_bonus_slope",
    "aoi_knee",
    "tx_base",
    "energy_penalty",
    "energy_threshold_frac",
    "daylight_hours",
    "noise_frac",
    "trace",
    "lux_coeff",
    "out",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key '{key}'")]
    UnknownKey { key: String },
    #[error("bad value for '{key}': {msg}")]
    Value { key: String, msg: String },
}

/// Accumulates settings from a file and then command-line overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    pub sweep: SweepConfig,
    updates_per_day: Option<u8>,
}

impl Default for Settings {
    fn default() -> Self {
        let base = RunConfig::default();
        Self {
            sweep: SweepConfig {
                policies: vec![base.policy],
                profiles: vec![base.profile],
                capacitances: vec![base.energy.capacitance_farads],
                base,
            },
            updates_per_day: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    v.trim().parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        msg: format!("'{}': {e}", v.trim()),
    })
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: Display,
{
    let items = v
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::Value { key: key.into(), msg: "empty list".into() });
    }
    Ok(items)
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut s = Self::default();
        s.load_file(path)?;
        Ok(s)
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.load_str(&text)
    }

    pub fn load_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let sw = &mut self.sweep;
        let b = &mut sw.base;
        let mj = |v: &str| parse::<f64>(key, v).map(|x| x * 1e-3);
        match key {
            "policy" => sw.policies = parse_list::<PolicyKind>(key, v)?,
            "profile" => sw.profiles = parse_list::<Profile>(key, v)?,
            "capacitance_farads" => sw.capacitances = parse_list(key, v)?,
            "days" => b.days = parse(key, v)?,
            "eval_days" => b.eval_days = parse(key, v)?,
            "seed" => b.seed = parse(key, v)?,
            "updates_per_day" => {
                let n: u8 = parse(key, v)?;
                if !(1..=3).contains(&n) {
                    return Err(ConfigError::Value { key: key.into(), msg: format!("{n} is not 1, 2 or 3") });
                }
                self.updates_per_day = Some(n);
            }
            "t_ann_steps" => b.t_ann_steps = Some(parse(key, v)?),
            "supply_voltage" => b.energy.supply_voltage = parse(key, v)?,
            "e_m_mj" => b.energy.e_m = mj(v)?,
            "e_ann_mj" => b.energy.e_ann = mj(v)?,
            "e_tr_min_mj" => b.energy.e_tr_min = mj(v)?,
            "e_tr_max_mj" => b.energy.e_tr_max = mj(v)?,
            "eta" => b.energy.eta = parse(key, v)?,
            "step_seconds" => b.energy.step_seconds = parse(key, v)?,
            "initial_charge_frac" => b.energy.initial_charge_frac = parse(key, v)?,
            "buffer_len" => b.energy.buffer_len = parse(key, v)?,
            "batch_size" => b.dqn.batch_size = parse(key, v)?,
            "gamma" => b.dqn.gamma = parse(key, v)?,
            "target_sync_period" => b.dqn.target_sync_period = parse(key, v)?,
            "eps_start" => b.dqn.eps_start = parse(key, v)?,
            "eps_end" => b.dqn.eps_end = parse(key, v)?,
            "eps_decay_steps" => b.dqn.eps_decay_steps = parse(key, v)?,
            "learning_rate" => b.dqn.learning_rate = parse(key, v)?,
            "memory_capacity" => b.dqn.memory_capacity = parse(key, v)?,
            "dropout" => b.dropout = parse(key, v)?,
            "aoi_scale" => b.rewards.aoi_scale = parse(key, v)?,
            "tx_bonus_slope" => b.rewards.tx_bonus_slope = parse(key, v)?,
            "aoi_knee" => b.rewards.aoi_knee = parse(key, v)?,
            "tx_base" => b.rewards.tx_base = parse(key, v)?,
            "energy_penalty" => b.rewards.energy_penalty = parse(key, v)?,
            "energy_threshold_frac" => b.rewards.energy_threshold_frac = parse(key, v)?,
            "daylight_hours" => b.synth.daylight_hours = parse(key, v)?,
            "noise_frac" => b.synth.noise_frac = parse(key, v)?,
            "trace" => b.trace_path = Some(PathBuf::from(v)),
            "lux_coeff" => b.lux_coeff = Some(parse(key, v)?),
            "out" => b.out_dir = Some(PathBuf::from(v)),
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// The sweep with any `updates_per_day` applied to split policies.
    pub fn finish(mut self) -> SweepConfig {
        if let Some(n) = self.updates_per_day {
            for p in &mut self.sweep.policies {
                *p = p.with_updates_per_day(n);
            }
        }
        self.sweep.base.policy = self.sweep.policies[0];
        self.sweep.base.profile = self.sweep.profiles[0];
        self.sweep.base.energy.capacitance_farads = self.sweep.capacitances[0];
        self.sweep
    }
}
