//! Seeded end-to-end runs: trace, device, sink and policy in one loop, with
//! per-step CSV, a JSON summary, and parallel sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::aoi::AoiError;
use crate::device::{update_period_steps, DecisionRule, DeviceState, DeviceStepOutcome, StatusUpdate, SyncMode};
use crate::dqn::{DqnConfig, ReplayMemory};
use crate::energy::EnergyConfig;
use crate::nn::{NnError, QNetwork, DEFAULT_DROPOUT, DEFAULT_LAYER_DIMS};
use crate::policies::{ideal_uniform_schedule, PolicyKind};
use crate::sink::{reward, RewardParams, SinkError, SinkState};
use crate::trace::{load_trace, synth_trace, HarvestTrace, Profile, SynthParams, TraceError};

const MAX_LEDGER_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub policy: PolicyKind,
    pub profile: Profile,
    /// Total days simulated, training and evaluation together.
    pub days: usize,
    /// Trailing days run with training frozen and ε at its floor.
    pub eval_days: usize,
    pub seed: u64,
    /// Overrides the install period derived from the update frequency.
    pub t_ann_steps: Option<u64>,
    pub energy: EnergyConfig,
    pub dqn: DqnConfig,
    pub rewards: RewardParams,
    pub synth: SynthParams,
    pub dropout: f64,
    pub trace_path: Option<PathBuf>,
    pub lux_coeff: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::SplitDrl { updates_per_day: 1 },
            profile: Profile::Medium,
            days: 17,
            eval_days: 7,
            seed: 0,
            t_ann_steps: None,
            energy: EnergyConfig::default(),
            dqn: DqnConfig::default(),
            rewards: RewardParams::default(),
            synth: SynthParams::default(),
            dropout: DEFAULT_DROPOUT,
            trace_path: None,
            lux_coeff: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let invalid = |m: String| Err(RunError::Config(m));
        if self.days == 0 {
            return invalid("days must be at least 1".into());
        }
        if let PolicyKind::SplitDrl { updates_per_day } = self.policy {
            if update_period_steps(updates_per_day).is_none() {
                return invalid(format!("updates_per_day must be 1, 2 or 3, got {updates_per_day}"));
            }
        }
        if self.t_ann_steps == Some(0) {
            return invalid("t_ann_steps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.synth.noise_frac) || !(self.synth.daylight_hours > 0.0) {
            return invalid("synthetic trace parameters out of range".into());
        }
        self.energy.validate().map_err(RunError::Config)?;
        self.dqn.validate().map_err(RunError::Config)
    }

    /// Steps of the training phase; the rest of the run is evaluation.
    pub fn train_steps(&self) -> usize {
        let per_day = self.energy.steps_per_day();
        if self.days > self.eval_days {
            (self.days - self.eval_days) * per_day
        } else {
            self.days * per_day
        }
    }

    fn sync_mode(&self) -> SyncMode {
        match self.policy {
            PolicyKind::SplitDrl { updates_per_day } => SyncMode::Gated {
                t_ann: self
                    .t_ann_steps
                    .or_else(|| update_period_steps(updates_per_day))
                    .expect("validated update frequency"),
            },
            PolicyKind::UnconstrainedDrl => SyncMode::Free,
            PolicyKind::Threshold | PolicyKind::IdealUniform => SyncMode::Disabled,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace has {have} steps but the run needs {need}")]
    TraceTooShort { have: usize, need: usize },
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error(transparent)]
    Aoi(#[from] AoiError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("energy ledger residual {0:e} J exceeds tolerance")]
    EnergyLedger(f64),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of `timeseries.csv`. Empty fields mean the device slept or no
/// training step ran.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub step: u64,
    pub energy_j: f64,
    pub i_eh_a: f64,
    pub aoi_min: f64,
    pub action: Option<u8>,
    pub tx_success: u8,
    pub reward: Option<f64>,
    pub loss: Option<f64>,
    pub weight_install: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub profile: String,
    pub capacitance_farads: f64,
    pub seed: u64,
    pub days: usize,
    pub eval_days: usize,
    /// Mean AoI of every simulated day, in minutes.
    pub daily_avg_aoi_min: Vec<f64>,
    pub avg_aoi_min: f64,
    pub peak_aoi_min: f64,
    pub downtime_hours: f64,
    pub tx_per_day: f64,
    pub tx_success_per_day: f64,
    pub installs_per_day: f64,
    pub final_energy_j: f64,
    pub ledger_residual_j: f64,
    pub train_steps: u64,
    pub target_syncs: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<StepRow>,
    pub summary: RunSummary,
    /// Every status update that reached the sink, in delivery order.
    pub deliveries: Vec<StatusUpdate>,
    pub installs: Vec<u64>,
    /// The sink's replay memory at the end of the run.
    pub memory: ReplayMemory,
}

/// Decorrelated seed for an independent random stream of a run.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRACE_STREAM: u64 = 1;
const DEVICE_STREAM: u64 = 2;
const SINK_STREAM: u64 = 3;

/// The trace a config runs on: the file if given, else the synthetic profile.
pub fn build_trace(cfg: &RunConfig) -> Result<HarvestTrace, RunError> {
    let need = cfg.days * cfg.energy.steps_per_day();
    let trace = match &cfg.trace_path {
        Some(path) => load_trace(path, cfg.lux_coeff)?,
        None => synth_trace(cfg.profile, cfg.days, stream_seed(cfg.seed, TRACE_STREAM), &cfg.synth, &cfg.energy),
    };
    if trace.len() < need {
        return Err(RunError::TraceTooShort { have: trace.len(), need });
    }
    Ok(trace)
}

/// Runs `cfg` and writes its outputs when `out_dir` is set.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let trace = build_trace(cfg)?;
    let out = simulate(cfg, &trace)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out.summary)
}

pub fn simulate(cfg: &RunConfig, trace: &HarvestTrace) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let per_day = cfg.energy.steps_per_day();
    let horizon = cfg.days * per_day;
    if trace.len() < horizon {
        return Err(RunError::TraceTooShort { have: trace.len(), need: horizon });
    }
    let train_until = cfg.train_steps() as u64;
    let learning = cfg.policy.is_learning();
    let device_seed = stream_seed(cfg.seed, DEVICE_STREAM);

    let net = QNetwork::new(&DEFAULT_LAYER_DIMS, cfg.dropout, cfg.seed)?;
    let rule = match cfg.policy {
        PolicyKind::SplitDrl { .. } | PolicyKind::UnconstrainedDrl => DecisionRule::EpsilonGreedy,
        PolicyKind::Threshold => DecisionRule::Threshold,
        PolicyKind::IdealUniform => DecisionRule::Schedule(ideal_uniform_schedule(trace, &cfg.energy, device_seed)),
    };
    let mut device = DeviceState::new(cfg.energy.clone(), net.clone(), cfg.sync_mode(), rule);
    let mut sink = SinkState::new(
        net,
        cfg.dqn.clone(),
        cfg.rewards.clone(),
        cfg.energy.capacity_joules(),
        cfg.energy.buffer_len,
        stream_seed(cfg.seed, SINK_STREAM),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(device_seed);
    let capacity = cfg.energy.capacity_joules();
    let minutes = cfg.energy.step_seconds / 60.0;

    let mut rows = Vec::with_capacity(horizon);
    let mut deliveries = Vec::new();
    let mut attempts = vec![false; horizon];
    let mut successes = vec![false; horizon];

    for t in 1..=horizon as u64 {
        let training = t <= train_until;
        sink.set_training(learning && training);
        sink.begin_step(t)?;
        let epsilon = if training { cfg.dqn.epsilon(t - 1) } else { cfg.dqn.eps_end };
        let current = trace.current(t as usize - 1);
        let downlink = learning.then(|| sink.published().clone());
        let out = device.step(t, current, epsilon, &mut rng, downlink.as_ref());

        let mut row = StepRow {
            step: t,
            energy_j: 0.0,
            i_eh_a: current,
            aoi_min: 0.0,
            action: None,
            tx_success: 0,
            reward: None,
            loss: None,
            weight_install: 0,
        };
        if let DeviceStepOutcome::Acted(a) = &out {
            debug_assert_eq!(a.state[1], sink.aoi().age() as f64, "device and sink ages diverged at {t}");
            let day_mean = sink.aoi().day_mean_at(t).unwrap_or(0.0);
            row.action = Some(a.action.index() as u8);
            row.tx_success = a.tx_succeeded as u8;
            row.reward = Some(reward(a.action, day_mean, a.state[0], capacity, &cfg.rewards));
            row.weight_install = a.weights_updated as u8;
            attempts[t as usize - 1] = a.tx_attempted;
            successes[t as usize - 1] = a.tx_succeeded;
            if let Some(update) = &a.update {
                sink.ingest_update(&update.records, t)?;
                deliveries.push(update.clone());
            }
        }
        sink.note_downtime(out.insufficient());
        if learning {
            row.loss = sink.sink_step()?.loss;
        }
        row.energy_j = device.energy().stored();
        row.aoi_min = sink.aoi().age() as f64 * minutes;
        rows.push(row);
    }

    let residual = device.energy().ledger_residual();
    if residual.abs() > MAX_LEDGER_RESIDUAL {
        return Err(RunError::EnergyLedger(residual));
    }

    // Summary window: the evaluation phase, or the whole run without one.
    let (from, to) = if (train_until as usize) < horizon {
        (train_until as usize + 1, horizon)
    } else {
        (1, horizon)
    };
    let window_days = (to - from + 1) as f64 / per_day as f64;
    let aoi = sink.aoi();
    let daily_avg_aoi_min = (0..cfg.days)
        .map(|d| aoi.average_over(d * per_day + 1, (d + 1) * per_day).map(|v| v * minutes))
        .collect::<Result<Vec<_>, _>>()?;
    let peak_steps = aoi
        .peak_over(from as u64, to as u64)
        .unwrap_or_else(|| aoi.samples()[from - 1..to].iter().copied().max().unwrap_or(0) as f64);
    let downtime = aoi.downtime_flags()[from - 1..to].iter().filter(|d| **d).count();
    let count = |flags: &[bool]| flags[from - 1..to].iter().filter(|f| **f).count() as f64 / window_days;
    let installs_in_window = device
        .installs()
        .iter()
        .filter(|s| (from as u64..=to as u64).contains(s))
        .count();

    let summary = RunSummary {
        policy: cfg.policy,
        profile: if cfg.trace_path.is_some() { "trace".into() } else { cfg.profile.to_string() },
        capacitance_farads: cfg.energy.capacitance_farads,
        seed: cfg.seed,
        days: cfg.days,
        eval_days: horizon.saturating_sub(train_until as usize) / per_day,
        daily_avg_aoi_min,
        avg_aoi_min: aoi.average_over(from, to)? * minutes,
        peak_aoi_min: peak_steps * minutes,
        downtime_hours: downtime as f64 * cfg.energy.step_seconds / 3600.0,
        tx_per_day: count(&attempts),
        tx_success_per_day: count(&successes),
        installs_per_day: installs_in_window as f64 / window_days,
        final_energy_j: device.energy().stored(),
        ledger_residual_j: residual,
        train_steps: sink.train_steps(),
        target_syncs: sink.target_syncs(),
    };
    Ok(RunOutput {
        rows,
        summary,
        deliveries,
        installs: device.installs().to_vec(),
        memory: sink.into_memory(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Output { path: path.display().to_string(), source }
}

/// Writes `timeseries.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ts = dir.join("timeseries.csv");
    let file = fs::File::create(&ts).map_err(io_err(&ts))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for row in &out.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(&ts))?;
    let js = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    fs::write(&js, text + "\n").map_err(io_err(&js))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub policies: Vec<PolicyKind>,
    pub profiles: Vec<Profile>,
    pub capacitances: Vec<f64>,
}

impl SweepConfig {
    /// One config per (policy, profile, capacitance), policy-major.
    pub fn runs(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(self.policies.len() * self.profiles.len() * self.capacitances.len());
        for &policy in &self.policies {
            for &profile in &self.profiles {
                for &c in &self.capacitances {
                    let mut cfg = self.base.clone();
                    cfg.policy = policy;
                    cfg.profile = profile;
                    cfg.energy.capacitance_farads = c;
                    out.push(cfg);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.policies.is_empty() || self.profiles.is_empty() || self.capacitances.is_empty() {
            return Err(RunError::Config("sweep needs at least one policy, profile and capacitance".into()));
        }
        if let Some(c) = self.capacitances.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(RunError::Config(format!("capacitance must be positive, got {c}")));
        }
        self.runs().iter().try_for_each(RunConfig::validate)
    }
}

/// A row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub policy: String,
    pub profile: String,
    pub capacitance_farads: f64,
    pub seed: u64,
    pub avg_aoi_min: f64,
    pub peak_aoi_min: f64,
    pub downtime_hours: f64,
    pub tx_per_day: f64,
    pub installs_per_day: f64,
    pub final_energy_j: f64,
}

impl From<&RunSummary> for SweepRow {
    fn from(s: &RunSummary) -> Self {
        Self {
            policy: s.policy.to_string(),
            profile: s.profile.clone(),
            capacitance_farads: s.capacitance_farads,
            seed: s.seed,
            avg_aoi_min: s.avg_aoi_min,
            peak_aoi_min: s.peak_aoi_min,
            downtime_hours: s.downtime_hours,
            tx_per_day: s.tx_per_day,
            installs_per_day: s.installs_per_day,
            final_energy_j: s.final_energy_j,
        }
    }
}

fn run_dir_name(cfg: &RunConfig) -> String {
    format!("{}_{}_{}F", cfg.policy, cfg.profile, cfg.energy.capacitance_farads)
}

/// Runs every combination in parallel. Rows come back in [`SweepConfig::runs`]
/// order. With an output directory each run gets its own subdirectory and
/// the table is written to `sweep.csv`.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<RunSummary>, RunError> {
    cfg.validate()?;
    let root = cfg.base.out_dir.clone();
    let runs: Vec<RunConfig> = cfg
        .runs()
        .into_iter()
        .map(|mut r| {
            r.out_dir = root.as_ref().map(|d| d.join(run_dir_name(&r)));
            r
        })
        .collect();
    let summaries = runs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = &root {
        write_sweep_csv(&dir.join("sweep.csv"), &summaries)?;
    }
    Ok(summaries)
}

pub fn write_sweep_csv(path: &Path, summaries: &[RunSummary]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    for s in summaries {
        w.serialize(SweepRow::from(s))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(policy: PolicyKind) -> RunConfig {
        RunConfig { policy, days: 2, eval_days: 1, ..Default::default() }
    }

    #[test]
    fn stream_seeds_differ() {
        let s: Vec<u64> = (0..4).map(|k| stream_seed(7, k)).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn every_policy_runs_and_balances_its_ledger() {
        for policy in PolicyKind::ALL {
            let cfg = short(policy);
            let out = simulate(&cfg, &build_trace(&cfg).unwrap()).unwrap();
            assert_eq!(out.rows.len(), 1440);
            let s = &out.summary;
            assert!(s.ledger_residual_j.abs() <= 1e-9);
            assert_eq!(s.daily_avg_aoi_min.len(), 2);
            assert_eq!(s.eval_days, 1);
            for v in [s.avg_aoi_min, s.peak_aoi_min, s.downtime_hours, s.tx_per_day, s.final_energy_j] {
                assert!(v.is_finite() && v >= 0.0);
            }
            if !policy.is_learning() {
                assert_eq!(s.train_steps, 0);
                assert_eq!(s.installs_per_day, 0.0);
                assert!(out.rows.iter().all(|r| r.loss.is_none()));
            }
        }
    }

    #[test]
    fn training_stops_in_the_evaluation_phase() {
        let cfg = short(PolicyKind::UnconstrainedDrl);
        let out = simulate(&cfg, &build_trace(&cfg).unwrap()).unwrap();
        assert!(out.rows[..720].iter().any(|r| r.loss.is_some()));
        assert!(out.rows[720..].iter().all(|r| r.loss.is_none()));
    }

    #[test]
    fn short_trace_and_bad_config_are_errors() {
        let cfg = short(PolicyKind::Threshold);
        let trace = HarvestTrace::constant(5e-5, 100);
        assert!(matches!(simulate(&cfg, &trace), Err(RunError::TraceTooShort { .. })));
        let bad = RunConfig { days: 0, ..cfg };
        assert!(matches!(bad.validate(), Err(RunError::Config(_))));
        let bad = RunConfig { policy: PolicyKind::SplitDrl { updates_per_day: 5 }, ..short(PolicyKind::Threshold) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_rows_follow_policy_profile_capacitance_order() {
        let sc = SweepConfig {
            base: RunConfig { days: 1, eval_days: 0, ..Default::default() },
            policies: vec![PolicyKind::Threshold, PolicyKind::IdealUniform],
            profiles: vec![Profile::Low, Profile::High],
            capacitances: vec![4.0, 6.0],
        };
        let rows = sweep(&sc).unwrap();
        let keys: Vec<(String, String, f64)> = rows
            .iter()
            .map(|r| (r.policy.to_string(), r.profile.clone(), r.capacitance_farads))
            .collect();
        let expected: Vec<(String, String, f64)> = sc
            .runs()
            .iter()
            .map(|r| (r.policy.to_string(), r.profile.to_string(), r.energy.capacitance_farads))
            .collect();
        assert_eq!(keys, expected);
        assert_eq!(keys[0], ("threshold".into(), "low".into(), 4.0));
        assert_eq!(keys[1], ("threshold".into(), "low".into(), 6.0));
        assert_eq!(keys[2], ("threshold".into(), "high".into(), 4.0));
    }
}
