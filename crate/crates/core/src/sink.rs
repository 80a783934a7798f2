//! The unconstrained sink: rebuilds experiences from status updates,
//! scores them, trains the policy network and publishes weight blobs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoi::{AoIProcess, AoiError};
use crate::device::{ObservationRecord, PublishedBlob};
use crate::dqn::{sync_target, train_step, Action, DqnConfig, Experience, ReplayMemory, TrainOutcome};
use crate::nn::{serialize, AdamConfig, AdamState, NnError, QNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub aoi_scale: f64,
    pub tx_bonus_slope: f64,
    pub aoi_knee: f64,
    pub tx_base: f64,
    pub energy_penalty: f64,
    pub energy_threshold_frac: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            aoi_scale: 0.1,
            tx_bonus_slope: 2.5,
            aoi_knee: 40.0,
            tx_base: 2.0,
            energy_penalty: -1000.0,
            energy_threshold_frac: 0.15,
        }
    }
}

/// Action part plus energy part. `day_mean_aoi` is in steps.
pub fn reward(action: Action, day_mean_aoi: f64, energy: f64, capacity: f64, p: &RewardParams) -> f64 {
    let age_term = p.aoi_scale * day_mean_aoi;
    let r_action = match action {
        Action::Wait => 1.0 - age_term,
        Action::Transmit if day_mean_aoi <= p.aoi_knee => {
            p.tx_bonus_slope * (p.aoi_knee - day_mean_aoi) + p.tx_base - age_term
        }
        Action::Transmit => p.tx_base - age_term,
    };
    let r_energy = if energy <= p.energy_threshold_frac * capacity {
        p.energy_penalty
    } else {
        0.0
    };
    r_action + r_energy
}

#[derive(Debug, Error, PartialEq)]
pub enum SinkError {
    #[error("status update records are not strictly increasing in step")]
    Unsorted,
    #[error("status update carries {got} records, at most {max} allowed")]
    TooManyRecords { got: usize, max: usize },
    #[error("no day-mean age recorded for step {0}")]
    MissingHistory(u64),
    #[error(transparent)]
    Aoi(#[from] AoiError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkStepReport {
    pub loss: Option<f64>,
    pub synced: bool,
    pub published: bool,
}

#[derive(Debug, Clone)]
pub struct SinkState {
    policy: QNetwork,
    target: QNetwork,
    optimizer: AdamState,
    memory: ReplayMemory,
    aoi: AoIProcess,
    rewards: RewardParams,
    dqn: DqnConfig,
    capacity: f64,
    max_records: usize,
    staged: Option<ObservationRecord>,
    watermark: u64,
    published: PublishedBlob,
    dirty: bool,
    train_steps: u64,
    target_syncs: u64,
    training: bool,
    rng: ChaCha8Rng,
}

impl SinkState {
    /// `initial` must be the same network the device starts with.
    pub fn new(
        initial: QNetwork,
        dqn: DqnConfig,
        rewards: RewardParams,
        capacity_joules: f64,
        max_records: usize,
        rng_seed: u64,
    ) -> Self {
        let optimizer = AdamState::for_network(
            AdamConfig {
                learning_rate: dqn.learning_rate,
                ..Default::default()
            },
            &initial,
        );
        let published = PublishedBlob {
            version: 0,
            bytes: serialize(&initial),
        };
        Self {
            target: initial.clone(),
            policy: initial,
            optimizer,
            memory: ReplayMemory::new(dqn.memory_capacity),
            aoi: AoIProcess::default(),
            rewards,
            dqn,
            capacity: capacity_joules,
            max_records,
            staged: None,
            watermark: 0,
            published,
            dirty: false,
            train_steps: 0,
            target_syncs: 0,
            training: true,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn policy(&self) -> &QNetwork {
        &self.policy
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn into_memory(self) -> ReplayMemory {
        self.memory
    }

    pub fn aoi(&self) -> &AoIProcess {
        &self.aoi
    }

    pub fn published(&self) -> &PublishedBlob {
        &self.published
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn target_syncs(&self) -> u64 {
        self.target_syncs
    }

    pub fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    /// Opens step `t` on the sink clock.
    pub fn begin_step(&mut self, t: u64) -> Result<(), SinkError> {
        Ok(self.aoi.tick(t)?)
    }

    pub fn note_downtime(&mut self, insufficient: bool) {
        self.aoi.note_downtime(insufficient);
    }

    /// Parses a received status update at step `t`. Consecutive-step record
    /// pairs become experiences; records already seen are skipped, and a
    /// trailing record waits for its successor in a later update.
    pub fn ingest_update(&mut self, records: &[ObservationRecord], t: u64) -> Result<usize, SinkError> {
        if records.len() > self.max_records {
            return Err(SinkError::TooManyRecords {
                got: records.len(),
                max: self.max_records,
            });
        }
        if records.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(SinkError::Unsorted);
        }
        let current = self.aoi.current_step();
        if t != current || records.last().is_some_and(|r| r.step > t) {
            return Err(AoiError::ReceptionStep { current, got: t }.into());
        }
        let Some(newest) = records.last() else {
            return Ok(0);
        };
        let mut stored = 0;
        for rec in records {
            if rec.step <= self.watermark {
                continue;
            }
            if let Some(prev) = self.staged.take() {
                if prev.step + 1 == rec.step {
                    let day_mean = self
                        .aoi
                        .day_mean_at(prev.step)
                        .ok_or(SinkError::MissingHistory(prev.step))?;
                    let r = reward(prev.action, day_mean, prev.state[0], self.capacity, &self.rewards);
                    self.memory.push(Experience {
                        state: prev.state,
                        action: prev.action,
                        reward: r,
                        next_state: rec.state,
                        terminal: false,
                    });
                    stored += 1;
                }
            }
            self.staged = Some(rec.clone());
            self.watermark = rec.step;
        }
        self.aoi.receive(t, newest.step)?;
        Ok(stored)
    }

    /// One training step when enough experience is stored, target refresh
    /// every `target_sync_period` training steps, and republication of the
    /// policy blob if it changed.
    pub fn sink_step(&mut self) -> Result<SinkStepReport, SinkError> {
        let mut report = SinkStepReport {
            loss: None,
            synced: false,
            published: false,
        };
        if self.training {
            let outcome = train_step(
                &mut self.policy,
                &self.target,
                &self.memory,
                &self.dqn,
                &mut self.optimizer,
                &mut self.rng,
            )?;
            if let TrainOutcome::Trained { loss } = outcome {
                report.loss = Some(loss);
                self.train_steps += 1;
                self.dirty = true;
                if self.train_steps % self.dqn.target_sync_period == 0 {
                    sync_target(&self.policy, &mut self.target);
                    self.target_syncs += 1;
                    report.synced = true;
                }
            }
        }
        if self.dirty {
            let bytes = serialize(&self.policy);
            if bytes != self.published.bytes {
                self.published = PublishedBlob {
                    version: self.published.version + 1,
                    bytes,
                };
                report.published = true;
            }
            self.dirty = false;
        }
        Ok(report)
    }
}
