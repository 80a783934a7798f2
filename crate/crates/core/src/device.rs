//! The energy-harvesting source: wakes when it can afford to, senses,
//! decides with its cached network (or a baseline rule), transmits its
//! observation buffer, and pulls new weights when the update gate opens.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::dqn::{select_action, Action, State};
use crate::energy::{EnergyConfig, EnergyState};
use crate::nn::{deserialize, QNetwork};
use crate::policies::threshold_decide;

/// One awake step's telemetry, as buffered on the device and shipped to the sink.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationRecord {
    pub step: u64,
    /// `(E J, Δ steps, I_EH A)` at decision time.
    pub state: State,
    pub action: Action,
    /// Whether the transmission made at this step reached the sink.
    pub tx_success: bool,
    /// Opaque sensor reading (humidity %, temperature °C).
    pub measurement: [f64; 2],
}

/// Up to M buffered observations, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusUpdate {
    pub sent_at: u64,
    pub records: Vec<ObservationRecord>,
}

/// A serialized network offered on the downlink.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedBlob {
    pub version: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncMode {
    /// Install at most once every `t_ann` steps, paying `e_ann`.
    Gated { t_ann: u64 },
    /// Install every new blob for free (idealised on-device training).
    Free,
    /// Never install (non-learning baselines).
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionRule {
    /// ε-greedy over the cached network.
    EpsilonGreedy,
    /// Transmit with probability E/B.
    Threshold,
    /// Transmit exactly at the flagged steps (index `t - 1`).
    Schedule(Vec<bool>),
}

/// Steps between weight installs for 1, 2 or 3 updates per day (22 h, 8 h, 6 h).
pub fn update_period_steps(updates_per_day: u8) -> Option<u64> {
    match updates_per_day {
        1 => Some(660),
        2 => Some(240),
        3 => Some(180),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acted {
    pub state: State,
    pub action: Action,
    pub tx_attempted: bool,
    pub tx_succeeded: bool,
    pub weights_updated: bool,
    /// Stored energy was below the cost of sending the current buffer.
    pub insufficient: bool,
    pub update: Option<StatusUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceStepOutcome {
    /// Not enough energy to wake (E ≤ E_M).
    Slept,
    Acted(Acted),
}

impl DeviceStepOutcome {
    pub fn insufficient(&self) -> bool {
        match self {
            DeviceStepOutcome::Slept => true,
            DeviceStepOutcome::Acted(a) => a.insufficient,
        }
    }

    pub fn acted(&self) -> Option<&Acted> {
        match self {
            DeviceStepOutcome::Slept => None,
            DeviceStepOutcome::Acted(a) => Some(a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeviceState {
    cfg: EnergyConfig,
    net: QNetwork,
    installed_version: u64,
    energy: EnergyState,
    last_ack: u64,
    buffer: VecDeque<ObservationRecord>,
    update_timer: u64,
    sync: SyncMode,
    rule: DecisionRule,
    installs: Vec<u64>,
    rejected_blobs: u64,
    last_step: u64,
}

impl DeviceState {
    pub fn new(cfg: EnergyConfig, net: QNetwork, sync: SyncMode, rule: DecisionRule) -> Self {
        let energy = EnergyState::new(&cfg);
        Self {
            buffer: VecDeque::with_capacity(cfg.buffer_len),
            cfg,
            net,
            installed_version: 0,
            energy,
            last_ack: 0,
            update_timer: 0,
            sync,
            rule,
            installs: Vec::new(),
            rejected_blobs: 0,
            last_step: 0,
        }
    }

    /// Sets `T_ANN` for 1, 2 or 3 weight updates per day.
    pub fn set_update_schedule(&mut self, updates_per_day: u8) -> Result<(), String> {
        let t_ann = update_period_steps(updates_per_day)
            .ok_or_else(|| format!("updates per day must be 1, 2 or 3, got {updates_per_day}"))?;
        self.sync = SyncMode::Gated { t_ann };
        Ok(())
    }

    pub fn sync_mode(&self) -> &SyncMode {
        &self.sync
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn energy(&self) -> &EnergyState {
        &self.energy
    }

    pub fn energy_mut(&mut self) -> &mut EnergyState {
        &mut self.energy
    }

    pub fn config(&self) -> &EnergyConfig {
        &self.cfg
    }

    pub fn update_timer(&self) -> u64 {
        self.update_timer
    }

    pub fn installed_version(&self) -> u64 {
        self.installed_version
    }

    /// Steps at which new weights were installed.
    pub fn installs(&self) -> &[u64] {
        &self.installs
    }

    pub fn rejected_blobs(&self) -> u64 {
        self.rejected_blobs
    }

    pub fn buffer(&self) -> &VecDeque<ObservationRecord> {
        &self.buffer
    }

    /// Local age mirror at step `t`, kept truthful by acknowledgements.
    pub fn local_age(&self, t: u64) -> u64 {
        t - self.last_ack
    }

    fn measurement(t: u64) -> [f64; 2] {
        let phase = 2.0 * std::f64::consts::PI * (t % 720) as f64 / 720.0;
        [45.0 - 10.0 * phase.sin(), 21.0 + 4.0 * phase.sin()]
    }

    fn cost_of_buffer(&self) -> f64 {
        self.cfg
            .tx_cost(self.buffer.len().clamp(1, self.cfg.buffer_len))
            .expect("buffer length within 1..=M")
    }

    /// Advances the device through step `t` (1-based) under harvest current
    /// `current`. `downlink` is the newest blob the sink is offering.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        t: u64,
        current: f64,
        epsilon: f64,
        rng: &mut R,
        downlink: Option<&PublishedBlob>,
    ) -> DeviceStepOutcome {
        assert_eq!(t, self.last_step + 1, "device steps must be consecutive");
        self.last_step = t;
        self.update_timer = self.update_timer.saturating_add(1);
        self.energy.harvest(current, &self.cfg);

        if self.energy.stored() <= self.cfg.e_m {
            return DeviceStepOutcome::Slept;
        }
        self.energy.debit(self.cfg.e_m).expect("checked above");

        let state: State = [self.energy.stored(), self.local_age(t) as f64, current];
        if self.buffer.len() == self.cfg.buffer_len {
            self.buffer.pop_front();
        }
        self.buffer.push_back(ObservationRecord {
            step: t,
            state,
            action: Action::Wait,
            tx_success: false,
            measurement: Self::measurement(t),
        });
        let cost = self.cost_of_buffer();
        let insufficient = self.energy.stored() < cost;

        let action = match &self.rule {
            DecisionRule::EpsilonGreedy => {
                select_action(&self.net, &state, epsilon, rng).expect("state width matches network")
            }
            DecisionRule::Threshold => threshold_decide(self.energy.stored(), self.energy.capacity(), rng),
            DecisionRule::Schedule(flags) => {
                if flags.get((t - 1) as usize).copied().unwrap_or(false) {
                    Action::Transmit
                } else {
                    Action::Wait
                }
            }
        };
        self.buffer.back_mut().unwrap().action = action;

        let mut tx_attempted = false;
        let mut tx_succeeded = false;
        let mut update = None;
        if action == Action::Transmit && self.energy.debit(cost).is_ok() {
            tx_attempted = true;
            tx_succeeded = rng.gen::<f64>() < self.cfg.eta;
            if tx_succeeded {
                self.buffer.back_mut().unwrap().tx_success = true;
                self.last_ack = t;
                update = Some(StatusUpdate {
                    sent_at: t,
                    records: self.buffer.drain(..).collect(),
                });
            }
        }

        let weights_updated = self.maybe_install(t, downlink);

        DeviceStepOutcome::Acted(Acted {
            state,
            action,
            tx_attempted,
            tx_succeeded,
            weights_updated,
            insufficient,
            update,
        })
    }

    fn maybe_install(&mut self, t: u64, downlink: Option<&PublishedBlob>) -> bool {
        let Some(blob) = downlink.filter(|b| b.version > self.installed_version) else {
            return false;
        };
        match self.sync {
            SyncMode::Disabled => return false,
            SyncMode::Free => {}
            SyncMode::Gated { t_ann } => {
                if self.update_timer < t_ann || self.energy.debit(self.cfg.e_ann).is_err() {
                    return false;
                }
            }
        }
        match deserialize(&blob.bytes) {
            Ok(net) => {
                self.net = net;
                self.installed_version = blob.version;
                self.update_timer = 0;
                self.installs.push(t);
                true
            }
            Err(_) => {
                self.rejected_blobs += 1;
                false
            }
        }
    }
}
