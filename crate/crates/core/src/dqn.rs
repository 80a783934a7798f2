//! Replay memory, ε-greedy selection, and the DQN training step.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{AdamState, Matrix, NnError, QNetwork};

/// `(energy J, AoI steps, harvest current A)`.
pub type State = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Wait = 0,
    Transmit = 1,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Wait
        } else {
            Action::Transmit
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
    /// Always false: the task is continuing.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub batch_size: usize,
    pub gamma: f64,
    /// Training steps between target-network refreshes.
    pub target_sync_period: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub learning_rate: f64,
    pub memory_capacity: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            gamma: 0.99,
            target_sync_period: 100,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 1440,
            learning_rate: 1e-3,
            memory_capacity: 100_000,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if self.batch_size == 0 || self.batch_size > self.memory_capacity {
            return Err(format!(
                "batch size {} must be in 1..={}",
                self.batch_size, self.memory_capacity
            ));
        }
        for (name, e) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(format!("{name} must be in [0, 1], got {e}"));
            }
        }
        if self.target_sync_period == 0 {
            return Err("target_sync_period must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Linear anneal from `eps_start` to `eps_end` over `eps_decay_steps`, then flat.
    pub fn epsilon(&self, step: u64) -> f64 {
        if self.eps_decay_steps == 0 || step >= self.eps_decay_steps {
            return self.eps_end;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Greedy action over Infer-mode Q-values; ties go to [`Action::Wait`].
pub fn greedy_action(net: &QNetwork, state: &State) -> Result<Action, NnError> {
    let q = net.q_values(state)?;
    Ok(if q[1] > q[0] { Action::Transmit } else { Action::Wait })
}

/// ε-greedy selection. Always draws one uniform for the ε test, and a second
/// one only when exploring.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &State,
    epsilon: f64,
    rng: &mut R,
) -> Result<Action, NnError> {
    if rng.gen::<f64>() < epsilon {
        Ok(Action::from_index(rng.gen_range(0..2)))
    } else {
        greedy_action(net, state)
    }
}

/// FIFO ring of experiences.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMemory {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    /// `n` distinct indices drawn uniformly. Panics if `n > len`.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        index::sample(rng, self.items.len(), n).into_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    /// Memory held fewer than `batch_size` experiences.
    Skipped,
    Trained { loss: f64 },
}

impl TrainOutcome {
    pub fn loss(self) -> Option<f64> {
        match self {
            TrainOutcome::Skipped => None,
            TrainOutcome::Trained { loss } => Some(loss),
        }
    }
}

/// One minibatch update of `policy` toward `r + γ·max Q_target(s')`.
pub fn train_step<R: Rng + ?Sized>(
    policy: &mut QNetwork,
    target: &QNetwork,
    memory: &ReplayMemory,
    cfg: &DqnConfig,
    opt: &mut AdamState,
    rng: &mut R,
) -> Result<TrainOutcome, NnError> {
    let n = cfg.batch_size;
    if memory.len() < n {
        return Ok(TrainOutcome::Skipped);
    }
    let batch: Vec<&Experience> = memory
        .sample_indices(n, rng)
        .into_iter()
        .map(|i| &memory.items[i])
        .collect();
    let states = Matrix::from_rows(&batch.iter().map(|e| e.state).collect::<Vec<_>>());
    let next = Matrix::from_rows(&batch.iter().map(|e| e.next_state).collect::<Vec<_>>());

    let q_next = target.predict(&next)?;
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(j, e)| {
            if e.terminal {
                e.reward
            } else {
                let best = q_next.row(j).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                e.reward + cfg.gamma * best
            }
        })
        .collect();

    let (q, cache) = policy.forward_train(&states, rng)?;
    let mut dq = Matrix::zeros(n, q.cols());
    let mut loss = 0.0;
    for (j, e) in batch.iter().enumerate() {
        let a = e.action.index();
        let diff = q[(j, a)] - targets[j];
        loss += diff * diff;
        dq[(j, a)] = 2.0 * diff / n as f64;
    }
    loss /= n as f64;
    let grads = policy.backward(&cache, &dq)?;
    opt.step_network(policy, &grads);
    Ok(TrainOutcome::Trained { loss })
}

pub fn sync_target(policy: &QNetwork, target: &mut QNetwork) {
    target.copy_from(policy);
}
