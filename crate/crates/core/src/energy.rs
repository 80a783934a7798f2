//! Capacitor energy store and the device's energy cost model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub capacitance_farads: f64,
    pub supply_voltage: f64,
    /// Per-step cost of waking, sensing and housekeeping (J).
    pub e_m: f64,
    /// Cost of receiving one weight blob (J).
    pub e_ann: f64,
    /// Status-update cost with one observation (J).
    pub e_tr_min: f64,
    /// Status-update cost with a full buffer (J).
    pub e_tr_max: f64,
    pub step_seconds: f64,
    /// Probability a transmission reaches the sink.
    pub eta: f64,
    pub initial_charge_frac: f64,
    /// Observation buffer length M.
    pub buffer_len: usize,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            capacitance_farads: 4.0,
            supply_voltage: 3.0,
            e_m: 1.5e-3,
            e_ann: 0.9,
            e_tr_min: 35e-3,
            e_tr_max: 100e-3,
            step_seconds: 120.0,
            eta: 0.9,
            initial_charge_frac: 0.5,
            buffer_len: 4,
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("capacitance_farads", self.capacitance_farads),
            ("supply_voltage", self.supply_voltage),
            ("e_m", self.e_m),
            ("e_tr_min", self.e_tr_min),
            ("e_tr_max", self.e_tr_max),
            ("step_seconds", self.step_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.e_ann >= 0.0) {
            return Err(format!("e_ann must be non-negative, got {}", self.e_ann));
        }
        if self.e_tr_min > self.e_tr_max {
            return Err("e_tr_min exceeds e_tr_max".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(format!("eta must be in [0, 1], got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.initial_charge_frac) {
            return Err(format!(
                "initial_charge_frac must be in [0, 1], got {}",
                self.initial_charge_frac
            ));
        }
        if self.buffer_len == 0 {
            return Err("buffer_len must be at least 1".into());
        }
        Ok(())
    }

    /// Joule capacity ½·C·U².
    pub fn capacity_joules(&self) -> f64 {
        0.5 * self.capacitance_farads * self.supply_voltage * self.supply_voltage
    }

    pub fn steps_per_day(&self) -> usize {
        (86_400.0 / self.step_seconds).round() as usize
    }

    /// Cost of a status update carrying `m` observations: linear between
    /// `e_tr_min` at one observation and `e_tr_max` at a full buffer.
    pub fn tx_cost(&self, m: usize) -> Result<f64, EnergyError> {
        let max = self.buffer_len;
        if m == 0 || m > max {
            return Err(EnergyError::ObservationCount { m, max });
        }
        if max == 1 {
            return Ok(self.e_tr_max);
        }
        let slope = (self.e_tr_max - self.e_tr_min) / (max - 1) as f64;
        Ok(self.e_tr_min + (m - 1) as f64 * slope)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("insufficient energy: need {needed} J, have {available} J")]
    Insufficient { needed: f64, available: f64 },
    #[error("observation count {m} outside 1..={max}")]
    ObservationCount { m: usize, max: usize },
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
struct Total {
    sum: f64,
    carry: f64,
}

impl Total {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Stored energy with a running ledger of everything harvested and spent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyState {
    stored: f64,
    capacity: f64,
    initial: f64,
    harvested: Total,
    spent: Total,
    current: f64,
}

impl EnergyState {
    pub fn new(cfg: &EnergyConfig) -> Self {
        let capacity = cfg.capacity_joules();
        Self::with_charge(capacity, capacity * cfg.initial_charge_frac)
    }

    pub fn with_charge(capacity: f64, stored: f64) -> Self {
        let stored = stored.clamp(0.0, capacity);
        Self {
            stored,
            capacity,
            initial: stored,
            harvested: Total::default(),
            spent: Total::default(),
            current: 0.0,
        }
    }

    pub fn stored(&self) -> f64 {
        self.stored
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn harvest_current(&self) -> f64 {
        self.current
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// Energy actually added by harvesting (after clamping at capacity).
    pub fn total_harvested(&self) -> f64 {
        self.harvested.value()
    }

    pub fn total_spent(&self) -> f64 {
        self.spent.value()
    }

    /// `initial + harvested - spent - stored`; zero up to rounding.
    pub fn ledger_residual(&self) -> f64 {
        let mut r = Total::default();
        for x in [self.initial, self.harvested.sum, self.harvested.carry, -self.spent.sum, -self.spent.carry, -self.stored] {
            r.add(x);
        }
        r.value()
    }

    /// Adds `U·I·τ`, clamped at capacity. Returns the energy actually stored.
    pub fn harvest(&mut self, current_amps: f64, cfg: &EnergyConfig) -> f64 {
        self.current = current_amps;
        let income = cfg.supply_voltage * current_amps * cfg.step_seconds;
        let before = self.stored;
        self.stored = (before + income).min(self.capacity);
        let gained = self.stored - before;
        self.harvested.add(gained);
        gained
    }

    /// Debits `amount` if available; otherwise leaves the state untouched.
    pub fn debit(&mut self, amount: f64) -> Result<(), EnergyError> {
        if self.stored < amount {
            return Err(EnergyError::Insufficient {
                needed: amount,
                available: self.stored,
            });
        }
        let before = self.stored;
        self.stored = (before - amount).max(0.0);
        self.spent.add(before - self.stored);
        Ok(())
    }
}
