//! Sink-side age-of-information bookkeeping.
//!
//! Steps are numbered from 1. `tick(t)` opens step `t` and advances the age;
//! receptions at `t` then reset it. The value recorded for step `t` is the
//! age at the end of the step, which is what the averages use.

use thiserror::Error;

/// One day of 120 s steps.
pub const DAY_WINDOW: usize = 720;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AoiError {
    #[error("tick for step {got}, expected step {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("reception at step {got} but current step is {current}")]
    ReceptionStep { current: u64, got: u64 },
    #[error("update generated at {generated} is from the future (now {now})")]
    FutureGeneration { generated: u64, now: u64 },
    #[error("empty averaging horizon")]
    EmptyHorizon,
    #[error("horizon {requested} exceeds the {available} recorded steps")]
    HorizonTooLong { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Peak {
    pub step: u64,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoIProcess {
    step: u64,
    age: u64,
    generation: u64,
    samples: Vec<u64>,
    peaks: Vec<Peak>,
    stale: u64,
    downtime: Vec<bool>,
    window: usize,
    window_sum: u64,
    day_means: Vec<f64>,
}

impl Default for AoIProcess {
    fn default() -> Self {
        Self::new(DAY_WINDOW)
    }
}

impl AoIProcess {
    /// `window` is the number of steps in the rolling "past day" mean.
    pub fn new(window: usize) -> Self {
        assert!(window > 0);
        Self {
            step: 0,
            age: 0,
            generation: 0,
            samples: Vec::new(),
            peaks: Vec::new(),
            stale: 0,
            downtime: Vec::new(),
            window,
            window_sum: 0,
            day_means: Vec::new(),
        }
    }

    pub fn tick(&mut self, t: u64) -> Result<(), AoiError> {
        if t != self.step + 1 {
            return Err(AoiError::OutOfOrder {
                expected: self.step + 1,
                got: t,
            });
        }
        // The mean for step t covers the `window` steps before it.
        let mean = if self.samples.len() >= self.window {
            self.window_sum as f64 / self.window as f64
        } else {
            0.0
        };
        self.day_means.push(mean);
        self.step = t;
        self.age = t - self.generation;
        self.push_sample(self.age);
        Ok(())
    }

    fn push_sample(&mut self, v: u64) {
        self.samples.push(v);
        self.window_sum += v;
        if self.samples.len() > self.window {
            self.window_sum -= self.samples[self.samples.len() - 1 - self.window];
        }
    }

    fn replace_last_sample(&mut self, v: u64) {
        let last = self.samples.last_mut().expect("ticked before reception");
        self.window_sum = self.window_sum - *last + v;
        *last = v;
    }

    /// Accepts an update generated at `generated` and received now. Returns
    /// whether it was fresh; stale updates are only counted.
    pub fn receive(&mut self, t: u64, generated: u64) -> Result<bool, AoiError> {
        if t != self.step || t == 0 {
            return Err(AoiError::ReceptionStep {
                current: self.step,
                got: t,
            });
        }
        if generated > t {
            return Err(AoiError::FutureGeneration { generated, now: t });
        }
        if generated <= self.generation {
            self.stale += 1;
            return Ok(false);
        }
        self.peaks.push(Peak {
            step: t,
            value: self.age,
        });
        self.generation = generated;
        self.age = t - generated;
        self.replace_last_sample(self.age);
        Ok(true)
    }

    pub fn note_downtime(&mut self, insufficient: bool) {
        self.downtime.push(insufficient);
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    /// Current Δ(t) in steps.
    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn last_generation(&self) -> u64 {
        self.generation
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    /// The most recent (at most one day of) end-of-step ages.
    pub fn window(&self) -> &[u64] {
        &self.samples[self.samples.len().saturating_sub(self.window)..]
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn receptions(&self) -> usize {
        self.peaks.len()
    }

    pub fn stale_updates(&self) -> u64 {
        self.stale
    }

    pub fn downtime_steps(&self) -> u64 {
        self.downtime.iter().filter(|d| **d).count() as u64
    }

    pub fn downtime_flags(&self) -> &[bool] {
        &self.downtime
    }

    /// Past-day mean age as seen at the start of step `t` (0 during the first day).
    pub fn day_mean_at(&self, t: u64) -> Option<f64> {
        self.day_means.get((t as usize).checked_sub(1)?).copied()
    }

    /// `(1/T)·Σ_{t=1..T} Δ(t)`.
    pub fn average_aoi(&self, horizon: usize) -> Result<f64, AoiError> {
        self.average_over(1, horizon)
    }

    /// Mean end-of-step age over steps `from..=to` (1-based, inclusive).
    pub fn average_over(&self, from: usize, to: usize) -> Result<f64, AoiError> {
        if from == 0 || to < from {
            return Err(AoiError::EmptyHorizon);
        }
        if to > self.samples.len() {
            return Err(AoiError::HorizonTooLong {
                requested: to,
                available: self.samples.len(),
            });
        }
        let slice = &self.samples[from - 1..to];
        Ok(slice.iter().sum::<u64>() as f64 / slice.len() as f64)
    }

    /// Mean of the recorded peaks, or `None` before the first reception.
    pub fn peak_aoi(&self) -> Option<f64> {
        mean_peak(self.peaks.iter())
    }

    /// Mean of peaks whose reception fell in steps `from..=to`.
    pub fn peak_over(&self, from: u64, to: u64) -> Option<f64> {
        mean_peak(self.peaks.iter().filter(|p| p.step >= from && p.step <= to))
    }
}

fn mean_peak<'a>(peaks: impl Iterator<Item = &'a Peak>) -> Option<f64> {
    let (sum, n) = peaks.fold((0u64, 0usize), |(s, n), p| (s + p.value, n + 1));
    (n > 0).then(|| sum as f64 / n as f64)
}
