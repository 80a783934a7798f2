//! Harvest-current traces: CSV ingestion and a seeded diurnal generator.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Low,
    Medium,
    High,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Low, Profile::Medium, Profile::High];

    /// Target harvested energy per day.
    pub fn daily_joules(self) -> f64 {
        match self {
            Profile::Low => 6.0,
            Profile::Medium => 14.0,
            Profile::High => 20.0,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Low => "low",
            Profile::Medium => "medium",
            Profile::High => "high",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Profile::Low),
            "medium" => Ok(Profile::Medium),
            "high" => Ok(Profile::High),
            other => Err(format!("unknown profile '{other}' (expected low, medium or high)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestTrace {
    currents: Vec<f64>,
    profile: Option<Profile>,
}

impl HarvestTrace {
    pub fn new(currents: Vec<f64>, profile: Option<Profile>) -> Result<Self, TraceError> {
        if currents.is_empty() {
            return Err(TraceError::Empty);
        }
        if let Some(i) = currents.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(TraceError::NegativeCurrent { row: i + 1, value: currents[i] });
        }
        Ok(Self { currents, profile })
    }

    /// Constant current for `steps` steps.
    pub fn constant(current: f64, steps: usize) -> Self {
        Self::new(vec![current; steps], None).expect("valid constant trace")
    }

    pub fn len(&self) -> usize {
        self.currents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.currents.is_empty()
    }

    pub fn profile(&self) -> Option<Profile> {
        self.profile
    }

    pub fn currents(&self) -> &[f64] {
        &self.currents
    }

    /// Current during 0-based step index `i`.
    pub fn current(&self, i: usize) -> f64 {
        self.currents[i]
    }

    /// Harvested energy per step, `U·I·τ`.
    pub fn step_energy(&self, i: usize, cfg: &EnergyConfig) -> f64 {
        cfg.supply_voltage * self.currents[i] * cfg.step_seconds
    }

    /// Energy offered by each whole day of the trace (ignores capacity).
    pub fn daily_energy(&self, cfg: &EnergyConfig) -> Vec<f64> {
        let per_day = cfg.steps_per_day();
        self.currents
            .chunks(per_day)
            .filter(|c| c.len() == per_day)
            .map(|day| day.iter().map(|i| cfg.supply_voltage * i * cfg.step_seconds).sum())
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace is empty")]
    Empty,
    #[error("unrecognised trace header {0:?} (expected `step,current_amps` or `timestamp,lux`)")]
    Header(Vec<String>),
    #[error("malformed trace row {row}: {msg}")]
    Malformed { row: usize, msg: String },
    #[error("negative or non-finite current {value} at row {row}")]
    NegativeCurrent { row: usize, value: f64 },
    #[error("lux trace requires a positive lux-to-current coefficient")]
    MissingLuxCoefficient,
}

/// Reads `step,current_amps` or `timestamp,lux` (scaled by `lux_coeff` A/lx).
pub fn load_trace(path: &Path, lux_coeff: Option<f64>) -> Result<HarvestTrace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text, lux_coeff)
}

pub fn parse_trace(text: &str, lux_coeff: Option<f64>) -> Result<HarvestTrace, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = match reader.headers() {
        Ok(h) if !h.is_empty() => h.iter().map(str::to_ascii_lowercase).collect(),
        Ok(_) => return Err(TraceError::Empty),
        Err(e) => return Err(TraceError::Malformed { row: 0, msg: e.to_string() }),
    };
    let scale = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["step", "current_amps"] => 1.0,
        ["timestamp", "lux"] => match lux_coeff {
            Some(c) if c > 0.0 => c,
            _ => return Err(TraceError::MissingLuxCoefficient),
        },
        _ if header.len() == 1 && header[0].is_empty() => return Err(TraceError::Empty),
        _ => return Err(TraceError::Header(header)),
    };
    let mut currents = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| TraceError::Malformed { row, msg: e.to_string() })?;
        if rec.len() != 2 {
            return Err(TraceError::Malformed {
                row,
                msg: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let value: f64 = rec[1].parse().map_err(|e| TraceError::Malformed {
            row,
            msg: format!("'{}': {e}", &rec[1]),
        })?;
        if !(value.is_finite() && value >= 0.0) {
            return Err(TraceError::NegativeCurrent { row, value });
        }
        currents.push(value * scale);
    }
    HarvestTrace::new(currents, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Length of the daylight window, centred on noon.
    pub daylight_hours: f64,
    /// Half-width of the uniform multiplicative noise.
    pub noise_frac: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            daylight_hours: 12.0,
            noise_frac: 0.10,
        }
    }
}

/// Half-sine daylight current with seeded multiplicative noise, rescaled so
/// every day delivers exactly the profile's daily energy. Day starts at midnight.
pub fn synth_trace(
    profile: Profile,
    days: usize,
    seed: u64,
    params: &SynthParams,
    cfg: &EnergyConfig,
) -> HarvestTrace {
    assert!(days >= 1, "trace needs at least one day");
    let per_day = cfg.steps_per_day();
    let light_steps = ((params.daylight_hours / 24.0) * per_day as f64).round() as usize;
    let light_steps = light_steps.clamp(1, per_day);
    let dawn = (per_day - light_steps) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut currents = Vec::with_capacity(days * per_day);
    for _ in 0..days {
        let mut day = vec![0.0; per_day];
        for k in 0..light_steps {
            let shape = (std::f64::consts::PI * (k as f64 + 0.5) / light_steps as f64).sin();
            let noise = 1.0 + params.noise_frac * rng.gen_range(-1.0..=1.0);
            day[dawn + k] = shape * noise.max(0.0);
        }
        let energy_per_unit = cfg.supply_voltage * cfg.step_seconds;
        let raw: f64 = day.iter().sum::<f64>() * energy_per_unit;
        let scale = profile.daily_joules() / raw;
        currents.extend(day.into_iter().map(|x| x * scale));
    }
    HarvestTrace::new(currents, Some(profile)).expect("generator yields non-negative currents")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn current_csv_is_ingested_verbatim() {
        let t = parse_trace("step,current_amps\n0,0\n1,1e-4\n2,5e-5\n", None).unwrap();
        assert_eq!(t.currents(), &[0.0, 1e-4, 5e-5]);
    }

    #[test]
    fn lux_csv_is_scaled_by_coefficient() {
        let t = parse_trace("timestamp,lux\n0,100\n120,0\n", Some(1e-7)).unwrap();
        assert!((t.current(0) - 1e-5).abs() < 1e-18);
        assert_eq!(t.current(1), 0.0);
        assert!(matches!(
            parse_trace("timestamp,lux\n0,100\n", None),
            Err(TraceError::MissingLuxCoefficient)
        ));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(parse_trace("", None), Err(TraceError::Empty)));
        assert!(matches!(parse_trace("step,current_amps\n", None), Err(TraceError::Empty)));
        assert!(matches!(
            parse_trace("step,current_amps\n0,abc\n", None),
            Err(TraceError::Malformed { row: 1, .. })
        ));
        assert!(matches!(
            parse_trace("step,current_amps\n0,1e-4\n1,-1e-5\n", None),
            Err(TraceError::NegativeCurrent { row: 2, .. })
        ));
        assert!(matches!(parse_trace("a,b\n1,2\n", None), Err(TraceError::Header(_))));
        assert!(matches!(
            load_trace(Path::new("/nonexistent/trace.csv"), None),
            Err(TraceError::Io { .. })
        ));
    }

    #[test]
    fn constant_current_for_fourteen_joules_a_day() {
        let cfg = EnergyConfig::default();
        let current: f64 = 14.0 / (3.0 * 86_400.0);
        assert!((current - 54.0e-6).abs() < 0.05e-6);
        let t = HarvestTrace::constant(current, 720);
        assert!((t.daily_energy(&cfg)[0] - 14.0).abs() < 1e-9);
    }

    #[test]
    fn synthetic_days_hit_profile_targets() {
        let cfg = EnergyConfig::default();
        for profile in Profile::ALL {
            for seed in 0..5 {
                let t = synth_trace(profile, 3, seed, &SynthParams::default(), &cfg);
                for e in t.daily_energy(&cfg) {
                    let target = profile.daily_joules();
                    assert!((e - target).abs() <= 0.1 * target, "{profile} day energy {e}");
                }
            }
        }
    }

    #[test]
    fn nights_are_dark() {
        let cfg = EnergyConfig::default();
        let t = synth_trace(Profile::High, 2, 1, &SynthParams::default(), &cfg);
        for (i, c) in t.currents().iter().enumerate() {
            let step_of_day = i % 720;
            // 12 h window centred on noon: steps 180..540
            if !(180..540).contains(&step_of_day) {
                assert_eq!(*c, 0.0, "step {i}");
            } else {
                assert!(*c > 0.0);
            }
        }
    }

    #[test]
    fn energy_is_additive_in_days_and_seeded() {
        let cfg = EnergyConfig::default();
        let p = SynthParams::default();
        let one: f64 = synth_trace(Profile::Medium, 5, 9, &p, &cfg).daily_energy(&cfg).iter().sum();
        let two: f64 = synth_trace(Profile::Medium, 10, 9, &p, &cfg).daily_energy(&cfg).iter().sum();
        assert!((two / one - 2.0).abs() < 0.02);
        assert_eq!(
            synth_trace(Profile::Low, 2, 3, &p, &cfg),
            synth_trace(Profile::Low, 2, 3, &p, &cfg)
        );
        assert_ne!(
            synth_trace(Profile::Low, 2, 3, &p, &cfg),
            synth_trace(Profile::Low, 2, 4, &p, &cfg)
        );
    }
}
