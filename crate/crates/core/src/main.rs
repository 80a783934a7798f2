use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use edge_aoi::config::{ConfigError, Settings};
use edge_aoi::harness::{run, sweep, RunSummary, SweepConfig};

/// Simulate an energy-harvesting sensor learning when to send status updates.
#[derive(Debug, Parser)]
#[command(name = "edge-aoi", version)]
struct Cli {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// split-drl, split-drl-N, unconstrained-drl, threshold or ideal-uniform.
    #[arg(long, num_args = 1.., value_name = "POLICY")]
    policy: Vec<String>,
    /// low, medium or high.
    #[arg(long, num_args = 1.., value_name = "PROFILE")]
    profile: Vec<String>,
    /// Capacitor sizes in farads.
    #[arg(long, num_args = 1.., value_name = "F", allow_negative_numbers = true)]
    capacitance: Vec<String>,
    #[arg(long, value_name = "N")]
    days: Option<String>,
    /// 1, 2 or 3 weight installs per day for split-drl.
    #[arg(long, value_name = "N")]
    updates_per_day: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Harvest trace CSV (`step,current_amps` or `timestamp,lux`).
    #[arg(long, value_name = "PATH")]
    trace: Option<String>,
    /// Amperes per lux for `timestamp,lux` traces.
    #[arg(long, value_name = "X")]
    lux_coeff: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Any config key, e.g. `--set e_ann_mj=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn settings(cli: &Cli) -> Result<SweepConfig, ConfigError> {
    let mut s = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let lists = [("policy", &cli.policy), ("profile", &cli.profile), ("capacitance_farads", &cli.capacitance)];
    for (key, values) in lists {
        if !values.is_empty() {
            s.set(key, &values.join(","))?;
        }
    }
    let scalars = [
        ("days", &cli.days),
        ("updates_per_day", &cli.updates_per_day),
        ("seed", &cli.seed),
        ("trace", &cli.trace),
        ("lux_coeff", &cli.lux_coeff),
        ("out", &cli.out),
    ];
    for (key, value) in scalars {
        if let Some(v) = value {
            s.set(key, v)?;
        }
    }
    for pair in &cli.overrides {
        s.set_pair(pair)?;
    }
    Ok(s.finish())
}

fn report(s: &RunSummary) {
    println!(
        "{:<20} {:<7} {:>5.1} F  avg AoI {:>8.2} min  peak {:>8.2} min  down {:>6.2} h  tx/day {:>6.1}  installs/day {:>4.2}",
        s.policy.to_string(),
        s.profile,
        s.capacitance_farads,
        s.avg_aoi_min,
        s.peak_aoi_min,
        s.downtime_hours,
        s.tx_per_day,
        s.installs_per_day
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match settings(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("edge-aoi: {e}");
            return ExitCode::from(2);
        }
    };
    let result = if cfg.runs().len() == 1 {
        cfg.validate().and_then(|_| run(&cfg.base)).map(|s| vec![s])
    } else {
        sweep(&cfg)
    };
    match result {
        Ok(summaries) => {
            summaries.iter().for_each(report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("edge-aoi: {e}");
            ExitCode::FAILURE
        }
    }
}
