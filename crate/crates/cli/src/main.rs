use std::path::PathBuf;
use std::process::ExitCode;

use ceps_core::config::{parse_config, ExperimentConfig};
use ceps_core::report::{configure_variant, parse_sweep, run_experiment, sweep, SweepTable};
use ceps_core::simulator::{variant_label, RunStatus};
use clap::Parser;

/// Run CEPS and the baseline methods on simulated networks.
#[derive(Debug, Parser)]
#[command(name = "ceps", version)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Overrides the seed from the config file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Comma-separated run labels, e.g. `ceps-dp-1bcs,ceps-nodp-perf,dpsgd`.
    /// `table` expands to the four CEPS variants.
    #[arg(long, value_name = "TAG")]
    algo: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Sweep one axis, e.g. `m=32,64,128`, `epsilon=0.25,0.5` or `r=0.2,0.8`.
    #[arg(long, value_name = "AXIS=V1,V2,...")]
    sweep: Option<String>,

    /// Tick budget per run.
    #[arg(long, value_name = "N")]
    max_rounds: Option<u64>,

    /// Exchange exact models instead of one-bit messages.
    #[arg(long)]
    perfect_comm: bool,

    /// Disable gradient noise.
    #[arg(long)]
    no_dp: bool,

    /// Exit with status 0 even if some run fails to converge.
    #[arg(long)]
    allow_diverge: bool,
}

fn variants(cli: &Cli, cfg: &ExperimentConfig) -> Vec<String> {
    match cli.algo.as_deref() {
        None => vec![cfg.algorithm.tag().to_string()],
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .flat_map(|s| {
                if s == "table" {
                    ceps_core::report::CEPS_VARIANTS.iter().map(|v| v.to_string()).collect()
                } else {
                    vec![s.to_string()]
                }
            })
            .collect(),
    }
}

fn print_sweep(table: &SweepTable) {
    println!(
        "{:<8} {:<16} {:<10} {:>10} {:>6} {:>6} {:>14}",
        table.axis.name(),
        "algorithm",
        "status",
        "objective",
        "iter",
        "rounds",
        "dtv_bytes"
    );
    for c in &table.cells {
        let status = match (&c.status, &c.error) {
            (Some(RunStatus::Converged), _) => "converged",
            (Some(RunStatus::MaxTicks), _) => "max-ticks",
            (Some(RunStatus::Diverged), _) => "diverged",
            (None, _) => "error",
        };
        println!(
            "{:<8} {:<16} {:<10} {:>10.5} {:>6} {:>6} {:>14.0}",
            c.value, c.label, status, c.objective, c.ticks, c.comm_rounds, c.dtv_bytes_ideal
        );
        if let Some(e) = &c.error {
            println!("         error: {e}");
        }
    }
}

fn run(cli: &Cli) -> ceps_core::Result<bool> {
    let mut cfg = parse_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.max_rounds {
        cfg.termination.max_ticks = n;
    }
    if cli.perfect_comm {
        cfg.codec.perfect_comm = true;
    }
    if cli.no_dp {
        cfg.privacy.enabled = false;
    }
    cfg.validate()?;
    let mut labels = variants(cli, &cfg);
    // Explicit flags win over the privacy/codec part of a variant label.
    if cli.no_dp || cli.perfect_comm {
        labels = labels
            .into_iter()
            .map(|l| match configure_variant(&cfg, &l) {
                Ok(mut c) => {
                    c.privacy.enabled &= !cli.no_dp;
                    c.codec.perfect_comm |= cli.perfect_comm;
                    variant_label(&c)
                }
                Err(_) => l,
            })
            .collect();
    }

    if let Some(arg) = &cli.sweep {
        let (axis, values) = parse_sweep(arg)?;
        let table = sweep(&cfg, &labels, axis, &values, Some(&cli.out))?;
        print_sweep(&table);
        println!("wrote {}", cli.out.join("sweep.csv").display());
        return Ok(table.all_converged());
    }

    let outcome = run_experiment(&cfg, &labels, Some(&cli.config), &cli.out)?;
    println!("config hash {}", outcome.manifest.config_hash);
    for r in &outcome.records {
        let s = &r.summary;
        println!(
            "{:<16} {:?} objective {:.5} iterations {} rounds {} dtv {} bytes",
            s.label,
            s.status,
            s.final_objective,
            s.ticks,
            s.comm_rounds,
            s.dtv_bits_ideal / 8
        );
    }
    println!("wrote {}", cli.out.display());
    Ok(outcome.all_converged())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if cli.allow_diverge => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some runs did not converge (use --allow-diverge to accept)");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
