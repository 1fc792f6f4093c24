use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ctcp::congestion::Variant;
use ctcp_bench::report::write_csv;
use ctcp_bench::{run_fairness, run_sweep, run_trace, selftest, ExperimentConfig, TraceParams};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ctcp-bench", version, about = "Network-coded TCP simulation experiments")]
struct Cli {
    /// Flat TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repetitions per cell (overrides the config file).
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Goodput over the variant x PER x RTT grid.
    Sweep,
    /// Two flows sharing a bottleneck, against the baseline pair.
    Fairness,
    /// Binned goodput and cwnd of one transfer.
    Trace {
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        per: Option<f64>,
        #[arg(long)]
        rtt_ms: Option<u64>,
        #[arg(long)]
        bytes: Option<u64>,
    },
    /// Oracle checks of the field, codec, congestion control and simulator.
    Selftest,
}

fn write_file<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(BufWriter::new(file), rows).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn mbps(bps: f64) -> f64 {
    bps / 1e6
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = cli.reps {
        cfg.repetitions = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool> {
    let mut cfg = load_config(cli)?;
    if !matches!(cli.command, Command::Selftest) {
        fs::create_dir_all(&cli.out)
            .with_context(|| format!("creating {}", cli.out.display()))?;
    }
    match &cli.command {
        Command::Sweep => {
            let out = run_sweep(&cfg, cli.parallel)?;
            write_file(&cli.out, "sweep_raw.csv", &out.raw)?;
            write_file(&cli.out, "sweep_aggregate.csv", &out.aggregate)?;
            println!("{:<8} {:>6} {:>6} {:>10} {:>9}", "variant", "per", "rtt", "mean Mbps", "std");
            for a in &out.aggregate {
                println!(
                    "{:<8} {:>6.3} {:>6} {:>10.3} {:>9.3}{}",
                    a.variant,
                    a.per,
                    a.rtt_ms,
                    mbps(a.goodput_mean_bps),
                    mbps(a.goodput_std_bps),
                    if a.incomplete > 0 {
                        format!("  ({} incomplete)", a.incomplete)
                    } else {
                        String::new()
                    }
                );
            }
            let incomplete = out.incomplete();
            if incomplete > 0 {
                eprintln!("{incomplete} of {} runs did not finish within the cap", out.raw.len());
            }
            Ok(incomplete == 0)
        }
        Command::Fairness => {
            let out = run_fairness(&cfg, cli.parallel)?;
            write_file(&cli.out, "fairness_raw.csv", &out.rows)?;
            write_file(&cli.out, "fairness_summary.csv", &out.summary)?;
            for s in &out.summary {
                println!(
                    "{:<8} per {:>6.3} rtt {:>4} flow {} {:<8} {:>8.3} Mbps (std {:.3})",
                    s.series,
                    s.per,
                    s.rtt_ms,
                    s.flow,
                    s.variant,
                    mbps(s.goodput_mean_bps),
                    mbps(s.goodput_std_bps)
                );
            }
            if out.capacity_violations > 0 {
                eprintln!("{} runs exceeded the bottleneck rate", out.capacity_violations);
            }
            Ok(out.capacity_violations == 0)
        }
        Command::Trace {
            variant,
            per,
            rtt_ms,
            bytes,
        } => {
            if let Some(p) = per {
                cfg.trace_per = *p;
            }
            cfg.validate()?;
            let defaults = TraceParams::from_config(&cfg);
            let params = TraceParams {
                variant: variant.unwrap_or(defaults.variant),
                rtt_ms: rtt_ms.unwrap_or(defaults.rtt_ms),
                bytes: bytes.unwrap_or(defaults.bytes),
                ..defaults
            };
            let out = run_trace(&cfg, &params)?;
            write_file(&cli.out, "trace.csv", &out.rows)?;
            write_file(&cli.out, "trace_cwnd.csv", &out.cwnd)?;
            println!(
                "{} per {} rtt {} ms: mean goodput {:.3} Mbps over {} bins",
                params.variant,
                params.per,
                params.rtt_ms,
                mbps(out.mean_goodput_bps),
                out.rows.len()
            );
            if !out.complete {
                eprintln!("transfer did not finish within the cap");
            }
            Ok(out.complete)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
