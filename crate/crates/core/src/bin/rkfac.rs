use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rkfac::harness::{self, ExperimentConfig, FactorKind};
use rkfac::optimizer::Method;

#[derive(Parser, Debug)]
#[command(
    name = "rkfac",
    version,
    about = "Exact and randomized K-FAC experiments"
)]
struct Cli {
    /// JSON experiment config; missing fields use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the classifier and write runlog.csv / epochs.csv.
    Train,
    /// Train with factor snapshots and report spectrum decay.
    Spectrum,
    /// Evaluate the eigenvalue-count bound and its brute-force check.
    Prop31,
    /// Time exact vs. randomized damped-inverse application across dimensions.
    BenchInverse,
    /// Compare methods over several seeds.
    Compare,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(method) = cli.method {
        cfg.optimizer.method = method;
    }
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir.display();
    match cli.command {
        Command::Train => {
            let log = harness::cmd_train(&cfg)?;
            for e in &log.epochs {
                println!(
                    "epoch {:>3}  loss {:.4}  train_acc {:.4}  test_acc {:.4}  t_epoch {:.2}s",
                    e.epoch, e.train_loss, e.train_acc, e.test_acc, e.t_epoch
                );
            }
            println!("wrote {out}/runlog.csv, {out}/epochs.csv");
        }
        Command::Spectrum => {
            let summary = harness::cmd_spectrum(&cfg)?;
            for s in &summary {
                let kind = match s.factor {
                    FactorKind::Forward => "forward",
                    FactorKind::Backward => "backward",
                };
                let first = s
                    .first_step_at_threshold
                    .map_or("never".to_string(), |k| k.to_string());
                println!(
                    "layer {} {kind:<8} d={:<5} decay {:.2} orders within {} modes at step {}; threshold first reached: {first}",
                    s.layer, s.d_m, s.final_decay_orders, s.window, s.final_step
                );
            }
            println!(
                "wrote {out}/spectrum.csv, {out}/spectrum_backward.csv, {out}/spectrum_summary.csv"
            );
        }
        Command::Prop31 => {
            let r = harness::cmd_prop31(&cfg)?;
            println!("r_eps = {}, mode_bound = {}", r.r_eps, r.mode_bound);
            println!(
                "empirical: {} trials, {} satisfied the assumption, {} violations",
                r.trials, r.assumption_satisfied, r.violations
            );
            println!("wrote {out}/prop31.json");
        }
        Command::BenchInverse => {
            let r = harness::cmd_bench_inverse(&cfg)?;
            for m in &r.medians {
                println!(
                    "{:<6} d={:<5} median {:.4}s",
                    m.method, m.dim, m.median_seconds
                );
            }
            for (method, slope) in &r.slopes {
                println!("slope {method}: {slope:.2}");
            }
            println!("wrote {out}/bench.csv, {out}/bench_summary.csv, {out}/bench_slopes.json");
        }
        Command::Compare => {
            let r = harness::cmd_compare(&cfg)?;
            for row in &r.rows {
                println!(
                    "{:<9} t_epoch {:.3} ± {:.3}s over {} runs",
                    row.method.name(),
                    row.t_epoch_mean,
                    row.t_epoch_std,
                    row.runs
                );
            }
            println!("wrote {out}/compare.csv, {out}/compare_raw.csv");
        }
    }
    Ok(())
}
