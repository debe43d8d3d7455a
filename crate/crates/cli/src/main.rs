use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrid_fpn::fpn::SnrRegime;
use hybrid_fpn_cli::commands::generate::GenerateRequest;
use hybrid_fpn_cli::commands::train::TrainRequest;
use hybrid_fpn_cli::commands::{benchmark, convergence, generate, train, verify};
use hybrid_fpn_cli::dataset::Split;
use hybrid_fpn_cli::{CliError, CliResult, Context, ExperimentConfig, Preset};

/// Hybrid far/near-field THz channel estimation experiments.
#[derive(Parser)]
#[command(name = "hybrid-fpn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; takes precedence over --preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in config to start from.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: Preset,
    /// Overrides the seed the subcommand draws from (dataset, training,
    /// sweep noise or check instances).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Restrict to one SNR regime (default: both).
    #[arg(long, global = true, value_enum)]
    regime: Option<RegimeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Low,
    High,
}

impl From<RegimeArg> for SnrRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Low => SnrRegime::Low,
            RegimeArg::High => SnrRegime::High,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write dataset shards under <out>/data.
    Generate {
        /// Only this split (default: all).
        #[arg(long, value_enum)]
        split: Option<Split>,
        /// Records per shard instead of the configured count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the denoiser for one or both regimes.
    Train {
        /// Continue from the last saved epoch.
        #[arg(long)]
        resume: bool,
        #[arg(long, value_name = "PATH")]
        train_shard: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        val_shard: Option<PathBuf>,
    },
    /// NMSE versus SNR for every method (nmse_vs_snr.csv).
    Benchmark {
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Per-iteration NMSE and fixed point gaps (per_iteration.csv, gap.csv).
    Convergence {
        #[arg(long)]
        plots: bool,
    },
    /// Run the invariant checks on the ensemble, shards and weights.
    Verify,
}

fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(common.preset),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = resolve(&cli.common)?;
    let regime = cli.common.regime.map(SnrRegime::from);
    let seed = cli.common.seed;
    match &cli.command {
        Command::Generate { .. } => cfg.dataset.seed = seed.unwrap_or(cfg.dataset.seed),
        Command::Train { .. } => cfg.train_seed = seed.unwrap_or(cfg.train_seed),
        Command::Benchmark { .. } | Command::Convergence { .. } => cfg.sweep.seed = seed.unwrap_or(cfg.sweep.seed),
        Command::Verify => {}
    }
    let out = cfg.output_dir.clone();
    let ctx = Context::new(cfg, out)?;
    match cli.command {
        Command::Generate { split, count } => {
            generate::run(&ctx, &GenerateRequest { split, regime, count })?;
        }
        Command::Train { resume, train_shard, val_shard } => {
            let regimes = match regime {
                Some(r) => vec![r],
                None if train_shard.is_some() || val_shard.is_some() => {
                    return Err(CliError::Config("explicit shards need --regime".into()));
                }
                None => vec![SnrRegime::Low, SnrRegime::High],
            };
            for regime in regimes {
                let req =
                    TrainRequest { regime, resume, train_shard: train_shard.clone(), val_shard: val_shard.clone() };
                let summary = train::run(&ctx, &req)?;
                eprintln!("wrote {} (peak tape {} bytes)", summary.weights_path.display(), summary.peak_tape_bytes);
            }
        }
        Command::Benchmark { plots } => {
            benchmark::run(&ctx, plots)?;
        }
        Command::Convergence { plots } => {
            let report = convergence::run(&ctx, plots)?;
            for g in &report.gaps {
                eprintln!("gap fit at {} dB: R² = {:.4}", g.snr_db, g.r2);
            }
        }
        Command::Verify => {
            let checks = verify::run(&ctx, seed.unwrap_or(0))?;
            for c in &checks {
                println!("{}", c.line());
            }
            if let Some(bad) = checks.iter().find(|c| !c.passed) {
                return Err(CliError::Numerical(format!("check failed: {}", bad.name)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
