use anyhow::{bail, Context};
use auxformer::eval::CorruptionMode;
use auxformer_cli::commands;
use auxformer_cli::config::ExperimentConfig;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Train and evaluate a mask-aware spatial-temporal attention network for
/// skeleton motion prediction on synthetic data.
#[derive(Parser)]
#[command(name = "auxformer", version, about)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: AUXF_THREADS or all cores). Results are
    /// identical for every thread count; --threads=1 forces fully serial
    /// execution.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Replace existing output files instead of refusing to clobber them.
    #[arg(long, global = true)]
    overwrite: bool,

    /// Override single configuration keys, e.g. --set epochs=3.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Missing,
    Noisy,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion dataset with a manifest.
    Gen {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on a generated dataset and write a checkpoint plus report CSV.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Report CSV path (default: checkpoint path with .report.csv).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Comma-separated future-frame offsets (default: configured).
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the four task combinations and compare test MPJPE.
    Ablate {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Additional full-configuration rows at these training mask ratios.
        #[arg(long, value_delimiter = ',')]
        mask_ratios: Option<Vec<f64>>,
    },
    /// Sweep test-time corruption ratios against a checkpoint.
    Robust {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Noise deviation in mm for noisy mode (default: configured).
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the full-loss gradient against central finite differences;
    /// exits nonzero when the max relative error exceeds 1e-4.
    Gradcheck,
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("AUXF_THREADS") {
            Ok(v) => Some(v.parse().context("AUXF_THREADS must be an integer")?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool init")?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;

    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::Gen { out_dir } => {
            let manifest = commands::cmd_gen(&cfg, &out_dir, cli.overwrite)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train {
            data_dir,
            out_checkpoint,
            report,
        } => {
            commands::cmd_train(
                &cfg,
                &data_dir,
                &out_checkpoint,
                report.as_deref(),
                cli.overwrite,
            )?;
            println!("wrote {}", out_checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            data_dir,
            horizons,
            out,
        } => {
            let result = commands::cmd_eval(
                &cfg,
                &checkpoint,
                &data_dir,
                horizons.as_deref(),
                &out,
                cli.overwrite,
            )?;
            for (h, v) in result.horizons.iter().zip(&result.mpjpe) {
                let ms = *h as f64 * 1000.0 / result.frame_rate;
                println!("mpjpe@{ms}ms: {v:.3}");
            }
            println!("wrote {}", out.display());
        }
        Command::Ablate {
            data_dir,
            out,
            mask_ratios,
        } => {
            let csv =
                commands::cmd_ablate(&cfg, &data_dir, &out, mask_ratios.as_deref(), cli.overwrite)?;
            print!("{csv}");
            println!("wrote {}", out.display());
        }
        Command::Robust {
            checkpoint,
            data_dir,
            mode,
            ratios,
            sigma,
            out,
        } => {
            let mode = match mode {
                ModeArg::Missing => CorruptionMode::Missing,
                ModeArg::Noisy => CorruptionMode::Noisy,
            };
            commands::cmd_robust(
                &cfg,
                &checkpoint,
                &data_dir,
                mode,
                &ratios,
                sigma,
                &out,
                cli.overwrite,
            )?;
            println!("wrote {}", out.display());
        }
        Command::Gradcheck => {
            let err = commands::cmd_gradcheck(&cfg)?;
            println!("max relative gradient error: {err:.3e}");
            if err > 1e-4 {
                bail!("gradient check failed: {err:.3e} > 1e-4");
            }
        }
    }
    Ok(())
}
