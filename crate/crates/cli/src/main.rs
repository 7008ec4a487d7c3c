//! `mmsa`: train and evaluate fusion models, extract MFCCs, generate
//! synthetic data and run the gradient-check suite.
//!
//! Exit codes: 0 success, 2 config, 3 data, 4 numeric.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{sidecar_path, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "mmsa",
    version,
    about = "Symmetric cross-modal fusion for multimodal sentiment analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration sources, applied as: defaults, `--config`, then each `--set`.
#[derive(Args, Clone, Default)]
struct Sources {
    /// File of `key=value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one key; repeatable, last wins.
    #[arg(long = "set", value_name = "K=V")]
    sets: Vec<String>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    #[command(flatten)]
    sources: Sources,
    /// Same as `--set seed=N`, applied after all `--set`s.
    #[arg(long)]
    seed: Option<u64>,
    /// Same as `--set out=PATH`, applied after all `--set`s.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the configured split; `--out DIR` receives model.ckpt (plus
    /// model.ckpt.cfg), history.csv and metrics.csv.
    Train(RunArgs),
    /// Evaluate `checkpoint=PATH` on `eval_split` (default test); `--out PATH`
    /// also writes the metrics CSV.
    Eval(RunArgs),
    #[command(subcommand)]
    Tools(Tool),
}

#[derive(Subcommand)]
enum Tool {
    /// Writes a modality-A feature file with one sample named after the input.
    Mfcc {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        sources: Sources,
    },
    /// Writes train/test feature files for V, A, T plus two label files.
    Synth {
        /// Samples per class, same as `--set n_per_class=N`.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Runs the gradient-check suite and prints one row per check.
    Gradcheck {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn build_config(sidecar: Option<&Path>, run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = sidecar {
        cfg.apply_file(p)?;
    }
    if let Some(p) = &run.sources.config {
        cfg.apply_file(p)?;
    }
    for s in &run.sources.sets {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = run.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &run.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

/// For `eval`, the checkpoint's sidecar supplies model keys beneath the
/// explicit sources.
fn build_eval_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let first = build_config(None, run)?;
    match &first.checkpoint {
        Some(ckpt) if sidecar_path(ckpt).is_file() => build_config(Some(&sidecar_path(ckpt)), run),
        _ => Ok(first),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MMSA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        CliError::Config(format!(
            "MMSA_THREADS must be a positive integer, found {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Train(run) => commands::train(&build_config(None, &run)?),
        Command::Eval(run) => commands::eval(&build_eval_config(&run)?),
        Command::Tools(Tool::Mfcc {
            input,
            output,
            sources,
        }) => {
            let cfg = build_config(
                None,
                &RunArgs {
                    sources,
                    ..Default::default()
                },
            )?;
            commands::tool_mfcc(&cfg, &input, &output)
        }
        Command::Tools(Tool::Synth { n, run }) => {
            let mut cfg = build_config(None, &run)?;
            if let Some(n) = n {
                cfg.set("n_per_class", &n.to_string())?;
            }
            commands::tool_synth(&cfg)
        }
        Command::Tools(Tool::Gradcheck { run }) => {
            commands::tool_gradcheck(&build_config(None, &run)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
