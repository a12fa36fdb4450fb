//! `s2s` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(
    name = "s2s",
    version,
    about = "Zero-shot verb-object recognition from semantic scene blobs"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Model checkpoint to read.
    #[arg(long, global = true, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset into --out.
    GenData,
    /// Train a model on the train side of --data.
    Train {
        /// Input pathway: rgb, s2s or orthovec2s.
        #[arg(long)]
        mode: Option<String>,
        /// Continue from model.s2sm and train_state.s2sm in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint and write eval_<protocol>.json.
    Eval {
        /// verb_transfer or vo_confusion.
        #[arg(long)]
        protocol: Option<String>,
        /// Score with the ground-truth oracle instead of a model.
        #[arg(long)]
        oracle: bool,
    },
    /// Train and evaluate every combiner × Q-Net layout × input mode cell.
    Ablate,
    /// Write per-image features as CSV.
    DumpFeatures {
        /// vnet, qnet, concat_matched or concat_unmatched.
        #[arg(long)]
        which: Option<String>,
    },
    /// Project a feature file to 2-D and draw a scatter plot.
    Plot {
        /// Feature CSV; defaults to <out>/features_<features>.csv.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Label column used for colors.
        #[arg(long)]
        color_by: Option<String>,
    },
}

/// Bad flags or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn resolve(cli: &Cli) -> Result<RunConfig, UsageError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.global.config {
        cfg.apply_file(path).map_err(UsageError)?;
    }
    for kv in &cli.global.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v).map_err(UsageError)?;
    }
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = Some(o.clone());
    }
    if let Some(d) = &g.data {
        cfg.data = d.clone();
    }
    if let Some(c) = &g.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    let mut flag = |k: &str, v: &Option<String>| {
        v.as_deref()
            .map_or(Ok(()), |v| cfg.set(k, v).map_err(UsageError))
    };
    match &cli.command {
        Command::Train { mode, .. } => flag("mode", mode)?,
        Command::Eval { protocol, .. } => flag("protocol", protocol)?,
        Command::DumpFeatures { which } => flag("features", which)?,
        Command::Plot { color_by, .. } => flag("color_by", color_by)?,
        Command::GenData | Command::Ablate => {}
    }
    if cfg.out.is_none() {
        return Err(UsageError("--out is required".into()));
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve(&cli)?;
    commands::echo_config(&cfg)?;
    match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train { resume, .. } => commands::train(&cfg, resume),
        Command::Eval { oracle, .. } => commands::eval(&cfg, oracle),
        Command::Ablate => commands::ablate(&cfg),
        Command::DumpFeatures { .. } => commands::dump_features(&cfg),
        Command::Plot { input, .. } => commands::plot(&cfg, input),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<s2s_core::S2sError>(),
                    Some(s2s_core::S2sError::Config(_))
                );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
