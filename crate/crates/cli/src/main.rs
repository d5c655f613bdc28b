use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kspace_cli::{commands, CliError, RunConfig};

/// Learn and analyse adaptive Cartesian k-space subsampling policies.
#[derive(Parser)]
#[command(name = "kspace", version = kspace_cli::VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints, metrics.csv and test.csv.
    Train(Common),
    /// Evaluate checkpoints on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Compare random, equispaced and oracle strategies.
    Oracle(Common),
    /// Per-step policy entropies and mutual information.
    Mi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Gradient signal-to-noise ratio at the given checkpoints.
    Snr {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
    },
    /// Baseline schedules and, with a checkpoint, the policy's column heatmap.
    Masks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the configured dataset as PGM images with a manifest.
    Phantoms(Common),
}

/// Options shared by every subcommand. Flags override `--config` keys,
/// which override the defaults.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// `generate` or a directory of PGM files.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Train, validation and test fractions, comma separated.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    recon_dir: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    q_eval: Option<usize>,
    #[arg(long)]
    mi_replicates: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    snr_batches: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: Vec<(&str, Option<String>)> = vec![
            ("mode", self.mode.clone()),
            ("data", self.data.clone()),
            ("count", self.count.map(|v| v.to_string())),
            ("size", self.size.map(|v| v.to_string())),
            ("width", self.width.map(|v| v.to_string())),
            ("L", self.l.map(|v| v.to_string())),
            ("M", self.m.map(|v| v.to_string())),
            ("q", self.q.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("data_seed", self.data_seed.map(|v| v.to_string())),
            ("split", self.split.clone()),
            ("window", self.window.clone()),
            ("recon_dir", self.recon_dir.as_ref().map(|p| p.display().to_string())),
            ("arch", self.arch.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("schedule", self.schedule.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("q_eval", self.q_eval.map(|v| v.to_string())),
            ("mi_replicates", self.mi_replicates.map(|v| v.to_string())),
            ("bootstrap", self.bootstrap.map(|v| v.to_string())),
            ("snr_batches", self.snr_batches.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("`--set {kv}` is not key=value")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => commands::train(&c.resolve()?).map(drop),
        Command::Eval { common, checkpoint } => commands::eval(&common.resolve()?, &checkpoint).map(drop),
        Command::Oracle(c) => commands::oracle(&c.resolve()?).map(drop),
        Command::Mi { common, checkpoint } => commands::mi(&common.resolve()?, &checkpoint).map(drop),
        Command::Snr { common, checkpoint } => commands::snr(&common.resolve()?, &checkpoint).map(drop),
        Command::Masks { common, checkpoint } => {
            commands::masks(&common.resolve()?, checkpoint.as_deref()).map(drop)
        }
        Command::Phantoms(c) => commands::phantoms(&c.resolve()?).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
