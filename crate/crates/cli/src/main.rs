mod commands;
mod config;
mod corpus;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Parser, Serialize)]
#[command(name = "pixelbytes", version, about = "Tokenize, train and evaluate PixelBytes sequence models")]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Encode a directory of .txt/.grid/.png/.wav files into corpus.pxtk.
    Tokenize { input: PathBuf },
    /// Write every record of a PXTK file back to text, grid and wav files.
    Detokenize { input: PathBuf },
    /// Apply modality reduction and dump the context arrays.
    BuildSeq { input: PathBuf },
    /// Generate the optimal-control corpus.
    GenControl,
    /// Train a sequence model on a PXTK corpus.
    Train {
        input: PathBuf,
        /// Validation corpus; otherwise the tail of the shuffled input is held out.
        #[arg(long)]
        val: Option<PathBuf>,
        /// predictive, autoregressive or diffusion.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Continue prompts taken from a corpus; writes one id per line.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
    },
    /// Compare generated and reference token files.
    Eval { generated: PathBuf, reference: PathBuf },
    /// Diffusion control against bang-bang on the demo plant.
    ControlDemo {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        repetitions: Option<usize>,
    },
}

const LOCK_NAME: &str = ".pixelbytes.lock";

/// Held while a command writes into the output directory.
struct Lock(PathBuf);

impl Lock {
    fn take(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(LOCK_NAME);
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is in use by another run (remove {} if stale)", dir.display(), path.display())
            }
            Err(e) => Err(e).with_context(|| format!("cannot create {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let _lock = Lock::take(&cli.out)?;
    let record = serde_json::json!({
        "command": &cli.command,
        "seed": cli.seed,
        "config": &config,
    });
    let path = cli.out.join("run_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    let ctx = commands::Ctx {
        seed: cli.seed,
        out: &cli.out,
        config,
    };
    match &cli.command {
        Command::Tokenize { input } => commands::tokenize(&ctx, input),
        Command::Detokenize { input } => commands::detokenize(&ctx, input),
        Command::BuildSeq { input } => commands::build_seq(&ctx, input),
        Command::GenControl => commands::gen_control(&ctx),
        Command::Train {
            input,
            val,
            mode,
            epochs,
        } => commands::train(&ctx, input, val.as_deref(), mode.as_deref(), *epochs),
        Command::Generate { checkpoint, input } => commands::generate(&ctx, checkpoint, input),
        Command::Eval { generated, reference } => commands::eval(&ctx, generated, reference),
        Command::ControlDemo {
            checkpoint,
            repetitions,
        } => commands::control_demo(&ctx, checkpoint, *repetitions),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
