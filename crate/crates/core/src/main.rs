use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ecx::cli::{self, DatasetCommand};
use ecx::config::RunConfig;
use ecx::{container, Error, Result};

#[derive(Parser)]
#[command(name = "ecx", version, about = "Emotion-cause explanation for conversational video")]
struct Args {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (fuse: required; dataset dedup: directory; others: JSON instead of stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a [T,H,W,C] video container into (T+N)xK tokens.
    Fuse { video: PathBuf },
    /// Detect and classify faces in every frame.
    Faces { video: PathBuf },
    /// Generate a cause explanation for one utterance.
    Explain {
        corpus: PathBuf,
        #[arg(long)]
        conversation: String,
        /// Defaults to the last utterance.
        #[arg(long)]
        utterance: Option<String>,
    },
    /// Score predictions against references ({"id","text"} JSON lines).
    Score { predictions: PathBuf, references: PathBuf },
    /// Corpus construction tooling.
    Dataset {
        #[arg(value_enum)]
        action: Action,
        corpus: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Action {
    Clips,
    Dedup,
    Gate,
    Stats,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(args: Args) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args.out.as_deref();
    match args.command {
        Command::Fuse { video } => {
            let out = out.ok_or_else(|| Error::Input("fuse needs --out FILE".into()))?;
            let tokens = cli::cmd_fuse(&video, &cfg)?;
            container::save(out, tokens.values())?;
            println!("{}x{}", tokens.rows(), tokens.width());
        }
        Command::Faces { video } => emit(out, &cli::to_json(&cli::cmd_faces(&video, &cfg)?))?,
        Command::Explain {
            corpus,
            conversation,
            utterance,
        } => {
            let (result, latency_ms) = cli::cmd_explain(&corpus, &conversation, utterance.as_deref(), &cfg)?;
            eprintln!("latency_ms={latency_ms:.3}");
            emit(out, &cli::to_json(&result))?;
        }
        Command::Score {
            predictions,
            references,
        } => emit(out, &cli::to_json(&cli::cmd_score(&predictions, &references, &cfg)?))?,
        Command::Dataset { action, corpus } => {
            let sub = match action {
                Action::Clips => DatasetCommand::Clips,
                Action::Dedup => DatasetCommand::Dedup,
                Action::Gate => DatasetCommand::Gate,
                Action::Stats => DatasetCommand::Stats,
            };
            let res = cli::cmd_dataset(sub, &corpus, &cfg, out)?;
            for n in &res.notes {
                eprintln!("note: {n}");
            }
            let text = cli::to_json(&res.report);
            match sub {
                // --out names the container directory here
                DatasetCommand::Dedup => emit(None, &text)?,
                _ => emit(out, &text)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
