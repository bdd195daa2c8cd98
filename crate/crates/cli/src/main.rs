//! `keyetm`: preprocess a corpus, train word embeddings and a
//! keyword-guided topic model, then inspect and evaluate it.
//!
//! Every stage reads a TOML run config and writes into its
//! `paths.output_dir`. Exit codes: 0 ok, 1 other failure, 2 bad input,
//! 3 non-finite values during training, 4 stale upstream artifact,
//! 5 vocabulary or checkpoint mismatch.

mod commands;
mod config;
mod exit;
mod io;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use keyetm::synth::SynthConfig;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "keyetm", version, about = "Keyword-guided embedded topic model")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Imbalanced,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, stem and filter the corpus; write the vocabulary and counts.
    Preprocess(Common),
    /// Train skip-gram embeddings, or align a pretrained file to the vocabulary.
    Embed(Common),
    /// Build the keyword prior and train the model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train without keyword guidance.
        #[arg(long)]
        unguided: bool,
    },
    /// Print each topic's top words.
    Topics {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        json: bool,
        /// Checkpoint to read instead of the one in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Topic coherence, diversity and, for labelled corpora, classification.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Topic proportions for new documents (JSON Lines in, TSV out).
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Input file, or `-` for stdin.
        #[arg(long, default_value = "-")]
        input: String,
        /// Output file, or `-` for stdout.
        #[arg(long, default_value = "-")]
        output: String,
    },
    /// Write word-intrusion items and answer keys, or score responses.
    Intrusion {
        #[command(flatten)]
        common: Common,
        /// Score this JSON Lines file of responses against the stored keys.
        #[arg(long)]
        score: Option<PathBuf>,
    },
    /// Train and evaluate over a grid of regularization weights.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "l1", value_delimiter = ',', required = true)]
        l1: Vec<f64>,
        #[arg(long = "l2", value_delimiter = ',', required = true)]
        l2: Vec<f64>,
    },
    /// Generate a planted-topic corpus with seeds and a config template.
    Synth {
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(c) => commands::preprocess(&c.load()?),
        Command::Embed(c) => commands::embed(&c.load()?),
        Command::Train { common, unguided } => commands::train_cmd(&common.load()?, unguided),
        Command::Topics {
            common,
            top,
            json,
            model,
        } => commands::topics(&common.load()?, model.as_deref(), top, json),
        Command::Eval { common, model } => commands::eval(&common.load()?, model.as_deref()),
        Command::Infer {
            common,
            model,
            input,
            output,
        } => commands::infer(&common.load()?, model.as_deref(), &input, &output),
        Command::Intrusion { common, score } => commands::intrusion(&common.load()?, score.as_deref()),
        Command::Sweep { common, l1, l2 } => commands::sweep(&common.load()?, &l1, &l2),
        Command::Synth { out, preset, seed } => {
            let cfg = match preset {
                Preset::Default => SynthConfig {
                    rng_seed: seed,
                    ..SynthConfig::default()
                },
                Preset::Imbalanced => SynthConfig::imbalanced(seed),
            };
            commands::synth(&out, &cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::exit_code(&e) as u8)
        }
    }
}
