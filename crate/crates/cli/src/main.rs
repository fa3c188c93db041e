//! Command-line driver for text-rich network classification: generate or
//! ingest a corpus, build the network and its random-walk neighborhoods,
//! run the joint text/network training loop, classify new documents, and
//! score predictions.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments, malformed
//! input, mismatched labels), 2 runtime failure (IO, training divergence).

mod commands;
mod config;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::TrainArgs;

#[derive(Parser)]
#[command(
    name = "tricat",
    version,
    about = "Minimally supervised document classification over text-rich networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-structure synthetic corpus and label space.
    Synth {
        /// TOML file with generator settings; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Receives corpus.jsonl and labels.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the text-rich network and cache its random-walk neighborhoods.
    BuildNet {
        /// Corpus as JSONL, one document per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Label space as JSON.
        #[arg(long)]
        labels: PathBuf,
        /// Run configuration TOML; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Receives nodes.tsv, edges.tsv, and the neighbor-table cache.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the joint training loop and write checkpoints, trace, and
    /// predictions.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Seed labels as TSV (doc id, label id); selected from gold labels
        /// when omitted.
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// Labeled development corpus; scored each iteration into the trace.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Reuse a build-net output directory (network + neighbor cache).
        #[arg(long)]
        network_dir: Option<PathBuf>,
        /// Fixed per-document vectors (TSV); replaces the trainable text
        /// embeddings, classifier head still trains.
        #[arg(long)]
        external_embeddings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Receives seeds.tsv, trace.jsonl, checkpoints, predictions.tsv.
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Classify documents with a trained text model (inductive: no network
    /// files needed).
    Predict {
        /// Text-model checkpoint JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Predictions TSV (doc id, label id, confidence).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against gold labels; report as pretty JSON.
    Eval {
        /// Predictions TSV from train or predict.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    // Restore the default SIGPIPE disposition so that a closed downstream
    // pipe (`tricat eval | head`) kills the process quietly, as Unix tools
    // are expected to die, instead of panicking on the next write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            // Usage problems are validation errors: print usage, exit 1.
            eprint!("{e}");
            return 1;
        }
    };
    let result = match &cli.command {
        Command::Synth { spec, out_dir } => commands::synth(spec.as_deref(), out_dir),
        Command::BuildNet { corpus, labels, config, out_dir } => {
            commands::build_net(corpus, labels, config.as_deref(), out_dir)
        }
        Command::Train {
            corpus,
            labels,
            seeds,
            dev,
            network_dir,
            external_embeddings,
            config,
            run_dir,
        } => commands::train(&TrainArgs {
            corpus,
            labels,
            seeds: seeds.as_deref(),
            dev: dev.as_deref(),
            network_dir: network_dir.as_deref(),
            external_embeddings: external_embeddings.as_deref(),
            config: config.as_deref(),
            run_dir,
        }),
        Command::Predict { model, corpus, labels, out } => {
            commands::predict(model, corpus, labels, out)
        }
        Command::Eval { predictions, corpus, labels, out } => {
            commands::eval(predictions, corpus, labels, out.as_deref())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
