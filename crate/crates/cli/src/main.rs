//! `dsalm`: data generation, training, distillation and evaluation as
//! separate subcommands. Every artifact is written atomically next to a
//! `.config` snapshot holding the resolved settings that produced it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "dsalm",
    version,
    about = "Syntax-aware distillation of RNNGs into LSTM language models"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Experiment config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for all randomness in this run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for caching, evaluation and feature extraction.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a treebank from a grammar, or take the teacher subset of one.
    GenCorpus(commands::GenCorpus),
    /// Generate minimal pairs for the grammar's constructions.
    GenPairs(commands::GenPairs),
    /// Train an LSTM language model.
    TrainLstm(commands::TrainLstm),
    /// Train an RNNG on a treebank.
    TrainRnng(commands::TrainRnng),
    /// Precompute the teacher RNNG's word-prediction states over a treebank.
    CacheTeacher(commands::CacheTeacher),
    /// Train an LSTM student against a teacher.
    TrainDistill(commands::TrainDistill),
    /// Beam-search parses of each sentence under an RNNG.
    Decode(commands::Decode),
    /// Corpus perplexity (a beam lower bound on the marginal for an RNNG).
    Ppl(commands::Ppl),
    /// Score a model on minimal pairs.
    EvalSuite(commands::EvalSuite),
    /// Fit a grandparent-label probe on LSTM hidden states.
    Probe(commands::Probe),
    /// Aggregate suite results into a comparison table.
    Report(commands::Report),
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors before we get here
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let run = match cli.command {
        Command::GenCorpus(c) => c.run(&cli.common),
        Command::GenPairs(c) => c.run(&cli.common),
        Command::TrainLstm(c) => c.run(&cli.common),
        Command::TrainRnng(c) => c.run(&cli.common),
        Command::CacheTeacher(c) => c.run(&cli.common),
        Command::TrainDistill(c) => c.run(&cli.common),
        Command::Decode(c) => c.run(&cli.common),
        Command::Ppl(c) => c.run(&cli.common),
        Command::EvalSuite(c) => c.run(&cli.common),
        Command::Probe(c) => c.run(&cli.common),
        Command::Report(c) => c.run(&cli.common),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            if e.is::<commands::UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// The error chain joined by `: `, skipping causes a message already quotes.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}
