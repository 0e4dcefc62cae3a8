//! `masktok`: train, inspect and use the region-mask tokenizer.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! for data errors.

mod commands;
mod config;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AblateArgs, ConvertArgs, Global, MetricsArgs, RewardArgs, RoundtripArgs, TrainArgs, VocabCmdArgs};

#[derive(Parser)]
#[command(name = "masktok", version, about = "Discrete region-mask tokenizer")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the mask autoencoder on synthetic shapes.
    Train(TrainArgs),
    /// Reconstruct masks through a checkpoint and report IoU and codes.
    Roundtrip(RoundtripArgs),
    /// Train one model per quantizer cell and tabulate r-Acc.
    Ablate(AblateArgs),
    /// Turn annotated samples into text-only dialogues with mask words.
    Convert(ConvertArgs),
    /// Score rollouts against reference answers.
    Reward(RewardArgs),
    /// GRES or set-matching metrics over prediction and truth files.
    Metrics(MetricsArgs),
    /// Print the special-token manifest.
    Vocab(VocabCmdArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let g = &cli.global;
    let result = match &cli.command {
        Command::Train(a) => commands::train(a, g),
        Command::Roundtrip(a) => commands::roundtrip(a, g),
        Command::Ablate(a) => commands::ablate(a, g),
        Command::Convert(a) => commands::convert_corpus(a, g),
        Command::Reward(a) => commands::reward(a, g),
        Command::Metrics(a) => commands::metrics(a, g),
        Command::Vocab(a) => commands::vocab(a, g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
