//! `achords`: train, apply and calibrate a subspace LVQ document classifier.

mod commands;
mod failure;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::{Failure, Kind, Outcome};
use manifest::Manifest;
use settings::{Flags, Settings};

#[derive(Parser, Debug)]
#[command(name = "achords", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Split a labeled corpus, train a model and report held-out accuracy.
    Train,
    /// Accuracy, confusion matrix and per-class precision/recall on a labeled corpus.
    Evaluate,
    /// Predicted label (and score for binary models) per case.
    Predict,
    /// Per-word impacts for each case.
    Explain,
    /// Score and rank a corpus for the positive label.
    ScoreCorpus,
    /// Re-rank a scored table and assign percentiles.
    Rank,
    /// Fraction of annotated positives per percentile band and the implied threshold.
    Calibrate,
    /// Draw cases per percentile band for manual annotation.
    Sample,
    /// Compare analytic gradients with finite differences on random problems.
    GradCheck,
    /// Write a synthetic two-class corpus with its embeddings.
    SynthData,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Predict => "predict",
            Command::Explain => "explain",
            Command::ScoreCorpus => "score-corpus",
            Command::Rank => "rank",
            Command::Calibrate => "calibrate",
            Command::Sample => "sample",
            Command::GradCheck => "grad-check",
            Command::SynthData => "synth-data",
        }
    }
}

fn run(command: Command, settings: &Settings) -> Outcome {
    let mut manifest = Manifest::begin(command.name(), settings)?;
    let result = match command {
        Command::Train => commands::train(settings, &mut manifest),
        Command::Evaluate => commands::evaluate(settings, &mut manifest),
        Command::Predict => commands::predict(settings, &mut manifest),
        Command::Explain => commands::explain(settings, &mut manifest),
        Command::ScoreCorpus => commands::score_corpus(settings, &mut manifest),
        Command::Rank => commands::rank_scores(settings, &mut manifest),
        Command::Calibrate => commands::calibrate_bands(settings, &mut manifest),
        Command::Sample => commands::sample(settings, &mut manifest),
        Command::GradCheck => commands::grad_check(settings, &mut manifest),
        Command::SynthData => commands::synth_data(settings, &mut manifest),
    };
    manifest.finish(&result)?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", Failure::new(Kind::Usage, first).line());
            return ExitCode::from(Kind::Usage.exit_code() as u8);
        }
    };
    let result = Settings::resolve(cli.flags).and_then(|s| run(cli.command, &s));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
