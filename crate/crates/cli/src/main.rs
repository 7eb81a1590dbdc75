//! `ace-icd`: the acronym-expansion and coding pipeline as batch subcommands.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "ace-icd", version, about = "Acronym-expansion augmentation and evaluation for ICD coding")]
struct Cli {
    /// TOML pipeline config. Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every artifact a command reads by default and writes.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Root seed; each component derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split notes into sections and apply the token budget.
    Segment(commands::SegmentArgs),
    /// Rewrite every section with acronyms expanded.
    Expand(commands::ExpandArgs),
    /// Recover (abbreviation, expansion) pairs from original and expanded notes.
    Align(commands::AlignArgs),
    /// Score recovered pairs against gold expansions.
    EvalExpansion(commands::EvalExpansionArgs),
    /// Build cloze prompts for the original and expanded notes.
    BuildPrompts(commands::BuildPromptsArgs),
    /// Train the reference model with the consistency objective.
    Train(commands::TrainArgs),
    /// Score notes with a trained model.
    Score(commands::ScoreArgs),
    /// Tune decision thresholds on a development score file.
    TuneThreshold(commands::TuneThresholdArgs),
    /// Compute AUC, F1 and precision@k for a score file.
    EvalCoding(commands::EvalCodingArgs),
    /// Paired permutation test between two score files.
    PermTest(commands::PermTestArgs),
    /// Average several metrics files.
    Report(commands::ReportArgs),
    /// Write the synthetic acronym corpus.
    Synth(commands::SynthArgs),
    /// Run the synthetic baseline-versus-consistency benchmark.
    Benchmark(commands::BenchmarkArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = cli.output_dir {
        config.paths.output_dir = Some(dir);
    }
    let ctx = Context::new(config.finish()?);
    match cli.command {
        Command::Segment(a) => commands::segment(&ctx, a),
        Command::Expand(a) => commands::expand(&ctx, a),
        Command::Align(a) => commands::align(&ctx, a),
        Command::EvalExpansion(a) => commands::eval_expansion(&ctx, a),
        Command::BuildPrompts(a) => commands::build_prompts(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Score(a) => commands::score(&ctx, a),
        Command::TuneThreshold(a) => commands::tune_threshold(&ctx, a),
        Command::EvalCoding(a) => commands::eval_coding(&ctx, a),
        Command::PermTest(a) => commands::perm_test(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Benchmark(a) => commands::benchmark(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "error": commands::error_kind(&err),
                "message": format!("{err:#}"),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
