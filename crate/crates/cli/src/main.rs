use anyhow::Result;
use clap::{Parser, Subcommand};
use fiberscope::{analyze, compare, dataset, eval, serve};

#[derive(Debug, Parser)]
#[command(name = "fiberscope", version, about = "Muscle fiber and vessel segmentation and morphometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment and measure whole-slide images.
    Analyze(analyze::AnalyzeArgs),
    /// Score analysis results against annotations.
    Eval(eval::EvalArgs),
    /// Compare a measurement between groups of results.
    Compare(compare::CompareArgs),
    /// Training-set preparation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the HTTP job service.
    Serve(serve::ServeArgs),
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Tile, augment, split and export annotated images.
    Prepare(dataset::PrepareArgs),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Analyze(a) => analyze::run(&a),
        Command::Eval(a) => eval::run(&a).map(|_| ()),
        Command::Compare(a) => compare::run(&a).map(|_| ()),
        Command::Dataset(DatasetCommand::Prepare(a)) => dataset::run(&a).map(|_| ()),
        Command::Serve(a) => serve::run(&a),
    }
}
