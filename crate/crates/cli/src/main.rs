use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dcn_core::graph::{GraphFormat, GraphSpec};

mod commands;
mod experiment;
mod report;

/// Analyze connectomes, compile them into architectures, and train and
/// evaluate connectome-wired classifiers.
#[derive(Parser, Debug)]
#[command(name = "dcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print and save small-world statistics of a graph.
    Analyze(AnalyzeArgs),
    /// Orient a graph into an architecture DAG.
    Compile(CompileArgs),
    /// Train one model or a series of trials from an experiment file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled test set.
    Eval(EvalArgs),
    /// Collect finished runs into report.csv and report.svg.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// GraphML or edge-list file.
    path: Option<PathBuf>,
    /// File format; inferred from the extension when absent.
    #[arg(long, value_parser = parse_format)]
    format: Option<GraphFormat>,
    /// Watts-Strogatz generator instead of a file.
    #[arg(long, value_name = "N,K[,P[,SEED]]", conflicts_with = "path")]
    ws: Option<String>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Seed of the community search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the statistics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Seed of the node permutation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dag.json")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Experiment JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Exclude graph-module parameters from optimization.
    #[arg(long)]
    freeze_graph: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with the test files under their distribution names.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Defaults to the checkpoint's training batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories, searched recursively.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_format(s: &str) -> Result<GraphFormat, String> {
    s.parse().map_err(|e: dcn_core::Error| e.to_string())
}

impl GraphArgs {
    fn spec(&self) -> Result<GraphSpec, commands::UsageError> {
        match (&self.path, &self.ws) {
            (Some(path), None) => Ok(GraphSpec::file(path.clone(), self.format)),
            (None, Some(ws)) if self.format.is_none() => parse_ws(ws),
            (None, Some(_)) => Err(commands::UsageError("--format applies to graph files only".into())),
            _ => Err(commands::UsageError("give a graph file or --ws".into())),
        }
    }
}

fn parse_ws(text: &str) -> Result<GraphSpec, commands::UsageError> {
    let bad = || commands::UsageError(format!("--ws expects N,K[,P[,SEED]], got `{text}`"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if !(2..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let n = parts[0].parse().map_err(|_| bad())?;
    let k = parts[1].parse().map_err(|_| bad())?;
    let p = parts.get(2).map_or(Ok(0.0), |s| s.parse()).map_err(|_| bad())?;
    let seed = parts.get(3).map_or(Ok(0), |s| s.parse()).map_err(|_| bad())?;
    Ok(GraphSpec::ws(n, k, p, seed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = commands::configure_threads().and_then(|()| match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Compile(a) => commands::compile(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
