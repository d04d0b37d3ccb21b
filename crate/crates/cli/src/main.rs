//! `attn-graphs`: dataset conversion, grid training, attention analysis and
//! the reproduction report.

mod analyze_cmd;
mod dataset_cmd;
mod layout;
mod manifest;
mod pbm;
mod report_cmd;
mod train_cmd;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use attn_graphs::dataset::DatasetError;
use attn_graphs::homophily::ClassShareWeighting;
use attn_graphs::reference::ReferenceValues;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::dataset_cmd::Format;
use crate::layout::Layout;
use crate::manifest::{parse_seed_list, AnalysisSeeds, Manifest, ManifestError};

/// Version stamped into every JSON artifact written by the tool.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{} cell(s) failed", .0.len())]
    Cells(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Manifest(_) | Self::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "attn-graphs", version, about = "Attention graphs of graph transformers")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Retrain runs whose artifacts already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Override the manifest seeds, e.g. `0..3,7`.
    #[arg(long, global = true)]
    seed_list: Option<String>,
    /// Output root.
    #[arg(long, global = true, env = "ATTN_GRAPHS_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert, inspect and validate graph files.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train every cell of a manifest.
    Train(ManifestArg),
    /// Analyze the stored attention of every cell.
    Analyze(AnalyzeArgs),
    /// Compare reproduced values with the bundled reference values.
    Report(ManifestArg),
}

#[derive(clap::Args)]
struct ManifestArg {
    #[arg(short, long)]
    manifest: PathBuf,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(short, long)]
    manifest: PathBuf,
    /// Which training seeds to analyze.
    #[arg(long)]
    seeds: Option<AnalysisSeeds>,
    /// Score structure recovery on off-diagonal pairs only.
    #[arg(long)]
    f1_exclude_diagonal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Degree,
    Uniform,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Convert upstream dumps or other formats to `.agrf` / `.jsonl`.
    Convert {
        #[arg(long, value_enum)]
        format: Format,
        /// Output path; a `.jsonl` extension selects the line format.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        name: Option<String>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print statistics as JSON.
    Stats {
        path: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Also report the split generated with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stratified: bool,
        /// Class share weighting for adjusted homophily.
        #[arg(long = "homophily-shares", value_enum, default_value = "degree")]
        weighting: Weighting,
    },
    /// Load a file and list repaired irregularities.
    Validate {
        path: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn load_manifest(cli: &Cli, path: &PathBuf) -> Result<(Manifest, Layout), CliError> {
    let mut m = Manifest::load(path)?;
    if let Some(list) = &cli.seed_list {
        m.set_seeds(parse_seed_list(list).map_err(CliError::Config)?)?;
    }
    let root = cli.out.clone().or_else(|| m.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    log::info!("manifest {} ({} cells, sha256 {}), output {}", m.path.display(), m.cells.len(), m.sha256, root.display());
    Ok((m, Layout::new(root)))
}

fn cell_failures(failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Err(CliError::Cells(failures))
}

fn dataset(command: &DatasetCommand) -> Result<(), CliError> {
    match command {
        DatasetCommand::Convert { format, output, name, inputs } => {
            let g = dataset_cmd::convert(*format, inputs, output, name.as_deref())?;
            println!("wrote {} ({} nodes, {} directed edges)", output.display(), g.n(), g.directed_edge_count());
        }
        DatasetCommand::Stats { path, format, seed, stratified, weighting } => {
            let (g, _) = dataset_cmd::load_any(path, *format)?;
            let weighting = match weighting {
                Weighting::Degree => ClassShareWeighting::Degree,
                Weighting::Uniform => ClassShareWeighting::Uniform,
            };
            let out = dataset_cmd::stats(&g, weighting, *seed, *stratified)?;
            println!("{}", serde_json::to_string_pretty(&out).map_err(io::Error::other)?);
        }
        DatasetCommand::Validate { path, format } => {
            let (g, warnings) = dataset_cmd::load_any(path, *format)?;
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("ok: {} nodes, {} directed edges, {} classes", g.n(), g.directed_edge_count(), g.n_classes());
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Dataset { command } => dataset(command),
        Command::Train(args) => {
            let (m, layout) = load_manifest(cli, &args.manifest)?;
            let outcome = train_cmd::run(&m, &layout, cli.force)?;
            println!("trained {} runs; {} cells summarized", outcome.trained, outcome.summaries.len());
            cell_failures(outcome.failures)
        }
        Command::Analyze(args) => {
            let (mut m, layout) = load_manifest(cli, &args.manifest)?;
            if let Some(s) = args.seeds {
                m.analysis.seeds = s;
            }
            if args.f1_exclude_diagonal {
                m.analysis.options.f1_include_diagonal = false;
            }
            let outcome = analyze_cmd::run(&m, &layout)?;
            println!("analyzed {} cells", outcome.index.cells.len());
            cell_failures(outcome.failures)
        }
        Command::Report(args) => {
            let (m, layout) = load_manifest(cli, &args.manifest)?;
            let report = report_cmd::run(&m, &layout, &ReferenceValues::bundled())?;
            print!("{}", report_cmd::render_text(&report));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| execute(&cli)),
        Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
