mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lazyrag::engine::Mode;
use lazyrag::workload::CharsDist;

#[derive(Debug, Parser)]
#[command(
    name = "lazyrag",
    version,
    about = "Memory-lean two-level vector retrieval with on-demand embedding generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk, embed, cluster and profile a corpus into a store directory.
    Build(BuildArgs),
    /// Replay a query trace and write a metrics report.
    Query(QueryArgs),
    /// Find the smallest nprobe reaching a target recall.
    Sweep(SweepArgs),
    /// Generate a synthetic corpus and query trace.
    Synth(SynthArgs),
    /// Print the manifest of a built store.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Corpus file, JSON Lines of {"id", "text"}.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    /// TOML settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of clusters (default ceil(sqrt(chunks))).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Latency objective in seconds.
    #[arg(long)]
    pub slo: Option<f64>,
    /// Clustering seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Query trace, JSON Lines of {"qid", "text", "relevant_ids"?}.
    #[arg(long)]
    pub trace: PathBuf,
    /// flat, ivf, gen-only, gen-load or full.
    #[arg(long, default_value = "full")]
    pub mode: Mode,
    #[arg(long, default_value_t = 4)]
    pub nprobe: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    /// Settings file overriding the ones saved with the store.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cache capacity in bytes.
    #[arg(long)]
    pub cache_bytes: Option<u64>,
    /// Replay against a frozen snapshot on all cores; cache state never changes.
    #[arg(long)]
    pub parallel_readonly: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    /// Target mean recall@k in [0, 1].
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Optional JSON output for the curve.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for corpus.jsonl and trace.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub n_chunks: usize,
    #[arg(long, default_value_t = 100)]
    pub n_topics: usize,
    /// fixed:N or uniform:LO:HI characters per chunk.
    #[arg(long, default_value = "fixed:512")]
    pub chars: CharsDist,
    #[arg(long, default_value_t = 1.5)]
    pub skew: f64,
    #[arg(long, default_value_t = 2.0)]
    pub reuse_ratio: f64,
    #[arg(long, default_value_t = 500)]
    pub n_queries: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Include centroid vectors.
    #[arg(long)]
    pub full: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Build(a) => commands::build(&a),
        Command::Query(a) => commands::query(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Inspect(a) => commands::inspect(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
