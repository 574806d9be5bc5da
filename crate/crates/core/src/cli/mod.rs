//! Command-line front end.
//!
//! Reports and tables go to the files named by flags; stdout carries short
//! summaries only. Every failure prints one `ERROR <code>: <detail>` line on
//! stderr and exits with that code: 1 failed check, 2 usage, 3 schema,
//! 4 missing data, 5 numeric degeneracy.

mod commands;
mod config_file;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::error::DysemError;
use crate::vector::{ComponentKind, VectorMode, DEFAULT_K};

#[derive(Debug)]
pub(crate) enum CliError {
    Dysem(DysemError),
    Usage(String),
    /// A check ran to completion and did not pass.
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Dysem(e) => e.exit_code(),
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 1,
        }
    }

    fn detail(&self) -> String {
        match self {
            CliError::Dysem(e) => e.to_string(),
            CliError::Usage(s) | CliError::CheckFailed(s) => s.clone(),
        }
    }
}

impl From<DysemError> for CliError {
    fn from(e: DysemError) -> Self {
        CliError::Dysem(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "dysem", version, about = "Activation-based semantic similarity")]
pub(crate) struct Cli {
    /// File of `key = value` lines supplying flag defaults; command-line flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads [default: available parallelism]
    #[arg(long, global = true, env = "DYSEM_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub(crate) enum Command {
    /// Check h^L = h^0 + A^L + F^L on seeded tiny models
    SelftestTinylm(SelftestArgs),
    /// Score pairs and write a report
    Eval(EvalArgs),
    /// Evaluate across k, components, layers or languages and write a TSV table
    Sweep(SweepArgs),
    /// Rank languages from single-language reports
    RankLanguages(RankArgs),
    /// Build, extend or query a similarity index
    #[command(subcommand)]
    Index(IndexCommand),
    /// Check a bundle against the schema (exit 0 valid, 1 invalid)
    ValidateBundle(ValidateArgs),
    /// Generate synthetic fixtures
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub(crate) struct SimArgs {
    /// Semantic dimension budget per text
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,

    /// Representation vector: `source` rendering or pool `mean`
    #[arg(long, default_value_t = VectorMode::Mean)]
    vector: VectorMode,

    /// Comma-separated language pool [default: languages present in every record]
    #[arg(long, value_delimiter = ',', value_name = "LANGS")]
    pool: Vec<String>,

    /// Component to use when bundles of several components are given, e.g. `attn_cum` or `attn_layer:3`
    #[arg(long)]
    component: Option<ComponentKind>,
}

#[derive(Debug, Args)]
pub(crate) struct SelftestArgs {
    /// Model width
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Number of layers
    #[arg(long, default_value_t = 4)]
    layers: usize,
    /// Attention heads
    #[arg(long, default_value_t = 4)]
    heads: usize,
    /// Feed-forward width
    #[arg(long, default_value_t = 64)]
    d_ff: usize,
    /// Vocabulary size
    #[arg(long, default_value_t = 97)]
    vocab: usize,
    /// Comma-separated sequence lengths
    #[arg(long, value_delimiter = ',', default_value = "1,2,8")]
    tokens: Vec<usize>,
    /// Number of seeded models (seeds 0..N)
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Largest acceptable absolute residual
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Debug, Args)]
pub(crate) struct EvalArgs {
    /// Activation bundles (JSONL)
    #[arg(long, required = true, num_args = 1..)]
    bundle: Vec<PathBuf>,
    /// Pairs file: gold<TAB>text_id_a<TAB>text_id_b
    #[arg(long)]
    pairs: PathBuf,
    /// Report path (JSON)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Score on this many uniformly sampled dimensions instead
    #[arg(long, value_name = "N", conflicts_with = "full_dim")]
    random_dims: Option<usize>,
    /// Seed of the random dimension sample
    #[arg(long, default_value_t = 0, requires = "random_dims")]
    seed: u64,
    /// Draw a fresh random sample for every pair
    #[arg(long, requires = "random_dims")]
    per_pair_resample: bool,
    /// Score with plain cosine over every dimension
    #[arg(long)]
    full_dim: bool,
    /// Also write per-pair scores (TSV)
    #[arg(long, value_name = "PATH")]
    per_pair: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum SweepMode {
    K,
    Component,
    Layer,
    Language,
}

#[derive(Debug, Args)]
pub(crate) struct SweepArgs {
    /// What to vary
    #[arg(long)]
    mode: SweepMode,
    /// Activation bundles (JSONL)
    #[arg(long, required = true, num_args = 1..)]
    bundle: Vec<PathBuf>,
    /// Pairs file: gold<TAB>text_id_a<TAB>text_id_b
    #[arg(long)]
    pairs: PathBuf,
    /// Table path (TSV)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    /// Budgets for `--mode k`
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024,2048")]
    ks: Vec<usize>,
    /// Components for `--mode component` [default: every component supplied]
    #[arg(long, value_delimiter = ',')]
    components: Vec<ComponentKind>,
    /// Candidate languages for `--mode language` [default: the pool]
    #[arg(long, value_delimiter = ',')]
    languages: Vec<String>,
    /// Largest pool size for `--mode language` [default: all candidates]
    #[arg(long)]
    max_m: Option<usize>,
}

#[derive(Debug, Args)]
pub(crate) struct RankArgs {
    /// Single-language report files
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Print the pool formed by the top M languages
    #[arg(long)]
    top_m: Option<usize>,
    /// Also write the ranking (TSV)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub(crate) enum IndexCommand {
    /// Build an index from bundles
    Build(IndexBuildArgs),
    /// Add records to an existing index in place
    Insert(IndexInsertArgs),
    /// Rank index entries against every record of a bundle
    Query(IndexQueryArgs),
}

#[derive(Debug, Args)]
pub(crate) struct IndexPaths {
    /// Index bundle (JSONL)
    #[arg(long)]
    index: PathBuf,
    /// Semantic-set sidecar (JSONL)
    #[arg(long)]
    sets: PathBuf,
}

#[derive(Debug, Args)]
pub(crate) struct IndexBuildArgs {
    /// Activation bundles (JSONL)
    #[arg(long, required = true, num_args = 1..)]
    bundle: Vec<PathBuf>,
    #[command(flatten)]
    paths: IndexPaths,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
pub(crate) struct IndexInsertArgs {
    /// Bundles of records to add
    #[arg(long, required = true, num_args = 1..)]
    bundle: Vec<PathBuf>,
    #[command(flatten)]
    paths: IndexPaths,
}

#[derive(Debug, Args)]
pub(crate) struct IndexQueryArgs {
    /// Bundle of query records
    #[arg(long)]
    query: PathBuf,
    #[command(flatten)]
    paths: IndexPaths,
    /// Hits kept per query
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Hits table (TSV)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub(crate) struct ValidateArgs {
    /// Bundle to check
    path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Preset {
    /// Planted-consensus records with cosine-of-signal gold
    Planted,
    /// Bundles for every component from a seeded tiny model
    Tinylm,
}

#[derive(Debug, Args)]
pub(crate) struct SynthArgs {
    /// Fixture family
    #[arg(long)]
    preset: Preset,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Override the preset's seed
    #[arg(long)]
    seed: Option<u64>,
}

/// Runs the binary with the process arguments and returns the exit code.
pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match parse(argv).and_then(execute) {
        Ok(()) => 0,
        Err(Exit::Clean(code)) => code,
        Err(Exit::Failed(e)) => {
            eprintln!("ERROR {}: {}", e.exit_code(), e.detail().replace('\n', " "));
            e.exit_code()
        }
    }
}

enum Exit {
    /// Help or version output already printed.
    Clean(i32),
    Failed(CliError),
}

impl From<CliError> for Exit {
    fn from(e: CliError) -> Self {
        Exit::Failed(e)
    }
}

fn clap_failure(e: clap::Error) -> Exit {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            Exit::Clean(0)
        }
        _ => {
            // keep the message paragraph, drop the usage and help hints
            let rendered = e.to_string();
            let message: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            Exit::Failed(CliError::Usage(message.join(" ").trim_start_matches("error: ").to_string()))
        }
    }
}

fn parse(argv: Vec<OsString>) -> Result<Cli, Exit> {
    let cmd = Cli::command();
    // a lenient first pass finds `--config` even when the file is what
    // supplies required flags
    let lenient = cmd.clone().ignore_errors(true).try_get_matches_from(argv.clone());
    let config = lenient.as_ref().ok().and_then(|m| m.get_one::<PathBuf>("config").cloned());
    let matches = match (config, lenient) {
        (Some(path), Ok(first)) => {
            let merged = config_file::merge(&cmd, &first, argv, &path)?;
            cmd.try_get_matches_from(merged).map_err(clap_failure)?
        }
        _ => cmd.try_get_matches_from(argv).map_err(clap_failure)?,
    };
    Cli::from_arg_matches(&matches).map_err(clap_failure)
}

fn execute(cli: Cli) -> Result<(), Exit> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command)).map_err(Exit::Failed)
}
