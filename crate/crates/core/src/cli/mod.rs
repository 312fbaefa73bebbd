//! Command-line entry point: `eval`, `classify` and `report`.

mod classify;
mod eval;
mod report;

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::corpus::BenchmarkFormat;
use crate::metrics::Manifest;

pub use classify::{classify_predictions, classify_run, LabelLine};
pub use eval::eval_run;
pub use report::report_runs;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CURVES_CSV: &str = "curves.csv";

/// Exit status when the backend failed part-way through a run.
pub const EXIT_BACKEND_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "nl2sql-eval", version, about = "Text-to-SQL evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a generation track over a benchmark and score it.
    Eval(EvalArgs),
    /// Label the incorrect records of a run with error categories.
    Classify(ClassifyArgs),
    /// Merge runs into curve and trade-off CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Track {
    Greedy,
    Sample,
    Maj,
    #[value(name = "sql-d1")]
    SqlD1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long, default_value = "bird")]
    pub format: BenchmarkFormat,
    #[arg(long)]
    pub db_root: PathBuf,
    /// Databases live at `<db-root>/<db_id>.sqlite` instead of `<db-root>/<db_id>/<db_id>.sqlite`.
    #[arg(long)]
    pub flat_db: bool,
    #[arg(long, value_enum, default_value = "greedy")]
    pub track: Track,
    /// Candidates per item (maj and sql-d1 with the selector).
    #[arg(long)]
    pub k: Option<usize>,
    /// Agent stages for sql-d1, e.g. `a_r,a_g,a_v,a_s`. `a_g` is required.
    #[arg(long, value_delimiter = ',')]
    pub ablation: Option<Vec<String>>,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_VERIFIER_ITERS)]
    pub verifier_iters: usize,
    /// Per-query execution timeout in seconds.
    #[arg(long, default_value_t = crate::executor::DEFAULT_TIMEOUT_SECONDS)]
    pub timeout: f64,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, default_value_t = crate::gateway::DEFAULT_MAX_NEW_TOKENS)]
    pub max_new_tokens: u32,
    /// Extra request field forwarded verbatim, `key=value`. Repeatable.
    #[arg(long = "backend-param", value_parser = parse_key_value)]
    pub backend_params: Vec<(String, String)>,
    #[arg(long, value_enum, default_value = "remote")]
    pub backend: BackendKind,
    #[arg(long)]
    pub mock_fixture: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Cap on concurrent backend calls.
    #[arg(long, default_value_t = crate::gateway::DEFAULT_CONCURRENCY)]
    pub max_in_flight: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate only the first N items.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep finished records in `--out` and evaluate only the rest.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// Run directory written by `eval`.
    #[arg(long, conflicts_with_all = ["pred", "gold"])]
    pub run: Option<PathBuf>,
    /// JSON object mapping item id to predicted SQL.
    #[arg(long, requires_all = ["gold", "db_root"])]
    pub pred: Option<PathBuf>,
    /// Benchmark file holding the gold queries.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long, default_value = "bird")]
    pub format: BenchmarkFormat,
    #[arg(long)]
    pub db_root: Option<PathBuf>,
    #[arg(long)]
    pub flat_db: bool,
    #[arg(long, default_value_t = crate::executor::DEFAULT_TIMEOUT_SECONDS)]
    pub timeout: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directories to merge.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(format!("expected key=value, got {s:?}")),
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

/// Runs a parsed command line; `Ok` carries the exit status.
pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Eval(a) => eval_run(a),
        Command::Classify(a) => classify::cmd_classify(a),
        Command::Report(a) => report_runs(&a.runs, &a.out).map(|_| 0),
    }
}

/// Parses `args` (program name first) and runs them.
pub fn run_args<I, T>(args: I) -> anyhow::Result<u8>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(&Cli::try_parse_from(args)?)
}

/// Parses arguments, runs the command and maps the result to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// First line of every JSONL artifact.
#[derive(Debug, Serialize, serde::Deserialize)]
struct Header {
    manifest_sha256: String,
}

fn header_line(sha: &str) -> String {
    let mut s = serde_json::to_string(&Header {
        manifest_sha256: sha.to_string(),
    })
    .expect("header serializes");
    s.push('\n');
    s
}

fn json_line<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string(value)?;
    s.push('\n');
    Ok(s)
}

/// Reads a JSONL artifact: the manifest hash from the header and the rows.
/// A truncated final line (interrupted write) is dropped with a warning.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<(String, Vec<T>)> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let Some(first) = lines.first() else {
        bail!("{} is empty", path.display());
    };
    let header: Header =
        serde_json::from_str(first).with_context(|| format!("{} has no manifest header", path.display()))?;
    let mut rows = Vec::new();
    let body: Vec<&String> = lines[1..].iter().filter(|l| !l.trim().is_empty()).collect();
    for (i, line) in body.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => rows.push(v),
            Err(e) if i + 1 == body.len() => {
                log::warn!("dropping truncated last line of {}: {e}", path.display());
            }
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 2),
        }
    }
    Ok((header.manifest_sha256, rows))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn read_manifest(dir: &Path) -> anyhow::Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    Manifest::from_toml(&text).with_context(|| format!("malformed {}", path.display()))
}
