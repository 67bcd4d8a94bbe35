//! Command implementations behind the `infosearch` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use infosearch_core::bm25::{run_all_modes, Bm25Params};
use infosearch_core::harness::{evaluate_system, HarnessError, SystemEvaluation};
use infosearch_core::ingest::{load_dataset, load_dataset_unchecked, load_system, write_dataset, write_system, IngestError};
use infosearch_core::metrics::{MetricConfig, PMrrSign};
use infosearch_core::model::{validate_dataset, Dataset, Dimension, RunSet};
use infosearch_core::oracle::{compare_evaluations, oracle_metrics, OracleError, MAX_ORACLE_QUERIES};
use infosearch_core::report::{leaderboard_rows, render, system_rows, Format};
use infosearch_core::synth::{gen_synthetic_dataset, gen_synthetic_runs, Behavior, SynthSpec, GENERATOR_ID};
use rayon::prelude::*;
use thiserror::Error;

pub const THREADS_ENV: &str = "INFOSEARCH_THREADS";
pub const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent data: exit code 1.
    #[error("{0}")]
    Data(String),
    /// Unreadable inputs, unwritable outputs, bad environment: exit code 2.
    #[error("{0}")]
    Env(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 1,
            CliError::Env(_) => 2,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        if e.is_io() {
            CliError::Env(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Env(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "infosearch", version, about = "Evaluate instruction-following retrieval runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check dataset integrity and print per-dimension counts.
    Validate { dataset_dir: PathBuf },
    /// Score every system under RUNS_DIR and write reports.
    Evaluate {
        dataset_dir: PathBuf,
        /// One subdirectory per system holding original.run, instructed.run, reversed.run.
        runs_dir: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
        /// Report format; repeat for several.
        #[arg(long = "format", value_enum, default_values_t = [FormatArg::Markdown])]
        formats: Vec<FormatArg>,
        /// Output directory; the leaderboard goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write BM25 run files for all three modes.
    #[command(name = "bm25-run")]
    Bm25Run {
        dataset_dir: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        k1: f64,
        #[arg(long, default_value_t = 0.75)]
        b: f64,
        #[arg(long, default_value_t = 100)]
        top_k: usize,
        #[arg(long, default_value = "bm25")]
        system_id: String,
        /// System directory to write the run files into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic dataset and runs.
    Synth {
        #[command(flatten)]
        spec: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute metrics with the reference implementation and diff them.
    Oracle {
        dataset_dir: PathBuf,
        runs_dir: PathBuf,
        #[command(flatten)]
        metrics: MetricArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    AsPrinted,
    Flipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
    Structured,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => Format::Markdown,
            FormatArg::Csv => Format::Csv,
            FormatArg::Structured => Format::Structured,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// Cutoff for nDCG and Robustness.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Top-K horizon of the WISE reward.
    #[arg(long, default_value_t = 20)]
    pub wise_k: usize,
    #[arg(long, value_enum, default_value_t = SignArg::AsPrinted)]
    pub p_mrr_sign: SignArg,
    /// Ignore run-file scores and use 1/rank.
    #[arg(long)]
    pub score_from_rank: bool,
}

impl MetricArgs {
    pub fn config(&self) -> Result<MetricConfig, CliError> {
        let cfg = MetricConfig {
            k_ndcg: self.k,
            k_wise: self.wise_k,
            p_mrr_sign: match self.p_mrr_sign {
                SignArg::AsPrinted => PMrrSign::AsPrinted,
                SignArg::Flipped => PMrrSign::Flipped,
            },
            ..MetricConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Data(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', default_value = "Audience,Keyword,Format,Language,Length,Source")]
    pub dims: Vec<Dimension>,
    #[arg(long, default_value_t = 20)]
    pub cores_per_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub conditions_per_core: usize,
    #[arg(long, default_value_t = 8)]
    pub noise_docs: usize,
    #[arg(long, default_value_t = 10)]
    pub run_depth: usize,
    /// Comma-separated behaviors; one run directory each.
    #[arg(long, value_delimiter = ',', default_value = "perfect,anti-instruction,random")]
    pub behaviors: Vec<Behavior>,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            dims: self.dims.clone(),
            cores_per_dim: self.cores_per_dim,
            conditions_per_core: self.conditions_per_core,
            corpus_noise_docs: self.noise_docs,
            run_depth: self.run_depth,
        }
    }
}

/// Runs `f` on a pool sized by [`THREADS_ENV`], or rayon's default.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::Env(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Env(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { dataset_dir } => cmd_validate(&dataset_dir, stdout),
        Command::Evaluate { dataset_dir, runs_dir, metrics, formats, out } => {
            let formats: Vec<Format> = formats.into_iter().map(Format::from).collect();
            cmd_evaluate(&dataset_dir, &runs_dir, &metrics, &formats, out.as_deref(), stdout)
        }
        Command::Bm25Run { dataset_dir, k1, b, top_k, system_id, out } => {
            cmd_bm25_run(&dataset_dir, Bm25Params { k1, b }, top_k, &system_id, &out, stdout)
        }
        Command::Synth { spec, out } => cmd_synth(&spec.spec(), &spec.behaviors, &out, stdout),
        Command::Oracle { dataset_dir, runs_dir, metrics } => cmd_oracle(&dataset_dir, &runs_dir, &metrics, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Env(format!("stdout: {e}")))
}

pub fn cmd_validate(dataset_dir: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ds = load_dataset_unchecked(dataset_dir)?;
    let report = validate_dataset(&ds);
    let mut text = String::from("dimension\tcore\tinstructed\treversed\tdocs\n");
    for (dim, c) in &report.counts {
        text.push_str(&format!("{dim}\t{}\t{}\t{}\t{}\n", c.core, c.instructed, c.reversed, c.docs));
    }
    let t = report.totals();
    text.push_str(&format!("total\t{}\t{}\t{}\t{}\n", t.core, t.instructed, t.reversed, t.docs));
    for v in &report.violations {
        text.push_str(&format!("violation: {v}\n"));
    }
    emit(stdout, &text)?;
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} violation(s)", report.violations.len())))
    }
}

/// System directories under `runs_dir`, sorted by name.
pub fn system_dirs(runs_dir: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut systems = Vec::new();
    for entry in fs::read_dir(runs_dir).map_err(io_err(runs_dir))? {
        let entry = entry.map_err(io_err(runs_dir))?;
        let path = entry.path();
        if path.is_dir() {
            systems.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    systems.sort();
    if systems.is_empty() {
        return Err(CliError::Env(format!("{}: no system directories", runs_dir.display())));
    }
    Ok(systems)
}

fn load_systems(runs_dir: &Path, score_from_rank: bool) -> Result<Vec<RunSet>, CliError> {
    let dirs = system_dirs(runs_dir)?;
    with_thread_pool(|| {
        dirs.par_iter()
            .map(|(name, path)| load_system(path, name.clone(), score_from_rank).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()
    })?
}

pub fn evaluate_all(dataset: &Dataset, systems: &[RunSet], cfg: &MetricConfig) -> Result<Vec<SystemEvaluation>, CliError> {
    with_thread_pool(|| {
        systems
            .par_iter()
            .map(|run| evaluate_system(dataset, run, cfg).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()
    })?
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn cmd_evaluate(
    dataset_dir: &Path,
    runs_dir: &Path,
    metrics: &MetricArgs,
    formats: &[Format],
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = metrics.config()?;
    let dataset = load_dataset(dataset_dir)?;
    let systems = load_systems(runs_dir, metrics.score_from_rank)?;
    let evals = evaluate_all(&dataset, &systems, &cfg)?;
    let board = leaderboard_rows(&evals, cfg.report_scale);
    let render_err = |e: infosearch_core::report::ReportError| CliError::Data(e.to_string());
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            for &format in formats {
                let ext = format.extension();
                for eval in &evals {
                    let text = render(&system_rows(eval, cfg.report_scale), format).map_err(render_err)?;
                    write_file(&dir.join(format!("{}.{ext}", eval.system_id)), &text)?;
                }
                write_file(&dir.join(format!("leaderboard.{ext}")), &render(&board, format).map_err(render_err)?)?;
            }
            let degenerate: usize = evals.iter().map(|e| e.overall.degenerate_reversed).max().unwrap_or(0);
            let mut summary = format!("evaluated {} system(s), {} instructed queries\n", evals.len(), dataset.instructed_queries.len());
            if degenerate > 0 {
                summary.push_str(&format!("{degenerate} query(ies) without reversed relevant documents left out of reversed columns\n"));
            }
            emit(stdout, &summary)
        }
        None => {
            for &format in formats {
                emit(stdout, &render(&board, format).map_err(render_err)?)?;
            }
            Ok(())
        }
    }
}

pub fn cmd_bm25_run(
    dataset_dir: &Path,
    params: Bm25Params,
    top_k: usize,
    system_id: &str,
    out: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let dataset = load_dataset(dataset_dir)?;
    let run = run_all_modes(&dataset, &params, top_k, system_id).map_err(|e| CliError::Data(e.to_string()))?;
    write_system(&run, out)?;
    emit(stdout, &format!("wrote {} lists to {}\n", run.len(), out.display()))
}

pub fn manifest(spec: &SynthSpec, behaviors: &[Behavior]) -> String {
    let value = serde_json::json!({
        "generator": GENERATOR_ID,
        "spec": spec,
        "behaviors": behaviors.iter().map(|b| b.as_str()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&value).expect("manifest is plain data");
    text.push('\n');
    text
}

/// Writes `out/dataset`, `out/runs/<behavior>` and `out/manifest.json`.
pub fn cmd_synth(spec: &SynthSpec, behaviors: &[Behavior], out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let synth_err = |e: infosearch_core::synth::SynthError| CliError::Data(e.to_string());
    let dataset = gen_synthetic_dataset(spec).map_err(synth_err)?;
    write_dataset(&dataset, out.join("dataset"))?;
    for &b in behaviors {
        let run = gen_synthetic_runs(&dataset, spec, b).map_err(synth_err)?;
        write_system(&run, out.join("runs").join(b.as_str()))?;
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("manifest.json"), &manifest(spec, behaviors))?;
    emit(
        stdout,
        &format!("wrote {} instructed queries and {} system(s) to {}\n", dataset.instructed_queries.len(), behaviors.len(), out.display()),
    )
}

pub fn cmd_oracle(dataset_dir: &Path, runs_dir: &Path, metrics: &MetricArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = metrics.config()?;
    let dataset = load_dataset(dataset_dir)?;
    let count = dataset.instructed_queries.len();
    if count > MAX_ORACLE_QUERIES {
        return Err(CliError::Data(format!("refusing {count} instructed queries; the oracle accepts at most {MAX_ORACLE_QUERIES}")));
    }
    let systems = load_systems(runs_dir, metrics.score_from_rank)?;
    let evals = evaluate_all(&dataset, &systems, &cfg)?;
    let mut total = 0;
    let mut text = String::new();
    for (run, eval) in systems.iter().zip(&evals) {
        let reference = oracle_metrics(&dataset, run, &cfg).map_err(|e: OracleError| CliError::Data(e.to_string()))?;
        let diff = compare_evaluations(eval, &reference, ORACLE_TOLERANCE);
        text.push_str(&format!("{}: {} mismatches\n", run.system_id, diff.len()));
        for m in &diff {
            text.push_str(&format!("  {m}\n"));
        }
        total += diff.len();
    }
    text.push_str(&format!("{total} mismatches\n"));
    emit(stdout, &text)?;
    if total == 0 {
        Ok(())
    } else {
        Err(CliError::Data(format!("{total} mismatches between harness and oracle")))
    }
}
