//! Command-line front end: corpus inspection, plan preview, experiment
//! runs, statistics (from artifacts or raw CSV), reports, and ordering
//! strips.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 judge
//! failure after exhausting retries, 4 I/O or artifact errors.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use verserank::corpus::load_corpus;
use verserank::judge::{JudgeConfig, Provider};
use verserank::prompts::Criterion;
use verserank::runner::artifact::{load_artifact, recompute_stats};
use verserank::runner::strip::{emit_ordering_strip, StripFormat};
use verserank::runner::{
    build_plan, run_experiment, sequence_for, ExperimentConfig, ExperimentKind, RunOptions,
    RunnerError,
};
use verserank::scoring::ScoringMethod;
use verserank::stats::{anova_oneway, icc_k, spearman};

#[derive(Parser)]
#[command(
    name = "verserank",
    version,
    about = "Rank batches of categorized poems with a judge and measure agreement, separation, and reliability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus directory, validate it, and print its breakdown.
    Ingest {
        /// Corpus directory (manifest.csv plus poem files).
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Print the batch plan a configuration would produce, without running it.
    Plan {
        #[command(flatten)]
        shape: ShapeArgs,
        /// Write the plan JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment and persist its artifact directory.
    Run(RunArgs),
    /// Statistics: recompute from an artifact or run a kernel on raw CSV.
    Stats {
        #[command(subcommand)]
        command: StatsCommand,
    },
    /// Print the report of a persisted artifact.
    Report {
        /// Artifact directory.
        dir: PathBuf,
    },
    /// Render the ordered category strip of a persisted artifact.
    Strip {
        /// Artifact directory.
        dir: PathBuf,
        /// Criterion to render (defaults to the first in the run).
        #[arg(long)]
        criterion: Option<String>,
        /// Scoring method to render (defaults to the first in the run).
        #[arg(long)]
        method: Option<String>,
        /// Output format: terminal or svg.
        #[arg(long, default_value = "terminal")]
        format: String,
        /// Write the strip here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// The shape of an experiment: what to run, over which corpus, and how
/// batches are drawn.
#[derive(Args)]
struct ShapeArgs {
    /// Experiment kind: classify, rank-full, rank-subsets, reliability, or custom.
    #[arg(long)]
    kind: String,
    /// Corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Root seed; fixes sampling and synthetic noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Poems drawn per category into each subset batch.
    #[arg(long)]
    k: Option<usize>,
    /// Number of batches.
    #[arg(long)]
    n: Option<usize>,
    /// Repetitions of one fixed subset (reliability runs).
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Artifact directory to create (must not exist yet).
    #[arg(long)]
    out: PathBuf,
    /// Judge provider: synthetic, mock, remote-a, or remote-b.
    #[arg(long, default_value = "synthetic")]
    provider: String,
    /// Model name recorded in the judge id (and sent to remote providers).
    #[arg(long, default_value = "oracle")]
    model: String,
    /// Comma-separated criteria (defaults to all five for ranking runs).
    #[arg(long)]
    criteria: Option<String>,
    /// Comma-separated scoring methods (defaults to both).
    #[arg(long)]
    methods: Option<String>,
    /// Synthetic judge noise level.
    #[arg(long)]
    sigma: Option<f64>,
    /// Mock judge script file (JSON-encoded responses, one per line).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Sampling temperature for remote providers.
    #[arg(long)]
    temperature: Option<f64>,
    /// Retries after the first attempt before giving up on a request.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-request timeout in seconds for remote providers.
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Concurrent in-flight requests for remote providers.
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Allow dialing out to remote providers.
    #[arg(long)]
    live: bool,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Recompute statistics from an artifact and verify them against stats.json.
    Artifact {
        /// Artifact directory.
        dir: PathBuf,
    },
    /// Tied-rank correlation of two paired columns (CSV with header, columns x,y).
    Spearman {
        /// Input CSV file.
        #[arg(long)]
        input: PathBuf,
    },
    /// One-way ANOVA over long-format data (CSV with header, columns group,value).
    Anova {
        /// Input CSV file.
        #[arg(long)]
        input: PathBuf,
    },
    /// Average-measure intraclass correlations of a targets x raters matrix
    /// (headerless numeric CSV).
    Icc {
        /// Input CSV file.
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() {
    // Die quietly when a downstream pipe closes (e.g. `verserank report … | head`)
    // instead of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(runner) = cause.downcast_ref::<RunnerError>() {
            return match runner {
                RunnerError::Judge { .. } => 3,
                RunnerError::Io { .. } | RunnerError::Artifact { .. } => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    2
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus } => cmd_ingest(&corpus),
        Command::Plan { shape, out } => cmd_plan(&shape, out.as_deref()),
        Command::Run(args) => cmd_run(args),
        Command::Stats { command } => match command {
            StatsCommand::Artifact { dir } => cmd_stats_artifact(&dir),
            StatsCommand::Spearman { input } => cmd_stats_spearman(&input),
            StatsCommand::Anova { input } => cmd_stats_anova(&input),
            StatsCommand::Icc { input } => cmd_stats_icc(&input),
        },
        Command::Report { dir } => cmd_report(&dir),
        Command::Strip {
            dir,
            criterion,
            method,
            format,
            out,
        } => cmd_strip(
            &dir,
            criterion.as_deref(),
            method.as_deref(),
            &format,
            out.as_deref(),
        ),
    }
}

fn cmd_ingest(dir: &std::path::Path) -> Result<()> {
    let corpus = load_corpus(dir).map_err(RunnerError::from)?;
    println!("loaded {} poems from {}", corpus.len(), dir.display());
    for (category, count) in corpus.counts() {
        println!(
            "  {:<8} {:>4}  (ground-truth rank {})",
            category.label(),
            count,
            category.rank()
        );
    }
    Ok(())
}

fn cmd_plan(shape: &ShapeArgs, out: Option<&std::path::Path>) -> Result<()> {
    let config = shape_config(shape, JudgeConfig::new(Provider::Synthetic, "oracle"), "-")?;
    config.validate()?;
    let corpus = load_corpus(&config.corpus_root).map_err(RunnerError::from)?;
    let plan = build_plan(&config, &corpus)?;
    let mut json = serde_json::to_string_pretty(&plan)?;
    json.push('\n');
    match out {
        Some(path) => fs::write(path, json)
            .with_context(|| format!("writing plan to {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let provider = Provider::parse_slug(&args.provider).with_context(|| {
        format!(
            "unknown provider {:?} (expected synthetic, mock, remote-a, or remote-b)",
            args.provider
        )
    })?;
    let mut judge = JudgeConfig::new(provider, &args.model);
    if let Some(t) = args.temperature {
        judge.temperature = t;
    }
    if let Some(r) = args.max_retries {
        judge.max_retries = r;
    }
    if let Some(t) = args.timeout_secs {
        judge.timeout_secs = t;
    }
    if let Some(c) = args.max_concurrency {
        judge.max_concurrency = c;
    }

    let mut config = shape_config(&args.shape, judge, &args.out)?;
    if let Some(list) = args.criteria.as_deref() {
        config.criteria = parse_criteria(list)?;
    }
    if let Some(list) = args.methods.as_deref() {
        config.methods = parse_methods(list)?;
    }
    if args.sigma.is_some() {
        config.noise_sigma = args.sigma;
    }
    if args.script.is_some() {
        config.script_path = args.script.clone();
    }
    if args.templates.is_some() {
        config.templates_dir = args.templates.clone();
    }

    let options = RunOptions { live: args.live };
    match run_experiment(&config, &options) {
        Ok(artifact) => {
            println!("artifact written to {}", config.output_dir.display());
            if let Some(accuracy) = artifact.stats.accuracy {
                println!("classification accuracy: {:.1}%", accuracy * 100.0);
            }
            for row in &artifact.stats.src {
                let criterion = row
                    .criterion
                    .map(|c| c.name())
                    .unwrap_or("classification");
                let method = row.method.map(|m| m.name()).unwrap_or("-");
                println!(
                    "SRC {criterion}/{method}: rho {:.4} (p {:.3e}{})",
                    row.result.rho,
                    row.result.p_value,
                    if row.significant { ", significant" } else { "" }
                );
            }
            println!("see {} for the full report", config.output_dir.join("report.md").display());
            Ok(())
        }
        Err(err @ RunnerError::Judge { .. }) => {
            eprintln!(
                "run stopped early; partial artifact persisted at {}",
                config.output_dir.display()
            );
            Err(err.into())
        }
        Err(err) => Err(err.into()),
    }
}

fn cmd_stats_artifact(dir: &std::path::Path) -> Result<()> {
    let loaded = load_artifact(dir)?;
    let (_, bundle) = recompute_stats(&loaded)?;
    let json = serde_json::to_string_pretty(&bundle)?;
    println!("{json}");
    if bundle == loaded.stats {
        eprintln!("recomputed statistics match stats.json");
        Ok(())
    } else {
        bail!("recomputed statistics differ from stats.json; the artifact was modified");
    }
}

fn cmd_stats_spearman(input: &std::path::Path) -> Result<()> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut reader = csv_reader(input, true)?;
    for (lineno, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            bail!("row {}: expected two columns x,y", lineno + 2);
        }
        x.push(parse_field(&record[0], lineno + 2)?);
        y.push(parse_field(&record[1], lineno + 2)?);
    }
    let result = spearman(&x, &y).map_err(stats_input_error)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn cmd_stats_anova(input: &std::path::Path) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut reader = csv_reader(input, true)?;
    for (lineno, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            bail!("row {}: expected two columns group,value", lineno + 2);
        }
        let name = record[0].trim().to_string();
        let value = parse_field(&record[1], lineno + 2)?;
        match names.iter().position(|n| *n == name) {
            Some(i) => groups[i].push(value),
            None => {
                names.push(name);
                groups.push(vec![value]);
            }
        }
    }
    let result = anova_oneway(&groups).map_err(stats_input_error)?;
    let output = serde_json::json!({ "groups": names, "result": result });
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

fn cmd_stats_icc(input: &std::path::Path) -> Result<()> {
    let mut matrix: Vec<Vec<f64>> = Vec::new();
    let mut reader = csv_reader(input, false)?;
    for (lineno, record) in reader.records().enumerate() {
        let record = record?;
        let row: Result<Vec<f64>> = record
            .iter()
            .map(|field| parse_field(field, lineno + 1))
            .collect();
        matrix.push(row?);
    }
    let result = icc_k(&matrix).map_err(stats_input_error)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn cmd_report(dir: &std::path::Path) -> Result<()> {
    let path = dir.join("report.md");
    let report = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    print!("{report}");
    Ok(())
}

fn cmd_strip(
    dir: &std::path::Path,
    criterion: Option<&str>,
    method: Option<&str>,
    format: &str,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let format = match format.trim().to_lowercase().as_str() {
        "terminal" => StripFormat::Terminal,
        "svg" => StripFormat::Svg,
        other => bail!("unknown strip format {other:?} (expected terminal or svg)"),
    };
    let loaded = load_artifact(dir)?;
    if loaded.config.experiment == ExperimentKind::Classify {
        bail!("classification artifacts have no ordering strips");
    }
    let criterion = match criterion {
        Some(s) => parse_one_criterion(s)?,
        None => *loaded
            .config
            .criteria
            .first()
            .context("the artifact configuration lists no criteria")?,
    };
    let method = match method {
        Some(s) => parse_one_method(s)?,
        None => *loaded
            .config
            .methods
            .first()
            .context("the artifact configuration lists no scoring methods")?,
    };
    let (aggregates, _) = recompute_stats(&loaded)?;
    let (sequence, src) = sequence_for(&aggregates, &loaded.corpus, criterion, method)?;
    let rendered = emit_ordering_strip(&sequence, src, format);
    match out {
        Some(path) => fs::write(path, rendered)
            .with_context(|| format!("writing strip to {}", path.display()))?,
        None => println!("{rendered}"),
    }
    Ok(())
}

/// Builds a configuration from the preset for `kind`, then applies any
/// explicit shape overrides.
fn shape_config(
    shape: &ShapeArgs,
    judge: JudgeConfig,
    output_dir: impl Into<PathBuf>,
) -> Result<ExperimentConfig> {
    let kind = ExperimentKind::parse_name(&shape.kind).with_context(|| {
        format!(
            "unknown experiment kind {:?} (expected classify, rank-full, rank-subsets, reliability, or custom)",
            shape.kind
        )
    })?;
    let mut config =
        ExperimentConfig::preset(kind, &shape.corpus, judge, shape.seed, output_dir);
    if shape.k.is_some() {
        config.k_per_category = shape.k;
    }
    if shape.n.is_some() {
        config.n_batches = shape.n;
    }
    if shape.reps.is_some() {
        config.repetitions = shape.reps;
    }
    Ok(config)
}

fn parse_criteria(list: &str) -> Result<Vec<Criterion>> {
    list.split(',').map(parse_one_criterion).collect()
}

fn parse_one_criterion(s: &str) -> Result<Criterion> {
    Criterion::parse_name(s)
        .with_context(|| format!("unknown criterion {:?}", s.trim()))
}

fn parse_methods(list: &str) -> Result<Vec<ScoringMethod>> {
    list.split(',').map(parse_one_method).collect()
}

fn parse_one_method(s: &str) -> Result<ScoringMethod> {
    ScoringMethod::parse_name(s)
        .with_context(|| format!("unknown scoring method {:?} (expected scale or rank-derived)", s.trim()))
}

fn csv_reader(path: &std::path::Path, headers: bool) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

fn parse_field(field: &str, lineno: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .with_context(|| format!("row {lineno}: {field:?} is not a number"))
}

fn stats_input_error(err: verserank::stats::StatsError) -> anyhow::Error {
    anyhow::anyhow!("invalid input for this statistic: {err}")
}

