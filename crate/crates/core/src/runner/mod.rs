//! End-to-end experiment orchestration.
//!
//! A run goes sample → prompt → judge (with retries) → parse → score →
//! aggregate → statistics, then persists a self-contained artifact
//! directory: every reported number can be recomputed from the artifact
//! alone. Offline judges (mock, synthetic) execute sequentially and
//! without timestamps, so a fixed seed yields byte-identical artifacts;
//! remote judges fan out up to `max_concurrency` and are only reachable
//! when the caller explicitly opts into a live run.

pub mod artifact;
pub mod report;
pub mod strip;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, Category, Corpus, CorpusError, PoemId};
use crate::judge::{
    evaluate, quintile_score, synthetic_classify, synthetic_rank, AttemptRecord, FixedSource,
    JudgeConfig, JudgeError, NoiseModel, Provider, RemoteEndpoint, Script, ScriptedSource,
    TextSource, TransportFailure,
};
use crate::parser::{parse_category, parse_ranked_list, RankingResponse};
use crate::prompts::{Criterion, PromptError, PromptText, TemplateSet};
use crate::sampler::{
    appearance_stats, full_shuffles, repeated_subset, splitmix64, stratified_subsets,
    AppearanceStats, BatchPlan, PlanKind, SamplerError,
};
use crate::scoring::{
    aggregate, classification_accuracy, classification_rank_pairs, order_and_label, score_ranking,
    uncovered_poems, OrderedSequence, PoemAggregate, ScoringError, ScoringMethod,
};
use crate::stats::{
    anova_oneway, bonferroni_significant, icc_k, spearman, AnovaResult, CorrelationResult,
    IccResult, StatsError,
};

pub use artifact::{load_artifact, LoadedArtifact, RunArtifact};
pub use strip::{emit_ordering_strip, StripFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// One poem per request, judged into a category.
    Classify,
    /// Every poem in one list, several shuffled passes.
    RankFull,
    /// Many small stratified subsets.
    RankSubsets,
    /// One subset re-judged repeatedly, for rater reliability.
    Reliability,
    /// Caller-assembled parameters.
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Classify,
        ExperimentKind::RankFull,
        ExperimentKind::RankSubsets,
        ExperimentKind::Reliability,
        ExperimentKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Classify => "classify",
            ExperimentKind::RankFull => "rank-full",
            ExperimentKind::RankSubsets => "rank-subsets",
            ExperimentKind::Reliability => "reliability",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn parse_name(s: &str) -> Option<ExperimentKind> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_lowercase())
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub corpus_root: PathBuf,
    pub criteria: Vec<Criterion>,
    pub methods: Vec<ScoringMethod>,
    pub judge: JudgeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_per_category: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_batches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Noise level for the synthetic judge; `None` means noiseless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// JSONL of scripted responses, required by the mock provider.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// The standard protocol shapes: classification of each poem; 10
    /// shuffled full-corpus rankings; 100 stratified 5/5/5 subsets; 10
    /// repetitions of a single subset.
    pub fn preset(
        kind: ExperimentKind,
        corpus_root: impl Into<PathBuf>,
        judge: JudgeConfig,
        seed: u64,
        output_dir: impl Into<PathBuf>,
    ) -> ExperimentConfig {
        let mut config = ExperimentConfig {
            experiment: kind,
            corpus_root: corpus_root.into(),
            criteria: Criterion::ALL.to_vec(),
            methods: ScoringMethod::ALL.to_vec(),
            judge,
            k_per_category: None,
            n_batches: None,
            repetitions: None,
            noise_sigma: None,
            script_path: None,
            templates_dir: None,
            seed,
            output_dir: output_dir.into(),
        };
        match kind {
            ExperimentKind::Classify => {
                config.criteria = Vec::new();
                config.methods = Vec::new();
            }
            ExperimentKind::RankFull => config.n_batches = Some(10),
            ExperimentKind::RankSubsets => {
                config.k_per_category = Some(5);
                config.n_batches = Some(100);
            }
            ExperimentKind::Reliability => {
                config.k_per_category = Some(5);
                config.repetitions = Some(10);
            }
            ExperimentKind::Custom => {}
        }
        config
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let fail = |msg: String| Err(RunnerError::InvalidConfig(msg));
        self.judge
            .validate()
            .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;

        match self.experiment {
            ExperimentKind::Classify => {
                if !self.criteria.is_empty() || !self.methods.is_empty() {
                    return fail("classification takes no criteria or scoring methods".into());
                }
                if self.k_per_category.is_some()
                    || self.n_batches.is_some()
                    || self.repetitions.is_some()
                {
                    return fail("classification takes no sampling parameters".into());
                }
            }
            ExperimentKind::RankFull => {
                self.require_rankable()?;
                if self.n_batches.unwrap_or(0) == 0 {
                    return fail("full-corpus ranking needs n_batches >= 1".into());
                }
                if self.k_per_category.is_some() || self.repetitions.is_some() {
                    return fail("full-corpus ranking takes only n_batches".into());
                }
            }
            ExperimentKind::RankSubsets => {
                self.require_rankable()?;
                if self.k_per_category.unwrap_or(0) == 0 || self.n_batches.unwrap_or(0) == 0 {
                    return fail("subset ranking needs k_per_category and n_batches".into());
                }
                if self.repetitions.is_some() {
                    return fail("subset ranking takes no repetitions".into());
                }
            }
            ExperimentKind::Reliability => {
                self.require_rankable()?;
                if self.k_per_category.unwrap_or(0) == 0 {
                    return fail("reliability needs k_per_category".into());
                }
                if self.repetitions.unwrap_or(0) < 2 {
                    return fail("reliability needs repetitions >= 2".into());
                }
                if self.n_batches.is_some() {
                    return fail("reliability derives its batch count from repetitions".into());
                }
            }
            ExperimentKind::Custom => {
                self.require_rankable()?;
                let shape_ok = if self.repetitions.is_some() {
                    self.repetitions.unwrap_or(0) >= 2
                        && self.k_per_category.unwrap_or(0) > 0
                        && self.n_batches.is_none()
                } else if self.k_per_category.is_some() {
                    self.k_per_category.unwrap_or(0) > 0 && self.n_batches.unwrap_or(0) > 0
                } else {
                    self.n_batches.unwrap_or(0) > 0
                };
                if !shape_ok {
                    return fail(
                        "custom runs need n_batches (full shuffles), \
                         k_per_category + n_batches (stratified subsets), \
                         or k_per_category + repetitions (repeated subset)"
                            .into(),
                    );
                }
            }
        }

        match self.judge.provider {
            Provider::Mock => {
                if self.script_path.is_none() {
                    return fail("the mock provider needs script_path".into());
                }
            }
            Provider::Synthetic => {
                if self.script_path.is_some() {
                    return fail("the synthetic provider takes no script_path".into());
                }
                if let Some(sigma) = self.noise_sigma {
                    NoiseModel::new(sigma, 0)
                        .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
                }
            }
            Provider::RemoteA | Provider::RemoteB => {
                if self.script_path.is_some() || self.noise_sigma.is_some() {
                    return fail(
                        "remote providers take neither script_path nor noise_sigma".into(),
                    );
                }
            }
        }
        Ok(())
    }

    fn require_rankable(&self) -> Result<(), RunnerError> {
        if self.criteria.is_empty() {
            return Err(RunnerError::InvalidConfig(
                "ranking runs need at least one criterion".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(RunnerError::InvalidConfig(
                "ranking runs need at least one scoring method".into(),
            ));
        }
        Ok(())
    }

    fn sigma(&self) -> f64 {
        self.noise_sigma.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Must be set to reach remote providers; offline runs never dial out.
    pub live: bool,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("remote provider {0} needs an explicit live run (--live)")]
    LiveRequired(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("judge failed on {context}")]
    Judge {
        context: String,
        source: JudgeError,
    },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("statistics failed for {context}")]
    Stats {
        context: String,
        source: StatsError,
    },
    #[error("artifact at {path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One parsed, validated ranking call.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCall {
    pub criterion: Criterion,
    pub batch_id: u64,
    pub response: RankingResponse,
}

/// Rank correlation of one produced ordering against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrcRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<Criterion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<ScoringMethod>,
    pub result: CorrelationResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub criterion: Criterion,
    pub method: ScoringMethod,
    pub result: AnovaResult,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccRow {
    pub criterion: Criterion,
    pub method: ScoringMethod,
    pub result: IccResult,
    pub significant_icc1: bool,
    pub significant_icc23: bool,
}

/// Every statistic a run reports, as persisted in `stats.json`.
/// Significance flags are Bonferroni-corrected within each table at
/// the [`ALPHA`] level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    /// True when the run stopped early; statistics are then withheld.
    pub incomplete: bool,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub src: Vec<SrcRow>,
    pub anova: Vec<AnovaRow>,
    pub icc: Vec<IccRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub appearance: Option<AppearanceStats>,
}

impl StatsBundle {
    fn empty(incomplete: bool, warnings: Vec<String>) -> StatsBundle {
        StatsBundle {
            incomplete,
            warnings,
            accuracy: None,
            src: Vec::new(),
            anova: Vec::new(),
            icc: Vec::new(),
            appearance: None,
        }
    }
}

/// Per-criterion noise seeds, so criteria get independent noise draws
/// from one run seed.
fn criterion_noise_seed(seed: u64, criterion_idx: usize) -> u64 {
    splitmix64(splitmix64(seed ^ 0x6E6F_6973_65).wrapping_add(criterion_idx as u64))
}

fn classify_noise_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x636C_6173_73)
}

enum RequestKind {
    Rank { criterion_idx: usize, batch_idx: usize },
    Classify { poem_id: PoemId },
}

struct PreparedRequest {
    kind: RequestKind,
    prompt: PromptText,
    /// Human-readable context for errors and warnings.
    label: String,
}

enum RunSource {
    Shared(Box<dyn TextSource>),
    PerRequest(Vec<FixedSource>),
}

impl RunSource {
    fn get(&self, i: usize) -> &dyn TextSource {
        match self {
            RunSource::Shared(source) => source.as_ref(),
            RunSource::PerRequest(sources) => &sources[i],
        }
    }
}

/// Runs one experiment end-to-end and persists its artifact directory.
///
/// The artifact is persisted even when the judge gives out partway:
/// the run is then flagged incomplete (statistics withheld, exchanges
/// and successful rankings kept) and the first failure is returned.
pub fn run_experiment(
    config: &ExperimentConfig,
    options: &RunOptions,
) -> Result<RunArtifact, RunnerError> {
    config.validate()?;
    if config.judge.provider.is_remote() && !options.live {
        return Err(RunnerError::LiveRequired(
            config.judge.provider.slug().to_string(),
        ));
    }
    let corpus = load_corpus(&config.corpus_root)?;
    let templates = match &config.templates_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(),
    };
    let plan = build_plan(config, &corpus)?;
    let requests = prepare_requests(config, &corpus, plan.as_ref(), &templates)?;
    let source = build_source(config, &corpus, plan.as_ref(), &requests)?;

    let validate_response = |i: usize, text: &str| -> Result<(), String> {
        match &requests[i].kind {
            RequestKind::Rank { batch_idx, .. } => {
                let batch = &plan.as_ref().expect("rank runs have a plan").batches[*batch_idx];
                parse_ranked_list(text, batch, &corpus)
                    .map(|_| ())
                    .map_err(|e| e.to_string())
            }
            RequestKind::Classify { .. } => {
                parse_category(text).map(|_| ()).map_err(|e| e.to_string())
            }
        }
    };

    let outcomes = execute_all(&config.judge, &source, &requests, &validate_response);

    // Unpack in request order: exchange records, parsed successes, first failure.
    let mut records: Vec<AttemptRecord> = Vec::new();
    let mut calls: Vec<RankedCall> = Vec::new();
    let mut assignments: BTreeMap<PoemId, Category> = BTreeMap::new();
    let mut failure: Option<(String, JudgeError)> = None;
    let mut unattempted = 0usize;
    for (request, outcome) in requests.iter().zip(outcomes) {
        match outcome {
            None => unattempted += 1,
            Some((result, mut attempt_records)) => {
                records.append(&mut attempt_records);
                match result {
                    Ok(response) => match &request.kind {
                        RequestKind::Rank {
                            criterion_idx,
                            batch_idx,
                        } => {
                            let batch =
                                &plan.as_ref().expect("rank runs have a plan").batches[*batch_idx];
                            let parsed = parse_ranked_list(&response.text, batch, &corpus)
                                .expect("validator accepted this text");
                            calls.push(RankedCall {
                                criterion: config.criteria[*criterion_idx],
                                batch_id: batch.batch_id,
                                response: parsed,
                            });
                        }
                        RequestKind::Classify { poem_id } => {
                            let category = parse_category(&response.text)
                                .expect("validator accepted this text");
                            assignments.insert(poem_id.clone(), category);
                        }
                    },
                    Err(err) => {
                        if failure.is_none() {
                            failure = Some((request.label.clone(), err));
                        }
                    }
                }
            }
        }
    }

    let assignments = if config.experiment == ExperimentKind::Classify {
        Some(assignments)
    } else {
        None
    };

    let (aggregates, stats) = match &failure {
        None => compute_stats(&corpus, config, plan.as_ref(), &calls, assignments.as_ref())?,
        Some((label, err)) => {
            let mut warnings = vec![format!("run stopped at {label}: {err}")];
            if unattempted > 0 {
                warnings.push(format!(
                    "{unattempted} request(s) were never attempted after the failure"
                ));
            }
            let mut bundle = StatsBundle::empty(true, warnings);
            if let Some(p) = plan.as_ref() {
                bundle.appearance = Some(appearance_stats(p, &corpus)?);
            }
            let method_aggregates = aggregate_calls(config, &calls);
            (method_aggregates, bundle)
        }
    };

    let artifact = RunArtifact {
        dir: config.output_dir.clone(),
        config: config.clone(),
        plan,
        calls,
        assignments,
        aggregates,
        stats,
    };
    artifact::persist(&artifact, &records, &corpus)?;

    match failure {
        Some((context, source)) => Err(RunnerError::Judge { context, source }),
        None => Ok(artifact),
    }
}

/// Builds the batch plan a configuration implies without running it.
/// Classification experiments have no plan (`None`).
pub fn build_plan(
    config: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<Option<BatchPlan>, RunnerError> {
    let plan = match config.experiment {
        ExperimentKind::Classify => None,
        ExperimentKind::RankFull => Some(full_shuffles(
            corpus,
            config.n_batches.expect("validated"),
            config.seed,
        )?),
        ExperimentKind::RankSubsets => Some(stratified_subsets(
            corpus,
            config.k_per_category.expect("validated"),
            config.n_batches.expect("validated"),
            config.seed,
        )?),
        ExperimentKind::Reliability => {
            let base = stratified_subsets(
                corpus,
                config.k_per_category.expect("validated"),
                1,
                config.seed,
            )?;
            Some(repeated_subset(
                &base.batches[0],
                config.repetitions.expect("validated"),
                config.seed,
            )?)
        }
        ExperimentKind::Custom => {
            if let Some(repetitions) = config.repetitions {
                let base = stratified_subsets(
                    corpus,
                    config.k_per_category.expect("validated"),
                    1,
                    config.seed,
                )?;
                Some(repeated_subset(&base.batches[0], repetitions, config.seed)?)
            } else if let Some(k) = config.k_per_category {
                Some(stratified_subsets(
                    corpus,
                    k,
                    config.n_batches.expect("validated"),
                    config.seed,
                )?)
            } else {
                Some(full_shuffles(
                    corpus,
                    config.n_batches.expect("validated"),
                    config.seed,
                )?)
            }
        }
    };
    Ok(plan)
}

fn prepare_requests(
    config: &ExperimentConfig,
    corpus: &Corpus,
    plan: Option<&BatchPlan>,
    templates: &TemplateSet,
) -> Result<Vec<PreparedRequest>, RunnerError> {
    let mut requests = Vec::new();
    match config.experiment {
        ExperimentKind::Classify => {
            for poem_id in corpus.ids_in_id_order() {
                let prompt = templates.render_classification(&poem_id, corpus)?;
                requests.push(PreparedRequest {
                    label: format!("poem={poem_id}"),
                    kind: RequestKind::Classify { poem_id },
                    prompt,
                });
            }
        }
        _ => {
            let plan = plan.expect("rank runs have a plan");
            for (criterion_idx, criterion) in config.criteria.iter().enumerate() {
                for (batch_idx, batch) in plan.batches.iter().enumerate() {
                    let prompt = templates.render_ranking(*criterion, batch, corpus)?;
                    requests.push(PreparedRequest {
                        label: format!(
                            "criterion={} batch={}",
                            criterion.name(),
                            batch.batch_id
                        ),
                        kind: RequestKind::Rank {
                            criterion_idx,
                            batch_idx,
                        },
                        prompt,
                    });
                }
            }
        }
    }
    Ok(requests)
}

fn build_source(
    config: &ExperimentConfig,
    corpus: &Corpus,
    plan: Option<&BatchPlan>,
    requests: &[PreparedRequest],
) -> Result<RunSource, RunnerError> {
    match config.judge.provider {
        Provider::Synthetic => {
            let mut sources = Vec::with_capacity(requests.len());
            for request in requests {
                let text = match &request.kind {
                    RequestKind::Rank {
                        criterion_idx,
                        batch_idx,
                    } => {
                        let batch = &plan.expect("rank runs have a plan").batches[*batch_idx];
                        let noise = NoiseModel::new(
                            config.sigma(),
                            criterion_noise_seed(config.seed, *criterion_idx),
                        )
                        .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
                        let k = batch.poem_ids.len();
                        synthetic_rank(batch, corpus, &noise, &|p| quintile_score(p, k)).text
                    }
                    RequestKind::Classify { poem_id } => {
                        let noise =
                            NoiseModel::new(config.sigma(), classify_noise_seed(config.seed))
                                .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
                        synthetic_classify(poem_id, corpus, &noise).text
                    }
                };
                sources.push(FixedSource::new(text));
            }
            Ok(RunSource::PerRequest(sources))
        }
        Provider::Mock => {
            let path = config.script_path.as_ref().expect("validated");
            let scripts = load_scripts(path)?;
            Ok(RunSource::Shared(Box::new(ScriptedSource::new(scripts))))
        }
        Provider::RemoteA | Provider::RemoteB => {
            let endpoint = RemoteEndpoint::from_env(&config.judge)
                .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
            Ok(RunSource::Shared(Box::new(endpoint)))
        }
    }
}

/// Reads a mock script file: one JSON value per line, either a string
/// (the response text) or `{"outage": "message"}` for a transport
/// failure.
pub fn load_scripts(path: &Path) -> Result<Vec<Script>, RunnerError> {
    let content = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut scripts = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
            RunnerError::InvalidConfig(format!(
                "script {} line {}: not JSON: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        match value {
            serde_json::Value::String(text) => scripts.push(Script::Reply(text)),
            serde_json::Value::Object(map) => match map.get("outage").and_then(|v| v.as_str()) {
                Some(message) => scripts.push(Script::Failure(TransportFailure {
                    status: None,
                    message: message.to_string(),
                    timed_out: false,
                })),
                None => {
                    return Err(RunnerError::InvalidConfig(format!(
                        "script {} line {}: objects must have an \"outage\" string",
                        path.display(),
                        lineno + 1
                    )))
                }
            },
            _ => {
                return Err(RunnerError::InvalidConfig(format!(
                    "script {} line {}: expected a string or an outage object",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(scripts)
}

type Outcome = (Result<crate::judge::RawResponse, JudgeError>, Vec<AttemptRecord>);

/// Executes all requests. Offline providers run sequentially (script
/// order and artifacts stay deterministic); remote providers fan out to
/// `max_concurrency` workers. The first failure stops new dispatches;
/// never-attempted requests come back as `None`.
fn execute_all(
    judge_config: &JudgeConfig,
    source: &RunSource,
    requests: &[PreparedRequest],
    validate: &(dyn Fn(usize, &str) -> Result<(), String> + Sync),
) -> Vec<Option<Outcome>> {
    let concurrency = if judge_config.provider.is_remote() {
        judge_config.max_concurrency.max(1)
    } else {
        1
    };

    if concurrency == 1 {
        let mut outcomes: Vec<Option<Outcome>> = Vec::with_capacity(requests.len());
        for (i, request) in requests.iter().enumerate() {
            let mut records = Vec::new();
            let mut validator = |text: &str| validate(i, text);
            let result = evaluate(
                judge_config,
                source.get(i),
                &request.prompt,
                &mut validator,
                &mut |record| records.push(record),
            );
            let failed = result.is_err();
            outcomes.push(Some((result, records)));
            if failed {
                outcomes.resize_with(requests.len(), || None);
                break;
            }
        }
        outcomes.resize_with(requests.len(), || None);
        return outcomes;
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..concurrency.min(requests.len()) {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= requests.len() {
                    break;
                }
                let mut records = Vec::new();
                let mut validator = |text: &str| validate(i, text);
                let result = evaluate(
                    judge_config,
                    source.get(i),
                    &requests[i].prompt,
                    &mut validator,
                    &mut |record| records.push(record),
                );
                if result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                slots.lock().expect("no panics while holding the lock")[i] =
                    Some((result, records));
            });
        }
    });
    slots.into_inner().expect("workers joined")
}

fn aggregate_calls(config: &ExperimentConfig, calls: &[RankedCall]) -> Vec<PoemAggregate> {
    let mut all = Vec::new();
    for criterion in &config.criteria {
        for method in &config.methods {
            let scored: Vec<BTreeMap<PoemId, f64>> = calls
                .iter()
                .filter(|c| c.criterion == *criterion)
                .map(|c| score_ranking(&c.response, *method))
                .collect();
            all.extend(aggregate(&scored, *criterion, *method));
        }
    }
    all
}

/// Correlation of a produced ordering's category sequence against the
/// ideal one (its own ranks sorted ascending), so coverage gaps shrink
/// both sides consistently.
pub fn sequence_src(sequence: &OrderedSequence) -> Result<CorrelationResult, StatsError> {
    let produced: Vec<f64> = sequence.category_ranks.iter().map(|&r| f64::from(r)).collect();
    let mut ground = produced.clone();
    ground.sort_by(|a, b| a.partial_cmp(b).expect("ranks are finite"));
    spearman(&ground, &produced)
}

/// Computes every statistic for a completed run. Pure in its inputs:
/// recomputing from a persisted artifact reproduces the bundle exactly.
pub(crate) fn compute_stats(
    corpus: &Corpus,
    config: &ExperimentConfig,
    plan: Option<&BatchPlan>,
    calls: &[RankedCall],
    assignments: Option<&BTreeMap<PoemId, Category>>,
) -> Result<(Vec<PoemAggregate>, StatsBundle), RunnerError> {
    let mut bundle = StatsBundle::empty(false, Vec::new());

    if let Some(assignments) = assignments {
        let accuracy = classification_accuracy(assignments, corpus)?;
        bundle.accuracy = Some(accuracy);
        let (truth, predicted) = classification_rank_pairs(assignments, corpus)?;
        match spearman(&truth, &predicted) {
            Ok(result) => {
                let significant = bonferroni_significant(result.p_value, 1);
                bundle.src.push(SrcRow {
                    criterion: None,
                    method: None,
                    result,
                    significant,
                });
            }
            Err(err) => bundle
                .warnings
                .push(format!("rank correlation skipped for classification: {err}")),
        }
        return Ok((Vec::new(), bundle));
    }

    let plan = plan.expect("rank runs have a plan");
    let aggregates = aggregate_calls(config, calls);
    bundle.appearance = Some(appearance_stats(plan, corpus)?);

    let missing = uncovered_poems(
        &aggregates
            .iter()
            .filter(|a| a.criterion == config.criteria[0] && a.method == config.methods[0])
            .cloned()
            .collect::<Vec<_>>(),
        corpus,
    );
    if !missing.is_empty() {
        bundle.warnings.push(format!(
            "{} poem(s) never appeared in any batch; statistics cover {} of {}",
            missing.len(),
            corpus.len() - missing.len(),
            corpus.len()
        ));
    }

    // Rank correlation and ANOVA per criterion x method.
    let mut src_rows = Vec::new();
    let mut anova_rows = Vec::new();
    for criterion in &config.criteria {
        for method in &config.methods {
            let slice: Vec<PoemAggregate> = aggregates
                .iter()
                .filter(|a| a.criterion == *criterion && a.method == *method)
                .cloned()
                .collect();
            if slice.is_empty() {
                bundle.warnings.push(format!(
                    "no scores for {}/{}; statistics skipped",
                    criterion.name(),
                    method
                ));
                continue;
            }
            let sequence = order_and_label(&slice, corpus)?;
            match sequence_src(&sequence) {
                Ok(result) => src_rows.push((*criterion, *method, result)),
                Err(err) => bundle.warnings.push(format!(
                    "rank correlation skipped for {}/{}: {err}",
                    criterion.name(),
                    method
                )),
            }

            let mut groups: Vec<Vec<f64>> = vec![Vec::new(); Category::ALL.len()];
            for entry in &sequence.entries {
                let idx = (entry.category.rank() - 1) as usize;
                groups[idx].push(entry.mean_score);
            }
            match anova_oneway(&groups) {
                Ok(result) => anova_rows.push((*criterion, *method, result)),
                Err(err) => bundle.warnings.push(format!(
                    "ANOVA skipped for {}/{}: {err}",
                    criterion.name(),
                    method
                )),
            }
        }
    }
    let m_src = src_rows.len();
    bundle.src = src_rows
        .into_iter()
        .map(|(criterion, method, result)| SrcRow {
            criterion: Some(criterion),
            method: Some(method),
            significant: bonferroni_significant(result.p_value, m_src),
            result,
        })
        .collect();
    let m_anova = anova_rows.len();
    bundle.anova = anova_rows
        .into_iter()
        .map(|(criterion, method, result)| AnovaRow {
            criterion,
            method,
            significant: bonferroni_significant(result.p_value, m_anova),
            result,
        })
        .collect();

    // Reliability: one judge-by-target matrix per criterion x method.
    if plan.kind == PlanKind::RepeatedSubset {
        let mut icc_rows = Vec::new();
        let mut poem_ids: Vec<PoemId> = plan.batches[0].poem_ids.clone();
        poem_ids.sort();
        for criterion in &config.criteria {
            let mut per_batch: Vec<&RankedCall> =
                calls.iter().filter(|c| c.criterion == *criterion).collect();
            per_batch.sort_by_key(|c| c.batch_id);
            for method in &config.methods {
                let scored: Vec<BTreeMap<PoemId, f64>> = per_batch
                    .iter()
                    .map(|c| score_ranking(&c.response, *method))
                    .collect();
                let matrix: Vec<Vec<f64>> = poem_ids
                    .iter()
                    .map(|id| {
                        scored
                            .iter()
                            .map(|s| s.get(id).copied())
                            .collect::<Option<Vec<f64>>>()
                    })
                    .collect::<Option<Vec<Vec<f64>>>>()
                    .unwrap_or_default();
                if matrix.is_empty() {
                    bundle.warnings.push(format!(
                        "reliability matrix incomplete for {}/{}; ICC skipped",
                        criterion.name(),
                        method
                    ));
                    continue;
                }
                match icc_k(&matrix) {
                    Ok(result) => icc_rows.push((*criterion, *method, result)),
                    Err(err) => bundle.warnings.push(format!(
                        "ICC skipped for {}/{}: {err}",
                        criterion.name(),
                        method
                    )),
                }
            }
        }
        let m_icc = icc_rows.len();
        bundle.icc = icc_rows
            .into_iter()
            .map(|(criterion, method, result)| IccRow {
                criterion,
                method,
                significant_icc1: bonferroni_significant(result.p_icc1, m_icc),
                significant_icc23: bonferroni_significant(result.p_icc23, m_icc),
                result,
            })
            .collect();
    }

    Ok((aggregates, bundle))
}

/// The ordering and its correlation for one criterion x method slice of
/// an artifact's aggregates — the inputs of the strip figure.
pub fn sequence_for(
    aggregates: &[PoemAggregate],
    corpus: &Corpus,
    criterion: Criterion,
    method: ScoringMethod,
) -> Result<(OrderedSequence, Option<f64>), RunnerError> {
    let slice: Vec<PoemAggregate> = aggregates
        .iter()
        .filter(|a| a.criterion == criterion && a.method == method)
        .cloned()
        .collect();
    if slice.is_empty() {
        return Err(RunnerError::InvalidConfig(format!(
            "no aggregates for {}/{}",
            criterion.name(),
            method
        )));
    }
    let sequence = order_and_label(&slice, corpus)?;
    let src = sequence_src(&sequence).ok().map(|r| r.rho);
    Ok((sequence, src))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judge() -> JudgeConfig {
        JudgeConfig::new(Provider::Synthetic, "oracle")
    }

    #[test]
    fn presets_encode_the_protocol_shapes() {
        let c = ExperimentConfig::preset(ExperimentKind::RankSubsets, "corpus", judge(), 1, "out");
        assert_eq!(c.k_per_category, Some(5));
        assert_eq!(c.n_batches, Some(100));
        assert_eq!(c.criteria.len(), 5);
        assert_eq!(c.methods.len(), 2);
        assert!(c.validate().is_ok());

        let c = ExperimentConfig::preset(ExperimentKind::RankFull, "corpus", judge(), 1, "out");
        assert_eq!(c.n_batches, Some(10));
        assert!(c.validate().is_ok());

        let c = ExperimentConfig::preset(ExperimentKind::Reliability, "corpus", judge(), 1, "out");
        assert_eq!(c.repetitions, Some(10));
        assert_eq!(c.k_per_category, Some(5));
        assert!(c.validate().is_ok());

        let c = ExperimentConfig::preset(ExperimentKind::Classify, "corpus", judge(), 1, "out");
        assert!(c.criteria.is_empty() && c.methods.is_empty());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_shapes_are_rejected() {
        let mut c = ExperimentConfig::preset(ExperimentKind::RankSubsets, "c", judge(), 1, "o");
        c.criteria.clear();
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));

        let mut c = ExperimentConfig::preset(ExperimentKind::Reliability, "c", judge(), 1, "o");
        c.repetitions = Some(1);
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));

        let mut c = ExperimentConfig::preset(ExperimentKind::RankFull, "c", judge(), 1, "o");
        c.k_per_category = Some(5);
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));

        let mut c = ExperimentConfig::preset(ExperimentKind::Classify, "c", judge(), 1, "o");
        c.criteria = vec![Criterion::Quality];
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));

        let mut c = ExperimentConfig::preset(ExperimentKind::Custom, "c", judge(), 1, "o");
        c.k_per_category = None;
        c.n_batches = None;
        c.repetitions = None;
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));
    }

    #[test]
    fn mock_requires_a_script_and_synthetic_refuses_one() {
        let mut c = ExperimentConfig::preset(
            ExperimentKind::RankSubsets,
            "c",
            JudgeConfig::new(Provider::Mock, "scripted"),
            1,
            "o",
        );
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));
        c.script_path = Some(PathBuf::from("scripts.jsonl"));
        assert!(c.validate().is_ok());

        let mut c = ExperimentConfig::preset(ExperimentKind::RankSubsets, "c", judge(), 1, "o");
        c.script_path = Some(PathBuf::from("scripts.jsonl"));
        assert!(matches!(c.validate(), Err(RunnerError::InvalidConfig(_))));
    }

    #[test]
    fn remote_runs_require_live() {
        let c = ExperimentConfig::preset(
            ExperimentKind::RankSubsets,
            "missing-corpus",
            JudgeConfig::new(Provider::RemoteA, "some-model"),
            1,
            "out",
        );
        let err = run_experiment(&c, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, RunnerError::LiveRequired(p) if p == "remote-a"));
    }

    #[test]
    fn noise_seeds_differ_by_criterion() {
        let seeds: Vec<u64> = (0..5).map(|i| criterion_noise_seed(42, i)).collect();
        let mut unique = seeds.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 5);
        assert_eq!(criterion_noise_seed(42, 2), criterion_noise_seed(42, 2));
        assert_ne!(criterion_noise_seed(42, 0), criterion_noise_seed(43, 0));
    }
}
