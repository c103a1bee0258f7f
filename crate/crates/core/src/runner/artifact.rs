//! Artifact persistence: one directory per run, written atomically.
//!
//! Layout: `config.json`, `plan.json`, `exchanges.jsonl`, `rankings.csv`,
//! `aggregates.csv`, `stats.json`, `report.md`, `figures/`. Everything
//! is written to a temporary sibling directory first and renamed into
//! place, so a crash never leaves a half-written artifact at the target
//! path. The files are self-contained: [`load_artifact`] plus
//! [`recompute_stats`] reproduce `stats.json` bit-for-bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{load_corpus, Category, Corpus, PoemId};
use crate::judge::AttemptRecord;
use crate::parser::{RankingEntry, RankingResponse};
use crate::prompts::Criterion;
use crate::sampler::BatchPlan;
use crate::scoring::{aggregates_to_csv, PoemAggregate};

use super::{
    compute_stats, io_err, report, ExperimentConfig, ExperimentKind, RankedCall, RunnerError,
    StatsBundle,
};

/// A completed (or incomplete-but-persisted) run in memory.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub plan: Option<BatchPlan>,
    pub calls: Vec<RankedCall>,
    /// Predicted categories, classification runs only.
    pub assignments: Option<BTreeMap<PoemId, Category>>,
    pub aggregates: Vec<PoemAggregate>,
    pub stats: StatsBundle,
}

/// An artifact read back from disk, with the corpus it references.
pub struct LoadedArtifact {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub plan: Option<BatchPlan>,
    pub calls: Vec<RankedCall>,
    pub assignments: Option<BTreeMap<PoemId, Category>>,
    /// The bundle as persisted in `stats.json`.
    pub stats: StatsBundle,
    pub corpus: Corpus,
}

fn artifact_err(path: &Path, message: impl Into<String>) -> RunnerError {
    RunnerError::Artifact {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), RunnerError> {
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

/// Writes the whole artifact directory atomically (tmp dir + rename).
/// Refuses an existing target rather than overwriting a previous run.
pub(crate) fn persist(
    artifact: &RunArtifact,
    records: &[AttemptRecord],
    corpus: &Corpus,
) -> Result<(), RunnerError> {
    let target = &artifact.dir;
    if target.exists() {
        return Err(artifact_err(
            target,
            "output directory already exists; choose a fresh one",
        ));
    }
    if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let file_name = target
        .file_name()
        .ok_or_else(|| artifact_err(target, "output path has no directory name"))?;
    let tmp = target.with_file_name(format!(
        "{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
    }
    fs::create_dir_all(tmp.join("figures")).map_err(|e| io_err(&tmp, e))?;

    write_file(&tmp.join("config.json"), &pretty_json(&artifact.config))?;
    write_file(&tmp.join("plan.json"), &pretty_json(&artifact.plan))?;

    let mut exchanges = String::new();
    for record in records {
        exchanges.push_str(&serde_json::to_string(record).expect("records serialize"));
        exchanges.push('\n');
    }
    write_file(&tmp.join("exchanges.jsonl"), &exchanges)?;

    write_file(&tmp.join("rankings.csv"), &rankings_csv(artifact)?)?;
    write_file(
        &tmp.join("aggregates.csv"),
        &aggregates_to_csv(&artifact.aggregates, corpus)?,
    )?;
    write_file(&tmp.join("stats.json"), &pretty_json(&artifact.stats))?;
    write_file(&tmp.join("report.md"), &report::render(artifact, corpus))?;

    if !artifact.stats.incomplete && artifact.config.experiment != ExperimentKind::Classify {
        for criterion in &artifact.config.criteria {
            for method in &artifact.config.methods {
                let Ok((sequence, src)) =
                    super::sequence_for(&artifact.aggregates, corpus, *criterion, *method)
                else {
                    continue;
                };
                let svg =
                    super::emit_ordering_strip(&sequence, src, super::StripFormat::Svg);
                let name = format!(
                    "strip-{}-{}.svg",
                    criterion.name().to_lowercase(),
                    method.name()
                );
                write_file(&tmp.join("figures").join(name), &svg)?;
            }
        }
    }

    fs::rename(&tmp, target).map_err(|e| io_err(target, e))
}

/// `rankings.csv` rows: per-entry for ranking runs, per-poem predicted
/// categories for classification runs.
fn rankings_csv(artifact: &RunArtifact) -> Result<String, RunnerError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| artifact_err(&artifact.dir, format!("rankings.csv: {e}"));
    if let Some(assignments) = &artifact.assignments {
        writer
            .write_record(["poem_id", "predicted_category"])
            .map_err(csv_err)?;
        for (poem_id, category) in assignments {
            writer
                .write_record([poem_id.as_str(), category.label()])
                .map_err(csv_err)?;
        }
    } else {
        writer
            .write_record(["criterion", "batch_id", "position", "poem_id", "score"])
            .map_err(csv_err)?;
        for call in &artifact.calls {
            for (entry, poem_id) in call.response.entries.iter().zip(&call.response.resolved_ids)
            {
                writer
                    .write_record([
                        call.criterion.name(),
                        &call.batch_id.to_string(),
                        &entry.position.to_string(),
                        poem_id.as_str(),
                        &entry.score.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
    }
    let bytes = writer.into_inner().expect("vec writer cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn read_file(path: &Path) -> Result<String, RunnerError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Reads an artifact directory back, including the corpus it points at.
pub fn load_artifact(dir: &Path) -> Result<LoadedArtifact, RunnerError> {
    let config: ExperimentConfig = serde_json::from_str(&read_file(&dir.join("config.json"))?)
        .map_err(|e| artifact_err(dir, format!("config.json: {e}")))?;
    let plan: Option<BatchPlan> = serde_json::from_str(&read_file(&dir.join("plan.json"))?)
        .map_err(|e| artifact_err(dir, format!("plan.json: {e}")))?;
    let stats: StatsBundle = serde_json::from_str(&read_file(&dir.join("stats.json"))?)
        .map_err(|e| artifact_err(dir, format!("stats.json: {e}")))?;
    let corpus = load_corpus(&config.corpus_root)?;

    let rankings = read_file(&dir.join("rankings.csv"))?;
    let mut calls = Vec::new();
    let mut assignments = None;
    if config.experiment == ExperimentKind::Classify {
        assignments = Some(parse_assignments(&rankings, dir)?);
    } else {
        calls = parse_rankings(&rankings, &corpus, dir)?;
    }

    Ok(LoadedArtifact {
        dir: dir.to_path_buf(),
        config,
        plan,
        calls,
        assignments,
        stats,
        corpus,
    })
}

fn parse_assignments(
    content: &str,
    dir: &Path,
) -> Result<BTreeMap<PoemId, Category>, RunnerError> {
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    let mut assignments = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| artifact_err(dir, format!("rankings.csv: {e}")))?;
        let poem_id = record
            .get(0)
            .ok_or_else(|| artifact_err(dir, "rankings.csv: missing poem_id"))?;
        let label = record
            .get(1)
            .ok_or_else(|| artifact_err(dir, "rankings.csv: missing predicted_category"))?;
        let category = Category::parse_label(label)
            .ok_or_else(|| artifact_err(dir, format!("unknown category {label:?}")))?;
        assignments.insert(poem_id.to_string(), category);
    }
    Ok(assignments)
}

fn parse_rankings(
    content: &str,
    corpus: &Corpus,
    dir: &Path,
) -> Result<Vec<RankedCall>, RunnerError> {
    let bad = |msg: String| artifact_err(dir, format!("rankings.csv: {msg}"));
    let mut reader = csv::Reader::from_reader(content.as_bytes());
    let mut calls: Vec<RankedCall> = Vec::new();
    let mut current: Option<(Criterion, u64)> = None;
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize, name: &str| {
            record
                .get(i)
                .map(str::to_string)
                .ok_or_else(|| bad(format!("missing {name}")))
        };
        let criterion = Criterion::parse_name(&field(0, "criterion")?)
            .ok_or_else(|| bad(format!("unknown criterion {:?}", record.get(0))))?;
        let batch_id: u64 = field(1, "batch_id")?
            .parse()
            .map_err(|e| bad(format!("batch_id: {e}")))?;
        let position: usize = field(2, "position")?
            .parse()
            .map_err(|e| bad(format!("position: {e}")))?;
        let poem_id = field(3, "poem_id")?;
        let score: u8 = field(4, "score")?
            .parse()
            .map_err(|e| bad(format!("score: {e}")))?;
        let poem = corpus
            .poem(&poem_id)
            .ok_or_else(|| bad(format!("poem {poem_id} not in corpus")))?;

        if current != Some((criterion, batch_id)) {
            calls.push(RankedCall {
                criterion,
                batch_id,
                response: RankingResponse {
                    entries: Vec::new(),
                    resolved_ids: Vec::new(),
                },
            });
            current = Some((criterion, batch_id));
        }
        let call = calls.last_mut().expect("pushed above");
        call.response.entries.push(RankingEntry {
            position,
            author: poem.author.clone(),
            title: poem.title.clone(),
            score,
        });
        call.response.resolved_ids.push(poem_id);
    }
    Ok(calls)
}

/// Recomputes aggregates and statistics from a loaded artifact's data.
/// For a complete artifact this reproduces the persisted `stats.json`
/// exactly; comparing the two is the self-check behind the `stats`
/// subcommand.
pub fn recompute_stats(
    loaded: &LoadedArtifact,
) -> Result<(Vec<PoemAggregate>, StatsBundle), RunnerError> {
    compute_stats(
        &loaded.corpus,
        &loaded.config,
        loaded.plan.as_ref(),
        &loaded.calls,
        loaded.assignments.as_ref(),
    )
}
