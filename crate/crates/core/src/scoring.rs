//! Turning validated rankings into per-poem scores and orderings.
//!
//! Two scoring schemes coexist: `Scale` keeps the judge's literal 1-5
//! integers, `RankDerived` ignores them and scores by list position
//! (top of a k-item list gets k, bottom gets 1). Scores are averaged
//! per poem across every batch where the poem appeared, then poems are
//! ordered by mean score to produce the category sequence the
//! correlation statistics consume.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, Corpus, PoemId};
use crate::parser::RankingResponse;
use crate::prompts::Criterion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoringMethod {
    /// The judge's own 1-5 integer for each entry.
    Scale,
    /// k − position + 1 for a k-item list; first place scores k.
    RankDerived,
}

impl ScoringMethod {
    pub const ALL: [ScoringMethod; 2] = [ScoringMethod::Scale, ScoringMethod::RankDerived];

    pub fn name(self) -> &'static str {
        match self {
            ScoringMethod::Scale => "scale",
            ScoringMethod::RankDerived => "rank-derived",
        }
    }

    pub fn parse_name(s: &str) -> Option<ScoringMethod> {
        ScoringMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_lowercase())
    }
}

impl std::fmt::Display for ScoringMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A poem's scores collected across every batch where it appeared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoemAggregate {
    pub poem_id: PoemId,
    pub criterion: Criterion,
    pub method: ScoringMethod,
    pub appearances: usize,
    pub mean_score: f64,
    /// One score per appearance, in batch order.
    pub scores: Vec<f64>,
}

/// Poems ordered best-first by mean score, each labeled with its
/// ground-truth category; `category_ranks` is the sequence the
/// rank-correlation statistics consume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderedSequence {
    pub entries: Vec<OrderedEntry>,
    pub category_ranks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderedEntry {
    pub poem_id: PoemId,
    pub mean_score: f64,
    pub category: Category,
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("poem {0} is not in the corpus")]
    ForeignPoem(PoemId),
    #[error("no category assigned for poem {0}")]
    MissingAssignment(PoemId),
    #[error("failed to write CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Scores one validated response under the given method. `Scale` copies
/// the entry scores; `RankDerived` assigns k − position + 1.
pub fn score_ranking(response: &RankingResponse, method: ScoringMethod) -> BTreeMap<PoemId, f64> {
    let k = response.entries.len();
    response
        .entries
        .iter()
        .zip(&response.resolved_ids)
        .map(|(entry, id)| {
            let score = match method {
                ScoringMethod::Scale => f64::from(entry.score),
                ScoringMethod::RankDerived => (k - entry.position + 1) as f64,
            };
            (id.clone(), score)
        })
        .collect()
}

/// Averages per-batch scores into one aggregate per poem that appeared
/// at least once, sorted by poem id. Poems that never appeared are
/// simply absent; see [`uncovered_poems`].
pub fn aggregate(
    scored_batches: &[BTreeMap<PoemId, f64>],
    criterion: Criterion,
    method: ScoringMethod,
) -> Vec<PoemAggregate> {
    let mut collected: BTreeMap<&PoemId, Vec<f64>> = BTreeMap::new();
    for batch in scored_batches {
        for (id, score) in batch {
            collected.entry(id).or_default().push(*score);
        }
    }
    collected
        .into_iter()
        .map(|(id, scores)| {
            let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
            PoemAggregate {
                poem_id: id.clone(),
                criterion,
                method,
                appearances: scores.len(),
                mean_score,
                scores,
            }
        })
        .collect()
}

/// Corpus poems with no aggregate (zero appearances), sorted by id.
/// Callers should surface these as a warning: statistics then run on
/// the covered subset only.
pub fn uncovered_poems(aggregates: &[PoemAggregate], corpus: &Corpus) -> Vec<PoemId> {
    let covered: std::collections::BTreeSet<&PoemId> =
        aggregates.iter().map(|a| &a.poem_id).collect();
    corpus
        .ids_in_id_order()
        .into_iter()
        .filter(|id| !covered.contains(id))
        .collect()
}

/// Orders aggregates by mean score descending (ties by poem id
/// ascending, for a stable display order) and labels each position with
/// its ground-truth category rank.
pub fn order_and_label(
    aggregates: &[PoemAggregate],
    corpus: &Corpus,
) -> Result<OrderedSequence, ScoringError> {
    let mut entries: Vec<OrderedEntry> = aggregates
        .iter()
        .map(|a| {
            let poem = corpus
                .poem(&a.poem_id)
                .ok_or_else(|| ScoringError::ForeignPoem(a.poem_id.clone()))?;
            Ok(OrderedEntry {
                poem_id: a.poem_id.clone(),
                mean_score: a.mean_score,
                category: poem.category,
            })
        })
        .collect::<Result<_, ScoringError>>()?;
    entries.sort_by(|a, b| {
        b.mean_score
            .partial_cmp(&a.mean_score)
            .expect("mean scores are finite")
            .then_with(|| a.poem_id.cmp(&b.poem_id))
    });
    let category_ranks = entries.iter().map(|e| e.category.rank()).collect();
    Ok(OrderedSequence {
        entries,
        category_ranks,
    })
}

/// The category-rank sequence a perfect judge would produce: every
/// Good poem first, then Medium, then Bad.
pub fn ground_category_sequence(corpus: &Corpus) -> Vec<u32> {
    let counts = corpus.counts();
    Category::ALL
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c.rank(), counts.get(&c).copied().unwrap_or(0)))
        .collect()
}

/// Pairs each poem's true category rank with its predicted one, in
/// poem-id order — the input shape for tied-rank correlation. Every
/// corpus poem must be assigned, and every assignment must name a
/// corpus poem.
pub fn classification_rank_pairs(
    assignments: &BTreeMap<PoemId, Category>,
    corpus: &Corpus,
) -> Result<(Vec<f64>, Vec<f64>), ScoringError> {
    for id in assignments.keys() {
        if corpus.poem(id).is_none() {
            return Err(ScoringError::ForeignPoem(id.clone()));
        }
    }
    let mut true_ranks = Vec::with_capacity(corpus.len());
    let mut predicted_ranks = Vec::with_capacity(corpus.len());
    for id in corpus.ids_in_id_order() {
        let poem = corpus.poem(&id).expect("id from corpus");
        let predicted = assignments
            .get(&id)
            .ok_or_else(|| ScoringError::MissingAssignment(id.clone()))?;
        true_ranks.push(f64::from(poem.category.rank()));
        predicted_ranks.push(f64::from(predicted.rank()));
    }
    Ok((true_ranks, predicted_ranks))
}

/// Fraction of poems assigned their true category.
pub fn classification_accuracy(
    assignments: &BTreeMap<PoemId, Category>,
    corpus: &Corpus,
) -> Result<f64, ScoringError> {
    let (true_ranks, predicted_ranks) = classification_rank_pairs(assignments, corpus)?;
    let correct = true_ranks
        .iter()
        .zip(&predicted_ranks)
        .filter(|(t, p)| t == p)
        .count();
    Ok(correct as f64 / corpus.len() as f64)
}

/// Serializes aggregates to CSV with columns
/// `poem_id, category, criterion, method, appearances, mean_score`.
pub fn aggregates_to_csv(
    aggregates: &[PoemAggregate],
    corpus: &Corpus,
) -> Result<String, ScoringError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["poem_id", "category", "criterion", "method", "appearances", "mean_score"])?;
    for a in aggregates {
        let poem = corpus
            .poem(&a.poem_id)
            .ok_or_else(|| ScoringError::ForeignPoem(a.poem_id.clone()))?;
        writer.write_record([
            a.poem_id.as_str(),
            poem.category.label(),
            a.criterion.name(),
            a.method.name(),
            &a.appearances.to_string(),
            &a.mean_score.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().expect("vec writer cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
