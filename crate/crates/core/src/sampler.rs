//! Deterministic construction of evaluation batches.
//!
//! All sampling is driven by a ChaCha stream cipher RNG seeded from a
//! single 64-bit seed, with an independent substream per (plan kind,
//! batch index). Plans built from the same corpus, parameters, and seed
//! are therefore byte-identical across runs and platforms.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, Corpus, PoemId};

/// One presentation batch: the poems a judge sees, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub batch_id: u64,
    pub poem_ids: Vec<PoemId>,
}

/// The sampling scheme a plan was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    /// Fixed-size draws per category, independently per batch.
    StratifiedSubsets,
    /// Every poem in every batch, order reshuffled per batch.
    FullShuffles,
    /// One fixed set of poems presented repeatedly in fresh orders.
    RepeatedSubset,
}

/// Parameters the plan was built from; fields apply per [`PlanKind`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_per_category: Option<usize>,
    pub n_batches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
}

/// A reproducible set of batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub kind: PlanKind,
    pub seed: u64,
    pub params: PlanParams,
    pub batches: Vec<Batch>,
}

/// How often each poem actually appears across a plan's batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceStats {
    /// Number of batches in the plan.
    pub n: usize,
    /// Mean per-poem selection probability for one batch.
    pub p: f64,
    /// Expected appearances per poem: exactly `n * p`.
    pub mu: f64,
    /// Observed appearance count per corpus poem (zero when never drawn).
    pub counts: BTreeMap<PoemId, u32>,
    pub min_count: u32,
    pub max_count: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("category {category} has {available} poem(s) but {requested} were requested per batch")]
    InsufficientCategory {
        category: Category,
        available: usize,
        requested: usize,
    },
    #[error("cannot build batches from an empty corpus")]
    EmptyCorpus,
    #[error("repeated presentation needs at least 2 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("plan references poem {0} which is not in the corpus")]
    ForeignPoemId(PoemId),
}

/// Draws `n_batches` stratified subsets: `k_per_category` poems uniformly
/// without replacement from every category, with the combined batch order
/// reshuffled. Every category must hold at least `k_per_category` poems.
pub fn stratified_subsets(
    corpus: &Corpus,
    k_per_category: usize,
    n_batches: usize,
    seed: u64,
) -> Result<BatchPlan, SamplerError> {
    let pools = category_pools(corpus);
    for (&category, pool) in &pools {
        if pool.len() < k_per_category {
            return Err(SamplerError::InsufficientCategory {
                category,
                available: pool.len(),
                requested: k_per_category,
            });
        }
    }

    let batches = (0..n_batches as u64)
        .map(|b| {
            let mut rng = substream_rng(seed, PlanKind::StratifiedSubsets, b);
            let mut poem_ids = Vec::with_capacity(k_per_category * pools.len());
            for pool in pools.values() {
                poem_ids.extend(sample_without_replacement(pool, k_per_category, &mut rng));
            }
            shuffle(&mut poem_ids, &mut rng);
            Batch {
                batch_id: b,
                poem_ids,
            }
        })
        .collect();

    Ok(BatchPlan {
        kind: PlanKind::StratifiedSubsets,
        seed,
        params: PlanParams {
            k_per_category: Some(k_per_category),
            n_batches,
            repetitions: None,
        },
        batches,
    })
}

/// Presents the entire corpus `n_batches` times, each time in a fresh
/// uniformly random order.
pub fn full_shuffles(
    corpus: &Corpus,
    n_batches: usize,
    seed: u64,
) -> Result<BatchPlan, SamplerError> {
    if corpus.is_empty() {
        return Err(SamplerError::EmptyCorpus);
    }
    let all_ids = corpus.ids_in_id_order();
    let batches = (0..n_batches as u64)
        .map(|b| {
            let mut rng = substream_rng(seed, PlanKind::FullShuffles, b);
            let mut poem_ids = all_ids.clone();
            shuffle(&mut poem_ids, &mut rng);
            Batch {
                batch_id: b,
                poem_ids,
            }
        })
        .collect();

    Ok(BatchPlan {
        kind: PlanKind::FullShuffles,
        seed,
        params: PlanParams {
            k_per_category: None,
            n_batches,
            repetitions: None,
        },
        batches,
    })
}

/// Re-presents one batch `repetitions` times, reshuffling the order each
/// time. The poem set is identical across repetitions by construction.
pub fn repeated_subset(
    batch: &Batch,
    repetitions: usize,
    seed: u64,
) -> Result<BatchPlan, SamplerError> {
    if repetitions < 2 {
        return Err(SamplerError::TooFewRepetitions(repetitions));
    }
    let batches = (0..repetitions as u64)
        .map(|b| {
            let mut rng = substream_rng(seed, PlanKind::RepeatedSubset, b);
            let mut poem_ids = batch.poem_ids.clone();
            shuffle(&mut poem_ids, &mut rng);
            Batch {
                batch_id: b,
                poem_ids,
            }
        })
        .collect();

    Ok(BatchPlan {
        kind: PlanKind::RepeatedSubset,
        seed,
        params: PlanParams {
            k_per_category: None,
            n_batches: repetitions,
            repetitions: Some(repetitions),
        },
        batches,
    })
}

/// Tallies how often every corpus poem appears in `plan`.
///
/// `p` is the corpus-averaged probability that a given poem is in a given
/// batch (`batch_size / corpus_size`), so `mu = n * p` equals the exact
/// mean of `counts`, and the counts always sum to `n_batches * batch_size`.
pub fn appearance_stats(
    plan: &BatchPlan,
    corpus: &Corpus,
) -> Result<AppearanceStats, SamplerError> {
    let mut counts: BTreeMap<PoemId, u32> = corpus
        .ids_in_id_order()
        .into_iter()
        .map(|id| (id, 0))
        .collect();
    for batch in &plan.batches {
        for id in &batch.poem_ids {
            match counts.get_mut(id) {
                Some(c) => *c += 1,
                None => return Err(SamplerError::ForeignPoemId(id.clone())),
            }
        }
    }

    let n = plan.batches.len();
    let batch_size = plan.batches.first().map_or(0, |b| b.poem_ids.len());
    let p = if corpus.is_empty() {
        0.0
    } else {
        batch_size as f64 / corpus.len() as f64
    };
    let min_count = counts.values().copied().min().unwrap_or(0);
    let max_count = counts.values().copied().max().unwrap_or(0);

    Ok(AppearanceStats {
        n,
        p,
        mu: n as f64 * p,
        counts,
        min_count,
        max_count,
    })
}

/// Poem ids per category, each pool in id order so that plan construction
/// is independent of manifest listing order.
fn category_pools(corpus: &Corpus) -> BTreeMap<Category, Vec<PoemId>> {
    let mut pools: BTreeMap<Category, Vec<PoemId>> = BTreeMap::new();
    for poem in corpus.poems() {
        pools.entry(poem.category).or_default().push(poem.id.clone());
    }
    for pool in pools.values_mut() {
        pool.sort();
    }
    pools
}

/// RNG for one (plan kind, batch index) pair: the seed picks the key, the
/// mixed pair picks the ChaCha stream, so batches never share a stream.
fn substream_rng(seed: u64, kind: PlanKind, batch_index: u64) -> ChaCha8Rng {
    let tag = match kind {
        PlanKind::StratifiedSubsets => 1u64,
        PlanKind::FullShuffles => 2,
        PlanKind::RepeatedSubset => 3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(tag).wrapping_add(batch_index)));
    rng
}

/// SplitMix64 finalizer; a fixed, well-known 64-bit mixing function.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from `0..bound` by rejection, free of modulo bias.
fn uniform_below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let limit = u64::MAX - (u64::MAX % bound + 1) % bound;
    loop {
        let v = rng.next_u64();
        if v <= limit {
            return v % bound;
        }
    }
}

/// In-place Fisher–Yates shuffle.
fn shuffle(ids: &mut [PoemId], rng: &mut ChaCha8Rng) {
    for i in (1..ids.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        ids.swap(i, j);
    }
}

/// First `k` elements of a Fisher–Yates pass over the pool: a uniform
/// sample without replacement.
fn sample_without_replacement(pool: &[PoemId], k: usize, rng: &mut ChaCha8Rng) -> Vec<PoemId> {
    debug_assert!(k <= pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, (pool.len() - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| pool[i].clone()).collect()
}
