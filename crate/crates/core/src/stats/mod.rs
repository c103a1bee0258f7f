//! Statistical kernels: tied-rank correlation, one-way ANOVA, intraclass
//! correlation, and the special functions their p-values are built on.
//!
//! The kernels are self-contained f64 implementations so that identical
//! inputs give bit-identical results on every platform.

mod anova;
mod icc;
mod rank;
pub mod special;

pub use anova::{anova_oneway, AnovaResult};
pub use icc::{icc_k, IccResult};
pub use rank::{average_ranks, spearman, CorrelationResult};
pub use special::{f_cdf, f_survival, regularized_incomplete_beta, t_tail_two_sided};

use thiserror::Error;

/// Family-wise significance level used when flagging results.
pub const ALPHA: f64 = 0.01;

/// Errors shared by the statistical kernels.
#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample has no variance after ranking")]
    DegenerateVariance,
    #[error("{0}")]
    TooFewSamples(String),
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("no variance anywhere in the data; nothing to test")]
    DegenerateWithin,
    #[error("score matrix is not fully populated: {0}")]
    MissingCells(String),
    #[error("targets are indistinguishable (zero between-target variance)")]
    DegenerateTargets,
    #[error("domain error: {0}")]
    DomainError(String),
}

/// True when `p` stays significant at [`ALPHA`] after a Bonferroni
/// correction for `m` comparisons in the same family.
pub fn bonferroni_significant(p: f64, m: usize) -> bool {
    m > 0 && p < ALPHA / m as f64
}

/// Serde adapter for f64 fields that can legitimately be infinite (test
/// statistics under perfect correlation or zero within-group variance).
/// JSON has no infinity literal, so non-finite values are stored as the
/// strings `"inf"`, `"-inf"`, `"nan"`; finite values stay plain numbers
/// and round-trip bit-for-bit.
pub mod ext_f64 {
    use serde::de::{Error, Unexpected, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else if value.is_nan() {
            serializer.serialize_str("nan")
        } else if *value > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        struct ExtVisitor;

        impl Visitor<'_> for ExtVisitor {
            type Value = f64;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }

            fn visit_f64<E: Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }

            fn visit_i64<E: Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_u64<E: Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }

            fn visit_str<E: Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => Err(E::invalid_value(Unexpected::Str(other), &self)),
                }
            }
        }

        deserializer.deserialize_any(ExtVisitor)
    }
}
