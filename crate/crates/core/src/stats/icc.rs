//! Intraclass correlation for average measures over k raters.

use serde::{Deserialize, Serialize};

use super::special::f_survival;
use super::StatsError;

/// Average-measure intraclass correlations for an n-target × k-rater matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    pub n_targets: usize,
    pub k_raters: usize,
    /// One-way random effects, average of k raters.
    pub icc1k: f64,
    /// Two-way random effects, average measures, absolute agreement.
    pub icc2k: f64,
    /// Two-way mixed effects, average measures, consistency.
    pub icc3k: f64,
    /// F statistic for the one-way model: MS_targets / MS_within.
    #[serde(with = "crate::stats::ext_f64")]
    pub f_icc1: f64,
    /// F statistic shared by the two-way models: MS_targets / MS_error.
    #[serde(with = "crate::stats::ext_f64")]
    pub f_icc23: f64,
    pub p_icc1: f64,
    pub p_icc23: f64,
    pub ms_between_targets: f64,
    pub ms_within: f64,
    pub ms_between_raters: f64,
    pub ms_error: f64,
}

/// Computes the three average-measure intraclass correlations from a score
/// matrix with one row per target and one column per rater (or repeated
/// run). All rows must have the same, fully populated width.
///
/// Mean squares come from the standard two-way decomposition:
/// targets, raters, residual, and the one-way "within targets" pool. The
/// coefficients are then
///
/// * ICC(1,k) = (MSB − MSW) / MSB
/// * ICC(2,k) = (MSB − MSE) / (MSB + (MSJ − MSE)/n)
/// * ICC(3,k) = (MSB − MSE) / MSB
///
/// with MSB between targets, MSW within targets, MSJ between raters and
/// MSE the residual. The F tests are MSB/MSW on (n−1, n(k−1)) degrees of
/// freedom and MSB/MSE on (n−1, (n−1)(k−1)).
pub fn icc_k(matrix: &[Vec<f64>]) -> Result<IccResult, StatsError> {
    let n = matrix.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(format!(
            "ICC needs at least 2 targets, got {n}"
        )));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(StatsError::TooFewSamples(format!(
            "ICC needs at least 2 raters, got {k}"
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::MissingCells(format!(
                "target {i} has {} score(s), expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::MissingCells(format!(
                "target {i} contains a non-finite score"
            )));
        }
    }

    let nf = n as f64;
    let kf = k as f64;
    let grand = matrix.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| matrix.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();

    let ss_total: f64 = matrix
        .iter()
        .flatten()
        .map(|&v| (v - grand) * (v - grand))
        .sum();
    let ss_targets: f64 = kf * row_means.iter().map(|&m| (m - grand) * (m - grand)).sum::<f64>();
    let ss_raters: f64 = nf * col_means.iter().map(|&m| (m - grand) * (m - grand)).sum::<f64>();
    let ss_error = ss_total - ss_targets - ss_raters;
    let ss_within = ss_total - ss_targets;

    let ms_between_targets = ss_targets / (nf - 1.0);
    let ms_within = ss_within / (nf * (kf - 1.0));
    let ms_between_raters = ss_raters / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));

    if ms_between_targets <= 0.0 {
        return Err(StatsError::DegenerateTargets);
    }

    let icc1k = (ms_between_targets - ms_within) / ms_between_targets;
    let icc3k = (ms_between_targets - ms_error) / ms_between_targets;
    let icc2k = (ms_between_targets - ms_error)
        / (ms_between_targets + (ms_between_raters - ms_error) / nf);

    let df1 = n - 1;
    let df_within = n * (k - 1);
    let df_error = (n - 1) * (k - 1);

    let (f_icc1, p_icc1) = f_ratio(ms_between_targets, ms_within, df1, df_within)?;
    let (f_icc23, p_icc23) = f_ratio(ms_between_targets, ms_error, df1, df_error)?;

    Ok(IccResult {
        n_targets: n,
        k_raters: k,
        icc1k,
        icc2k,
        icc3k,
        f_icc1,
        f_icc23,
        p_icc1,
        p_icc23,
        ms_between_targets,
        ms_within,
        ms_between_raters,
        ms_error,
    })
}

/// F statistic and right-tail p for a ratio of mean squares; a zero
/// denominator yields the perfect-consistency sentinel (+∞, 0).
fn f_ratio(num: f64, den: f64, df1: usize, df2: usize) -> Result<(f64, f64), StatsError> {
    if den == 0.0 {
        return Ok((f64::INFINITY, 0.0));
    }
    let f = num / den;
    Ok((f, f_survival(f, df1, df2)?))
}
