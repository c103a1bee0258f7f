//! Fractional ranking and tied-rank correlation.

use serde::{Deserialize, Serialize};

use super::special::t_tail_two_sided;
use super::StatsError;

/// Result of a rank correlation between two paired samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Correlation coefficient in [-1, 1].
    pub rho: f64,
    /// Number of paired observations.
    pub n: usize,
    /// t statistic for the null hypothesis rho = 0.
    #[serde(with = "crate::stats::ext_f64")]
    pub t_stat: f64,
    /// Two-sided p-value from the t approximation with n − 2 degrees of freedom.
    pub p_value: f64,
}

/// Assigns 1-based fractional ranks, giving tied values the mean of the
/// positions they occupy.
///
/// The ranks of `[10, 20, 20, 30]` are `[1.0, 2.5, 2.5, 4.0]`; ranks always
/// sum to n(n+1)/2.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        // Find the extent of the tie group starting at sorted position i.
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j (1-based) share the average rank.
        let shared = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = shared;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
///
/// Both samples are converted to fractional ranks and the Pearson product-
/// moment correlation of the rank vectors is returned, together with the
/// t-approximation p-value: t = rho·sqrt((n−2)/(1−rho²)) referred to a
/// two-sided t tail with n − 2 degrees of freedom. A perfect correlation
/// (|rho| = 1) is reported with p = 0.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples(format!(
            "rank correlation needs at least 3 pairs, got {n}"
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(StatsError::DomainError(
            "rank correlation inputs must be finite".into(),
        ));
    }

    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry)?.clamp(-1.0, 1.0);
    // A perfect monotone relation can land a few ulps shy of ±1; the gap to
    // the nearest genuinely imperfect rank correlation is many orders of
    // magnitude wider, so snap to the exact boundary.
    let rho = if (rho.abs() - 1.0).abs() < 1e-12 {
        rho.signum()
    } else {
        rho
    };

    let (t_stat, p_value) = if rho.abs() == 1.0 {
        (f64::INFINITY * rho.signum(), 0.0)
    } else {
        let nf = n as f64;
        let t = rho * ((nf - 2.0) / (1.0 - rho * rho)).sqrt();
        (t, t_tail_two_sided(t, n - 2)?)
    };

    Ok(CorrelationResult {
        rho,
        n,
        t_stat,
        p_value,
    })
}

/// Pearson correlation of two equal-length samples.
fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
