//! One-way analysis of variance.

use serde::{Deserialize, Serialize};

use super::special::f_survival;
use super::StatsError;

/// Result of a one-way ANOVA over two or more groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// Per-group means, in the order the groups were supplied.
    pub group_means: Vec<f64>,
    /// F statistic (between-group over within-group mean square).
    #[serde(with = "crate::stats::ext_f64")]
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    /// Right tail of the F distribution at `f_stat`.
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
}

/// One-way ANOVA across `groups`.
///
/// Requires at least two groups with at least two observations each. When
/// every group is internally constant but the means differ, the separation
/// is perfect and the result carries the sentinel `f_stat = +∞`, `p = 0`;
/// if additionally all means coincide there is no variance anywhere to
/// test and `DegenerateWithin` is returned.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::TooFewSamples(format!(
                "ANOVA group {i} has {} observation(s); need at least 2",
                g.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::DomainError(format!(
                "ANOVA group {i} contains a non-finite value"
            )));
        }
    }

    let total_n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total_n as f64;
    let group_means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();

    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    let mut ss_total = 0.0;
    for (g, &mean) in groups.iter().zip(&group_means) {
        ss_between += g.len() as f64 * (mean - grand) * (mean - grand);
        for &v in g {
            ss_within += (v - mean) * (v - mean);
            ss_total += (v - grand) * (v - grand);
        }
    }

    let df_between = groups.len() - 1;
    let df_within = total_n - groups.len();

    let (f_stat, p_value) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            // Every observation identical: nothing to test.
            return Err(StatsError::DegenerateWithin);
        }
        // Perfect separation: report the conventional sentinel.
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (f, f_survival(f, df_between, df_within)?)
    };

    Ok(AnovaResult {
        group_means,
        f_stat,
        df_between,
        df_within,
        p_value,
        ss_between,
        ss_within,
        ss_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn textbook_three_group_case() {
        // Groups shifted by one unit each: F = 3.0 on (2, 6) df, p = 0.125
        // (the tail has the closed form (1 + f/3)^-3 at these df).
        let groups = vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0],
            vec![3.0, 4.0, 5.0],
        ];
        let r = anova_oneway(&groups).unwrap();
        assert_abs_diff_eq!(r.f_stat, 3.0, epsilon = 1e-12);
        assert_eq!((r.df_between, r.df_within), (2, 6));
        assert_abs_diff_eq!(r.p_value, 0.125, epsilon = 1e-12);
        assert_eq!(r.group_means, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn identical_groups_give_zero_f() {
        let groups = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let r = anova_oneway(&groups).unwrap();
        assert_abs_diff_eq!(r.f_stat, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sum_of_squares_identity() {
        let groups = vec![
            vec![3.1, 4.7, 2.2, 5.5],
            vec![10.3, 9.1, 11.8],
            vec![6.6, 7.7, 5.5, 6.1, 7.0],
        ];
        let r = anova_oneway(&groups).unwrap();
        let residual = (r.ss_total - (r.ss_between + r.ss_within)).abs();
        assert!(residual <= 1e-9 * r.ss_total.max(1.0));
    }

    #[test]
    fn perfect_separation_hits_the_sentinel() {
        let groups = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let r = anova_oneway(&groups).unwrap();
        assert!(r.f_stat.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn all_constant_input_is_degenerate() {
        let groups = vec![vec![2.0, 2.0], vec![2.0, 2.0]];
        assert!(matches!(
            anova_oneway(&groups),
            Err(StatsError::DegenerateWithin)
        ));
    }

    #[test]
    fn one_group_is_too_few() {
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0]]),
            Err(StatsError::TooFewGroups(1))
        ));
    }

    #[test]
    fn singleton_group_is_rejected() {
        assert!(matches!(
            anova_oneway(&[vec![1.0, 2.0], vec![3.0]]),
            Err(StatsError::TooFewSamples(_))
        ));
    }
}
