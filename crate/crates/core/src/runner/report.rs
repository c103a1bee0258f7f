//! The human-readable `report.md` written into every artifact.

use crate::corpus::Corpus;
use crate::stats::ALPHA;

use super::{ExperimentKind, RunArtifact};

fn fmt_p(p: f64) -> String {
    if p == 0.0 {
        "0".to_string()
    } else {
        format!("{p:.3e}")
    }
}

fn fmt_f(f: f64) -> String {
    if f.is_finite() {
        format!("{f:.2}")
    } else {
        "inf".to_string()
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Renders the full markdown report for an artifact.
pub(crate) fn render(artifact: &RunArtifact, corpus: &Corpus) -> String {
    let config = &artifact.config;
    let stats = &artifact.stats;
    let mut out = String::new();

    out.push_str(&format!("# Run report: {}\n\n", config.experiment));
    out.push_str(&format!("- judge: {}\n", config.judge.judge_id()));
    out.push_str(&format!("- seed: {}\n", config.seed));
    if let Some(sigma) = config.noise_sigma {
        out.push_str(&format!("- noise sigma: {sigma}\n"));
    }
    let counts = corpus.counts();
    let breakdown: Vec<String> = counts
        .iter()
        .map(|(category, n)| format!("{n} {}", category.label()))
        .collect();
    out.push_str(&format!(
        "- corpus: {} ({} poems: {})\n",
        config.corpus_root.display(),
        corpus.len(),
        breakdown.join(", ")
    ));
    out.push_str(&format!(
        "- status: {}\n",
        if stats.incomplete {
            "INCOMPLETE — statistics withheld, see warnings"
        } else {
            "complete"
        }
    ));

    if !stats.warnings.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for warning in &stats.warnings {
            out.push_str(&format!("- {warning}\n"));
        }
    }

    if let Some(accuracy) = stats.accuracy {
        let correct = (accuracy * corpus.len() as f64).round() as usize;
        out.push_str("\n## Classification\n\n");
        out.push_str(&format!(
            "- accuracy: {:.1}% ({correct}/{} correct)\n",
            accuracy * 100.0,
            corpus.len()
        ));
    }

    if !stats.src.is_empty() {
        out.push_str(&format!(
            "\n## Rank correlation with ground truth\n\n\
             Significance: Bonferroni-corrected within this table, alpha = {ALPHA}.\n\n"
        ));
        out.push_str("| Criterion | Method | rho | p-value | significant |\n");
        out.push_str("|---|---|---|---|---|\n");
        for row in &stats.src {
            out.push_str(&format!(
                "| {} | {} | {:.4} | {} | {} |\n",
                row.criterion.map_or("classification", |c| c.name()),
                row.method.map_or("-".to_string(), |m| m.to_string()),
                row.result.rho,
                fmt_p(row.result.p_value),
                yes_no(row.significant),
            ));
        }
    }

    if !stats.anova.is_empty() {
        out.push_str(&format!(
            "\n## Category separation (one-way ANOVA on mean scores)\n\n\
             Significance: Bonferroni-corrected within this table, alpha = {ALPHA}.\n\n"
        ));
        out.push_str(
            "| Criterion | Method | Good | Medium | Bad | F-value | p-value | significant |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for row in &stats.anova {
            let means = &row.result.group_means;
            out.push_str(&format!(
                "| {} | {} | {:.2} | {:.2} | {:.2} | {} | {} | {} |\n",
                row.criterion.name(),
                row.method,
                means[0],
                means[1],
                means[2],
                fmt_f(row.result.f_stat),
                fmt_p(row.result.p_value),
                yes_no(row.significant),
            ));
        }
    }

    if !stats.icc.is_empty() {
        out.push_str(&format!(
            "\n## Run-to-run reliability (average-measure ICC)\n\n\
             Significance: Bonferroni-corrected within this table, alpha = {ALPHA}.\n\n"
        ));
        out.push_str(
            "| Criterion | Method | ICC(1,k) | ICC(2,k) | ICC(3,k) | F | p | F (2,3) | p (2,3) | significant |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
        for row in &stats.icc {
            out.push_str(&format!(
                "| {} | {} | {:.4} | {:.4} | {:.4} | {} | {} | {} | {} | {} |\n",
                row.criterion.name(),
                row.method,
                row.result.icc1k,
                row.result.icc2k,
                row.result.icc3k,
                fmt_f(row.result.f_icc1),
                fmt_p(row.result.p_icc1),
                fmt_f(row.result.f_icc23),
                fmt_p(row.result.p_icc23),
                yes_no(row.significant_icc1 && row.significant_icc23),
            ));
        }
    }

    if let Some(appearance) = &stats.appearance {
        out.push_str("\n## Appearances\n\n");
        out.push_str(&format!(
            "- batches: {}, per-batch selection probability p = {:.4}, \
             expected appearances per poem mu = {:.3}\n",
            appearance.n, appearance.p, appearance.mu
        ));
        out.push_str(&format!(
            "- observed appearance counts: min {}, max {}\n",
            appearance.min_count, appearance.max_count
        ));
        let uncovered = appearance.counts.values().filter(|&&c| c == 0).count();
        out.push_str(&format!("- poems never drawn: {uncovered}\n"));
    }

    if artifact.config.experiment != ExperimentKind::Classify && !stats.incomplete {
        out.push_str("\n## Figures\n\n");
        out.push_str(
            "Ordering strips (one block per poem, best mean score on the left, \
             colored by true category) are in `figures/`.\n",
        );
    }

    out
}
