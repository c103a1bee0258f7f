//! End-to-end runs of the experiment pipeline against the bundled
//! fixture corpus: noiseless recovery, artifact determinism, recompute
//! identity, reliability matrices, classification, and failure handling.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use verserank::corpus::load_corpus;
use verserank::judge::{synthetic_rank, JudgeConfig, NoiseModel, Provider};
use verserank::prompts::Criterion;
use verserank::runner::{
    load_artifact, run_experiment, ExperimentConfig, ExperimentKind, RunOptions, RunnerError,
};
use verserank::sampler::full_shuffles;
use verserank::scoring::ScoringMethod;

fn corpus_root() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus90"))
}

fn synthetic_judge() -> JudgeConfig {
    JudgeConfig::new(Provider::Synthetic, "oracle")
}

fn file_map(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let entry = entry.expect("dir entry");
            let name = format!("{prefix}{}", entry.file_name().to_string_lossy());
            if entry.path().is_dir() {
                walk(&entry.path(), &format!("{name}/"), out);
            } else {
                out.insert(name, fs::read(entry.path()).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, "", &mut out);
    out
}

#[test]
fn noiseless_subsets_recover_ground_truth_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut config = ExperimentConfig::preset(
        ExperimentKind::RankSubsets,
        corpus_root(),
        synthetic_judge(),
        11,
        &out,
    );
    config.n_batches = Some(20); // protocol shape, trimmed for speed

    let artifact = run_experiment(&config, &RunOptions::default()).unwrap();
    assert!(!artifact.stats.incomplete);
    assert_eq!(artifact.stats.src.len(), 10, "five criteria x two methods");
    for row in &artifact.stats.src {
        assert_eq!(
            row.result.rho, 1.0,
            "noiseless oracle must recover ground truth for {:?}/{:?}",
            row.criterion, row.method
        );
        assert_eq!(row.result.p_value, 0.0);
        assert!(row.significant);
    }
    for row in &artifact.stats.anova {
        let means = &row.result.group_means;
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "group means must order Good > Medium > Bad, got {means:?}"
        );
    }

    // The artifact directory is complete.
    for file in [
        "config.json",
        "plan.json",
        "exchanges.jsonl",
        "rankings.csv",
        "aggregates.csv",
        "stats.json",
        "report.md",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let strips: Vec<_> = fs::read_dir(out.join("figures")).unwrap().collect();
    assert_eq!(strips.len(), 10, "one strip per criterion x method");
    for entry in strips {
        let svg = fs::read_to_string(entry.unwrap().path()).unwrap();
        roxmltree::Document::parse(&svg).expect("figures are well-formed XML");
        assert!(svg.contains("SRC = 1.00"));
    }

    // Appearance bookkeeping: every batch contributes 15 poems.
    let appearance = artifact.stats.appearance.as_ref().unwrap();
    assert_eq!(appearance.n, 20);
    let total: u32 = appearance.counts.values().sum();
    assert_eq!(total, 20 * 15);

    // Recomputing from the persisted artifact reproduces stats.json.
    let loaded = load_artifact(&out).unwrap();
    let (aggregates, bundle) = verserank::runner::artifact::recompute_stats(&loaded).unwrap();
    assert_eq!(bundle, artifact.stats);
    assert_eq!(aggregates, artifact.aggregates);
    let persisted = fs::read_to_string(out.join("stats.json")).unwrap();
    let mut reserialized = serde_json::to_string_pretty(&bundle).unwrap();
    reserialized.push('\n');
    assert_eq!(persisted, reserialized, "recompute is byte-identical");
}

#[test]
fn replaying_a_seed_yields_byte_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("replay");
    let mut config = ExperimentConfig::preset(
        ExperimentKind::RankSubsets,
        corpus_root(),
        synthetic_judge(),
        1234,
        &out,
    );
    config.n_batches = Some(5);
    config.noise_sigma = Some(1.5);
    config.criteria = vec![Criterion::Quality, Criterion::Creativity];

    run_experiment(&config, &RunOptions::default()).unwrap();
    let first = file_map(&out);
    fs::remove_dir_all(&out).unwrap();
    run_experiment(&config, &RunOptions::default()).unwrap();
    let second = file_map(&out);

    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &first {
        assert_eq!(bytes, &second[name], "{name} differs between replays");
    }
}

#[test]
fn changing_the_seed_changes_noisy_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rhos = Vec::new();
    for seed in [1u64, 2] {
        let out = tmp.path().join(format!("seed-{seed}"));
        let mut config = ExperimentConfig::preset(
            ExperimentKind::RankSubsets,
            corpus_root(),
            synthetic_judge(),
            seed,
            &out,
        );
        config.n_batches = Some(10);
        config.noise_sigma = Some(4.0);
        config.criteria = vec![Criterion::Quality];
        config.methods = vec![ScoringMethod::RankDerived];
        let artifact = run_experiment(&config, &RunOptions::default()).unwrap();
        rhos.push(artifact.stats.src[0].result.rho);
    }
    assert_ne!(rhos[0], rhos[1], "different seeds should move a noisy SRC");
}

#[test]
fn reliability_run_builds_full_icc_matrices() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("reliability");
    let mut config = ExperimentConfig::preset(
        ExperimentKind::Reliability,
        corpus_root(),
        synthetic_judge(),
        7,
        &out,
    );
    config.noise_sigma = Some(0.8);
    config.criteria = vec![Criterion::Quality, Criterion::Poeticness];

    let artifact = run_experiment(&config, &RunOptions::default()).unwrap();
    assert!(!artifact.stats.incomplete);
    assert_eq!(artifact.stats.icc.len(), 4, "two criteria x two methods");
    for row in &artifact.stats.icc {
        let r = &row.result;
        assert_eq!(r.n_targets, 15);
        assert_eq!(r.k_raters, 10);
        for icc in [r.icc1k, r.icc2k, r.icc3k] {
            assert!(icc > 0.0 && icc <= 1.0, "plausible reliability, got {icc}");
        }
    }

    // Reliability aggregates: every poem of the subset appears 10 times.
    for aggregate in &artifact.aggregates {
        assert_eq!(aggregate.appearances, 10);
    }

    let loaded = load_artifact(&out).unwrap();
    let (_, bundle) = verserank::runner::artifact::recompute_stats(&loaded).unwrap();
    assert_eq!(bundle, artifact.stats);
}

#[test]
fn scripted_classification_scores_perfectly() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let script_path = tmp.path().join("answers.jsonl");
    let mut script = fs::File::create(&script_path).unwrap();
    for id in corpus.ids_in_id_order() {
        let poem = corpus.poem(&id).unwrap();
        let text = format!("<category>{}</category>", poem.category.label());
        writeln!(script, "{}", serde_json::to_string(&text).unwrap()).unwrap();
    }
    drop(script);

    let out = tmp.path().join("classify");
    let mut config = ExperimentConfig::preset(
        ExperimentKind::Classify,
        corpus_root(),
        JudgeConfig::new(Provider::Mock, "scripted"),
        5,
        &out,
    );
    config.script_path = Some(script_path);

    let artifact = run_experiment(&config, &RunOptions::default()).unwrap();
    assert_eq!(artifact.stats.accuracy, Some(1.0));
    assert_eq!(artifact.stats.src.len(), 1);
    assert_eq!(artifact.stats.src[0].result.rho, 1.0);
    assert!(artifact.plan.is_none());

    let rankings = fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert!(rankings.starts_with("poem_id,predicted_category\n"));
    assert_eq!(rankings.lines().count(), 91, "header + 90 assignments");

    let loaded = load_artifact(&out).unwrap();
    let (_, bundle) = verserank::runner::artifact::recompute_stats(&loaded).unwrap();
    assert_eq!(bundle, artifact.stats);
}

#[test]
fn a_failing_judge_leaves_a_flagged_incomplete_artifact() {
    let corpus = load_corpus(&corpus_root()).unwrap();
    let tmp = tempfile::tempdir().unwrap();

    // One valid response for the first batch, then nothing: the second
    // request must exhaust its retries against an empty script.
    let plan = full_shuffles(&corpus, 2, 99).unwrap();
    let noise = NoiseModel::new(0.0, 0).unwrap();
    let valid = synthetic_rank(&plan.batches[0], &corpus, &noise, &|p| {
        verserank::judge::quintile_score(p, 90)
    });
    let script_path = tmp.path().join("script.jsonl");
    fs::write(
        &script_path,
        format!("{}\n", serde_json::to_string(&valid.text).unwrap()),
    )
    .unwrap();

    let out = tmp.path().join("broken");
    let mut config = ExperimentConfig::preset(
        ExperimentKind::RankFull,
        corpus_root(),
        JudgeConfig::new(Provider::Mock, "scripted"),
        99,
        &out,
    );
    config.n_batches = Some(2);
    config.criteria = vec![Criterion::Quality];
    config.methods = vec![ScoringMethod::RankDerived];
    config.script_path = Some(script_path);

    let err = run_experiment(&config, &RunOptions::default()).unwrap_err();
    match &err {
        RunnerError::Judge { context, .. } => {
            assert!(context.contains("batch=1"), "failed on the second batch");
        }
        other => panic!("expected a judge error, got {other:?}"),
    }

    // The artifact still exists, flagged incomplete, with the successful
    // ranking and the full exchange log preserved.
    let loaded = load_artifact(&out).unwrap();
    assert!(loaded.stats.incomplete);
    assert!(!loaded.stats.warnings.is_empty());
    assert!(loaded.stats.src.is_empty(), "statistics are withheld");
    assert_eq!(loaded.calls.len(), 1);
    let exchanges = fs::read_to_string(out.join("exchanges.jsonl")).unwrap();
    assert_eq!(
        exchanges.lines().count(),
        1 + 6,
        "one accepted attempt plus six transport failures"
    );
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("INCOMPLETE"));
}

#[test]
fn an_existing_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("occupied");
    fs::create_dir_all(&out).unwrap();
    let mut config = ExperimentConfig::preset(
        ExperimentKind::RankSubsets,
        corpus_root(),
        synthetic_judge(),
        3,
        &out,
    );
    config.n_batches = Some(2);
    config.criteria = vec![Criterion::Quality];
    let err = run_experiment(&config, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, RunnerError::Artifact { .. }));
}
