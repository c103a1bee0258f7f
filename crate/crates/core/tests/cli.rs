//! End-to-end tests of the command-line binary: subcommand output,
//! artifact round trips, CSV kernel inputs, and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_verserank"))
}

fn corpus() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/corpus90")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("utf-8 stderr")
}

#[test]
fn ingest_reports_the_category_breakdown() {
    let output = bin()
        .args(["ingest", "--corpus", corpus()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("loaded 90 poems"));
    for label in ["Good", "Medium", "Bad"] {
        assert!(text.contains(label), "missing {label} in:\n{text}");
    }
}

#[test]
fn ingest_rejects_a_missing_corpus_with_exit_two() {
    let output = bin()
        .args(["ingest", "--corpus", "/nonexistent-corpus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn plan_emits_the_batch_plan_as_json() {
    let output = bin()
        .args([
            "plan",
            "--kind",
            "reliability",
            "--corpus",
            corpus(),
            "--seed",
            "7",
            "--reps",
            "4",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let plan: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    let batches = plan["batches"].as_array().unwrap();
    assert_eq!(batches.len(), 4);
    let ids = |i: usize| -> Vec<String> {
        batches[i]["poem_ids"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect()
    };
    assert_eq!(ids(0).len(), 15, "default reliability subsets draw 5/5/5");
    let sorted = |mut v: Vec<String>| {
        v.sort();
        v
    };
    for i in 1..batches.len() {
        // Same poems every repetition, but presented in a fresh order.
        assert_eq!(sorted(ids(i)), sorted(ids(0)));
    }
    assert!(
        (1..batches.len()).any(|i| ids(i) != ids(0)),
        "presentation order should vary between repetitions"
    );
}

#[test]
fn plan_for_classification_is_null() {
    let output = bin()
        .args(["plan", "--kind", "classify", "--corpus", corpus()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "null");
}

fn run_noiseless(out_dir: &Path) -> Output {
    bin()
        .args([
            "run",
            "--kind",
            "rank-subsets",
            "--corpus",
            corpus(),
            "--seed",
            "21",
            "--n",
            "8",
            "--out",
        ])
        .arg(out_dir)
        .args(["--criteria", "quality", "--methods", "rank-derived,scale"])
        .output()
        .unwrap()
}

#[test]
fn run_stats_report_and_strip_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("artifact");
    let output = run_noiseless(&out_dir);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("rho 1.0000"), "noiseless run, got:\n{text}");

    for file in ["config.json", "stats.json", "rankings.csv", "report.md"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }

    // stats artifact: recomputation matches the persisted bundle.
    let output = bin().args(["stats", "artifact"]).arg(&out_dir).output().unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stderr(&output).contains("match"));
    let bundle: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(bundle["incomplete"], serde_json::Value::Bool(false));

    // Tampering with stats.json makes verification fail.
    let stats_path = out_dir.join("stats.json");
    let tampered = fs::read_to_string(&stats_path)
        .unwrap()
        .replacen("\"rho\": 1.0", "\"rho\": 0.5", 1);
    fs::write(&stats_path, tampered).unwrap();
    let output = bin().args(["stats", "artifact"]).arg(&out_dir).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("differ"));
    // Restore for the steps below.
    let restored = fs::read_to_string(&stats_path)
        .unwrap()
        .replacen("\"rho\": 0.5", "\"rho\": 1.0", 1);
    fs::write(&stats_path, restored).unwrap();

    // report prints the persisted report.
    let output = bin().arg("report").arg(&out_dir).output().unwrap();
    assert!(output.status.success());
    assert!(stdout(&output).contains("# Run report: rank-subsets"));

    // strip renders both formats; the SVG is well-formed XML.
    let output = bin()
        .arg("strip")
        .arg(&out_dir)
        .args(["--format", "terminal"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    assert!(stdout(&output).contains("SRC = 1.00"));

    let svg_path = tmp.path().join("strip.svg");
    let output = bin()
        .arg("strip")
        .arg(&out_dir)
        .args(["--format", "svg", "--method", "scale", "--out"])
        .arg(&svg_path)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let svg = fs::read_to_string(&svg_path).unwrap();
    roxmltree::Document::parse(&svg).expect("well-formed SVG");
}

#[test]
fn spearman_kernel_reads_paired_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("pairs.csv");
    fs::write(&input, "x,y\n1,2\n2,1\n3,4\n4,3\n5,6\n6,5\n").unwrap();
    let output = bin()
        .args(["stats", "spearman", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let result: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    // Hand oracle: six untied pairs, each displaced by one rank, so
    // rho = 1 - 6*6/(6*35) = 29/35.
    let rho = result["rho"].as_f64().unwrap();
    assert!((rho - 29.0 / 35.0).abs() < 1e-12, "got {rho}");
    assert_eq!(result["n"], serde_json::json!(6));
}

#[test]
fn anova_kernel_reads_long_format_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("long.csv");
    fs::write(&input, "group,value\na,1\na,2\nb,4\nb,5\nc,8\nc,9\n").unwrap();
    let output = bin()
        .args(["stats", "anova", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let result: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(result["groups"], serde_json::json!(["a", "b", "c"]));
    // Hand oracle: SSB = 148/3, SSW = 3/2, F = (SSB/2)/(SSW/3) = 148/3.
    let f = result["result"]["f_stat"].as_f64().unwrap();
    assert!((f - 148.0 / 3.0).abs() < 1e-9, "got {f}");
}

#[test]
fn icc_kernel_reads_a_numeric_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("matrix.csv");
    fs::write(&input, "9,8,7\n6,5,4\n3,2,1\n1,2,1\n").unwrap();
    let output = bin()
        .args(["stats", "icc", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let result: serde_json::Value = serde_json::from_str(&stdout(&output)).unwrap();
    assert_eq!(result["n_targets"], serde_json::json!(4));
    assert_eq!(result["k_raters"], serde_json::json!(3));
    for key in ["icc1k", "icc2k", "icc3k"] {
        let value = result[key].as_f64().unwrap();
        assert!(value > 0.9 && value <= 1.0, "{key} = {value}");
    }
}

#[test]
fn a_failing_mock_run_exits_three_and_keeps_the_partial_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("empty.jsonl");
    fs::write(&script, "").unwrap();
    let out_dir = tmp.path().join("partial");
    let output = bin()
        .args([
            "run",
            "--kind",
            "rank-full",
            "--corpus",
            corpus(),
            "--n",
            "2",
            "--criteria",
            "quality",
            "--provider",
            "mock",
            "--model",
            "scripted",
            "--script",
        ])
        .arg(&script)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "{}", stderr(&output));
    assert!(stderr(&output).contains("partial artifact persisted"));
    assert!(out_dir.join("stats.json").is_file());
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["incomplete"], serde_json::Value::Bool(true));
}

#[test]
fn remote_runs_without_live_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir: PathBuf = tmp.path().join("never");
    let output = bin()
        .args([
            "run",
            "--kind",
            "rank-full",
            "--corpus",
            corpus(),
            "--provider",
            "remote-a",
            "--model",
            "some-model",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("--live"));
    assert!(!out_dir.exists(), "nothing may be written without --live");
}

#[test]
fn unknown_names_exit_two() {
    for args in [
        vec!["run", "--kind", "rank-oops", "--corpus", corpus(), "--out", "/tmp/never-a"],
        vec![
            "run",
            "--kind",
            "rank-full",
            "--corpus",
            corpus(),
            "--criteria",
            "sublimity",
            "--out",
            "/tmp/never-b",
        ],
        vec!["strip", "/tmp/does-not-exist"],
    ] {
        let output = bin().args(&args).output().unwrap();
        assert_ne!(output.status.code(), Some(0), "args: {args:?}");
        assert_ne!(output.status.code(), Some(3), "args: {args:?}");
    }
}
