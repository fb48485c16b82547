//! End-to-end pipeline tests over the bundled demo fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cvemine_cli::config::PipelineConfig;
use cvemine_cli::pipeline::Pipeline;
use cvemine_cli::stages::StageState;
use cvemine_cli::{classify_new, read_alerts};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn demo_config(out_dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixtures().join("config.toml")).unwrap();
    cfg.out_dir = out_dir.to_path_buf();
    cfg
}

fn first_mirror_cve() -> String {
    let raw = fs::read_to_string(fixtures().join("nvd.jsonl")).unwrap();
    let value: serde_json::Value =
        serde_json::from_str(raw.lines().next().unwrap()).unwrap();
    value["cve_id"].as_str().unwrap().to_string()
}

#[test]
fn golden_run_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(demo_config(dir.path())).unwrap();
    let statuses = pipeline.run_all().unwrap();
    assert_eq!(statuses.len(), 10);
    assert!(statuses.iter().all(|s| s.state == StageState::Ran));

    for artifact in [
        "posts.jsonl",
        "threads.jsonl",
        "mentions.csv",
        "prices.csv",
        "delays.csv",
        "scored.csv",
        "featurizer.json",
        "features.csv",
        "labeled.csv",
        "split.csv",
        "grid_table.csv",
        "best_params.json",
        "model.json",
        "rules.txt",
        "metrics.csv",
        "metrics_per_class.csv",
        "confusion_three_class.csv",
        "cdf_prices.csv",
        "cdf_delays.csv",
        "box_cvss_v2_per_citation.csv",
        "keywords_all.csv",
        "keywords_exploitation.csv",
        "board_breakdown.csv",
        "risk_summary.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "{artifact} missing");
    }

    let mut reader = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4, "four task rows");
    assert_eq!(&rows[0][2], "PoC, Weaponization, Exploitation");
    let accuracy: f64 = rows[0][3].parse().unwrap();
    assert!(accuracy >= 0.9, "demo corpus accuracy {accuracy}");

    // Overlay series echoed verbatim in the price CDF.
    let cdf = fs::read_to_string(dir.path().join("cdf_prices.csv")).unwrap();
    assert!(cdf.contains("overlay external market: min: 100, median: 2000, max: 8000"));
}

#[test]
fn rerun_is_fully_cached() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(demo_config(dir.path())).unwrap();
    pipeline.run_all().unwrap();
    let second = pipeline.run_all().unwrap();
    assert!(
        second.iter().all(|s| s.state == StageState::Cached),
        "{second:?}"
    );
}

#[test]
fn missing_labels_aborts_at_label_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo_config(dir.path());
    cfg.labels = dir.path().join("does_not_exist.csv");
    let err = Pipeline::new(cfg).unwrap().run_all().unwrap_err();
    let message = format!("{err:#}");
    assert!(message.contains("stage label failed"), "{message}");
}

#[test]
fn upstream_change_invalidates_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_copy = dir.path().join("corpus.jsonl");
    fs::copy(fixtures().join("corpus.jsonl"), &corpus_copy).unwrap();
    let mut cfg = demo_config(&dir.path().join("out"));
    cfg.corpus = corpus_copy.clone();
    let pipeline = Pipeline::new(cfg).unwrap();
    pipeline.run_until("extract", false).unwrap();

    // Appending a post re-runs ingest and extract.
    let mut content = fs::read_to_string(&corpus_copy).unwrap();
    content.push_str(r#"{"post_id":"extra","thread_id":"textra","board":"b","forum":"f","author":"a","created_at":"2019-01-01T00:00:00Z","subject":"s","raw_content":"chatter about CVE-2019-0708"}"#);
    content.push('\n');
    fs::write(&corpus_copy, content).unwrap();
    let statuses = pipeline.run_until("extract", false).unwrap();
    assert!(statuses.iter().all(|s| s.state == StageState::Ran));
}

fn write_new_posts(path: &Path, cve: &str) -> (String, String, String) {
    let alert_thread = "zz-alert".to_string();
    let scopeless_thread = "zz-chat".to_string();
    let mild_thread = "zz-mild".to_string();
    let lines = [
        format!(
            r#"{{"post_id":"x1","thread_id":"{alert_thread}","board":"Premium Sellers","forum":"hf","author":"s1","created_at":"2019-07-01T10:00:00Z","subject":"silent exploit","raw_content":"selling fully undetectable silent exploit for {cve} attack kit clean 0/35 bitcoin only fud undetectable clean attack bitcoin"}}"#
        ),
        format!(
            r#"{{"post_id":"x2","thread_id":"{alert_thread}","board":"Premium Sellers","forum":"hf","author":"b1","created_at":"2019-07-02T11:00:00Z","subject":"","raw_content":"thanks the attack worked clean bitcoin undetectable fud"}}"#
        ),
        format!(
            r#"{{"post_id":"x3","thread_id":"{scopeless_thread}","board":"Beginner Hacking","forum":"hf","author":"n1","created_at":"2019-07-03T09:00:00Z","subject":"help","raw_content":"how do i learn hacking, nothing specific here"}}"#
        ),
        format!(
            r#"{{"post_id":"x4","thread_id":"{mild_thread}","board":"Beginner Hacking","forum":"hf","author":"n2","created_at":"2019-07-04T09:00:00Z","subject":"writeup","raw_content":"my poc writeup and tutorial guide for {cve} in the lab"}}"#
        ),
    ];
    fs::write(path, lines.join("\n") + "\n").unwrap();
    (alert_thread, scopeless_thread, mild_thread)
}

#[test]
fn classify_raises_exploitation_alert_and_respects_scope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config(dir.path());
    Pipeline::new(cfg.clone()).unwrap().run_until("train", false).unwrap();

    let new_posts = dir.path().join("new_posts.jsonl");
    let (alert_thread, scopeless, mild) = write_new_posts(&new_posts, &first_mirror_cve());

    let outcome = classify_new(&cfg, &new_posts).unwrap();
    let by_id = |id: &str| outcome.predictions.iter().find(|p| p.thread_id == id).unwrap();
    assert_eq!(by_id(&scopeless).status, "not_in_scope");
    assert_eq!(by_id(&alert_thread).label, "Exploitation");
    assert_eq!(by_id(&mild).label, "PoC");

    assert_eq!(outcome.alerts.len(), 1);
    let alert = &outcome.alerts[0];
    assert_eq!(alert.thread_id, alert_thread);
    assert!(alert.exploitation_probability >= cfg.alert_threshold);
    assert_eq!(alert.cve_ids, vec![first_mirror_cve()]);
    assert!(alert.max_cvss.is_some(), "mirror CVE carries CVSS");
    // Timestamp is input-derived: the thread's latest post.
    assert_eq!(alert.timestamp, "2019-07-02T11:00:00Z");

    // Idempotence: same inputs append nothing new.
    assert_eq!(outcome.appended, 1);
    let again = classify_new(&cfg, &new_posts).unwrap();
    assert_eq!(again.appended, 0);
    assert_eq!(read_alerts(&dir.path().join("alerts.log")).unwrap().len(), 1);
}

#[test]
fn below_threshold_prediction_records_no_alert() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo_config(dir.path());
    Pipeline::new(cfg.clone()).unwrap().run_until("train", false).unwrap();

    cfg.alert_threshold = 1.0; // nothing is ever certain enough
    let new_posts = dir.path().join("new_posts.jsonl");
    let (alert_thread, _, _) = write_new_posts(&new_posts, &first_mirror_cve());
    let outcome = classify_new(&cfg, &new_posts).unwrap();
    let row = outcome.predictions.iter().find(|p| p.thread_id == alert_thread).unwrap();
    assert_eq!(row.label, "Exploitation");
    assert!(outcome.alerts.is_empty());
    assert!(!dir.path().join("alerts.log").exists() || read_alerts(&dir.path().join("alerts.log")).unwrap().is_empty());
}

#[test]
fn classify_refuses_mismatched_featurizer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo_config(dir.path());
    Pipeline::new(cfg.clone()).unwrap().run_until("train", false).unwrap();

    // Swap in a featurizer built from different documents.
    let vocab = cvemine::textfeat::build_vocabulary(
        &["completely different corpus".to_string()],
        &cvemine::textfeat::VocabParams { min_count: 1, ..Default::default() },
    )
    .unwrap();
    let file = serde_json::json!({
        "encoding": "tfidf",
        "payload": serde_json::from_str::<serde_json::Value>(&vocab.to_json()).unwrap(),
    });
    fs::write(dir.path().join("featurizer.json"), file.to_string()).unwrap();

    let new_posts = dir.path().join("new_posts.jsonl");
    write_new_posts(&new_posts, &first_mirror_cve());
    let err = classify_new(&cfg, &new_posts).unwrap_err();
    assert!(format!("{err:#}").contains("feature space"), "{err:#}");
}

#[test]
fn cli_binary_runs_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixtures().join("config.toml");
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_cvemine"))
            .arg("--config")
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .args(args)
            .output()
            .unwrap()
    };

    let output = run(&["label", "--suggest"]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("weak_labels.csv").exists());
    let suggestions = fs::read_to_string(out.join("weak_labels.csv")).unwrap();
    assert!(suggestions.lines().count() > 1);

    // Stage-tagged nonzero exit on failure.
    let bad = Command::new(env!("CARGO_BIN_EXE_cvemine"))
        .arg("--config")
        .arg(&config)
        .arg("--out-dir")
        .arg(dir.path().join("out2"))
        .arg("--labels")
        .arg(dir.path().join("missing.csv"))
        .arg("run")
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("stage label failed"));
}
