//! Classify unseen threads against the trained artifacts and raise
//! exploitation alerts into an append-only log.

use std::collections::{BTreeSet, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use cvemine::corpus::{assemble_threads, ingest_corpus_with, NormalizeOptions, Thread};
use cvemine::enrich::{load_epss, load_nvd, merge_epss};
use cvemine::extract::extract_cve_mentions;
use cvemine::models::deserialize_model;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::Featurizer;
use crate::config::PipelineConfig;
use crate::stages::RunLock;

/// Alert for a thread predicted as exploitation at or above the configured
/// probability threshold. The timestamp is the latest post time of the
/// thread, so identical inputs always produce identical alerts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlertRecord {
    pub thread_id: String,
    pub label: String,
    pub exploitation_probability: f64,
    pub cve_ids: Vec<String>,
    pub max_cvss: Option<f64>,
    pub max_epss: Option<f64>,
    pub timestamp: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub thread_id: String,
    pub status: &'static str,
    pub label: String,
    pub probability: f64,
    pub exploitation_probability: Option<f64>,
}

#[derive(Debug)]
pub struct ClassifyOutcome {
    pub predictions: Vec<PredictionRow>,
    pub alerts: Vec<AlertRecord>,
    pub appended: usize,
}

fn record_hash(record: &AlertRecord) -> String {
    let mut clean = record.clone();
    clean.content_hash = String::new();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&clean).expect("alert serializes").as_bytes());
    format!("{:x}", hasher.finalize())
}

fn existing_hashes(path: &Path) -> Result<HashSet<String>> {
    let mut hashes = HashSet::new();
    if !path.exists() {
        return Ok(hashes);
    }
    let file = std::fs::File::open(path)?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let record: AlertRecord =
            serde_json::from_str(&line).with_context(|| "corrupt alert log line")?;
        hashes.insert(record.content_hash);
    }
    Ok(hashes)
}

/// Classify the threads of a new posts file. Threads without CVE mentions
/// are reported as not in scope rather than classified. Alerts append to
/// `alerts.log`, deduplicated by content hash.
pub fn classify_new(cfg: &PipelineConfig, input: &Path) -> Result<ClassifyOutcome> {
    let _lock = RunLock::acquire(&cfg.out_dir)?;

    let featurizer = Featurizer::load(&cfg.out_dir.join("featurizer.json"))
        .context("featurizer artifact missing; run the train stage first")?;
    let raw = std::fs::read_to_string(cfg.out_dir.join("model.json"))
        .context("model artifact missing; run the train stage first")?;
    let persisted = deserialize_model(&raw)?;
    persisted.feature_space.ensure_matches(&featurizer.fingerprint())?;
    if persisted.feature_space.encoding != featurizer.encoding().name() {
        bail!(
            "model encoding {} does not match featurizer {}",
            persisted.feature_space.encoding,
            featurizer.encoding().name()
        );
    }

    let opts = NormalizeOptions { strip_quoted_text: cfg.strip_quoted_text };
    let report = ingest_corpus_with(input, cfg.corpus_format, opts)?;
    let mut threads = assemble_threads(report.posts)?;
    threads.sort_by(|a, b| a.thread_id.cmp(&b.thread_id));

    let (nvd, _) = load_nvd(&cfg.nvd)?;
    let epss = load_epss(&cfg.epss)?;
    let records = merge_epss(&nvd, &epss);

    let exploitation_index = persisted
        .class_names
        .iter()
        .position(|n| n == "Exploitation");

    let mut predictions = Vec::new();
    let mut alerts = Vec::new();
    for thread in &threads {
        let mentions: Vec<_> = thread.posts.iter().flat_map(extract_cve_mentions).collect();
        if mentions.is_empty() {
            predictions.push(PredictionRow {
                thread_id: thread.thread_id.clone(),
                status: "not_in_scope",
                label: String::new(),
                probability: 0.0,
                exploitation_probability: None,
            });
            continue;
        }
        let vector = featurizer.vectorize(&thread.document);
        let prediction = persisted.model.predict(&vector)?;
        let label = persisted.class_names[prediction.label].clone();
        let p_expl = exploitation_index.map(|i| prediction.probabilities[i]);
        predictions.push(PredictionRow {
            thread_id: thread.thread_id.clone(),
            status: "classified",
            label: label.clone(),
            probability: prediction.probabilities[prediction.label],
            exploitation_probability: p_expl,
        });

        if label == "Exploitation" {
            let p = p_expl.unwrap_or(0.0);
            if p >= cfg.alert_threshold {
                let cve_ids: BTreeSet<String> =
                    mentions.iter().map(|m| m.cve_id.clone()).collect();
                let max_cvss = cve_ids
                    .iter()
                    .filter_map(|id| records.get(id))
                    .flat_map(|r| [r.cvss_v2, r.cvss_v31])
                    .flatten()
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                let max_epss = cve_ids
                    .iter()
                    .filter_map(|id| records.get(id).and_then(|r| r.epss))
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                let timestamp = latest_post_time(thread);
                let mut alert = AlertRecord {
                    thread_id: thread.thread_id.clone(),
                    label,
                    exploitation_probability: p,
                    cve_ids: cve_ids.into_iter().collect(),
                    max_cvss,
                    max_epss,
                    timestamp,
                    content_hash: String::new(),
                };
                alert.content_hash = record_hash(&alert);
                alerts.push(alert);
            }
        }
    }

    write_predictions_csv(&cfg.out_dir.join("predictions.csv"), &predictions)?;
    let appended = append_alerts(&cfg.out_dir.join("alerts.log"), &alerts)?;
    Ok(ClassifyOutcome { predictions, alerts, appended })
}

fn latest_post_time(thread: &Thread) -> String {
    thread
        .posts
        .iter()
        .map(|p| p.created_at)
        .max()
        .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_default()
}

fn write_predictions_csv(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["thread_id", "status", "label", "probability", "exploitation_probability"])?;
    for r in rows {
        w.write_record([
            r.thread_id.as_str(),
            r.status,
            r.label.as_str(),
            &format!("{:.6}", r.probability),
            &r.exploitation_probability.map(|p| format!("{p:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Append alerts that are not already in the log. The header line carries
/// the creation wall-clock time; records themselves are deterministic.
fn append_alerts(path: &Path, alerts: &[AlertRecord]) -> Result<usize> {
    let seen = existing_hashes(path)?;
    let is_new = !path.exists();
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    if is_new {
        writeln!(file, "# cvemine alert log v1 created_at={}", chrono::Utc::now().to_rfc3339())?;
    }
    let mut appended = 0;
    for alert in alerts {
        if seen.contains(&alert.content_hash) {
            continue;
        }
        writeln!(file, "{}", serde_json::to_string(alert)?)?;
        appended += 1;
    }
    Ok(appended)
}

/// Read the alert log back, skipping the header.
pub fn read_alerts(path: &Path) -> Result<Vec<AlertRecord>> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    let file = std::fs::File::open(path)?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
