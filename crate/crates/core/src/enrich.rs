//! NVD and EPSS enrichment: load local mirrors, join them onto mentions,
//! and compute per-citation disclosure delays.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::SkippedRecord;
use crate::error::{Error, Result};
use crate::extract::CveMention;

/// One vulnerability as known to the local NVD mirror, optionally carrying
/// an EPSS score once merged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub published: NaiveDate,
    pub cvss_v2: Option<f64>,
    pub cvss_v31: Option<f64>,
    #[serde(default)]
    pub epss: Option<f64>,
    #[serde(default)]
    pub epss_date: Option<NaiveDate>,
    #[serde(default)]
    pub description: String,
}

/// Days between a post and the NVD publication of the cited CVE.
/// Negative when the discussion predates publication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub cve_id: String,
    pub post_id: String,
    pub post_age_days: i64,
}

/// A mention carrying the scores of its CVE, for risk distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredMention {
    pub cve_id: String,
    pub post_id: String,
    pub thread_id: String,
    pub cvss_v2: Option<f64>,
    pub cvss_v31: Option<f64>,
    pub epss: Option<f64>,
}

/// EPSS snapshot: per-CVE probabilities plus the snapshot date they were
/// released on. Scores are point-in-time; the date travels with every
/// report built from them.
#[derive(Debug, Clone, Default)]
pub struct EpssTable {
    pub scores: HashMap<String, EpssScore>,
    pub snapshot_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpssScore {
    pub epss: f64,
    pub percentile: f64,
}

/// Result of joining mentions against the enrichment maps. Mentions that
/// cannot be joined land in `unmatched`, never silently dropped.
#[derive(Debug, Default)]
pub struct EnrichmentJoin {
    pub delays: Vec<DelayRecord>,
    pub scored: Vec<ScoredMention>,
    pub unmatched: Vec<CveMention>,
}

#[derive(Debug, Deserialize)]
struct MirrorRecord {
    cve_id: String,
    published: String,
    #[serde(default)]
    cvss_v2: Option<f64>,
    #[serde(default)]
    cvss_v31: Option<f64>,
    #[serde(default)]
    description: String,
}

fn score_in_range(score: Option<f64>, hi: f64) -> bool {
    score.map_or(true, |s| (0.0..=hi).contains(&s))
}

/// Load the NVD mirror (JSONL). Malformed records are skipped and reported;
/// duplicate ids keep the latest published record.
pub fn load_nvd(path: &Path) -> Result<(HashMap<String, CveRecord>, Vec<SkippedRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map: HashMap<String, CveRecord> = HashMap::new();
    let mut skipped = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MirrorRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedRecord { line: line_no, reason: e.to_string() });
                continue;
            }
        };
        let Ok(published) = NaiveDate::parse_from_str(&rec.published, "%Y-%m-%d") else {
            skipped.push(SkippedRecord {
                line: line_no,
                reason: format!("unparseable published date {:?}", rec.published),
            });
            continue;
        };
        if !score_in_range(rec.cvss_v2, 10.0) || !score_in_range(rec.cvss_v31, 10.0) {
            skipped.push(SkippedRecord {
                line: line_no,
                reason: "CVSS score outside [0,10]".into(),
            });
            continue;
        }
        let record = CveRecord {
            cve_id: rec.cve_id.to_ascii_uppercase(),
            published,
            cvss_v2: rec.cvss_v2,
            cvss_v31: rec.cvss_v31,
            epss: None,
            epss_date: None,
            description: rec.description,
        };
        match map.get(&record.cve_id) {
            Some(existing) if existing.published >= record.published => {}
            _ => {
                map.insert(record.cve_id.clone(), record);
            }
        }
    }
    Ok((map, skipped))
}

/// Load an EPSS feed: CSV `cve,epss,percentile` with `#`-prefixed metadata
/// lines. A probability outside [0,1] is fatal and names the row.
pub fn load_epss(path: &Path) -> Result<EpssTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = EpssTable::default();
    let mut header_seen = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            // Public feeds carry `score_date:YYYY-MM-DD...` in the header.
            if let Some(pos) = comment.find("score_date:") {
                let rest = &comment[pos + "score_date:".len()..];
                let date_part: String = rest.chars().take(10).collect();
                if let Ok(d) = NaiveDate::parse_from_str(&date_part, "%Y-%m-%d") {
                    table.snapshot_date = Some(d);
                }
            }
            continue;
        }
        if !header_seen && trimmed.to_ascii_lowercase().starts_with("cve,") {
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::record(path, line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let epss: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::record(path, line_no, format!("bad epss value {:?}", fields[1])))?;
        let percentile: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::record(path, line_no, format!("bad percentile value {:?}", fields[2])))?;
        if !(0.0..=1.0).contains(&epss) || !(0.0..=1.0).contains(&percentile) {
            return Err(Error::record(
                path,
                line_no,
                format!("probability outside [0,1] for {}", fields[0]),
            ));
        }
        table
            .scores
            .insert(fields[0].trim().to_ascii_uppercase(), EpssScore { epss, percentile });
    }
    Ok(table)
}

/// Fill the `epss` fields of an NVD map from an EPSS snapshot. Pure.
pub fn merge_epss(
    nvd: &HashMap<String, CveRecord>,
    epss: &EpssTable,
) -> HashMap<String, CveRecord> {
    let mut merged = nvd.clone();
    for record in merged.values_mut() {
        if let Some(score) = epss.scores.get(&record.cve_id) {
            record.epss = Some(score.epss);
            record.epss_date = epss.snapshot_date;
        }
    }
    merged
}

/// Whole-day signed difference between a post date and a CVE publish date.
pub fn post_age(post_date: NaiveDate, cve_published: NaiveDate) -> i64 {
    (post_date - cve_published).num_days()
}

/// Join mentions with the enrichment map. Every mention either produces a
/// delay + scored record or lands in `unmatched`.
pub fn join_enrichment(
    mentions: &[CveMention],
    post_dates: &HashMap<String, NaiveDate>,
    records: &HashMap<String, CveRecord>,
) -> EnrichmentJoin {
    let mut join = EnrichmentJoin::default();
    for mention in mentions {
        let record = records.get(&mention.cve_id);
        let date = post_dates.get(&mention.post_id);
        match (record, date) {
            (Some(record), Some(date)) => {
                join.delays.push(DelayRecord {
                    cve_id: mention.cve_id.clone(),
                    post_id: mention.post_id.clone(),
                    post_age_days: post_age(*date, record.published),
                });
                join.scored.push(ScoredMention {
                    cve_id: mention.cve_id.clone(),
                    post_id: mention.post_id.clone(),
                    thread_id: mention.thread_id.clone(),
                    cvss_v2: record.cvss_v2,
                    cvss_v31: record.cvss_v31,
                    epss: record.epss,
                });
            }
            _ => join.unmatched.push(mention.clone()),
        }
    }
    join
}

/// Convert an official NVD 1.1 JSON feed (`CVE_Items`) into the mirror JSONL
/// layout, so mirrors can be built from downloaded feeds offline.
pub fn mirror_from_nvd_feed(feed_path: &Path, mirror_path: &Path) -> Result<usize> {
    let raw = std::fs::read_to_string(feed_path).map_err(|e| Error::io(feed_path, e))?;
    let feed: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| Error::invalid(format!("bad feed JSON: {e}")))?;
    let items = feed["CVE_Items"]
        .as_array()
        .ok_or_else(|| Error::invalid("feed has no CVE_Items array"))?;

    let mut out = File::create(mirror_path).map_err(|e| Error::io(mirror_path, e))?;
    let mut written = 0;
    for item in items {
        let Some(id) = item["cve"]["CVE_data_meta"]["ID"].as_str() else { continue };
        let Some(published_raw) = item["publishedDate"].as_str() else { continue };
        let date_part: String = published_raw.chars().take(10).collect();
        if NaiveDate::parse_from_str(&date_part, "%Y-%m-%d").is_err() {
            continue;
        }
        let description = item["cve"]["description"]["description_data"]
            .as_array()
            .and_then(|arr| {
                arr.iter()
                    .find(|d| d["lang"].as_str() == Some("en"))
                    .and_then(|d| d["value"].as_str())
            })
            .unwrap_or("")
            .to_string();
        let cvss_v2 = item["impact"]["baseMetricV2"]["cvssV2"]["baseScore"].as_f64();
        let v3 = &item["impact"]["baseMetricV3"]["cvssV3"];
        let cvss_v31 = match v3["version"].as_str() {
            Some(v) if v.starts_with("3.1") => v3["baseScore"].as_f64(),
            _ => None,
        };
        let record = serde_json::json!({
            "cve_id": id,
            "published": date_part,
            "cvss_v2": cvss_v2,
            "cvss_v31": cvss_v31,
            "description": description,
        });
        writeln!(out, "{record}").map_err(|e| Error::io(mirror_path, e))?;
        written += 1;
    }
    Ok(written)
}

/// Export delays as `cve_id,post_id,post_age_days`.
pub fn write_delays_csv(path: &Path, delays: &[DelayRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["cve_id", "post_id", "post_age_days"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for d in delays {
        w.write_record([d.cve_id.as_str(), d.post_id.as_str(), &d.post_age_days.to_string()])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
