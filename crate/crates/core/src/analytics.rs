//! Longitudinal and risk analytics: empirical CDFs, per-class score
//! distributions, keyword frequency tables, and board breakdowns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Thread;
use crate::dataset::ThreadLabel;
use crate::enrich::{CveRecord, DelayRecord, ScoredMention};
use crate::error::{Error, Result};
use crate::extract::PriceMention;
use crate::textfeat::tokenize;

/// Empirical CDF: one step per distinct sample value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdfSeries {
    pub values: Vec<f64>,
    pub fractions: Vec<f64>,
    pub summary: CdfSummary,
}

/// Median convention: the lower-middle element for even counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

/// `F(x) = (# samples <= x) / n` evaluated at each distinct sorted value.
pub fn empirical_cdf(samples: &[f64]) -> Result<CdfSeries> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical CDF of an empty sample set"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    let mut values = Vec::new();
    let mut fractions = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if i + 1 == n || sorted[i + 1] != v {
            values.push(v);
            fractions.push((i + 1) as f64 / n as f64);
        }
    }
    let summary = CdfSummary {
        min: sorted[0],
        median: sorted[(n - 1) / 2],
        max: sorted[n - 1],
        count: n,
    };
    Ok(CdfSeries { values, fractions, summary })
}

/// Externally reported comparison series, read verbatim and never
/// recomputed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySummary {
    pub label: String,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn load_overlay(path: &Path) -> Result<OverlaySummary> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::record(path, 1, e.to_string()))
}

/// CDF of extracted prices.
pub fn price_cdf(prices: &[PriceMention]) -> Result<CdfSeries> {
    let samples: Vec<f64> = prices.iter().map(|p| p.amount).collect();
    empirical_cdf(&samples)
}

/// CDF of post-age delays; negative values are retained.
pub fn delay_cdf(delays: &[DelayRecord]) -> Result<CdfSeries> {
    let samples: Vec<f64> = delays.iter().map(|d| d.post_age_days as f64).collect();
    empirical_cdf(&samples)
}

/// Which enrichment score a distribution is over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    CvssV2,
    CvssV31,
    Epss,
}

impl ScoreKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreKind::CvssV2 => "cvss_v2",
            ScoreKind::CvssV31 => "cvss_v31",
            ScoreKind::Epss => "epss",
        }
    }

    fn of(&self, m: &ScoredMention) -> Option<f64> {
        match self {
            ScoreKind::CvssV2 => m.cvss_v2,
            ScoreKind::CvssV31 => m.cvss_v31,
            ScoreKind::Epss => m.epss,
        }
    }

    pub fn of_record(&self, r: &CveRecord) -> Option<f64> {
        match self {
            ScoreKind::CvssV2 => r.cvss_v2,
            ScoreKind::CvssV31 => r.cvss_v31,
            ScoreKind::Epss => r.epss,
        }
    }
}

/// One sample per citation, or one per distinct CVE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    PerCitation,
    PerDistinctCve,
}

impl DedupMode {
    pub fn name(&self) -> &'static str {
        match self {
            DedupMode::PerCitation => "per_citation",
            DedupMode::PerDistinctCve => "per_distinct_cve",
        }
    }
}

/// Five-number summary using Tukey hinges: when the sample count is odd the
/// median is included in both halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub group: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub count: usize,
}

fn midpoint_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn boxplot(group: &str, samples: &mut Vec<f64>) -> BoxplotSummary {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = samples.len();
    let half = n / 2;
    let (lower, upper) = if n % 2 == 0 {
        (&samples[..half], &samples[half..])
    } else {
        (&samples[..=half], &samples[half..])
    };
    BoxplotSummary {
        group: group.to_string(),
        min: samples[0],
        q1: midpoint_median(lower),
        median: midpoint_median(samples),
        q3: midpoint_median(upper),
        max: samples[n - 1],
        count: n,
    }
}

/// Per-class and overall score distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub score: ScoreKind,
    pub mode: DedupMode,
    pub groups: Vec<BoxplotSummary>,
    /// In-scope citations lacking the requested score.
    pub skipped_missing_score: usize,
    /// Citations in threads without a classifier-class label.
    pub out_of_scope: usize,
}

/// Quartile summaries of CVSS/EPSS scores, grouped by thread class plus an
/// "All" group, under either dedup mode. Citations whose CVE lacks the
/// requested score are skipped and counted.
pub fn score_distribution(
    citations: &[ScoredMention],
    labels: &HashMap<String, ThreadLabel>,
    score: ScoreKind,
    mode: DedupMode,
) -> Result<ScoreDistribution> {
    let mut per_group: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    let mut skipped = 0usize;
    let mut out_of_scope = 0usize;

    for citation in citations {
        let class = labels.get(&citation.thread_id).and_then(|l| l.class_index());
        let Some(class) = class else {
            out_of_scope += 1;
            continue;
        };
        let Some(value) = score.of(citation) else {
            skipped += 1;
            continue;
        };
        let class_name = crate::dataset::CLASS_NAMES[class];
        per_group.entry("All").or_default().push((citation.cve_id.as_str(), value));
        per_group.entry(class_name).or_default().push((citation.cve_id.as_str(), value));
    }

    let order = ["All", "PoC", "Weaponization", "Exploitation"];
    let mut groups = Vec::new();
    for name in order {
        let Some(pairs) = per_group.get(name) else { continue };
        let mut samples: Vec<f64> = match mode {
            DedupMode::PerCitation => pairs.iter().map(|(_, v)| *v).collect(),
            DedupMode::PerDistinctCve => {
                let mut seen = BTreeSet::new();
                pairs
                    .iter()
                    .filter(|(cve, _)| seen.insert(*cve))
                    .map(|(_, v)| *v)
                    .collect()
            }
        };
        if !samples.is_empty() {
            groups.push(boxplot(name, &mut samples));
        }
    }
    Ok(ScoreDistribution { score, mode, groups, skipped_missing_score: skipped, out_of_scope })
}

/// Mean of a score over every record in the mirror that carries it.
pub fn global_mean_score(records: &HashMap<String, CveRecord>, score: ScoreKind) -> Option<f64> {
    let values: Vec<f64> = records.values().filter_map(|r| score.of_record(r)).collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Fraction of citations whose score strictly exceeds `global_mean`.
pub fn share_above_global_mean(
    citations: &[ScoredMention],
    score: ScoreKind,
    global_mean: f64,
) -> Result<f64> {
    let scored: Vec<f64> = citations.iter().filter_map(|c| score.of(c)).collect();
    if scored.is_empty() {
        return Err(Error::invalid("no citations carry the requested score"));
    }
    let above = scored.iter().filter(|&&v| v > global_mean).count();
    Ok(above as f64 / scored.len() as f64)
}

/// Most frequent grams per group, descending, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordFrequency {
    pub class: String,
    pub entries: Vec<(String, u64)>,
}

/// Unigram frequency tables per class plus an "All" group over the
/// classifier-labeled threads.
pub fn keyword_frequencies(
    threads: &[Thread],
    labels: &HashMap<String, ThreadLabel>,
    top_k: usize,
) -> Vec<KeywordFrequency> {
    let mut per_group: BTreeMap<&str, HashMap<String, u64>> = BTreeMap::new();
    for name in ["All", "PoC", "Weaponization", "Exploitation"] {
        per_group.insert(name, HashMap::new());
    }
    for thread in threads {
        let Some(class) = labels.get(&thread.thread_id).and_then(|l| l.class_index()) else {
            continue;
        };
        let class_name = crate::dataset::CLASS_NAMES[class];
        for token in tokenize(&thread.document) {
            *per_group.get_mut("All").unwrap().entry(token.clone()).or_insert(0) += 1;
            *per_group.get_mut(class_name).unwrap().entry(token).or_insert(0) += 1;
        }
    }
    ["All", "PoC", "Weaponization", "Exploitation"]
        .iter()
        .map(|name| {
            let counts = &per_group[*name];
            let mut entries: Vec<(String, u64)> =
                counts.iter().map(|(g, c)| (g.clone(), *c)).collect();
            entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            entries.truncate(top_k);
            KeywordFrequency { class: name.to_string(), entries }
        })
        .collect()
}

/// Generic board-level group-by: citing threads and posts per (board, class).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoardBreakdown {
    pub board: String,
    pub class: String,
    pub threads: usize,
    pub posts: usize,
}

pub fn board_breakdown(
    threads: &[Thread],
    labels: &HashMap<String, ThreadLabel>,
) -> Vec<BoardBreakdown> {
    let mut agg: BTreeMap<(String, &'static str), (usize, usize)> = BTreeMap::new();
    for thread in threads {
        let Some(class) = labels.get(&thread.thread_id).and_then(|l| l.class_index()) else {
            continue;
        };
        let entry = agg
            .entry((thread.board.clone(), crate::dataset::CLASS_NAMES[class]))
            .or_insert((0, 0));
        entry.0 += 1;
        entry.1 += thread.posts.len();
    }
    agg.into_iter()
        .map(|((board, class), (threads, posts))| BoardBreakdown {
            board,
            class: class.to_string(),
            threads,
            posts,
        })
        .collect()
}

/// Write `value,fraction` rows with the summary in `#` header comments.
pub fn write_cdf_csv(path: &Path, series: &CdfSeries, overlay: Option<&OverlaySummary>) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    let s = &series.summary;
    writeln!(f, "# min: {}, median: {}, max: {}, count: {}", s.min, s.median, s.max, s.count)
        .map_err(|e| Error::io(path, e))?;
    if let Some(o) = overlay {
        writeln!(f, "# overlay {}: min: {}, median: {}, max: {}", o.label, o.min, o.median, o.max)
            .map_err(|e| Error::io(path, e))?;
    }
    writeln!(f, "value,fraction").map_err(|e| Error::io(path, e))?;
    for (v, p) in series.values.iter().zip(&series.fractions) {
        writeln!(f, "{v},{p}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write boxplot groups with the quartile convention documented in the
/// header.
pub fn write_box_csv(path: &Path, dist: &ScoreDistribution) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "# quartiles: Tukey hinges (median counted in both halves when n is odd)")
        .map_err(|e| Error::io(path, e))?;
    writeln!(
        f,
        "# score: {}, mode: {}, skipped_missing_score: {}, out_of_scope: {}",
        dist.score.name(),
        dist.mode.name(),
        dist.skipped_missing_score,
        dist.out_of_scope
    )
    .map_err(|e| Error::io(path, e))?;
    writeln!(f, "group,min,q1,median,q3,max,count").map_err(|e| Error::io(path, e))?;
    for g in &dist.groups {
        writeln!(f, "{},{},{},{},{},{},{}", g.group, g.min, g.q1, g.median, g.q3, g.max, g.count)
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn write_keywords_csv(path: &Path, freq: &KeywordFrequency) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["gram", "count"]).map_err(|e| Error::invalid(e.to_string()))?;
    for (gram, count) in &freq.entries {
        w.write_record([gram.as_str(), &count.to_string()])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_board_breakdown_csv(path: &Path, rows: &[BoardBreakdown]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["board", "class", "threads", "posts"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for r in rows {
        w.write_record([r.board.as_str(), r.class.as_str(), &r.threads.to_string(), &r.posts.to_string()])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cdf_count_oracle() {
        let series = empirical_cdf(&[1.0, 2.0, 2.0, 5.0]).unwrap();
        let f_at = |x: f64| -> f64 {
            series
                .values
                .iter()
                .zip(&series.fractions)
                .filter(|(v, _)| **v <= x)
                .map(|(_, f)| *f)
                .last()
                .unwrap_or(0.0)
        };
        assert_eq!(f_at(2.0), 0.75);
        assert_eq!(f_at(1.0), 0.25);
        assert_eq!(f_at(5.0), 1.0);
    }

    #[test]
    fn cdf_single_sample() {
        let series = empirical_cdf(&[7.0]).unwrap();
        assert_eq!(series.values, vec![7.0]);
        assert_eq!(series.fractions, vec![1.0]);
        assert_eq!(series.summary, CdfSummary { min: 7.0, median: 7.0, max: 7.0, count: 1 });
    }

    #[test]
    fn cdf_empty_is_error() {
        assert!(empirical_cdf(&[]).is_err());
    }

    #[test]
    fn price_summary_matches_reported_corpus_stats() {
        // Fixture containing the reported min/median/max: 1, 100, 4400.
        let amounts = [1.0, 20.0, 100.0, 350.0, 4400.0];
        let prices: Vec<PriceMention> = amounts
            .iter()
            .map(|a| PriceMention { amount: *a, post_id: "p".into(), context: String::new() })
            .collect();
        let series = price_cdf(&prices).unwrap();
        assert_eq!(series.summary.min, 1.0);
        assert_eq!(series.summary.median, 100.0);
        assert_eq!(series.summary.max, 4400.0);
    }

    #[test]
    fn delay_summary_matches_reported_corpus_stats() {
        let days = [-396, 10, 132, 4000, 7181];
        let delays: Vec<DelayRecord> = days
            .iter()
            .map(|d| DelayRecord { cve_id: "c".into(), post_id: "p".into(), post_age_days: *d })
            .collect();
        let series = delay_cdf(&delays).unwrap();
        assert_eq!(series.summary.min, -396.0);
        assert_eq!(series.summary.median, 132.0);
        assert_eq!(series.summary.max, 7181.0);
    }

    #[test]
    fn delay_cdf_keeps_all_zero_delays() {
        let delays: Vec<DelayRecord> = (0..4)
            .map(|i| DelayRecord { cve_id: format!("c{i}"), post_id: "p".into(), post_age_days: 0 })
            .collect();
        let series = delay_cdf(&delays).unwrap();
        assert_eq!(series.values, vec![0.0]);
        assert_eq!(series.fractions, vec![1.0]);
    }

    #[test]
    fn overlay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlay.json");
        std::fs::write(&path, r#"{"label":"market","min":100.0,"median":2000.0,"max":8000.0}"#)
            .unwrap();
        let overlay = load_overlay(&path).unwrap();
        assert_eq!(overlay.min, 100.0);
        assert_eq!(overlay.median, 2000.0);
        assert_eq!(overlay.max, 8000.0);
        std::fs::write(&path, "not json").unwrap();
        assert!(load_overlay(&path).is_err());
    }

    fn scored(cve: &str, thread: &str, v2: Option<f64>) -> ScoredMention {
        ScoredMention {
            cve_id: cve.into(),
            post_id: format!("p-{cve}-{thread}"),
            thread_id: thread.into(),
            cvss_v2: v2,
            cvss_v31: None,
            epss: None,
        }
    }

    fn label_map(entries: &[(&str, ThreadLabel)]) -> HashMap<String, ThreadLabel> {
        entries.iter().map(|(id, l)| (id.to_string(), *l)).collect()
    }

    #[test]
    fn dedup_modes_change_sample_counts() {
        let citations = vec![
            scored("CVE-2020-0001", "t1", Some(9.0)),
            scored("CVE-2020-0001", "t1", Some(9.0)),
            scored("CVE-2020-0001", "t1", Some(9.0)),
        ];
        let labels = label_map(&[("t1", ThreadLabel::PoC)]);
        let a = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerCitation).unwrap();
        let b = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerDistinctCve).unwrap();
        let all_a = a.groups.iter().find(|g| g.group == "All").unwrap();
        let all_b = b.groups.iter().find(|g| g.group == "All").unwrap();
        assert_eq!(all_a.count, 3);
        assert_eq!(all_b.count, 1);
    }

    #[test]
    fn hand_quartiles() {
        let citations = vec![
            scored("CVE-2020-0001", "t1", Some(7.0)),
            scored("CVE-2020-0002", "t1", Some(9.0)),
            scored("CVE-2020-0003", "t1", Some(10.0)),
        ];
        let labels = label_map(&[("t1", ThreadLabel::Exploitation)]);
        let dist = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerCitation).unwrap();
        let all = dist.groups.iter().find(|g| g.group == "All").unwrap();
        assert_eq!(all.median, 9.0);
        assert_eq!(all.q1, 8.0);
        assert_eq!(all.q3, 9.5);
        assert_eq!(all.min, 7.0);
        assert_eq!(all.max, 10.0);
    }

    #[test]
    fn overall_median_exceeds_seven_on_tuned_fixture() {
        let scores = [6.0, 7.2, 8.1, 9.3, 10.0];
        let citations: Vec<ScoredMention> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| scored(&format!("CVE-2020-{i:04}"), "t1", Some(*s)))
            .collect();
        let labels = label_map(&[("t1", ThreadLabel::Weaponization)]);
        let dist = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerCitation).unwrap();
        let all = dist.groups.iter().find(|g| g.group == "All").unwrap();
        assert!(all.median > 7.0);
    }

    #[test]
    fn missing_scores_are_skipped_and_counted() {
        let citations = vec![
            scored("CVE-2020-0001", "t1", Some(5.0)),
            scored("CVE-2020-0002", "t1", None),
            scored("CVE-2020-0003", "t9", Some(3.0)), // unlabeled thread
        ];
        let labels = label_map(&[("t1", ThreadLabel::PoC)]);
        let dist = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerCitation).unwrap();
        assert_eq!(dist.skipped_missing_score, 1);
        assert_eq!(dist.out_of_scope, 1);
        assert!(score_distribution(&citations, &labels, ScoreKind::Epss, DedupMode::PerCitation)
            .unwrap()
            .groups
            .is_empty());
    }

    #[test]
    fn share_above_mean_cases() {
        let all_equal: Vec<ScoredMention> =
            (0..5).map(|i| scored(&format!("CVE-2021-{i:04}"), "t1", Some(7.0))).collect();
        assert_eq!(share_above_global_mean(&all_equal, ScoreKind::CvssV2, 7.0).unwrap(), 0.0);

        // 91 of 100 citations above the mean.
        let mixed: Vec<ScoredMention> = (0..100)
            .map(|i| {
                let v = if i < 91 { 9.0 } else { 3.0 };
                scored(&format!("CVE-2021-{i:04}"), "t1", Some(v))
            })
            .collect();
        assert_eq!(share_above_global_mean(&mixed, ScoreKind::CvssV2, 5.0).unwrap(), 0.91);

        assert!(share_above_global_mean(&[], ScoreKind::CvssV2, 5.0).is_err());
    }

    #[test]
    fn share_above_matches_recount_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let citations: Vec<ScoredMention> = (0..200)
            .map(|i| scored(&format!("CVE-2022-{i:04}"), "t1", Some(rng.gen_range(0.0..10.0))))
            .collect();
        let mean = 5.0;
        let got = share_above_global_mean(&citations, ScoreKind::CvssV2, mean).unwrap();
        let expect = citations.iter().filter(|c| c.cvss_v2.unwrap() > mean).count() as f64 / 200.0;
        assert_eq!(got, expect);
    }

    fn thread(id: &str, board: &str, document: &str, n_posts: usize) -> Thread {
        Thread {
            thread_id: id.into(),
            title: String::new(),
            board: board.into(),
            forum: "f".into(),
            posts: (0..n_posts)
                .map(|i| crate::corpus::Post {
                    post_id: format!("{id}-p{i}"),
                    thread_id: id.into(),
                    board: board.into(),
                    forum: "f".into(),
                    author: "a".into(),
                    created_at: chrono::Utc::now(),
                    subject: String::new(),
                    raw_content: String::new(),
                    clean_content: String::new(),
                })
                .collect(),
            document: document.into(),
        }
    }

    #[test]
    fn keywords_rank_salted_token_first() {
        let threads = vec![
            thread("t1", "b", "multisploit multisploit multisploit kit setup", 1),
            thread("t2", "b", "multisploit loader", 1),
            thread("t3", "b", "unrelated weapon chatter", 1),
        ];
        let labels = label_map(&[
            ("t1", ThreadLabel::PoC),
            ("t2", ThreadLabel::PoC),
            ("t3", ThreadLabel::Weaponization),
        ]);
        let freqs = keyword_frequencies(&threads, &labels, 10);
        let poc = freqs.iter().find(|f| f.class == "PoC").unwrap();
        assert_eq!(poc.entries[0].0, "multisploit");
        assert_eq!(poc.entries[0].1, 4);
        let expl = freqs.iter().find(|f| f.class == "Exploitation").unwrap();
        assert!(expl.entries.is_empty());
    }

    #[test]
    fn keyword_counts_match_dense_recount() {
        let threads = vec![
            thread("t1", "b", "clean clean exploit silent", 1),
            thread("t2", "b", "clean thanks", 1),
        ];
        let labels = label_map(&[
            ("t1", ThreadLabel::Exploitation),
            ("t2", ThreadLabel::Exploitation),
        ]);
        let freqs = keyword_frequencies(&threads, &labels, 100);
        let expl = freqs.iter().find(|f| f.class == "Exploitation").unwrap();
        let mut oracle: HashMap<String, u64> = HashMap::new();
        for t in &threads {
            for tok in tokenize(&t.document) {
                *oracle.entry(tok).or_insert(0) += 1;
            }
        }
        assert_eq!(expl.entries.len(), oracle.len());
        for (gram, count) in &expl.entries {
            assert_eq!(oracle[gram], *count);
        }
    }

    #[test]
    fn board_breakdown_groups_threads_and_posts() {
        let threads = vec![
            thread("t1", "Beginner Hacking", "x", 3),
            thread("t2", "Beginner Hacking", "x", 2),
            thread("t3", "Premium Sellers", "x", 4),
        ];
        let labels = label_map(&[
            ("t1", ThreadLabel::PoC),
            ("t2", ThreadLabel::PoC),
            ("t3", ThreadLabel::Exploitation),
        ]);
        let rows = board_breakdown(&threads, &labels);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].board, "Beginner Hacking");
        assert_eq!(rows[0].threads, 2);
        assert_eq!(rows[0].posts, 5);
    }

    proptest! {
        #[test]
        fn cdf_is_nondecreasing_and_ends_at_one(
            samples in proptest::collection::vec(-1e6f64..1e6, 1..200)
        ) {
            let series = empirical_cdf(&samples).unwrap();
            for pair in series.fractions.windows(2) {
                prop_assert!(pair[0] < pair[1]);
            }
            prop_assert!(series.fractions.iter().all(|f| *f > 0.0));
            prop_assert_eq!(*series.fractions.last().unwrap(), 1.0);
            prop_assert_eq!(series.summary.count, samples.len());
        }

        #[test]
        fn union_of_classes_equals_all_group(
            spec in proptest::collection::vec((0usize..3, 0.0f64..10.0, 0usize..6), 1..60)
        ) {
            // Each CVE appears in exactly one class here, so the per-class
            // mode-B samples union to the All group exactly.
            let mut citations = Vec::new();
            let mut labels = HashMap::new();
            for (i, (class, score, reps)) in spec.iter().enumerate() {
                let thread_id = format!("t{i}");
                let label = [ThreadLabel::PoC, ThreadLabel::Weaponization, ThreadLabel::Exploitation][*class];
                labels.insert(thread_id.clone(), label);
                for _ in 0..=*reps {
                    citations.push(scored(&format!("CVE-2023-{i:04}"), &thread_id, Some(*score)));
                }
            }
            for mode in [DedupMode::PerCitation, DedupMode::PerDistinctCve] {
                let dist = score_distribution(&citations, &labels, ScoreKind::CvssV2, mode).unwrap();
                let all = dist.groups.iter().find(|g| g.group == "All");
                let class_count: usize = dist
                    .groups
                    .iter()
                    .filter(|g| g.group != "All")
                    .map(|g| g.count)
                    .sum();
                prop_assert_eq!(all.map_or(0, |g| g.count), class_count);
            }
            // Mode-B All count equals the number of distinct scored CVEs.
            let dist = score_distribution(&citations, &labels, ScoreKind::CvssV2, DedupMode::PerDistinctCve).unwrap();
            let distinct: BTreeSet<&str> = citations.iter().map(|c| c.cve_id.as_str()).collect();
            prop_assert_eq!(
                dist.groups.iter().find(|g| g.group == "All").map_or(0, |g| g.count),
                distinct.len()
            );
        }
    }
}
