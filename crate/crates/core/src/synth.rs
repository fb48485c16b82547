//! Deterministic synthetic corpus generator for tests, demos, and the
//! bundled fixtures. Threads carry class-marker keywords at a configurable
//! incidence over a shared noise vocabulary, cite generated CVE ids, and
//! come with matching label, NVD-mirror, and EPSS files.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::ThreadLabel;

/// Generator configuration.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_threads: usize,
    pub seed: u64,
    /// Probability that each class marker word appears in a thread of that
    /// class.
    pub keyword_incidence: f64,
    /// Number of distinct noise words shared across classes.
    pub noise_vocab: usize,
    /// Distinct CVE ids cited across the corpus.
    pub n_cves: usize,
    /// Fraction of Scam/Other threads mixed in (ingested then excluded).
    pub excluded_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_threads: 750,
            seed: 1162,
            keyword_incidence: 0.8,
            noise_vocab: 300,
            n_cves: 120,
            excluded_fraction: 0.03,
        }
    }
}

/// One corpus record in the dump wire schema.
#[derive(Debug, Clone, Serialize)]
pub struct SynthPost {
    pub post_id: String,
    pub thread_id: String,
    pub board: String,
    pub forum: String,
    pub author: String,
    pub created_at: String,
    pub subject: String,
    pub raw_content: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthCve {
    pub cve_id: String,
    pub published: String,
    pub cvss_v2: Option<f64>,
    pub cvss_v31: Option<f64>,
    pub description: String,
}

/// A generated corpus plus its side files.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub posts: Vec<SynthPost>,
    pub labels: Vec<(String, ThreadLabel)>,
    pub nvd: Vec<SynthCve>,
    /// `(cve_id, epss, percentile)` rows.
    pub epss: Vec<(String, f64, f64)>,
}

const BOARDS: [&str; 5] = [
    "Pentesting and Forensics",
    "Premium Tools and Programs",
    "Website and Forum Hacking",
    "Hacking Tools and Programs",
    "Beginner Hacking",
];

const POC_MARKERS: [&str; 5] = ["poc", "tutorial", "guide", "writeup", "lab"];
const WEAPON_MARKERS: [&str; 5] = ["exploit", "vulnerability", "weaponized", "functional", "payload"];
const EXPLOIT_MARKERS: [&str; 5] = ["bitcoin", "undetectable", "fud", "clean", "attack"];

const SYLLABLES: [&str; 12] = [
    "ba", "de", "ki", "lo", "mu", "ra", "so", "tu", "ve", "zo", "ne", "pi",
];

fn noise_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..5);
    (0..n).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect()
}

impl SyntheticCorpus {
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("thread_id,label\n");
        for (id, label) in &self.labels {
            out.push_str(&format!("{id},{}\n", label.name()));
        }
        out
    }

    pub fn corpus_jsonl(&self) -> String {
        self.posts
            .iter()
            .map(|p| serde_json::to_string(p).expect("synth post serializes"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn nvd_jsonl(&self) -> String {
        self.nvd
            .iter()
            .map(|r| serde_json::to_string(r).expect("synth cve serializes"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn epss_csv(&self) -> String {
        let mut out = String::from("#model_version:synthetic,score_date:2023-02-28T00:00:00+0000\ncve,epss,percentile\n");
        for (id, epss, pct) in &self.epss {
            out.push_str(&format!("{id},{epss},{pct}\n"));
        }
        out
    }
}

/// Generate a corpus. Deterministic given `params`.
pub fn generate(params: &SynthParams) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let noise: Vec<String> = (0..params.noise_vocab).map(|_| noise_word(&mut rng)).collect();

    // CVE pool with publish dates spread over 2008-2019.
    let base = NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date");
    let mut nvd = Vec::with_capacity(params.n_cves);
    let mut epss = Vec::new();
    let mut cve_ids = Vec::with_capacity(params.n_cves);
    for i in 0..params.n_cves {
        let year = 2008 + (i % 12);
        let cve_id = format!("CVE-{year}-{:04}", 1000 + i);
        let published = base + chrono::Duration::days(rng.gen_range(0..4000));
        let cvss_v2 = (rng.gen_range(10..101) as f64) / 10.0;
        let cvss_v31 = if rng.gen_bool(0.6) {
            Some((rng.gen_range(10..101) as f64) / 10.0)
        } else {
            None
        };
        // One id in ten is unknown to the mirror (exercises the unmatched
        // side-channel).
        if i % 10 != 9 {
            nvd.push(SynthCve {
                cve_id: cve_id.clone(),
                published: published.format("%Y-%m-%d").to_string(),
                cvss_v2: Some(cvss_v2),
                cvss_v31,
                description: format!("synthetic vulnerability {i}"),
            });
            if rng.gen_bool(0.8) {
                epss.push((
                    cve_id.clone(),
                    (rng.gen_range(0..1000) as f64) / 1000.0,
                    (rng.gen_range(0..1000) as f64) / 1000.0,
                ));
            }
        }
        cve_ids.push(cve_id);
    }

    let class_markers: [(&[&str; 5], ThreadLabel); 3] = [
        (&POC_MARKERS, ThreadLabel::PoC),
        (&WEAPON_MARKERS, ThreadLabel::Weaponization),
        (&EXPLOIT_MARKERS, ThreadLabel::Exploitation),
    ];

    let mut posts = Vec::new();
    let mut labels = Vec::new();
    let mut post_counter = 0usize;

    for t in 0..params.n_threads {
        let thread_id = format!("t{t:05}");
        let excluded = rng.gen_bool(params.excluded_fraction);
        let (markers, label): (Vec<&str>, ThreadLabel) = if excluded {
            let label = if rng.gen_bool(0.5) { ThreadLabel::Scam } else { ThreadLabel::Other };
            (Vec::new(), label)
        } else {
            let (markers, label) = class_markers[t % 3];
            let chosen: Vec<&str> = markers
                .iter()
                .filter(|_| rng.gen_bool(params.keyword_incidence))
                .copied()
                .collect();
            (chosen, label)
        };
        labels.push((thread_id.clone(), label));

        let board = BOARDS[rng.gen_range(0..BOARDS.len())];
        let n_posts = rng.gen_range(1..5);
        let thread_start = base + chrono::Duration::days(rng.gen_range(0..4200));
        let cve = &cve_ids[rng.gen_range(0..cve_ids.len())];

        for p in 0..n_posts {
            let mut words: Vec<String> = (0..rng.gen_range(12..40))
                .map(|_| noise[rng.gen_range(0..noise.len())].clone())
                .collect();
            // Spread this thread's markers over its posts.
            for marker in &markers {
                if rng.gen_range(0..n_posts) == p {
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, marker.to_string());
                    // Markers sometimes repeat, like real chatter.
                    if rng.gen_bool(0.3) {
                        words.push(marker.to_string());
                    }
                }
            }
            // First post cites the thread's CVE; later posts occasionally do.
            if p == 0 || rng.gen_bool(0.2) {
                let at = rng.gen_range(0..=words.len());
                let styled = if rng.gen_bool(0.5) { cve.to_lowercase() } else { cve.clone() };
                words.insert(at, styled);
            }
            // Occasional price chatter.
            if rng.gen_bool(0.15) {
                let amount = rng.gen_range(1..4401);
                words.push(format!("${amount}"));
                words.push("lifetime".into());
            }

            let created = thread_start + chrono::Duration::days(rng.gen_range(0..30));
            posts.push(SynthPost {
                post_id: format!("p{post_counter:06}"),
                thread_id: thread_id.clone(),
                board: board.to_string(),
                forum: "hackforums".to_string(),
                author: format!("user{:03}", rng.gen_range(0..200)),
                created_at: format!("{}T12:00:00Z", created.format("%Y-%m-%d")),
                subject: if p == 0 {
                    format!("thread {t} about {}", words[0])
                } else {
                    String::new()
                },
                raw_content: words.join(" "),
            });
            post_counter += 1;
        }
    }

    SyntheticCorpus { posts, labels, nvd, epss }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let params = SynthParams { n_threads: 40, ..Default::default() };
        let a = generate(&params);
        let b = generate(&params);
        assert_eq!(a.corpus_jsonl(), b.corpus_jsonl());
        assert_eq!(a.labels_csv(), b.labels_csv());
        assert_eq!(a.nvd_jsonl(), b.nvd_jsonl());
        assert_eq!(a.epss_csv(), b.epss_csv());
    }

    #[test]
    fn corpus_has_expected_shape() {
        let params = SynthParams { n_threads: 60, ..Default::default() };
        let corpus = generate(&params);
        assert_eq!(corpus.labels.len(), 60);
        let thread_ids: std::collections::HashSet<&str> =
            corpus.posts.iter().map(|p| p.thread_id.as_str()).collect();
        assert_eq!(thread_ids.len(), 60);
        // Every thread's first post cites a CVE.
        for (id, _) in &corpus.labels {
            let first = corpus
                .posts
                .iter()
                .find(|p| p.thread_id == *id)
                .expect("thread has posts");
            assert!(
                first.raw_content.to_ascii_lowercase().contains("cve-"),
                "thread {id} first post lacks a CVE"
            );
        }
    }
}
