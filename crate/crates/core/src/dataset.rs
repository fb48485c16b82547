//! Labeled datasets: gold label ingestion, the rule-based weak labeler,
//! random oversampling, and stratified splits/folds.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Thread;
use crate::error::{Error, Result};
use crate::textfeat::SparseVector;

/// Thread maturity classes. Classifier tasks use only the first three;
/// Scam and Other are ingested and then excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThreadLabel {
    PoC,
    Weaponization,
    Exploitation,
    Scam,
    Other,
}

/// Fixed class order for every report and probability vector.
pub const CLASS_NAMES: [&str; 3] = ["PoC", "Weaponization", "Exploitation"];

impl ThreadLabel {
    pub fn parse(raw: &str) -> Option<ThreadLabel> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "poc" => Some(ThreadLabel::PoC),
            "weaponization" => Some(ThreadLabel::Weaponization),
            "exploitation" => Some(ThreadLabel::Exploitation),
            "scam" => Some(ThreadLabel::Scam),
            "other" => Some(ThreadLabel::Other),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThreadLabel::PoC => "PoC",
            ThreadLabel::Weaponization => "Weaponization",
            ThreadLabel::Exploitation => "Exploitation",
            ThreadLabel::Scam => "Scam",
            ThreadLabel::Other => "Other",
        }
    }

    /// Class index in the three-class task; `None` for excluded labels.
    pub fn class_index(&self) -> Option<usize> {
        match self {
            ThreadLabel::PoC => Some(0),
            ThreadLabel::Weaponization => Some(1),
            ThreadLabel::Exploitation => Some(2),
            ThreadLabel::Scam | ThreadLabel::Other => None,
        }
    }
}

/// One featurized, labeled thread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetItem {
    pub thread_id: String,
    pub features: SparseVector,
    pub label: usize,
}

/// A classification dataset over a fixed class set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub items: Vec<DatasetItem>,
    pub n_features: usize,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(items: Vec<DatasetItem>, n_features: usize, class_names: Vec<String>) -> Result<Self> {
        for item in &items {
            if item.label >= class_names.len() {
                return Err(Error::invalid(format!(
                    "label index {} outside the {}-class space",
                    item.label,
                    class_names.len()
                )));
            }
            if item.features.dim() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: item.features.dim(),
                });
            }
        }
        Ok(LabeledDataset { items, n_features, class_names })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }

    fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            n_features: self.n_features,
            class_names: self.class_names.clone(),
        }
    }

    /// Re-map to a binary `target`-vs-rest task, preserving item order.
    pub fn one_vs_rest(&self, target: usize) -> Result<LabeledDataset> {
        if target >= self.n_classes() {
            return Err(Error::invalid(format!("target class {target} out of range")));
        }
        let target_name = self.class_names[target].clone();
        let items = self
            .items
            .iter()
            .map(|item| DatasetItem {
                thread_id: item.thread_id.clone(),
                features: item.features.clone(),
                label: if item.label == target { 0 } else { 1 },
            })
            .collect();
        LabeledDataset::new(
            items,
            self.n_features,
            vec![target_name.clone(), format!("Non-{target_name}")],
        )
    }

    /// Per-class item indices, each list ordered by thread id for
    /// order-independent seeded shuffles.
    fn class_indices_sorted(&self) -> Vec<Vec<usize>> {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); self.n_classes()];
        for (i, item) in self.items.iter().enumerate() {
            per_class[item.label].push(i);
        }
        for list in &mut per_class {
            list.sort_by(|&a, &b| {
                self.items[a]
                    .thread_id
                    .cmp(&self.items[b].thread_id)
                    .then(a.cmp(&b))
            });
        }
        per_class
    }
}

/// Load gold labels from CSV `thread_id,label` (case-insensitive labels,
/// optional header). Conflicting duplicates are fatal.
pub fn load_labels(path: &Path) -> Result<HashMap<String, ThreadLabel>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if line_no == 1 && trimmed.eq_ignore_ascii_case("thread_id,label") {
            continue;
        }
        let (thread_id, raw_label) = trimmed
            .split_once(',')
            .ok_or_else(|| Error::record(path, line_no, "expected thread_id,label"))?;
        let label = ThreadLabel::parse(raw_label)
            .ok_or_else(|| Error::record(path, line_no, format!("unknown label {raw_label:?}")))?;
        if let Some(existing) = map.insert(thread_id.trim().to_string(), label) {
            if existing != label {
                return Err(Error::record(
                    path,
                    line_no,
                    format!(
                        "thread {:?} labeled both {} and {}",
                        thread_id.trim(),
                        existing.name(),
                        label.name()
                    ),
                ));
            }
        }
    }
    Ok(map)
}

/// A keyword rule of the weak labeler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRule {
    pub label: String,
    pub phrases: Vec<String>,
}

/// Versioned, editable rule table. Keyword presence only: the code book's
/// "appropriate context" judgment stays with human annotators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleTable {
    pub version: u32,
    pub rules: Vec<LabelRule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable {
            version: 1,
            rules: vec![
                LabelRule {
                    label: "PoC".into(),
                    phrases: vec!["poc".into(), "tutorial".into(), "guide".into()],
                },
                LabelRule {
                    label: "Weaponization".into(),
                    phrases: vec![
                        "vulnerability".into(),
                        "exploit".into(),
                        "fully functional".into(),
                        "highly mature".into(),
                        "source code".into(),
                    ],
                },
                LabelRule {
                    label: "Exploitation".into(),
                    phrases: vec![
                        "bitcoin".into(),
                        "exploitation".into(),
                        "attack".into(),
                        "fully undetectable".into(),
                        "fud".into(),
                        "exploit market".into(),
                        "lizard squad".into(),
                        "lulzsec".into(),
                        "lazarus".into(),
                    ],
                },
            ],
        }
    }
}

impl RuleTable {
    pub fn from_json(json: &str) -> Result<Self> {
        let table: RuleTable =
            serde_json::from_str(json).map_err(|e| Error::Decode(e.to_string()))?;
        for rule in &table.rules {
            let parsed = ThreadLabel::parse(&rule.label);
            if !matches!(
                parsed,
                Some(ThreadLabel::PoC | ThreadLabel::Weaponization | ThreadLabel::Exploitation)
            ) {
                return Err(Error::invalid(format!(
                    "rule table may only target the three classifier classes, got {:?}",
                    rule.label
                )));
            }
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rule table serialization cannot fail")
    }
}

/// A rule that matched a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiredRule {
    pub label: ThreadLabel,
    pub phrase: String,
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect()
}

fn raw_tokens(document: &str) -> Vec<String> {
    // No stop-word filtering here: rule phrases may contain anything.
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in document.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Rule-based label suggestion. Most-severe-wins precedence:
/// Exploitation over Weaponization over PoC. Advisory only; never merged
/// into gold labels.
pub fn weak_label(thread: &Thread, rules: &RuleTable) -> (Option<ThreadLabel>, Vec<FiredRule>) {
    let tokens = raw_tokens(&thread.document);
    let mut fired = Vec::new();
    for rule in &rules.rules {
        let Some(label) = ThreadLabel::parse(&rule.label) else { continue };
        for phrase in &rule.phrases {
            let needle = phrase_tokens(phrase);
            if needle.is_empty() {
                continue;
            }
            let hit = tokens
                .windows(needle.len())
                .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b));
            if hit {
                fired.push(FiredRule { label, phrase: phrase.clone() });
            }
        }
    }
    let suggestion = fired
        .iter()
        .map(|f| f.label)
        .max_by_key(|l| l.class_index().unwrap_or(0));
    (suggestion, fired)
}

use crate::seeding::derive_seed;

/// Raise every class to the majority count by sampling existing items
/// uniformly with replacement. Original items are all retained, in order;
/// duplicates are appended grouped by class.
pub fn oversample(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let counts = dataset.class_counts();
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("cannot oversample: a class has no items"));
    }
    let majority = *counts.iter().max().expect("nonempty class list");
    let per_class = dataset.class_indices_sorted();
    let mut items = dataset.items.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0853));
    for (class, indices) in per_class.iter().enumerate() {
        for _ in counts[class]..majority {
            let pick = indices[rng.gen_range(0..indices.len())];
            items.push(dataset.items[pick].clone());
        }
    }
    LabeledDataset::new(items, dataset.n_features, dataset.class_names.clone())
}

/// Stratified train/test split. Per-class test size is
/// `round(count * test_fraction)`; the shuffle is seeded and
/// order-independent (items are keyed by thread id).
pub fn train_test_split(
    dataset: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let counts = dataset.class_counts();
    if let Some(class) = counts.iter().position(|&c| c < 2) {
        return Err(Error::invalid(format!(
            "class {} has {} items; need at least 2 to split",
            dataset.class_names[class], counts[class]
        )));
    }
    let mut in_test = vec![false; dataset.len()];
    for (class, indices) in dataset.class_indices_sorted().iter().enumerate() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            0x5011 + class as u64,
        )));
        let test_n = (indices.len() as f64 * test_fraction).round() as usize;
        for &i in shuffled.iter().take(test_n) {
            in_test[i] = true;
        }
    }
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_test[i]).collect();
    let test: Vec<usize> = (0..dataset.len()).filter(|&i| in_test[i]).collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Stratified k-fold assignment: per class, a seeded shuffle dealt
/// round-robin, so per-fold class counts differ by at most one.
/// Returns item indices per fold.
pub fn stratified_kfold(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    let counts = dataset.class_counts();
    if let Some(class) = counts.iter().position(|&c| c < k) {
        return Err(Error::invalid(format!(
            "class {} has {} items, fewer than k={}",
            dataset.class_names[class], counts[class], k
        )));
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, indices) in dataset.class_indices_sorted().iter().enumerate() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            0xf01d + class as u64,
        )));
        for (j, &i) in shuffled.iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort();
    }
    Ok(folds)
}

/// Materialize the train/validation datasets for one fold.
pub fn fold_split(dataset: &LabeledDataset, folds: &[Vec<usize>], fold: usize) -> (LabeledDataset, LabeledDataset) {
    let val = &folds[fold];
    let train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    (dataset.subset(&train), dataset.subset(val))
}

/// Export split/fold assignments as CSV `thread_id,partition,fold`.
pub fn write_split_manifest(
    path: &Path,
    rows: &[(String, String, Option<usize>)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["thread_id", "partition", "fold"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for (thread_id, partition, fold) in rows {
        let fold_str = fold.map(|f| f.to_string()).unwrap_or_default();
        w.write_record([thread_id.as_str(), partition.as_str(), &fold_str])
            .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Sort a label map into the deterministic (thread_id, label) listing used
/// by exports.
pub fn sorted_label_rows(labels: &HashMap<String, ThreadLabel>) -> Vec<(String, ThreadLabel)> {
    let sorted: BTreeMap<&String, &ThreadLabel> = labels.iter().collect();
    sorted.into_iter().map(|(k, v)| (k.clone(), *v)).collect()
}
