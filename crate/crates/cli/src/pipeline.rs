//! The staged pipeline: ingest → extract → enrich → featurize → label →
//! split → grid-search → train → evaluate → report, with content-hash
//! caching between stages.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use anyhow::{bail, Result};
use cvemine::analytics::{
    board_breakdown, delay_cdf, empirical_cdf, global_mean_score, keyword_frequencies,
    load_overlay, score_distribution, share_above_global_mean, write_board_breakdown_csv,
    write_box_csv, write_cdf_csv, write_keywords_csv, DedupMode, ScoreKind,
};
use cvemine::corpus::{assemble_threads, ingest_corpus_with, NormalizeOptions};
use cvemine::dataset::{
    load_labels, oversample, sorted_label_rows, stratified_kfold, train_test_split,
    write_split_manifest, DatasetItem, LabeledDataset, CLASS_NAMES,
};
use cvemine::enrich::{join_enrichment, load_epss, load_nvd, merge_epss};
use cvemine::eval::{
    confusion, metrics, write_confusion_csv, write_metrics_csv, write_metrics_extended_csv,
    MetricsReport,
};
use cvemine::extract::{
    extract_cve_mentions, extract_price_mentions, read_mentions_csv, unique_cves,
    write_mentions_csv, write_prices_csv,
};
use cvemine::models::{
    deserialize_model, export_rules, fit_forest, fit_tree, grid_search, serialize_model,
    write_grid_csv, ClassifierModel, FeatureSpace, ForestParams, GridPoint, ModelKind,
    PersistedModel,
};
use cvemine::seed::derive_seed;
use cvemine::textfeat::{build_vocabulary, train_doc_embeddings, SparseVector};

use crate::artifacts::{
    partition_sets, read_features_csv, read_posts, read_prices_csv, read_scored_csv,
    read_split_csv, read_threads, read_delays_csv, read_lines, write_features_csv, write_jsonl,
    write_lines, write_scored_csv, Featurizer,
};
use crate::config::{Featurization, PipelineConfig};
use crate::stages::{execute, RunLock, Stage, StageState, StageStatus};

pub const STAGE_ORDER: [&str; 10] = [
    "ingest",
    "extract",
    "enrich",
    "featurize",
    "label",
    "split",
    "grid-search",
    "train",
    "evaluate",
    "report",
];

const SPLIT_SEED_TAG: u64 = 0x5911;
const FOLD_SEED_TAG: u64 = 0xcf01d; // must match the grid-search internal tag
const FEATURIZE_SEED_TAG: u64 = 0xfea7;
const TRAIN_OS_TAG: u64 = 0x05a1;
const TRAIN_FIT_TAG: u64 = 0xf177;
const OVA_OS_TAG: u64 = 0x0a00;
const OVA_FIT_TAG: u64 = 0x0aff;

pub struct Pipeline {
    pub cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Pipeline> {
        cfg.validate()?;
        Ok(Pipeline { cfg })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// Run every stage, honoring the cache.
    pub fn run_all(&self) -> Result<Vec<StageStatus>> {
        self.run_until("report", false)
    }

    /// Run stages up to and including `last`. `force_last` executes the
    /// final stage even when the config disables it (explicit subcommand).
    pub fn run_until(&self, last: &str, force_last: bool) -> Result<Vec<StageStatus>> {
        if !STAGE_ORDER.contains(&last) {
            bail!("unknown stage {last:?}");
        }
        let _lock = RunLock::acquire(&self.cfg.out_dir)?;
        let mut statuses = Vec::new();
        for &name in &STAGE_ORDER {
            let is_last = name == last;
            if name == "grid-search" && !self.cfg.run_grid_search && !(is_last && force_last) {
                statuses.push(StageStatus { name: "grid-search", state: StageState::Skipped });
            } else {
                statuses.push(self.execute_stage(name)?);
            }
            if is_last {
                break;
            }
        }
        Ok(statuses)
    }

    fn execute_stage(&self, name: &str) -> Result<StageStatus> {
        let stage = match name {
            "ingest" => self.stage_ingest(),
            "extract" => self.stage_extract(),
            "enrich" => self.stage_enrich(),
            "featurize" => self.stage_featurize(),
            "label" => self.stage_label(),
            "split" => self.stage_split(),
            "grid-search" => self.stage_grid_search(),
            "train" => self.stage_train(),
            "evaluate" => self.stage_evaluate(),
            "report" => self.stage_report(),
            other => bail!("unknown stage {other:?}"),
        };
        execute(&self.cfg.out_dir, stage)
    }

    fn stage_ingest(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "ingest",
            inputs: vec![("corpus".into(), cfg.corpus.clone())],
            params: serde_json::json!({
                "format": cfg.corpus_format,
                "strip_quoted_text": cfg.strip_quoted_text,
            })
            .to_string(),
            outputs: vec!["posts.jsonl".into(), "threads.jsonl".into(), "ingest_report.json".into()],
            run: Box::new(move || {
                let opts = NormalizeOptions { strip_quoted_text: cfg.strip_quoted_text };
                let report = ingest_corpus_with(&cfg.corpus, cfg.corpus_format, opts)?;
                for skip in &report.skipped {
                    eprintln!(
                        "warning: {}:{}: skipped record ({})",
                        cfg.corpus.display(),
                        skip.line,
                        skip.reason
                    );
                }
                let threads = assemble_threads(report.posts.clone())?;
                write_jsonl(&self.out("posts.jsonl"), &report.posts)?;
                write_jsonl(&self.out("threads.jsonl"), &threads)?;
                let summary = serde_json::json!({
                    "posts": report.posts.len(),
                    "threads": threads.len(),
                    "skipped": report.skipped,
                });
                std::fs::write(
                    self.out("ingest_report.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
                Ok(())
            }),
        }
    }

    fn stage_extract(&self) -> Stage<'_> {
        Stage {
            name: "extract",
            inputs: vec![("posts.jsonl".into(), self.out("posts.jsonl"))],
            params: String::new(),
            outputs: vec![
                "mentions.csv".into(),
                "prices.csv".into(),
                "citing_threads.txt".into(),
                "extract_summary.json".into(),
            ],
            run: Box::new(move || {
                let posts = read_posts(&self.out("posts.jsonl"))?;
                let mut mentions = Vec::new();
                let mut prices = Vec::new();
                for post in &posts {
                    mentions.extend(extract_cve_mentions(post));
                    prices.extend(extract_price_mentions(post));
                }
                let citing: BTreeSet<String> =
                    mentions.iter().map(|m| m.thread_id.clone()).collect();
                write_mentions_csv(&self.out("mentions.csv"), &mentions)?;
                write_prices_csv(&self.out("prices.csv"), &prices)?;
                write_lines(
                    &self.out("citing_threads.txt"),
                    &citing.iter().cloned().collect::<Vec<_>>(),
                )?;
                let summary = serde_json::json!({
                    "mentions": mentions.len(),
                    "unique_cves": unique_cves(&mentions).len(),
                    "citing_threads": citing.len(),
                    "price_mentions": prices.len(),
                });
                std::fs::write(
                    self.out("extract_summary.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
                Ok(())
            }),
        }
    }

    fn stage_enrich(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "enrich",
            inputs: vec![
                ("mentions.csv".into(), self.out("mentions.csv")),
                ("posts.jsonl".into(), self.out("posts.jsonl")),
                ("nvd".into(), cfg.nvd.clone()),
                ("epss".into(), cfg.epss.clone()),
            ],
            params: String::new(),
            outputs: vec![
                "delays.csv".into(),
                "scored.csv".into(),
                "unmatched.csv".into(),
                "enrich_summary.json".into(),
            ],
            run: Box::new(move || {
                let (nvd, nvd_skipped) = load_nvd(&cfg.nvd)?;
                for skip in &nvd_skipped {
                    eprintln!(
                        "warning: {}:{}: skipped NVD record ({})",
                        cfg.nvd.display(),
                        skip.line,
                        skip.reason
                    );
                }
                let epss = load_epss(&cfg.epss)?;
                let records = merge_epss(&nvd, &epss);
                let mentions = read_mentions_csv(&self.out("mentions.csv"))?;
                let posts = read_posts(&self.out("posts.jsonl"))?;
                let post_dates: HashMap<String, chrono::NaiveDate> =
                    posts.iter().map(|p| (p.post_id.clone(), p.date())).collect();
                let join = join_enrichment(&mentions, &post_dates, &records);
                cvemine::enrich::write_delays_csv(&self.out("delays.csv"), &join.delays)?;
                write_scored_csv(&self.out("scored.csv"), &join.scored)?;
                write_mentions_csv(&self.out("unmatched.csv"), &join.unmatched)?;
                let summary = serde_json::json!({
                    "matched": join.delays.len(),
                    "unmatched": join.unmatched.len(),
                    "nvd_records": records.len(),
                    "nvd_skipped": nvd_skipped.len(),
                    "epss_snapshot_date": epss.snapshot_date,
                });
                std::fs::write(
                    self.out("enrich_summary.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
                Ok(())
            }),
        }
    }

    fn stage_featurize(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "featurize",
            inputs: vec![
                ("threads.jsonl".into(), self.out("threads.jsonl")),
                ("citing_threads.txt".into(), self.out("citing_threads.txt")),
            ],
            params: serde_json::json!({
                "featurization": cfg.featurization,
                "vocab": cfg.vocab,
                "embedding": cfg.embedding,
                "seed": cfg.seed,
            })
            .to_string(),
            outputs: vec!["featurizer.json".into(), "features.csv".into()],
            run: Box::new(move || {
                let threads = read_threads(&self.out("threads.jsonl"))?;
                let citing: BTreeSet<String> =
                    read_lines(&self.out("citing_threads.txt"))?.into_iter().collect();
                let mut docs: Vec<(String, String)> = threads
                    .iter()
                    .filter(|t| citing.contains(&t.thread_id))
                    .map(|t| (t.thread_id.clone(), t.document.clone()))
                    .collect();
                docs.sort_by(|a, b| a.0.cmp(&b.0));
                let documents: Vec<String> = docs.iter().map(|(_, d)| d.clone()).collect();

                let (featurizer, rows): (Featurizer, Vec<(String, SparseVector)>) =
                    match cfg.featurization {
                        Featurization::Bow | Featurization::Tfidf => {
                            let vocab = build_vocabulary(&documents, &cfg.vocab.to_params())?;
                            if vocab.is_empty() {
                                eprintln!("warning: vocabulary is empty after filtering");
                            }
                            let featurizer = if cfg.featurization == Featurization::Bow {
                                Featurizer::Bow(vocab)
                            } else {
                                Featurizer::Tfidf(vocab)
                            };
                            let rows = docs
                                .iter()
                                .map(|(id, doc)| (id.clone(), featurizer.vectorize(doc)))
                                .collect();
                            (featurizer, rows)
                        }
                        Featurization::Doc2vec => {
                            let params = cfg
                                .embedding
                                .to_params(derive_seed(cfg.seed, FEATURIZE_SEED_TAG));
                            let model = train_doc_embeddings(&documents, &params)?;
                            let rows = docs
                                .iter()
                                .enumerate()
                                .map(|(i, (id, _))| {
                                    (id.clone(), SparseVector::from_dense(&model.doc_vectors[i]))
                                })
                                .collect();
                            (Featurizer::Embedding(model), rows)
                        }
                    };

                featurizer.save(&self.out("featurizer.json"))?;
                write_features_csv(
                    &self.out("features.csv"),
                    featurizer.encoding().name(),
                    &featurizer.fingerprint(),
                    featurizer.n_features(),
                    &rows,
                )?;
                Ok(())
            }),
        }
    }

    fn stage_label(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "label",
            inputs: vec![
                ("labels".into(), cfg.labels.clone()),
                ("citing_threads.txt".into(), self.out("citing_threads.txt")),
            ],
            params: String::new(),
            outputs: vec![
                "labeled.csv".into(),
                "class_counts.json".into(),
                "label_report.json".into(),
            ],
            run: Box::new(move || {
                let labels = load_labels(&cfg.labels)?;
                let citing = read_lines(&self.out("citing_threads.txt"))?;
                let mut rows = Vec::new();
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                let mut excluded = 0usize;
                let mut unlabeled = 0usize;
                for thread_id in &citing {
                    match labels.get(thread_id) {
                        Some(label) if label.class_index().is_some() => {
                            rows.push(format!("{thread_id},{}", label.name()));
                            *counts.entry(label.name()).or_insert(0) += 1;
                        }
                        Some(_) => excluded += 1,
                        None => unlabeled += 1,
                    }
                }
                let mut content = String::from("thread_id,label\n");
                for row in &rows {
                    content.push_str(row);
                    content.push('\n');
                }
                std::fs::write(self.out("labeled.csv"), content)?;
                std::fs::write(
                    self.out("class_counts.json"),
                    serde_json::to_string_pretty(&counts)?,
                )?;
                let report = serde_json::json!({
                    "labeled": rows.len(),
                    "excluded_scam_or_other": excluded,
                    "unlabeled_citing": unlabeled,
                });
                std::fs::write(
                    self.out("label_report.json"),
                    serde_json::to_string_pretty(&report)?,
                )?;
                Ok(())
            }),
        }
    }

    fn stage_split(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "split",
            inputs: vec![
                ("labeled.csv".into(), self.out("labeled.csv")),
                ("features.csv".into(), self.out("features.csv")),
            ],
            params: serde_json::json!({
                "seed": cfg.seed,
                "test_fraction": cfg.test_fraction,
                "cv_folds": cfg.cv_folds,
            })
            .to_string(),
            outputs: vec!["split.csv".into()],
            run: Box::new(move || {
                let dataset = self.load_dataset()?;
                let (train, test) =
                    train_test_split(&dataset, cfg.test_fraction, derive_seed(cfg.seed, SPLIT_SEED_TAG))?;
                let folds =
                    stratified_kfold(&train, cfg.cv_folds, derive_seed(cfg.seed, FOLD_SEED_TAG))?;
                let mut fold_of: HashMap<&str, usize> = HashMap::new();
                for (f, indices) in folds.iter().enumerate() {
                    for &i in indices {
                        fold_of.insert(train.items[i].thread_id.as_str(), f);
                    }
                }
                let mut rows: Vec<(String, String, Option<usize>)> = Vec::new();
                for item in &train.items {
                    rows.push((
                        item.thread_id.clone(),
                        "train".into(),
                        fold_of.get(item.thread_id.as_str()).copied(),
                    ));
                }
                for item in &test.items {
                    rows.push((item.thread_id.clone(), "test".into(), None));
                }
                rows.sort();
                write_split_manifest(&self.out("split.csv"), &rows)?;
                Ok(())
            }),
        }
    }

    fn stage_grid_search(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "grid-search",
            inputs: vec![
                ("features.csv".into(), self.out("features.csv")),
                ("labeled.csv".into(), self.out("labeled.csv")),
                ("split.csv".into(), self.out("split.csv")),
            ],
            params: serde_json::json!({
                "grid": cfg.grid,
                "model": cfg.model,
                "scoring": cfg.scoring,
                "cv_folds": cfg.cv_folds,
                "seed": cfg.seed,
            })
            .to_string(),
            outputs: vec!["grid_table.csv".into(), "best_params.json".into()],
            run: Box::new(move || {
                let (train, _) = self.load_partitioned_dataset()?;
                let grid = cfg.grid.to_grid(cfg.cv_folds, cfg.scoring);
                let result = grid_search(&train, &grid, cfg.model, cfg.seed)?;
                write_grid_csv(&self.out("grid_table.csv"), &result)?;
                std::fs::write(
                    self.out("best_params.json"),
                    serde_json::to_string_pretty(&result.best)?,
                )?;
                Ok(())
            }),
        }
    }

    /// The hyperparameters the train/evaluate stages should use.
    fn resolve_point(&self) -> Result<GridPoint> {
        let best_path = self.out("best_params.json");
        if self.cfg.run_grid_search && best_path.exists() {
            let raw = std::fs::read_to_string(&best_path)?;
            return Ok(serde_json::from_str(&raw)?);
        }
        let (tree, n_trees) = self.cfg.grid.first_point()?;
        Ok(GridPoint { tree, n_trees })
    }

    fn grid_dependent_inputs(&self) -> Vec<(String, PathBuf)> {
        let mut inputs = vec![
            ("features.csv".into(), self.out("features.csv")),
            ("labeled.csv".into(), self.out("labeled.csv")),
            ("split.csv".into(), self.out("split.csv")),
            ("featurizer.json".into(), self.out("featurizer.json")),
        ];
        if self.cfg.run_grid_search {
            inputs.push(("best_params.json".into(), self.out("best_params.json")));
        }
        inputs
    }

    fn fit_model(&self, train: &LabeledDataset, point: &GridPoint, seed: u64) -> Result<ClassifierModel> {
        Ok(match self.cfg.model {
            ModelKind::Tree => ClassifierModel::Tree(fit_tree(train, &point.tree, seed)?),
            ModelKind::Forest => ClassifierModel::Forest(fit_forest(
                train,
                &ForestParams { n_trees: point.n_trees, bootstrap: true, tree: point.tree.clone() },
                seed,
            )?),
        })
    }

    fn stage_train(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        Stage {
            name: "train",
            inputs: self.grid_dependent_inputs(),
            params: serde_json::json!({
                "model": cfg.model,
                "seed": cfg.seed,
                "fallback": cfg.grid,
                "run_grid_search": cfg.run_grid_search,
            })
            .to_string(),
            outputs: vec!["model.json".into(), "rules.txt".into()],
            run: Box::new(move || {
                let point = self.resolve_point()?;
                let (train, _) = self.load_partitioned_dataset()?;
                let balanced = oversample(&train, derive_seed(cfg.seed, TRAIN_OS_TAG))?;
                let model = self.fit_model(&balanced, &point, derive_seed(cfg.seed, TRAIN_FIT_TAG))?;
                let featurizer = Featurizer::load(&self.out("featurizer.json"))?;
                let persisted = PersistedModel {
                    feature_space: FeatureSpace {
                        encoding: featurizer.encoding().name().to_string(),
                        n_features: featurizer.n_features(),
                        fingerprint: featurizer.fingerprint(),
                    },
                    class_names: train.class_names.clone(),
                    model,
                };
                std::fs::write(self.out("model.json"), serialize_model(&persisted))?;

                // Interpretable rules for the tree case; for forests, the
                // first tree is exported as a representative.
                let rules = match (&persisted.model, &featurizer) {
                    (ClassifierModel::Tree(t), Featurizer::Bow(v) | Featurizer::Tfidf(v)) => {
                        Some(export_rules(t, v.grams(), &persisted.class_names)?)
                    }
                    (ClassifierModel::Forest(f), Featurizer::Bow(v) | Featurizer::Tfidf(v)) => {
                        Some(export_rules(&f.trees[0], v.grams(), &persisted.class_names)?)
                    }
                    _ => None,
                };
                let content = match rules {
                    Some(lines) => lines.join("\n") + "\n",
                    None => "# rules are only exported for vocabulary-backed featurizations\n".into(),
                };
                std::fs::write(self.out("rules.txt"), content)?;
                Ok(())
            }),
        }
    }

    fn stage_evaluate(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        let mut inputs = self.grid_dependent_inputs();
        inputs.push(("model.json".into(), self.out("model.json")));
        Stage {
            name: "evaluate",
            inputs,
            params: serde_json::json!({
                "model": cfg.model,
                "seed": cfg.seed,
            })
            .to_string(),
            outputs: vec![
                "metrics.csv".into(),
                "metrics_per_class.csv".into(),
                "confusion_three_class.csv".into(),
                "confusion_poc_vs_rest.csv".into(),
                "confusion_weaponization_vs_rest.csv".into(),
                "confusion_exploitation_vs_rest.csv".into(),
            ],
            run: Box::new(move || {
                let point = self.resolve_point()?;
                let (train, test) = self.load_partitioned_dataset()?;
                let model_name = match cfg.model {
                    ModelKind::Tree => "DT",
                    ModelKind::Forest => "RF",
                };
                let encoding = cfg.featurization.name();
                let raw = std::fs::read_to_string(self.out("model.json"))?;
                let persisted = deserialize_model(&raw)?;

                let mut reports: Vec<MetricsReport> = Vec::new();

                // Three-class task with the trained model.
                let (y_true, y_pred) = predict_all(&persisted.model, &test)?;
                let matrix = confusion(&y_true, &y_pred, &test.class_names)?;
                write_confusion_csv(&self.out("confusion_three_class.csv"), &matrix)?;
                reports.push(metrics(&matrix).with_names(
                    model_name,
                    encoding,
                    "PoC, Weaponization, Exploitation",
                ));

                // One-vs-rest tasks by label re-mapping at dataset level.
                for target in 0..CLASS_NAMES.len() {
                    let task = match target {
                        0 => "PoC vs Non-PoC",
                        1 => "Weaponization vs Non-weaponization",
                        _ => "Exploitation vs Non-exploitation",
                    };
                    let file = match target {
                        0 => "confusion_poc_vs_rest.csv",
                        1 => "confusion_weaponization_vs_rest.csv",
                        _ => "confusion_exploitation_vs_rest.csv",
                    };
                    let ova_train = train.one_vs_rest(target)?;
                    let ova_test = test.one_vs_rest(target)?;
                    let balanced =
                        oversample(&ova_train, derive_seed(cfg.seed, OVA_OS_TAG + target as u64))?;
                    let model = self.fit_model(
                        &balanced,
                        &point,
                        derive_seed(cfg.seed, OVA_FIT_TAG + target as u64),
                    )?;
                    let (y_true, y_pred) = predict_all(&model, &ova_test)?;
                    let matrix = confusion(&y_true, &y_pred, &ova_test.class_names)?;
                    write_confusion_csv(&self.out(file), &matrix)?;
                    reports.push(metrics(&matrix).with_names(model_name, encoding, task));
                }

                write_metrics_csv(&self.out("metrics.csv"), &reports)?;
                write_metrics_extended_csv(&self.out("metrics_per_class.csv"), &reports)?;
                Ok(())
            }),
        }
    }

    fn stage_report(&self) -> Stage<'_> {
        let cfg = &self.cfg;
        let mut inputs = vec![
            ("prices.csv".into(), self.out("prices.csv")),
            ("delays.csv".into(), self.out("delays.csv")),
            ("scored.csv".into(), self.out("scored.csv")),
            ("labeled.csv".into(), self.out("labeled.csv")),
            ("threads.jsonl".into(), self.out("threads.jsonl")),
            ("nvd".into(), cfg.nvd.clone()),
            ("epss".into(), cfg.epss.clone()),
        ];
        if let Some(p) = &cfg.price_overlay {
            inputs.push(("price_overlay".into(), p.clone()));
        }
        if let Some(p) = &cfg.delay_overlay {
            inputs.push(("delay_overlay".into(), p.clone()));
        }
        let mut outputs = vec![
            "cdf_prices.csv".to_string(),
            "cdf_delays.csv".to_string(),
            "board_breakdown.csv".to_string(),
            "risk_summary.json".to_string(),
        ];
        for kind in ["cvss_v2", "cvss_v31", "epss"] {
            for mode in ["per_citation", "per_distinct_cve"] {
                outputs.push(format!("box_{kind}_{mode}.csv"));
            }
        }
        for class in ["all", "poc", "weaponization", "exploitation"] {
            outputs.push(format!("keywords_{class}.csv"));
        }
        Stage {
            name: "report",
            inputs,
            params: serde_json::json!({ "top_k_keywords": cfg.top_k_keywords }).to_string(),
            outputs,
            run: Box::new(move || {
                let prices = read_prices_csv(&self.out("prices.csv"))?;
                let price_overlay = match &cfg.price_overlay {
                    Some(p) => Some(load_overlay(p)?),
                    None => None,
                };
                if prices.is_empty() {
                    std::fs::write(self.out("cdf_prices.csv"), "# no samples\nvalue,fraction\n")?;
                } else {
                    let series = empirical_cdf(
                        &prices.iter().map(|p| p.amount).collect::<Vec<_>>(),
                    )?;
                    write_cdf_csv(&self.out("cdf_prices.csv"), &series, price_overlay.as_ref())?;
                }

                let delays = read_delays_csv(&self.out("delays.csv"))?;
                let delay_overlay = match &cfg.delay_overlay {
                    Some(p) => Some(load_overlay(p)?),
                    None => None,
                };
                if delays.is_empty() {
                    std::fs::write(self.out("cdf_delays.csv"), "# no samples\nvalue,fraction\n")?;
                } else {
                    let series = delay_cdf(&delays)?;
                    write_cdf_csv(&self.out("cdf_delays.csv"), &series, delay_overlay.as_ref())?;
                }

                let scored = read_scored_csv(&self.out("scored.csv"))?;
                let labels = load_labels(&self.out("labeled.csv"))
                    .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                for (kind, kind_name) in [
                    (ScoreKind::CvssV2, "cvss_v2"),
                    (ScoreKind::CvssV31, "cvss_v31"),
                    (ScoreKind::Epss, "epss"),
                ] {
                    for (mode, mode_name) in [
                        (DedupMode::PerCitation, "per_citation"),
                        (DedupMode::PerDistinctCve, "per_distinct_cve"),
                    ] {
                        let dist = score_distribution(&scored, &labels, kind, mode)?;
                        write_box_csv(&self.out(&format!("box_{kind_name}_{mode_name}.csv")), &dist)?;
                    }
                }

                let threads = read_threads(&self.out("threads.jsonl"))?;
                let freqs = keyword_frequencies(&threads, &labels, cfg.top_k_keywords);
                for freq in &freqs {
                    let file = format!("keywords_{}.csv", freq.class.to_lowercase());
                    write_keywords_csv(&self.out(&file), freq)?;
                }
                write_board_breakdown_csv(
                    &self.out("board_breakdown.csv"),
                    &board_breakdown(&threads, &labels),
                )?;

                let (nvd, _) = load_nvd(&cfg.nvd)?;
                let epss = load_epss(&cfg.epss)?;
                let records = merge_epss(&nvd, &epss);
                let mut risk = BTreeMap::new();
                for (kind, name) in [
                    (ScoreKind::CvssV2, "cvss_v2"),
                    (ScoreKind::CvssV31, "cvss_v31"),
                    (ScoreKind::Epss, "epss"),
                ] {
                    let mean = global_mean_score(&records, kind);
                    let share = mean
                        .and_then(|m| share_above_global_mean(&scored, kind, m).ok());
                    risk.insert(
                        name,
                        serde_json::json!({ "global_mean": mean, "share_above_global_mean": share }),
                    );
                }
                let summary = serde_json::json!({
                    "scores": risk,
                    "epss_snapshot_date": epss.snapshot_date,
                });
                std::fs::write(
                    self.out("risk_summary.json"),
                    serde_json::to_string_pretty(&summary)?,
                )?;
                Ok(())
            }),
        }
    }

    /// Dataset over every labeled, featurized citing thread, ordered by
    /// thread id.
    pub(crate) fn load_dataset(&self) -> Result<LabeledDataset> {
        let features = read_features_csv(&self.out("features.csv"))?;
        let labels = load_labels(&self.out("labeled.csv"))
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let feature_map: HashMap<&str, &SparseVector> =
            features.rows.iter().map(|(id, v)| (id.as_str(), v)).collect();
        let mut items = Vec::new();
        for (thread_id, label) in sorted_label_rows(&labels) {
            let Some(class) = label.class_index() else { continue };
            let Some(vector) = feature_map.get(thread_id.as_str()) else {
                bail!("labeled thread {thread_id} has no feature row");
            };
            items.push(DatasetItem {
                thread_id,
                features: (*vector).clone(),
                label: class,
            });
        }
        LabeledDataset::new(
            items,
            features.dim,
            CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        )
        .map_err(|e| anyhow::anyhow!(e.to_string()))
    }

    /// The dataset split into (train, test) according to split.csv.
    pub(crate) fn load_partitioned_dataset(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        let dataset = self.load_dataset()?;
        let split = read_split_csv(&self.out("split.csv"))?;
        let partition = partition_sets(&split);
        let mut train_items = Vec::new();
        let mut test_items = Vec::new();
        for item in dataset.items {
            match partition.get(&item.thread_id).map(|s| s.as_str()) {
                Some("train") => train_items.push(item),
                Some("test") => test_items.push(item),
                _ => bail!("thread {} missing from split.csv", item.thread_id),
            }
        }
        let names: Vec<String> = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        Ok((
            LabeledDataset::new(train_items, dataset.n_features, names.clone())
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
            LabeledDataset::new(test_items, dataset.n_features, names)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        ))
    }
}

fn predict_all(model: &ClassifierModel, dataset: &LabeledDataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut y_true = Vec::with_capacity(dataset.len());
    let mut y_pred = Vec::with_capacity(dataset.len());
    for item in &dataset.items {
        y_true.push(item.label);
        y_pred.push(model.predict(&item.features)?.label);
    }
    Ok((y_true, y_pred))
}
