//! Pipeline configuration: a single TOML file, overridable by CLI flags.
//! Paths inside the file resolve relative to the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cvemine::corpus::CorpusFormat;
use cvemine::models::{HyperParamGrid, ModelKind, ScoreMetric, TreeParams};
use cvemine::textfeat::{EmbeddingParams, VocabParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Featurization {
    Bow,
    Tfidf,
    Doc2vec,
}

impl Featurization {
    pub fn name(&self) -> &'static str {
        match self {
            Featurization::Bow => "bow",
            Featurization::Tfidf => "tfidf",
            Featurization::Doc2vec => "doc2vec",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabSection {
    pub max_vocab: usize,
    pub min_count: u64,
    pub max_doc_fraction: f64,
    pub ngram_min: usize,
    pub ngram_max: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        let p = VocabParams::default();
        VocabSection {
            max_vocab: p.max_vocab,
            min_count: p.min_count,
            max_doc_fraction: p.max_doc_fraction,
            ngram_min: p.ngram_min,
            ngram_max: p.ngram_max,
        }
    }
}

impl VocabSection {
    pub fn to_params(&self) -> VocabParams {
        VocabParams {
            max_vocab: self.max_vocab,
            min_count: self.min_count,
            max_doc_fraction: self.max_doc_fraction,
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_samples: usize,
    pub infer_epochs: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let p = EmbeddingParams::default();
        EmbeddingSection {
            dim: p.dim,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            negative_samples: p.negative_samples,
            infer_epochs: p.infer_epochs,
        }
    }
}

impl EmbeddingSection {
    pub fn to_params(&self, seed: u64) -> EmbeddingParams {
        EmbeddingParams {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negative_samples: self.negative_samples,
            min_count: 1,
            infer_epochs: self.infer_epochs,
            seed,
        }
    }
}

/// Grid candidates; `0` means "unlimited" for the capped parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub max_depth: Vec<usize>,
    pub max_features: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub max_leaf_nodes: Vec<usize>,
    pub n_trees: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            max_depth: vec![16, 0],
            max_features: vec![0],
            min_samples_split: vec![2, 5],
            max_leaf_nodes: vec![0],
            n_trees: vec![100],
        }
    }
}

fn zero_is_none(values: &[usize]) -> Vec<Option<usize>> {
    values.iter().map(|&v| if v == 0 { None } else { Some(v) }).collect()
}

impl GridSection {
    pub fn to_grid(&self, k: usize, metric: ScoreMetric) -> HyperParamGrid {
        HyperParamGrid {
            max_depth: zero_is_none(&self.max_depth),
            max_features: zero_is_none(&self.max_features),
            min_samples_split: self.min_samples_split.clone(),
            max_leaf_nodes: zero_is_none(&self.max_leaf_nodes),
            n_trees: self.n_trees.clone(),
            k,
            metric,
        }
    }

    /// Fallback hyperparameters when grid search is disabled: the first
    /// candidate of each list.
    pub fn first_point(&self) -> Result<(TreeParams, usize)> {
        let first = |v: &[usize], name: &str| -> Result<usize> {
            v.first().copied().with_context(|| format!("grid.{name} is empty"))
        };
        let opt = |v: usize| if v == 0 { None } else { Some(v) };
        Ok((
            TreeParams {
                max_depth: opt(first(&self.max_depth, "max_depth")?),
                max_features: opt(first(&self.max_features, "max_features")?),
                min_samples_split: first(&self.min_samples_split, "min_samples_split")?,
                max_leaf_nodes: opt(first(&self.max_leaf_nodes, "max_leaf_nodes")?),
            },
            first(&self.n_trees, "n_trees")?,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub corpus_format: CorpusFormat,
    pub labels: PathBuf,
    pub nvd: PathBuf,
    pub epss: PathBuf,
    pub out_dir: PathBuf,
    pub price_overlay: Option<PathBuf>,
    pub delay_overlay: Option<PathBuf>,
    pub rule_table: Option<PathBuf>,
    pub featurization: Featurization,
    pub model: ModelKind,
    pub seed: u64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub run_grid_search: bool,
    pub scoring: ScoreMetric,
    pub alert_threshold: f64,
    pub strip_quoted_text: bool,
    pub top_k_keywords: usize,
    pub vocab: VocabSection,
    pub embedding: EmbeddingSection,
    pub grid: GridSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            corpus_format: CorpusFormat::Jsonl,
            labels: PathBuf::from("labels.csv"),
            nvd: PathBuf::from("nvd.jsonl"),
            epss: PathBuf::from("epss.csv"),
            out_dir: PathBuf::from("out"),
            price_overlay: None,
            delay_overlay: None,
            rule_table: None,
            featurization: Featurization::Tfidf,
            model: ModelKind::Forest,
            seed: 1162,
            test_fraction: 0.25,
            cv_folds: 5,
            run_grid_search: true,
            scoring: ScoreMetric::MacroF1,
            alert_threshold: 0.5,
            strip_quoted_text: false,
            top_k_keywords: 25,
            vocab: VocabSection::default(),
            embedding: EmbeddingSection::default(),
            grid: GridSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&raw).with_context(|| format!("bad config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.labels);
        fix(&mut self.nvd);
        fix(&mut self.epss);
        fix(&mut self.out_dir);
        for opt in [&mut self.price_overlay, &mut self.delay_overlay, &mut self.rule_table] {
            if let Some(p) = opt {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alert_threshold > 0.0 && self.alert_threshold <= 1.0) {
            bail!("alert_threshold {} outside (0,1]", self.alert_threshold);
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction {} outside (0,1)", self.test_fraction);
        }
        if self.cv_folds < 2 {
            bail!("cv_folds must be at least 2, got {}", self.cv_folds);
        }
        Ok(())
    }
}
