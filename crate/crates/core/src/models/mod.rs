//! From-scratch decision trees and random forests with grid search and
//! interpretable rule export.

mod forest;
mod grid;
mod persist;
mod tree;

pub use forest::{fit_forest, ForestModel, ForestParams};
pub use grid::{
    grid_search, write_grid_csv, GridPoint, GridRow, GridSearchResult, HyperParamGrid, ModelKind,
    ScoreMetric,
};
pub use persist::{
    deserialize_model, serialize_model, ClassifierModel, FeatureSpace, PersistedModel,
    MODEL_SCHEMA_VERSION,
};
pub use tree::{export_rules, fit_tree, DecisionTreeModel, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gini impurity `1 - Σ (c_i / n)²` of a class count vector.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("gini impurity of an empty node is undefined"));
    }
    let n = total as f64;
    let sum_sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum();
    Ok(1.0 - sum_sq)
}

/// Split-growth hyperparameters. `None` means unlimited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_leaf_nodes: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
            max_leaf_nodes: None,
        }
    }
}

/// Predicted label with the full class distribution behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

/// Argmax with ties broken by the fixed class order (lowest index).
pub(crate) fn argmax_label(probabilities: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate().skip(1) {
        if *p > probabilities[best] {
            best = i;
        }
    }
    best
}
