//! Grid search over tree/forest hyperparameters with stratified
//! cross-validation. Training folds are oversampled; validation folds are
//! never touched.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, ForestParams};
use super::tree::fit_tree;
use super::TreeParams;
use crate::dataset::{fold_split, oversample, stratified_kfold, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{confusion, metrics};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tree,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    MacroF1,
    Accuracy,
}

/// Candidate values per hyperparameter. `None` entries mean "unlimited".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParamGrid {
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<Option<usize>>,
    pub min_samples_split: Vec<usize>,
    pub max_leaf_nodes: Vec<Option<usize>>,
    /// Forest size candidates; ignored for plain trees.
    pub n_trees: Vec<usize>,
    pub k: usize,
    pub metric: ScoreMetric,
}

impl Default for HyperParamGrid {
    fn default() -> Self {
        HyperParamGrid {
            max_depth: vec![None],
            max_features: vec![None],
            min_samples_split: vec![2],
            max_leaf_nodes: vec![None],
            n_trees: vec![100],
            k: 5,
            metric: ScoreMetric::MacroF1,
        }
    }
}

/// One fully-specified candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub tree: TreeParams,
    pub n_trees: usize,
}

impl GridPoint {
    /// Tuple ordering key: (max_depth, max_features, min_samples_split,
    /// max_leaf_nodes, n_trees), with `None` sorting last as "unlimited".
    fn order_key(&self) -> (usize, usize, usize, usize, usize) {
        let unl = |v: Option<usize>| v.unwrap_or(usize::MAX);
        (
            unl(self.tree.max_depth),
            unl(self.tree.max_features),
            self.tree.min_samples_split,
            unl(self.tree.max_leaf_nodes),
            self.n_trees,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub point: GridPoint,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub table: Vec<GridRow>,
    pub metric: ScoreMetric,
}

fn sorted_options(values: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut v = values.to_vec();
    v.sort_by_key(|x| x.unwrap_or(usize::MAX));
    v.dedup();
    v
}

fn sorted_plain(values: &[usize]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Enumerate the cartesian product in ascending tuple order, so the first
/// row with the maximal mean is also the lexicographically smallest tie.
fn enumerate_points(grid: &HyperParamGrid, kind: ModelKind) -> Result<Vec<GridPoint>> {
    if grid.max_depth.is_empty()
        || grid.max_features.is_empty()
        || grid.min_samples_split.is_empty()
        || grid.max_leaf_nodes.is_empty()
        || (kind == ModelKind::Forest && grid.n_trees.is_empty())
    {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let n_trees = match kind {
        ModelKind::Tree => vec![1],
        ModelKind::Forest => sorted_plain(&grid.n_trees),
    };
    let mut points = Vec::new();
    for &max_depth in &sorted_options(&grid.max_depth) {
        for &max_features in &sorted_options(&grid.max_features) {
            for &min_samples_split in &sorted_plain(&grid.min_samples_split) {
                for &max_leaf_nodes in &sorted_options(&grid.max_leaf_nodes) {
                    for &n in &n_trees {
                        points.push(GridPoint {
                            tree: TreeParams {
                                max_depth,
                                max_features,
                                min_samples_split,
                                max_leaf_nodes,
                            },
                            n_trees: n,
                        });
                    }
                }
            }
        }
    }
    Ok(points)
}

fn score_fold(
    dataset: &LabeledDataset,
    folds: &[Vec<usize>],
    fold: usize,
    point: &GridPoint,
    kind: ModelKind,
    metric: ScoreMetric,
    seed: u64,
) -> Result<f64> {
    let (train, val) = fold_split(dataset, folds, fold);
    let train = oversample(&train, derive_seed(seed, 0x05a0 + fold as u64))?;
    let fit_seed = derive_seed(seed, 0xf17 + fold as u64);

    let mut y_pred = Vec::with_capacity(val.len());
    match kind {
        ModelKind::Tree => {
            let model = fit_tree(&train, &point.tree, fit_seed)?;
            for item in &val.items {
                y_pred.push(model.predict(&item.features)?.label);
            }
        }
        ModelKind::Forest => {
            let params = ForestParams { n_trees: point.n_trees, bootstrap: true, tree: point.tree.clone() };
            let model = fit_forest(&train, &params, fit_seed)?;
            for item in &val.items {
                y_pred.push(model.predict(&item.features)?.label);
            }
        }
    }
    let y_true: Vec<usize> = val.items.iter().map(|i| i.label).collect();
    let report = metrics(&confusion(&y_true, &y_pred, &val.class_names)?);
    Ok(match metric {
        ScoreMetric::MacroF1 => report.macro_f1,
        ScoreMetric::Accuracy => report.accuracy,
    })
}

/// Evaluate every grid point with k-fold stratified cross-validation and
/// return the full table plus the best point (highest mean score, ties to
/// the lexicographically smallest tuple). Points run in parallel with
/// derived seeds, so results do not depend on scheduling.
pub fn grid_search(
    dataset: &LabeledDataset,
    grid: &HyperParamGrid,
    kind: ModelKind,
    seed: u64,
) -> Result<GridSearchResult> {
    let points = enumerate_points(grid, kind)?;
    let folds = stratified_kfold(dataset, grid.k, derive_seed(seed, 0xcf01d))?;

    let table: Result<Vec<GridRow>> = points
        .into_par_iter()
        .enumerate()
        .map(|(pi, point)| {
            let point_seed = derive_seed(seed, 0x9000 + pi as u64);
            let mut fold_scores = Vec::with_capacity(grid.k);
            for fold in 0..grid.k {
                fold_scores.push(score_fold(
                    dataset,
                    &folds,
                    fold,
                    &point,
                    kind,
                    grid.metric,
                    point_seed,
                )?);
            }
            let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            Ok(GridRow { point, fold_scores, mean_score })
        })
        .collect();
    let table = table?;
    debug_assert!(
        table.windows(2).all(|w| w[0].point.order_key() <= w[1].point.order_key()),
        "grid enumeration must be ascending so tie-breaking stays lexicographic"
    );

    let mut best_idx = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        if row.mean_score > table[best_idx].mean_score {
            best_idx = i;
        }
    }
    Ok(GridSearchResult {
        best: table[best_idx].point.clone(),
        table,
        metric: grid.metric,
    })
}

/// Export the CV table as CSV, one row per grid point.
pub fn write_grid_csv(path: &std::path::Path, result: &GridSearchResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    let mut header = vec![
        "max_depth".to_string(),
        "max_features".to_string(),
        "min_samples_split".to_string(),
        "max_leaf_nodes".to_string(),
        "n_trees".to_string(),
    ];
    let k = result.table.first().map_or(0, |r| r.fold_scores.len());
    header.extend((0..k).map(|i| format!("fold{i}")));
    header.push("mean".to_string());
    w.write_record(&header).map_err(|e| Error::invalid(e.to_string()))?;
    let fmt_opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    for row in &result.table {
        let mut record = vec![
            fmt_opt(row.point.tree.max_depth),
            fmt_opt(row.point.tree.max_features),
            row.point.tree.min_samples_split.to_string(),
            fmt_opt(row.point.tree.max_leaf_nodes),
            row.point.n_trees.to_string(),
        ];
        record.extend(row.fold_scores.iter().map(|s| format!("{s:.6}")));
        record.push(format!("{:.6}", row.mean_score));
        w.write_record(&record).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetItem;
    use crate::textfeat::SparseVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic_dataset(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<DatasetItem> = (0..n)
            .map(|i| {
                let class = i % 3;
                let mut row = vec![0.0; 5];
                // Class-indicative column plus noise.
                row[class] = rng.gen_range(1.0..3.0_f64).floor();
                row[3] = rng.gen_range(0.0..2.0_f64).floor();
                row[4] = rng.gen_range(0.0..2.0_f64).floor();
                DatasetItem {
                    thread_id: format!("t{i:03}"),
                    features: SparseVector::from_dense(&row),
                    label: class,
                }
            })
            .collect();
        LabeledDataset::new(items, 5, vec!["A".into(), "B".into(), "C".into()]).unwrap()
    }

    fn single_point_grid() -> HyperParamGrid {
        HyperParamGrid {
            max_depth: vec![Some(4)],
            max_features: vec![None],
            min_samples_split: vec![2],
            max_leaf_nodes: vec![None],
            n_trees: vec![5],
            k: 3,
            metric: ScoreMetric::MacroF1,
        }
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let ds = synthetic_dataset(60, 1);
        let result = grid_search(&ds, &single_point_grid(), ModelKind::Tree, 9).unwrap();
        assert_eq!(result.table.len(), 1);
        assert_eq!(result.best, result.table[0].point);
        assert_eq!(result.table[0].fold_scores.len(), 3);
        let mean = result.table[0].fold_scores.iter().sum::<f64>() / 3.0;
        assert!((result.table[0].mean_score - mean).abs() < 1e-12);
    }

    #[test]
    fn dominating_point_is_selected() {
        let ds = synthetic_dataset(90, 2);
        // Depth 1 cannot separate 3 classes on distinct columns; unlimited can.
        let grid = HyperParamGrid {
            max_depth: vec![Some(1), None],
            ..single_point_grid()
        };
        let result = grid_search(&ds, &grid, ModelKind::Tree, 4).unwrap();
        assert_eq!(result.table.len(), 2);
        assert!(result.table[1].mean_score > result.table[0].mean_score);
        assert_eq!(result.best.tree.max_depth, None);
    }

    #[test]
    fn table_matches_exhaustive_recompute() {
        let ds = synthetic_dataset(60, 3);
        let grid = HyperParamGrid {
            max_depth: vec![Some(2), Some(6)],
            min_samples_split: vec![2, 4],
            k: 3,
            ..single_point_grid()
        };
        let seed = 31;
        let result = grid_search(&ds, &grid, ModelKind::Tree, seed).unwrap();
        assert_eq!(result.table.len(), 4);

        // Brute-force loop over (point, fold) pairs with the same seeds.
        let folds = stratified_kfold(&ds, 3, derive_seed(seed, 0xcf01d)).unwrap();
        for (pi, row) in result.table.iter().enumerate() {
            let point_seed = derive_seed(seed, 0x9000 + pi as u64);
            for fold in 0..3 {
                let expect = score_fold(
                    &ds,
                    &folds,
                    fold,
                    &row.point,
                    ModelKind::Tree,
                    ScoreMetric::MacroF1,
                    point_seed,
                )
                .unwrap();
                assert_eq!(row.fold_scores[fold], expect);
            }
        }
    }

    #[test]
    fn ties_break_toward_smallest_tuple() {
        // A dataset every configuration classifies perfectly.
        let ds = synthetic_dataset(30, 4);
        let grid = HyperParamGrid {
            max_depth: vec![None, Some(8), Some(4)],
            ..single_point_grid()
        };
        let result = grid_search(&ds, &grid, ModelKind::Forest, 11).unwrap();
        let all_equal = result
            .table
            .iter()
            .all(|r| (r.mean_score - result.table[0].mean_score).abs() < 1e-12);
        if all_equal {
            assert_eq!(result.best.tree.max_depth, Some(4));
        }
        // Enumeration order is ascending tuple order regardless.
        assert_eq!(result.table[0].point.tree.max_depth, Some(4));
        assert_eq!(result.table[2].point.tree.max_depth, None);
    }

    #[test]
    fn empty_grid_is_error() {
        let ds = synthetic_dataset(30, 5);
        let grid = HyperParamGrid { max_depth: vec![], ..single_point_grid() };
        assert!(grid_search(&ds, &grid, ModelKind::Tree, 1).is_err());
    }

    #[test]
    fn grid_search_replays_identically() {
        let ds = synthetic_dataset(60, 6);
        let grid = HyperParamGrid {
            max_depth: vec![Some(3), None],
            n_trees: vec![4],
            ..single_point_grid()
        };
        let a = grid_search(&ds, &grid, ModelKind::Forest, 8).unwrap();
        let b = grid_search(&ds, &grid, ModelKind::Forest, 8).unwrap();
        assert_eq!(
            serde_json::to_string(&a.table).unwrap(),
            serde_json::to_string(&b.table).unwrap()
        );
    }
}
