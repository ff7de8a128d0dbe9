//! Gradient-boosted decision trees for binary classification with logistic
//! loss. Trees are grown greedily over histogram bin indices; leaf values
//! are Newton steps `-Σg / (Σh + λ)`, and the ensemble margin is
//! `base_score + learning_rate · Σ leaf values`.
//!
//! Training is deliberately single-threaded and accumulates in row order so
//! that identical inputs produce bit-identical models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedMatrix, FittedEncoders, RawValue};
use crate::error::{Error, Result};

/// Version tag written into every model file.
pub const MODEL_FORMAT_VERSION: &str = "tavernboost-model-v1";

/// Depth of the whole-cohort model used for importance attribution; deeper
/// than the default classifier so interactions surface.
pub const DEEP_MODEL_MAX_DEPTH: usize = 8;

/// Probability clamp for the base score of single-class (or near) data.
const BASE_SCORE_EPSILON: f64 = 1e-6;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_regularization: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> TrainParams {
        TrainParams {
            iterations: 500,
            learning_rate: 0.05,
            max_depth: 4,
            min_samples_leaf: 1,
            l2_leaf_regularization: 3.0,
            seed: 16017,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.l2_leaf_regularization >= 0.0) {
            return Err(Error::Config(format!(
                "l2_leaf_regularization must be nonnegative, got {}",
                self.l2_leaf_regularization
            )));
        }
        Ok(())
    }
}

/// One tree node. `cover` is the number of training rows that reached the
/// node; internal nodes carry it too because attribution needs the split of
/// mass between children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        /// Rows go left iff their bin index is ≤ this threshold. The
        /// reserved missing bin 0 therefore always goes left.
        threshold: u16,
        left: usize,
        right: usize,
        cover: u32,
    },
    Leaf {
        value: f64,
        cover: u32,
    },
}

impl Node {
    pub fn cover(&self) -> u32 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// A decision tree stored as a node array; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value this row routes to.
    pub fn predict(&self, row: &[u16]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Leaf value for a row stored in a column-major matrix.
    pub fn predict_in_matrix(&self, matrix: &EncodedMatrix, row: usize) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if matrix.bin(feature, row) <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, cover } => Some((value, cover)),
            _ => None,
        })
    }

    /// Highest feature id referenced by any split, if the tree has one.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split { feature, .. } => Some(feature),
                _ => None,
            })
            .max()
    }
}

/// The boosted ensemble: margin(x) = base_score + learning_rate · Σ trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    /// Set when the training labels were a single class; the ensemble then
    /// holds no trees and predicts the clamped base rate.
    pub single_class_warning: bool,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn predict_margin(&self, row: &[u16]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::Domain(format!(
                "row has {} features, ensemble expects {}",
                row.len(),
                self.n_features
            )));
        }
        Ok(self.margin_unchecked(row))
    }

    fn margin_unchecked(&self, row: &[u16]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_proba(&self, row: &[u16]) -> Result<f64> {
        Ok(sigmoid(self.predict_margin(row)?))
    }

    /// Margins for every row of a matrix (no per-row arity check; the
    /// matrix either has the features or indexing is a bug).
    pub fn margins(&self, matrix: &EncodedMatrix) -> Vec<f64> {
        let mut out = vec![self.base_score; matrix.n_rows()];
        for tree in &self.trees {
            for (row, m) in out.iter_mut().enumerate() {
                *m += self.learning_rate * tree.predict_in_matrix(matrix, row);
            }
        }
        out
    }

    pub fn probabilities(&self, matrix: &EncodedMatrix) -> Vec<f64> {
        self.margins(matrix).into_iter().map(sigmoid).collect()
    }
}

pub fn sigmoid(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// Mean logistic loss of margins against binary labels, computed with the
/// stable softplus form.
pub fn mean_logistic_loss(margins: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(margins.len(), labels.len());
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| if y == 1 { softplus(-m) } else { softplus(m) })
        .sum();
    total / margins.len() as f64
}

/// Best histogram split of `rows`: maximizes
/// `G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)` over every
/// feature and bin threshold. Returns `None` when no candidate has positive
/// gain or every candidate would leave a child below `min_samples_leaf`.
/// Ties go to the lowest feature id, then the lowest threshold.
pub fn best_split(
    rows: &[usize],
    matrix: &EncodedMatrix,
    gradients: &[f64],
    hessians: &[f64],
    params: &TrainParams,
) -> Option<(usize, u16, f64)> {
    let lambda = params.l2_leaf_regularization;
    let mut total_g = 0.0;
    let mut total_h = 0.0;
    for &r in rows {
        total_g += gradients[r];
        total_h += hessians[r];
    }
    let parent_score = total_g * total_g / (total_h + lambda);

    let mut best: Option<(usize, u16, f64)> = None;
    for feature in 0..matrix.n_features() {
        let bins = matrix.feature(feature);
        let max_bin = rows.iter().map(|&r| bins[r]).max().unwrap_or(0) as usize;
        if max_bin == 0 {
            continue;
        }
        let mut hist_g = vec![0.0; max_bin + 1];
        let mut hist_h = vec![0.0; max_bin + 1];
        let mut hist_n = vec![0usize; max_bin + 1];
        for &r in rows {
            let b = bins[r] as usize;
            hist_g[b] += gradients[r];
            hist_h[b] += hessians[r];
            hist_n[b] += 1;
        }
        let mut left_g = 0.0;
        let mut left_h = 0.0;
        let mut left_n = 0usize;
        for threshold in 0..max_bin {
            left_g += hist_g[threshold];
            left_h += hist_h[threshold];
            left_n += hist_n[threshold];
            let right_n = rows.len() - left_n;
            if left_n < params.min_samples_leaf.max(1) || right_n < params.min_samples_leaf.max(1) {
                continue;
            }
            let right_g = total_g - left_g;
            let right_h = total_h - left_h;
            let gain = left_g * left_g / (left_h + lambda) + right_g * right_g / (right_h + lambda)
                - parent_score;
            if gain > best.map_or(0.0, |(_, _, g)| g) {
                best = Some((feature, threshold as u16, gain));
            }
        }
    }
    best
}

/// Grow one tree on the given loss statistics by greedy depth-first splits.
pub fn grow_tree(
    gradients: &[f64],
    hessians: &[f64],
    matrix: &EncodedMatrix,
    params: &TrainParams,
) -> Tree {
    assert_eq!(gradients.len(), matrix.n_rows());
    assert_eq!(hessians.len(), matrix.n_rows());
    let rows: Vec<usize> = (0..matrix.n_rows()).collect();
    let mut nodes = Vec::new();
    grow_node(&mut nodes, rows, 0, gradients, hessians, matrix, params);
    Tree { nodes }
}

fn grow_node(
    nodes: &mut Vec<Node>,
    rows: Vec<usize>,
    depth: usize,
    gradients: &[f64],
    hessians: &[f64],
    matrix: &EncodedMatrix,
    params: &TrainParams,
) -> usize {
    if depth < params.max_depth {
        if let Some((feature, threshold, _gain)) =
            best_split(&rows, matrix, gradients, hessians, params)
        {
            let bins = matrix.feature(feature);
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| bins[r] <= threshold);
            let cover = rows.len() as u32;
            let idx = nodes.len();
            nodes.push(Node::Leaf { value: 0.0, cover }); // reserved, patched below
            let left = grow_node(
                nodes,
                left_rows,
                depth + 1,
                gradients,
                hessians,
                matrix,
                params,
            );
            let right = grow_node(
                nodes,
                right_rows,
                depth + 1,
                gradients,
                hessians,
                matrix,
                params,
            );
            nodes[idx] = Node::Split {
                feature,
                threshold,
                left,
                right,
                cover,
            };
            return idx;
        }
    }
    let mut sum_g = 0.0;
    let mut sum_h = 0.0;
    for &r in &rows {
        sum_g += gradients[r];
        sum_h += hessians[r];
    }
    let value = -sum_g / (sum_h + params.l2_leaf_regularization);
    let idx = nodes.len();
    nodes.push(Node::Leaf {
        value,
        cover: rows.len() as u32,
    });
    idx
}

/// Fit a boosted ensemble with logistic loss. The base score is the clamped
/// log-odds of the label mean; single-class data yields a tree-free
/// ensemble with `single_class_warning` set.
pub fn fit_ensemble(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &TrainParams,
) -> Result<Ensemble> {
    params.validate()?;
    if matrix.n_rows() != labels.len() {
        return Err(Error::Config(format!(
            "matrix has {} rows but {} labels were given",
            matrix.n_rows(),
            labels.len()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 rows, got {}",
            labels.len()
        )));
    }
    let n = labels.len();
    let mean = labels.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
    let p = mean.clamp(BASE_SCORE_EPSILON, 1.0 - BASE_SCORE_EPSILON);
    let base_score = (p / (1.0 - p)).ln();
    let single_class = labels.iter().all(|&l| l == labels[0]);
    let mut ensemble = Ensemble {
        base_score,
        learning_rate: params.learning_rate,
        n_features: matrix.n_features(),
        single_class_warning: single_class,
        trees: Vec::new(),
    };
    if single_class {
        return Ok(ensemble);
    }

    let mut margins = vec![base_score; n];
    let mut gradients = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    for _ in 0..params.iterations {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            gradients[i] = p - labels[i] as f64;
            hessians[i] = p * (1.0 - p);
        }
        let tree = grow_tree(&gradients, &hessians, matrix, params);
        for (row, m) in margins.iter_mut().enumerate() {
            *m += params.learning_rate * tree.predict_in_matrix(matrix, row);
        }
        ensemble.trees.push(tree);
    }
    Ok(ensemble)
}

/// A trained model with everything scoring needs: the ensemble, the fitted
/// encoders and the parameters it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub version: String,
    pub params: TrainParams,
    pub encoders: FittedEncoders,
    pub ensemble: Ensemble,
}

impl Model {
    pub fn new(ensemble: Ensemble, encoders: FittedEncoders, params: TrainParams) -> Model {
        Model {
            version: MODEL_FORMAT_VERSION.to_string(),
            params,
            encoders,
            ensemble,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.encoders.feature_names
    }

    /// Margin for one raw row given in model feature order.
    pub fn margin_for_cells(&self, cells: &[RawValue]) -> Result<f64> {
        let row = self.encoders.encode_row(cells)?;
        self.ensemble.predict_margin(&row)
    }

    /// Event probability for one raw row given in model feature order.
    pub fn proba_for_cells(&self, cells: &[RawValue]) -> Result<f64> {
        Ok(sigmoid(self.margin_for_cells(cells)?))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        let model: Model = serde_json::from_str(&text)?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model version '{}', expected '{}'",
                model.version, MODEL_FORMAT_VERSION
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(features: Vec<Vec<u16>>) -> EncodedMatrix {
        EncodedMatrix::from_columns(features)
    }

    fn params(iterations: usize, lr: f64, depth: usize, lambda: f64) -> TrainParams {
        TrainParams {
            iterations,
            learning_rate: lr,
            max_depth: depth,
            min_samples_leaf: 1,
            l2_leaf_regularization: lambda,
            seed: 0,
        }
    }

    #[test]
    fn defaults_are_the_documented_ones() {
        let p = TrainParams::default();
        assert_eq!(p.iterations, 500);
        assert_eq!(p.learning_rate, 0.05);
        assert_eq!(p.max_depth, 4);
        assert_eq!(p.min_samples_leaf, 1);
        assert_eq!(p.l2_leaf_regularization, 3.0);
        p.validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = TrainParams::default();
        p.iterations = 0;
        assert!(p.validate().is_err());
        let mut p = TrainParams::default();
        p.learning_rate = 1.5;
        assert!(p.validate().is_err());
        let mut p = TrainParams::default();
        p.max_depth = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn homogeneous_gradients_have_no_split() {
        let m = matrix(vec![vec![1, 1, 2, 2]]);
        let g = vec![0.5; 4];
        let h = vec![0.25; 4];
        assert_eq!(
            best_split(&[0, 1, 2, 3], &m, &g, &h, &params(1, 0.5, 2, 0.0)),
            None
        );
    }

    #[test]
    fn two_bin_split_gain_and_newton_leaves() {
        // Perfect separation: gradients (−1,−1,+1,+1) over bins (1,1,2,2),
        // hessians 0.25, λ=0. Hand evaluation: G_L=−2, H_L=0.5, G_R=2,
        // H_R=0.5 → gain 16.0, Newton leaves −(−2)/0.5 = +4 and −2/0.5 = −4.
        let m = matrix(vec![vec![1, 1, 2, 2]]);
        let g = vec![-1.0, -1.0, 1.0, 1.0];
        let h = vec![0.25; 4];
        let p = params(1, 0.5, 1, 0.0);
        let (feature, threshold, gain) = best_split(&[0, 1, 2, 3], &m, &g, &h, &p).unwrap();
        assert_eq!((feature, threshold), (0, 1));
        assert_eq!(gain, 16.0);

        let tree = grow_tree(&g, &h, &m, &p);
        let leaves: Vec<(f64, u32)> = tree.leaves().collect();
        assert_eq!(leaves, vec![(4.0, 2), (-4.0, 2)]);
    }

    #[test]
    fn tie_breaks_choose_lowest_feature_then_threshold() {
        // Two identical features → identical best gain; feature 0 must win.
        let m = matrix(vec![vec![1, 1, 2, 2], vec![1, 1, 2, 2]]);
        let g = vec![-1.0, -1.0, 1.0, 1.0];
        let h = vec![0.25; 4];
        let (feature, threshold, _) =
            best_split(&[0, 1, 2, 3], &m, &g, &h, &params(1, 0.5, 1, 0.0)).unwrap();
        assert_eq!((feature, threshold), (0, 1));
    }

    #[test]
    fn min_samples_leaf_blocks_lonely_children() {
        // Only a 1-vs-3 split would help; min_samples_leaf 2 forbids it.
        let m = matrix(vec![vec![1, 2, 2, 2]]);
        let g = vec![-1.0, 1.0, 1.0, 1.0];
        let h = vec![0.25; 4];
        let mut p = params(1, 0.5, 2, 0.0);
        p.min_samples_leaf = 2;
        assert_eq!(best_split(&[0, 1, 2, 3], &m, &g, &h, &p), None);
        let tree = grow_tree(&g, &h, &m, &p);
        assert_eq!(tree.nodes.len(), 1, "root stays a leaf");
    }

    #[test]
    fn depth_cap_limits_to_one_split() {
        let m = matrix(vec![vec![1, 1, 2, 2], vec![1, 2, 1, 2]]);
        let g = vec![-1.0, -0.5, 0.5, 1.0];
        let h = vec![0.25; 4];
        let tree = grow_tree(&g, &h, &m, &params(1, 0.5, 1, 0.0));
        let splits = tree
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count();
        assert!(splits <= 1);
    }

    #[test]
    fn missing_bin_routes_left() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0,
                    left: 1,
                    right: 2,
                    cover: 4,
                },
                Node::Leaf {
                    value: -1.0,
                    cover: 2,
                },
                Node::Leaf {
                    value: 1.0,
                    cover: 2,
                },
            ],
        };
        assert_eq!(
            tree.predict(&[0]),
            -1.0,
            "missing bin 0 satisfies ≤ threshold"
        );
        assert_eq!(tree.predict(&[1]), 1.0);
    }

    #[test]
    fn single_class_yields_tree_free_warning_ensemble() {
        let m = matrix(vec![vec![1, 2, 1, 2]]);
        let ens = fit_ensemble(&m, &[0, 0, 0, 0], &params(50, 0.5, 2, 0.0)).unwrap();
        assert!(ens.single_class_warning);
        assert!(ens.trees.is_empty());
        let eps = 1e-6_f64;
        let expected = (eps / (1.0 - eps)).ln();
        assert!((ens.base_score - expected).abs() < 1e-12);
        assert!(ens.predict_proba(&[1]).unwrap() < 1e-5);
    }

    #[test]
    fn base_score_matches_class_ratio() {
        // 30 events among 270 rows → log(0.125) ≈ −2.0794.
        let mut labels = vec![0u8; 240];
        labels.extend(vec![1u8; 30]);
        let bins: Vec<u16> = (0..270).map(|i| (i % 7 + 1) as u16).collect();
        let ens = fit_ensemble(&matrix(vec![bins]), &labels, &params(1, 0.05, 1, 3.0)).unwrap();
        assert!((ens.base_score - (-2.0794)).abs() < 1e-4);
        // A tree-free counterpart inverts exactly to the class rate.
        let bare = Ensemble {
            base_score: ens.base_score,
            learning_rate: 0.05,
            n_features: 1,
            single_class_warning: false,
            trees: Vec::new(),
        };
        assert!((bare.predict_proba(&[1]).unwrap() - 30.0 / 270.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_xor_has_no_positive_gain_split() {
        // The perfectly balanced XOR gives every root candidate exactly
        // zero gain, so greedy growth (which requires positive gain) never
        // splits and every boosting round emits a zero-valued stump.
        let m = matrix(vec![vec![1, 1, 2, 2], vec![1, 2, 1, 2]]);
        let labels = [0u8, 1, 1, 0];
        let ens = fit_ensemble(&m, &labels, &params(50, 0.5, 2, 0.0)).unwrap();
        assert!(ens.trees.iter().all(|t| t.nodes.len() == 1));
        for row in 0..4 {
            let margin = ens.predict_margin(&m.row(row)).unwrap();
            assert_eq!(margin, 0.0);
        }
    }

    #[test]
    fn asymmetric_xor_is_fit_perfectly_at_depth_two() {
        // Duplicating one XOR corner breaks the gain symmetry; a depth-2
        // tree then separates all four corners and boosting drives every
        // margin to the correct sign (training accuracy 1.0).
        let m = matrix(vec![vec![1, 1, 2, 2, 1], vec![1, 2, 1, 2, 1]]);
        let labels = [0u8, 1, 1, 0, 0];
        let ens = fit_ensemble(&m, &labels, &params(60, 0.5, 2, 0.0)).unwrap();
        match ens.trees[0].nodes[0] {
            Node::Split { feature, .. } => assert_eq!(feature, 0, "tie goes to feature 0"),
            _ => panic!("first tree must split"),
        }
        for (row, &label) in labels.iter().enumerate() {
            let margin = ens.predict_margin(&m.row(row)).unwrap();
            assert_eq!(margin > 0.0, label == 1, "row {row} margin {margin}");
        }
    }

    #[test]
    fn training_loss_is_monotone() {
        // Re-run the boosting loop step by step and check the mean logistic
        // loss never increases.
        let f0: Vec<u16> = (0..40).map(|i| (i % 5 + 1) as u16).collect();
        let f1: Vec<u16> = (0..40).map(|i| (i / 5 % 3 + 1) as u16).collect();
        let labels: Vec<u8> = (0..40).map(|i| ((i % 5 + i / 7) % 2) as u8).collect();
        let m = matrix(vec![f0, f1]);
        let p = params(60, 0.3, 3, 1.0);
        let ens = fit_ensemble(&m, &labels, &p).unwrap();

        let mut margins = vec![ens.base_score; labels.len()];
        let mut last = mean_logistic_loss(&margins, &labels);
        for tree in &ens.trees {
            for (row, mg) in margins.iter_mut().enumerate() {
                *mg += p.learning_rate * tree.predict_in_matrix(&m, row);
            }
            let loss = mean_logistic_loss(&margins, &labels);
            assert!(loss <= last + 1e-12, "loss rose from {last} to {loss}");
            last = loss;
        }
    }

    #[test]
    fn leaf_covers_sum_to_training_rows() {
        let f0: Vec<u16> = (0..33).map(|i| (i % 6 + 1) as u16).collect();
        let labels: Vec<u8> = (0..33).map(|i| (i % 3 == 0) as u8).collect();
        let ens = fit_ensemble(&matrix(vec![f0]), &labels, &params(10, 0.2, 3, 0.5)).unwrap();
        for tree in &ens.trees {
            let total: u32 = tree.leaves().map(|(_, c)| c).sum();
            assert_eq!(total, 33);
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let f0: Vec<u16> = (0..50).map(|i| (i % 9 + 1) as u16).collect();
        let f1: Vec<u16> = (0..50).map(|i| (i * 7 % 4 + 1) as u16).collect();
        let labels: Vec<u8> = (0..50).map(|i| (i % 4 == 1) as u8).collect();
        let m = matrix(vec![f0, f1]);
        let p = params(30, 0.1, 4, 2.0);
        let a = fit_ensemble(&m, &labels, &p).unwrap();
        let b = fit_ensemble(&m, &labels, &p).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn margin_agrees_with_proba_threshold() {
        let f0: Vec<u16> = (0..20).map(|i| (i % 3 + 1) as u16).collect();
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let m = matrix(vec![f0]);
        let ens = fit_ensemble(&m, &labels, &params(15, 0.4, 2, 0.1)).unwrap();
        for row in 0..20 {
            let margin = ens.predict_margin(&m.row(row)).unwrap();
            let proba = ens.predict_proba(&m.row(row)).unwrap();
            assert_eq!(proba > 0.5, margin > 0.0);
        }
    }

    #[test]
    fn extreme_margins_saturate_without_overflow() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(1000.0) > 1.0 - 1e-12);
        assert!(sigmoid(1000.0).is_finite());
        assert!(sigmoid(-1000.0) >= 0.0);
        assert!(sigmoid(-1000.0) < 1e-12);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let ens = Ensemble {
            base_score: 0.0,
            learning_rate: 0.1,
            n_features: 2,
            single_class_warning: false,
            trees: Vec::new(),
        };
        assert!(ens.predict_margin(&[1]).is_err());
        assert!(ens.predict_margin(&[1, 2]).is_ok());
    }

    #[test]
    fn model_json_round_trip_preserves_margins() {
        use crate::dataset::{Column, Dataset};
        use crate::schema::{FeatureKind, FeatureSchema};

        let num = Column::numeric(
            FeatureSchema::new("X", FeatureKind::Numerical),
            (0..30).map(|i| Some(i as f64 * 0.37)).collect(),
        );
        let cat = Column::text(
            FeatureSchema::new("C", FeatureKind::Categorical),
            (0..30)
                .map(|i| {
                    if i % 7 == 0 {
                        None
                    } else {
                        Some(["a", "b", "c"][i % 3].to_string())
                    }
                })
                .collect(),
        );
        let labels: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        let ds = Dataset::new(vec![num, cat], labels.clone(), "Y").unwrap();
        let rows: Vec<usize> = (0..30).collect();
        let encoders = FittedEncoders::fit(&ds, &rows, 255).unwrap();
        let encoded = encoders.encode(&ds).unwrap();
        let p = params(25, 0.2, 3, 1.0);
        let ensemble = fit_ensemble(&encoded, &labels, &p).unwrap();
        let model = Model::new(ensemble, encoders, p);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, model);
        for row in 0..30 {
            let a = model.ensemble.predict_margin(&encoded.row(row)).unwrap();
            let b = back.ensemble.predict_margin(&encoded.row(row)).unwrap();
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn wrong_version_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = Model::new(
            Ensemble {
                base_score: 0.0,
                learning_rate: 0.1,
                n_features: 0,
                single_class_warning: false,
                trees: Vec::new(),
            },
            FittedEncoders {
                feature_names: Vec::new(),
                encoders: Vec::new(),
            },
            TrainParams::default(),
        );
        let mut json = serde_json::to_value(&m).unwrap();
        json["version"] = serde_json::Value::String("tavernboost-model-v0".into());
        std::fs::write(&path, serde_json::to_string(&json).unwrap()).unwrap();
        assert!(Model::load(&path).is_err());
    }
}
