//! Exact per-row Shapley attributions for the tree ensemble, computed with
//! the path-dependent polynomial-time algorithm (cover-weighted conditional
//! expectations), plus the brute-force subset-enumeration oracle used to
//! test it, importance aggregation, thresholded feature selection and the
//! long-format summary export.
//!
//! Attributions live in margin (log-odds) space, where the efficiency
//! identity `base_value + Σφ = margin` is exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::encoding::EncodedMatrix;
use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, Node, Tree};

/// Sentinel feature id for the root element of an attribution path.
const NO_FEATURE: usize = usize::MAX;

/// Largest feature count the brute-force oracle will enumerate (2^m sets).
pub const BRUTE_FORCE_FEATURE_LIMIT: usize = 12;

/// Per-row attributions: one φ per feature plus the shared base value (the
/// cover-weighted expected margin of the ensemble).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapVector {
    pub base_value: f64,
    pub phi: Vec<f64>,
}

impl ShapVector {
    /// base_value + Σφ, which equals the row's margin up to float noise.
    pub fn reconstructed_margin(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>()
    }
}

/// Attributions for a whole cohort; rows share one base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    /// `values[row][feature]`.
    pub values: Vec<Vec<f64>>,
}

impl ShapMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// CSV with one row per patient and one φ column per feature.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["patient".to_string(), "base_value".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (row, phi) in self.values.iter().enumerate() {
            let mut record = vec![row.to_string(), format!("{}", self.base_value)];
            record.extend(phi.iter().map(|v| format!("{v}")));
            w.write_record(&record)?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
    }
}

/// Features ranked by mean absolute attribution, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    /// (feature name, mean |φ|), non-increasing.
    pub entries: Vec<(String, f64)>,
}

impl ImportanceRanking {
    pub fn max_importance(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.1)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "mean_abs_phi", "rank"])?;
        for (rank, (name, value)) in self.entries.iter().enumerate() {
            w.write_record([name.as_str(), &format!("{value}"), &(rank + 1).to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
    }
}

/// Outcome of thresholded selection. When no feature clears the threshold
/// the single top-ranked feature is kept and `fallback_warning` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    pub features: Vec<String>,
    pub fallback_warning: bool,
}

/// One row of the beeswarm-ready long-format summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub feature: String,
    pub patient: usize,
    pub phi: f64,
    /// Raw dataset value rendered as text; empty when missing.
    pub raw_value: String,
    pub missing: bool,
}

/// Cover-weighted expected margin of the ensemble over its training rows:
/// `base_score + learning_rate · Σ_t (Σ_leaves value·cover / Σ_leaves cover)`.
pub fn expected_value(ensemble: &Ensemble) -> Result<f64> {
    let mut total = 0.0;
    for tree in &ensemble.trees {
        let mut weighted = 0.0;
        let mut cover = 0.0;
        for (value, c) in tree.leaves() {
            weighted += value * c as f64;
            cover += c as f64;
        }
        if cover == 0.0 {
            return Err(Error::Domain("tree has zero total leaf cover".into()));
        }
        total += weighted / cover;
    }
    Ok(ensemble.base_score + ensemble.learning_rate * total)
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(
    path: &mut Vec<PathElement>,
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: usize,
) {
    path.truncate(unique_depth);
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    });
    let d = unique_depth as f64;
    for i in (0..unique_depth).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i as f64 + 1.0) / (d + 1.0);
        path[i].pweight = zero_fraction * path[i].pweight * (d - i as f64) / (d + 1.0);
    }
}

fn unwind_path(path: &mut Vec<PathElement>, unique_depth: usize, index: usize) {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[unique_depth].pweight;
    let d = unique_depth as f64;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (d + 1.0) / ((i as f64 + 1.0) * one_fraction);
            next_one = tmp - path[i].pweight * zero_fraction * (d - i as f64) / (d + 1.0);
        } else {
            path[i].pweight = path[i].pweight * (d + 1.0) / (zero_fraction * (d - i as f64));
        }
    }
    for i in index..unique_depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], unique_depth: usize, index: usize) -> f64 {
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[unique_depth].pweight;
    let d = unique_depth as f64;
    let mut total = 0.0;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next_one * (d + 1.0) / ((i as f64 + 1.0) * one_fraction);
            total += tmp;
            next_one = path[i].pweight - tmp * zero_fraction * (d - i as f64) / (d + 1.0);
        } else {
            total += path[i].pweight / (zero_fraction * (d - i as f64) / (d + 1.0));
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn tree_recurse(
    tree: &Tree,
    row: &[u16],
    phi: &mut [f64],
    node_idx: usize,
    mut path: Vec<PathElement>,
    mut unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: usize,
) {
    extend_path(
        &mut path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature,
    );
    match tree.nodes[node_idx] {
        Node::Leaf { value, .. } => {
            for i in 1..=unique_depth {
                let weight = unwound_path_sum(&path, unique_depth, i);
                let element = &path[i];
                phi[element.feature] +=
                    weight * (element.one_fraction - element.zero_fraction) * value;
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if row[feature] <= threshold {
                (left, right)
            } else {
                (right, left)
            };
            let hot_zero_fraction = tree.nodes[hot].cover() as f64 / cover as f64;
            let cold_zero_fraction = tree.nodes[cold].cover() as f64 / cover as f64;
            let mut incoming_zero_fraction = 1.0;
            let mut incoming_one_fraction = 1.0;
            // A feature met twice on one path is unwound and re-extended so
            // it occupies a single path slot.
            if let Some(index) = (1..=unique_depth).find(|&i| path[i].feature == feature) {
                incoming_zero_fraction = path[index].zero_fraction;
                incoming_one_fraction = path[index].one_fraction;
                unwind_path(&mut path, unique_depth, index);
                unique_depth -= 1;
            }
            tree_recurse(
                tree,
                row,
                phi,
                hot,
                path.clone(),
                unique_depth + 1,
                hot_zero_fraction * incoming_zero_fraction,
                incoming_one_fraction,
                feature,
            );
            tree_recurse(
                tree,
                row,
                phi,
                cold,
                path,
                unique_depth + 1,
                cold_zero_fraction * incoming_zero_fraction,
                0.0,
                feature,
            );
        }
    }
}

/// Unscaled margin-space attributions of one tree for one row.
pub fn shap_for_tree(tree: &Tree, row: &[u16], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    if tree.nodes.len() > 1 {
        tree_recurse(tree, row, &mut phi, 0, Vec::new(), 0, 1.0, 1.0, NO_FEATURE);
    }
    phi
}

fn phi_for_row(ensemble: &Ensemble, row: &[u16]) -> Vec<f64> {
    let mut phi = vec![0.0; ensemble.n_features];
    for tree in &ensemble.trees {
        for (acc, p) in phi
            .iter_mut()
            .zip(shap_for_tree(tree, row, ensemble.n_features))
        {
            *acc += p;
        }
    }
    for p in phi.iter_mut() {
        *p *= ensemble.learning_rate;
    }
    phi
}

/// Exact Shapley attributions of the ensemble for one encoded row.
pub fn tree_shap(ensemble: &Ensemble, row: &[u16]) -> Result<ShapVector> {
    if row.len() != ensemble.n_features {
        return Err(Error::Domain(format!(
            "row has {} features, ensemble expects {}",
            row.len(),
            ensemble.n_features
        )));
    }
    Ok(ShapVector {
        base_value: expected_value(ensemble)?,
        phi: phi_for_row(ensemble, row),
    })
}

/// Attributions for every row of a matrix. Rows are independent, so they
/// are computed in parallel and written into per-row slots; the result does
/// not depend on the thread count.
pub fn shap_matrix(
    ensemble: &Ensemble,
    matrix: &EncodedMatrix,
    feature_names: &[String],
) -> Result<ShapMatrix> {
    if feature_names.len() != ensemble.n_features || matrix.n_features() != ensemble.n_features {
        return Err(Error::Domain(format!(
            "feature arity mismatch: ensemble {}, matrix {}, names {}",
            ensemble.n_features,
            matrix.n_features(),
            feature_names.len()
        )));
    }
    let base_value = expected_value(ensemble)?;
    let values: Vec<Vec<f64>> = (0..matrix.n_rows())
        .into_par_iter()
        .map(|r| phi_for_row(ensemble, &matrix.row(r)))
        .collect();
    Ok(ShapMatrix {
        feature_names: feature_names.to_vec(),
        base_value,
        values,
    })
}

/// Expected leaf value of `tree` for `row` when only the `present` features
/// are conditioned on: absent features are marginalized by descending both
/// children weighted by cover.
pub fn conditional_expectation(tree: &Tree, row: &[u16], present: &[bool]) -> f64 {
    fn descend(tree: &Tree, idx: usize, row: &[u16], present: &[bool]) -> f64 {
        match tree.nodes[idx] {
            Node::Leaf { value, .. } => value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if present[feature] {
                    let next = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    };
                    descend(tree, next, row, present)
                } else {
                    let cl = tree.nodes[left].cover() as f64;
                    let cr = tree.nodes[right].cover() as f64;
                    (cl * descend(tree, left, row, present)
                        + cr * descend(tree, right, row, present))
                        / (cl + cr)
                }
            }
        }
    }
    descend(tree, 0, row, present)
}

/// Textbook Shapley values by subset enumeration — the testing oracle.
/// Refuses more than [`BRUTE_FORCE_FEATURE_LIMIT`] features.
pub fn brute_shapley(ensemble: &Ensemble, row: &[u16]) -> Result<ShapVector> {
    let m = ensemble.n_features;
    if m > BRUTE_FORCE_FEATURE_LIMIT {
        return Err(Error::Domain(format!(
            "brute-force Shapley enumerates 2^m subsets; {m} features exceed the limit of {BRUTE_FORCE_FEATURE_LIMIT}"
        )));
    }
    if row.len() != m {
        return Err(Error::Domain(format!(
            "row has {} features, ensemble expects {m}",
            row.len()
        )));
    }
    let n_subsets = 1usize << m;
    let mut value_of = vec![0.0; n_subsets];
    let mut present = vec![false; m];
    for (mask, slot) in value_of.iter_mut().enumerate() {
        for (j, p) in present.iter_mut().enumerate() {
            *p = mask & (1 << j) != 0;
        }
        *slot = ensemble.learning_rate
            * ensemble
                .trees
                .iter()
                .map(|t| conditional_expectation(t, row, &present))
                .sum::<f64>();
    }

    let mut factorial = vec![1.0; m + 1];
    for i in 1..=m {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; m];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..n_subsets {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[m - s - 1] / factorial[m];
            *phi_j += weight * (value_of[mask | bit] - value_of[mask]);
        }
    }
    Ok(ShapVector {
        base_value: ensemble.base_score + value_of[0],
        phi,
    })
}

/// Mean absolute attribution per feature, sorted descending with name
/// tie-break. Errors on an empty matrix (no rows to average over).
pub fn mean_abs_importance(matrix: &ShapMatrix) -> Result<ImportanceRanking> {
    let n = matrix.n_rows();
    if n == 0 {
        return Err(Error::Domain("cannot rank features over zero rows".into()));
    }
    let m = matrix.n_features();
    let mut sums = vec![0.0; m];
    for row in &matrix.values {
        for (acc, v) in sums.iter_mut().zip(row) {
            *acc += v.abs();
        }
    }
    let mut entries: Vec<(String, f64)> = matrix
        .feature_names
        .iter()
        .cloned()
        .zip(sums.into_iter().map(|s| s / n as f64))
        .collect();
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("importances are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ImportanceRanking { entries })
}

/// Keep features with mean |φ| strictly above `threshold`, in rank order.
/// When none clears it, the top-ranked feature is kept with a warning so
/// the downstream model never trains on zero features.
pub fn select_features(ranking: &ImportanceRanking, threshold: f64) -> FeatureSelection {
    let features: Vec<String> = ranking
        .entries
        .iter()
        .filter(|(_, v)| *v > threshold)
        .map(|(name, _)| name.clone())
        .collect();
    if features.is_empty() && !ranking.entries.is_empty() {
        return FeatureSelection {
            features: vec![ranking.entries[0].0.clone()],
            fallback_warning: true,
        };
    }
    FeatureSelection {
        features,
        fallback_warning: false,
    }
}

/// Long-format (feature, patient, φ, raw value, missing) table ordered by
/// importance rank then patient — everything a beeswarm needs, with missing
/// cells flagged so they can be drawn in grey.
pub fn summary_export(matrix: &ShapMatrix, dataset: &Dataset) -> Result<Vec<SummaryRow>> {
    if matrix.n_rows() != dataset.n_rows() {
        return Err(Error::Domain(format!(
            "attribution matrix has {} rows but the dataset has {}",
            matrix.n_rows(),
            dataset.n_rows()
        )));
    }
    let ranking = mean_abs_importance(matrix)?;
    let mut rows = Vec::with_capacity(matrix.n_rows() * matrix.n_features());
    for (feature, _) in &ranking.entries {
        let idx = matrix
            .feature_names
            .iter()
            .position(|n| n == feature)
            .expect("ranking features come from the matrix");
        let column = dataset
            .column(feature)
            .ok_or_else(|| Error::Schema(format!("dataset lacks feature column '{feature}'")))?;
        for patient in 0..matrix.n_rows() {
            let missing = column.is_missing(patient);
            rows.push(SummaryRow {
                feature: feature.clone(),
                patient,
                phi: matrix.values[patient][idx],
                raw_value: column.render(patient),
                missing,
            });
        }
    }
    Ok(rows)
}

/// Render summary rows as CSV.
pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "patient", "phi", "raw_value", "missing"])?;
    for r in rows {
        w.write_record([
            r.feature.as_str(),
            &r.patient.to_string(),
            &format!("{}", r.phi),
            r.raw_value.as_str(),
            &r.missing.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8"))
}
