//! Fold-safe validation: repeated LOOCV / k-fold plans, minority
//! oversampling, per-fold training with strictly train-side statistics, and
//! hyperparameter grid search.
//!
//! Every fold derives its own seed from (base seed, repeat, fold), folds run
//! in parallel, and aggregation is slot-indexed, so results are independent
//! of scheduling and thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::encoding::{FittedEncoders, DEFAULT_MAX_BINS};
use crate::error::{Error, Result};
use crate::gbdt::{fit_ensemble, Model, TrainParams, DEEP_MODEL_MAX_DEPTH};
use crate::metrics::{MetricValues, MetricsReport};
use crate::shap::{
    mean_abs_importance, select_features, shap_matrix, FeatureSelection, ImportanceRanking,
    ShapMatrix,
};

/// Operating threshold for the confusion metrics in every report.
pub const OPERATING_THRESHOLD: f64 = 0.5;

/// Default hyperparameter grid for `grid_search`.
pub const DEFAULT_DEPTH_GRID: [usize; 4] = [2, 4, 6, 8];
pub const DEFAULT_ITERATION_GRID: [usize; 4] = [100, 300, 500, 1000];
pub const DEFAULT_LEARNING_RATE_GRID: [f64; 3] = [0.02, 0.05, 0.1];

/// Default feature-threshold levels, as fractions of the top mean |φ|.
pub const DEFAULT_THRESHOLD_LEVELS: [f64; 5] = [0.0, 0.01, 0.02, 0.05, 0.1];

/// Seed stream tag for the whole-cohort importance model (distinct from
/// every (repeat, fold) pair).
const DEEP_MODEL_STREAM: u64 = u64::MAX;

/// How the rows are split into folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldScheme {
    Loocv,
    KFold(usize),
}

impl FoldScheme {
    pub fn describe(&self) -> String {
        match self {
            FoldScheme::Loocv => "loocv".to_string(),
            FoldScheme::KFold(k) => format!("{k}-fold"),
        }
    }
}

/// One train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// The full resampling plan: per repeat, a list of folds whose test sets
/// partition the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub scheme: FoldScheme,
    pub seed: u64,
    pub n_rows: usize,
    /// `repeats[r][f]` is fold f of repeat r.
    pub repeats: Vec<Vec<Fold>>,
}

impl FoldPlan {
    /// Build a plan over `n_rows` rows. LOOCV repeats share the identical
    /// (deterministic) fold layout — the repeats differ only through the
    /// per-fold oversampling seeds. K-fold shuffles rows per repeat.
    pub fn new(scheme: FoldScheme, repeats: usize, seed: u64, n_rows: usize) -> Result<FoldPlan> {
        if repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if n_rows < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 rows, got {n_rows}"
            )));
        }
        let mut all_repeats = Vec::with_capacity(repeats);
        match scheme {
            FoldScheme::Loocv => {
                let layout: Vec<Fold> = (0..n_rows)
                    .map(|i| Fold {
                        train: (0..n_rows).filter(|&r| r != i).collect(),
                        test: vec![i],
                    })
                    .collect();
                for _ in 0..repeats {
                    all_repeats.push(layout.clone());
                }
            }
            FoldScheme::KFold(k) => {
                if k < 2 || k > n_rows {
                    return Err(Error::Config(format!(
                        "k must lie in [2, {n_rows}], got {k}"
                    )));
                }
                for repeat in 0..repeats {
                    let mut rows: Vec<usize> = (0..n_rows).collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, repeat as u64, 0));
                    rows.shuffle(&mut rng);
                    let base = n_rows / k;
                    let remainder = n_rows % k;
                    let mut start = 0;
                    let mut folds = Vec::with_capacity(k);
                    for f in 0..k {
                        let size = base + usize::from(f < remainder);
                        let mut test: Vec<usize> = rows[start..start + size].to_vec();
                        test.sort_unstable();
                        let mut train: Vec<usize> = rows[..start]
                            .iter()
                            .chain(&rows[start + size..])
                            .copied()
                            .collect();
                        train.sort_unstable();
                        folds.push(Fold { train, test });
                        start += size;
                    }
                    all_repeats.push(folds);
                }
            }
        }
        Ok(FoldPlan {
            scheme,
            seed,
            n_rows,
            repeats: all_repeats,
        })
    }

    pub fn n_repeats(&self) -> usize {
        self.repeats.len()
    }
}

/// Mix (base seed, repeat, fold) into an independent per-fold seed with a
/// splitmix64-style finalizer at every stage.
pub fn derive_seed(base: u64, repeat: u64, fold: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ repeat) ^ fold)
}

/// Result of balancing one training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oversample {
    /// Row-index multiset: every majority row once, every minority row once
    /// plus uniform redraws until the classes balance.
    pub rows: Vec<usize>,
    /// Set when the input held a single class and was returned unchanged.
    pub single_class_warning: bool,
}

/// Random oversampling of the minority class among `train_rows` until the
/// class counts are equal. Deterministic per seed.
pub fn oversample_minority(labels: &[u8], train_rows: &[usize], seed: u64) -> Result<Oversample> {
    if train_rows.is_empty() {
        return Err(Error::Config(
            "cannot oversample an empty training set".into(),
        ));
    }
    let positives: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|&r| labels[r] == 1)
        .collect();
    let negatives: Vec<usize> = train_rows
        .iter()
        .copied()
        .filter(|&r| labels[r] == 0)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Ok(Oversample {
            rows: train_rows.to_vec(),
            single_class_warning: true,
        });
    }
    if positives.len() == negatives.len() {
        return Ok(Oversample {
            rows: train_rows.to_vec(),
            single_class_warning: false,
        });
    }
    let (minority, deficit) = if positives.len() < negatives.len() {
        (&positives, negatives.len() - positives.len())
    } else {
        (&negatives, positives.len() - negatives.len())
    };
    let mut rows = train_rows.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..deficit {
        rows.push(minority[rng.random_range(0..minority.len())]);
    }
    Ok(Oversample {
        rows,
        single_class_warning: false,
    })
}

/// One executed fold: out-of-fold scores (aligned with the fold's test
/// rows) and the trained model, kept so leakage can be checked byte-wise.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub scores: Vec<f64>,
    pub model: Model,
}

/// Train on `train_rows` only — encoder statistics, bins and oversampling
/// all come from the training side — then score `test_rows`.
pub fn run_fold(
    dataset: &Dataset,
    train_rows: &[usize],
    test_rows: &[usize],
    params: &TrainParams,
    feature_subset: Option<&[String]>,
    seed: u64,
) -> Result<FoldRun> {
    if test_rows.iter().any(|t| train_rows.contains(t)) {
        return Err(Error::Config("train and test row sets overlap".into()));
    }
    let narrowed;
    let view = match feature_subset {
        Some(names) => {
            narrowed = dataset.select_columns(names)?;
            &narrowed
        }
        None => dataset,
    };
    let encoders = FittedEncoders::fit(view, train_rows, DEFAULT_MAX_BINS)?;
    let matrix = encoders.encode(view)?;
    let sample = oversample_minority(view.label(), train_rows, seed)?;
    let train_matrix = matrix.gather(&sample.rows);
    let train_labels: Vec<u8> = sample.rows.iter().map(|&r| view.label()[r]).collect();
    let ensemble = fit_ensemble(&train_matrix, &train_labels, params)?;
    let scores: Vec<f64> = test_rows
        .iter()
        .map(|&r| {
            crate::gbdt::sigmoid(
                ensemble.base_score
                    + ensemble.learning_rate
                        * ensemble
                            .trees
                            .iter()
                            .map(|t| t.predict_in_matrix(&matrix, r))
                            .sum::<f64>(),
            )
        })
        .collect();
    Ok(FoldRun {
        scores,
        model: Model::new(ensemble, encoders, params.clone()),
    })
}

/// A full repeated-CV run: the aggregated report plus each repeat's pooled
/// out-of-fold score vector (index-aligned with the dataset rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub report: MetricsReport,
    pub per_repeat_scores: Vec<Vec<f64>>,
}

/// Repeated cross-validation. Per repeat, every fold's out-of-fold scores
/// are pooled into one vector over all rows and the metric suite is
/// computed at the 0.5 operating point; repeats aggregate as mean ± SD.
pub fn cross_validate(
    dataset: &Dataset,
    plan: &FoldPlan,
    params: &TrainParams,
    feature_subset: Option<&[String]>,
) -> Result<CrossValidation> {
    if plan.n_rows != dataset.n_rows() {
        return Err(Error::Config(format!(
            "plan covers {} rows but the dataset has {}",
            plan.n_rows,
            dataset.n_rows()
        )));
    }
    let mut per_repeat_scores = Vec::with_capacity(plan.n_repeats());
    let mut per_repeat_metrics = Vec::with_capacity(plan.n_repeats());
    for (repeat, folds) in plan.repeats.iter().enumerate() {
        let runs: Vec<(usize, Vec<f64>)> = folds
            .par_iter()
            .enumerate()
            .map(|(fold_idx, fold)| {
                let fold_seed = derive_seed(plan.seed, repeat as u64, fold_idx as u64);
                run_fold(
                    dataset,
                    &fold.train,
                    &fold.test,
                    params,
                    feature_subset,
                    fold_seed,
                )
                .map(|run| (fold_idx, run.scores))
            })
            .collect::<Result<_>>()?;
        let mut pooled = vec![f64::NAN; dataset.n_rows()];
        for (fold_idx, scores) in runs {
            for (&row, &score) in folds[fold_idx].test.iter().zip(&scores) {
                pooled[row] = score;
            }
        }
        debug_assert!(
            pooled.iter().all(|s| !s.is_nan()),
            "test sets partition the rows"
        );
        per_repeat_metrics.push(MetricValues::from_scores(
            &pooled,
            dataset.label(),
            OPERATING_THRESHOLD,
        )?);
        per_repeat_scores.push(pooled);
    }
    let report = MetricsReport::aggregate(
        &plan.scheme.describe(),
        OPERATING_THRESHOLD,
        per_repeat_metrics,
    );
    Ok(CrossValidation {
        report,
        per_repeat_scores,
    })
}

/// Whole-cohort importance artifacts: the deep model trained on all rows
/// (balanced by oversampling), its attribution matrix over the original
/// rows, and the resulting ranking.
#[derive(Debug, Clone)]
pub struct DeepImportance {
    pub model: Model,
    pub shap: ShapMatrix,
    pub ranking: ImportanceRanking,
}

/// Fit the deep importance model on the entire dataset and attribute every
/// original row.
pub fn deep_importance(
    dataset: &Dataset,
    base_params: &TrainParams,
    seed: u64,
) -> Result<DeepImportance> {
    let all_rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let params = TrainParams {
        max_depth: DEEP_MODEL_MAX_DEPTH,
        ..base_params.clone()
    };
    let encoders = FittedEncoders::fit(dataset, &all_rows, DEFAULT_MAX_BINS)?;
    let matrix = encoders.encode(dataset)?;
    let sample = oversample_minority(
        dataset.label(),
        &all_rows,
        derive_seed(seed, DEEP_MODEL_STREAM, 0),
    )?;
    let train_matrix = matrix.gather(&sample.rows);
    let train_labels: Vec<u8> = sample.rows.iter().map(|&r| dataset.label()[r]).collect();
    let ensemble = fit_ensemble(&train_matrix, &train_labels, &params)?;
    let shap = shap_matrix(&ensemble, &matrix, &encoders.feature_names)?;
    let ranking = mean_abs_importance(&shap)?;
    Ok(DeepImportance {
        model: Model::new(ensemble, encoders, params),
        shap,
        ranking,
    })
}

/// Compact record of one evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub max_depth: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub threshold_level: f64,
    pub auc_mean: f64,
    pub f1_mean: f64,
}

/// The winning grid-search combination with its full report.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best_params: TrainParams,
    pub best_threshold_level: f64,
    pub best_selection: FeatureSelection,
    pub best_report: MetricsReport,
    pub ranking: ImportanceRanking,
    pub evaluated: Vec<GridPoint>,
}

/// `a` strictly beats `b` on mean AUC, then mean F₁; equal pairs keep the
/// earlier grid point.
fn beats(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

/// Build the default parameter grid around a base configuration.
pub fn default_param_grid(base: &TrainParams) -> Vec<TrainParams> {
    let mut grid = Vec::new();
    for &max_depth in &DEFAULT_DEPTH_GRID {
        for &iterations in &DEFAULT_ITERATION_GRID {
            for &learning_rate in &DEFAULT_LEARNING_RATE_GRID {
                grid.push(TrainParams {
                    iterations,
                    learning_rate,
                    max_depth,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// Evaluate every (params × threshold level) combination with repeated
/// cross-validation and keep the best by mean AUC, tie-broken by mean F₁,
/// then by grid order. Feature subsets come from one whole-cohort deep
/// model ranking shared across the sweep.
pub fn grid_search(
    dataset: &Dataset,
    param_grid: &[TrainParams],
    threshold_levels: &[f64],
    plan: &FoldPlan,
) -> Result<GridSearchOutcome> {
    if param_grid.is_empty() || threshold_levels.is_empty() {
        return Err(Error::Config("grid search needs non-empty grids".into()));
    }
    let importance = deep_importance(dataset, &param_grid[0], plan.seed)?;
    let max_phi = importance.ranking.max_importance();
    let selections: Vec<FeatureSelection> = threshold_levels
        .iter()
        .map(|level| select_features(&importance.ranking, level * max_phi))
        .collect();

    let mut evaluated = Vec::with_capacity(param_grid.len() * threshold_levels.len());
    let mut best: Option<(usize, usize, MetricsReport)> = None;
    for (pi, params) in param_grid.iter().enumerate() {
        for (ti, selection) in selections.iter().enumerate() {
            let cv = cross_validate(dataset, plan, params, Some(&selection.features))?;
            let point = GridPoint {
                max_depth: params.max_depth,
                iterations: params.iterations,
                learning_rate: params.learning_rate,
                threshold_level: threshold_levels[ti],
                auc_mean: cv.report.auc.mean,
                f1_mean: cv.report.f1.mean,
            };
            let replace = match &best {
                None => true,
                Some((_, _, incumbent)) => beats(
                    (point.auc_mean, point.f1_mean),
                    (incumbent.auc.mean, incumbent.f1.mean),
                ),
            };
            if replace {
                best = Some((pi, ti, cv.report.clone()));
            }
            evaluated.push(point);
        }
    }
    let (pi, ti, report) = best.expect("grids are non-empty");
    Ok(GridSearchOutcome {
        best_params: param_grid[pi].clone(),
        best_threshold_level: threshold_levels[ti],
        best_selection: selections[ti].clone(),
        best_report: report,
        ranking: importance.ranking,
        evaluated,
    })
}
