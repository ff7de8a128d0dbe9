//! End-to-end pipeline modes behind the CLI: cohort generation, full-data
//! training, attribution/selection, repeated cross-validation, grid search
//! and batch scoring. Every run writes its artifacts plus a manifest
//! (config echo, seed, library version, input hashes) into the output
//! directory; on failure all files created by the run are removed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{load_dataset_with_schema, normalize, ColumnData, Dataset};
use crate::encoding::RawValue;
use crate::error::{Error, Result};
use crate::gbdt::{Model, TrainParams};
use crate::harness::{
    cross_validate, deep_importance, default_param_grid, derive_seed, grid_search, run_fold,
    FoldPlan, FoldScheme, DEFAULT_THRESHOLD_LEVELS,
};
use crate::metrics::roc_curve;
use crate::plot;
use crate::schema::SchemaSet;
use crate::shap::{select_features, summary_export, summary_to_csv, FeatureSelection};
use crate::synth::{self, SynthSpec};

/// Default base seed for every mode.
pub const DEFAULT_SEED: u64 = 16017;

/// Seed stream tag for full-data training (train mode), distinct from all
/// cross-validation (repeat, fold) pairs.
const FULL_FIT_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Write a synthetic cohort CSV + schema from a declarative spec.
    Generate,
    /// Fit one model on the full dataset and save it.
    Train,
    /// Fit the deep whole-cohort model and export attribution artifacts.
    Explain,
    /// Explain, then cut the ranking at the configured threshold level.
    Select,
    /// Feature selection followed by repeated cross-validation.
    Validate,
    /// Hyperparameter × threshold-level sweep with k-fold CV.
    Search,
    /// Score a CSV with a saved model.
    Score,
}

impl Mode {
    fn stage_name(&self) -> &'static str {
        match self {
            Mode::Generate => "generate",
            Mode::Train => "train",
            Mode::Explain => "explain",
            Mode::Select => "select",
            Mode::Validate => "validate",
            Mode::Search => "search",
            Mode::Score => "score",
        }
    }
}

/// One run's full configuration. Loadable from JSON (all fields optional,
/// falling back to these defaults) and overridable from CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Input CSV for most modes; for `generate`, an optional cohort-spec
    /// JSON (bundled spec when absent).
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Model file: output of `train`, input of `score`.
    pub model: Option<PathBuf>,
    /// Directory receiving all artifacts.
    pub out: PathBuf,
    pub seed: u64,
    /// Repeats for validate/search; defaults to 5 for validate, 3 for search.
    pub repeats: Option<usize>,
    /// Folds for validate/search; validate defaults to LOOCV, search to 5.
    pub k: Option<usize>,
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_regularization: f64,
    /// Feature-selection cut as a fraction of the top mean |φ|.
    pub threshold_level: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        let params = TrainParams::default();
        RunConfig {
            mode: Mode::Validate,
            data: None,
            schema: None,
            model: None,
            out: PathBuf::from("reports"),
            seed: DEFAULT_SEED,
            repeats: None,
            k: None,
            iterations: params.iterations,
            learning_rate: params.learning_rate,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            l2_leaf_regularization: params.l2_leaf_regularization,
            threshold_level: 0.05,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_leaf_regularization: self.l2_leaf_regularization,
            seed: self.seed,
        }
    }
}

/// Reproducibility record written at the end of every successful run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: String,
    pub library_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// File names written into the output directory, in creation order.
    pub artifacts: Vec<String>,
}

/// Output-directory writer that tracks created files so a failed run can
/// remove everything it produced.
struct Sink {
    dir: PathBuf,
    created: Vec<PathBuf>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Sink> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            created: Vec::new(),
        })
    }

    /// Register `name` (or an absolute path) for cleanup and return the
    /// full path; callers write the file themselves.
    fn path(&mut self, name: &str) -> PathBuf {
        let path = if Path::new(name).is_absolute() {
            PathBuf::from(name)
        } else {
            self.dir.join(name)
        };
        self.created.push(path.clone());
        path
    }

    /// Register a user-supplied path for cleanup without re-anchoring it:
    /// explicit paths resolve against the working directory, not the
    /// output directory, so `train` writes where `score` will later read.
    fn external(&mut self, path: &Path) -> PathBuf {
        self.created.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(path, content)?;
        Ok(())
    }

    fn discard_all(&self) {
        for path in &self.created {
            let _ = fs::remove_file(path);
        }
    }

    fn artifact_names(&self) -> Vec<String> {
        self.created
            .iter()
            .map(|p| p.display().to_string())
            .collect()
    }
}

fn hash_input(inputs: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    inputs.insert(path.display().to_string(), format!("{digest:x}"));
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    Ok(json)
}

/// Run one pipeline mode. Returns the manifest path on success; on failure
/// every artifact the run created is removed before the error propagates.
pub fn run_pipeline(config: &RunConfig) -> Result<PathBuf> {
    let mut sink = Sink::new(&config.out).map_err(|e| e.in_stage("prepare-output"))?;
    let mut inputs = BTreeMap::new();
    match dispatch(config, &mut sink, &mut inputs) {
        Ok(()) => {
            let manifest = Manifest {
                mode: config.mode.stage_name().to_string(),
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config: config.clone(),
                inputs,
                artifacts: sink.artifact_names(),
            };
            let path = sink.dir.join("manifest.json");
            fs::write(&path, to_pretty_json(&manifest)?)
                .map_err(|e| Error::from(e).in_stage("manifest"))?;
            Ok(path)
        }
        Err(error) => {
            sink.discard_all();
            Err(error.in_stage(config.mode.stage_name()))
        }
    }
}

fn dispatch(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    match config.mode {
        Mode::Generate => generate_mode(config, sink, inputs),
        Mode::Train => train_mode(config, sink, inputs),
        Mode::Explain => explain_mode(config, sink, inputs),
        Mode::Select => select_mode(config, sink, inputs),
        Mode::Validate => validate_mode(config, sink, inputs),
        Mode::Search => search_mode(config, sink, inputs),
        Mode::Score => score_mode(config, sink, inputs),
    }
}

fn generate_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let mut spec = match &config.data {
        Some(path) => {
            hash_input(inputs, path)?;
            SynthSpec::from_json(&fs::read_to_string(path)?)?
        }
        None => synth::bundled_spec()?,
    };
    spec.seed = config.seed;
    let dataset = synth::generate(&spec)?;
    let csv_path = sink.path("cohort.csv");
    dataset.write_csv(&csv_path)?;
    let schema_path = sink.path("schema.json");
    spec.schema_set().save(&schema_path)?;
    sink.write("spec.json", &to_pretty_json(&spec)?)?;
    Ok(())
}

/// Load, derive and expand the input CSV for the CSV-consuming modes.
fn load_inputs(
    config: &RunConfig,
    inputs: &mut BTreeMap<String, String>,
) -> Result<(Dataset, SchemaSet)> {
    let data = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("this mode needs --data".into()))?;
    let schema_path = config
        .schema
        .as_ref()
        .ok_or_else(|| Error::Config("this mode needs --schema".into()))?;
    hash_input(inputs, data)?;
    hash_input(inputs, schema_path)?;
    let schema = SchemaSet::load(schema_path)?;
    let raw = load_dataset_with_schema(data, &schema)?;
    let dataset = normalize(&raw, &schema)?;
    Ok((dataset, schema))
}

fn train_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let all_rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let run = run_fold(
        &dataset,
        &all_rows,
        &[],
        &config.train_params(),
        None,
        derive_seed(config.seed, FULL_FIT_STREAM, 0),
    )?;
    let model_path = match &config.model {
        Some(path) => sink.external(path),
        None => sink.path("model.json"),
    };
    run.model.save(&model_path)?;
    Ok(())
}

/// Everything the explain/select/validate family shares: the deep model,
/// the attribution matrix and the ranking, exported as artifacts.
fn write_importance_artifacts(
    config: &RunConfig,
    sink: &mut Sink,
    dataset: &Dataset,
) -> Result<crate::harness::DeepImportance> {
    let importance = deep_importance(dataset, &config.train_params(), config.seed)?;
    sink.write("ranking.csv", &importance.ranking.to_csv_string()?)?;
    sink.write("shap.csv", &importance.shap.to_csv_string()?)?;
    let summary = summary_export(&importance.shap, dataset)?;
    sink.write("summary.csv", &summary_to_csv(&summary)?)?;
    sink.write(
        "beeswarm.svg",
        &plot::beeswarm_svg(&importance.shap, dataset)?,
    )?;
    Ok(importance)
}

fn explain_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let importance = write_importance_artifacts(config, sink, &dataset)?;
    let deep_path = sink.path("deep_model.json");
    importance.model.save(&deep_path)?;
    Ok(())
}

/// JSON artifact describing a threshold cut of the ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub threshold_level: f64,
    /// Absolute mean-|φ| cut: `threshold_level` × top importance.
    pub threshold: f64,
    pub features: Vec<String>,
    pub fallback_warning: bool,
}

fn cut_ranking(
    config: &RunConfig,
    ranking: &crate::shap::ImportanceRanking,
) -> (SelectionArtifact, FeatureSelection) {
    let threshold = config.threshold_level * ranking.max_importance();
    let selection = select_features(ranking, threshold);
    (
        SelectionArtifact {
            threshold_level: config.threshold_level,
            threshold,
            features: selection.features.clone(),
            fallback_warning: selection.fallback_warning,
        },
        selection,
    )
}

fn select_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let importance = write_importance_artifacts(config, sink, &dataset)?;
    let (artifact, _) = cut_ranking(config, &importance.ranking);
    sink.write("selected.json", &to_pretty_json(&artifact)?)?;
    Ok(())
}

fn validate_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let importance = deep_importance(&dataset, &config.train_params(), config.seed)?;
    let (artifact, selection) = cut_ranking(config, &importance.ranking);
    sink.write("ranking.csv", &importance.ranking.to_csv_string()?)?;
    sink.write("selected.json", &to_pretty_json(&artifact)?)?;

    let scheme = match config.k {
        Some(k) => FoldScheme::KFold(k),
        None => FoldScheme::Loocv,
    };
    let repeats = config.repeats.unwrap_or(5);
    let plan = FoldPlan::new(scheme, repeats, config.seed, dataset.n_rows())?;
    let cv = cross_validate(
        &dataset,
        &plan,
        &config.train_params(),
        Some(&selection.features),
    )?;
    sink.write("report.json", &cv.report.to_json()?)?;

    let mut scores_csv = String::from("row,label");
    for repeat in 1..=repeats {
        scores_csv.push_str(&format!(",score_repeat_{repeat}"));
    }
    scores_csv.push('\n');
    for row in 0..dataset.n_rows() {
        scores_csv.push_str(&format!("{row},{}", dataset.label()[row]));
        for scores in &cv.per_repeat_scores {
            scores_csv.push_str(&format!(",{}", scores[row]));
        }
        scores_csv.push('\n');
    }
    sink.write("scores.csv", &scores_csv)?;

    let mut curves = Vec::with_capacity(repeats);
    let mut roc_csv = String::from("repeat,fpr,tpr,threshold\n");
    for (index, scores) in cv.per_repeat_scores.iter().enumerate() {
        let curve = roc_curve(scores, dataset.label())?;
        for (&(fpr, tpr), &threshold) in curve.points.iter().zip(&curve.thresholds) {
            roc_csv.push_str(&format!("{},{fpr},{tpr},{threshold}\n", index + 1));
        }
        curves.push((format!("repeat {}", index + 1), curve));
    }
    sink.write("roc.csv", &roc_csv)?;
    sink.write("roc.svg", &plot::roc_svg(&curves))?;
    Ok(())
}

/// JSON artifact summarising a grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchArtifact {
    pub best_params: TrainParams,
    pub best_threshold_level: f64,
    pub best_features: Vec<String>,
    pub evaluated: Vec<crate::harness::GridPoint>,
}

fn search_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let plan = FoldPlan::new(
        FoldScheme::KFold(config.k.unwrap_or(5)),
        config.repeats.unwrap_or(3),
        config.seed,
        dataset.n_rows(),
    )?;
    let grid = default_param_grid(&config.train_params());
    let outcome = grid_search(&dataset, &grid, &DEFAULT_THRESHOLD_LEVELS, &plan)?;
    sink.write("ranking.csv", &outcome.ranking.to_csv_string()?)?;
    sink.write("report.json", &outcome.best_report.to_json()?)?;
    sink.write(
        "grid.json",
        &to_pretty_json(&SearchArtifact {
            best_params: outcome.best_params,
            best_threshold_level: outcome.best_threshold_level,
            best_features: outcome.best_selection.features,
            evaluated: outcome.evaluated,
        })?,
    )?;
    Ok(())
}

/// Raw cells for one row in the model's feature order.
fn row_cells<'a>(
    dataset: &'a Dataset,
    row: usize,
    feature_names: &[String],
) -> Result<Vec<RawValue<'a>>> {
    feature_names
        .iter()
        .map(|name| {
            let column = dataset
                .column(name)
                .ok_or_else(|| Error::Schema(format!("data lacks model feature '{name}'")))?;
            if column.is_missing(row) {
                return Ok(RawValue::Missing);
            }
            match &column.data {
                ColumnData::Numeric(values) => Ok(RawValue::Number(values[row])),
                ColumnData::Text(values) => Ok(RawValue::Text(values[row].as_str())),
                ColumnData::Date(_) => Err(Error::Schema(format!(
                    "model feature '{name}' is a date column; dates cannot be scored"
                ))),
            }
        })
        .collect()
}

fn score_mode(
    config: &RunConfig,
    sink: &mut Sink,
    inputs: &mut BTreeMap<String, String>,
) -> Result<()> {
    let model_path = config
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("score needs --model".into()))?;
    hash_input(inputs, model_path)?;
    let model = Model::load(model_path)?;
    let (dataset, _) = load_inputs(config, inputs).map_err(|e| e.in_stage("load-data"))?;
    let mut csv = String::from("row,probability\n");
    for row in 0..dataset.n_rows() {
        let cells = row_cells(&dataset, row, model.feature_names())?;
        let probability = model.proba_for_cells(&cells)?;
        csv.push_str(&format!("{row},{probability}\n"));
    }
    sink.write("scores.csv", &csv)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY_SPEC: &str = r#"{
        "label": "Y",
        "n_per_class": { "negative": 16, "positive": 8 },
        "seed": 7,
        "features": [
            {
                "name": "A",
                "kind": "numerical",
                "signal": true,
                "negative": { "mean": 1.0, "sd": 0.5, "sample": 14 },
                "positive": { "mean": 3.0, "sd": 0.5, "sample": 8 }
            },
            {
                "name": "G",
                "kind": "categorical",
                "negative": { "instances": { "x": 10, "y": 6 } },
                "positive": { "instances": { "x": 2, "y": 6 } }
            }
        ]
    }"#;

    fn quick_config(mode: Mode, dir: &Path) -> RunConfig {
        RunConfig {
            mode,
            out: dir.to_path_buf(),
            iterations: 10,
            learning_rate: 0.3,
            max_depth: 2,
            repeats: Some(2),
            k: Some(3),
            seed: 77,
            ..RunConfig::default()
        }
    }

    /// Generate a tiny cohort into `dir` and return (csv, schema) paths.
    fn generate_tiny(dir: &Path) -> (PathBuf, PathBuf) {
        let spec_path = dir.join("spec_in.json");
        fs::write(&spec_path, TINY_SPEC).unwrap();
        let config = RunConfig {
            data: Some(spec_path),
            ..quick_config(Mode::Generate, dir)
        };
        run_pipeline(&config).unwrap();
        (dir.join("cohort.csv"), dir.join("schema.json"))
    }

    #[test]
    fn generate_writes_cohort_schema_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        assert!(csv.exists() && schema.exists());
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.mode, "generate");
        assert_eq!(manifest.seed, 77);
        assert_eq!(manifest.inputs.len(), 1, "the input spec file is hashed");
        assert!(manifest.artifacts.iter().any(|a| a.ends_with("cohort.csv")));
        // The dataset reloads through its own schema.
        let schema_set = SchemaSet::load(&schema).unwrap();
        let ds = load_dataset_with_schema(&csv, &schema_set).unwrap();
        assert_eq!(ds.n_rows(), 24);
    }

    #[test]
    fn validate_emits_report_scores_roc_and_selection() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        let config = RunConfig {
            data: Some(csv),
            schema: Some(schema),
            ..quick_config(Mode::Validate, dir.path())
        };
        run_pipeline(&config).unwrap();
        for artifact in [
            "report.json",
            "scores.csv",
            "roc.csv",
            "roc.svg",
            "ranking.csv",
            "selected.json",
        ] {
            assert!(dir.path().join(artifact).exists(), "{artifact} missing");
        }
        let report: crate::metrics::MetricsReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(report.scheme, "3-fold");
        assert_eq!(report.repeats, 2);

        // Reruns are byte-identical.
        let first = fs::read(dir.path().join("report.json")).unwrap();
        run_pipeline(&config).unwrap();
        assert_eq!(first, fs::read(dir.path().join("report.json")).unwrap());
    }

    #[test]
    fn select_matches_the_ranking_cut() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        let config = RunConfig {
            data: Some(csv),
            schema: Some(schema),
            threshold_level: 0.05,
            ..quick_config(Mode::Select, dir.path())
        };
        run_pipeline(&config).unwrap();
        let artifact: SelectionArtifact =
            serde_json::from_str(&fs::read_to_string(dir.path().join("selected.json")).unwrap())
                .unwrap();
        assert!((0.0..=1.0).contains(&artifact.threshold_level));
        assert!(!artifact.features.is_empty());

        // Recomputing the cut from the exported ranking gives the same set.
        let ranking_csv = fs::read_to_string(dir.path().join("ranking.csv")).unwrap();
        let retained: Vec<String> = ranking_csv
            .lines()
            .skip(1)
            .filter_map(|line| {
                let mut parts = line.split(',');
                let name = parts.next()?.to_string();
                let value: f64 = parts.next()?.parse().ok()?;
                (value > artifact.threshold).then_some(name)
            })
            .collect();
        if retained.is_empty() {
            assert!(artifact.fallback_warning);
        } else {
            assert_eq!(artifact.features, retained);
        }
    }

    #[test]
    fn explicit_model_paths_resolve_against_the_working_directory() {
        // Sink-level contract: user-supplied paths are registered verbatim,
        // default artifact names anchor to the output directory. Without
        // this, `train --model m.json` and `score --model m.json` would
        // silently mean two different files.
        let anchor = tempfile::tempdir().unwrap();
        let mut sink = Sink::new(&anchor.path().join("out")).unwrap();
        assert_eq!(
            sink.external(Path::new("relative.json")),
            PathBuf::from("relative.json")
        );
        assert_eq!(
            sink.path("report.json"),
            anchor.path().join("out").join("report.json")
        );

        // Flow-level: the model lands at the given path, not under --out,
        // and score reads the same flag value back.
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        let model_path = dir.path().join("elsewhere").join("model.json");
        fs::create_dir_all(model_path.parent().unwrap()).unwrap();
        let train = RunConfig {
            data: Some(csv.clone()),
            schema: Some(schema.clone()),
            model: Some(model_path.clone()),
            ..quick_config(Mode::Train, &dir.path().join("train-out"))
        };
        run_pipeline(&train).unwrap();
        assert!(model_path.exists());
        assert!(!dir.path().join("train-out").join("model.json").exists());

        let score = RunConfig {
            data: Some(csv),
            schema: Some(schema),
            model: Some(model_path),
            ..quick_config(Mode::Score, &dir.path().join("score-out"))
        };
        run_pipeline(&score).unwrap();
        assert!(dir.path().join("score-out").join("scores.csv").exists());
    }

    #[test]
    fn train_then_score_round_trips_probabilities() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        let train = RunConfig {
            data: Some(csv.clone()),
            schema: Some(schema.clone()),
            ..quick_config(Mode::Train, dir.path())
        };
        run_pipeline(&train).unwrap();
        let model_path = dir.path().join("model.json");
        assert!(model_path.exists());

        let score = RunConfig {
            data: Some(csv.clone()),
            schema: Some(schema.clone()),
            model: Some(model_path.clone()),
            ..quick_config(Mode::Score, dir.path())
        };
        run_pipeline(&score).unwrap();

        // CSV probabilities equal in-process scoring exactly.
        let model = Model::load(&model_path).unwrap();
        let schema_set = SchemaSet::load(&schema).unwrap();
        let ds = normalize(
            &load_dataset_with_schema(&csv, &schema_set).unwrap(),
            &schema_set,
        )
        .unwrap();
        let scores_csv = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
        for (row, line) in scores_csv.lines().skip(1).enumerate() {
            let written: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            let cells = row_cells(&ds, row, model.feature_names()).unwrap();
            assert_eq!(written, model.proba_for_cells(&cells).unwrap(), "row {row}");
        }
    }

    #[test]
    fn failed_runs_remove_their_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, _) = generate_tiny(dir.path());
        let out = dir.path().join("failing");
        // Schema path that exists but is not a schema → fails after the
        // output directory is prepared.
        let config = RunConfig {
            data: Some(csv.clone()),
            schema: Some(csv),
            ..quick_config(Mode::Validate, &out)
        };
        let err = run_pipeline(&config).unwrap_err();
        assert!(
            matches!(&err, Error::Stage { stage, .. } if stage == "validate"),
            "stage-tagged error, got: {err}"
        );
        assert!(!out.join("report.json").exists());
        assert!(!out.join("manifest.json").exists());
    }

    #[test]
    fn sink_discard_removes_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = Sink::new(dir.path()).unwrap();
        sink.write("a.txt", "hello").unwrap();
        let b = sink.path("b.txt");
        fs::write(&b, "world").unwrap();
        assert!(dir.path().join("a.txt").exists() && b.exists());
        sink.discard_all();
        assert!(!dir.path().join("a.txt").exists() && !b.exists());
    }

    #[test]
    fn config_json_round_trips_with_defaults() {
        let config: RunConfig = serde_json::from_str(r#"{ "mode": "search", "seed": 5 }"#).unwrap();
        assert_eq!(config.mode, Mode::Search);
        assert_eq!(config.seed, 5);
        assert_eq!(config.threshold_level, 0.05);
        assert_eq!(config.out, PathBuf::from("reports"));
        let echoed: RunConfig = serde_json::from_str(&to_pretty_json(&config).unwrap()).unwrap();
        assert_eq!(echoed, config);
    }

    #[test]
    fn score_requires_a_model() {
        let dir = tempfile::tempdir().unwrap();
        let (csv, schema) = generate_tiny(dir.path());
        let config = RunConfig {
            data: Some(csv),
            schema: Some(schema),
            model: None,
            ..quick_config(Mode::Score, dir.path())
        };
        let err = run_pipeline(&config).unwrap_err();
        assert!(err.to_string().contains("--model"), "{err}");
    }
}
