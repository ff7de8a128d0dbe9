//! Synthetic cohort generation from declared class-conditional marginals:
//! truncated normal draws for numerical features, exact instance multisets
//! for categorical ones, and exact per-class missing counts. Everything is
//! driven by one seed, so a spec generates identical bytes every time.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::schema::{FeatureKind, FeatureSchema, SchemaSet};

/// Ready-to-use cohort description bundled with the library: 270 patients
/// (240 negative / 30 positive), 13 mixed-type features with realistic
/// per-class marginals and missingness.
pub const BUNDLED_COHORT_SPEC_JSON: &str = include_str!("../data/cohort_spec.json");

/// Rejection-sampling cap for truncated normal draws. Means are validated
/// to lie inside the range, so hitting this indicates a hostile spec.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

/// Per-class marginal of one numerical feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub mean: f64,
    pub sd: f64,
    /// Observed (non-missing) count; the rest of the class is missing.
    pub sample: usize,
}

/// Per-class marginal of one categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalStats {
    /// Instance → exact count. Zero counts are allowed and document
    /// instances absent from a class.
    pub instances: BTreeMap<String, usize>,
}

impl CategoricalStats {
    pub fn sample(&self) -> usize {
        self.instances.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Numerical {
        #[serde(default)]
        unit: Option<String>,
        /// Physical bounds the draws are truncated to.
        #[serde(default)]
        range: Option<(f64, f64)>,
        negative: NumericStats,
        positive: NumericStats,
    },
    Categorical {
        negative: CategoricalStats,
        positive: CategoricalStats,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFeature {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    /// Whether the class marginals differ enough to carry label signal.
    #[serde(default)]
    pub signal: bool,
    #[serde(flatten)]
    pub marginal: Marginal,
}

/// Declarative description of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub label: String,
    pub n_per_class: ClassCounts,
    pub seed: u64,
    pub features: Vec<SynthFeature>,
}

impl SynthSpec {
    pub fn from_json(json: &str) -> Result<SynthSpec> {
        let spec: SynthSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::Config("spec needs a label column name".into()));
        }
        if self.n_per_class.negative == 0 || self.n_per_class.positive == 0 {
            return Err(Error::Config("both classes need at least one row".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Config("spec declares no features".into()));
        }
        let mut names = BTreeSet::new();
        for feature in &self.features {
            if feature.name.is_empty() || !names.insert(&feature.name) {
                return Err(Error::Config(format!(
                    "feature name '{}' is empty or duplicated",
                    feature.name
                )));
            }
            let class_sizes = [self.n_per_class.negative, self.n_per_class.positive];
            match &feature.marginal {
                Marginal::Numerical {
                    range,
                    negative,
                    positive,
                    ..
                } => {
                    for (stats, class_size) in [negative, positive].into_iter().zip(class_sizes) {
                        if stats.sample > class_size {
                            return Err(Error::Config(format!(
                                "feature '{}': sample {} exceeds class size {class_size}",
                                feature.name, stats.sample
                            )));
                        }
                        if !stats.mean.is_finite() || !stats.sd.is_finite() || stats.sd < 0.0 {
                            return Err(Error::Config(format!(
                                "feature '{}': mean/SD must be finite with SD ≥ 0",
                                feature.name
                            )));
                        }
                        if let Some((lo, hi)) = range {
                            if !(lo < hi) {
                                return Err(Error::Config(format!(
                                    "feature '{}': empty range [{lo}, {hi}]",
                                    feature.name
                                )));
                            }
                            if stats.mean < *lo || stats.mean > *hi {
                                return Err(Error::Config(format!(
                                    "feature '{}': mean {} outside range [{lo}, {hi}]",
                                    feature.name, stats.mean
                                )));
                            }
                        }
                    }
                }
                Marginal::Categorical { negative, positive } => {
                    for (stats, class_size) in [negative, positive].into_iter().zip(class_sizes) {
                        if stats.sample() > class_size {
                            return Err(Error::Config(format!(
                                "feature '{}': instance counts sum to {} but the class has {class_size} rows",
                                feature.name,
                                stats.sample()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Schema describing the generated CSV, consumable by the loader.
    pub fn schema_set(&self) -> SchemaSet {
        let columns = self
            .features
            .iter()
            .map(|feature| match &feature.marginal {
                Marginal::Numerical { unit, .. } => {
                    let mut schema = FeatureSchema::new(&feature.name, FeatureKind::Numerical);
                    schema.unit = unit.clone();
                    schema
                }
                Marginal::Categorical { negative, positive } => {
                    let categories: Vec<&str> = negative
                        .instances
                        .keys()
                        .chain(positive.instances.keys())
                        .map(String::as_str)
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    FeatureSchema::new(&feature.name, FeatureKind::Categorical)
                        .with_categories(&categories)
                }
            })
            .collect();
        SchemaSet {
            columns,
            label: self.label.clone(),
            anchor: None,
        }
    }
}

/// Parse and validate the bundled cohort description.
pub fn bundled_spec() -> Result<SynthSpec> {
    SynthSpec::from_json(BUNDLED_COHORT_SPEC_JSON)
}

/// Exactly `amount` distinct positions in `0..class_size`, uniform per seed.
fn missing_positions(rng: &mut ChaCha8Rng, class_size: usize, amount: usize) -> Vec<bool> {
    let mut missing = vec![false; class_size];
    for idx in rand::seq::index::sample(rng, class_size, amount) {
        missing[idx] = true;
    }
    missing
}

fn generate_numeric_class(
    name: &str,
    stats: &NumericStats,
    range: Option<(f64, f64)>,
    class_size: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = missing_positions(&mut rng, class_size, class_size - stats.sample);
    if stats.sd == 0.0 {
        return Ok(missing
            .into_iter()
            .map(|m| if m { None } else { Some(stats.mean) })
            .collect());
    }
    let normal = Normal::new(stats.mean, stats.sd)
        .map_err(|e| Error::Config(format!("feature '{name}': {e}")))?;
    missing
        .into_iter()
        .map(|is_missing| {
            if is_missing {
                return Ok(None);
            }
            for _ in 0..MAX_REJECTIONS {
                let value = normal.sample(&mut rng);
                let inside = range.is_none_or(|(lo, hi)| value >= lo && value <= hi);
                if inside {
                    return Ok(Some(value));
                }
            }
            Err(Error::Domain(format!(
                "feature '{name}': truncation rejected {MAX_REJECTIONS} consecutive draws"
            )))
        })
        .collect()
}

fn generate_categorical_class(
    stats: &CategoricalStats,
    class_size: usize,
    seed: u64,
) -> Vec<Option<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<&str> = stats
        .instances
        .iter()
        .flat_map(|(instance, &count)| std::iter::repeat_n(instance.as_str(), count))
        .collect();
    pool.shuffle(&mut rng);
    let missing = missing_positions(&mut rng, class_size, class_size - pool.len());
    let mut next = pool.into_iter();
    missing
        .into_iter()
        .map(|is_missing| {
            if is_missing {
                None
            } else {
                Some(
                    next.next()
                        .expect("pool covers non-missing rows")
                        .to_string(),
                )
            }
        })
        .collect()
}

/// Generate the cohort: negative-class rows first, then positive-class
/// rows, with every feature drawn from its own deterministic substream.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let n_neg = spec.n_per_class.negative;
    let n_pos = spec.n_per_class.positive;
    let mut labels = vec![0u8; n_neg];
    labels.extend(std::iter::repeat_n(1u8, n_pos));

    let schema_set = spec.schema_set();
    let mut columns = Vec::with_capacity(spec.features.len());
    for (index, feature) in spec.features.iter().enumerate() {
        let schema = schema_set.columns[index].clone();
        let negative_seed = derive_seed(spec.seed, index as u64, 0);
        let positive_seed = derive_seed(spec.seed, index as u64, 1);
        let column = match &feature.marginal {
            Marginal::Numerical {
                range,
                negative,
                positive,
                ..
            } => {
                let mut values =
                    generate_numeric_class(&feature.name, negative, *range, n_neg, negative_seed)?;
                values.extend(generate_numeric_class(
                    &feature.name,
                    positive,
                    *range,
                    n_pos,
                    positive_seed,
                )?);
                Column::numeric(schema, values)
            }
            Marginal::Categorical { negative, positive } => {
                let mut values = generate_categorical_class(negative, n_neg, negative_seed);
                values.extend(generate_categorical_class(positive, n_pos, positive_seed));
                Column::text(schema, values)
            }
        };
        columns.push(column);
    }
    Dataset::new(columns, labels, &spec.label)
}
