//! Column schemas: feature kinds, derivation rules and the schema file.
//!
//! A schema file is a JSON document listing one [`FeatureSchema`] per column,
//! the name of the binary label column, and optionally the name of the
//! anchor-date column used by relative-date derivations. Columns that carry a
//! [`DerivationRule`] are not read from the CSV; they are computed by
//! [`crate::dataset::apply_derivations`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a column holds. Every column has exactly one kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Real-valued measurement.
    Numerical,
    /// Single categorical instance per cell.
    Categorical,
    /// Zero or more answers per cell, separated by `;`, drawn from a fixed
    /// vocabulary. Expanded to one-hot indicator columns before modelling.
    MultiAnswer,
    /// ISO-8601 calendar date (`YYYY-MM-DD`). Dates enter the model only
    /// through relative-day derivations.
    Date,
}

/// Deterministic rule computing a derived column from existing columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DerivationRule {
    /// `weight / (height/100)^2` from a height column (cm) and a weight
    /// column (kg).
    BmiFromHeightWeight { height: String, weight: String },
    /// Signed whole-day difference `event - anchor`. When `anchor` is absent
    /// the schema-level anchor column is used.
    DaysRelativeToAnchor {
        event: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<String>,
    },
    /// Weighted sum of numerical input columns, one coefficient per input.
    LinearCombination {
        inputs: Vec<String>,
        coefficients: Vec<f64>,
    },
}

impl DerivationRule {
    /// Names of the columns this rule reads, including the resolved anchor.
    pub fn input_names<'a>(&'a self, default_anchor: Option<&'a str>) -> Vec<&'a str> {
        match self {
            DerivationRule::BmiFromHeightWeight { height, weight } => {
                vec![height.as_str(), weight.as_str()]
            }
            DerivationRule::DaysRelativeToAnchor { event, anchor } => {
                let mut v = vec![event.as_str()];
                if let Some(a) = anchor.as_deref().or(default_anchor) {
                    v.push(a);
                }
                v
            }
            DerivationRule::LinearCombination { inputs, .. } => {
                inputs.iter().map(|s| s.as_str()).collect()
            }
        }
    }
}

/// Declaration of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    /// Full category vocabulary; required for `MultiAnswer` columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Present iff the column is computed rather than loaded from the CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivation: Option<DerivationRule>,
    /// Drop this column once derivations have consumed it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub consumed: bool,
}

impl FeatureSchema {
    pub fn new(name: &str, kind: FeatureKind) -> Self {
        FeatureSchema {
            name: name.to_string(),
            kind,
            unit: None,
            categories: None,
            derivation: None,
            consumed: false,
        }
    }

    pub fn with_derivation(mut self, rule: DerivationRule) -> Self {
        self.derivation = Some(rule);
        self
    }

    pub fn with_categories(mut self, categories: &[&str]) -> Self {
        self.categories = Some(categories.iter().map(|s| s.to_string()).collect());
        self
    }
}

/// The full schema file: column declarations plus label and anchor names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSet {
    pub columns: Vec<FeatureSchema>,
    /// Name of the binary label column (1 = event, 0 = no event). The label
    /// column appears in the CSV but not in `columns`.
    pub label: String,
    /// Default anchor-date column for `DaysRelativeToAnchor` rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

impl SchemaSet {
    pub fn load(path: &Path) -> Result<SchemaSet> {
        let text = std::fs::read_to_string(path)?;
        let schema: SchemaSet = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&FeatureSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Check name uniqueness, vocabulary presence, rule arity and reference
    /// integrity. Cycles among derivations are caught separately when rules
    /// are ordered for evaluation.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate column name '{}'",
                    col.name
                )));
            }
            if col.kind == FeatureKind::MultiAnswer
                && col.categories.as_ref().is_none_or(|c| c.is_empty())
            {
                return Err(Error::Schema(format!(
                    "multi-answer column '{}' must list its category vocabulary",
                    col.name
                )));
            }
            if let Some(DerivationRule::LinearCombination {
                inputs,
                coefficients,
            }) = &col.derivation
            {
                if inputs.len() != coefficients.len() {
                    return Err(Error::Schema(format!(
                        "linear combination '{}' has {} inputs but {} coefficients",
                        col.name,
                        inputs.len(),
                        coefficients.len()
                    )));
                }
            }
        }
        if seen.contains(self.label.as_str()) {
            return Err(Error::Schema(format!(
                "label column '{}' must not appear among feature columns",
                self.label
            )));
        }
        for col in &self.columns {
            if let Some(rule) = &col.derivation {
                for input in rule.input_names(self.anchor.as_deref()) {
                    if !seen.contains(input) {
                        return Err(Error::Schema(format!(
                            "derivation for '{}' references unknown column '{}'",
                            col.name, input
                        )));
                    }
                }
                if let DerivationRule::DaysRelativeToAnchor { anchor, .. } = rule {
                    if anchor.is_none() && self.anchor.is_none() {
                        return Err(Error::Schema(format!(
                            "derivation for '{}' needs an anchor column but the schema declares none",
                            col.name
                        )));
                    }
                }
            }
        }
        if let Some(anchor) = &self.anchor {
            match self.column(anchor) {
                Some(c) if c.kind == FeatureKind::Date => {}
                Some(_) => {
                    return Err(Error::Schema(format!(
                        "anchor column '{anchor}' must be a Date column"
                    )))
                }
                None => {
                    return Err(Error::Schema(format!(
                        "anchor column '{anchor}' not in schema"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Derived columns ordered so that every rule's inputs are computed
    /// before the rule itself runs. Errors on a dependency cycle.
    pub fn derivation_order(&self) -> Result<Vec<usize>> {
        let derived: BTreeMap<&str, usize> = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.derivation.is_some())
            .map(|(i, c)| (c.name.as_str(), i))
            .collect();
        let mut order = Vec::new();
        let mut state: BTreeMap<usize, u8> = BTreeMap::new(); // 1 = visiting, 2 = done
        for &idx in derived.values() {
            self.visit_derivation(idx, &derived, &mut state, &mut order)?;
        }
        Ok(order)
    }

    fn visit_derivation(
        &self,
        idx: usize,
        derived: &BTreeMap<&str, usize>,
        state: &mut BTreeMap<usize, u8>,
        order: &mut Vec<usize>,
    ) -> Result<()> {
        match state.get(&idx) {
            Some(2) => return Ok(()),
            Some(1) => {
                return Err(Error::Config(format!(
                    "derivation cycle involving column '{}'",
                    self.columns[idx].name
                )))
            }
            _ => {}
        }
        state.insert(idx, 1);
        let rule = self.columns[idx]
            .derivation
            .as_ref()
            .expect("derived column");
        for input in rule.input_names(self.anchor.as_deref()) {
            if let Some(&dep) = derived.get(input) {
                self.visit_derivation(dep, derived, state, order)?;
            }
        }
        state.insert(idx, 2);
        order.push(idx);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic_schema() -> SchemaSet {
        SchemaSet {
            columns: vec![
                FeatureSchema::new("HEIGHT", FeatureKind::Numerical),
                FeatureSchema::new("WEIGHT", FeatureKind::Numerical),
                FeatureSchema::new("BMI", FeatureKind::Numerical).with_derivation(
                    DerivationRule::BmiFromHeightWeight {
                        height: "HEIGHT".into(),
                        weight: "WEIGHT".into(),
                    },
                ),
            ],
            label: "DIED".into(),
            anchor: None,
        }
    }

    #[test]
    fn validates_ok() {
        basic_schema().validate().unwrap();
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = basic_schema();
        s.columns
            .push(FeatureSchema::new("HEIGHT", FeatureKind::Numerical));
        assert!(matches!(s.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn multi_answer_needs_vocabulary() {
        let mut s = basic_schema();
        s.columns
            .push(FeatureSchema::new("MEDS", FeatureKind::MultiAnswer));
        assert!(matches!(s.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_rule_input_rejected() {
        let mut s = basic_schema();
        s.columns.push(
            FeatureSchema::new("X", FeatureKind::Numerical).with_derivation(
                DerivationRule::LinearCombination {
                    inputs: vec!["NOPE".into()],
                    coefficients: vec![1.0],
                },
            ),
        );
        assert!(matches!(s.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn lincomb_arity_checked() {
        let mut s = basic_schema();
        s.columns.push(
            FeatureSchema::new("X", FeatureKind::Numerical).with_derivation(
                DerivationRule::LinearCombination {
                    inputs: vec!["HEIGHT".into(), "WEIGHT".into()],
                    coefficients: vec![1.0],
                },
            ),
        );
        assert!(matches!(s.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn derivation_cycle_detected() {
        let s = SchemaSet {
            columns: vec![
                FeatureSchema::new("A", FeatureKind::Numerical).with_derivation(
                    DerivationRule::LinearCombination {
                        inputs: vec!["B".into()],
                        coefficients: vec![1.0],
                    },
                ),
                FeatureSchema::new("B", FeatureKind::Numerical).with_derivation(
                    DerivationRule::LinearCombination {
                        inputs: vec!["A".into()],
                        coefficients: vec![1.0],
                    },
                ),
            ],
            label: "Y".into(),
            anchor: None,
        };
        s.validate().unwrap();
        assert!(matches!(s.derivation_order(), Err(Error::Config(_))));
    }

    #[test]
    fn derivation_order_respects_dependencies() {
        // C depends on B which depends on raw A.
        let s = SchemaSet {
            columns: vec![
                FeatureSchema::new("C", FeatureKind::Numerical).with_derivation(
                    DerivationRule::LinearCombination {
                        inputs: vec!["B".into()],
                        coefficients: vec![2.0],
                    },
                ),
                FeatureSchema::new("A", FeatureKind::Numerical),
                FeatureSchema::new("B", FeatureKind::Numerical).with_derivation(
                    DerivationRule::LinearCombination {
                        inputs: vec!["A".into()],
                        coefficients: vec![1.0],
                    },
                ),
            ],
            label: "Y".into(),
            anchor: None,
        };
        let order = s.derivation_order().unwrap();
        let pos = |name: &str| {
            order
                .iter()
                .position(|&i| s.columns[i].name == name)
                .unwrap()
        };
        assert!(pos("B") < pos("C"));
    }

    #[test]
    fn schema_json_round_trip() {
        let s = basic_schema();
        let text = serde_json::to_string(&s).unwrap();
        let back: SchemaSet = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
