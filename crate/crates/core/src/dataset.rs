//! Column-major typed table with an explicit missing-value mask, plus the
//! deterministic feature derivations applied after loading.
//!
//! Missing cells are marked in the mask and their stored values are
//! canonical defaults that downstream code never reads. On input the empty
//! string and the literal `NA` mark a missing cell; on output missing cells
//! are written as the empty string.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::schema::{DerivationRule, FeatureKind, FeatureSchema, SchemaSet};

/// Intra-cell separator for multi-answer columns.
pub const MULTI_ANSWER_SEPARATOR: char = ';';

const DEFAULT_DATE: NaiveDate = NaiveDate::MIN;

fn is_na_token(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Typed storage for one column. Masked positions hold canonical defaults.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Text(Vec<String>),
    Date(Vec<NaiveDate>),
}

impl ColumnData {
    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::Date(v) => v.len(),
        }
    }
}

/// One column: its schema, values and missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub schema: FeatureSchema,
    pub data: ColumnData,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn numeric(schema: FeatureSchema, values: Vec<Option<f64>>) -> Column {
        let missing: Vec<bool> = values.iter().map(|v| v.is_none()).collect();
        let data = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Column {
            schema,
            data: ColumnData::Numeric(data),
            missing,
        }
    }

    pub fn text(schema: FeatureSchema, values: Vec<Option<String>>) -> Column {
        let missing: Vec<bool> = values.iter().map(|v| v.is_none()).collect();
        let data = values.into_iter().map(|v| v.unwrap_or_default()).collect();
        Column {
            schema,
            data: ColumnData::Text(data),
            missing,
        }
    }

    pub fn date(schema: FeatureSchema, values: Vec<Option<NaiveDate>>) -> Column {
        let missing: Vec<bool> = values.iter().map(|v| v.is_none()).collect();
        let data = values
            .into_iter()
            .map(|v| v.unwrap_or(DEFAULT_DATE))
            .collect();
        Column {
            schema,
            data: ColumnData::Date(data),
            missing,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    /// Numeric value at `row`, `None` when missing. Panics if the column is
    /// not numeric.
    pub fn numeric_at(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Numeric(v) if !self.missing[row] => Some(v[row]),
            ColumnData::Numeric(_) => None,
            _ => panic!("column '{}' is not numeric", self.schema.name),
        }
    }

    pub fn text_at(&self, row: usize) -> Option<&str> {
        match &self.data {
            ColumnData::Text(v) if !self.missing[row] => Some(v[row].as_str()),
            ColumnData::Text(_) => None,
            _ => panic!("column '{}' is not text", self.schema.name),
        }
    }

    pub fn date_at(&self, row: usize) -> Option<NaiveDate> {
        match &self.data {
            ColumnData::Date(v) if !self.missing[row] => Some(v[row]),
            ColumnData::Date(_) => None,
            _ => panic!("column '{}' is not a date", self.schema.name),
        }
    }

    /// Cell rendered the way it appears in a CSV (missing as empty string).
    pub fn render(&self, row: usize) -> String {
        if self.missing[row] {
            return String::new();
        }
        match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Text(v) => v[row].clone(),
            ColumnData::Date(v) => v[row].format("%Y-%m-%d").to_string(),
        }
    }
}

/// Column-major dataset with a binary label vector (1 = event).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    label: Vec<u8>,
    label_name: String,
    n_rows: usize,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, label: Vec<u8>, label_name: &str) -> Result<Dataset> {
        let n_rows = label.len();
        for col in &columns {
            if col.data.len() != n_rows || col.missing.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column '{}' has {} rows, expected {}",
                    col.schema.name,
                    col.data.len(),
                    n_rows
                )));
            }
        }
        if let Some(bad) = label.iter().find(|&&l| l > 1) {
            return Err(Error::Schema(format!("label value {bad} is not binary")));
        }
        Ok(Dataset {
            columns,
            label,
            label_name: label_name.to_string(),
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.schema.name == name)
    }

    pub fn label(&self) -> &[u8] {
        &self.label
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Columns that feed the model: numerical and categorical ones. Date
    /// columns only serve derivations; multi-answer columns must have been
    /// expanded first.
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| {
            matches!(
                c.schema.kind,
                FeatureKind::Numerical | FeatureKind::Categorical
            )
        })
    }

    /// Restrict the dataset to the named feature columns, in the given
    /// order. Labels are kept as-is.
    pub fn select_columns(&self, names: &[String]) -> Result<Dataset> {
        let columns: Vec<Column> = names
            .iter()
            .map(|name| {
                self.column(name)
                    .cloned()
                    .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
            })
            .collect::<Result<_>>()?;
        Dataset::new(columns, self.label.clone(), &self.label_name)
    }

    /// Write the dataset (all columns plus the label) as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self
            .columns
            .iter()
            .map(|c| c.schema.name.as_str())
            .collect();
        header.push(&self.label_name);
        writer.write_record(&header)?;
        for row in 0..self.n_rows {
            let mut record: Vec<String> = self.columns.iter().map(|c| c.render(row)).collect();
            record.push(self.label[row].to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Load a CSV cohort against its schema.
///
/// Every non-derived schema column must appear in the CSV header, the label
/// column must be present, and no unknown columns are allowed. Row order is
/// preserved; columns are reordered to schema order.
pub fn load_dataset(csv_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema = SchemaSet::load(schema_path)?;
    load_dataset_with_schema(csv_path, &schema)
}

pub fn load_dataset_with_schema(csv_path: &Path, schema: &SchemaSet) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(csv_path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let known: BTreeSet<&str> = schema
        .columns
        .iter()
        .filter(|c| c.derivation.is_none())
        .map(|c| c.name.as_str())
        .collect();
    for name in &header {
        if name != &schema.label && !known.contains(name.as_str()) {
            return Err(Error::Schema(format!("unknown CSV column '{name}'")));
        }
    }
    let position = |name: &str| header.iter().position(|h| h == name);
    let label_pos = position(&schema.label).ok_or_else(|| {
        Error::Schema(format!("label column '{}' missing from CSV", schema.label))
    })?;
    let mut loadable: Vec<(usize, &FeatureSchema)> = Vec::new();
    for col in schema.columns.iter().filter(|c| c.derivation.is_none()) {
        let pos = position(&col.name).ok_or_else(|| {
            Error::Schema(format!("schema column '{}' missing from CSV", col.name))
        })?;
        loadable.push((pos, col));
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        cells.push(record.iter().map(|c| c.to_string()).collect());
    }
    let n_rows = cells.len();

    let mut label = Vec::with_capacity(n_rows);
    for (row, record) in cells.iter().enumerate() {
        let cell = &record[label_pos];
        match cell.as_str() {
            "0" => label.push(0),
            "1" => label.push(1),
            _ if is_na_token(cell) => {
                return Err(Error::Row {
                    row,
                    message: format!("label column '{}' has no value", schema.label),
                })
            }
            other => {
                return Err(Error::Row {
                    row,
                    message: format!(
                        "label column '{}' holds '{other}', expected 0 or 1",
                        schema.label
                    ),
                })
            }
        }
    }

    let mut columns = Vec::with_capacity(loadable.len());
    for (pos, col_schema) in loadable {
        let column = parse_column(col_schema, cells.iter().map(|r| r[pos].as_str()))?;
        columns.push(column);
    }
    Dataset::new(columns, label, &schema.label)
}

fn parse_column<'a>(
    schema: &FeatureSchema,
    cells: impl Iterator<Item = &'a str>,
) -> Result<Column> {
    let cell_err = |row: usize, message: String| Error::Cell {
        row,
        column: schema.name.clone(),
        message,
    };
    match schema.kind {
        FeatureKind::Numerical => {
            let mut values = Vec::new();
            for (row, cell) in cells.enumerate() {
                if is_na_token(cell) {
                    values.push(None);
                } else {
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| cell_err(row, format!("cannot parse '{cell}' as a number")))?;
                    if !v.is_finite() {
                        return Err(cell_err(row, format!("non-finite numeric value '{cell}'")));
                    }
                    values.push(Some(v));
                }
            }
            Ok(Column::numeric(schema.clone(), values))
        }
        FeatureKind::Categorical | FeatureKind::MultiAnswer => {
            let values = cells
                .map(|cell| {
                    if is_na_token(cell) {
                        None
                    } else {
                        Some(cell.to_string())
                    }
                })
                .collect();
            Ok(Column::text(schema.clone(), values))
        }
        FeatureKind::Date => {
            let mut values = Vec::new();
            for (row, cell) in cells.enumerate() {
                if is_na_token(cell) {
                    values.push(None);
                } else {
                    let d = NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| {
                        cell_err(row, format!("cannot parse '{cell}' as YYYY-MM-DD"))
                    })?;
                    values.push(Some(d));
                }
            }
            Ok(Column::date(schema.clone(), values))
        }
    }
}

/// `weight / (height/100)^2`, in kg/m². Either input missing makes the
/// output missing; non-positive inputs are a domain error.
pub fn derive_bmi(height_cm: Option<f64>, weight_kg: Option<f64>) -> Result<Option<f64>> {
    match (height_cm, weight_kg) {
        (Some(h), Some(w)) => {
            if h <= 0.0 || w <= 0.0 {
                return Err(Error::Domain(format!(
                    "BMI inputs must be positive, got height {h} cm, weight {w} kg"
                )));
            }
            let meters = h / 100.0;
            Ok(Some(w / (meters * meters)))
        }
        _ => Ok(None),
    }
}

/// Signed whole-day difference `event - anchor`; events before the anchor
/// are negative. A missing event yields a missing output; a missing anchor
/// is a row error signalled by the caller (the anchor date must exist).
pub fn relativize_date(event: Option<NaiveDate>, anchor: NaiveDate) -> Option<i64> {
    event.map(|e| (e - anchor).num_days())
}

/// Expand a multi-answer column into one 0/1 indicator column per
/// vocabulary entry, named `<base>__<category>`. Missing cells make every
/// indicator missing; answers outside the vocabulary are a cell error.
pub fn expand_multi_answer(column: &Column, vocabulary: &[String]) -> Result<Vec<Column>> {
    let n = column.missing.len();
    let mut indicators: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); vocabulary.len()];
    for row in 0..n {
        match column.text_at(row) {
            None => {
                for ind in indicators.iter_mut() {
                    ind.push(None);
                }
            }
            Some(cell) => {
                let answers: Vec<&str> = if cell.is_empty() {
                    Vec::new()
                } else {
                    cell.split(MULTI_ANSWER_SEPARATOR).collect()
                };
                for answer in &answers {
                    if !vocabulary.iter().any(|v| v == answer) {
                        return Err(Error::Cell {
                            row,
                            column: column.schema.name.clone(),
                            message: format!("answer '{answer}' not in vocabulary"),
                        });
                    }
                }
                for (ind, category) in indicators.iter_mut().zip(vocabulary) {
                    let hit = answers.iter().any(|a| a == category);
                    ind.push(Some(if hit { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    Ok(indicators
        .into_iter()
        .zip(vocabulary)
        .map(|(values, category)| {
            let name = format!("{}__{}", column.schema.name, category);
            let mut schema = FeatureSchema::new(&name, FeatureKind::Numerical);
            schema.unit = Some("indicator".to_string());
            Column::numeric(schema, values)
        })
        .collect())
}

/// Compute every derived column declared in the schema and append it, then
/// drop columns the schema marks as consumed. Deterministic; errors on
/// derivation cycles.
pub fn apply_derivations(dataset: &Dataset, schema: &SchemaSet) -> Result<Dataset> {
    let order = schema.derivation_order()?;
    let mut columns = dataset.columns().to_vec();
    let find = |columns: &[Column], name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| c.schema.name == name)
            .ok_or_else(|| Error::Schema(format!("derivation input '{name}' not present")))
    };

    // Evaluate rules in dependency order, then append in schema order so the
    // output layout does not depend on rule topology.
    let mut computed: Vec<(usize, Column)> = Vec::new();
    for idx in order {
        let col_schema = &schema.columns[idx];
        let rule = col_schema.derivation.as_ref().expect("derived column");
        let n = dataset.n_rows();
        let values: Vec<Option<f64>> = match rule {
            DerivationRule::BmiFromHeightWeight { height, weight } => {
                let h = &columns[find(&columns, height)?];
                let w = &columns[find(&columns, weight)?];
                (0..n)
                    .map(|row| derive_bmi(h.numeric_at(row), w.numeric_at(row)))
                    .collect::<Result<_>>()?
            }
            DerivationRule::DaysRelativeToAnchor { event, anchor } => {
                let anchor_name = anchor
                    .as_deref()
                    .or(schema.anchor.as_deref())
                    .ok_or_else(|| Error::Schema("relative-date rule has no anchor".into()))?;
                let event_col = &columns[find(&columns, event)?];
                let anchor_col = &columns[find(&columns, anchor_name)?];
                let mut out = Vec::with_capacity(n);
                for row in 0..n {
                    let anchor_date = anchor_col.date_at(row).ok_or(Error::Row {
                        row,
                        message: format!("anchor date '{anchor_name}' is missing"),
                    })?;
                    out.push(
                        relativize_date(event_col.date_at(row), anchor_date).map(|d| d as f64),
                    );
                }
                out
            }
            DerivationRule::LinearCombination {
                inputs,
                coefficients,
            } => {
                let input_cols: Vec<usize> = inputs
                    .iter()
                    .map(|name| find(&columns, name))
                    .collect::<Result<_>>()?;
                (0..n)
                    .map(|row| {
                        let mut acc = 0.0;
                        for (&ci, coef) in input_cols.iter().zip(coefficients) {
                            match columns[ci].numeric_at(row) {
                                Some(v) => acc += coef * v,
                                None => return None,
                            }
                        }
                        Some(acc)
                    })
                    .collect()
            }
        };
        let column = Column::numeric(col_schema.clone(), values);
        computed.push((idx, column));
        // Later rules may read this column.
        columns.push(computed.last().unwrap().1.clone());
    }
    columns.truncate(dataset.columns().len());
    computed.sort_by_key(|(idx, _)| *idx);
    columns.extend(computed.into_iter().map(|(_, c)| c));

    let consumed: BTreeSet<&str> = schema
        .columns
        .iter()
        .filter(|c| c.consumed)
        .map(|c| c.name.as_str())
        .collect();
    columns.retain(|c| !consumed.contains(c.schema.name.as_str()));

    Dataset::new(columns, dataset.label().to_vec(), dataset.label_name())
}

/// Replace every multi-answer column with its indicator columns, in place.
pub fn expand_multi_answers(dataset: &Dataset) -> Result<Dataset> {
    let mut columns: Vec<Column> = Vec::new();
    for col in dataset.columns() {
        if col.schema.kind == FeatureKind::MultiAnswer {
            let vocabulary = col.schema.categories.as_ref().ok_or_else(|| {
                Error::Schema(format!(
                    "multi-answer column '{}' lacks a vocabulary",
                    col.schema.name
                ))
            })?;
            columns.extend(expand_multi_answer(col, vocabulary)?);
        } else {
            columns.push(col.clone());
        }
    }
    Dataset::new(columns, dataset.label().to_vec(), dataset.label_name())
}

/// The full post-load normalization: derivations, then multi-answer
/// expansion. The result is what encoders and models consume.
pub fn normalize(dataset: &Dataset, schema: &SchemaSet) -> Result<Dataset> {
    let derived = apply_derivations(dataset, schema)?;
    expand_multi_answers(&derived)
}
