//! Typed tabular data with explicit missingness.
//!
//! A [`DataTable`] stores one `Option<f64>` per cell; `None` is a missing
//! cell, so the observed/missing mask can never disagree with the values.
//! Binary columns hold `0.0`/`1.0`, categorical columns hold numeric level
//! codes.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{fmt_f64, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Outcome,
    Predictor,
    Auxiliary,
    Excluded,
}

/// Variance-stabilizing transform applied to a skewed column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Log,
    Sqrt,
    #[default]
    None,
}

impl Transform {
    /// Natural log or square root; `None` outside the domain.
    pub fn apply(self, x: f64) -> Option<f64> {
        match self {
            Transform::Log if x > 0.0 => Some(x.ln()),
            Transform::Sqrt if x >= 0.0 => Some(x.sqrt()),
            Transform::None => Some(x),
            _ => None,
        }
    }

    pub fn invert(self, y: f64) -> f64 {
        match self {
            Transform::Log => y.exp(),
            Transform::Sqrt => y * y,
            Transform::None => y,
        }
    }

    /// Name of the derived column, e.g. `log_ALT`.
    pub fn derived_name(self, source: &str) -> String {
        match self {
            Transform::Log => format!("log_{source}"),
            Transform::Sqrt => format!("sqrt_{source}"),
            Transform::None => source.to_string(),
        }
    }

    fn domain_message(self) -> &'static str {
        match self {
            Transform::Log => "log requires a strictly positive value",
            Transform::Sqrt => "sqrt requires a non-negative value",
            Transform::None => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: Role,
    #[serde(default)]
    pub transform: Transform,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: Role) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            role,
            transform: Transform::None,
        }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Continuous, Role::Predictor)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Binary, Role::Predictor)
    }

    pub fn outcome(name: impl Into<String>) -> Self {
        Self::new(name, ColumnKind::Binary, Role::Outcome)
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

/// Rectangular dataset, column-major, with `None` marking missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTable {
    columns: Vec<ColumnSpec>,
    values: Vec<Vec<Option<f64>>>,
    n_rows: usize,
}

impl DataTable {
    pub fn new(columns: Vec<ColumnSpec>, values: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if columns.len() != values.len() {
            return Err(Error::Schema(format!(
                "{} column specs but {} value columns",
                columns.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
        }
        let n_rows = values.first().map_or(0, Vec::len);
        for (spec, col) in columns.iter().zip(&values) {
            if col.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            for (row, v) in col.iter().enumerate() {
                let Some(v) = *v else { continue };
                if !v.is_finite() {
                    return Err(Error::Domain {
                        row,
                        column: spec.name.clone(),
                        message: "non-finite value".into(),
                    });
                }
                if spec.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::Domain {
                        row,
                        column: spec.name.clone(),
                        message: format!("binary column holds {v}"),
                    });
                }
            }
        }
        Ok(DataTable {
            columns,
            values,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn spec(&self, col: usize) -> &ColumnSpec {
        &self.columns[col]
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
    }

    pub fn column(&self, col: usize) -> &[Option<f64>] {
        &self.values[col]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[Option<f64>]> {
        self.index_of(name).map(|i| self.values[i].as_slice())
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[col][row]
    }

    /// Response indicator: `true` when the cell is observed.
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.values[col][row].is_some()
    }

    pub fn missing_count(&self, col: usize) -> usize {
        self.values[col].iter().filter(|v| v.is_none()).count()
    }

    pub fn total_missing(&self) -> usize {
        (0..self.n_cols()).map(|c| self.missing_count(c)).sum()
    }

    pub fn row_is_complete(&self, row: usize) -> bool {
        self.values.iter().all(|c| c[row].is_some())
    }

    /// Index of the unique outcome column, which must be binary.
    pub fn outcome_index(&self) -> Result<usize> {
        let outcomes: Vec<usize> = (0..self.n_cols())
            .filter(|&c| self.columns[c].role == Role::Outcome)
            .collect();
        match outcomes.as_slice() {
            [c] if self.columns[*c].kind == ColumnKind::Binary => Ok(*c),
            [c] => Err(Error::Schema(format!(
                "outcome column `{}` must be binary",
                self.columns[*c].name
            ))),
            [] => Err(Error::Schema("no outcome column".into())),
            _ => Err(Error::Schema("more than one outcome column".into())),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        let values = self
            .values
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        DataTable {
            columns: self.columns.clone(),
            values,
            n_rows: rows.len(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<DataTable> {
        let idx: Vec<usize> = names.iter().map(|n| self.require(n)).collect::<Result<_>>()?;
        DataTable::new(
            idx.iter().map(|&i| self.columns[i].clone()).collect(),
            idx.iter().map(|&i| self.values[i].clone()).collect(),
        )
    }

    pub fn push_column(&mut self, spec: ColumnSpec, values: Vec<Option<f64>>) -> Result<()> {
        let mut columns = self.columns.clone();
        columns.push(spec);
        let mut all = self.values.clone();
        all.push(values);
        *self = DataTable::new(columns, all)?;
        Ok(())
    }

    pub fn set_role(&mut self, col: usize, role: Role) {
        self.columns[col].role = role;
    }

    pub(crate) fn into_parts(self) -> (Vec<ColumnSpec>, Vec<Vec<Option<f64>>>) {
        (self.columns, self.values)
    }

    pub(crate) fn from_parts_unchecked(columns: Vec<ColumnSpec>, values: Vec<Vec<Option<f64>>>) -> Self {
        let n_rows = values.first().map_or(0, Vec::len);
        DataTable {
            columns,
            values,
            n_rows,
        }
    }
}

fn is_missing_token(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

/// Reads a CSV whose header names the schema's columns in any order.
pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSpec]) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut position = Vec::with_capacity(schema.len());
    for spec in schema {
        match header.iter().position(|h| *h == spec.name) {
            Some(p) => position.push(p),
            None => {
                return Err(Error::Schema(format!(
                    "header is missing column `{}`",
                    spec.name
                )))
            }
        }
    }
    if let Some(extra) = header.iter().find(|h| !schema.iter().any(|s| &s.name == *h)) {
        return Err(Error::Schema(format!("column `{extra}` is not in the schema")));
    }

    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (c, spec) in schema.iter().enumerate() {
            let cell = record.get(position[c]).unwrap_or("");
            let v = if is_missing_token(cell) {
                None
            } else {
                let parsed: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: spec.name.clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                Some(parsed)
            };
            values[c].push(v);
        }
    }
    DataTable::new(schema.to_vec(), values)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<DataTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

/// Writes the table with `NA` for missing cells and round-trip float formatting.
pub fn write_csv<W: Write>(t: &DataTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(t.names())?;
    let mut record = Vec::with_capacity(t.n_cols());
    for row in 0..t.n_rows() {
        record.clear();
        for col in 0..t.n_cols() {
            record.push(match t.value(row, col) {
                Some(v) => fmt_f64(v),
                None => "NA".to_string(),
            });
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(t: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(t, &mut buf)?;
    crate::util::write_file(path.as_ref(), &String::from_utf8_lossy(&buf))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowFilterReport {
    pub removed: usize,
    pub kept: usize,
    /// Indices (in the input table) of the removed rows.
    pub removed_rows: Vec<usize>,
}

/// Drops rows whose fraction of missing predictor cells is at least `threshold`.
pub fn filter_high_missing_rows(t: &DataTable, threshold: f64) -> Result<(DataTable, RowFilterReport)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Precondition(format!(
            "row filter threshold must be in (0, 1], got {threshold}"
        )));
    }
    let predictors: Vec<usize> = (0..t.n_cols())
        .filter(|&c| t.spec(c).role == Role::Predictor)
        .collect();
    let mut kept = Vec::with_capacity(t.n_rows());
    let mut removed_rows = Vec::new();
    for row in 0..t.n_rows() {
        let missing = predictors.iter().filter(|&&c| !t.is_observed(row, c)).count();
        let frac = if predictors.is_empty() {
            0.0
        } else {
            missing as f64 / predictors.len() as f64
        };
        if !predictors.is_empty() && frac >= threshold {
            removed_rows.push(row);
        } else {
            kept.push(row);
        }
    }
    let report = RowFilterReport {
        removed: removed_rows.len(),
        kept: kept.len(),
        removed_rows,
    };
    Ok((t.select_rows(&kept), report))
}

/// Rows where the outcome is missing cannot be analysed.
pub fn drop_missing_outcome(t: &DataTable) -> Result<(DataTable, usize)> {
    let y = t.outcome_index()?;
    let keep: Vec<usize> = (0..t.n_rows()).filter(|&r| t.is_observed(r, y)).collect();
    let dropped = t.n_rows() - keep.len();
    Ok((t.select_rows(&keep), dropped))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformEntry {
    pub source: String,
    pub derived: String,
    pub transform: Transform,
}

impl TransformEntry {
    pub fn new(source: impl Into<String>, transform: Transform) -> Self {
        let source = source.into();
        TransformEntry {
            derived: transform.derived_name(&source),
            source,
            transform,
        }
    }
}

/// Which columns get a transformed twin, and under what name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformLedger {
    pub entries: Vec<TransformEntry>,
}

impl TransformLedger {
    /// One entry per column whose spec requests a log or sqrt transform.
    pub fn from_schema(columns: &[ColumnSpec]) -> Self {
        TransformLedger {
            entries: columns
                .iter()
                .filter(|c| c.transform != Transform::None)
                .map(|c| TransformEntry::new(&c.name, c.transform))
                .collect(),
        }
    }

    pub fn derived_of(&self, source: &str) -> Option<&TransformEntry> {
        self.entries.iter().find(|e| e.source == source)
    }

    pub fn source_of(&self, derived: &str) -> Option<&TransformEntry> {
        self.entries.iter().find(|e| e.derived == derived)
    }
}

/// Appends the derived columns of `ledger`.
///
/// A derived column inherits its source's role and the source is demoted to
/// [`Role::Auxiliary`], so the analysis model sees `log_ALT` instead of `ALT`
/// while the imputation model keeps working on the raw scale.
pub fn apply_transforms(t: &DataTable, ledger: &TransformLedger) -> Result<DataTable> {
    let mut out = t.clone();
    for entry in &ledger.entries {
        let src = out.require(&entry.source)?;
        if out.index_of(&entry.derived).is_some() {
            return Err(Error::Schema(format!("derived column `{}` already exists", entry.derived)));
        }
        let mut derived = Vec::with_capacity(out.n_rows());
        for (row, v) in out.column(src).iter().enumerate() {
            derived.push(match v {
                None => None,
                Some(x) => Some(entry.transform.apply(*x).ok_or_else(|| Error::Domain {
                    row,
                    column: entry.source.clone(),
                    message: format!("{} (value {x})", entry.transform.domain_message()),
                })?),
            });
        }
        let source_spec = out.spec(src).clone();
        let spec = ColumnSpec::new(&entry.derived, ColumnKind::Continuous, source_spec.role);
        if source_spec.role == Role::Predictor {
            out.set_role(src, Role::Auxiliary);
        }
        out.push_column(spec, derived)?;
    }
    Ok(out)
}

/// Stratified split on the outcome column; returns `(train, validation)`.
///
/// Each stratum contributes `round(fraction * size)` rows to the training
/// part, clamped so that both parts receive at least one row. Row order is
/// preserved within each part.
pub fn split_train_validation(t: &DataTable, fraction: f64, seed: u64) -> Result<(DataTable, DataTable)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let y = t.outcome_index()?;
    let mut strata: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for row in 0..t.n_rows() {
        let label = t.value(row, y).ok_or_else(|| {
            Error::Stratification(format!("outcome missing at row {row}"))
        })?;
        strata.entry(label as i64).or_default().push(row);
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (stream, (label, rows)) in strata.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::Stratification(format!(
                "stratum {label} has {} row(s); at least 2 are needed",
                rows.len()
            )));
        }
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng_for(seed, stream as u64));
        let n_train = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&shuffled[..n_train]);
        valid.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((t.select_rows(&train), t.select_rows(&valid)))
}
