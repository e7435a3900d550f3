use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{validate_schema, ColumnSchema, Kind, Role};
use crate::error::{Error, Result};

/// Storage for one column. Cluster columns are stored as categorical codes
/// whose levels are the original labels in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    /// Text form of one cell, as written to CSV.
    pub fn cell(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => format_number(v[row]),
            Column::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
        }
    }
}

pub(crate) fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:?}")
    }
}

/// Parameters of a standardization applied to a continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

/// Immutable columnar table of outcome, covariates, cluster id and optional
/// exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    columns: Vec<Column>,
    n_rows: usize,
    pub(crate) transforms: Vec<Standardization>,
}

impl Dataset {
    /// Builds a dataset from already-typed columns, validating kinds and
    /// re-indexing the cluster column densely.
    pub fn from_columns(schema: Vec<ColumnSchema>, columns: Vec<Column>) -> Result<Self> {
        validate_schema(&schema)?;
        if schema.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} schema entries but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map(Column::len).unwrap_or(0);
        if n_rows == 0 {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        let mut cols = Vec::with_capacity(columns.len());
        for (spec, col) in schema.iter().zip(columns) {
            if col.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            cols.push(check_column(spec, col)?);
        }
        Ok(Self { schema, columns: cols, n_rows, transforms: Vec::new() })
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn transforms(&self) -> &[Standardization] {
        &self.transforms
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn column_schema(&self, name: &str) -> Result<&ColumnSchema> {
        Ok(&self.schema[self.column_index(name)?])
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.schema.iter().any(|c| c.name == name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical { .. } => {
                Err(Error::Schema(format!("column `{name}` is not numeric")))
            }
        }
    }

    fn role_column(&self, role: Role) -> Option<&ColumnSchema> {
        self.schema.iter().find(|c| c.role == role)
    }

    pub fn outcome_name(&self) -> &str {
        &self.role_column(Role::Outcome).expect("validated schema").name
    }

    pub fn cluster_name(&self) -> &str {
        &self.role_column(Role::Cluster).expect("validated schema").name
    }

    pub fn exposure_name(&self) -> Option<&str> {
        self.role_column(Role::Exposure).map(|c| c.name.as_str())
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.schema
            .iter()
            .filter(|c| c.role == Role::Covariate)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn outcome(&self) -> &[f64] {
        self.numeric(self.outcome_name()).expect("outcome is numeric")
    }

    pub fn exposure(&self) -> Option<&[f64]> {
        self.exposure_name().map(|n| self.numeric(n).expect("exposure is numeric"))
    }

    fn cluster_column(&self) -> (&[String], &[u32]) {
        match self.column(self.cluster_name()).expect("validated schema") {
            Column::Categorical { levels, codes } => (levels, codes),
            Column::Numeric(_) => unreachable!("cluster column stored as labels"),
        }
    }

    /// Dense cluster index of every row, in `0..n_clusters()`.
    pub fn cluster_codes(&self) -> &[u32] {
        self.cluster_column().1
    }

    /// Original cluster labels, indexed by dense cluster code.
    pub fn cluster_labels(&self) -> &[String] {
        self.cluster_column().0
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_labels().len()
    }

    /// Keeps the outcome, cluster and exposure columns plus the named
    /// covariates (and their bin columns), dropping every other covariate.
    pub fn select(&self, covariates: &[&str]) -> Result<Dataset> {
        for c in covariates {
            let spec = self.column_schema(c)?;
            if spec.role != Role::Covariate {
                return Err(Error::Schema(format!("column `{c}` is not a covariate")));
            }
        }
        let keep: Vec<usize> = (0..self.schema.len())
            .filter(|&i| {
                let s = &self.schema[i];
                s.role != Role::Covariate
                    || covariates.iter().any(|c| s.name == *c || s.name == super::transform::bin_column_name(c))
            })
            .collect();
        Ok(Dataset {
            schema: keep.iter().map(|&i| self.schema[i].clone()).collect(),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            n_rows: self.n_rows,
            transforms: self.transforms.iter().filter(|t| covariates.contains(&t.column.as_str())).cloned().collect(),
        })
    }

    /// Rows selected by index, in the given order; clusters re-indexed densely.
    pub fn take(&self, rows: &[usize]) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::Empty("row selection is empty".into()));
        }
        let cluster_idx = self.column_index(self.cluster_name())?;
        let mut columns: Vec<Column> = self.columns.iter().map(|c| c.take(rows)).collect();
        if let Column::Categorical { levels, codes } = &columns[cluster_idx] {
            let (levels, codes) = reindex(levels, codes);
            columns[cluster_idx] = Column::Categorical { levels, codes };
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            columns,
            n_rows: rows.len(),
            transforms: self.transforms.clone(),
        })
    }

    /// Returns a copy with one column replaced (same name and role).
    pub(crate) fn with_column(&self, name: &str, kind: Kind, column: Column) -> Result<Dataset> {
        let idx = self.column_index(name)?;
        let mut out = self.clone();
        out.schema[idx].kind = kind;
        out.columns[idx] = check_column(&out.schema[idx], column)?;
        Ok(out)
    }

    /// Returns a copy with an extra column appended.
    pub(crate) fn with_added_column(&self, spec: ColumnSchema, column: Column) -> Result<Dataset> {
        if self.has_column(&spec.name) {
            return Err(Error::Schema(format!("column `{}` already exists", spec.name)));
        }
        if column.len() != self.n_rows {
            return Err(Error::Dimension(format!("new column `{}` has wrong length", spec.name)));
        }
        let mut out = self.clone();
        let column = check_column(&spec, column)?;
        out.schema.push(spec);
        out.columns.push(column);
        validate_schema(&out.schema)?;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| c.cell(row)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn reindex(levels: &[String], codes: &[u32]) -> (Vec<String>, Vec<u32>) {
    let mut map: Vec<Option<u32>> = vec![None; levels.len()];
    let mut new_levels = Vec::new();
    let new_codes = codes
        .iter()
        .map(|&c| {
            *map[c as usize].get_or_insert_with(|| {
                new_levels.push(levels[c as usize].clone());
                (new_levels.len() - 1) as u32
            })
        })
        .collect();
    (new_levels, new_codes)
}

fn check_column(spec: &ColumnSchema, column: Column) -> Result<Column> {
    let name = &spec.name;
    if spec.role == Role::Cluster {
        return match column {
            Column::Categorical { levels, codes } => {
                let (levels, codes) = reindex(&levels, &codes);
                Ok(Column::Categorical { levels, codes })
            }
            Column::Numeric(v) => {
                let labels: Vec<String> = v.iter().map(|&x| format_number(x)).collect();
                let (levels, codes) = labels_to_codes(&labels);
                Ok(Column::Categorical { levels, codes })
            }
        };
    }
    match (&spec.kind, &column) {
        (Kind::Categorical(declared), Column::Categorical { levels, codes }) => {
            if declared != levels {
                return Err(Error::Schema(format!("column `{name}` levels differ from schema")));
            }
            if codes.iter().any(|&c| c as usize >= levels.len()) {
                return Err(Error::Schema(format!("column `{name}` has out-of-range codes")));
            }
        }
        (Kind::Categorical(_), Column::Numeric(_)) => {
            return Err(Error::Schema(format!("column `{name}` must be categorical")));
        }
        (_, Column::Categorical { .. }) => {
            return Err(Error::Schema(format!("column `{name}` must be numeric")));
        }
        (kind, Column::Numeric(values)) => {
            for (row, &x) in values.iter().enumerate() {
                check_value(spec, kind, x).map_err(|message| Error::Parse { row: row + 1, message })?;
            }
        }
    }
    Ok(column)
}

fn check_value(spec: &ColumnSchema, kind: &Kind, x: f64) -> std::result::Result<(), String> {
    let name = &spec.name;
    if !x.is_finite() {
        return Err(format!("column `{name}` has non-finite value {x}"));
    }
    match kind {
        Kind::Binary if x != 0.0 && x != 1.0 => {
            return Err(format!("column `{name}` is binary but has value {x}"));
        }
        Kind::Count if x < 0.0 || x.fract() != 0.0 => {
            return Err(format!("column `{name}` is a count but has value {x}"));
        }
        _ => {}
    }
    if spec.role == Role::Exposure && x <= 0.0 {
        return Err(format!("exposure `{name}` must be positive, got {x}"));
    }
    Ok(())
}

fn labels_to_codes(labels: &[String]) -> (Vec<String>, Vec<u32>) {
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut levels = Vec::new();
    let codes = labels
        .iter()
        .map(|l| {
            *index.entry(l.as_str()).or_insert_with(|| {
                levels.push(l.clone());
                (levels.len() - 1) as u32
            })
        })
        .collect();
    (levels, codes)
}

/// Reads a CSV file, keeping only the columns named in `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

/// Reads CSV text from any reader; see [`load_csv`].
pub fn read_csv<R: Read>(reader: R, schema: &[ColumnSchema]) -> Result<Dataset> {
    validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Empty("CSV has no header row".into()));
    }
    let positions = schema
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut text: Vec<Vec<String>> = vec![Vec::new(); schema.len()];
    let mut n_rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        for (c, (spec, &pos)) in schema.iter().zip(&positions).enumerate() {
            let cell = record.get(pos).map(str::trim).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(Error::Parse {
                    row,
                    message: format!("missing value in column `{}`", spec.name),
                });
            }
            match (&spec.kind, spec.role) {
                (_, Role::Cluster) | (Kind::Categorical(_), _) => text[c].push(cell.to_string()),
                _ => {
                    let x: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        message: format!("cannot parse `{cell}` in column `{}`", spec.name),
                    })?;
                    check_value(spec, &spec.kind, x).map_err(|message| Error::Parse { row, message })?;
                    numeric[c].push(x);
                }
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Empty("CSV has a header but no data rows".into()));
    }

    let mut columns = Vec::with_capacity(schema.len());
    for (c, spec) in schema.iter().enumerate() {
        let col = match (&spec.kind, spec.role) {
            (_, Role::Cluster) => {
                let (levels, codes) = labels_to_codes(&text[c]);
                Column::Categorical { levels, codes }
            }
            (Kind::Categorical(levels), _) => {
                let mut codes = Vec::with_capacity(n_rows);
                for (row, cell) in text[c].iter().enumerate() {
                    let code = levels.iter().position(|l| l == cell).ok_or_else(|| Error::Parse {
                        row: row + 1,
                        message: format!("unknown level `{cell}` in column `{}`", spec.name),
                    })?;
                    codes.push(code as u32);
                }
                Column::Categorical { levels: levels.clone(), codes }
            }
            _ => Column::Numeric(std::mem::take(&mut numeric[c])),
        };
        columns.push(col);
    }
    Dataset::from_columns(schema.to_vec(), columns)
}

/// Splits a dataset into one dataset per cluster, in cluster-index order,
/// preserving row order within each cluster.
pub fn partition_by_practice(dataset: &Dataset) -> Vec<Dataset> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_clusters()];
    for (row, &c) in dataset.cluster_codes().iter().enumerate() {
        groups[c as usize].push(row);
    }
    groups
        .iter()
        .map(|rows| dataset.take(rows).expect("clusters are nonempty after ingestion"))
        .collect()
}
