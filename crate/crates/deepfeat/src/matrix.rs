//! Feature tables: dense numeric matrices, column kind tags, deep-feature
//! column sets, and the CSV + sidecar-schema wire format.
//!
//! A [`FeatureMatrix`] is the classifier input: `n` rows by `p` columns,
//! each column tagged continuous or categorical, with optional class labels.
//! Categorical cells hold small integer codes (stored as `f64` alongside the
//! continuous values; the kind tag decides interpretation).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ioutil::atomic_write;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidData("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }
}

/// How a feature column is interpreted by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    /// Unordered codes in `[0, cardinality)`.
    Categorical { cardinality: u32 },
}

impl ColumnKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }
}

/// A named collection of categorical columns produced by an unsupervised
/// learner (cluster IDs, tree leaf IDs, root-path codes).
#[derive(Debug, Clone, Default)]
pub struct DeepFeatureSet {
    names: Vec<String>,
    columns: Vec<Vec<u32>>,
    /// Optional display value per code (e.g. the L/R path string a code
    /// stands for). `None` when the code itself is the value.
    levels: Vec<Option<Vec<String>>>,
    provenance: String,
}

impl DeepFeatureSet {
    pub fn new(provenance: impl Into<String>) -> Self {
        Self { provenance: provenance.into(), ..Self::default() }
    }

    pub fn push_column(&mut self, name: impl Into<String>, codes: Vec<u32>, levels: Option<Vec<String>>) {
        self.names.push(name.into());
        self.columns.push(codes);
        self.levels.push(levels);
    }

    /// Appends all columns of `other`; names must stay unique and row counts
    /// must agree.
    pub fn merge(&mut self, other: DeepFeatureSet) -> Result<()> {
        for (i, name) in other.names.iter().enumerate() {
            if self.names.contains(name) {
                return Err(Error::InvalidData(format!("duplicate deep feature column `{name}`")));
            }
            if let Some(rows) = self.columns.first().map(Vec::len) {
                if other.columns[i].len() != rows {
                    return Err(Error::InvalidData(format!(
                        "deep feature column `{name}` has {} rows, expected {rows}",
                        other.columns[i].len()
                    )));
                }
            }
        }
        if !self.provenance.is_empty() && !other.provenance.is_empty() {
            self.provenance.push('+');
        }
        self.provenance.push_str(&other.provenance);
        self.names.extend(other.names);
        self.columns.extend(other.columns);
        self.levels.extend(other.levels);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, i: usize) -> &[u32] {
        &self.columns[i]
    }

    pub fn levels(&self, i: usize) -> Option<&[String]> {
        self.levels[i].as_deref()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn n_rows(&self) -> Option<usize> {
        self.columns.first().map(Vec::len)
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

/// The classifier input table: features, kind tags, optional labels.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    data: DenseMatrix,
    labels: Option<Vec<u32>>,
}

impl FeatureMatrix {
    /// All-continuous table with generated names `prefix_0000`, ...
    pub fn from_continuous(data: DenseMatrix, prefix: &str, labels: Option<Vec<u32>>) -> Result<Self> {
        let names = (0..data.n_cols()).map(|j| format!("{prefix}_{j:04}")).collect();
        Self::with_names(data, names, None, labels)
    }

    pub fn with_names(
        data: DenseMatrix,
        names: Vec<String>,
        kinds: Option<Vec<ColumnKind>>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let kinds = kinds.unwrap_or_else(|| vec![ColumnKind::Continuous; data.n_cols()]);
        if names.len() != data.n_cols() || kinds.len() != data.n_cols() {
            return Err(Error::InvalidData("column metadata does not match matrix width".into()));
        }
        if let Some(labels) = &labels {
            if labels.len() != data.n_rows() {
                return Err(Error::InvalidData("label count does not match row count".into()));
            }
        }
        for (j, kind) in kinds.iter().enumerate() {
            if let ColumnKind::Categorical { cardinality } = kind {
                for row in 0..data.n_rows() {
                    let v = data.get(row, j);
                    if v.fract() != 0.0 || v < 0.0 || v >= f64::from(*cardinality) {
                        return Err(Error::InvalidData(format!(
                            "column `{}` row {row}: code {v} outside cardinality {cardinality}",
                            names[j]
                        )));
                    }
                }
            }
        }
        Ok(Self { names, kinds, data, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.n_cols()
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data.get(row, col)
    }

    /// Categorical code at `(row, col)`; the column must be categorical.
    #[inline]
    pub fn category(&self, row: usize, col: usize) -> u32 {
        debug_assert!(self.kinds[col].is_categorical());
        self.data.get(row, col) as u32
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<u32>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.n_rows() {
                return Err(Error::InvalidData("label count does not match row count".into()));
            }
        }
        self.labels = labels;
        Ok(())
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    /// Appends categorical deep-feature columns. Existing columns are never
    /// modified; cardinality is `max(code) + 1` per column.
    pub fn augment(&mut self, deep: &DeepFeatureSet) -> Result<()> {
        if deep.is_empty() {
            return Ok(());
        }
        let n = self.n_rows();
        if deep.n_rows() != Some(n) {
            return Err(Error::InvalidData(format!(
                "deep features have {:?} rows, table has {n}",
                deep.n_rows()
            )));
        }
        for name in deep.names() {
            if self.names.contains(name) {
                return Err(Error::InvalidData(format!("duplicate column `{name}`")));
            }
        }
        let old_cols = self.n_cols();
        let new_cols = old_cols + deep.n_columns();
        let mut data = Vec::with_capacity(n * new_cols);
        for row in 0..n {
            data.extend_from_slice(self.data.row(row));
            for c in 0..deep.n_columns() {
                data.push(f64::from(deep.column(c)[row]));
            }
        }
        for (i, name) in deep.names().iter().enumerate() {
            let cardinality = deep.column(i).iter().copied().max().unwrap_or(0) + 1;
            self.names.push(name.clone());
            self.kinds.push(ColumnKind::Categorical { cardinality });
        }
        self.data = DenseMatrix::new(n, new_cols, data)?;
        Ok(())
    }

    /// Table restricted to the given rows (labels follow); column kinds are
    /// kept verbatim so category spaces survive subsetting.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            data: self.data.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Submatrix of the continuous columns only, in column order.
    pub fn continuous_data(&self) -> DenseMatrix {
        let cols: Vec<usize> =
            (0..self.n_cols()).filter(|&j| !self.kinds[j].is_categorical()).collect();
        let mut out = DenseMatrix::zeros(self.n_rows(), cols.len());
        for row in 0..self.n_rows() {
            for (jj, &j) in cols.iter().enumerate() {
                out.set(row, jj, self.value(row, j));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// CSV + sidecar schema
// ---------------------------------------------------------------------------

/// Reserved header name for the class column.
pub const LABEL_COLUMN: &str = "label";

/// Sidecar schema file: column name -> kind tag.
#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    version: u32,
    columns: BTreeMap<String, String>,
}

fn kind_tag(kind: &ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Continuous => "continuous",
        ColumnKind::Categorical { .. } => "categorical",
    }
}

impl FeatureMatrix {
    /// Writes the table as CSV (full float precision, categorical codes as
    /// integers). Labels, when present, go last under [`LABEL_COLUMN`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for row in 0..self.n_rows() {
            for (j, kind) in self.kinds.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                match kind {
                    ColumnKind::Continuous => {
                        let _ = write!(out, "{}", self.value(row, j));
                    }
                    ColumnKind::Categorical { .. } => {
                        let _ = write!(out, "{}", self.category(row, j));
                    }
                }
            }
            if let Some(labels) = &self.labels {
                let _ = write!(out, ",{}", labels[row]);
            }
            out.push('\n');
        }
        atomic_write(path, out.as_bytes())
    }

    /// Writes the sidecar schema (name -> `continuous` | `categorical`).
    pub fn write_schema(&self, path: &Path) -> Result<()> {
        let mut columns = BTreeMap::new();
        for (name, kind) in self.names.iter().zip(&self.kinds) {
            columns.insert(name.clone(), kind_tag(kind).to_string());
        }
        if self.labels.is_some() {
            columns.insert(LABEL_COLUMN.to_string(), "label".to_string());
        }
        let file = SchemaFile { version: 1, columns };
        let mut bytes = serde_json::to_vec_pretty(&file)?;
        bytes.push(b'\n');
        atomic_write(path, &bytes)
    }

    /// Reads a CSV written by [`FeatureMatrix::write_csv`]. With a schema
    /// path, column kinds come from the sidecar; otherwise every column is
    /// continuous except a trailing [`LABEL_COLUMN`].
    pub fn read_csv(path: &Path, schema: Option<&Path>) -> Result<Self> {
        let kinds_by_name: Option<BTreeMap<String, String>> = match schema {
            Some(p) => {
                let file: SchemaFile = serde_json::from_reader(std::fs::File::open(p)?)?;
                if file.version != 1 {
                    return Err(Error::Format(format!("unsupported schema version {}", file.version)));
                }
                Some(file.columns)
            }
            None => None,
        };

        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut names = Vec::new();
        let mut tags: Vec<&str> = Vec::new();
        let mut label_col = None;
        for (j, name) in header.iter().enumerate() {
            let tag = match &kinds_by_name {
                Some(map) => map.get(name).map(String::as_str).ok_or_else(|| {
                    Error::SchemaMismatch(format!("column `{name}` missing from schema"))
                })?,
                None if name == LABEL_COLUMN => "label",
                None => "continuous",
            };
            if tag == "label" {
                if label_col.is_some() {
                    return Err(Error::InvalidData("multiple label columns".into()));
                }
                label_col = Some(j);
            } else {
                names.push(name.clone());
                tags.push(match tag {
                    "continuous" => "continuous",
                    "categorical" => "categorical",
                    other => {
                        return Err(Error::SchemaMismatch(format!(
                            "unknown kind `{other}` for column `{name}`"
                        )))
                    }
                });
            }
        }

        let mut data = Vec::new();
        let mut labels: Vec<u32> = Vec::new();
        let mut n_rows = 0usize;
        for record in reader.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::InvalidData(format!(
                    "row {n_rows} has {} fields, expected {}",
                    record.len(),
                    header.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                if Some(j) == label_col {
                    labels.push(field.parse().map_err(|_| {
                        Error::InvalidData(format!("bad label `{field}` in row {n_rows}"))
                    })?);
                } else {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::InvalidData(format!("bad number `{field}` in row {n_rows}"))
                    })?;
                    data.push(v);
                }
            }
            n_rows += 1;
        }

        let matrix = DenseMatrix::new(n_rows, names.len(), data)?;
        let kinds = tags
            .iter()
            .enumerate()
            .map(|(j, tag)| match *tag {
                "categorical" => {
                    let max = (0..n_rows).map(|r| matrix.get(r, j) as u32).max().unwrap_or(0);
                    ColumnKind::Categorical { cardinality: max + 1 }
                }
                _ => ColumnKind::Continuous,
            })
            .collect();
        Self::with_names(matrix, names, Some(kinds), label_col.map(|_| labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> FeatureMatrix {
        let data = DenseMatrix::from_rows(&[
            vec![0.5, 1.25],
            vec![-3.0, 0.0],
            vec![2.0, 9.5],
        ])
        .unwrap();
        FeatureMatrix::from_continuous(data, "f", Some(vec![1, 2, 1])).unwrap()
    }

    #[test]
    fn augment_appends_without_touching_base() {
        let mut table = small_table();
        let base = table.data().clone();
        let mut deep = DeepFeatureSet::new("test");
        deep.push_column("kmeans_k2", vec![0, 1, 0], None);
        table.augment(&deep).unwrap();
        assert_eq!(table.n_cols(), 3);
        assert_eq!(table.kinds()[2], ColumnKind::Categorical { cardinality: 2 });
        for row in 0..3 {
            for col in 0..2 {
                assert_eq!(table.value(row, col), base.get(row, col));
            }
        }
        assert_eq!(table.category(1, 2), 1);
    }

    #[test]
    fn csv_roundtrip_with_schema() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("t.csv");
        let schema_path = dir.path().join("t.schema.json");
        let mut table = small_table();
        let mut deep = DeepFeatureSet::new("test");
        deep.push_column("diana_k3", vec![2, 0, 1], None);
        table.augment(&deep).unwrap();
        table.write_csv(&csv_path).unwrap();
        table.write_schema(&schema_path).unwrap();

        let back = FeatureMatrix::read_csv(&csv_path, Some(&schema_path)).unwrap();
        assert_eq!(back.names(), table.names());
        assert_eq!(back.kinds(), table.kinds());
        assert_eq!(back.labels(), table.labels());
        assert_eq!(back.data(), table.data());
    }

    #[test]
    fn read_csv_without_schema_defaults_continuous() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        small_table().write_csv(&path).unwrap();
        let back = FeatureMatrix::read_csv(&path, None).unwrap();
        assert!(back.kinds().iter().all(|k| !k.is_categorical()));
        assert_eq!(back.labels(), Some(&[1, 2, 1][..]));
    }

    #[test]
    fn categorical_code_out_of_range_rejected() {
        let data = DenseMatrix::from_rows(&[vec![3.0], vec![0.0]]).unwrap();
        let err = FeatureMatrix::with_names(
            data,
            vec!["c".into()],
            Some(vec![ColumnKind::Categorical { cardinality: 2 }]),
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn select_rows_keeps_kinds_and_labels() {
        let mut table = small_table();
        let mut deep = DeepFeatureSet::new("test");
        deep.push_column("c", vec![0, 1, 2], None);
        table.augment(&deep).unwrap();
        let sub = table.select_rows(&[2, 0]);
        assert_eq!(sub.n_rows(), 2);
        assert_eq!(sub.labels(), Some(&[1, 1][..]));
        assert_eq!(sub.kinds()[2], ColumnKind::Categorical { cardinality: 3 });
        assert_eq!(sub.category(0, 2), 2);
    }
}
