//! Canonical in-memory table model.
//!
//! A [`TableArtifact`] is a column-major table of [`CellValue`]s with
//! per-column metadata, a content key used for exact deduplication and a
//! filter state. Ingestion normalizes every flavour of missing value to
//! `Null` and infers one declared type per column by majority vote.

mod cell;
mod csv;
mod hash;
mod parquet_io;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::cell::{CellValue, DataType};
pub use self::csv::{parse_csv, write_csv};
pub use self::hash::{canonical_bytes, content_hash};
pub use self::parquet_io::{read_parquet, write_parquet};
use crate::filter::RuleId;

/// Prefix Arrow/pandas give to columns without a name.
pub const UNNAMED_PREFIX: &str = "Unnamed:";

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported table format: {0}")]
    UnsupportedFormat(String),
    #[error("ragged rows: record {record} has {found} fields, header has {expected}")]
    RaggedRows { record: usize, expected: usize, found: usize },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("parquet: {0}")]
    Parquet(String),
    #[error("column {column} has {found} cells, expected {expected}")]
    ShapeMismatch { column: usize, expected: usize, found: usize },
}

/// On-disk formats accepted by [`ingest_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    /// Parquet file.
    Columnar,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format, TableError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Format::Csv),
            Some("parquet") | Some("pq") => Ok(Format::Columnar),
            other => Err(TableError::UnsupportedFormat(other.unwrap_or("<none>").to_string())),
        }
    }
}

/// 256-bit digest of a table's canonical serialization.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ContentKey(pub [u8; 32]);

impl ContentKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight bytes as a little-endian integer; used for seed derivation.
    pub fn low_u64(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().unwrap())
    }
}

impl fmt::Display for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentKey({})", &self.to_hex()[..16])
    }
}

impl FromStr for ContentKey {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(ContentKey(out))
    }
}

impl Serialize for ContentKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub shard: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "state", content = "rule", rename_all = "lowercase")]
pub enum FilterState {
    #[default]
    Raw,
    Accepted,
    Rejected(RuleId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub declared_type: DataType,
    pub missing_fraction: f64,
    pub distinct_count: usize,
    pub is_unnamed: bool,
}

impl ColumnMeta {
    fn from_cells(name: String, cells: &[CellValue]) -> ColumnMeta {
        let is_unnamed = name.starts_with(UNNAMED_PREFIX);
        let mut meta =
            ColumnMeta { name, declared_type: DataType::Null, missing_fraction: 0.0, distinct_count: 0, is_unnamed };
        meta.refresh(cells);
        meta
    }

    fn refresh(&mut self, cells: &[CellValue]) {
        let nulls = cells.iter().filter(|c| c.is_null()).count();
        self.missing_fraction = if cells.is_empty() { 0.0 } else { nulls as f64 / cells.len() as f64 };
        self.declared_type = majority_type(cells);
        let distinct: HashSet<(DataType, std::borrow::Cow<'_, str>)> =
            cells.iter().filter(|c| !c.is_null()).map(|c| (c.data_type(), c.render())).collect();
        self.distinct_count = distinct.len();
    }
}

/// Majority vote over non-null cells; ties go to Text, an all-null column is Null.
fn majority_type(cells: &[CellValue]) -> DataType {
    let mut counts: BTreeMap<DataType, usize> = BTreeMap::new();
    for c in cells.iter().filter(|c| !c.is_null()) {
        *counts.entry(c.data_type()).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else {
        return DataType::Null;
    };
    let winners: Vec<DataType> = counts.iter().filter(|(_, &n)| n == best).map(|(&t, _)| t).collect();
    if winners.len() == 1 {
        winners[0]
    } else {
        DataType::Text
    }
}

/// Shape and type summary of one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub n_rows: usize,
    pub n_cols: usize,
    pub missing_fraction: f64,
    pub dtype_histogram: BTreeMap<DataType, usize>,
}

/// An ingested table. Columns are stored column-major and always have
/// `n_rows` cells each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableArtifact {
    content_key: ContentKey,
    headers: Vec<ColumnMeta>,
    columns: Vec<Vec<CellValue>>,
    n_rows: usize,
    provenance: Provenance,
    filter_state: FilterState,
    /// Position of each current row in the ingested table.
    row_ids: Vec<usize>,
    invalid_utf8_cells: usize,
}

impl TableArtifact {
    /// Builds a `Raw` table and computes its content key.
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<CellValue>>,
        provenance: Provenance,
    ) -> Result<TableArtifact, TableError> {
        if names.len() != columns.len() {
            return Err(TableError::ShapeMismatch {
                column: names.len().min(columns.len()),
                expected: names.len(),
                found: columns.len(),
            });
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (i, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(TableError::ShapeMismatch { column: i, expected: n_rows, found: col.len() });
            }
        }
        let headers = names.into_iter().zip(&columns).map(|(n, c)| ColumnMeta::from_cells(n, c)).collect();
        let mut t = TableArtifact {
            content_key: ContentKey::default(),
            headers,
            columns,
            n_rows,
            provenance,
            filter_state: FilterState::Raw,
            row_ids: (0..n_rows).collect(),
            invalid_utf8_cells: 0,
        };
        t.content_key = content_hash(&t);
        Ok(t)
    }

    /// Builds a table from row-major raw strings, parsing each cell.
    pub fn from_text_rows<S: AsRef<str>>(
        names: &[S],
        rows: &[Vec<S>],
        provenance: Provenance,
    ) -> Result<TableArtifact, TableError> {
        let mut columns = vec![Vec::with_capacity(rows.len()); names.len()];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(TableError::RaggedRows { record: r + 1, expected: names.len(), found: row.len() });
            }
            for (c, raw) in row.iter().enumerate() {
                columns[c].push(CellValue::parse(raw.as_ref()));
            }
        }
        let names = names.iter().map(|s| s.as_ref().to_string()).collect();
        TableArtifact::new(names, columns, provenance)
    }

    pub fn content_key(&self) -> ContentKey {
        self.content_key
    }

    pub fn headers(&self) -> &[ColumnMeta] {
        &self.headers
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.headers.iter().map(|h| h.name.as_str())
    }

    pub fn columns(&self) -> &[Vec<CellValue>] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &[CellValue] {
        &self.columns[idx]
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellValue {
        &self.columns[col][row]
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = &CellValue> + '_ {
        self.columns.iter().map(move |c| &c[row])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn filter_state(&self) -> FilterState {
        self.filter_state
    }

    pub fn set_filter_state(&mut self, state: FilterState) {
        self.filter_state = state;
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn invalid_utf8_cells(&self) -> usize {
        self.invalid_utf8_cells
    }

    pub(crate) fn set_invalid_utf8_cells(&mut self, n: usize) {
        self.invalid_utf8_cells = n;
    }

    /// Keeps rows where `keep[i]` is true. Column metadata is refreshed.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.n_rows, "row mask length");
        for col in &mut self.columns {
            let mut i = 0;
            col.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        let mut i = 0;
        self.row_ids.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.n_rows = self.row_ids.len();
        self.refresh_meta();
    }

    /// Removes columns where `drop[i]` is true.
    pub fn remove_columns(&mut self, drop: &[bool]) {
        assert_eq!(drop.len(), self.n_cols(), "column mask length");
        let mut i = 0;
        self.columns.retain(|_| {
            i += 1;
            !drop[i - 1]
        });
        let mut i = 0;
        self.headers.retain(|_| {
            i += 1;
            !drop[i - 1]
        });
    }

    fn refresh_meta(&mut self) {
        for (h, c) in self.headers.iter_mut().zip(&self.columns) {
            h.refresh(c);
        }
    }

    /// Fraction of Null cells over the whole table (0 for an empty table).
    pub fn missing_fraction(&self) -> f64 {
        let total = self.n_rows * self.n_cols();
        if total == 0 {
            return 0.0;
        }
        let nulls: usize = self.columns.iter().map(|c| c.iter().filter(|v| v.is_null()).count()).sum();
        nulls as f64 / total as f64
    }

    /// Refreshes per-column metadata and returns the table summary.
    pub fn compute_stats(&mut self) -> TableSummary {
        self.refresh_meta();
        self.summary()
    }

    pub fn summary(&self) -> TableSummary {
        let mut dtype_histogram = BTreeMap::new();
        for h in &self.headers {
            *dtype_histogram.entry(h.declared_type).or_default() += 1;
        }
        TableSummary {
            n_rows: self.n_rows,
            n_cols: self.n_cols(),
            missing_fraction: self.missing_fraction(),
            dtype_histogram,
        }
    }
}

/// Reads a table from disk in state `Raw`.
pub fn ingest_table(path: &Path, format: Format) -> Result<TableArtifact, TableError> {
    ingest_table_with(path, format, Provenance { source: path.display().to_string(), shard: 0 })
}

pub fn ingest_table_with(path: &Path, format: Format, provenance: Provenance) -> Result<TableArtifact, TableError> {
    match format {
        Format::Csv => {
            let bytes = std::fs::read(path)
                .map_err(|source| TableError::UnreadableFile { path: path.to_path_buf(), source })?;
            parse_csv(&bytes, provenance)
        }
        Format::Columnar => read_parquet(path, provenance),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(s: &str) -> TableArtifact {
        parse_csv(s.as_bytes(), Provenance::default()).unwrap()
    }

    #[test]
    fn two_by_two_types() {
        let t = csv("a,b\n1,x\n2,y");
        assert_eq!((t.n_rows(), t.n_cols()), (2, 2));
        assert_eq!(t.headers()[0].declared_type, DataType::Int);
        assert_eq!(t.headers()[1].declared_type, DataType::Text);
        assert_eq!(t.filter_state(), FilterState::Raw);
    }

    #[test]
    fn single_empty_value() {
        let t = csv("a\n\n");
        assert_eq!((t.n_rows(), t.n_cols()), (1, 1));
        assert_eq!(t.cell(0, 0), &CellValue::Null);
    }

    #[test]
    fn ragged_rows_error() {
        let err = parse_csv(b"a,b\n1,2\n1,2,3\n", Provenance::default()).unwrap_err();
        assert!(matches!(err, TableError::RaggedRows { expected: 2, found: 3, .. }));
    }

    #[test]
    fn majority_vote_and_ties() {
        let t = csv("a,b,c\n1,1,x\n2,y,\n3.5,2.5,\n");
        assert_eq!(t.headers()[0].declared_type, DataType::Int);
        // one Int, one Text, one Float: three-way tie
        assert_eq!(t.headers()[1].declared_type, DataType::Text);
        assert_eq!(t.headers()[2].declared_type, DataType::Text);
        assert!((t.headers()[2].missing_fraction - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_fraction_quarter() {
        let mut body = String::from("v\n");
        for i in 0..8 {
            if i % 4 == 0 {
                body.push('\n');
            } else {
                body.push_str(&format!("{i}\n"));
            }
        }
        let mut t = csv(&body);
        assert_eq!(t.n_rows(), 8);
        t.compute_stats();
        assert_eq!(t.headers()[0].missing_fraction, 0.25);
    }

    #[test]
    fn all_int_histogram() {
        let mut t = csv("a,b,c\n1,2,3\n4,5,6\n");
        let s = t.compute_stats();
        assert_eq!(s.dtype_histogram, BTreeMap::from([(DataType::Int, 3)]));
        assert_eq!(s.missing_fraction, 0.0);
    }

    #[test]
    fn unnamed_flag() {
        let t = csv("Unnamed: 0,name\n1,a\n");
        assert!(t.headers()[0].is_unnamed);
        assert!(!t.headers()[1].is_unnamed);
    }

    #[test]
    fn row_and_column_mutation_keep_shape() {
        let mut t = csv("a,b,c\n1,x,\n2,y,q\n3,z,\n");
        t.retain_rows(&[true, false, true]);
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.row_ids(), &[0, 2]);
        assert_eq!(t.headers()[2].missing_fraction, 1.0);
        t.remove_columns(&[false, true, false]);
        assert_eq!(t.n_cols(), 2);
        assert!(t.columns().iter().all(|c| c.len() == t.n_rows()));
        assert_eq!(t.column_names().collect::<Vec<_>>(), ["a", "c"]);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("x.CSV")).unwrap(), Format::Csv);
        assert_eq!(Format::from_path(Path::new("x.parquet")).unwrap(), Format::Columnar);
        assert!(matches!(Format::from_path(Path::new("x.xlsx")), Err(TableError::UnsupportedFormat(_))));
    }

    #[test]
    fn content_key_hex_roundtrip() {
        let t = csv("a\n1\n");
        let k = t.content_key();
        assert_eq!(k.to_hex().parse::<ContentKey>().unwrap(), k);
    }
}
