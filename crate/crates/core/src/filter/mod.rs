//! Three-level filter pipeline: table rules, then column rules, then row
//! rules. Every removal is attributed to exactly one rule and counted in a
//! [`FilterReport`].
//!
//! Rule order is fixed:
//!
//! | level  | order |
//! |--------|-------|
//! | table  | table_english, schema_heterogeneity, row_count, parse_error, table_pii, table_code, unnamed_columns, table_missing |
//! | column | long_header, numeric_header, column_missing, column_english, constant_column, then column_count |
//! | row    | row_missing, duplicate_row, row_pii, row_code, floor_symbol, then row_count and table_missing re-checks |
//!
//! When a table is rejected, whatever rows and columns it still had are
//! charged to the rejecting rule, so input = output + removed holds at every
//! level.

mod code;
mod english;
mod pii;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::code::{code_score, CodeScorer, HeuristicCodeScorer};
pub use self::english::{english_score, LanguageScorer, LexiconScorer};
pub use self::pii::{contains_email, contains_phone, detect_pii};
use crate::table::{CellValue, DataType, FilterState, TableArtifact};

/// Hierarchy marker that disqualifies a row.
pub const FLOOR_SYMBOL: char = '⌊';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    TableEnglish,
    SchemaHeterogeneity,
    RowCount,
    ParseError,
    TablePii,
    TableCode,
    UnnamedColumns,
    TableMissing,
    ColumnCount,
    LongHeader,
    NumericHeader,
    ColumnMissing,
    ColumnEnglish,
    ConstantColumn,
    RowMissing,
    DuplicateRow,
    RowPii,
    RowCode,
    FloorSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Table,
    Column,
    Row,
}

impl RuleId {
    pub const ALL: [RuleId; 19] = [
        RuleId::TableEnglish,
        RuleId::SchemaHeterogeneity,
        RuleId::RowCount,
        RuleId::ParseError,
        RuleId::TablePii,
        RuleId::TableCode,
        RuleId::UnnamedColumns,
        RuleId::TableMissing,
        RuleId::ColumnCount,
        RuleId::LongHeader,
        RuleId::NumericHeader,
        RuleId::ColumnMissing,
        RuleId::ColumnEnglish,
        RuleId::ConstantColumn,
        RuleId::RowMissing,
        RuleId::DuplicateRow,
        RuleId::RowPii,
        RuleId::RowCode,
        RuleId::FloorSymbol,
    ];

    pub fn level(self) -> Level {
        use RuleId::*;
        match self {
            TableEnglish | SchemaHeterogeneity | RowCount | ParseError | TablePii | TableCode | UnnamedColumns
            | TableMissing | ColumnCount => Level::Table,
            LongHeader | NumericHeader | ColumnMissing | ColumnEnglish | ConstantColumn => Level::Column,
            RowMissing | DuplicateRow | RowPii | RowCode | FloorSymbol => Level::Row,
        }
    }

    pub fn as_str(self) -> &'static str {
        use RuleId::*;
        match self {
            TableEnglish => "table_english",
            SchemaHeterogeneity => "schema_heterogeneity",
            RowCount => "row_count",
            ParseError => "parse_error",
            TablePii => "table_pii",
            TableCode => "table_code",
            UnnamedColumns => "unnamed_columns",
            TableMissing => "table_missing",
            ColumnCount => "column_count",
            LongHeader => "long_header",
            NumericHeader => "numeric_header",
            ColumnMissing => "column_missing",
            ColumnEnglish => "column_english",
            ConstantColumn => "constant_column",
            RowMissing => "row_missing",
            DuplicateRow => "duplicate_row",
            RowPii => "row_pii",
            RowCode => "row_code",
            FloorSymbol => "floor_symbol",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{key} = {value} is outside [0, 1]")]
    FractionOutOfRange { key: &'static str, value: f64 },
    #[error("{min_key} ({min}) exceeds {max_key} ({max})")]
    InvertedBounds { min_key: &'static str, min: usize, max_key: &'static str, max: usize },
    #[error("cannot read filter config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid filter config: {0}")]
    Parse(String),
}

/// Thresholds for every rule. Key names match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub max_header_chars: usize,
    pub table_pii_cell_fraction: f64,
    pub table_missing_fraction: f64,
    pub unnamed_col_fraction: f64,
    pub col_missing_fraction: f64,
    pub row_missing_fraction: f64,
    pub english_threshold: f64,
    pub code_threshold: f64,
    /// Row-level code cut-off. Kept below `code_threshold`: any cell above
    /// `code_threshold` already rejects the whole table.
    pub row_code_threshold: f64,
    /// Share of headers that must be numeric for the parse-error rule.
    pub numeric_header_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_rows: 64,
            max_rows: 1000,
            min_cols: 2,
            max_cols: 512,
            max_header_chars: 256,
            table_pii_cell_fraction: 0.01,
            table_missing_fraction: 0.10,
            unnamed_col_fraction: 0.5,
            col_missing_fraction: 0.5,
            row_missing_fraction: 0.5,
            english_threshold: 0.5,
            code_threshold: 0.5,
            row_code_threshold: 0.3,
            numeric_header_fraction: 0.8,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fractions = [
            ("table_pii_cell_fraction", self.table_pii_cell_fraction),
            ("table_missing_fraction", self.table_missing_fraction),
            ("unnamed_col_fraction", self.unnamed_col_fraction),
            ("col_missing_fraction", self.col_missing_fraction),
            ("row_missing_fraction", self.row_missing_fraction),
            ("english_threshold", self.english_threshold),
            ("code_threshold", self.code_threshold),
            ("row_code_threshold", self.row_code_threshold),
            ("numeric_header_fraction", self.numeric_header_fraction),
        ];
        for (key, value) in fractions {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::FractionOutOfRange { key, value });
            }
        }
        if self.min_rows > self.max_rows {
            return Err(ConfigError::InvertedBounds {
                min_key: "min_rows",
                min: self.min_rows,
                max_key: "max_rows",
                max: self.max_rows,
            });
        }
        if self.min_cols > self.max_cols {
            return Err(ConfigError::InvertedBounds {
                min_key: "min_cols",
                min: self.min_cols,
                max_key: "max_cols",
                max: self.max_cols,
            });
        }
        Ok(())
    }

    /// Loads a TOML (or JSON, by extension) config and validates it.
    pub fn load(path: &Path) -> Result<FilterConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: FilterConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCounts {
    /// Number of tables the rule was evaluated on.
    pub applied: u64,
    pub tables: u64,
    pub columns: u64,
    pub rows: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeCounts {
    pub tables: u64,
    pub columns: u64,
    pub rows: u64,
}

/// Per-rule counters. Merging is a plain sum, so it is associative and
/// commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: ShapeCounts,
    pub output: ShapeCounts,
    pub rules: BTreeMap<RuleId, RuleCounts>,
}

impl FilterReport {
    pub fn merge(&mut self, other: &FilterReport) {
        for (a, b) in [(&mut self.input, &other.input), (&mut self.output, &other.output)] {
            a.tables += b.tables;
            a.columns += b.columns;
            a.rows += b.rows;
        }
        for (rule, c) in &other.rules {
            let e = self.rules.entry(*rule).or_default();
            e.applied += c.applied;
            e.tables += c.tables;
            e.columns += c.columns;
            e.rows += c.rows;
        }
    }

    pub fn removed(&self) -> ShapeCounts {
        self.rules.values().fold(ShapeCounts::default(), |mut acc, c| {
            acc.tables += c.tables;
            acc.columns += c.columns;
            acc.rows += c.rows;
            acc
        })
    }

    /// input = output + removed, at table, column and row level.
    pub fn is_conserved(&self) -> bool {
        let r = self.removed();
        self.input.tables == self.output.tables + r.tables
            && self.input.columns == self.output.columns + r.columns
            && self.input.rows == self.output.rows + r.rows
    }

    fn applied(&mut self, rule: RuleId) {
        self.rules.entry(rule).or_default().applied += 1;
    }

    fn entry(&mut self, rule: RuleId) -> &mut RuleCounts {
        self.rules.entry(rule).or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(RuleId),
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }

    pub fn rule(self) -> Option<RuleId> {
        match self {
            Verdict::Accept => None,
            Verdict::Reject(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedColumn {
    pub name: String,
    pub rule: RuleId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedRow {
    /// Row position in the ingested table.
    pub row: usize,
    pub rule: RuleId,
}

/// Result of running the full pipeline on one table.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub table: TableArtifact,
    pub report: FilterReport,
    pub removed_columns: Vec<RemovedColumn>,
    pub removed_rows: Vec<RemovedRow>,
}

impl FilterOutcome {
    pub fn accepted(&self) -> bool {
        self.table.filter_state() == FilterState::Accepted
    }

    pub fn rejection(&self) -> Option<RuleId> {
        match self.table.filter_state() {
            FilterState::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

fn is_numeric_name(name: &str) -> bool {
    let t = name.trim();
    t.bytes().any(|b| b.is_ascii_digit()) && t.parse::<f64>().is_ok()
}

/// Configured filters with pluggable scorers.
pub struct FilterBank<'a> {
    cfg: FilterConfig,
    english: &'a dyn LanguageScorer,
    code: &'a dyn CodeScorer,
}

static DEFAULT_CODE: HeuristicCodeScorer = HeuristicCodeScorer;

impl FilterBank<'static> {
    pub fn new(cfg: FilterConfig) -> FilterBank<'static> {
        FilterBank { cfg, english: LexiconScorer::bundled(), code: &DEFAULT_CODE }
    }
}

impl<'a> FilterBank<'a> {
    pub fn with_scorers(cfg: FilterConfig, english: &'a dyn LanguageScorer, code: &'a dyn CodeScorer) -> Self {
        FilterBank { cfg, english, code }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    fn table_text(&self, t: &TableArtifact) -> String {
        let mut text: String = t.column_names().collect::<Vec<_>>().join(" ");
        // 200 rows are plenty to tell the language of a table.
        for r in 0..t.n_rows().min(200) {
            for cell in t.row(r) {
                if let CellValue::Text(s) = cell {
                    text.push(' ');
                    text.push_str(s);
                }
            }
        }
        text
    }

    fn rendered_cells(t: &TableArtifact) -> impl Iterator<Item = std::borrow::Cow<'_, str>> {
        t.columns().iter().flatten().filter(|c| !c.is_null()).map(|c| c.render())
    }

    fn check_table_rule(&self, t: &TableArtifact, rule: RuleId) -> bool {
        let cfg = &self.cfg;
        match rule {
            RuleId::TableEnglish => self.english.english_score(&self.table_text(t)) >= cfg.english_threshold,
            RuleId::SchemaHeterogeneity => {
                let types: HashSet<DataType> =
                    t.headers().iter().map(|h| h.declared_type).filter(|d| *d != DataType::Null).collect();
                types.len() > 1
            }
            RuleId::RowCount => (cfg.min_rows..=cfg.max_rows).contains(&t.n_rows()),
            RuleId::ParseError => {
                let names: Vec<&str> = t.column_names().collect();
                let unique: HashSet<&str> = names.iter().copied().collect();
                if unique.len() != names.len() {
                    return false;
                }
                let numeric = names.iter().filter(|n| is_numeric_name(n)).count();
                if !names.is_empty() && numeric as f64 >= cfg.numeric_header_fraction * names.len() as f64 {
                    return false;
                }
                if t.n_rows() > 0 {
                    let first: HashSet<String> =
                        t.row(0).filter(|c| !c.is_null()).map(|c| c.render().into_owned()).collect();
                    if names.iter().any(|n| first.contains(*n)) {
                        return false;
                    }
                }
                true
            }
            RuleId::TablePii => {
                let total = t.n_rows() * t.n_cols();
                if total == 0 {
                    return true;
                }
                let hits = Self::rendered_cells(t).filter(|s| detect_pii(s)).count();
                hits as f64 / total as f64 <= cfg.table_pii_cell_fraction
            }
            RuleId::TableCode => !Self::rendered_cells(t).any(|s| self.code.code_score(&s) > cfg.code_threshold),
            RuleId::UnnamedColumns => {
                if t.n_cols() == 0 {
                    return true;
                }
                let unnamed = t.headers().iter().filter(|h| h.is_unnamed).count();
                unnamed as f64 / t.n_cols() as f64 <= cfg.unnamed_col_fraction
            }
            RuleId::TableMissing => t.missing_fraction() <= cfg.table_missing_fraction,
            RuleId::ColumnCount => (cfg.min_cols..=cfg.max_cols).contains(&t.n_cols()),
            _ => true,
        }
    }

    const TABLE_RULES: [RuleId; 8] = [
        RuleId::TableEnglish,
        RuleId::SchemaHeterogeneity,
        RuleId::RowCount,
        RuleId::ParseError,
        RuleId::TablePii,
        RuleId::TableCode,
        RuleId::UnnamedColumns,
        RuleId::TableMissing,
    ];

    /// First failing table-level rule, with `applied` counters recorded.
    pub fn table_verdict(&self, t: &TableArtifact, report: &mut FilterReport) -> Verdict {
        for rule in Self::TABLE_RULES {
            report.applied(rule);
            if !self.check_table_rule(t, rule) {
                return Verdict::Reject(rule);
            }
        }
        Verdict::Accept
    }

    fn column_rule(&self, t: &TableArtifact, col: usize) -> Option<RuleId> {
        let meta = &t.headers()[col];
        if meta.name.chars().count() > self.cfg.max_header_chars {
            return Some(RuleId::LongHeader);
        }
        if is_numeric_name(&meta.name) {
            return Some(RuleId::NumericHeader);
        }
        if meta.missing_fraction > self.cfg.col_missing_fraction {
            return Some(RuleId::ColumnMissing);
        }
        if meta.declared_type == DataType::Text {
            // cells without any words (codes, symbols) carry no language signal
            let (mut sum, mut n) = (0.0, 0usize);
            for cell in t.column(col) {
                if let CellValue::Text(s) = cell {
                    if english::words(s).next().is_some() {
                        sum += self.english.english_score(s);
                        n += 1;
                    }
                }
            }
            if n > 0 && sum / (n as f64) < self.cfg.english_threshold {
                return Some(RuleId::ColumnEnglish);
            }
        }
        if meta.distinct_count <= 1 {
            return Some(RuleId::ConstantColumn);
        }
        None
    }

    /// Drops columns, then re-checks the column-count bounds.
    pub fn column_filters(
        &self,
        t: &mut TableArtifact,
        report: &mut FilterReport,
        removed: &mut Vec<RemovedColumn>,
    ) -> Verdict {
        for rule in [
            RuleId::LongHeader,
            RuleId::NumericHeader,
            RuleId::ColumnMissing,
            RuleId::ColumnEnglish,
            RuleId::ConstantColumn,
        ] {
            report.applied(rule);
        }
        let mut drop = vec![false; t.n_cols()];
        for (col, flag) in drop.iter_mut().enumerate() {
            if let Some(rule) = self.column_rule(t, col) {
                *flag = true;
                report.entry(rule).columns += 1;
                removed.push(RemovedColumn { name: t.headers()[col].name.clone(), rule });
            }
        }
        t.remove_columns(&drop);
        report.applied(RuleId::ColumnCount);
        if self.check_table_rule(t, RuleId::ColumnCount) {
            Verdict::Accept
        } else {
            Verdict::Reject(RuleId::ColumnCount)
        }
    }

    fn row_has(&self, t: &TableArtifact, row: usize, pred: impl Fn(&str) -> bool) -> bool {
        t.row(row).filter(|c| !c.is_null()).any(|c| pred(&c.render()))
    }

    /// Drops rows, then re-checks the row-count and missing-fraction bounds.
    pub fn row_filters(
        &self,
        t: &mut TableArtifact,
        report: &mut FilterReport,
        removed: &mut Vec<RemovedRow>,
    ) -> Verdict {
        let n = t.n_rows();
        let mut cause: Vec<Option<RuleId>> = vec![None; n];
        let cols = t.n_cols().max(1) as f64;

        report.applied(RuleId::RowMissing);
        for (r, c) in cause.iter_mut().enumerate() {
            let nulls = t.row(r).filter(|v| v.is_null()).count();
            if nulls as f64 / cols > self.cfg.row_missing_fraction {
                *c = Some(RuleId::RowMissing);
            }
        }

        report.applied(RuleId::DuplicateRow);
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        for (r, c) in cause.iter_mut().enumerate() {
            if c.is_some() {
                continue;
            }
            if !seen.insert(row_key(t, r)) {
                *c = Some(RuleId::DuplicateRow);
            }
        }

        let content_rules: [(RuleId, Box<dyn Fn(&str) -> bool + '_>); 3] = [
            (RuleId::RowPii, Box::new(detect_pii)),
            (RuleId::RowCode, Box::new(|s: &str| self.code.code_score(s) > self.cfg.row_code_threshold)),
            (RuleId::FloorSymbol, Box::new(|s: &str| s.contains(FLOOR_SYMBOL))),
        ];
        for (rule, pred) in &content_rules {
            report.applied(*rule);
            for (r, c) in cause.iter_mut().enumerate() {
                if c.is_none() && self.row_has(t, r, pred) {
                    *c = Some(*rule);
                }
            }
        }

        for (r, c) in cause.iter().enumerate() {
            if let Some(rule) = c {
                report.entry(*rule).rows += 1;
                removed.push(RemovedRow { row: t.row_ids()[r], rule: *rule });
            }
        }
        let keep: Vec<bool> = cause.iter().map(Option::is_none).collect();
        t.retain_rows(&keep);

        for rule in [RuleId::RowCount, RuleId::TableMissing] {
            report.applied(rule);
            if !self.check_table_rule(t, rule) {
                return Verdict::Reject(rule);
            }
        }
        Verdict::Accept
    }

    /// Runs table, column and row filters in order.
    pub fn run(&self, mut t: TableArtifact) -> FilterOutcome {
        let mut report = FilterReport {
            input: ShapeCounts { tables: 1, columns: t.n_cols() as u64, rows: t.n_rows() as u64 },
            ..Default::default()
        };
        let mut removed_columns = Vec::new();
        let mut removed_rows = Vec::new();

        let mut verdict = self.table_verdict(&t, &mut report);
        if verdict.is_accept() {
            verdict = self.column_filters(&mut t, &mut report, &mut removed_columns);
        }
        if verdict.is_accept() {
            verdict = self.row_filters(&mut t, &mut report, &mut removed_rows);
        }

        match verdict {
            Verdict::Accept => {
                t.set_filter_state(FilterState::Accepted);
                report.output = ShapeCounts { tables: 1, columns: t.n_cols() as u64, rows: t.n_rows() as u64 };
            }
            Verdict::Reject(rule) => {
                t.set_filter_state(FilterState::Rejected(rule));
                let e = report.entry(rule);
                e.tables += 1;
                e.columns += t.n_cols() as u64;
                e.rows += t.n_rows() as u64;
            }
        }
        FilterOutcome { table: t, report, removed_columns, removed_rows }
    }
}

fn row_key(t: &TableArtifact, r: usize) -> Vec<u8> {
    let mut key = Vec::new();
    for cell in t.row(r) {
        key.push(cell.data_type().tag());
        let s = cell.render();
        key.extend_from_slice(&(s.len() as u32).to_le_bytes());
        key.extend_from_slice(s.as_bytes());
    }
    key
}

/// Table-level rules only.
pub fn apply_table_filters(t: &TableArtifact, cfg: &FilterConfig) -> Verdict {
    FilterBank::new(cfg.clone()).table_verdict(t, &mut FilterReport::default())
}

/// Column-level rules on a table that passed the table rules. A table left
/// with too few (or too many) columns comes back `Rejected(ColumnCount)`.
pub fn apply_column_filters(mut t: TableArtifact, cfg: &FilterConfig) -> (TableArtifact, FilterReport) {
    let mut report = FilterReport::default();
    let v = FilterBank::new(cfg.clone()).column_filters(&mut t, &mut report, &mut Vec::new());
    if let Verdict::Reject(rule) = v {
        t.set_filter_state(FilterState::Rejected(rule));
    }
    (t, report)
}

/// Row-level rules on a table that passed the column rules.
pub fn apply_row_filters(mut t: TableArtifact, cfg: &FilterConfig) -> (TableArtifact, FilterReport) {
    let mut report = FilterReport::default();
    let v = FilterBank::new(cfg.clone()).row_filters(&mut t, &mut report, &mut Vec::new());
    if let Verdict::Reject(rule) = v {
        t.set_filter_state(FilterState::Rejected(rule));
    }
    (t, report)
}

/// Full pipeline with the bundled scorers.
pub fn filter_table(t: TableArtifact, cfg: &FilterConfig) -> FilterOutcome {
    FilterBank::new(cfg.clone()).run(t)
}

#[cfg(test)]
mod tests;
