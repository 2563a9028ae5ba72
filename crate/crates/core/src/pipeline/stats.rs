//! Shape, missingness and type histograms over accepted tables.
//!
//! Bucket definitions:
//! - rows: 1, 2, 3-4, 5-8, ..., 257-512, 513-1000, >1000
//! - columns: 1, 2, 3, 4, 5, 6, 7-8, 9-10, 11-16, 17-32, ..., 257-512, >512
//! - missing fraction: [0.00, 0.01), [0.01, 0.02), ..., [0.09, 0.10], >0.10
//! - dtypes: declared column types, counted per column

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::CorpusManifest;
use crate::table::{DataType, TableSummary};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub buckets: Vec<HistogramBucket>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    fn from_upper_bounds(bounds: &[usize], values: impl Iterator<Item = usize>) -> Histogram {
        let mut buckets: Vec<HistogramBucket> = Vec::with_capacity(bounds.len() + 1);
        let mut lo = 1;
        for &hi in bounds {
            let label = if lo == hi { hi.to_string() } else { format!("{lo}-{hi}") };
            buckets.push(HistogramBucket { label, count: 0 });
            lo = hi + 1;
        }
        buckets.push(HistogramBucket { label: format!(">{}", bounds[bounds.len() - 1]), count: 0 });
        for v in values {
            buckets[bounds.partition_point(|&b| b < v)].count += 1;
        }
        Histogram { buckets }
    }

    fn missing(values: impl Iterator<Item = f64>) -> Histogram {
        let mut buckets: Vec<HistogramBucket> = (0..10)
            .map(|i| HistogramBucket {
                label: format!("{:.2}-{:.2}", i as f64 / 100.0, (i + 1) as f64 / 100.0),
                count: 0,
            })
            .collect();
        buckets.push(HistogramBucket { label: ">0.10".into(), count: 0 });
        for v in values {
            let i = if v > 0.10 { 10 } else { ((v * 100.0).floor() as usize).min(9) };
            buckets[i].count += 1;
        }
        Histogram { buckets }
    }
}

const ROW_BOUNDS: &[usize] = &[1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000];
const COL_BOUNDS: &[usize] = &[1, 2, 3, 4, 5, 6, 8, 10, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tables: usize,
    pub rows: usize,
    pub columns: usize,
    pub max_missing_fraction: f64,
    pub rows_histogram: Histogram,
    pub columns_histogram: Histogram,
    pub missing_histogram: Histogram,
    pub dtype_histogram: BTreeMap<DataType, usize>,
}

impl CorpusStats {
    pub fn from_summaries(s: &[TableSummary]) -> CorpusStats {
        let mut dtype_histogram = BTreeMap::new();
        for t in s {
            for (d, n) in &t.dtype_histogram {
                *dtype_histogram.entry(*d).or_default() += n;
            }
        }
        CorpusStats {
            tables: s.len(),
            rows: s.iter().map(|t| t.n_rows).sum(),
            columns: s.iter().map(|t| t.n_cols).sum(),
            max_missing_fraction: s.iter().map(|t| t.missing_fraction).fold(0.0, f64::max),
            rows_histogram: Histogram::from_upper_bounds(ROW_BOUNDS, s.iter().map(|t| t.n_rows)),
            columns_histogram: Histogram::from_upper_bounds(COL_BOUNDS, s.iter().map(|t| t.n_cols)),
            missing_histogram: Histogram::missing(s.iter().map(|t| t.missing_fraction)),
            dtype_histogram,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tables: {}", self.tables);
        let _ = writeln!(out, "rows: {}", self.rows);
        let _ = writeln!(out, "columns: {}", self.columns);
        let _ = writeln!(out, "max missing fraction: {:.4}", self.max_missing_fraction);
        for (name, h) in [
            ("rows per table", &self.rows_histogram),
            ("columns per table", &self.columns_histogram),
            ("missing fraction", &self.missing_histogram),
        ] {
            let _ = writeln!(out, "\n{name}:");
            for b in &h.buckets {
                let _ = writeln!(out, "  {:>10}  {}", b.label, b.count);
            }
        }
        let _ = writeln!(out, "\ncolumn types:");
        for (d, n) in &self.dtype_histogram {
            let _ = writeln!(out, "  {:>10}  {}", serde_json::to_value(d).unwrap().as_str().unwrap_or(""), n);
        }
        out
    }
}

/// Renders the statistics of a manifest as text and as JSON.
pub fn corpus_stats(m: &CorpusManifest) -> (String, serde_json::Value) {
    let mut text = format!(
        "shards: {}\ninput tables: {}\naccepted: {}\nrejected: {}\nduplicates: {}\nerrors: {}\n",
        m.totals.shards, m.totals.tables, m.totals.accepted, m.totals.rejected, m.totals.duplicates, m.totals.errors
    );
    if !m.filter.rules.is_empty() {
        text.push_str("\nremoved by rule (tables/columns/rows):\n");
        for (rule, c) in &m.filter.rules {
            if c.tables + c.columns + c.rows > 0 {
                let _ = writeln!(text, "  {:<22} {}/{}/{}", rule.as_str(), c.tables, c.columns, c.rows);
            }
        }
    }
    text.push('\n');
    text.push_str(&m.stats.to_text());
    let json = serde_json::json!({
        "totals": m.totals,
        "filter": m.filter,
        "stats": m.stats,
    });
    (text, json)
}
