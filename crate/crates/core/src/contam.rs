//! Schema-overlap contamination check between an evaluation suite and a
//! training corpus.
//!
//! An eval table is a fuzzy match for a training table when every eval
//! column name appears among the training table's column names, and a strict
//! match when the column counts are also equal. Names compare byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::table::{ContentKey, TableArtifact};

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad index file {path}: {source}")]
    Format { path: String, source: serde_json::Error },
}

/// Inverted index from column name to the training tables that contain it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaIndex {
    postings: BTreeMap<String, BTreeSet<ContentKey>>,
    /// Column count of every indexed table.
    tables: BTreeMap<ContentKey, usize>,
}

impl SchemaIndex {
    pub fn new() -> SchemaIndex {
        SchemaIndex::default()
    }

    pub fn add<'a>(&mut self, key: ContentKey, names: impl IntoIterator<Item = &'a str>, n_cols: usize) {
        self.tables.insert(key, n_cols);
        for name in names {
            self.postings.entry(name.to_string()).or_default().insert(key);
        }
    }

    pub fn add_table(&mut self, t: &TableArtifact) {
        self.add(t.content_key(), t.column_names(), t.n_cols());
    }

    pub fn merge(mut self, other: SchemaIndex) -> SchemaIndex {
        for (name, keys) in other.postings {
            self.postings.entry(name).or_default().extend(keys);
        }
        self.tables.extend(other.tables);
        self
    }

    pub fn n_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn n_names(&self) -> usize {
        self.postings.len()
    }

    pub fn tables_with(&self, name: &str) -> Option<&BTreeSet<ContentKey>> {
        self.postings.get(name)
    }

    pub fn n_cols(&self, key: &ContentKey) -> Option<usize> {
        self.tables.get(key).copied()
    }

    /// Keys of tables containing every name, intersecting from the rarest.
    pub fn supersets<S: AsRef<str>>(&self, names: &[S]) -> Vec<ContentKey> {
        let mut lists: Vec<&BTreeSet<ContentKey>> = Vec::with_capacity(names.len());
        let mut seen = BTreeSet::new();
        for n in names {
            if !seen.insert(n.as_ref()) {
                continue;
            }
            match self.postings.get(n.as_ref()) {
                Some(l) => lists.push(l),
                None => return Vec::new(),
            }
        }
        lists.sort_by_key(|l| l.len());
        let Some((first, rest)) = lists.split_first() else { return Vec::new() };
        first.iter().filter(|k| rest.iter().all(|l| l.contains(k))).copied().collect()
    }

    pub fn check<S: AsRef<str>>(&self, eval_cols: &[S], n_eval_cols: usize) -> CheckResult {
        let fuzzy_matches = self.supersets(eval_cols);
        let strict_matches: Vec<ContentKey> =
            fuzzy_matches.iter().filter(|k| self.tables[*k] == n_eval_cols).copied().collect();
        CheckResult {
            fuzzy: !fuzzy_matches.is_empty(),
            strict: !strict_matches.is_empty(),
            fuzzy_matches,
            strict_matches,
        }
    }

    /// Writes the index as JSON with keys in sorted order.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let json = serde_json::to_vec_pretty(self)
            .map_err(|source| IndexError::Format { path: path.display().to_string(), source })?;
        fs::write(path, json).map_err(|source| IndexError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<SchemaIndex, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::Io { path: path.display().to_string(), source })?;
        serde_json::from_slice(&bytes).map_err(|source| IndexError::Format { path: path.display().to_string(), source })
    }
}

/// Single-pass index over a table stream.
pub fn build_index<'a>(corpus: impl IntoIterator<Item = &'a TableArtifact>) -> SchemaIndex {
    let mut idx = SchemaIndex::new();
    for t in corpus {
        idx.add_table(t);
    }
    idx
}

/// Parallel map over chunks followed by an associative merge.
pub fn build_index_par(corpus: &[TableArtifact]) -> SchemaIndex {
    corpus.par_chunks(256).map(build_index).reduce(SchemaIndex::new, SchemaIndex::merge)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub fuzzy: bool,
    pub strict: bool,
    pub fuzzy_matches: Vec<ContentKey>,
    pub strict_matches: Vec<ContentKey>,
}

/// Column names of one evaluation table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSchema {
    pub benchmark: String,
    pub name: String,
    pub columns: Vec<String>,
}

impl EvalSchema {
    pub fn from_table(benchmark: &str, name: &str, t: &TableArtifact) -> EvalSchema {
        EvalSchema {
            benchmark: benchmark.into(),
            name: name.into(),
            columns: t.column_names().map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkContamination {
    pub benchmark: String,
    pub tables: usize,
    pub fuzzy: usize,
    pub fuzzy_pct: f64,
    pub strict: usize,
    pub strict_pct: f64,
    pub fuzzy_tables: Vec<String>,
    pub strict_tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub benchmarks: Vec<BenchmarkContamination>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

pub fn report(suite: &[EvalSchema], idx: &SchemaIndex) -> ContaminationReport {
    let mut by: BTreeMap<&str, Vec<&EvalSchema>> = BTreeMap::new();
    for s in suite {
        by.entry(&s.benchmark).or_default().push(s);
    }
    let benchmarks = by
        .into_iter()
        .map(|(benchmark, tables)| {
            let results: Vec<(&EvalSchema, CheckResult)> =
                tables.par_iter().map(|s| (*s, idx.check(&s.columns, s.columns.len()))).collect();
            let pick = |f: fn(&CheckResult) -> bool| {
                let mut v: Vec<String> = results.iter().filter(|(_, r)| f(r)).map(|(s, _)| s.name.clone()).collect();
                v.sort();
                v
            };
            let fuzzy_tables = pick(|r| r.fuzzy);
            let strict_tables = pick(|r| r.strict);
            BenchmarkContamination {
                benchmark: benchmark.into(),
                tables: tables.len(),
                fuzzy: fuzzy_tables.len(),
                fuzzy_pct: pct(fuzzy_tables.len(), tables.len()),
                strict: strict_tables.len(),
                strict_pct: pct(strict_tables.len(), tables.len()),
                fuzzy_tables,
                strict_tables,
            }
        })
        .collect();
    ContaminationReport { benchmarks }
}

impl ContaminationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self.benchmarks.iter().map(|b| b.benchmark.len()).max().unwrap_or(0).max("Benchmark".len());
        let _ = writeln!(out, "{:<w$}  {:>6}  {:>14}  {:>14}", "Benchmark", "Tables", "Fuzzy", "Strict");
        for b in &self.benchmarks {
            let fuzzy = format!("{} ({:.1}%)", b.fuzzy, b.fuzzy_pct);
            let strict = format!("{} ({:.1}%)", b.strict, b.strict_pct);
            let _ = writeln!(out, "{:<w$}  {:>6}  {:>14}  {:>14}", b.benchmark, b.tables, fuzzy, strict);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn key(i: u32) -> ContentKey {
        let mut k = [0u8; 32];
        k[..4].copy_from_slice(&i.to_be_bytes());
        ContentKey(k)
    }

    fn index(tables: &[Vec<&str>]) -> SchemaIndex {
        let mut idx = SchemaIndex::new();
        for (i, cols) in tables.iter().enumerate() {
            idx.add(key(i as u32), cols.iter().copied(), cols.len());
        }
        idx
    }

    #[test]
    fn definitions() {
        let idx = index(&[vec!["id", "a", "b", "c"], vec!["id", "x"]]);
        assert_eq!(idx.tables_with("id").unwrap().len(), 2);
        let r = idx.check(&["a", "b"], 2);
        assert!(r.fuzzy && !r.strict);
        let idx2 = index(&[vec!["a", "b"]]);
        let r = idx2.check(&["b", "a"], 2);
        assert!(r.fuzzy && r.strict);
        let r = idx.check(&["d"], 1);
        assert!(!r.fuzzy && !r.strict);
        assert_eq!(SchemaIndex::new().n_tables(), 0);
        assert!(!SchemaIndex::new().check(&["a"], 1).fuzzy);
    }

    #[test]
    fn report_counts_and_text() {
        let idx = index(&[vec!["a", "b"], vec!["p", "q", "r"]]);
        let suite = vec![
            EvalSchema { benchmark: "B".into(), name: "t1".into(), columns: vec!["a".into(), "b".into()] },
            EvalSchema { benchmark: "B".into(), name: "t2".into(), columns: vec!["p".into(), "q".into()] },
            EvalSchema { benchmark: "B".into(), name: "t3".into(), columns: vec!["z".into()] },
            EvalSchema { benchmark: "C".into(), name: "u".into(), columns: vec!["zz".into()] },
        ];
        let rep = report(&suite, &idx);
        let b = &rep.benchmarks[0];
        assert_eq!((b.fuzzy, b.strict, b.tables), (2, 1, 3));
        assert_eq!(b.strict_tables, vec!["t1"]);
        let c = &rep.benchmarks[1];
        assert_eq!((c.fuzzy, c.strict, c.fuzzy_pct), (0, 0, 0.0));
        assert!(rep.to_text().contains("2 (66.7%)"));
    }

    #[test]
    fn persisted_sorted_roundtrip() {
        let idx = index(&[vec!["zeta", "alpha"], vec!["alpha"]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("idx.json");
        idx.save(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.find("\"alpha\"").unwrap() < text.find("\"zeta\"").unwrap());
        assert_eq!(SchemaIndex::load(&p).unwrap(), idx);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
        let name = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "id", "x"]).prop_map(String::from);
        prop::collection::vec(prop::collection::vec(name, 1..6), 0..60)
    }

    proptest! {
        #[test]
        fn matches_linear_scan(corpus in arb_corpus(), probe in prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "id", "q"]), 1..4)) {
            let mut idx = SchemaIndex::new();
            for (i, cols) in corpus.iter().enumerate() {
                idx.add(key(i as u32), cols.iter().map(String::as_str), cols.len());
            }
            let probe_set: BTreeSet<&str> = probe.iter().copied().collect();
            let r = idx.check(&probe, probe.len());
            let linear: Vec<ContentKey> = corpus.iter().enumerate()
                .filter(|(_, cols)| probe_set.iter().all(|p| cols.iter().any(|c| c == p)))
                .map(|(i, _)| key(i as u32))
                .collect();
            prop_assert_eq!(&r.fuzzy_matches, &linear);
            prop_assert!(!r.strict || r.fuzzy);
            prop_assert!(r.strict_matches.iter().all(|k| r.fuzzy_matches.contains(k)));
            let mut rev = probe.clone();
            rev.reverse();
            prop_assert_eq!(idx.check(&rev, probe.len()), r);
        }

        #[test]
        fn merge_is_order_free(corpus in arb_corpus(), split in 0usize..60) {
            let split = split.min(corpus.len());
            let part = |range: std::ops::Range<usize>| {
                let mut idx = SchemaIndex::new();
                for i in range {
                    idx.add(key(i as u32), corpus[i].iter().map(String::as_str), corpus[i].len());
                }
                idx
            };
            let whole = part(0..corpus.len());
            let a = part(0..split).merge(part(split..corpus.len()));
            let b = part(split..corpus.len()).merge(part(0..split));
            prop_assert_eq!(&whole, &a);
            prop_assert_eq!(&whole, &b);
        }
    }
}
