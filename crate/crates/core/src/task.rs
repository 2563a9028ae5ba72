//! Target-column selection and continuous-target binning.
//!
//! Columns that look like identifiers, dates, free text, constants or
//! unnamed columns can never be targets, but stay in the table as features.
//! Among the remaining candidates a categorical target is preferred with
//! probability 0.9; a continuous target is discretized into 3 to 8
//! nearest-rank quantile bins rendered as "less than b", "between a and b"
//! and "greater than b".

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::table::{CellValue, ContentKey, DataType, TableArtifact};

/// Longest serialized value a target column may contain.
pub const MAX_TARGET_CHARS: usize = 256;
/// Probability of picking a categorical target when both kinds exist.
pub const CATEGORICAL_PROBABILITY: f64 = 0.9;
pub const MIN_TRAIN_BINS: usize = 3;
pub const MAX_TRAIN_BINS: usize = 8;
pub const EVAL_QUANTILE_BINS: usize = 4;
/// Integer columns with more distinct values than this are treated as continuous.
pub const INT_CATEGORICAL_MAX_DISTINCT: usize = 20;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("table has no usable target column")]
    NoCandidates,
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),
    #[error("bin count {0} outside [{MIN_TRAIN_BINS}, {MAX_TRAIN_BINS}]")]
    BinCount(usize),
    #[error("target column {0} is not numeric")]
    NotNumeric(String),
    #[error("unknown column {0}")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Categorical,
    BinnedContinuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub col: usize,
    pub kind: TaskKind,
}

/// A table plus a chosen target column and its label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTask {
    pub table_key: ContentKey,
    pub target_col: usize,
    pub target_name: String,
    pub task_kind: TaskKind,
    pub label_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_boundaries: Option<Vec<f64>>,
    pub feature_cols: Vec<usize>,
}

impl PredictionTask {
    /// Categorical task; labels in first-appearance order over `label_rows`.
    pub fn categorical(t: &TableArtifact, target_col: usize, label_rows: &[usize]) -> PredictionTask {
        let mut seen = HashSet::new();
        let mut label_set = Vec::new();
        for &r in label_rows {
            let cell = t.cell(r, target_col);
            if cell.is_null() {
                continue;
            }
            let label = cell.render().into_owned();
            if seen.insert(label.clone()) {
                label_set.push(label);
            }
        }
        Self::build(t, target_col, TaskKind::Categorical, label_set, None)
    }

    /// Binned task with boundaries computed over `bin_rows`.
    pub fn binned(
        t: &TableArtifact,
        target_col: usize,
        bin_rows: &[usize],
        n_bins: usize,
    ) -> Result<PredictionTask, TaskError> {
        let mut values = Vec::with_capacity(bin_rows.len());
        for &r in bin_rows {
            match t.cell(r, target_col) {
                CellValue::Null => {}
                c => {
                    values.push(c.as_f64().ok_or_else(|| TaskError::NotNumeric(t.headers()[target_col].name.clone()))?)
                }
            }
        }
        let (bounds, labels) = quantile_bins(&values, n_bins)?;
        Ok(Self::build(t, target_col, TaskKind::BinnedContinuous, labels, Some(bounds)))
    }

    fn build(
        t: &TableArtifact,
        target_col: usize,
        task_kind: TaskKind,
        label_set: Vec<String>,
        bin_boundaries: Option<Vec<f64>>,
    ) -> PredictionTask {
        PredictionTask {
            table_key: t.content_key(),
            target_col,
            target_name: t.headers()[target_col].name.clone(),
            task_kind,
            label_set,
            bin_boundaries,
            feature_cols: (0..t.n_cols()).filter(|&c| c != target_col).collect(),
        }
    }

    /// Label of a row's target, or None when the target is missing (or not
    /// numeric for a binned task).
    pub fn label_of(&self, t: &TableArtifact, row: usize) -> Option<String> {
        let cell = t.cell(row, self.target_col);
        if cell.is_null() {
            return None;
        }
        match &self.bin_boundaries {
            None => Some(cell.render().into_owned()),
            Some(bounds) => cell.as_f64().map(|v| self.label_set[bin_value(v, bounds)].clone()),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.label_set.len()
    }
}

fn is_continuous(t: &TableArtifact, col: usize) -> bool {
    let meta = &t.headers()[col];
    match meta.declared_type {
        DataType::Float => true,
        DataType::Int => meta.distinct_count > INT_CATEGORICAL_MAX_DISTINCT,
        _ => false,
    }
}

fn exclusion(t: &TableArtifact, col: usize) -> Option<&'static str> {
    let meta = &t.headers()[col];
    if meta.is_unnamed {
        return Some("unnamed");
    }
    if meta.declared_type.is_temporal() {
        return Some("date");
    }
    if meta.distinct_count <= 1 {
        return Some("constant");
    }
    let non_null = t.n_rows() - t.column(col).iter().filter(|c| c.is_null()).count();
    if !meta.declared_type.is_numeric() && meta.distinct_count == non_null && t.n_rows() > 1 {
        return Some("all_unique");
    }
    if t.column(col).iter().any(|c| c.render().chars().count() > MAX_TARGET_CHARS) {
        return Some("too_long");
    }
    None
}

/// Columns eligible as prediction targets, with their kind.
pub fn candidate_targets(t: &TableArtifact) -> Result<Vec<Candidate>, TaskError> {
    let out: Vec<Candidate> = (0..t.n_cols())
        .filter(|&c| exclusion(t, c).is_none())
        .map(|col| Candidate {
            col,
            kind: if is_continuous(t, col) { TaskKind::BinnedContinuous } else { TaskKind::Categorical },
        })
        .collect();
    if out.is_empty() {
        Err(TaskError::NoCandidates)
    } else {
        Ok(out)
    }
}

/// Picks one candidate. Categorical wins with probability 0.9 when both kinds
/// are present; otherwise the pick is uniform within the single kind.
///
/// Panics on an empty candidate list.
pub fn choose_target_with<R: Rng>(candidates: &[Candidate], rng: &mut R) -> Candidate {
    assert!(!candidates.is_empty(), "choose_target needs at least one candidate");
    let (cat, cont): (Vec<Candidate>, Vec<Candidate>) =
        candidates.iter().partition(|c| c.kind == TaskKind::Categorical);
    let pool = match (cat.is_empty(), cont.is_empty()) {
        (false, false) => {
            if rng.gen_bool(CATEGORICAL_PROBABILITY) {
                cat
            } else {
                cont
            }
        }
        (false, true) => cat,
        _ => cont,
    };
    pool[rng.gen_range(0..pool.len())]
}

pub fn choose_target(candidates: &[Candidate], seed: u64) -> Candidate {
    choose_target_with(candidates, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Shortest decimal that round-trips the value.
pub fn format_boundary(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

/// Nearest-rank quantile boundaries at `i / n_bins`, `i = 1..n_bins-1`, and
/// their labels.
pub fn quantile_bins(values: &[f64], n_bins: usize) -> Result<(Vec<f64>, Vec<String>), TaskError> {
    if n_bins < 2 {
        return Err(TaskError::BinCount(n_bins));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < n_bins {
        return Err(TaskError::DegenerateDistribution(format!("{} distinct values for {n_bins} bins", distinct.len())));
    }
    let n = sorted.len();
    let bounds: Vec<f64> = (1..n_bins)
        .map(|i| {
            // ceil(i * n / n_bins) as a 1-based rank
            let rank = (i * n).div_ceil(n_bins);
            sorted[rank.max(1) - 1]
        })
        .collect();
    if bounds.windows(2).any(|w| w[0] == w[1]) {
        return Err(TaskError::DegenerateDistribution("equal adjacent boundaries".into()));
    }
    let labels = bin_labels(&bounds);
    Ok((bounds, labels))
}

pub fn bin_labels(bounds: &[f64]) -> Vec<String> {
    let f: Vec<String> = bounds.iter().map(|&b| format_boundary(b)).collect();
    let mut labels = Vec::with_capacity(bounds.len() + 1);
    labels.push(format!("less than {}", f[0]));
    for w in f.windows(2) {
        labels.push(format!("between {} and {}", w[0], w[1]));
    }
    labels.push(format!("greater than {}", f[f.len() - 1]));
    labels
}

/// Bin index over `(-inf, b1], (b1, b2], ..., (b_last, inf)`.
pub fn bin_value(v: f64, bounds: &[f64]) -> usize {
    bounds.partition_point(|&b| b < v)
}

/// Derives the per-table seed from the global seed and the table key, so the
/// result does not depend on processing order.
pub fn table_seed(global: u64, key: &ContentKey) -> u64 {
    let mut x = global ^ key.low_u64();
    // splitmix64 finalizer
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Full training-task selection: draw a candidate, bin it with a random
/// 3..=8 bin count if continuous, and discard candidates that cannot be
/// binned until one works.
pub fn select_task(t: &TableArtifact, seed: u64) -> Result<PredictionTask, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = candidate_targets(t)?;
    let all_rows: Vec<usize> = (0..t.n_rows()).collect();
    while !candidates.is_empty() {
        let pick = choose_target_with(&candidates, &mut rng);
        match pick.kind {
            TaskKind::Categorical => return Ok(PredictionTask::categorical(t, pick.col, &all_rows)),
            TaskKind::BinnedContinuous => {
                let n_bins = rng.gen_range(MIN_TRAIN_BINS..=MAX_TRAIN_BINS);
                match PredictionTask::binned(t, pick.col, &all_rows, n_bins) {
                    Ok(task) => return Ok(task),
                    Err(_) => candidates.retain(|c| c.col != pick.col),
                }
            }
        }
    }
    Err(TaskError::NoCandidates)
}
