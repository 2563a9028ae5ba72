//! Few-shot evaluation: suite loading, k-shot prompts, feasibility,
//! exact-match scoring and results tables.
//!
//! Completions come from outside (a JSONL file keyed by task, shot count,
//! trial and row). A completion scores only when it equals the gold label
//! followed by `<|endcompletion|>`, byte for byte.

mod stats;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use self::stats::{
    binomial_cdf, clopper_pearson, exact_match, relative_sample_efficiency, score_matches, Curve, Score,
};
use crate::serialize::{concat_shots, serialize_row, SerializeError};
use crate::table::{ingest_table_with, Format, Provenance, TableArtifact, TableError};
use crate::task::{table_seed, PredictionTask, TaskError, TaskKind, EVAL_QUANTILE_BINS, INT_CATEGORICAL_MAX_DISTINCT};
use crate::tokenpack::Tokenizer;

/// Most test rows evaluated per task.
pub const TEST_CAP: usize = 128;
pub const DEFAULT_TRIALS: usize = 10;
pub const DEFAULT_SHOTS: &[usize] = &[0, 1, 2, 4, 8, 16, 32];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no records to score")]
    EmptyRecords,
    #[error("curve {curve} never reaches accuracy {alpha}")]
    LevelNotReached { curve: &'static str, alpha: f64 },
    #[error("{need} shots requested but the train split has {have} rows")]
    InsufficientShots { need: usize, have: usize },
    #[error("{path}: {msg}")]
    Metadata { path: PathBuf, msg: String },
    #[error("task {task}: unknown target column {target}")]
    UnknownTarget { task: String, target: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Categorical,
    Quartiles,
}

/// Per-task metadata file (`<name>.json`, `.yaml` or `.yml`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskMeta {
    pub target: String,
    #[serde(default)]
    pub kind: Option<EvalKind>,
    #[serde(default)]
    pub benchmark: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalTask {
    pub name: String,
    pub benchmark: String,
    pub table: TableArtifact,
    pub task: PredictionTask,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn default_kind(t: &TableArtifact, col: usize) -> EvalKind {
    let meta = &t.headers()[col];
    match meta.declared_type {
        crate::table::DataType::Float => EvalKind::Quartiles,
        crate::table::DataType::Int if meta.distinct_count > INT_CATEGORICAL_MAX_DISTINCT => EvalKind::Quartiles,
        _ => EvalKind::Categorical,
    }
}

impl EvalTask {
    /// Splits rows with a target value into a test split of at most
    /// [`TEST_CAP`] rows (half the rows when fewer than `2 * TEST_CAP`) and a
    /// train split. Quartile boundaries come from the train split only.
    pub fn new(
        name: &str,
        benchmark: &str,
        table: TableArtifact,
        meta: &TaskMeta,
        seed: u64,
    ) -> Result<EvalTask, EvalError> {
        let col = table
            .column_names()
            .position(|n| n == meta.target)
            .ok_or_else(|| EvalError::UnknownTarget { task: name.into(), target: meta.target.clone() })?;
        let mut rows: Vec<usize> = (0..table.n_rows()).filter(|&r| !table.cell(r, col).is_null()).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(table_seed(seed, &table.content_key())));
        let n_test = TEST_CAP.min(rows.len() / 2);
        let mut test = rows[..n_test].to_vec();
        let mut train = rows[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        let task = match meta.kind.unwrap_or_else(|| default_kind(&table, col)) {
            EvalKind::Categorical => {
                let order: Vec<usize> = train.iter().chain(&test).copied().collect();
                PredictionTask::categorical(&table, col, &order)
            }
            EvalKind::Quartiles => PredictionTask::binned(&table, col, &train, EVAL_QUANTILE_BINS)?,
        };
        let mut out = EvalTask { name: name.into(), benchmark: benchmark.into(), table, task, train, test };
        if out.task.task_kind == TaskKind::BinnedContinuous {
            // Non-numeric stray values have no bin.
            let t = &out.table;
            let task = &out.task;
            out.train.retain(|&r| task.label_of(t, r).is_some());
            out.test.retain(|&r| task.label_of(t, r).is_some());
        }
        Ok(out)
    }

    pub fn random_baseline(&self) -> f64 {
        random_baseline(&self.task)
    }

    /// First `k` rows of the trial's seeded permutation of the train split.
    pub fn shots(&self, k: usize, trial: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
        if k > self.train.len() {
            return Err(EvalError::InsufficientShots { need: k, have: self.train.len() });
        }
        let mut perm = self.train.clone();
        let trial_seed =
            table_seed(seed ^ (trial as u64 + 1).wrapping_mul(0xA076_1D64_78BD_642F), &self.table.content_key());
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(trial_seed));
        perm.truncate(k);
        Ok(perm)
    }

    pub fn build_kshot_prompt(&self, k: usize, trial: usize, row: usize, seed: u64) -> Result<Prompt, EvalError> {
        let shots = self.shots(k, trial, seed)?;
        self.prompt_with_shots(&shots, k, trial, row)
    }

    fn prompt_with_shots(&self, shots: &[usize], k: usize, trial: usize, row: usize) -> Result<Prompt, EvalError> {
        let shot_ex =
            shots.iter().map(|&r| serialize_row(&self.task, &self.table, r, true)).collect::<Result<Vec<_>, _>>()?;
        let query = serialize_row(&self.task, &self.table, row, false)?;
        let gold = query.gold().ok_or(SerializeError::MissingTarget(row))?;
        Ok(Prompt { task: self.name.clone(), k, trial, row, prompt: concat_shots(&shot_ex, &query)?, gold })
    }

    /// Prompts for every test row in one trial.
    pub fn prompts(&self, k: usize, trial: usize, seed: u64) -> Result<Vec<Prompt>, EvalError> {
        let shots = self.shots(k, trial, seed)?;
        self.test.iter().map(|&r| self.prompt_with_shots(&shots, k, trial, r)).collect()
    }

    /// True iff every prompt plus its gold completion fits in `l_max` tokens
    /// over `n_trials` shot draws.
    ///
    /// Token counts add across shots because every serialized row ends in a
    /// special token, which the tokenizers never merge with neighbours.
    pub fn feasible(&self, k: usize, tok: &dyn Tokenizer, l_max: usize, n_trials: usize, seed: u64) -> bool {
        if k > self.train.len() {
            return false;
        }
        let count = |r: usize, answer: bool| {
            serialize_row(&self.task, &self.table, r, answer)
                .map(|e| tok.encode(&e.text).len())
                .unwrap_or(usize::MAX / 4)
        };
        let longest_query = self
            .test
            .iter()
            .map(|&r| {
                let gold =
                    serialize_row(&self.task, &self.table, r, false).ok().and_then(|e| e.gold()).unwrap_or_default();
                count(r, false) + tok.encode(&gold).len()
            })
            .max()
            .unwrap_or(0);
        let mut cache: HashMap<usize, usize> = HashMap::new();
        (0..n_trials.max(1)).all(|trial| {
            let shots = self.shots(k, trial, seed).unwrap_or_default();
            let total: usize = shots.iter().map(|&r| *cache.entry(r).or_insert_with(|| count(r, true))).sum();
            total + longest_query <= l_max
        })
    }
}

pub fn random_baseline(task: &PredictionTask) -> f64 {
    1.0 / task.label_set.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub task: String,
    pub k: usize,
    pub trial: usize,
    pub row: usize,
    pub prompt: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task: String,
    pub k: usize,
    pub trial: usize,
    pub row: usize,
    pub prompt: String,
    pub gold: String,
    pub produced: Option<String>,
    pub exact_match: bool,
}

/// Order-invariant accuracy and 95% interval over records.
pub fn score(records: &[EvalRecord]) -> Result<Score, EvalError> {
    score_matches(records.iter().map(|r| r.exact_match))
}

/// Source of model outputs for prompts.
pub trait Completer {
    fn complete(&self, prompt: &Prompt) -> Option<String>;
}

impl<F: Fn(&Prompt) -> Option<String>> Completer for F {
    fn complete(&self, prompt: &Prompt) -> Option<String> {
        self(prompt)
    }
}

/// One line of a completions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionLine {
    pub task: String,
    pub k: usize,
    pub trial: usize,
    pub row: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct CompletionSet {
    map: HashMap<(String, usize, usize, usize), String>,
}

impl CompletionSet {
    pub fn insert(&mut self, c: CompletionLine) {
        self.map.insert((c.task, c.k, c.trial, c.row), c.text);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn load(path: &Path) -> Result<CompletionSet, EvalError> {
        let io = |source| EvalError::Io { path: path.into(), source };
        let file = fs::File::open(path).map_err(io)?;
        let mut set = CompletionSet::default();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let c: CompletionLine = serde_json::from_str(&line)
                .map_err(|e| EvalError::Metadata { path: path.into(), msg: format!("line {}: {e}", i + 1) })?;
            set.insert(c);
        }
        Ok(set)
    }
}

impl Completer for CompletionSet {
    fn complete(&self, p: &Prompt) -> Option<String> {
        self.map.get(&(p.task.clone(), p.k, p.trial, p.row)).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub k: usize,
    pub trials: Vec<Score>,
    pub mean_accuracy: f64,
    pub pooled: Score,
    /// Prompts without a completion; scored as misses.
    pub missing: usize,
}

/// Runs `n_trials` shot draws and scores each against the completer.
pub fn trial_protocol(
    task: &EvalTask,
    k: usize,
    n_trials: usize,
    seed: u64,
    completer: &dyn Completer,
) -> Result<(TrialSummary, Vec<EvalRecord>), EvalError> {
    let mut records = Vec::new();
    let mut trials = Vec::with_capacity(n_trials);
    let mut missing = 0;
    for trial in 0..n_trials {
        let start = records.len();
        for p in task.prompts(k, trial, seed)? {
            let produced = completer.complete(&p);
            missing += usize::from(produced.is_none());
            let exact = produced.as_deref().is_some_and(|s| exact_match(s, &p.gold));
            records.push(EvalRecord {
                task: p.task,
                k,
                trial,
                row: p.row,
                prompt: p.prompt,
                gold: p.gold,
                produced,
                exact_match: exact,
            });
        }
        trials.push(score(&records[start..])?);
    }
    let pooled = score(&records)?;
    let mean_accuracy = trials.iter().map(|s| s.accuracy).sum::<f64>() / trials.len() as f64;
    Ok((TrialSummary { k, trials, mean_accuracy, pooled, missing }, records))
}

fn read_meta(path: &Path) -> Result<TaskMeta, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
    let bad = |msg: String| EvalError::Metadata { path: path.into(), msg };
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| bad(e.to_string())),
        _ => serde_yaml::from_str(&text).map_err(|e| bad(e.to_string())),
    }
}

/// Loads every `<name>.csv` with a sibling metadata file from a suite
/// directory, sorted by name. The benchmark name defaults to the directory name.
pub fn load_suite(dir: &Path, seed: u64) -> Result<Vec<EvalTask>, EvalError> {
    let io = |source| EvalError::Io { path: dir.into(), source };
    let mut csvs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    csvs.sort();
    let suite_name = dir.file_name().map_or_else(|| "suite".into(), |n| n.to_string_lossy().into_owned());
    let mut tasks = Vec::new();
    for csv in csvs {
        let name = csv.file_stem().unwrap().to_string_lossy().into_owned();
        let Some(meta_path) = ["json", "yaml", "yml"].iter().map(|e| csv.with_extension(e)).find(|p| p.exists()) else {
            return Err(EvalError::Metadata { path: csv, msg: "no metadata file".into() });
        };
        let meta = read_meta(&meta_path)?;
        let prov = Provenance { source: csv.display().to_string(), shard: 0 };
        let table = ingest_table_with(&csv, Format::Csv, prov)?;
        let benchmark = meta.benchmark.clone().unwrap_or_else(|| suite_name.clone());
        tasks.push(EvalTask::new(&name, &benchmark, table, &meta, seed)?);
    }
    Ok(tasks)
}

/// Result for one (task, k): a score or `"NA"` when the prompts do not fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultCell {
    Scored(TrialSummaryCell),
    Na(String),
}

impl ResultCell {
    pub fn na() -> ResultCell {
        ResultCell::Na("NA".into())
    }

    pub fn accuracy(&self) -> Option<f64> {
        match self {
            ResultCell::Scored(s) => Some(s.accuracy),
            ResultCell::Na(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummaryCell {
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub missing: usize,
}

impl From<&TrialSummary> for TrialSummaryCell {
    fn from(s: &TrialSummary) -> Self {
        TrialSummaryCell {
            accuracy: s.mean_accuracy,
            ci_low: s.pooled.ci_low,
            ci_high: s.pooled.ci_high,
            n: s.pooled.n,
            missing: s.missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub n_classes: usize,
    pub random_baseline: f64,
    /// Feasible for every shot count of the run.
    pub feasible_all: bool,
    pub results: BTreeMap<usize, ResultCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub benchmark: String,
    pub shots: Vec<usize>,
    pub tasks: Vec<TaskResult>,
}

impl BenchmarkResults {
    /// Mean accuracy per shot count over tasks feasible at every shot count.
    pub fn curve(&self) -> Option<Curve> {
        let tasks: Vec<&TaskResult> = self.tasks.iter().filter(|t| t.feasible_all).collect();
        if tasks.is_empty() {
            return None;
        }
        Some(Curve::new(self.shots.iter().map(|&k| {
            let acc: f64 = tasks.iter().filter_map(|t| t.results[&k].accuracy()).sum();
            (k, acc / tasks.len() as f64)
        })))
    }
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub shots: Vec<usize>,
    pub n_trials: usize,
    pub seed: u64,
    pub l_max: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            shots: DEFAULT_SHOTS.to_vec(),
            n_trials: DEFAULT_TRIALS,
            seed: 0,
            l_max: crate::tokenpack::DEFAULT_L_MAX,
        }
    }
}

/// Feasible prompts of a suite in (task, k, trial, row) order.
pub fn suite_prompts(tasks: &[EvalTask], s: &EvalSettings, tok: &dyn Tokenizer) -> Result<Vec<Prompt>, EvalError> {
    let mut out = Vec::new();
    for t in tasks {
        for &k in &s.shots {
            if !t.feasible(k, tok, s.l_max, s.n_trials, s.seed) {
                continue;
            }
            for trial in 0..s.n_trials {
                out.extend(t.prompts(k, trial, s.seed)?);
            }
        }
    }
    Ok(out)
}

/// Scores a suite, grouping tasks by benchmark (sorted by name).
pub fn evaluate_suite(
    tasks: &[EvalTask],
    s: &EvalSettings,
    tok: &dyn Tokenizer,
    completer: &dyn Completer,
) -> Result<Vec<BenchmarkResults>, EvalError> {
    let mut by_bench: BTreeMap<String, Vec<TaskResult>> = BTreeMap::new();
    for t in tasks {
        let mut results = BTreeMap::new();
        let mut feasible_all = true;
        for &k in &s.shots {
            let cell = if t.feasible(k, tok, s.l_max, s.n_trials, s.seed) && !t.test.is_empty() {
                let (summary, _) = trial_protocol(t, k, s.n_trials, s.seed, completer)?;
                ResultCell::Scored((&summary).into())
            } else {
                feasible_all = false;
                ResultCell::na()
            };
            results.insert(k, cell);
        }
        by_bench.entry(t.benchmark.clone()).or_default().push(TaskResult {
            task: t.name.clone(),
            n_classes: t.task.n_classes(),
            random_baseline: t.random_baseline(),
            feasible_all,
            results,
        });
    }
    Ok(by_bench
        .into_iter()
        .map(|(benchmark, tasks)| BenchmarkResults { benchmark, shots: s.shots.clone(), tasks })
        .collect())
}
