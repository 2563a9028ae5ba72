//! Sharded corpus compilation: ingest, dedup, filter, select targets,
//! serialize, tokenize and pack, with a deterministic manifest.
//!
//! Shards are processed in order. Within a shard, tables are handled in
//! chunks of `chunk_size` on a pool of `workers` threads; results are merged
//! in input order, so every output file is identical for any worker count.

mod stats;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::stats::{corpus_stats, CorpusStats, Histogram, HistogramBucket};
use crate::filter::{FilterBank, FilterConfig, FilterReport, RemovedColumn, RemovedRow, RuleId};
use crate::serialize::{serialize_row, ExampleRecord};
use crate::table::{ingest_table_with, ContentKey, FilterState, Format, Provenance, TableArtifact, TableSummary};
use crate::task::{select_task, table_seed, PredictionTask};
use crate::tokenpack::{
    pack_rows, write_binary_header, write_binary_records, write_jsonl, BpeTokenizer, PackStats, SpecialIds,
    TokenizedRow, Tokenizer, WordTokenizer, DEFAULT_L_MAX,
};

/// Environment variable overriding `workers`.
pub const WORKERS_ENV: &str = "TRAWL_WORKERS";

pub const TABLES_FILE: &str = "tables.jsonl";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const EXAMPLES_FILE: &str = "examples.jsonl";
pub const PACKED_JSONL_FILE: &str = "packed.jsonl";
pub const PACKED_BIN_FILE: &str = "packed.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration errors, 3 for IO errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Io { .. } => 3,
        }
    }

    fn io(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io { path: path.to_path_buf(), source }
    }
}

/// Last stage to run. Earlier stages always run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter,
    Tasks,
    Serialize,
    #[default]
    Pack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackFormat {
    #[default]
    Jsonl,
    Binary,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Glob patterns. A matching directory is one shard holding its csv and
    /// parquet files; a matching file is a one-table shard.
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub l_max: usize,
    pub stages: Stage,
    /// Directory with `vocab.json` and `merges.txt`; the bundled word
    /// tokenizer is used when absent.
    pub tokenizer: Option<PathBuf>,
    pub pack_format: PackFormat,
    /// Tables in flight per shard.
    pub chunk_size: usize,
    pub filter: FilterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            l_max: DEFAULT_L_MAX,
            stages: Stage::Pack,
            tokenizer: None,
            pack_format: PackFormat::Jsonl,
            chunk_size: 256,
            filter: FilterConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config. Relative paths are resolved against the config
    /// file's directory, and `TRAWL_WORKERS` overrides `workers`.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.tokenizer = cfg.tokenizer.map(|t| base.join(t));
        cfg.inputs = cfg.inputs.iter().map(|p| base.join(p).to_string_lossy().into_owned()).collect();
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            cfg.workers =
                w.trim().parse().map_err(|_| PipelineError::Config(format!("{WORKERS_ENV}={w} is not a count")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(PipelineError::Config("chunk_size must be at least 1".into()));
        }
        if self.l_max < 2 {
            return Err(PipelineError::Config("l_max must be at least 2".into()));
        }
        self.filter.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// One input file's place in the run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ShardInput {
    pub path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn is_table_file(p: &Path) -> bool {
    p.is_file() && Format::from_path(p).is_ok()
}

/// Expands the input globs into sorted, de-duplicated shards.
pub fn discover_shards(patterns: &[String]) -> Result<Vec<ShardInput>, PipelineError> {
    let mut paths = Vec::new();
    for pat in patterns {
        let entries = glob::glob(pat).map_err(|e| PipelineError::Config(format!("bad input pattern {pat}: {e}")))?;
        for entry in entries {
            paths.push(entry.map_err(|e| {
                let path = e.path().to_path_buf();
                PipelineError::Io { path, source: e.into() }
            })?);
        }
    }
    paths.sort();
    paths.dedup();
    let mut shards = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files = Vec::new();
            for e in fs::read_dir(&p).map_err(PipelineError::io(&p))? {
                let f = e.map_err(PipelineError::io(&p))?.path();
                if is_table_file(&f) {
                    files.push(f);
                }
            }
            files.sort();
            shards.push(ShardInput { path: p, files });
        } else if is_table_file(&p) {
            shards.push(ShardInput { path: p.clone(), files: vec![p] });
        }
    }
    Ok(shards)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableStatus {
    Accepted,
    Rejected,
    Duplicate,
    Error,
}

/// One line of `tables.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub shard: u32,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_key: Option<ContentKey>,
    pub status: TableStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_shape: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_columns: Vec<RemovedColumn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed_rows: Vec<RemovedRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_error: Option<String>,
}

/// One line of `tasks.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub source: String,
    #[serde(flatten)]
    pub task: PredictionTask,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShardSummary {
    pub shard: u32,
    pub path: String,
    pub tables: usize,
    pub errors: usize,
    pub duplicates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub tasks: usize,
    pub examples: usize,
    pub filter: FilterReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack: Option<PackStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub shards: usize,
    pub tables: usize,
    pub errors: usize,
    pub duplicates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rows_in: u64,
    pub rows_out: u64,
    pub tasks: usize,
    pub examples: usize,
    pub tokens: usize,
}

/// Run summary. Holds no timings or worker counts, so it is a pure function
/// of inputs, config and seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub l_max: usize,
    pub stages: Stage,
    pub tokenizer: String,
    pub totals: Totals,
    pub filter: FilterReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack: Option<PackStats>,
    pub stats: CorpusStats,
    pub shards: Vec<ShardSummary>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<CorpusManifest, PipelineError> {
        let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Table, column and row conservation across every shard.
    pub fn is_conserved(&self) -> bool {
        let t = &self.totals;
        self.filter.is_conserved()
            && t.tables == t.errors + t.duplicates + t.accepted + t.rejected
            && self.filter.input.tables as usize == t.accepted + t.rejected
            && self.filter.output.tables as usize == t.accepted
    }
}

/// Wall-clock seconds per stage, summed over chunks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub workers: usize,
    pub ingest: f64,
    pub filter: f64,
    pub tasks: f64,
    pub serialize: f64,
    pub pack: f64,
    pub write: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: CorpusManifest,
    pub timings: Timings,
}

enum Tok {
    Bundled(&'static WordTokenizer),
    Bpe(Box<BpeTokenizer>),
}

impl Tok {
    fn get(&self) -> &dyn Tokenizer {
        match self {
            Tok::Bundled(t) => *t,
            Tok::Bpe(t) => t.as_ref(),
        }
    }
}

struct Writers {
    tables: BufWriter<File>,
    tasks: Option<BufWriter<File>>,
    examples: Option<BufWriter<File>>,
    packed_jsonl: Option<BufWriter<File>>,
    packed_bin: Option<BufWriter<File>>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, PipelineError> {
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).map_err(PipelineError::io(&p))
}

fn json_line<T: Serialize>(w: &mut impl Write, v: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *w, v)?;
    w.write_all(b"\n")
}

/// Per-table result of the parallel stages.
struct TableWork {
    record: TableRecord,
    filter: Option<FilterReport>,
    summary: Option<TableSummary>,
    task: Option<PredictionTask>,
    examples: Vec<ExampleRecord>,
    tokenized: Vec<TokenizedRow>,
    elapsed: [Duration; 4],
}

fn display_path(p: &Path, base: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    bank: FilterBank<'static>,
    tok: &'a dyn Tokenizer,
}

impl Ctx<'_> {
    fn process(&self, shard: u32, source: String, t: TableArtifact) -> TableWork {
        let key = t.content_key();
        let input_shape = [t.n_rows(), t.n_cols()];
        let mut record = TableRecord {
            shard,
            source: source.clone(),
            content_key: Some(key),
            status: TableStatus::Rejected,
            rule: None,
            error: None,
            input_shape: Some(input_shape),
            output_shape: None,
            removed_columns: Vec::new(),
            removed_rows: Vec::new(),
            task_error: None,
        };
        let mut elapsed = [Duration::ZERO; 4];

        let t0 = Instant::now();
        let out = self.bank.run(t);
        elapsed[0] = t0.elapsed();
        record.rule = out.rejection();
        record.removed_columns = out.removed_columns;
        record.removed_rows = out.removed_rows;
        let accepted = out.table.filter_state() == FilterState::Accepted;
        let mut work = TableWork {
            record,
            filter: Some(out.report),
            summary: None,
            task: None,
            examples: Vec::new(),
            tokenized: Vec::new(),
            elapsed,
        };
        if !accepted {
            return work;
        }
        let table = out.table;
        work.record.status = TableStatus::Accepted;
        work.record.output_shape = Some([table.n_rows(), table.n_cols()]);
        work.summary = Some(table.summary());
        if self.cfg.stages < Stage::Tasks {
            return work;
        }

        let t1 = Instant::now();
        let task = match select_task(&table, table_seed(self.cfg.seed, &key)) {
            Ok(task) => task,
            Err(e) => {
                work.record.task_error = Some(e.to_string());
                work.elapsed[1] = t1.elapsed();
                return work;
            }
        };
        work.elapsed[1] = t1.elapsed();
        if self.cfg.stages >= Stage::Serialize {
            let t2 = Instant::now();
            let ids = table.row_ids();
            for r in 0..table.n_rows() {
                if task.label_of(&table, r).is_none() {
                    continue;
                }
                let ex = serialize_row(&task, &table, r, true).expect("row has a target");
                let mut rec = ExampleRecord::from(&ex);
                rec.row = ids[r];
                work.examples.push(rec);
            }
            work.elapsed[2] = t2.elapsed();
        }
        if self.cfg.stages >= Stage::Pack {
            let t3 = Instant::now();
            work.tokenized = work
                .examples
                .iter()
                .map(|e| TokenizedRow { table_key: key, row: e.row, tokens: self.tok.encode(&e.text) })
                .collect();
            work.elapsed[3] = t3.elapsed();
        }
        work.task = Some(task);
        work
    }
}

fn error_record(shard: u32, source: String, msg: String) -> TableWork {
    TableWork {
        record: TableRecord {
            shard,
            source,
            content_key: None,
            status: TableStatus::Error,
            rule: None,
            error: Some(msg),
            input_shape: None,
            output_shape: None,
            removed_columns: Vec::new(),
            removed_rows: Vec::new(),
            task_error: None,
        },
        filter: None,
        summary: None,
        task: None,
        examples: Vec::new(),
        tokenized: Vec::new(),
        elapsed: [Duration::ZERO; 4],
    }
}

/// Seed for packing one shard.
fn shard_seed(seed: u64, shard: u32) -> u64 {
    let mut z = seed ^ (u64::from(shard) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every configured stage and writes outputs into `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let started = Instant::now();
    let tok = match &cfg.tokenizer {
        Some(dir) => Tok::Bpe(Box::new(
            BpeTokenizer::from_dir(dir)
                .map_err(|e| PipelineError::Config(format!("tokenizer {}: {e}", dir.display())))?,
        )),
        None => Tok::Bundled(WordTokenizer::bundled()),
    };
    let shards = discover_shards(&cfg.inputs)?;
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir).map_err(PipelineError::io(out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let want_packed =
        |f: PackFormat| cfg.stages >= Stage::Pack && (cfg.pack_format == f || cfg.pack_format == PackFormat::Both);
    let mut w = Writers {
        tables: create(out_dir, TABLES_FILE)?,
        tasks: (cfg.stages >= Stage::Tasks).then(|| create(out_dir, TASKS_FILE)).transpose()?,
        examples: (cfg.stages >= Stage::Serialize).then(|| create(out_dir, EXAMPLES_FILE)).transpose()?,
        packed_jsonl: want_packed(PackFormat::Jsonl).then(|| create(out_dir, PACKED_JSONL_FILE)).transpose()?,
        packed_bin: want_packed(PackFormat::Binary).then(|| create(out_dir, PACKED_BIN_FILE)).transpose()?,
    };
    let ids: SpecialIds = tok.get().specials();
    if let Some(b) = &mut w.packed_bin {
        write_binary_header(b, cfg.l_max, ids.pad).map_err(PipelineError::io(&out_dir.join(PACKED_BIN_FILE)))?;
    }

    let ctx = Ctx { cfg, bank: FilterBank::new(cfg.filter.clone()), tok: tok.get() };
    let base = common_base(&shards);
    let mut seen: HashSet<ContentKey> = HashSet::new();
    let mut manifest = CorpusManifest {
        seed: cfg.seed,
        l_max: cfg.l_max,
        stages: cfg.stages,
        tokenizer: match &cfg.tokenizer {
            Some(p) => p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            None => "bundled".into(),
        },
        ..CorpusManifest::default()
    };
    let mut timings = Timings { workers: cfg.workers, ..Timings::default() };
    let mut summaries: Vec<TableSummary> = Vec::new();

    for (si, shard) in shards.iter().enumerate() {
        let shard_id = si as u32;
        let mut sum =
            ShardSummary { shard: shard_id, path: display_path(&shard.path, &base), ..ShardSummary::default() };
        let mut shard_rows: Vec<TokenizedRow> = Vec::new();
        for chunk in shard.files.chunks(cfg.chunk_size) {
            let t0 = Instant::now();
            let ingested: Vec<Result<TableArtifact, String>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|f| {
                        let prov = Provenance { source: display_path(f, &base), shard: shard_id };
                        Format::from_path(f).and_then(|fmt| ingest_table_with(f, fmt, prov)).map_err(|e| e.to_string())
                    })
                    .collect()
            });
            timings.ingest += t0.elapsed().as_secs_f64();

            // First occurrence wins, in (shard, file) order.
            let mut jobs: Vec<Result<TableArtifact, TableWork>> = Vec::with_capacity(chunk.len());
            for (f, r) in chunk.iter().zip(ingested) {
                let source = display_path(f, &base);
                jobs.push(match r {
                    Err(msg) => {
                        log::warn!("skipping {source}: {msg}");
                        Err(error_record(shard_id, source, msg))
                    }
                    Ok(t) if !seen.insert(t.content_key()) => {
                        let mut dup = error_record(shard_id, source, String::new());
                        dup.record.status = TableStatus::Duplicate;
                        dup.record.error = None;
                        dup.record.content_key = Some(t.content_key());
                        dup.record.input_shape = Some([t.n_rows(), t.n_cols()]);
                        Err(dup)
                    }
                    Ok(t) => Ok(t),
                });
            }
            let done: Vec<TableWork> = pool.install(|| {
                jobs.into_par_iter()
                    .map(|j| match j {
                        Ok(t) => ctx.process(shard_id, t.provenance().source.clone(), t),
                        Err(w) => w,
                    })
                    .collect()
            });

            let t1 = Instant::now();
            for mut work in done {
                sum.tables += 1;
                match work.record.status {
                    TableStatus::Error => sum.errors += 1,
                    TableStatus::Duplicate => sum.duplicates += 1,
                    TableStatus::Accepted => sum.accepted += 1,
                    TableStatus::Rejected => sum.rejected += 1,
                }
                if let Some(f) = &work.filter {
                    sum.filter.merge(f);
                }
                for (acc, d) in [&mut timings.filter, &mut timings.tasks, &mut timings.serialize, &mut timings.pack]
                    .into_iter()
                    .zip(work.elapsed)
                {
                    *acc += d.as_secs_f64();
                }
                summaries.extend(work.summary.take());
                let path = out_dir.join(TABLES_FILE);
                json_line(&mut w.tables, &work.record).map_err(PipelineError::io(&path))?;
                if let (Some(task), Some(tw)) = (work.task, &mut w.tasks) {
                    sum.tasks += 1;
                    let rec = TaskRecord { source: work.record.source.clone(), task };
                    json_line(tw, &rec).map_err(PipelineError::io(&out_dir.join(TASKS_FILE)))?;
                }
                if let Some(ew) = &mut w.examples {
                    sum.examples += work.examples.len();
                    for e in &work.examples {
                        json_line(ew, e).map_err(PipelineError::io(&out_dir.join(EXAMPLES_FILE)))?;
                    }
                }
                shard_rows.append(&mut work.tokenized);
            }
            timings.write += t1.elapsed().as_secs_f64();
        }

        if cfg.stages >= Stage::Pack {
            let t2 = Instant::now();
            let packing = pack_rows(&shard_rows, cfg.l_max, shard_seed(cfg.seed, shard_id), ids);
            if let Some(j) = &mut w.packed_jsonl {
                write_jsonl(&packing.sequences, j).map_err(PipelineError::io(&out_dir.join(PACKED_JSONL_FILE)))?;
            }
            if let Some(b) = &mut w.packed_bin {
                write_binary_records(&packing.sequences, b)
                    .map_err(PipelineError::io(&out_dir.join(PACKED_BIN_FILE)))?;
            }
            timings.pack += t2.elapsed().as_secs_f64();
            sum.pack = Some(packing.stats);
        }
        accumulate(&mut manifest, &sum);
        manifest.shards.push(sum);
    }

    for (name, wr) in [
        (TABLES_FILE, Some(&mut w.tables)),
        (TASKS_FILE, w.tasks.as_mut()),
        (EXAMPLES_FILE, w.examples.as_mut()),
        (PACKED_JSONL_FILE, w.packed_jsonl.as_mut()),
        (PACKED_BIN_FILE, w.packed_bin.as_mut()),
    ] {
        if let Some(wr) = wr {
            wr.flush().map_err(PipelineError::io(&out_dir.join(name)))?;
        }
    }

    manifest.totals.shards = manifest.shards.len();
    manifest.stats = CorpusStats::from_summaries(&summaries);
    let mpath = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&mpath, text).map_err(PipelineError::io(&mpath))?;
    timings.total = started.elapsed().as_secs_f64();
    let tpath = out_dir.join(TIMINGS_FILE);
    fs::write(&tpath, serde_json::to_string_pretty(&timings).expect("timings serialize"))
        .map_err(PipelineError::io(&tpath))?;
    Ok(RunOutput { manifest, timings })
}

fn accumulate(m: &mut CorpusManifest, s: &ShardSummary) {
    let t = &mut m.totals;
    t.tables += s.tables;
    t.errors += s.errors;
    t.duplicates += s.duplicates;
    t.accepted += s.accepted;
    t.rejected += s.rejected;
    t.rows_in += s.filter.input.rows;
    t.rows_out += s.filter.output.rows;
    t.tasks += s.tasks;
    t.examples += s.examples;
    m.filter.merge(&s.filter);
    if let Some(p) = &s.pack {
        t.tokens += p.tokens;
        m.pack.get_or_insert_with(PackStats::default).merge(p);
    }
}

/// Deepest directory containing every shard, used to shorten recorded paths.
fn common_base(shards: &[ShardInput]) -> PathBuf {
    let mut dirs = shards.iter().map(|s| s.path.parent().unwrap_or(Path::new("")).to_path_buf());
    let Some(mut base) = dirs.next() else {
        return PathBuf::new();
    };
    for d in dirs {
        while !d.starts_with(&base) {
            if !base.pop() {
                return PathBuf::new();
            }
        }
    }
    base
}

/// Everything recorded about one table, found by full or prefix key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInspection {
    pub table: TableRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskRecord>,
    pub examples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_example: Option<ExampleRecord>,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, mut f: impl FnMut(T) -> bool) -> Result<(), PipelineError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(PipelineError::Io { path: path.to_path_buf(), source: e }),
    };
    for line in BufReader::new(file).lines() {
        let line = line.map_err(PipelineError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: T =
            serde_json::from_str(&line).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if !f(v) {
            break;
        }
    }
    Ok(())
}

/// Looks up a table in a finished run by content key (hex, prefix allowed).
/// Returns every table whose key starts with `key`.
pub fn inspect(out_dir: &Path, key: &str) -> Result<Vec<TableInspection>, PipelineError> {
    let key = key.to_ascii_lowercase();
    let mut found: Vec<TableInspection> = Vec::new();
    read_lines(&out_dir.join(TABLES_FILE), |r: TableRecord| {
        if r.content_key.is_some_and(|k| k.to_hex().starts_with(&key)) {
            found.push(TableInspection { table: r, task: None, examples: 0, first_example: None });
        }
        true
    })?;
    if found.is_empty() {
        return Ok(found);
    }
    let find = |k: &ContentKey| {
        found.iter().position(|f| f.table.content_key.as_ref() == Some(k) && f.table.status == TableStatus::Accepted)
    };
    let mut tasks: Vec<(usize, TaskRecord)> = Vec::new();
    read_lines(&out_dir.join(TASKS_FILE), |t: TaskRecord| {
        if let Some(i) = find(&t.task.table_key) {
            tasks.push((i, t));
        }
        true
    })?;
    let mut examples: Vec<(usize, ExampleRecord)> = Vec::new();
    read_lines(&out_dir.join(EXAMPLES_FILE), |e: ExampleRecord| {
        if let Some(i) = find(&e.table_key) {
            examples.push((i, e));
        }
        true
    })?;
    for (i, t) in tasks {
        found[i].task = Some(t);
    }
    for (i, e) in examples {
        found[i].examples += 1;
        found[i].first_example.get_or_insert(e);
    }
    Ok(found)
}

#[cfg(test)]
mod tests;
