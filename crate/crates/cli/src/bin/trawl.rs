//! Corpus compiler: run the pipeline, read its statistics, inspect tables,
//! and check evaluation suites for schema overlap with a corpus.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trawl_core::contam::{build_index_par, report, EvalSchema, SchemaIndex};
use trawl_core::eval::load_suite;
use trawl_core::pipeline::{
    corpus_stats, discover_shards, inspect, run_pipeline, CorpusManifest, PipelineConfig, PipelineError, MANIFEST_FILE,
};
use trawl_core::synth::{planted_corpus, short_row_corpus};
use trawl_core::table::{ingest_table_with, Format, Provenance};

#[derive(Parser)]
#[command(name = "trawl", version, about = "Filter, serialize and pack table corpora")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Where to find a finished run.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct RunDir {
    /// Pipeline config; its output_dir is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory of a run.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunDir {
    fn resolve(&self) -> Result<PathBuf, PipelineError> {
        match (&self.config, &self.out) {
            (Some(c), _) => Ok(PipelineConfig::load(c)?.output_dir),
            (None, Some(o)) => Ok(o.clone()),
            (None, None) => unreachable!("clap enforces one of --config/--out"),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the pipeline described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; overrides the config and TRAWL_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print corpus statistics of a finished run.
    Stats {
        #[command(flatten)]
        run: RunDir,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Show everything recorded about a table (hex key or prefix).
    Inspect {
        key: String,
        #[command(flatten)]
        run: RunDir,
    },
    /// Write the planted-violation corpus (and optionally a short-row corpus).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write this many short-row tables under `<out>/short`.
        #[arg(long, default_value_t = 0)]
        short_tables: usize,
    },
    /// Build a column-name index over corpus tables.
    Index {
        /// Input globs, as in the pipeline config.
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check evaluation suites against a column-name index.
    Contam {
        #[arg(long)]
        index: PathBuf,
        /// Suite directories (one benchmark each unless metadata says otherwise).
        #[arg(long, required = true, num_args = 1..)]
        suite: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, workers } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let out = run_pipeline(&cfg)?;
            let t = &out.manifest.totals;
            log::info!("finished in {:.2}s", out.timings.total);
            println!(
                "{} tables: {} accepted, {} rejected, {} duplicates, {} errors; {} examples, {} tokens -> {}",
                t.tables,
                t.accepted,
                t.rejected,
                t.duplicates,
                t.errors,
                t.examples,
                t.tokens,
                cfg.output_dir.display()
            );
        }
        Cmd::Stats { run, json } => {
            let dir = run.resolve()?;
            let m = CorpusManifest::load(&dir.join(MANIFEST_FILE))?;
            let (text, value) = corpus_stats(&m);
            if json {
                print_json(&value)?;
            } else {
                print!("{text}");
            }
        }
        Cmd::Inspect { key, run } => {
            let dir = run.resolve()?;
            let found = inspect(&dir, &key)?;
            if found.is_empty() {
                anyhow::bail!(PipelineError::Config(format!("no table with key {key} in {}", dir.display())));
            }
            print_json(&found)?;
        }
        Cmd::Synth { out, seed, short_tables } => {
            let corpus = planted_corpus(seed);
            corpus.write_dir(&out).with_context(|| format!("writing {}", out.display()))?;
            if short_tables > 0 {
                let dir = out.join("short");
                std::fs::create_dir_all(&dir)?;
                for t in short_row_corpus(seed, short_tables) {
                    std::fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
                }
            }
            println!("{} tables, {} plants -> {}", corpus.tables.len(), corpus.plants.len(), out.display());
        }
        Cmd::Index { inputs, out } => {
            let files: Vec<PathBuf> = discover_shards(&inputs)?.into_iter().flat_map(|s| s.files).collect();
            let mut tables = Vec::with_capacity(files.len());
            for f in &files {
                let prov = Provenance { source: f.display().to_string(), shard: 0 };
                match Format::from_path(f).and_then(|fmt| ingest_table_with(f, fmt, prov)) {
                    Ok(t) => tables.push(t),
                    Err(e) => log::warn!("skipping {}: {e}", f.display()),
                }
            }
            let idx = build_index_par(&tables);
            idx.save(&out)?;
            println!("indexed {} tables, {} column names -> {}", idx.n_tables(), idx.n_names(), out.display());
        }
        Cmd::Contam { index, suite, json } => {
            let idx = SchemaIndex::load(&index)?;
            let mut schemas = Vec::new();
            for dir in &suite {
                for t in load_suite(dir, 0)? {
                    schemas.push(EvalSchema::from_table(&t.benchmark, &t.name, &t.table));
                }
            }
            let r = report(&schemas, &idx);
            if json {
                print_json(&r)?;
            } else {
                print!("{}", r.to_text());
            }
        }
    }
    Ok(())
}

/// 2 for configuration problems, 3 for IO failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return p.exit_code() as u8;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(trawl_core::contam::IndexError::Io { .. }) = cause.downcast_ref() {
            return 3;
        }
        if let Some(trawl_core::eval::EvalError::Io { .. }) = cause.downcast_ref() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
