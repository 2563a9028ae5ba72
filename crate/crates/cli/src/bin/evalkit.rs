//! Few-shot evaluation: build prompts for a suite, score externally produced
//! completions, and compare accuracy curves.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use trawl_core::eval::{
    evaluate_suite, load_suite, relative_sample_efficiency, suite_prompts, BenchmarkResults, CompletionSet, EvalError,
    EvalSettings, EvalTask, DEFAULT_SHOTS, DEFAULT_TRIALS,
};
use trawl_core::tokenpack::{BpeTokenizer, Tokenizer, WordTokenizer, DEFAULT_L_MAX};

#[derive(Parser)]
#[command(name = "evalkit", version, about = "Few-shot exact-match evaluation of table tasks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite directories holding `<task>.csv` plus `<task>.json|yaml`.
    #[arg(long, required = true, num_args = 1..)]
    suite: Vec<PathBuf>,
    /// Shot counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SHOTS.to_vec())]
    shots: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Context window in tokens.
    #[arg(long, default_value_t = DEFAULT_L_MAX)]
    l_max: usize,
    /// Directory with vocab.json and merges.txt; bundled word tokenizer otherwise.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
}

impl SuiteArgs {
    fn load(&self) -> Result<(Vec<EvalTask>, EvalSettings, Box<dyn Tokenizer>)> {
        if self.trials == 0 {
            bail!("--trials must be at least 1");
        }
        let mut tasks = Vec::new();
        for dir in &self.suite {
            tasks.extend(load_suite(dir, self.seed)?);
        }
        let settings =
            EvalSettings { shots: self.shots.clone(), n_trials: self.trials, seed: self.seed, l_max: self.l_max };
        let tok: Box<dyn Tokenizer> = match &self.tokenizer {
            Some(dir) => Box::new(BpeTokenizer::from_dir(dir).with_context(|| format!("tokenizer {}", dir.display()))?),
            None => Box::new(WordTokenizer::bundled().clone()),
        };
        Ok((tasks, settings, tok))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write k-shot prompts and gold completions as JSONL.
    Prompts {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a completions file and write one results JSON per benchmark.
    Score {
        #[command(flatten)]
        suite: SuiteArgs,
        /// JSONL lines {task, k, trial, row, text}.
        #[arg(long)]
        completions: PathBuf,
        /// Directory for `<benchmark>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print accuracy curves; with --alpha and two benchmarks, the relative
    /// sample efficiency of the second over the first.
    Curves {
        /// Results files written by `score`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Prompts { suite, out } => {
            let (tasks, settings, tok) = suite.load()?;
            let prompts = suite_prompts(&tasks, &settings, tok.as_ref())?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => Box::new(std::io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            for p in &prompts {
                serde_json::to_writer(&mut w, p)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            eprintln!("{} prompts for {} tasks", prompts.len(), tasks.len());
        }
        Cmd::Score { suite, completions, out } => {
            let (tasks, settings, tok) = suite.load()?;
            let set = CompletionSet::load(&completions)?;
            let results = evaluate_suite(&tasks, &settings, tok.as_ref(), &set)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for b in &results {
                let path = out.join(format!("{}.json", b.benchmark));
                fs::write(&path, serde_json::to_vec_pretty(b)?)
                    .with_context(|| format!("writing {}", path.display()))?;
                print_curve(b);
            }
        }
        Cmd::Curves { results, alpha } => {
            let mut loaded = Vec::new();
            for p in &results {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let b: BenchmarkResults =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                print_curve(&b);
                loaded.push(b);
            }
            if let Some(alpha) = alpha {
                let [f, g] = loaded.as_slice() else {
                    bail!("--alpha needs exactly two results files");
                };
                let (Some(cf), Some(cg)) = (f.curve(), g.curve()) else {
                    bail!("a results file has no task feasible at every shot count");
                };
                let r = relative_sample_efficiency(&cf, &cg, alpha)?;
                println!("relative sample efficiency at {alpha}: {r}");
            }
        }
    }
    Ok(())
}

fn print_curve(b: &BenchmarkResults) {
    println!("{} ({} tasks)", b.benchmark, b.tasks.len());
    match b.curve() {
        Some(c) => {
            for (k, a) in c.shots.iter().zip(&c.accuracy) {
                println!("  k={k:<3} accuracy={a:.4}");
            }
        }
        None => println!("  no task is feasible at every shot count"),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(EvalError::Io { .. }) = cause.downcast_ref() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
