use std::path::Path;

use super::*;
use crate::serialize::{extract_answer, END_COMPLETION};
use crate::synth::{planted_corpus, short_row_corpus, SynthTable};
use crate::tokenpack::read_binary;

fn config(input: &Path, out: &Path, workers: usize) -> PipelineConfig {
    PipelineConfig {
        inputs: vec![input.to_string_lossy().into_owned()],
        output_dir: out.to_path_buf(),
        workers,
        chunk_size: 16,
        pack_format: PackFormat::Both,
        ..PipelineConfig::default()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_default()
}

fn records(dir: &Path) -> Vec<TableRecord> {
    String::from_utf8(read(dir, TABLES_FILE)).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn planted_corpus_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(11);
    let shard = tmp.path().join("shard0");
    corpus.write_dir(&shard).unwrap();
    let run = run_pipeline(&config(&shard, &tmp.path().join("out"), 4)).unwrap();
    let m = &run.manifest;
    assert!(m.is_conserved());
    assert_eq!(m.totals.tables, corpus.tables.len());
    let recs = records(&tmp.path().join("out"));
    assert_eq!(recs.len(), corpus.tables.len());
    for r in &recs {
        let name = r.source.trim_start_matches("shard0/").trim_end_matches(".csv");
        let plant = corpus.plant_for(name);
        match plant.map(|p| p.rule.level()) {
            Some(crate::filter::Level::Table) => assert_eq!(r.rule, plant.map(|p| p.rule), "{name}"),
            _ => assert_eq!(r.status, TableStatus::Accepted, "{name}"),
        }
    }
    // every accepted table contributes to the stats histograms
    assert_eq!(m.stats.rows_histogram.total(), m.totals.accepted);
    assert_eq!(m.stats.columns_histogram.total(), m.totals.accepted);
    assert!(m.stats.max_missing_fraction <= 0.10);
    let pack = m.pack.as_ref().unwrap();
    assert_eq!(pack.rows, m.totals.examples);

    let examples = String::from_utf8(read(&tmp.path().join("out"), EXAMPLES_FILE)).unwrap();
    for line in examples.lines() {
        let e: ExampleRecord = serde_json::from_str(line).unwrap();
        let gold = format!("{}{END_COMPLETION}", e.target.as_deref().unwrap());
        assert!(e.text.ends_with(&gold));
        assert_eq!(extract_answer(&e.text), e.target.as_deref());
    }
    let (_, seqs) = read_binary(read(&tmp.path().join("out"), PACKED_BIN_FILE).as_slice()).unwrap();
    assert_eq!(seqs.len(), pack.sequences);
}

#[test]
fn identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(5);
    corpus.write_dir(&tmp.path().join("in/a")).unwrap();
    for t in short_row_corpus(2, 3) {
        fs::write(tmp.path().join(format!("in/{}.csv", t.name)), t.to_csv()).unwrap();
    }
    let pattern = tmp.path().join("in/*");
    let mut outputs = Vec::new();
    for (i, workers) in [1, 4, 1, 4].into_iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let mut cfg = config(&pattern, &out, workers);
        cfg.chunk_size = 7;
        run_pipeline(&cfg).unwrap();
        let files: Vec<Vec<u8>> =
            [TABLES_FILE, TASKS_FILE, EXAMPLES_FILE, PACKED_JSONL_FILE, PACKED_BIN_FILE, MANIFEST_FILE]
                .iter()
                .map(|f| read(&out, f))
                .collect();
        assert!(files.iter().all(|f| !f.is_empty()));
        outputs.push(files);
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn empty_input() {
    let tmp = tempfile::tempdir().unwrap();
    let run = run_pipeline(&config(&tmp.path().join("nothing*"), &tmp.path().join("out"), 2)).unwrap();
    assert_eq!(run.manifest.totals, Totals::default());
    assert!(run.manifest.shards.is_empty());
    assert!(read(&tmp.path().join("out"), EXAMPLES_FILE).is_empty());
    assert!(read(&tmp.path().join("out"), TABLES_FILE).is_empty());
}

#[test]
fn duplicates_and_errors_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(3);
    let clean: Vec<&SynthTable> =
        corpus.tables.iter().filter(|t| corpus.plant_for(&t.name).is_none()).take(4).collect();
    let a = tmp.path().join("in/a");
    let b = tmp.path().join("in/b");
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    for t in &clean {
        fs::write(a.join(format!("{}.csv", t.name)), t.to_csv()).unwrap();
    }
    // same table twice in a later shard, plus a ragged file
    fs::write(b.join("copy.csv"), clean[0].to_csv()).unwrap();
    fs::write(b.join("bad.csv"), "x,y\n1,2,3\n").unwrap();
    let out = tmp.path().join("out");
    let m = run_pipeline(&config(&tmp.path().join("in/*"), &out, 3)).unwrap().manifest;
    assert_eq!(m.totals.tables, 6);
    assert_eq!(m.totals.duplicates, 1);
    assert_eq!(m.totals.errors, 1);
    assert_eq!(m.totals.accepted, 4);
    assert!(m.is_conserved());
    let recs = records(&out);
    let dup = recs.iter().find(|r| r.status == TableStatus::Duplicate).unwrap();
    assert_eq!(dup.source, "b/copy.csv");
    assert!(recs.iter().any(|r| r.status == TableStatus::Error && r.source == "b/bad.csv"));

    let key = recs[0].content_key.unwrap().to_hex();
    let found = inspect(&out, &key[..12]).unwrap();
    assert_eq!(found.len(), 2);
    assert!(found[0].task.is_some());
    assert!(found[0].examples > 0);
    assert_eq!(found[1].table.status, TableStatus::Duplicate);
    assert!(inspect(&out, "zz").unwrap().is_empty());
}

#[test]
fn stage_prefixes() {
    let tmp = tempfile::tempdir().unwrap();
    planted_corpus(1).write_dir(&tmp.path().join("in")).unwrap();
    let out = tmp.path().join("out");
    let mut cfg = config(&tmp.path().join("in"), &out, 2);
    cfg.stages = Stage::Tasks;
    let m = run_pipeline(&cfg).unwrap().manifest;
    assert!(m.totals.tasks > 0);
    assert_eq!(m.totals.examples, 0);
    assert!(m.pack.is_none());
    assert!(!out.join(EXAMPLES_FILE).exists());
    assert!(!out.join(PACKED_JSONL_FILE).exists());
}

#[test]
fn identical_tables_give_single_spike() {
    let mut rows = String::from("id,colour,size,weight,price\n");
    for i in 0..64 {
        rows.push_str(&format!("{i},{},{},{}.5,{}.25\n", ["red", "blue"][i % 2], i % 3, i, i * 2));
    }
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("in")).unwrap();
    for i in 0..5 {
        fs::write(tmp.path().join(format!("in/{i}.csv")), &rows).unwrap();
    }
    let m = run_pipeline(&config(&tmp.path().join("in"), &tmp.path().join("out"), 1)).unwrap().manifest;
    assert_eq!(m.totals.accepted, 1);
    assert_eq!(m.totals.duplicates, 4);
    let nonzero: Vec<&HistogramBucket> = m.stats.rows_histogram.buckets.iter().filter(|b| b.count > 0).collect();
    assert_eq!(nonzero.len(), 1);
    assert_eq!(nonzero[0].label, "33-64");
    let (text, json) = corpus_stats(&m);
    assert!(text.contains("accepted: 1"));
    assert_eq!(json["stats"]["tables"], 1);
}

#[test]
fn config_loading() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("cfg.toml");
    fs::write(
        &p,
        "inputs = [\"data/*\"]\noutput_dir = \"o\"\nseed = 9\nstages = \"serialize\"\n[filter]\nmin_rows = 10\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&p).unwrap();
    assert_eq!(cfg.output_dir, tmp.path().join("o"));
    assert_eq!(cfg.inputs, [tmp.path().join("data/*").to_string_lossy()]);
    assert_eq!(cfg.filter.min_rows, 10);
    assert_eq!(cfg.stages, Stage::Serialize);

    fs::write(&p, "workers = 0\n").unwrap();
    assert_eq!(PipelineConfig::load(&p).unwrap_err().exit_code(), 2);
    fs::write(&p, "bogus = 1\n").unwrap();
    assert_eq!(PipelineConfig::load(&p).unwrap_err().exit_code(), 2);
    fs::write(&p, "[filter]\nmin_rows = 10\nmax_rows = 5\n").unwrap();
    assert_eq!(PipelineConfig::load(&p).unwrap_err().exit_code(), 2);
    assert_eq!(PipelineConfig::load(&tmp.path().join("missing.toml")).unwrap_err().exit_code(), 3);
}
