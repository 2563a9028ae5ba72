//! Runs the pipeline on mixed csv/parquet shards and checks the packed output
//! against the serialized examples it came from.

use std::collections::HashMap;
use std::fs;

use trawl_core::pipeline::{run_pipeline, PackFormat, PipelineConfig, Stage, EXAMPLES_FILE, PACKED_BIN_FILE};
use trawl_core::serialize::{ExampleRecord, END_COMPLETION};
use trawl_core::synth::planted_corpus;
use trawl_core::table::{parse_csv, write_parquet, ContentKey, Provenance};
use trawl_core::tokenpack::{loss_spans, rctm_mask, read_binary, MaskMode, Tokenizer, WordTokenizer};

#[test]
fn packed_spans_decode_to_gold_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(21);
    let csv_dir = tmp.path().join("in/csv");
    let pq_dir = tmp.path().join("in/parquet");
    fs::create_dir_all(&csv_dir).unwrap();
    fs::create_dir_all(&pq_dir).unwrap();
    for (i, t) in corpus.tables.iter().filter(|t| corpus.plant_for(&t.name).is_none()).take(40).enumerate() {
        if i % 2 == 0 {
            fs::write(csv_dir.join(format!("{}.csv", t.name)), t.to_csv()).unwrap();
        } else {
            let a = parse_csv(t.to_csv().as_bytes(), Provenance::default()).unwrap();
            write_parquet(&a, &pq_dir.join(format!("{}.parquet", t.name))).unwrap();
        }
    }
    let out = tmp.path().join("out");
    let cfg = PipelineConfig {
        inputs: vec![tmp.path().join("in/*").to_string_lossy().into_owned()],
        output_dir: out.clone(),
        workers: 3,
        l_max: 2048,
        stages: Stage::Pack,
        pack_format: PackFormat::Binary,
        ..PipelineConfig::default()
    };
    let m = run_pipeline(&cfg).unwrap().manifest;
    assert_eq!(m.totals.tables, 40);
    assert_eq!(m.totals.accepted, 40);
    assert_eq!(m.shards.len(), 2);

    let examples: HashMap<(ContentKey, usize), ExampleRecord> = fs::read_to_string(out.join(EXAMPLES_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<ExampleRecord>(l).unwrap())
        .map(|e| ((e.table_key, e.row), e))
        .collect();
    let tok = WordTokenizer::bundled();
    let (l_max, seqs) = read_binary(fs::read(out.join(PACKED_BIN_FILE)).unwrap().as_slice()).unwrap();
    assert_eq!(l_max, 2048);
    let mut rows = 0;
    for s in &seqs {
        assert_eq!(loss_spans(s, tok.specials()).unwrap(), s.loss_spans);
        let mask = rctm_mask(s, MaskMode::RowCausal);
        for (r, span) in s.rows.iter().zip(&s.loss_spans) {
            let seg = s.segments.iter().find(|g| g.start <= r.start && r.end <= g.end).unwrap();
            let ex = &examples[&(seg.table_key, r.row)];
            assert_eq!(tok.decode(&s.token_ids[r.start..r.end]).unwrap(), ex.text);
            let answer = tok.decode(&s.token_ids[span.clone()]).unwrap();
            assert_eq!(answer, format!("{}{END_COMPLETION}", ex.target.as_deref().unwrap()));
            assert!(mask.attend(r.end - 1, seg.start));
            assert!(seg.start == 0 || !mask.attend(seg.start, seg.start - 1));
            rows += 1;
        }
    }
    assert_eq!(rows, examples.len());
}
