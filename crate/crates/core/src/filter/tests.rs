use proptest::prelude::*;

use super::english::{EN_STOPWORDS, FOREIGN_STOPWORDS};
use super::*;
use crate::table::{Provenance, TableArtifact};

const CITIES: &[&str] = &["north", "south", "river", "valley", "forest", "harbor", "garden", "market"];

fn table(names: &[&str], rows: Vec<Vec<String>>) -> TableArtifact {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    TableArtifact::from_text_rows(&names, &rows, Provenance::default()).unwrap()
}

fn clean_rows(n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            vec![
                CITIES[i % CITIES.len()].to_string(),
                (20 + (i * 7) % 50).to_string(),
                format!("{:.2}", 1.5 + (i as f64) * 0.37),
                ["red", "green", "blue"][i % 3].to_string(),
            ]
        })
        .collect()
}

fn clean(n: usize) -> TableArtifact {
    table(&["city", "age", "score", "color"], clean_rows(n))
}

#[test]
fn clean_table_is_accepted_intact() {
    let out = filter_table(clean(100), &FilterConfig::default());
    assert!(out.accepted(), "{:?}", out.rejection());
    assert_eq!(out.table.n_rows(), 100);
    assert_eq!(out.table.n_cols(), 4);
    assert!(out.report.is_conserved());
}

#[test]
fn too_few_rows() {
    assert_eq!(apply_table_filters(&clean(10), &FilterConfig::default()), Verdict::Reject(RuleId::RowCount));
    let cfg = FilterConfig { max_rows: 50, ..Default::default() };
    assert_eq!(apply_table_filters(&clean(100), &cfg), Verdict::Reject(RuleId::RowCount));
}

#[test]
fn homogeneous_schema() {
    let rows = (0..80).map(|i| (0..5).map(|c| format!("{}.5", i * 5 + c)).collect()).collect();
    let t = table(&["alpha", "beta", "gamma", "delta", "omega"], rows);
    assert_eq!(apply_table_filters(&t, &FilterConfig::default()), Verdict::Reject(RuleId::SchemaHeterogeneity));
}

#[test]
fn unnamed_fraction() {
    let rows = (0..80)
        .map(|i| vec![CITIES[i % 8].to_string(), i.to_string(), (i * 2).to_string(), (i * 3).to_string()])
        .collect();
    let t = table(&["city", "Unnamed: 1", "Unnamed: 2", "Unnamed: 3"], rows);
    assert_eq!(apply_table_filters(&t, &FilterConfig::default()), Verdict::Reject(RuleId::UnnamedColumns));
}

#[test]
fn parse_error_variants() {
    let cfg = FilterConfig::default();
    let dup = table(&["city", "city", "score", "color"], clean_rows(80));
    assert_eq!(apply_table_filters(&dup, &cfg), Verdict::Reject(RuleId::ParseError));
    let mut rows = clean_rows(80);
    rows[0][0] = "color".into();
    let promoted = table(&["city", "age", "score", "color"], rows);
    assert_eq!(apply_table_filters(&promoted, &cfg), Verdict::Reject(RuleId::ParseError));
}

#[test]
fn non_english_table() {
    let rows = (0..80).map(|i| vec![["und nicht", "aber der", "das ist"][i % 3].to_string(), i.to_string()]).collect();
    let t = table(&["der", "und"], rows);
    assert_eq!(apply_table_filters(&t, &FilterConfig::default()), Verdict::Reject(RuleId::TableEnglish));
}

#[test]
fn table_pii_and_code() {
    let cfg = FilterConfig::default();
    let mut rows = clean_rows(100);
    for r in rows.iter_mut().take(5) {
        r[0] = "mail jo@example.com".into();
    }
    assert_eq!(
        apply_table_filters(&table(&["city", "age", "score", "color"], rows), &cfg),
        Verdict::Reject(RuleId::TablePii)
    );
    let mut rows = clean_rows(100);
    rows[7][0] = "int main() { return 0; }".into();
    assert_eq!(
        apply_table_filters(&table(&["city", "age", "score", "color"], rows), &cfg),
        Verdict::Reject(RuleId::TableCode)
    );
}

#[test]
fn table_missing() {
    let mut rows = clean_rows(100);
    for r in rows.iter_mut().take(45) {
        r[1] = String::new();
    }
    assert_eq!(
        apply_table_filters(&table(&["city", "age", "score", "color"], rows), &FilterConfig::default()),
        Verdict::Reject(RuleId::TableMissing)
    );
}

#[test]
fn first_failing_rule_wins() {
    // short AND homogeneous: heterogeneity is evaluated first
    let rows = (0..5).map(|i| vec![format!("{i}.5"), format!("{i}.25")]).collect();
    let t = table(&["alpha", "beta"], rows);
    assert_eq!(apply_table_filters(&t, &FilterConfig::default()), Verdict::Reject(RuleId::SchemaHeterogeneity));
}

#[test]
fn column_rules() {
    let long = "x".repeat(300);
    let mut rows = clean_rows(80);
    for (i, r) in rows.iter_mut().enumerate() {
        r.push(format!("{}", i % 5));
        r.push(format!("value {}", i % 4));
        r.push("yes".into());
        r.push(if i % 4 == 0 { "ok".into() } else { String::new() });
        r.push(["über straße", "größe maß", "schön grün"][i % 3].into());
    }
    let t = table(&["city", "age", "score", "color", "1984", &long, "flag", "sparse", "notes"], rows);
    let (t, report) = apply_column_filters(t, &FilterConfig::default());
    assert_eq!(t.column_names().collect::<Vec<_>>(), ["city", "age", "score", "color"]);
    assert_eq!(report.rules[&RuleId::NumericHeader].columns, 1);
    assert_eq!(report.rules[&RuleId::LongHeader].columns, 1);
    assert_eq!(report.rules[&RuleId::ConstantColumn].columns, 1);
    assert_eq!(report.rules[&RuleId::ColumnMissing].columns, 1);
    assert_eq!(report.rules[&RuleId::ColumnEnglish].columns, 1);
    assert_eq!(t.filter_state(), FilterState::Raw);
}

#[test]
fn column_count_recheck() {
    let rows = (0..80).map(|i| vec![CITIES[i % 8].to_string(), "same".into()]).collect();
    let (t, _) = apply_column_filters(table(&["city", "kind"], rows), &FilterConfig::default());
    assert_eq!(t.filter_state(), FilterState::Rejected(RuleId::ColumnCount));
}

#[test]
fn row_rules() {
    let mut rows = clean_rows(80);
    rows[3] = rows[2].clone();
    rows[10][0] = "⌊ subentry".into();
    rows[20][0] = "reach me at a@b.com".into();
    rows[30] = vec![String::new(), String::new(), String::new(), "red".into()];
    rows[40][0] = "print(x)".into();
    let t = table(&["city", "age", "score", "color"], rows);
    let bank = FilterBank::new(FilterConfig::default());
    let mut t2 = t.clone();
    let mut report = FilterReport::default();
    let mut removed = Vec::new();
    assert_eq!(bank.row_filters(&mut t2, &mut report, &mut removed), Verdict::Accept);
    let got: Vec<(usize, RuleId)> = removed.iter().map(|r| (r.row, r.rule)).collect();
    assert_eq!(
        got,
        vec![
            (3, RuleId::DuplicateRow),
            (10, RuleId::FloorSymbol),
            (20, RuleId::RowPii),
            (30, RuleId::RowMissing),
            (40, RuleId::RowCode),
        ]
    );
    assert_eq!(t2.n_rows(), 75);
}

#[test]
fn row_count_recheck_after_rows() {
    let mut rows = clean_rows(64);
    rows[1] = rows[0].clone();
    let out = filter_table(table(&["city", "age", "score", "color"], rows), &FilterConfig::default());
    assert_eq!(out.rejection(), Some(RuleId::RowCount));
    assert!(out.report.is_conserved());
    assert_eq!(out.report.rules[&RuleId::RowCount].rows, 63);
}

#[test]
fn report_json_is_deterministic() {
    let a = serde_json::to_string(&filter_table(clean(90), &FilterConfig::default()).report).unwrap();
    let b = serde_json::to_string(&filter_table(clean(90), &FilterConfig::default()).report).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("\"row_pii\""));
}

#[test]
fn config_validation_and_loading() {
    assert!(FilterConfig::default().validate().is_ok());
    let bad = FilterConfig { english_threshold: 1.5, ..Default::default() };
    assert!(matches!(bad.validate(), Err(ConfigError::FractionOutOfRange { key: "english_threshold", .. })));
    let inverted = FilterConfig { min_rows: 10, max_rows: 5, ..Default::default() };
    assert!(matches!(inverted.validate(), Err(ConfigError::InvertedBounds { .. })));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.toml");
    std::fs::write(&p, "min_rows = 10\ncode_threshold = 0.7\n").unwrap();
    let cfg = FilterConfig::load(&p).unwrap();
    assert_eq!((cfg.min_rows, cfg.code_threshold, cfg.max_rows), (10, 0.7, 1000));
    std::fs::write(&p, "min_rowz = 10\n").unwrap();
    assert!(matches!(FilterConfig::load(&p), Err(ConfigError::Parse(_))));
}

/// Stopword-count oracle over the bundled lists: a text is English when it
/// has more English than foreign stopwords.
fn stopword_oracle(text: &str) -> bool {
    let en: std::collections::HashSet<&str> = EN_STOPWORDS.split_whitespace().collect();
    let fr: std::collections::HashSet<&str> = FOREIGN_STOPWORDS.split_whitespace().collect();
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let e = words.iter().filter(|w| en.contains(w.as_str())).count();
    let f = words.iter().filter(|w| fr.contains(w.as_str()) && !en.contains(w.as_str())).count();
    e > f
}

#[test]
fn english_score_matches_stopword_oracle() {
    let threshold = FilterConfig::default().english_threshold;
    for text in [
        "the cat sat on the mat and the dog ran",
        "der die das und nicht aber",
        "it is what it is and we are here",
        "le chat est sur la table avec les enfants",
        "el perro y los gatos con una casa",
    ] {
        assert_eq!(english_score(text) >= threshold, stopword_oracle(text), "{text}: {}", english_score(text));
    }
}

#[test]
fn code_score_examples() {
    let threshold = FilterConfig::default().code_threshold;
    assert!(code_score("def f(x): return x+1") >= threshold);
    assert!(code_score("the weather is sunny") < threshold);
    assert_eq!(code_score(""), 0.0);
}

fn arb_table() -> impl Strategy<Value = TableArtifact> {
    let cell = prop_oneof![
        4 => prop::sample::select(CITIES).prop_map(str::to_string),
        3 => (0i64..40).prop_map(|i| i.to_string()),
        1 => Just(String::new()),
        1 => Just("call 555-867-5309".to_string()),
        1 => Just("x@y.org".to_string()),
        1 => Just("⌊ a".to_string()),
        1 => Just("foo(bar);".to_string()),
    ];
    (1usize..5, 0usize..90).prop_flat_map(move |(cols, rows)| {
        prop::collection::vec(prop::collection::vec(cell.clone(), cols), rows).prop_map(move |rows| {
            let names: Vec<String> =
                ["city", "age", "score", "color", "size"][..cols].iter().map(|s| s.to_string()).collect();
            TableArtifact::from_text_rows(&names, &rows, Provenance::default()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_and_pii_totality(t in arb_table()) {
        let cfg = FilterConfig { min_rows: 1, table_pii_cell_fraction: 1.0, code_threshold: 1.0,
            table_missing_fraction: 1.0, ..Default::default() };
        let out = filter_table(t, &cfg);
        prop_assert!(out.report.is_conserved());
        if out.accepted() {
            for col in out.table.columns() {
                for cell in col {
                    prop_assert!(!detect_pii(&cell.render()));
                    prop_assert!(!cell.render().contains(FLOOR_SYMBOL));
                }
            }
        }
    }

    #[test]
    fn tightening_table_thresholds_is_monotone(
        tables in prop::collection::vec(arb_table(), 1..6),
        knob in 0usize..5,
    ) {
        let loose = FilterConfig { min_rows: 1, table_pii_cell_fraction: 0.3, code_threshold: 0.95,
            table_missing_fraction: 0.5, unnamed_col_fraction: 0.9, ..Default::default() };
        let mut tight = loose.clone();
        match knob {
            0 => tight.min_rows = 40,
            1 => tight.table_pii_cell_fraction = 0.05,
            2 => tight.code_threshold = 0.5,
            3 => tight.table_missing_fraction = 0.1,
            _ => tight.max_rows = 50,
        }
        let count = |cfg: &FilterConfig| tables.iter().filter(|t| filter_table((*t).clone(), cfg).accepted()).count();
        prop_assert!(count(&tight) <= count(&loose));
    }
}
