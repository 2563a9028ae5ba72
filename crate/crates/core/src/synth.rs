//! Seeded synthetic corpora with known ground truth.
//!
//! [`planted_corpus`] builds clean tables plus tables carrying exactly one
//! violation of a filter rule, and records where each violation was planted.
//! [`short_row_corpus`] builds tables whose serialized rows are a few hundred
//! tokens long under the bundled tokenizer, for packing experiments.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{Level, RuleId};

const HEADERS: &[&str] = &[
    "region", "price", "weight", "color", "season", "quantity", "rating", "size", "status", "total", "height", "level",
    "category", "amount", "distance", "station", "product", "brand", "model", "owner", "team", "player", "country",
    "state", "county", "week", "month", "record",
];

const VALUES: &[&str] = &[
    "north", "south", "east", "west", "black", "white", "small", "large", "medium", "spring", "summer", "open",
    "closed", "high", "low", "active", "market", "garden", "town", "bank", "court", "church", "college", "coach",
];

// Function words with no English reading.
const FOREIGN: &[&str] = &["und", "nicht", "oder", "aber", "der", "ist", "mit", "dem", "sehr", "auch"];

const FEATURE_NAMES: &[&str] = &[
    "ability",
    "account",
    "action",
    "activity",
    "address",
    "agency",
    "agent",
    "agreement",
    "air",
    "analysis",
    "animal",
    "answer",
    "area",
    "arm",
    "art",
    "article",
    "artist",
    "attention",
    "audience",
    "author",
    "authority",
    "baby",
    "bag",
    "ball",
    "base",
    "bed",
    "behavior",
    "benefit",
    "bill",
    "bit",
    "blood",
    "board",
    "body",
    "book",
    "box",
    "budget",
    "building",
    "business",
    "camera",
    "capital",
    "car",
    "card",
    "career",
    "case",
    "cause",
    "center",
    "chair",
    "chance",
    "change",
    "character",
    "charge",
    "class",
    "community",
    "company",
    "condition",
    "cost",
    "course",
    "culture",
    "cup",
    "customer",
];

/// A table as header plus raw cell strings; empty strings are missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_field(s: &str, out: &mut String) {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        out.push('"');
        out.push_str(&s.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(s);
    }
}

impl SynthTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            for (i, f) in line.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                csv_field(f, &mut out);
            }
            out.push('\n');
        }
        out
    }

    fn n_cols(&self) -> usize {
        self.header.len()
    }

    fn push_column(&mut self, name: &str, values: impl IntoIterator<Item = String>) {
        self.header.push(name.into());
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
    }
}

/// Where a violation was planted. `column` is set for column rules and `row`
/// (original row index) for row rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub table: String,
    pub rule: RuleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub tables: Vec<SynthTable>,
    pub plants: Vec<Plant>,
}

impl SynthCorpus {
    /// Writes `<name>.csv` per table and `plants.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        fs::write(dir.join("plants.json"), serde_json::to_vec_pretty(&self.plants)?)
    }

    pub fn plant_for(&self, table: &str) -> Option<&Plant> {
        self.plants.iter().find(|p| p.table == table)
    }
}

#[derive(Clone, Copy)]
enum ColKind {
    Category,
    SmallInt,
    Float,
    Date,
}

/// Clean table: a unique increasing id, `text_cols` category columns, a float
/// column, and random extra columns up to `n_cols`.
fn clean_table(rng: &mut ChaCha8Rng, name: String, n_rows: usize, n_cols: usize, text_cols: usize) -> SynthTable {
    let header: Vec<String> = HEADERS.choose_multiple(rng, n_cols).map(|s| s.to_string()).collect();
    let mut kinds = vec![ColKind::SmallInt];
    kinds.extend(std::iter::repeat_n(ColKind::Category, text_cols));
    kinds.push(ColKind::Float);
    while kinds.len() < n_cols {
        kinds.push([ColKind::Category, ColKind::SmallInt, ColKind::Float, ColKind::Date][rng.gen_range(0..4)]);
    }
    kinds.truncate(n_cols);

    let id_start: i64 = rng.gen_range(1..1000);
    let id_step: i64 = rng.gen_range(1..5);
    let mut columns: Vec<Vec<String>> = Vec::with_capacity(n_cols);
    for (c, kind) in kinds.iter().enumerate() {
        let col = match kind {
            _ if c == 0 => (0..n_rows).map(|i| (id_start + i as i64 * id_step).to_string()).collect(),
            ColKind::Category => {
                let k = rng.gen_range(3..=6);
                let vals: Vec<&str> = VALUES.choose_multiple(rng, k).copied().collect();
                (0..n_rows).map(|i| vals[if i < k { i } else { rng.gen_range(0..k) }].to_string()).collect()
            }
            ColKind::SmallInt => {
                (0..n_rows).map(|i| if i < 2 { i.to_string() } else { rng.gen_range(0..50).to_string() }).collect()
            }
            ColKind::Float => {
                let scale = rng.gen_range(1.0..500.0);
                (0..n_rows).map(|_| format!("{:.2}", rng.gen_range(0.0..1.0) * scale + 0.01)).collect()
            }
            ColKind::Date => (0..n_rows)
                .map(|_| {
                    format!("20{:02}-{:02}-{:02}", rng.gen_range(10..24), rng.gen_range(1..13), rng.gen_range(1..29))
                })
                .collect(),
        };
        columns.push(col);
    }
    let rows = (0..n_rows).map(|r| columns.iter().map(|c| c[r].clone()).collect()).collect();
    SynthTable { name, header, rows }
}

fn base(rng: &mut ChaCha8Rng, name: &str) -> SynthTable {
    let n_rows = rng.gen_range(70..=240);
    let n_cols = rng.gen_range(4..=7);
    clean_table(rng, name.into(), n_rows, n_cols, 1)
}

fn category_col(t: &SynthTable) -> usize {
    // column 1 is always a category column
    debug_assert!(t.n_cols() > 1);
    1
}

fn plant_table(rng: &mut ChaCha8Rng, name: &str, rule: RuleId, variant: usize) -> (SynthTable, Plant) {
    let mut plant = Plant { table: name.into(), rule, column: None, row: None };
    let t = match rule {
        RuleId::TableEnglish => {
            let mut t = base(rng, name);
            let n = t.n_cols();
            t.header = FOREIGN.choose_multiple(rng, n).map(|s| s.to_string()).collect();
            for cell in t.rows.iter_mut().flatten() {
                if VALUES.contains(&cell.as_str()) {
                    *cell = format!("{} {}", FOREIGN.choose(rng).unwrap(), FOREIGN.choose(rng).unwrap());
                }
            }
            t
        }
        RuleId::SchemaHeterogeneity => {
            let n_rows = rng.gen_range(70..=200);
            let header: Vec<String> = HEADERS.choose_multiple(rng, 4).map(|s| s.to_string()).collect();
            let rows =
                (0..n_rows).map(|_| (0..4).map(|_| format!("{:.3}", rng.gen_range(0.5..900.0))).collect()).collect();
            SynthTable { name: name.into(), header, rows }
        }
        RuleId::RowCount => {
            let n_rows = if variant.is_multiple_of(2) { rng.gen_range(5..40) } else { rng.gen_range(1100..1300) };
            clean_table(rng, name.into(), n_rows, 5, 1)
        }
        RuleId::ParseError => {
            let mut t = base(rng, name);
            if variant.is_multiple_of(2) {
                t.header[2] = t.header[1].clone();
            } else {
                t.rows[0][1] = t.header[t.n_cols() - 1].clone();
            }
            t
        }
        RuleId::TablePii => {
            let mut t = base(rng, name);
            let hits = (0.03 * (t.rows.len() * t.n_cols()) as f64).ceil() as usize;
            for r in (0..t.rows.len()).choose_multiple(rng, hits) {
                t.rows[r][1] = format!("mail person{r}@example.com");
            }
            t
        }
        RuleId::TableCode => {
            let mut t = base(rng, name);
            let r = rng.gen_range(0..t.rows.len());
            t.rows[r][1] = "int main() { return 0; }".into();
            t
        }
        RuleId::UnnamedColumns => {
            let mut t = base(rng, name);
            let n = t.n_cols();
            for c in (n - (n / 2 + 1))..n {
                t.header[c] = format!("Unnamed: {c}");
            }
            t
        }
        RuleId::TableMissing => {
            let mut t = base(rng, name);
            let total = t.rows.len() * t.n_cols();
            let target = total * 15 / 100;
            let mut cells: Vec<(usize, usize)> =
                (0..t.rows.len()).flat_map(|r| (1..t.header.len()).map(move |c| (r, c))).collect();
            cells.shuffle(rng);
            for &(r, c) in cells.iter().take(target) {
                t.rows[r][c] = String::new();
            }
            t
        }
        RuleId::ColumnCount => {
            let n_rows = rng.gen_range(70..=200);
            let mut t = clean_table(rng, name.into(), n_rows, 2, 1);
            // keep only the category column, then add a constant one
            for row in &mut t.rows {
                row.remove(0);
            }
            t.header.remove(0);
            let k = rng.gen_range(1..9).to_string();
            let hdr = HEADERS.iter().find(|h| !t.header.iter().any(|x| x == *h)).unwrap();
            t.push_column(hdr, std::iter::repeat(k));
            t
        }
        RuleId::LongHeader
        | RuleId::NumericHeader
        | RuleId::ColumnMissing
        | RuleId::ColumnEnglish
        | RuleId::ConstantColumn => {
            let n_rows = rng.gen_range(70..=240);
            let mut t = clean_table(rng, name.into(), n_rows, 7, 3);
            let n = t.rows.len();
            let (hdr, values): (String, Vec<String>) = match rule {
                RuleId::LongHeader => {
                    let word = *HEADERS.choose(rng).unwrap();
                    (vec![word; 60].join(" "), (0..n).map(|i| VALUES[i % 4].to_string()).collect())
                }
                RuleId::NumericHeader => {
                    (rng.gen_range(1900..2030).to_string(), (0..n).map(|i| ((i * 7) % 40).to_string()).collect())
                }
                RuleId::ColumnMissing => {
                    let keep: Vec<usize> = (0..n).choose_multiple(rng, n * 3 / 10);
                    let vals =
                        (0..n).map(|i| if keep.contains(&i) { VALUES[i % 5].to_string() } else { String::new() });
                    ("notes".into(), vals.collect())
                }
                RuleId::ColumnEnglish => ("comment".into(), (0..n).map(|i| FOREIGN[i % 5].to_string()).collect()),
                _ => ("flag".into(), vec!["yes".to_string(); n]),
            };
            plant.column = Some(hdr.clone());
            t.push_column(&hdr, values);
            t
        }
        RuleId::RowMissing | RuleId::DuplicateRow | RuleId::RowPii | RuleId::RowCode | RuleId::FloorSymbol => {
            let mut t = base(rng, name);
            let r = rng.gen_range(1..t.rows.len());
            let cat = category_col(&t);
            match rule {
                RuleId::RowMissing => {
                    for (c, cell) in t.rows[r].iter_mut().enumerate() {
                        if c != cat {
                            cell.clear();
                        }
                    }
                }
                RuleId::DuplicateRow => t.rows[r] = t.rows[r - 1].clone(),
                RuleId::RowPii => t.rows[r][cat] = "call 555-867-5309".into(),
                RuleId::RowCode => t.rows[r][cat] = "print(x)".into(),
                _ => t.rows[r][cat] = "⌊ subentry".into(),
            }
            plant.row = Some(r);
            t
        }
    };
    (t, plant)
}

pub const PLANTED_TABLES: usize = 200;
pub const PLANTS_PER_RULE: usize = 3;

/// 200 tables: three planted violations for every filter rule, the rest clean.
pub fn planted_corpus(seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs: Vec<Option<(RuleId, usize)>> =
        RuleId::ALL.iter().flat_map(|&r| (0..PLANTS_PER_RULE).map(move |v| Some((r, v)))).collect();
    jobs.resize(PLANTED_TABLES, None);
    jobs.shuffle(&mut rng);
    let mut tables = Vec::with_capacity(PLANTED_TABLES);
    let mut plants = Vec::new();
    for (i, job) in jobs.into_iter().enumerate() {
        let name = format!("t{i:03}");
        match job {
            Some((rule, v)) => {
                let (t, p) = plant_table(&mut rng, &name, rule, v);
                tables.push(t);
                plants.push(p);
            }
            None => tables.push(base(&mut rng, &name)),
        }
    }
    SynthCorpus { tables, plants }
}

/// Tables whose first column (`group`, four labels) is the intended target
/// and whose other columns are 24 to 36 numeric features. Each row serializes
/// to 57 + 9 * features tokens under the bundled tokenizer, about 330 on average.
pub fn short_row_corpus(seed: u64, n_tables: usize) -> Vec<SynthTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_tables)
        .map(|i| {
            let n_feat = rng.gen_range(24..=36);
            let n_rows = rng.gen_range(64..=400);
            let mut header = vec!["group".to_string()];
            header.extend(FEATURE_NAMES.choose_multiple(&mut rng, n_feat).map(|s| s.to_string()));
            let labels: Vec<&str> = VALUES.choose_multiple(&mut rng, 4).copied().collect();
            let rows = (0..n_rows)
                .map(|r| {
                    let mut row = vec![labels[r % 4].to_string()];
                    row.extend((0..n_feat).map(|_| rng.gen_range(0..=100).to_string()));
                    row
                })
                .collect();
            SynthTable { name: format!("s{i:04}"), header, rows }
        })
        .collect()
}

/// Level of the rule a plant violates.
pub fn plant_level(p: &Plant) -> Level {
    p.rule.level()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{FilterBank, FilterConfig};
    use crate::table::{parse_csv, Provenance};

    #[test]
    fn plants_are_attributed() {
        for seed in [7, 1, 2, 99] {
            let corpus = planted_corpus(seed);
            assert_eq!(corpus.tables.len(), PLANTED_TABLES);
            assert_eq!(corpus.plants.len(), RuleId::ALL.len() * PLANTS_PER_RULE);
            let bank = FilterBank::new(FilterConfig::default());
            let mut bad = Vec::new();
            for t in &corpus.tables {
                let a = parse_csv(t.to_csv().as_bytes(), Provenance::default()).unwrap();
                let out = bank.run(a);
                let got = (
                    out.rejection(),
                    out.removed_columns.iter().map(|c| (c.name.clone(), c.rule)).collect::<Vec<_>>(),
                    out.removed_rows.iter().map(|r| (r.row, r.rule)).collect::<Vec<_>>(),
                );
                let want = match corpus.plant_for(&t.name) {
                    None => (None, vec![], vec![]),
                    Some(p) => match p.rule.level() {
                        Level::Table => (Some(p.rule), got.1.clone(), got.2.clone()),
                        Level::Column => (None, vec![(p.column.clone().unwrap(), p.rule)], vec![]),
                        Level::Row => (None, vec![], vec![(p.row.unwrap(), p.rule)]),
                    },
                };
                if got != want {
                    bad.push(format!("{} {:?}: got {:?}", t.name, corpus.plant_for(&t.name).map(|p| p.rule), got));
                }
            }
            assert!(bad.is_empty(), "{}", bad.join("\n"));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(planted_corpus(3), planted_corpus(3));
        assert_eq!(short_row_corpus(3, 4), short_row_corpus(3, 4));
    }
}
