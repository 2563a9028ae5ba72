//! Sequence packing with row-causal table masks and loss spans.
//!
//! Rows of one table are packed contiguously into a segment; a token may
//! attend to earlier tokens of its own segment only. Loss is taken on the
//! tokens after `<|endinput|>` up to and including `<|endcompletion|>`.

mod format;
mod tokenizer;

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::table::ContentKey;

pub use self::format::{
    read_binary, write_binary, write_binary_header, write_binary_records, write_jsonl, PackFormatError, BINARY_MAGIC,
};
pub use self::tokenizer::{BpeTokenizer, SpecialIds, Tokenizer, TokenizerError, WordTokenizer, PAD_TEXT, WORD_BASE};

pub const DEFAULT_L_MAX: usize = 8192;
/// Largest sequence for which a dense mask is built.
pub const DENSE_LIMIT: usize = 512;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PackError {
    #[error("row {row} of table {table} has {end_input} end-of-input and {end_completion} end-of-completion markers")]
    MalformedRow { table: ContentKey, row: usize, end_input: usize, end_completion: usize },
}

/// One tokenized serialized row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedRow {
    pub table_key: ContentKey,
    pub row: usize,
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub table_key: ContentKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedRow {
    pub start: usize,
    pub end: usize,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedSequence {
    /// Padded to `l_max` with the pad id.
    pub token_ids: Vec<u32>,
    pub segments: Vec<Segment>,
    pub rows: Vec<PackedRow>,
    pub loss_spans: Vec<Range<usize>>,
    pub pad_start: usize,
}

impl PackedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn pad_tokens(&self) -> usize {
        self.token_ids.len() - self.pad_start
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PackStats {
    pub sequences: usize,
    pub rows: usize,
    pub tokens: usize,
    pub pad_tokens: usize,
    pub row_too_long: usize,
    pub malformed_rows: usize,
}

impl PackStats {
    pub fn padding_fraction(&self) -> f64 {
        let total = self.tokens + self.pad_tokens;
        if total == 0 {
            0.0
        } else {
            self.pad_tokens as f64 / total as f64
        }
    }

    pub fn mean_rows_per_sequence(&self) -> f64 {
        if self.sequences == 0 {
            0.0
        } else {
            self.rows as f64 / self.sequences as f64
        }
    }

    pub fn merge(&mut self, o: &PackStats) {
        self.sequences += o.sequences;
        self.rows += o.rows;
        self.tokens += o.tokens;
        self.pad_tokens += o.pad_tokens;
        self.row_too_long += o.row_too_long;
        self.malformed_rows += o.malformed_rows;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    pub sequences: Vec<PackedSequence>,
    pub stats: PackStats,
}

/// Loss range of one row given its tokens: after the single end-of-input
/// marker through the single end-of-completion marker.
pub fn row_loss_span(tokens: &[u32], ids: SpecialIds) -> Option<Range<usize>> {
    let ei: Vec<usize> = positions(tokens, ids.end_input);
    let ec: Vec<usize> = positions(tokens, ids.end_completion);
    match (ei.as_slice(), ec.as_slice()) {
        ([i], [c]) if i < c => Some(i + 1..c + 1),
        _ => None,
    }
}

fn positions(tokens: &[u32], id: u32) -> Vec<usize> {
    tokens.iter().enumerate().filter(|(_, &t)| t == id).map(|(i, _)| i).collect()
}

struct Builder<'a> {
    l_max: usize,
    ids: SpecialIds,
    out: &'a mut Vec<PackedSequence>,
    cur: PackedSequence,
}

impl Builder<'_> {
    fn fresh() -> PackedSequence {
        PackedSequence {
            token_ids: Vec::new(),
            segments: Vec::new(),
            rows: Vec::new(),
            loss_spans: Vec::new(),
            pad_start: 0,
        }
    }

    fn flush(&mut self) {
        if self.cur.token_ids.is_empty() {
            return;
        }
        let mut seq = std::mem::replace(&mut self.cur, Self::fresh());
        seq.pad_start = seq.token_ids.len();
        seq.token_ids.resize(self.l_max, self.ids.pad);
        self.out.push(seq);
    }

    /// Appends a row, opening a segment when `new_segment` is set.
    fn push(&mut self, row: &TokenizedRow, span: Range<usize>, new_segment: bool) {
        let start = self.cur.token_ids.len();
        let end = start + row.tokens.len();
        self.cur.token_ids.extend_from_slice(&row.tokens);
        if new_segment {
            self.cur.segments.push(Segment { start, end, table_key: row.table_key });
        } else {
            self.cur.segments.last_mut().unwrap().end = end;
        }
        self.cur.rows.push(PackedRow { start, end, row: row.row });
        self.cur.loss_spans.push(start + span.start..start + span.end);
    }
}

/// Next-fit packing. Tables are visited in a seeded shuffle of their sorted
/// keys; a table's rows are appended in order to one segment while they fit,
/// and a row that does not fit closes the sequence and continues the table
/// in a fresh segment of the next one. Rows longer than `l_max` and rows
/// without exactly one marker pair are dropped and counted.
pub fn pack_rows(rows: &[TokenizedRow], l_max: usize, seed: u64, ids: SpecialIds) -> Packing {
    let mut groups: BTreeMap<ContentKey, Vec<&TokenizedRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.table_key).or_default().push(r);
    }
    let mut order: Vec<ContentKey> = groups.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut stats = PackStats::default();
    let mut sequences = Vec::new();
    let mut b = Builder { l_max, ids, out: &mut sequences, cur: Builder::fresh() };
    for key in order {
        let mut open = false;
        for row in &groups[&key] {
            if row.tokens.len() > l_max {
                stats.row_too_long += 1;
                continue;
            }
            let Some(span) = row_loss_span(&row.tokens, ids) else {
                stats.malformed_rows += 1;
                continue;
            };
            if b.cur.token_ids.len() + row.tokens.len() > l_max {
                b.flush();
                open = false;
            }
            b.push(row, span, !open);
            open = true;
            stats.rows += 1;
            stats.tokens += row.tokens.len();
        }
    }
    b.flush();
    stats.sequences = sequences.len();
    stats.pad_tokens = sequences.iter().map(PackedSequence::pad_tokens).sum();
    Packing { sequences, stats }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Causal within each table segment.
    #[default]
    RowCausal,
    /// Causal within each row only.
    PerRow,
}

/// Block-lower-triangular mask described by its blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskDescriptor {
    pub len: usize,
    pub blocks: Vec<Range<usize>>,
}

impl MaskDescriptor {
    fn block_of(&self, i: usize) -> Option<usize> {
        let k = self.blocks.partition_point(|b| b.end <= i);
        (k < self.blocks.len() && self.blocks[k].contains(&i)).then_some(k)
    }

    pub fn attend(&self, i: usize, j: usize) -> bool {
        j <= i && self.block_of(i).is_some_and(|b| self.blocks[b].contains(&j))
    }

    /// Dense row-major mask; `dense[i][j]` is `attend(i, j)`.
    ///
    /// Panics when `len` exceeds [`DENSE_LIMIT`].
    pub fn dense(&self) -> Vec<Vec<bool>> {
        assert!(self.len <= DENSE_LIMIT, "dense mask requested for {} tokens", self.len);
        let mut m = vec![vec![false; self.len]; self.len];
        for b in &self.blocks {
            for i in b.clone() {
                for cell in &mut m[i][b.start..=i] {
                    *cell = true;
                }
            }
        }
        m
    }
}

pub fn rctm_mask(seq: &PackedSequence, mode: MaskMode) -> MaskDescriptor {
    let blocks = match mode {
        MaskMode::RowCausal => seq.segments.iter().map(|s| s.start..s.end).collect(),
        MaskMode::PerRow => seq.rows.iter().map(|r| r.start..r.end).collect(),
    };
    MaskDescriptor { len: seq.token_ids.len(), blocks }
}

/// Recomputes the loss spans of a packed sequence from its tokens.
pub fn loss_spans(seq: &PackedSequence, ids: SpecialIds) -> Result<Vec<Range<usize>>, PackError> {
    let key_of = |pos: usize| {
        seq.segments.iter().find(|s| (s.start..s.end).contains(&pos)).map_or(ContentKey::default(), |s| s.table_key)
    };
    seq.rows
        .iter()
        .map(|r| {
            let tokens = &seq.token_ids[r.start..r.end];
            row_loss_span(tokens, ids).map(|s| r.start + s.start..r.start + s.end).ok_or_else(|| {
                PackError::MalformedRow {
                    table: key_of(r.start),
                    row: r.row,
                    end_input: positions(tokens, ids.end_input).len(),
                    end_completion: positions(tokens, ids.end_completion).len(),
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const IDS: SpecialIds = SpecialIds { pad: 0, sep: 1, end_input: 2, end_completion: 3 };

    fn key(b: u8) -> ContentKey {
        ContentKey([b; 32])
    }

    /// Row of `len >= 3` tokens whose last two are `<ei> ... <ec>`.
    fn row(k: u8, idx: usize, len: usize) -> TokenizedRow {
        let mut tokens = vec![9; len];
        tokens[len - 3] = IDS.end_input;
        tokens[len - 1] = IDS.end_completion;
        TokenizedRow { table_key: key(k), row: idx, tokens }
    }

    fn find_seed(rows: &[TokenizedRow], first: ContentKey) -> u64 {
        (0..).find(|&s| pack_rows(rows, 16, s, IDS).sequences[0].segments[0].table_key == first).unwrap()
    }

    #[test]
    fn toy_packing() {
        let rows = vec![row(1, 0, 5), row(1, 1, 5), row(2, 0, 4)];
        let seed = find_seed(&rows, key(1));
        let p = pack_rows(&rows, 16, seed, IDS);
        assert_eq!(p.sequences.len(), 1);
        let s = &p.sequences[0];
        let segs: Vec<(usize, usize, ContentKey)> = s.segments.iter().map(|g| (g.start, g.end, g.table_key)).collect();
        assert_eq!(segs, vec![(0, 10, key(1)), (10, 14, key(2))]);
        assert_eq!(s.pad_start, 14);
        assert_eq!(s.token_ids.len(), 16);
        assert_eq!(s.loss_spans, vec![3..5, 8..10, 12..14]);
        assert_eq!(loss_spans(s, IDS).unwrap(), s.loss_spans);

        let m = rctm_mask(s, MaskMode::RowCausal);
        assert!(m.attend(7, 2));
        assert!(!m.attend(11, 3));
        assert!(!m.attend(2, 7));
        assert!(!m.attend(15, 15));
    }

    #[test]
    fn exact_fit_and_too_long() {
        let p = pack_rows(&[row(1, 0, 16)], 16, 0, IDS);
        assert_eq!(p.sequences.len(), 1);
        assert_eq!(p.sequences[0].pad_start, 16);
        assert_eq!(p.sequences[0].segments.len(), 1);

        let p = pack_rows(&[row(1, 0, 17)], 16, 0, IDS);
        assert!(p.sequences.is_empty());
        assert_eq!(p.stats.row_too_long, 1);
    }

    #[test]
    fn continuation_opens_fresh_segment() {
        let rows = vec![row(1, 0, 6), row(1, 1, 6), row(1, 2, 6)];
        let p = pack_rows(&rows, 16, 0, IDS);
        assert_eq!(p.sequences.len(), 2);
        assert_eq!(p.sequences[1].segments.len(), 1);
        assert_eq!(p.sequences[1].segments[0].start, 0);
        assert_eq!(p.sequences[1].rows[0].row, 2);
    }

    #[test]
    fn malformed_rows_are_counted() {
        let mut bad = row(1, 0, 5);
        bad.tokens[0] = IDS.end_input;
        let p = pack_rows(&[bad.clone(), row(1, 1, 5)], 16, 0, IDS);
        assert_eq!(p.stats.malformed_rows, 1);
        assert_eq!(p.stats.rows, 1);

        let mut seq = p.sequences[0].clone();
        seq.token_ids[..5].copy_from_slice(&bad.tokens);
        assert!(matches!(loss_spans(&seq, IDS), Err(PackError::MalformedRow { end_input: 2, .. })));
    }

    fn arb_rows() -> impl Strategy<Value = Vec<TokenizedRow>> {
        prop::collection::vec((1u8..6, 3usize..40), 1..40).prop_map(|v| {
            let mut counts = [0usize; 8];
            v.into_iter()
                .map(|(k, len)| {
                    counts[k as usize] += 1;
                    row(k, counts[k as usize] - 1, len)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conservation_and_no_cross_table(rows in arb_rows(), seed in any::<u64>()) {
            let p = pack_rows(&rows, 32, seed, IDS);
            prop_assert_eq!(p.stats.rows + p.stats.row_too_long, rows.len());
            let mut seen: Vec<(ContentKey, usize)> = Vec::new();
            for s in &p.sequences {
                let mut pos = 0;
                for g in &s.segments {
                    prop_assert_eq!(g.start, pos);
                    pos = g.end;
                }
                prop_assert_eq!(pos, s.pad_start);
                let m = rctm_mask(s, MaskMode::RowCausal);
                let owner = |i: usize| s.segments.iter().find(|g| (g.start..g.end).contains(&i)).map(|g| g.table_key);
                let d = m.dense();
                for i in 0..s.len() {
                    for j in 0..s.len() {
                        if d[i][j] {
                            prop_assert!(owner(i).is_some() && owner(i) == owner(j));
                        }
                    }
                }
                for r in &s.rows {
                    let k = s.segments.iter().find(|g| g.start <= r.start && r.end <= g.end).unwrap().table_key;
                    seen.push((k, r.row));
                }
            }
            let mut expected: Vec<(ContentKey, usize)> = rows.iter().filter(|r| r.tokens.len() <= 32).map(|r| (r.table_key, r.row)).collect();
            seen.sort();
            expected.sort();
            prop_assert_eq!(seen, expected);
        }

        #[test]
        fn per_row_mode_equals_singleton_segments(rows in arb_rows(), seed in any::<u64>()) {
            let p = pack_rows(&rows, 64, seed, IDS);
            for s in &p.sequences {
                let mut split = s.clone();
                split.segments = s.rows.iter().map(|r| Segment { start: r.start, end: r.end, table_key: key(0) }).collect();
                prop_assert_eq!(rctm_mask(s, MaskMode::PerRow).dense(), rctm_mask(&split, MaskMode::RowCausal).dense());
            }
        }
    }
}
