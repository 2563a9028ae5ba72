//! On-disk forms of packed sequences (layout in `docs/packed_format.md`).

use std::io::{self, BufRead, Read, Write};

use serde::Serialize;

use super::{PackedRow, PackedSequence, Segment};
use crate::table::ContentKey;

pub const BINARY_MAGIC: &[u8; 8] = b"TRWLPAK1";

#[derive(Debug, thiserror::Error)]
pub enum PackFormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a packed-sequence file")]
    BadMagic,
    #[error("corrupt record: {0}")]
    Corrupt(&'static str),
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    token_ids: &'a [u32],
    pad_start: usize,
    segments: &'a [Segment],
    rows: &'a [PackedRow],
    loss_spans: Vec<[usize; 2]>,
}

/// One JSON object per line; `token_ids` stops at `pad_start`.
pub fn write_jsonl<W: Write>(seqs: &[PackedSequence], mut w: W) -> io::Result<()> {
    for s in seqs {
        let rec = JsonRecord {
            token_ids: &s.token_ids[..s.pad_start],
            pad_start: s.pad_start,
            segments: &s.segments,
            rows: &s.rows,
            loss_spans: s.loss_spans.iter().map(|r| [r.start, r.end]).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn put(w: &mut impl Write, v: usize) -> io::Result<()> {
    let v = u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

pub fn write_binary_header<W: Write>(mut w: W, l_max: usize, pad: u32) -> io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    put(&mut w, l_max)?;
    w.write_all(&pad.to_le_bytes())
}

/// Appends records; a file is a header followed by records up to EOF.
pub fn write_binary_records<W: Write>(seqs: &[PackedSequence], mut w: W) -> io::Result<()> {
    for s in seqs {
        put(&mut w, s.pad_start)?;
        for &t in &s.token_ids[..s.pad_start] {
            w.write_all(&t.to_le_bytes())?;
        }
        put(&mut w, s.segments.len())?;
        for g in &s.segments {
            put(&mut w, g.start)?;
            put(&mut w, g.end)?;
            w.write_all(&g.table_key.0)?;
        }
        put(&mut w, s.rows.len())?;
        for (r, span) in s.rows.iter().zip(&s.loss_spans) {
            put(&mut w, r.start)?;
            put(&mut w, r.end)?;
            put(&mut w, r.row)?;
            put(&mut w, span.start)?;
            put(&mut w, span.end)?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(seqs: &[PackedSequence], l_max: usize, pad: u32, mut w: W) -> io::Result<()> {
    write_binary_header(&mut w, l_max, pad)?;
    write_binary_records(seqs, w)
}

fn get(r: &mut impl Read) -> Result<usize, PackFormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

/// Reads a binary file back, re-padding each sequence to `l_max`.
pub fn read_binary<R: BufRead>(mut r: R) -> Result<(usize, Vec<PackedSequence>), PackFormatError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(PackFormatError::BadMagic);
    }
    let l_max = get(&mut r)?;
    let pad = get(&mut r)? as u32;
    let mut out = Vec::new();
    while !r.fill_buf()?.is_empty() {
        let pad_start = get(&mut r)?;
        if pad_start > l_max {
            return Err(PackFormatError::Corrupt("sequence longer than l_max"));
        }
        let mut token_ids = Vec::with_capacity(l_max);
        for _ in 0..pad_start {
            token_ids.push(get(&mut r)? as u32);
        }
        token_ids.resize(l_max, pad);
        let n_seg = get(&mut r)?;
        let mut segments = Vec::with_capacity(n_seg.min(l_max));
        for _ in 0..n_seg {
            let (start, end) = (get(&mut r)?, get(&mut r)?);
            let mut key = [0u8; 32];
            r.read_exact(&mut key)?;
            segments.push(Segment { start, end, table_key: ContentKey(key) });
        }
        let n_rows = get(&mut r)?;
        let mut rows = Vec::with_capacity(n_rows.min(l_max));
        let mut loss_spans = Vec::with_capacity(n_rows.min(l_max));
        for _ in 0..n_rows {
            let (start, end, row) = (get(&mut r)?, get(&mut r)?, get(&mut r)?);
            let (a, b) = (get(&mut r)?, get(&mut r)?);
            rows.push(PackedRow { start, end, row });
            loss_spans.push(a..b);
        }
        out.push(PackedSequence { token_ids, segments, rows, loss_spans, pad_start });
    }
    Ok((l_max, out))
}

#[cfg(test)]
mod tests {
    use super::super::{pack_rows, SpecialIds, TokenizedRow};
    use super::*;

    #[test]
    fn binary_roundtrip() {
        let ids = SpecialIds { pad: 0, sep: 1, end_input: 2, end_completion: 3 };
        let rows: Vec<TokenizedRow> = (0..9)
            .map(|i| TokenizedRow { table_key: ContentKey([i as u8 % 3; 32]), row: i, tokens: vec![7, 7, 2, 8, 3] })
            .collect();
        let p = pack_rows(&rows, 16, 5, ids);
        let mut buf = Vec::new();
        write_binary(&p.sequences, 16, ids.pad, &mut buf).unwrap();
        let (l_max, back) = read_binary(buf.as_slice()).unwrap();
        assert_eq!(l_max, 16);
        assert_eq!(back, p.sequences);
        assert!(matches!(read_binary(&b"NOTMAGIC...."[..]), Err(PackFormatError::BadMagic)));

        let mut js = Vec::new();
        write_jsonl(&p.sequences, &mut js).unwrap();
        assert_eq!(String::from_utf8(js).unwrap().lines().count(), p.sequences.len());
    }
}
