//! Canonical byte layout and content hashing.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TRWLTBL1"                         8-byte magic
//! n_cols: u64, n_rows: u64
//! n_cols x { len: u64, utf8 name bytes }
//! n_rows x n_cols cells, row-major:
//!   tag: u8  (0 null, 1 bool, 2 int, 3 float, 4 text, 5 date, 6 timestamp)
//!   bool      u8
//!   int       i64
//!   float     f64 bit pattern (u64)
//!   text      len: u64, utf8 bytes
//!   date      i32 days since 1970-01-01
//!   timestamp i64 seconds since epoch, u32 nanoseconds
//! ```
//!
//! The layout is row-order sensitive: permuting rows changes the key.

use chrono::NaiveDate;
use sha2::{Digest, Sha256};

use super::{CellValue, ContentKey, TableArtifact};

const MAGIC: &[u8; 8] = b"TRWLTBL1";

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

fn put_cell(out: &mut Vec<u8>, cell: &CellValue) {
    out.push(cell.data_type().tag());
    match cell {
        CellValue::Null => {}
        CellValue::Bool(b) => out.push(*b as u8),
        CellValue::Int(i) => out.extend_from_slice(&i.to_le_bytes()),
        CellValue::Float(f) => out.extend_from_slice(&f.to_bits().to_le_bytes()),
        CellValue::Text(s) => {
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        CellValue::Date(d) => {
            let days = d.signed_duration_since(epoch()).num_days() as i32;
            out.extend_from_slice(&days.to_le_bytes());
        }
        CellValue::Timestamp(ts) => {
            let utc = ts.and_utc();
            out.extend_from_slice(&utc.timestamp().to_le_bytes());
            out.extend_from_slice(&utc.timestamp_subsec_nanos().to_le_bytes());
        }
    }
}

/// Canonical serialization of headers and cells.
pub fn canonical_bytes(t: &TableArtifact) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + t.n_rows() * t.n_cols() * 10);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.n_cols() as u64).to_le_bytes());
    out.extend_from_slice(&(t.n_rows() as u64).to_le_bytes());
    for name in t.column_names() {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for r in 0..t.n_rows() {
        for cell in t.row(r) {
            put_cell(&mut out, cell);
        }
    }
    out
}

/// SHA-256 of [`canonical_bytes`].
pub fn content_hash(t: &TableArtifact) -> ContentKey {
    ContentKey(Sha256::digest(canonical_bytes(t)).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{parse_csv, Provenance};

    #[test]
    fn same_bytes_same_key() {
        let a = parse_csv(b"x,y\n1,a\n2,b\n", Provenance::default()).unwrap();
        let b = parse_csv(b"x,y\n1,a\n2,b\n", Provenance { source: "elsewhere".into(), shard: 9 }).unwrap();
        assert_eq!(a.content_key(), b.content_key());
    }

    #[test]
    fn row_permutation_changes_key() {
        let a = parse_csv(b"x,y\n1,a\n2,b\n", Provenance::default()).unwrap();
        let b = parse_csv(b"x,y\n2,b\n1,a\n", Provenance::default()).unwrap();
        assert_ne!(a.content_key(), b.content_key());
    }

    #[test]
    fn type_tag_participates() {
        // Int 1 vs Text "1 " differ only by type and bytes.
        let a = parse_csv(b"x\n1\n", Provenance::default()).unwrap();
        let b = parse_csv(b"x\nfoo\n", Provenance::default()).unwrap();
        assert_ne!(a.content_key(), b.content_key());
    }

    #[test]
    fn layout_is_row_major() {
        let t = parse_csv(b"a,b\n1,2\n", Provenance::default()).unwrap();
        let bytes = canonical_bytes(&t);
        let tail = &bytes[bytes.len() - 18..];
        assert_eq!(tail[0], 2);
        assert_eq!(&tail[1..9], &1i64.to_le_bytes());
        assert_eq!(tail[9], 2);
        assert_eq!(&tail[10..18], &2i64.to_le_bytes());
    }
}
