//! RFC 4180 reader and writer.
//!
//! Hand-rolled so that a blank line in a single-column file is read as one
//! empty field (a missing value) instead of being skipped. In files with more
//! than one column, blank lines are ignored.

use std::io::{self, Write};

use super::{CellValue, Provenance, TableArtifact, TableError, UNNAMED_PREFIX};

struct Record {
    fields: Vec<Vec<u8>>,
    blank: bool,
}

fn split_records(bytes: &[u8]) -> Result<Vec<Record>, TableError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut records = Vec::new();
    let mut fields: Vec<Vec<u8>> = Vec::new();
    let mut field = Vec::new();
    let mut in_quotes = false;
    let mut quoted = false;
    let mut i = 0;
    let push_record = |fields: &mut Vec<Vec<u8>>, field: &mut Vec<u8>, quoted: bool, records: &mut Vec<Record>| {
        let blank = fields.is_empty() && field.is_empty() && !quoted;
        fields.push(std::mem::take(field));
        records.push(Record { fields: std::mem::take(fields), blank });
    };
    while i < bytes.len() {
        let b = bytes[i];
        if in_quotes {
            if b == b'"' {
                if bytes.get(i + 1) == Some(&b'"') {
                    field.push(b'"');
                    i += 1;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push(b);
            }
        } else {
            match b {
                b'"' if field.is_empty() && !quoted => {
                    in_quotes = true;
                    quoted = true;
                }
                b',' => {
                    fields.push(std::mem::take(&mut field));
                    quoted = false;
                }
                b'\r' if bytes.get(i + 1) == Some(&b'\n') => {}
                b'\n' | b'\r' => {
                    push_record(&mut fields, &mut field, quoted, &mut records);
                    quoted = false;
                }
                _ => field.push(b),
            }
        }
        i += 1;
    }
    if in_quotes {
        return Err(TableError::Csv("unterminated quoted field".into()));
    }
    if !fields.is_empty() || !field.is_empty() || quoted {
        push_record(&mut fields, &mut field, quoted, &mut records);
    }
    Ok(records)
}

/// Parses CSV bytes into a `Raw` table. Invalid UTF-8 is replaced with
/// U+FFFD and counted in [`TableArtifact::invalid_utf8_cells`].
pub fn parse_csv(bytes: &[u8], provenance: Provenance) -> Result<TableArtifact, TableError> {
    let mut records = split_records(bytes)?.into_iter();
    let Some(header) = records.next() else {
        return TableArtifact::new(Vec::new(), Vec::new(), provenance);
    };
    let mut invalid = 0usize;
    let mut decode = |raw: Vec<u8>| match String::from_utf8(raw) {
        Ok(s) => s,
        Err(e) => {
            invalid += 1;
            String::from_utf8_lossy(e.as_bytes()).into_owned()
        }
    };
    let names: Vec<String> = header
        .fields
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let name = decode(f);
            if name.trim().is_empty() {
                format!("{UNNAMED_PREFIX} {i}")
            } else {
                name
            }
        })
        .collect();
    let width = names.len();
    let mut columns: Vec<Vec<CellValue>> = vec![Vec::new(); width];
    for (idx, rec) in records.enumerate() {
        if rec.blank && width != 1 {
            continue;
        }
        if rec.fields.len() != width {
            return Err(TableError::RaggedRows { record: idx + 1, expected: width, found: rec.fields.len() });
        }
        for (c, f) in rec.fields.into_iter().enumerate() {
            columns[c].push(CellValue::parse(&decode(f)));
        }
    }
    let mut t = TableArtifact::new(names, columns, provenance)?;
    t.set_invalid_utf8_cells(invalid);
    Ok(t)
}

fn write_field<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let needs_quotes =
        s.contains([',', '"', '\n', '\r']) || s.starts_with(char::is_whitespace) || s.ends_with(char::is_whitespace);
    if needs_quotes {
        write!(w, "\"{}\"", s.replace('"', "\"\""))
    } else {
        w.write_all(s.as_bytes())
    }
}

/// Writes the table as CSV using the type-preserving cell rendering; `Null`
/// becomes an empty field.
pub fn write_csv<W: Write>(t: &TableArtifact, mut w: W) -> io::Result<()> {
    for (i, name) in t.column_names().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write_field(&mut w, name)?;
    }
    w.write_all(b"\n")?;
    for r in 0..t.n_rows() {
        for (i, cell) in t.row(r).enumerate() {
            if i > 0 {
                w.write_all(b",")?;
            }
            write_field(&mut w, &cell.render())?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}
