use std::borrow::Cow;
use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// A single typed cell. `Null` is the only representation of a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum CellValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Date(NaiveDate),
    Timestamp(NaiveDateTime),
}

/// Variant tag of a [`CellValue`], used as the declared type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Null,
    Bool,
    Int,
    Float,
    Text,
    Date,
    Timestamp,
}

impl DataType {
    pub const ALL: [DataType; 7] = [
        DataType::Null,
        DataType::Bool,
        DataType::Int,
        DataType::Float,
        DataType::Text,
        DataType::Date,
        DataType::Timestamp,
    ];

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int | DataType::Float)
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, DataType::Date | DataType::Timestamp)
    }

    pub fn tag(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Null => "null",
            DataType::Bool => "bool",
            DataType::Int => "int",
            DataType::Float => "float",
            DataType::Text => "text",
            DataType::Date => "date",
            DataType::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%d.%m.%Y", "%B %d, %Y", "%d %B %Y"];

const TIMESTAMP_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
];

impl CellValue {
    /// Parses a raw textual cell.
    ///
    /// Empty, whitespace-only and NaN spellings become `Null`. Typed parses are
    /// attempted on the trimmed string; anything else is kept as `Text` with
    /// its original bytes.
    pub fn parse(raw: &str) -> CellValue {
        let t = raw.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("nan") {
            return CellValue::Null;
        }
        match t {
            "true" | "True" | "TRUE" => return CellValue::Bool(true),
            "false" | "False" | "FALSE" => return CellValue::Bool(false),
            _ => {}
        }
        if looks_numeric(t) {
            if let Ok(i) = t.parse::<i64>() {
                if i.to_string() == t {
                    return CellValue::Int(i);
                }
            }
            if let Ok(f) = t.parse::<f64>() {
                if f.is_finite() {
                    return CellValue::Float(f);
                }
            }
        }
        if let Some(v) = parse_temporal(t) {
            return v;
        }
        CellValue::Text(raw.to_string())
    }

    pub fn data_type(&self) -> DataType {
        match self {
            CellValue::Null => DataType::Null,
            CellValue::Bool(_) => DataType::Bool,
            CellValue::Int(_) => DataType::Int,
            CellValue::Float(_) => DataType::Float,
            CellValue::Text(_) => DataType::Text,
            CellValue::Date(_) => DataType::Date,
            CellValue::Timestamp(_) => DataType::Timestamp,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, CellValue::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CellValue::Int(i) => Some(*i as f64),
            CellValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Type-preserving text form: `parse(render(v)) == v` for every non-null
    /// value produced by [`CellValue::parse`]. `Null` renders as the empty
    /// string.
    pub fn render(&self) -> Cow<'_, str> {
        match self {
            CellValue::Null => Cow::Borrowed(""),
            CellValue::Bool(true) => Cow::Borrowed("true"),
            CellValue::Bool(false) => Cow::Borrowed("false"),
            CellValue::Int(i) => Cow::Owned(i.to_string()),
            // Debug keeps a fractional part or exponent so the value re-parses as Float.
            CellValue::Float(f) => Cow::Owned(format!("{f:?}")),
            CellValue::Text(s) => Cow::Borrowed(s),
            CellValue::Date(d) => Cow::Owned(d.format("%Y-%m-%d").to_string()),
            CellValue::Timestamp(ts) => Cow::Owned(ts.format("%Y-%m-%dT%H:%M:%S%.f").to_string()),
        }
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// Leading zeros ("007", "-012") mark identifiers, not numbers.
fn looks_numeric(t: &str) -> bool {
    if !t.bytes().any(|b| b.is_ascii_digit()) {
        return false;
    }
    if !t.bytes().all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E')) {
        return false;
    }
    let digits = t.trim_start_matches(['-', '+']);
    let b = digits.as_bytes();
    !(b.len() > 1 && b[0] == b'0' && b[1].is_ascii_digit())
}

fn parse_temporal(t: &str) -> Option<CellValue> {
    // Cheap gate: every supported layout has a four-digit year.
    if t.len() < 8 || !has_four_digit_run(t) {
        return None;
    }
    for fmt in DATE_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(t, fmt) {
            return Some(CellValue::Date(d));
        }
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(CellValue::Timestamp(dt.naive_utc()));
    }
    for fmt in TIMESTAMP_FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(t, fmt) {
            return Some(CellValue::Timestamp(ts));
        }
    }
    None
}

fn has_four_digit_run(t: &str) -> bool {
    let mut run = 0;
    for b in t.bytes() {
        if b.is_ascii_digit() {
            run += 1;
            if run == 4 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}
