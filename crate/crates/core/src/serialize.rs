//! Row serialization and shot concatenation.
//!
//! Grammar (see `docs/grammar.md`):
//!
//! ```text
//! Predict the value of <target>:\n
//! <l1> || <l2> || ... || <ln> ||\n
//! The <key> is <value>.\n            (one line per feature column)
//! What is the value of <target>?\n
//! <l1> || <l2> || ... || <ln> ||\n
//! <|endinput|><answer><|endcompletion|>
//! ```

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::table::{ContentKey, TableArtifact};
use crate::task::PredictionTask;

pub const LABEL_SEP: &str = "||";
pub const END_INPUT: &str = "<|endinput|>";
pub const END_COMPLETION: &str = "<|endcompletion|>";
/// Rendering of a missing feature value.
pub const NULL_TOKEN: &str = "nan";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SerializeError {
    #[error("row {0} has a missing target value")]
    MissingTarget(usize),
    #[error("row {row} out of range for a table of {n_rows} rows")]
    RowOutOfRange { row: usize, n_rows: usize },
    #[error("shots and query come from different tasks")]
    MixedTasks,
    #[error("shot without an answer")]
    ShotWithoutAnswer,
}

/// Character ranges of the four parts of a serialized row. `suffix` ends
/// with `<|endinput|>`; `answer` is empty when no answer was included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spans {
    pub prefix: Range<usize>,
    pub features: Range<usize>,
    pub suffix: Range<usize>,
    pub answer: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedExample {
    pub text: String,
    pub spans: Spans,
    pub table_key: ContentKey,
    pub target_col: usize,
    pub row: usize,
    /// Label of the row, whether or not it appears in `text`.
    pub target: Option<String>,
    pub has_answer: bool,
}

impl SerializedExample {
    /// Expected completion for this example: the label plus terminator.
    pub fn gold(&self) -> Option<String> {
        self.target.as_ref().map(|t| format!("{t}{END_COMPLETION}"))
    }
}

pub fn label_list(labels: &[String]) -> String {
    let mut s = labels.join(" || ");
    s.push_str(" ||");
    s
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

pub fn serialize_row(
    task: &PredictionTask,
    t: &TableArtifact,
    row: usize,
    include_answer: bool,
) -> Result<SerializedExample, SerializeError> {
    if row >= t.n_rows() {
        return Err(SerializeError::RowOutOfRange { row, n_rows: t.n_rows() });
    }
    let target = task.label_of(t, row);
    if include_answer && target.is_none() {
        return Err(SerializeError::MissingTarget(row));
    }
    let labels = label_list(&task.label_set);
    let name = &task.target_name;

    let prefix = format!("Predict the value of {name}:\n{labels}\n");
    let mut features = String::new();
    for &c in &task.feature_cols {
        let cell = t.cell(row, c);
        let value = if cell.is_null() { NULL_TOKEN.into() } else { cell.render() };
        features.push_str(&format!("The {} is {}.\n", t.headers()[c].name, value));
    }
    let suffix = format!("What is the value of {name}?\n{labels}\n{END_INPUT}");
    let answer = match (&target, include_answer) {
        (Some(label), true) => format!("{label}{END_COMPLETION}"),
        _ => String::new(),
    };

    let a = char_len(&prefix);
    let b = a + char_len(&features);
    let c = b + char_len(&suffix);
    let d = c + char_len(&answer);
    Ok(SerializedExample {
        text: [prefix, features, suffix, answer].concat(),
        spans: Spans { prefix: 0..a, features: a..b, suffix: b..c, answer: c..d },
        table_key: task.table_key,
        target_col: task.target_col,
        row,
        target,
        has_answer: include_answer,
    })
}

/// Concatenates answered shots followed by the query, with no separators.
pub fn concat_shots(shots: &[SerializedExample], query: &SerializedExample) -> Result<String, SerializeError> {
    let mut out = String::new();
    for s in shots {
        if s.table_key != query.table_key || s.target_col != query.target_col {
            return Err(SerializeError::MixedTasks);
        }
        if !s.has_answer {
            return Err(SerializeError::ShotWithoutAnswer);
        }
        out.push_str(&s.text);
    }
    out.push_str(&query.text);
    Ok(out)
}

/// Slice between the final `<|endinput|>` and the following `<|endcompletion|>`.
pub fn extract_answer(text: &str) -> Option<&str> {
    let start = text.rfind(END_INPUT)? + END_INPUT.len();
    let len = text[start..].find(END_COMPLETION)?;
    Some(&text[start..start + len])
}

/// JSONL record for a serialized example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub text: String,
    pub spans: Spans,
    pub table_key: ContentKey,
    pub row: usize,
    pub target: Option<String>,
}

impl From<&SerializedExample> for ExampleRecord {
    fn from(e: &SerializedExample) -> Self {
        ExampleRecord {
            text: e.text.clone(),
            spans: e.spans.clone(),
            table_key: e.table_key,
            row: e.row,
            target: e.target.clone(),
        }
    }
}
