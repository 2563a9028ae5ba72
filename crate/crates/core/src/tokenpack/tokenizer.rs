//! Tokenizers: a bundled word/byte tokenizer and a byte-level BPE adapter.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::serialize::{END_COMPLETION, END_INPUT, LABEL_SEP};

pub const PAD_TEXT: &str = "<|pad|>";

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("cannot read tokenizer file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad tokenizer file {path}: {msg}")]
    Format { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SpecialIds {
    pub pad: u32,
    pub sep: u32,
    pub end_input: u32,
    pub end_completion: u32,
}

/// Deterministic text/id mapping with atomic special tokens.
pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError>;
    fn vocab_size(&self) -> usize;
    fn specials(&self) -> SpecialIds;
}

/// Special substrings in matching order (`<|` forms before `||`).
fn special_texts(ids: SpecialIds) -> [(&'static str, u32); 4] {
    [(END_INPUT, ids.end_input), (END_COMPLETION, ids.end_completion), (PAD_TEXT, ids.pad), (LABEL_SEP, ids.sep)]
}

/// Splits text into ordinary chunks and special tokens, scanning left to right
/// and taking the earliest (then longest) special match.
fn split_specials<'a>(text: &'a str, ids: SpecialIds, mut f: impl FnMut(Result<&'a str, u32>)) {
    let specials = special_texts(ids);
    let mut rest = text;
    while !rest.is_empty() {
        let next =
            specials.iter().filter_map(|&(s, id)| rest.find(s).map(|at| (at, std::cmp::Reverse(s.len()), s, id))).min();
        match next {
            Some((at, _, s, id)) => {
                if at > 0 {
                    f(Ok(&rest[..at]));
                }
                f(Err(id));
                rest = &rest[at + s.len()..];
            }
            None => {
                f(Ok(rest));
                break;
            }
        }
    }
}

const BUNDLED_STOPWORDS: &str = include_str!("../../data/english_stopwords.txt");
const BUNDLED_WORDS: &str = include_str!("../../data/english_words.txt");

// Grammar words and common pieces that are not in the English word list.
const EXTRA_PIECES: &[&str] = &[
    " ", "\n", ".", ":", "?", ",", "-", "_", "/", "(", ")", "'", "\"", "Predict", "What", "The", "nan", "less", "than",
    "between", "greater", "and", "true", "false",
];

/// Bundled test tokenizer: alphanumeric runs found in the vocabulary become
/// one id, every other character becomes one id per UTF-8 byte.
///
/// Ids: bytes 0..=255, then pad, `||`, `<|endinput|>`, `<|endcompletion|>`,
/// then vocabulary words.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

pub const WORD_BASE: u32 = 260;
const TEST_SPECIALS: SpecialIds = SpecialIds { pad: 256, sep: 257, end_input: 258, end_completion: 259 };

static BUNDLED: LazyLock<WordTokenizer> = LazyLock::new(|| {
    let mut words: Vec<String> = EXTRA_PIECES.iter().map(|s| s.to_string()).collect();
    words.extend(BUNDLED_STOPWORDS.split_whitespace().chain(BUNDLED_WORDS.split_whitespace()).map(String::from));
    words.extend((0..=100).map(|i: u32| i.to_string()));
    WordTokenizer::new(words)
});

impl WordTokenizer {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = S>) -> WordTokenizer {
        let mut out = WordTokenizer { words: Vec::new(), index: HashMap::new() };
        for w in words {
            let w = w.as_ref();
            if w.is_empty() || out.index.contains_key(w) {
                continue;
            }
            out.index.insert(w.to_string(), WORD_BASE + out.words.len() as u32);
            out.words.push(w.to_string());
        }
        out
    }

    pub fn bundled() -> &'static WordTokenizer {
        &BUNDLED
    }

    fn push_bytes(s: &str, out: &mut Vec<u32>) {
        out.extend(s.bytes().map(u32::from));
    }

    fn encode_plain(&self, text: &str, out: &mut Vec<u32>) {
        let mut chars = text.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            let mut end = start + c.len_utf8();
            if c.is_alphanumeric() {
                while let Some(&(i, d)) = chars.peek() {
                    if !d.is_alphanumeric() {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                }
            }
            let piece = &text[start..end];
            match self.index.get(piece) {
                Some(&id) => out.push(id),
                None => Self::push_bytes(piece, out),
            }
        }
    }
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        split_specials(text, TEST_SPECIALS, |part| match part {
            Ok(s) => self.encode_plain(s, &mut out),
            Err(id) => out.push(id),
        });
        out
    }

    fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::with_capacity(ids.len() * 4);
        for &id in ids {
            match id {
                0..=255 => bytes.push(id as u8),
                _ if id < WORD_BASE => {
                    let (s, _) = special_texts(TEST_SPECIALS).into_iter().find(|&(_, i)| i == id).unwrap();
                    bytes.extend_from_slice(s.as_bytes());
                }
                _ => {
                    let w = self.words.get((id - WORD_BASE) as usize).ok_or(TokenizerError::UnknownId(id))?;
                    bytes.extend_from_slice(w.as_bytes());
                }
            }
        }
        String::from_utf8(bytes).map_err(|_| TokenizerError::InvalidUtf8)
    }

    fn vocab_size(&self) -> usize {
        WORD_BASE as usize + self.words.len()
    }

    fn specials(&self) -> SpecialIds {
        TEST_SPECIALS
    }
}

/// Byte-to-printable-character table used by byte-level BPE vocabularies.
fn byte_chars() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u32 {
        let printable = (33..=126).contains(&b) || (161..=172).contains(&b) || (174..=255).contains(&b);
        table[b as usize] = if printable {
            char::from_u32(b).unwrap()
        } else {
            extra += 1;
            char::from_u32(255 + extra).unwrap()
        };
    }
    table
}

static PRETOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"'(?:s|t|re|ve|m|ll|d)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+").unwrap());

/// Byte-level BPE from a `vocab.json` (token -> id) and a `merges.txt`.
/// The four special tokens are looked up in the vocabulary and appended
/// after the largest id when absent.
#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    vocab: HashMap<String, u32>,
    inverse: HashMap<u32, String>,
    ranks: HashMap<(String, String), usize>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
    specials: SpecialIds,
}

impl BpeTokenizer {
    pub fn from_files(vocab_path: &Path, merges_path: &Path) -> Result<BpeTokenizer, TokenizerError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| TokenizerError::Io { path: p.display().to_string(), source })
        };
        let vocab: HashMap<String, u32> = serde_json::from_str(&read(vocab_path)?)
            .map_err(|e| TokenizerError::Format { path: vocab_path.display().to_string(), msg: e.to_string() })?;
        let merges = read(merges_path)?;
        Self::from_parts(vocab, &merges)
    }

    /// Loads `vocab.json` and `merges.txt` from a directory.
    pub fn from_dir(dir: &Path) -> Result<BpeTokenizer, TokenizerError> {
        Self::from_files(&dir.join("vocab.json"), &dir.join("merges.txt"))
    }

    pub fn from_parts(mut vocab: HashMap<String, u32>, merges: &str) -> Result<BpeTokenizer, TokenizerError> {
        let mut ranks = HashMap::new();
        for line in merges.lines().filter(|l| !l.starts_with("#version") && !l.trim().is_empty()) {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => {
                    let n = ranks.len();
                    ranks.entry((a.to_string(), b.to_string())).or_insert(n);
                }
                _ => return Err(TokenizerError::Format { path: "merges".into(), msg: format!("bad line {line:?}") }),
            }
        }
        let mut special = |s: &str| -> u32 {
            if let Some(&id) = vocab.get(s) {
                return id;
            }
            let id = vocab.values().max().map_or(0, |m| m + 1);
            vocab.insert(s.to_string(), id);
            id
        };
        let specials = SpecialIds {
            pad: special(PAD_TEXT),
            sep: special(LABEL_SEP),
            end_input: special(END_INPUT),
            end_completion: special(END_COMPLETION),
        };
        let byte_to_char = byte_chars();
        for c in byte_to_char {
            if !vocab.contains_key(&c.to_string()) {
                return Err(TokenizerError::Format { path: "vocab".into(), msg: format!("missing byte token {c:?}") });
            }
        }
        let char_to_byte = byte_to_char.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        let inverse = vocab.iter().map(|(k, &v)| (v, k.clone())).collect();
        Ok(BpeTokenizer { vocab, inverse, ranks, byte_to_char, char_to_byte, specials })
    }

    fn bpe(&self, word: &str, out: &mut Vec<u32>) {
        let mut parts: Vec<String> = word.bytes().map(|b| self.byte_to_char[b as usize].to_string()).collect();
        loop {
            let best = parts
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, i)) = best else { break };
            let merged = format!("{}{}", parts[i], parts[i + 1]);
            if !self.vocab.contains_key(&merged) {
                break;
            }
            parts[i] = merged;
            parts.remove(i + 1);
        }
        for p in parts {
            out.push(self.vocab[&p]);
        }
    }
}

impl Tokenizer for BpeTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        split_specials(text, self.specials, |part| match part {
            Ok(s) => {
                for m in PRETOKEN.find_iter(s) {
                    self.bpe(m.as_str(), &mut out);
                }
            }
            Err(id) => out.push(id),
        });
        out
    }

    fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let sp = special_texts(self.specials);
        let mut bytes = Vec::new();
        for &id in ids {
            if let Some(&(s, _)) = sp.iter().find(|&&(_, i)| i == id) {
                bytes.extend_from_slice(s.as_bytes());
                continue;
            }
            let tok = self.inverse.get(&id).ok_or(TokenizerError::UnknownId(id))?;
            for c in tok.chars() {
                bytes.push(*self.char_to_byte.get(&c).ok_or(TokenizerError::UnknownId(id))?);
            }
        }
        String::from_utf8(bytes).map_err(|_| TokenizerError::InvalidUtf8)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn specials(&self) -> SpecialIds {
        self.specials
    }
}
