//! Heuristic source-code scorer.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

/// Scores how likely a string is to contain source code, in `[0, 1]`.
pub trait CodeScorer: Send + Sync {
    fn code_score(&self, text: &str) -> f64;
}

const KEYWORDS: &[&str] = &[
    "def",
    "return",
    "import",
    "void",
    "function",
    "#include",
    "elif",
    "lambda",
    "const",
    "var",
    "let",
    "fn",
    "public",
    "private",
    "static",
    "class",
    "struct",
    "namespace",
    "printf",
    "println",
    "console",
    "self",
    "null",
    "None",
    "nullptr",
    "async",
    "await",
    "typedef",
    "#define",
    "extern",
    "unsigned",
    "foreach",
    "endif",
];

// Tokens that are almost never prose.
const STRONG_KEYWORDS: &[&str] = &["#include", "#define", "printf", "println", "nullptr", "elif", "typedef", "console"];

const OPERATORS: &[&str] = &["==", "!=", "=>", "->", "::", "&&", "+=", "-="];

static KEYWORD_SET: LazyLock<HashSet<&'static str>> = LazyLock::new(|| KEYWORDS.iter().copied().collect());
static CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[A-Za-z_][A-Za-z0-9_]*\(").unwrap());
static CAMEL_CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[a-z]+[A-Z][A-Za-z0-9]*\(").unwrap());

/// Evidence model: `score = 1 - exp(-e)` where `e` sums keyword hits,
/// brace/semicolon/operator density, assignment density, bracket density and
/// call-site counts. Keywords only weigh in fully when accompanied by code
/// punctuation, so prose like "return the class" stays low.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicCodeScorer;

impl CodeScorer for HeuristicCodeScorer {
    fn code_score(&self, text: &str) -> f64 {
        let n = text.chars().filter(|c| !c.is_whitespace()).count();
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        let keywords: HashSet<&str> = text
            .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '#'))
            .filter(|w| KEYWORD_SET.contains(w))
            .collect();
        let kw = keywords.len().min(4) as f64;
        let strong_kw = keywords.iter().filter(|w| STRONG_KEYWORDS.contains(w)).count() as f64;
        let mut strong = text.chars().filter(|c| matches!(c, '{' | '}' | ';')).count() as f64;
        strong += 2.0 * OPERATORS.iter().map(|op| text.matches(op).count()).sum::<usize>() as f64;
        let eq = text.chars().filter(|&c| c == '=').count() as f64;
        let weak = text.chars().filter(|c| matches!(c, '(' | ')' | '[' | ']')).count() as f64;
        let calls = CALL.find_iter(text).count().min(5) as f64;
        let camel = CAMEL_CALL.find_iter(text).count().min(5) as f64;
        let punctuated = calls > 0.0 || strong > 0.0 || eq > 0.0;
        let evidence = 0.25 * kw
            + 0.75 * strong_kw
            + 6.0 * strong / n
            + 2.0 * eq / n
            + weak / n
            + 0.4 * calls
            + 0.4 * camel
            + if kw > 0.0 && punctuated { 0.6 } else { 0.0 };
        1.0 - (-evidence).exp()
    }
}

pub fn code_score(text: &str) -> f64 {
    HeuristicCodeScorer.code_score(text)
}
