//! Email and phone-number detection.

use std::sync::LazyLock;

use regex::Regex;

static EMAIL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}").unwrap());

// Candidate digit runs; validated by `valid_phone`.
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+\d{1,3}[ .\-]*)?(?:\(\d{1,5}\)[ .\-]*)?\d{1,8}(?:[ .\-]{1,2}\d{1,8}){0,6}").unwrap()
});

pub fn contains_email(text: &str) -> bool {
    EMAIL.is_match(text)
}

struct Candidate<'a> {
    text: &'a str,
    prefixed: bool,
}

impl Candidate<'_> {
    /// Digit groups with the separator that preceded each (None for the first).
    fn groups(&self) -> Vec<(Option<char>, usize)> {
        let mut out = Vec::new();
        let mut run = 0usize;
        let mut sep: Option<char> = None;
        for c in self.text.chars() {
            if c.is_ascii_digit() {
                run += 1;
            } else {
                if run > 0 {
                    out.push((sep, run));
                    run = 0;
                    sep = None;
                }
                if matches!(c, ' ' | '.' | '-') && !out.is_empty() {
                    sep = sep.or(Some(c));
                }
            }
        }
        if run > 0 {
            out.push((sep, run));
        }
        out
    }
}

/// Phone rules: 7-15 digits in total, and either an international/area-code
/// prefix (`+CC` or `(area)`) or a separated layout whose groups look like a
/// phone number rather than a date, decimal, IP address or list of numbers.
fn valid_phone(groups: &[(Option<char>, usize)], prefixed: bool) -> bool {
    let digits: usize = groups.iter().map(|g| g.1).sum();
    if !(7..=15).contains(&digits) {
        return false;
    }
    if prefixed {
        return true;
    }
    if groups.len() < 2 {
        return false;
    }
    let (first, rest) = groups.split_first().unwrap();
    let first_ok = first.1 >= 3 || (first.1 == 1 && groups.len() >= 4);
    let rest_ok = rest.iter().all(|g| g.1 >= 3);
    let last_ok = groups.last().unwrap().1 >= 4;
    let dotted = rest.iter().any(|g| g.0 == Some('.'));
    first_ok && rest_ok && last_ok && !(dotted && groups.len() < 3)
}

pub fn contains_phone(text: &str) -> bool {
    for m in PHONE.find_iter(text) {
        let before = text[..m.start()].chars().next_back();
        let after = text[m.end()..].chars().next();
        if before.is_some_and(|c| c.is_alphanumeric() || c == '.' || c == '-' || c == '_' || c == '/')
            || after.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '/')
        {
            continue;
        }
        let cand = Candidate { text: m.as_str(), prefixed: m.as_str().starts_with('+') || m.as_str().contains('(') };
        let groups = cand.groups();
        // Trailing numbers can be swallowed into the match; accept any group prefix.
        if (1..=groups.len()).rev().any(|n| valid_phone(&groups[..n], cand.prefixed)) {
            return true;
        }
    }
    false
}

/// True iff the text contains an email address or a phone number.
pub fn detect_pii(text: &str) -> bool {
    text.contains('@') && contains_email(text) || contains_phone(text)
}
