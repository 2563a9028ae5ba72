//! Lexicon and character-trigram English scorer.
//!
//! Each alphabetic word is scored on its own: 1 if it is in the bundled
//! English lexicon, 0 if it is a known non-English function word, 0.5 if it is
//! an unknown token of at most two letters, and otherwise the fraction of its
//! boundary-padded character trigrams that occur in the lexicon. A text scores
//! the mean over its words; text without words scores 0.

use std::collections::HashSet;
use std::sync::LazyLock;

/// Scores how likely a string is to be English, in `[0, 1]`.
pub trait LanguageScorer: Send + Sync {
    fn english_score(&self, text: &str) -> f64;
}

pub(crate) const EN_STOPWORDS: &str = include_str!("../../data/english_stopwords.txt");
const EN_WORDS: &str = include_str!("../../data/english_words.txt");
pub(crate) const FOREIGN_STOPWORDS: &str = include_str!("../../data/foreign_stopwords.txt");

pub struct LexiconScorer {
    english: HashSet<&'static str>,
    foreign: HashSet<&'static str>,
    trigrams: HashSet<[char; 3]>,
}

fn trigrams(word: &str) -> impl Iterator<Item = [char; 3]> + '_ {
    let padded: Vec<char> = std::iter::once('^').chain(word.chars()).chain(std::iter::once('$')).collect();
    (0..padded.len().saturating_sub(2)).map(move |i| [padded[i], padded[i + 1], padded[i + 2]])
}

/// Lower-cased alphabetic runs.
pub(crate) fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).map(str::to_lowercase)
}

impl LexiconScorer {
    pub fn bundled() -> &'static LexiconScorer {
        static SCORER: LazyLock<LexiconScorer> = LazyLock::new(|| {
            let english: HashSet<&'static str> =
                EN_STOPWORDS.split_whitespace().chain(EN_WORDS.split_whitespace()).collect();
            let foreign = FOREIGN_STOPWORDS.split_whitespace().filter(|w| !english.contains(w)).collect();
            let trigrams = english.iter().flat_map(|w| trigrams(w).collect::<Vec<_>>()).collect();
            LexiconScorer { english, foreign, trigrams }
        });
        &SCORER
    }

    fn word_score(&self, w: &str) -> f64 {
        if self.english.contains(w) {
            return 1.0;
        }
        if self.foreign.contains(w) {
            return 0.0;
        }
        if w.chars().count() <= 2 {
            return 0.5;
        }
        let (hit, total) =
            trigrams(w).fold((0usize, 0usize), |(h, n), g| (h + self.trigrams.contains(&g) as usize, n + 1));
        hit as f64 / total as f64
    }

    /// Score plus the number of words it was computed from.
    pub fn score_with_count(&self, text: &str) -> (f64, usize) {
        let (sum, n) = words(text).fold((0.0, 0usize), |(s, n), w| (s + self.word_score(&w), n + 1));
        if n == 0 {
            (0.0, 0)
        } else {
            (sum / n as f64, n)
        }
    }
}

impl LanguageScorer for LexiconScorer {
    fn english_score(&self, text: &str) -> f64 {
        self.score_with_count(text).0
    }
}

/// Default-scorer convenience.
pub fn english_score(text: &str) -> f64 {
    LexiconScorer::bundled().english_score(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(english_score(""), 0.0);
        assert_eq!(english_score("12 34 -- !!"), 0.0);
    }

    #[test]
    fn lexicon_words_score_one() {
        assert_eq!(english_score("The price of the house"), 1.0);
    }

    #[test]
    fn foreign_function_words_score_zero() {
        assert_eq!(english_score("und nicht aber"), 0.0);
    }

    #[test]
    fn unseen_english_word_scores_high() {
        assert!(english_score("thermostat") > 0.6, "{}", english_score("thermostat"));
        assert!(english_score("zzqxj") < 0.3);
    }

    #[test]
    fn bounded() {
        for s in ["ÄÖÜ ß", "x", "déjà vu", "hello world", "ひらがな"] {
            let v = english_score(s);
            assert!((0.0..=1.0).contains(&v), "{s}: {v}");
        }
    }
}
