//! Accuracy, exact binomial intervals and sample-efficiency statistics.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Byte equality, terminator included; no normalization of any kind.
pub fn exact_match(produced: &str, gold: &str) -> bool {
    produced.as_bytes() == gold.as_bytes()
}

/// `P(X <= s)` for `X ~ Binomial(n, p)`.
pub fn binomial_cdf(s: u64, n: u64, p: f64) -> f64 {
    if s >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let mut ln_c = 0.0;
    let mut total = 0.0;
    for k in 0..=s {
        if k > 0 {
            ln_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        total += (ln_c + k as f64 * lp + (n - k) as f64 * lq).exp();
    }
    total.min(1.0)
}

/// Finds `p` in `[0, 1]` with `f(p) = target` for decreasing `f`.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided Clopper-Pearson interval at confidence `1 - alpha`.
pub fn clopper_pearson(successes: u64, n: u64, alpha: f64) -> (f64, f64) {
    assert!(n > 0 && successes <= n, "need 0 <= successes <= n and n > 0");
    let half = alpha / 2.0;
    let lower = if successes == 0 {
        0.0
    } else {
        // P(X >= s) increases with p; P(X <= s - 1) decreases.
        bisect_decreasing(|p| binomial_cdf(successes - 1, n, p), 1.0 - half)
    };
    let upper = if successes == n { 1.0 } else { bisect_decreasing(|p| binomial_cdf(successes, n, p), half) };
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n: usize,
    pub matches: usize,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Score {
    pub fn from_counts(matches: usize, n: usize) -> Result<Score, EvalError> {
        if n == 0 {
            return Err(EvalError::EmptyRecords);
        }
        let (ci_low, ci_high) = clopper_pearson(matches as u64, n as u64, 0.05);
        Ok(Score { n, matches, accuracy: matches as f64 / n as f64, ci_low, ci_high })
    }
}

/// Accuracy over exact-match flags with a 95% Clopper-Pearson interval.
pub fn score_matches(flags: impl IntoIterator<Item = bool>) -> Result<Score, EvalError> {
    let (mut n, mut m) = (0, 0);
    for f in flags {
        n += 1;
        m += usize::from(f);
    }
    Score::from_counts(m, n)
}

/// Accuracy by shot count on a grid of increasing shot counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub shots: Vec<usize>,
    pub accuracy: Vec<f64>,
}

impl Curve {
    pub fn new(points: impl IntoIterator<Item = (usize, f64)>) -> Curve {
        let mut pts: Vec<(usize, f64)> = points.into_iter().collect();
        pts.sort_by_key(|p| p.0);
        Curve { shots: pts.iter().map(|p| p.0).collect(), accuracy: pts.iter().map(|p| p.1).collect() }
    }

    /// Smallest grid shot count whose accuracy reaches `alpha`.
    pub fn samples_to_reach(&self, alpha: f64) -> Option<usize> {
        self.shots.iter().zip(&self.accuracy).find(|(_, &a)| a >= alpha).map(|(&k, _)| k)
    }
}

/// `N(g, alpha) / N(f, alpha)`: how many times more shots `g` needs than `f`.
/// When `f` reaches the level with zero shots the ratio is 1 if `g` does too
/// and infinite otherwise.
pub fn relative_sample_efficiency(f: &Curve, g: &Curve, alpha: f64) -> Result<f64, EvalError> {
    let nf = f.samples_to_reach(alpha).ok_or(EvalError::LevelNotReached { curve: "f", alpha })?;
    let ng = g.samples_to_reach(alpha).ok_or(EvalError::LevelNotReached { curve: "g", alpha })?;
    Ok(match (nf, ng) {
        (0, 0) => 1.0,
        (0, _) => f64::INFINITY,
        _ => ng as f64 / nf as f64,
    })
}
