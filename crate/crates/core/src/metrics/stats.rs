use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use super::MetricsError;

/// Largest sample size for which `WilcoxonMode::Auto` uses the exact null.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMode {
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMode {
    Exact,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct StatResult {
    pub test: String,
    pub label: String,
    pub statistic: f64,
    pub p_value: f64,
    pub corrected_p: f64,
    /// Pairs entering the test (non-zero differences, or discordant pairs).
    pub n: usize,
    pub degenerate: bool,
    pub note: Option<String>,
}

impl StatResult {
    fn new(test: &str, label: &str, statistic: f64, p: f64, n: usize) -> Self {
        let p = p.clamp(0.0, 1.0);
        StatResult {
            test: test.into(),
            label: label.into(),
            statistic,
            p_value: p,
            corrected_p: p,
            n,
            degenerate: false,
            note: None,
        }
    }

    fn degenerate(test: &str, label: &str, note: &str) -> Self {
        StatResult {
            degenerate: true,
            note: Some(note.into()),
            ..StatResult::new(test, label, 0.0, 1.0, 0)
        }
    }
}

/// Sets `corrected_p = min(1, p * comparisons)` on every result.
pub fn bonferroni(results: &mut [StatResult], comparisons: usize) {
    for r in results {
        r.corrected_p = (r.p_value * comparisons.max(1) as f64).min(1.0);
    }
}

/// Average ranks of `xs` (1-based), ties sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided exact p for the positive rank sum over doubled (integer) ranks.
fn exact_p(doubled: &[usize], w2: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(doubled.len() as i32);
    let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
    let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Paired two-sided signed-rank test on `a - b`. Zero differences are dropped.
/// The statistic is the positive rank sum.
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    mode: WilcoxonMode,
    label: &str,
) -> Result<StatResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Unpaired(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let dropped = a.len() - d.len();
    if d.is_empty() {
        return Ok(StatResult::degenerate("wilcoxon", label, "all differences are zero"));
    }
    let n = d.len();
    let ranks = average_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let exact = match mode {
        WilcoxonMode::Exact => true,
        WilcoxonMode::Normal => false,
        WilcoxonMode::Auto => n <= EXACT_LIMIT,
    };
    let p = if exact {
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        exact_p(&doubled, (w * 2.0).round() as usize)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        for g in sorted.chunk_by(|x, y| x == y) {
            let t = g.len() as f64;
            ties += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let z = (w - mean) / var.sqrt();
            let std = Normal::new(0.0, 1.0).expect("standard normal");
            2.0 * std.cdf(-z.abs())
        }
    };
    let mut r = StatResult::new(if exact { "wilcoxon-exact" } else { "wilcoxon-normal" }, label, w, p, n);
    if dropped * 5 > a.len() {
        r.note = Some(format!("{dropped} of {} pairs had zero difference and were dropped", a.len()));
    }
    Ok(r)
}

/// Paired test on completion flags. `b` counts pairs only the first method
/// solved and `c` pairs only the second solved.
pub fn mcnemar(a: &[bool], b: &[bool], mode: McNemarMode, label: &str) -> Result<StatResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Unpaired(a.len(), b.len()));
    }
    let only_a = a.iter().zip(b).filter(|(x, y)| **x && !**y).count() as u64;
    let only_b = a.iter().zip(b).filter(|(x, y)| !**x && **y).count() as u64;
    let n = only_a + only_b;
    if n == 0 {
        return Ok(StatResult::degenerate("mcnemar", label, "no discordant pairs"));
    }
    Ok(match mode {
        McNemarMode::Exact => {
            let k = only_a.min(only_b);
            let bin = Binomial::new(0.5, n).expect("valid binomial");
            StatResult::new("mcnemar-exact", label, k as f64, 2.0 * bin.cdf(k), n as usize)
        }
        McNemarMode::ChiSquare => {
            let diff = (only_a as f64 - only_b as f64).abs() - 1.0;
            let stat = diff.max(0.0).powi(2) / n as f64;
            let chi = ChiSquared::new(1.0).expect("valid chi-square");
            StatResult::new("mcnemar-chi2", label, stat, 1.0 - chi.cdf(stat), n as usize)
        }
    })
}
