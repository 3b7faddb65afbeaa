use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;
use crate::ranking::{fractional_ranks, Direction};

/// Largest sample size (after dropping zero differences) for which the
/// automatic method uses the exact null distribution.
pub const EXACT_MAX_N: usize = 25;
/// Minimum number of non-zero paired differences.
pub const MIN_PAIRS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    /// Exact for n ≤ 25, normal approximation above.
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `a - b`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Number of non-zero differences used.
    pub n: usize,
    pub method: WilcoxonMethod,
}

impl WilcoxonResult {
    pub fn significant(&self) -> bool {
        self.p_value < super::SIGNIFICANCE_LEVEL
    }
}

/// Two-sided Wilcoxon signed-rank test of paired samples.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank_with(a, b, WilcoxonMethod::Auto)
}

/// Zero differences are discarded; tied absolute differences receive
/// average ranks. The exact branch counts sign assignments over doubled
/// (hence integral) ranks, so it stays exact with ties. The normal branch
/// uses the tie-corrected variance and a continuity correction of 1/2.
pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Shape(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::Data("non-finite paired difference".into()));
    }
    let nonzero: Vec<f64> = diffs.into_iter().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() && !a.is_empty() {
        return Err(StatsError::Degenerate("all paired differences are zero".into()));
    }
    let n = nonzero.len();
    if n < MIN_PAIRS {
        return Err(StatsError::TooFewSamples { need: MIN_PAIRS, got: n });
    }

    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = fractional_ranks(&abs, Direction::LowerBetter);
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let w2: usize = nonzero
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let statistic = w2 as f64 / 2.0;

    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p_value = match method {
        WilcoxonMethod::Exact => exact_p(&doubled, w2),
        _ => normal_p(n, &ranks, statistic),
    };
    Ok(WilcoxonResult {
        statistic,
        p_value,
        n,
        method,
    })
}

fn exact_p(doubled: &[usize], w2: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    // counts[s] = number of sign assignments whose positive doubled ranks sum to s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(doubled.len() as i32);
    let lower: u64 = counts[..=w2].iter().sum();
    let upper: u64 = counts[w2..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

fn normal_p(n: usize, ranks: &[f64], w: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let dev = ((w - mean).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let normal = Normal::standard();
    let p = 2.0 * normal.sf(z);
    p.clamp(f64::MIN_POSITIVE, 1.0)
}
