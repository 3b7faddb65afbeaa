//! Ranking stability and paired comparisons.

mod bootstrap;
mod kendall;
mod wilcoxon;

use thiserror::Error;

use crate::ranking::RankingError;

pub use bootstrap::{
    bootstrap_rankings, bootstrap_rankings_with, BootstrapReport, CaseResampler, FullCaseSet, MetricTau,
    RankDistribution, SeededBootstrap, TauSummary, DEFAULT_N_BOOT, DEFAULT_SEED,
};
pub use kendall::kendall_tau;
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MIN_PAIRS,
};

/// p-values below this are reported as significant.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("need at least {need} non-zero paired differences, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid value: {0}")]
    Data(String),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

/// Sample quantile with linear interpolation between order statistics
/// (the `(n - 1) p` rule). `values` need not be sorted. Returns `None` when
/// empty.
pub fn quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}
