//! Case-resampling bootstrap of the leaderboard.
//!
//! Iteration `i` draws its case indices from ChaCha8 keyed by the seed (as
//! eight little-endian bytes followed by 24 zero bytes) on stream `i`. Each
//! index is `next_u64() % C`, redrawn while the raw value falls in the
//! incomplete final block of size `2^64 mod C`. Iterations are independent,
//! so parallel and serial execution give identical reports.

use std::fmt::Write as _;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kendall_tau, median, StatsError};
use crate::ranking::{fractional_ranks, per_case_metric_ranks, Direction, Metric, MetricMatrix, WEIGHTS};

pub const DEFAULT_N_BOOT: usize = 1000;
pub const DEFAULT_SEED: u64 = 20220901;

/// Chooses the case indices of one bootstrap iteration.
pub trait CaseResampler: Sync {
    fn resample(&self, n_cases: usize, iteration: usize) -> Vec<usize>;

    /// Generator name and seed recorded in the report.
    fn describe(&self) -> (String, u64) {
        ("custom".into(), 0)
    }
}

/// Uniform resampling with replacement from a seeded ChaCha8 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeededBootstrap {
    pub seed: u64,
}

impl SeededBootstrap {
    pub fn rng(&self, iteration: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(iteration as u64);
        rng
    }
}

fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let rejection_zone = u64::MAX - (u64::MAX % n + 1) % n;
    loop {
        let x = rng.next_u64();
        if x <= rejection_zone {
            return x % n;
        }
    }
}

impl CaseResampler for SeededBootstrap {
    fn resample(&self, n_cases: usize, iteration: usize) -> Vec<usize> {
        let mut rng = self.rng(iteration);
        (0..n_cases).map(|_| bounded(&mut rng, n_cases as u64) as usize).collect()
    }

    fn describe(&self) -> (String, u64) {
        ("chacha8".into(), self.seed)
    }
}

/// Returns every case once; useful to check that the bootstrap machinery
/// reproduces the full-data leaderboard.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullCaseSet;

impl CaseResampler for FullCaseSet {
    fn resample(&self, n_cases: usize, _iteration: usize) -> Vec<usize> {
        (0..n_cases).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl TauSummary {
    fn of(values: &[f64]) -> Self {
        Self {
            median: median(values).unwrap_or(f64::NAN),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// τ samples for the leaderboard built from a single metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTau {
    pub metric: Metric,
    pub summary: TauSummary,
    pub tau: Vec<f64>,
}

/// Bootstrap final ranks of one algorithm, one per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    pub algorithm: String,
    pub full_rank: f64,
    pub ranks: Vec<f64>,
}

impl RankDistribution {
    /// `(rank, count)` pairs in ascending rank order.
    pub fn histogram(&self) -> Vec<(f64, usize)> {
        let mut sorted = self.ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in sorted {
            match out.last_mut() {
                Some((v, c)) if *v == r => *c += 1,
                _ => out.push((r, 1)),
            }
        }
        out
    }

    pub fn fraction_at(&self, rank: f64) -> f64 {
        self.ranks.iter().filter(|&&r| r == rank).count() as f64 / self.ranks.len() as f64
    }
}

/// τ between each bootstrap leaderboard and the full-data one, and every
/// algorithm's bootstrap rank.
///
/// `overall_tau` uses the weighted leaderboard; `per_metric_tau` repeats the
/// comparison for leaderboards built from each metric alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub n_boot: usize,
    pub rng_seed: u64,
    pub rng: String,
    pub n_cases: usize,
    pub overall_summary: TauSummary,
    pub overall_tau: Vec<f64>,
    pub per_metric_tau: Vec<MetricTau>,
    pub rank_distribution: Vec<RankDistribution>,
}

impl BootstrapReport {
    pub fn distribution(&self, algorithm: &str) -> Option<&RankDistribution> {
        self.rank_distribution.iter().find(|d| d.algorithm == algorithm)
    }

    pub fn to_json(&self) -> Result<String, StatsError> {
        serde_json::to_string_pretty(self).map_err(|e| StatsError::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, StatsError> {
        serde_json::from_str(text).map_err(|e| StatsError::Data(e.to_string()))
    }

    /// Columns `algorithm,rank,count`, one row per observed rank.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("algorithm,rank,count\n");
        for d in &self.rank_distribution {
            for (rank, count) in d.histogram() {
                let _ = writeln!(out, "{},{rank},{count}", csv_field(&d.algorithm));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Bootstrap with [`SeededBootstrap`].
pub fn bootstrap_rankings(m: &MetricMatrix, n_boot: usize, seed: u64) -> Result<BootstrapReport, StatsError> {
    bootstrap_rankings_with(m, n_boot, &SeededBootstrap { seed })
}

/// Bootstrap with an arbitrary resampler.
pub fn bootstrap_rankings_with(
    m: &MetricMatrix,
    n_boot: usize,
    resampler: &dyn CaseResampler,
) -> Result<BootstrapReport, StatsError> {
    if m.n_algorithms() < 2 {
        return Err(StatsError::Degenerate(format!(
            "bootstrap needs at least 2 algorithms, got {}",
            m.n_algorithms()
        )));
    }
    if n_boot == 0 {
        return Err(StatsError::Degenerate("n_boot must be at least 1".into()));
    }
    let rt = per_case_metric_ranks(m)?;
    let n_cases = m.n_cases();

    // weighted leaderboard first, then one leaderboard per metric
    let mut weightings = vec![WEIGHTS];
    for metric in Metric::ALL {
        let mut w = [0.0; 5];
        w[metric.index()] = 1.0;
        weightings.push(w);
    }
    let final_ranks = |cases: &[usize], w: &[f64; 5]| {
        fractional_ranks(&rt.scores_for_cases(cases, w), Direction::LowerBetter)
    };
    let all: Vec<usize> = (0..n_cases).collect();
    let full: Vec<Vec<f64>> = weightings.iter().map(|w| final_ranks(&all, w)).collect();

    // per iteration: (tau per weighting, overall ranks)
    let iterations: Vec<(Vec<f64>, Vec<f64>)> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let cases = resampler.resample(n_cases, i);
            let mut taus = Vec::with_capacity(weightings.len());
            let mut overall = Vec::new();
            for (k, w) in weightings.iter().enumerate() {
                let ranks = final_ranks(&cases, w);
                let tau = kendall_tau(&full[k], &ranks)?;
                taus.push(tau);
                if k == 0 {
                    overall = ranks;
                }
            }
            Ok((taus, overall))
        })
        .collect::<Result<_, StatsError>>()?;

    let tau_column = |k: usize| -> Vec<f64> { iterations.iter().map(|(t, _)| t[k]).collect() };
    let overall_tau = tau_column(0);
    let per_metric_tau = Metric::ALL
        .iter()
        .enumerate()
        .map(|(j, &metric)| {
            let tau = tau_column(j + 1);
            MetricTau {
                metric,
                summary: TauSummary::of(&tau),
                tau,
            }
        })
        .collect();
    let rank_distribution = m
        .algorithms()
        .iter()
        .enumerate()
        .map(|(a, name)| RankDistribution {
            algorithm: name.clone(),
            full_rank: full[0][a],
            ranks: iterations.iter().map(|(_, r)| r[a]).collect(),
        })
        .collect();

    let (rng, rng_seed) = resampler.describe();
    Ok(BootstrapReport {
        n_boot,
        rng_seed,
        rng,
        n_cases,
        overall_summary: TauSummary::of(&overall_tau),
        overall_tau,
        per_metric_tau,
        rank_distribution,
    })
}
