//! Rank-then-aggregate leaderboards.
//!
//! Each case ranks all algorithms separately on five metrics: mean DSC and
//! mean NSD over the 13 organs (higher is better), running time, GPU AUC and
//! CPU AUC (lower is better). Ties share the average of the positions they
//! span. An algorithm's aggregate score is its weighted mean rank,
//!
//! ```text
//! score = Σ_c Σ_m w_m · rank(c, m) / (C · Σ_m w_m),   w = (1, 1, 1, 0.5, 0.5)
//! ```
//!
//! and the final rank orders scores ascending, again with fractional ties.

mod io;

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiler::{STUCK_AUC_CPU, STUCK_AUC_GPU, STUCK_TIME_S};

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("invalid data: {0}")]
    Data(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dsc,
    Nsd,
    TimeS,
    AucGpu,
    AucCpu,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Dsc, Metric::Nsd, Metric::TimeS, Metric::AucGpu, Metric::AucCpu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsc => "dsc",
            Metric::Nsd => "nsd",
            Metric::TimeS => "time_s",
            Metric::AucGpu => "auc_gpu",
            Metric::AucCpu => "auc_cpu",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn direction(self) -> Direction {
        match self {
            Metric::Dsc | Metric::Nsd => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn weight(self) -> f64 {
        WEIGHTS[self.index()]
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Metric weights in [`Metric::ALL`] order.
pub const WEIGHTS: [f64; 5] = [1.0, 1.0, 1.0, 0.5, 0.5];

/// The five per-case values of one algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub dsc: f64,
    pub nsd: f64,
    pub time_s: f64,
    pub auc_gpu: f64,
    pub auc_cpu: f64,
}

impl MetricValues {
    pub const PENALTY: MetricValues = MetricValues {
        dsc: 0.0,
        nsd: 0.0,
        time_s: STUCK_TIME_S,
        auc_gpu: STUCK_AUC_GPU,
        auc_cpu: STUCK_AUC_CPU,
    };

    pub fn from_array([dsc, nsd, time_s, auc_gpu, auc_cpu]: [f64; 5]) -> Self {
        Self {
            dsc,
            nsd,
            time_s,
            auc_gpu,
            auc_cpu,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.dsc, self.nsd, self.time_s, self.auc_gpu, self.auc_cpu]
    }

    pub fn get(&self, metric: Metric) -> f64 {
        self.to_array()[metric.index()]
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        let mut a = self.to_array();
        a[metric.index()] = value;
        *self = Self::from_array(a);
    }

    fn validate(&self) -> Result<(), String> {
        for m in Metric::ALL {
            let v = self.get(m);
            if v.is_nan() {
                return Err(format!("{m} is NaN"));
            }
            let ok = match m {
                Metric::Dsc | Metric::Nsd => (0.0..=1.0).contains(&v),
                _ => v >= 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(format!("{m} = {v} is out of range"));
            }
        }
        Ok(())
    }
}

/// Values substituted for stuck, failed or missing cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyPolicy {
    pub values: MetricValues,
}

impl Default for PenaltyPolicy {
    fn default() -> Self {
        Self {
            values: MetricValues::PENALTY,
        }
    }
}

fn check_unique(kind: &str, ids: &[String]) -> Result<(), RankingError> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(RankingError::Data(format!("empty {kind} id")));
        }
        if !seen.insert(id.as_str()) {
            return Err(RankingError::Data(format!("duplicate {kind} id '{id}'")));
        }
    }
    Ok(())
}

/// Dense algorithms × cases table of [`MetricValues`].
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix {
    algorithms: Vec<String>,
    cases: Vec<String>,
    // algorithm-major
    values: Vec<MetricValues>,
}

impl MetricMatrix {
    /// `values[a * cases.len() + c]` belongs to algorithm `a` on case `c`.
    pub fn new(
        algorithms: Vec<String>,
        cases: Vec<String>,
        values: Vec<MetricValues>,
    ) -> Result<Self, RankingError> {
        check_unique("algorithm", &algorithms)?;
        check_unique("case", &cases)?;
        if values.len() != algorithms.len() * cases.len() {
            return Err(RankingError::Shape(format!(
                "{} values for {} algorithms x {} cases",
                values.len(),
                algorithms.len(),
                cases.len()
            )));
        }
        if algorithms.is_empty() || cases.is_empty() {
            return Err(RankingError::Shape("matrix needs at least one algorithm and one case".into()));
        }
        for (i, v) in values.iter().enumerate() {
            v.validate().map_err(|msg| {
                RankingError::Data(format!(
                    "algorithm '{}', case '{}': {msg}",
                    algorithms[i / cases.len()],
                    cases[i % cases.len()]
                ))
            })?;
        }
        Ok(Self {
            algorithms,
            cases,
            values,
        })
    }

    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn n_algorithms(&self) -> usize {
        self.algorithms.len()
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn value(&self, algorithm: usize, case: usize) -> &MetricValues {
        &self.values[algorithm * self.cases.len() + case]
    }

    pub fn get(&self, algorithm: &str, case: &str) -> Option<&MetricValues> {
        let a = self.algorithms.iter().position(|x| x == algorithm)?;
        let c = self.cases.iter().position(|x| x == case)?;
        Some(self.value(a, c))
    }

    /// Applies `f` to every value of one metric.
    pub fn map_metric(&self, metric: Metric, f: impl Fn(f64) -> f64) -> Result<Self, RankingError> {
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut v = *v;
                v.set(metric, f(v.get(metric)));
                v
            })
            .collect();
        Self::new(self.algorithms.clone(), self.cases.clone(), values)
    }

    /// The same matrix with algorithm rows in a different order.
    pub fn reorder_algorithms(&self, order: &[usize]) -> Result<Self, RankingError> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.n_algorithms()).collect::<Vec<_>>() {
            return Err(RankingError::Shape("not a permutation of the algorithms".into()));
        }
        let c = self.n_cases();
        let algorithms = order.iter().map(|&a| self.algorithms[a].clone()).collect();
        let values = order
            .iter()
            .flat_map(|&a| self.values[a * c..(a + 1) * c].iter().copied())
            .collect();
        Self::new(algorithms, self.cases.clone(), values)
    }
}

/// State of one (algorithm, case) cell before penalties are applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Measured(MetricValues),
    Stuck,
    Failed,
    Missing,
}

/// A metric matrix that may still contain stuck, failed or missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMetricMatrix {
    algorithms: Vec<String>,
    cases: Vec<String>,
    cells: Vec<Cell>,
}

impl PartialMetricMatrix {
    /// All cells start as [`Cell::Missing`].
    pub fn new(algorithms: Vec<String>, cases: Vec<String>) -> Result<Self, RankingError> {
        check_unique("algorithm", &algorithms)?;
        check_unique("case", &cases)?;
        let cells = vec![Cell::Missing; algorithms.len() * cases.len()];
        Ok(Self {
            algorithms,
            cases,
            cells,
        })
    }

    pub fn set(&mut self, algorithm: &str, case: &str, cell: Cell) -> Result<(), RankingError> {
        let a = self
            .algorithms
            .iter()
            .position(|x| x == algorithm)
            .ok_or_else(|| RankingError::Data(format!("unknown algorithm '{algorithm}'")))?;
        let c = self
            .cases
            .iter()
            .position(|x| x == case)
            .ok_or_else(|| RankingError::Data(format!("unknown case '{case}'")))?;
        self.cells[a * self.cases.len() + c] = cell;
        Ok(())
    }

    pub fn cell(&self, algorithm: usize, case: usize) -> Cell {
        self.cells[algorithm * self.cases.len() + case]
    }
}

/// Replaces every non-measured cell with the penalty values.
pub fn fill_penalties(partial: &PartialMetricMatrix, penalty: &PenaltyPolicy) -> Result<MetricMatrix, RankingError> {
    let values = partial
        .cells
        .iter()
        .map(|c| match c {
            Cell::Measured(v) => *v,
            Cell::Stuck | Cell::Failed | Cell::Missing => penalty.values,
        })
        .collect();
    MetricMatrix::new(partial.algorithms.clone(), partial.cases.clone(), values)
}

/// Fractional ranks (1-based) of `values`; equal values share the mean of
/// the positions they occupy.
pub fn fractional_ranks(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        let o = values[i].total_cmp(&values[j]);
        match direction {
            Direction::LowerBetter => o,
            Direction::HigherBetter => o.reverse(),
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Per-case, per-metric ranks of every algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTable {
    algorithms: Vec<String>,
    cases: Vec<String>,
    // algorithm-major, Metric::ALL order
    ranks: Vec<[f64; 5]>,
}

impl RankTable {
    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn cases(&self) -> &[String] {
        &self.cases
    }

    pub fn rank(&self, algorithm: usize, case: usize, metric: Metric) -> f64 {
        self.ranks[algorithm * self.cases.len() + case][metric.index()]
    }

    /// Weighted mean rank of every algorithm over the given case indices
    /// (repeats allowed).
    ///
    /// Ranks are multiples of 1/2 and weights multiples of 1/2, so the sums
    /// are exact and the result does not depend on the order of `cases`.
    pub fn scores_for_cases(&self, cases: &[usize], weights: &[f64; 5]) -> Vec<f64> {
        let c = self.cases.len();
        let wsum: f64 = weights.iter().sum();
        (0..self.algorithms.len())
            .map(|a| {
                let total: f64 = cases
                    .iter()
                    .map(|&k| {
                        let r = &self.ranks[a * c + k];
                        r.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>()
                    })
                    .sum();
                total / (cases.len() as f64 * wsum)
            })
            .collect()
    }

    pub fn scores(&self, weights: &[f64; 5]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.cases.len()).collect();
        self.scores_for_cases(&all, weights)
    }
}

/// Ranks the algorithms within every case on every metric.
pub fn per_case_metric_ranks(m: &MetricMatrix) -> Result<RankTable, RankingError> {
    let (na, nc) = (m.n_algorithms(), m.n_cases());
    for a in 0..na {
        for c in 0..nc {
            m.value(a, c).validate().map_err(|msg| {
                RankingError::Data(format!("algorithm '{}', case '{}': {msg}", m.algorithms[a], m.cases[c]))
            })?;
        }
    }
    let per_case: Vec<Vec<[f64; 5]>> = (0..nc)
        .into_par_iter()
        .map(|c| {
            let mut out = vec![[0.0; 5]; na];
            for metric in Metric::ALL {
                let column: Vec<f64> = (0..na).map(|a| m.value(a, c).get(metric)).collect();
                for (a, r) in fractional_ranks(&column, metric.direction()).into_iter().enumerate() {
                    out[a][metric.index()] = r;
                }
            }
            out
        })
        .collect();
    let mut ranks = vec![[0.0; 5]; na * nc];
    for (c, rows) in per_case.into_iter().enumerate() {
        for (a, r) in rows.into_iter().enumerate() {
            ranks[a * nc + c] = r;
        }
    }
    Ok(RankTable {
        algorithms: m.algorithms.clone(),
        cases: m.cases.clone(),
        ranks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub algorithm: String,
    pub aggregate_score: f64,
    pub final_rank: f64,
}

/// Entries sorted by final rank, then algorithm name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
}

impl Leaderboard {
    /// Builds a leaderboard from aggregate scores (lower is better).
    pub fn from_scores(algorithms: &[String], scores: &[f64]) -> Self {
        let ranks = fractional_ranks(scores, Direction::LowerBetter);
        let mut entries: Vec<LeaderboardEntry> = algorithms
            .iter()
            .zip(scores.iter().zip(ranks))
            .map(|(name, (&s, r))| LeaderboardEntry {
                algorithm: name.clone(),
                aggregate_score: s,
                final_rank: r,
            })
            .collect();
        entries.sort_by(|x, y| {
            x.final_rank
                .total_cmp(&y.final_rank)
                .then_with(|| x.algorithm.cmp(&y.algorithm))
        });
        Self { entries }
    }

    pub fn get(&self, algorithm: &str) -> Option<&LeaderboardEntry> {
        self.entries.iter().find(|e| e.algorithm == algorithm)
    }

    pub fn final_rank(&self, algorithm: &str) -> Option<f64> {
        self.get(algorithm).map(|e| e.final_rank)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weighted mean rank per algorithm and the resulting final ranks.
pub fn aggregate_rank(rt: &RankTable) -> Leaderboard {
    Leaderboard::from_scores(&rt.algorithms, &rt.scores(&WEIGHTS))
}

/// Full pipeline from a dense matrix to the leaderboard.
pub fn leaderboard(m: &MetricMatrix) -> Result<Leaderboard, RankingError> {
    Ok(aggregate_rank(&per_case_metric_ranks(m)?))
}
