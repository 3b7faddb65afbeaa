use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use super::{write_text, EvaluationRun, HarnessError};
use crate::ranking::{fill_penalties, leaderboard, Leaderboard, MetricMatrix, PartialMetricMatrix, PenaltyPolicy};
use crate::stats::{bootstrap_rankings, BootstrapReport, DEFAULT_N_BOOT, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankOptions {
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            n_boot: DEFAULT_N_BOOT,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankOutcome {
    pub matrix: MetricMatrix,
    pub leaderboard: Leaderboard,
    /// `None` when fewer than two algorithms were ranked.
    pub bootstrap: Option<BootstrapReport>,
}

/// Dense metric matrix of several runs over the same case set. Cases follow
/// the order of the first run.
pub fn assemble_matrix(runs: &[EvaluationRun]) -> Result<MetricMatrix, HarnessError> {
    let first = runs
        .first()
        .ok_or_else(|| HarnessError::Config("no evaluation runs given".into()))?;
    let cases = first.case_ids();
    let reference: BTreeSet<&str> = cases.iter().map(String::as_str).collect();
    let mut names = HashSet::new();
    for run in runs {
        if !names.insert(run.algorithm.name.as_str()) {
            return Err(HarnessError::Data(format!(
                "algorithm '{}' appears in more than one run",
                run.algorithm.name
            )));
        }
        let these: BTreeSet<&str> = run.cases.iter().map(|c| c.case_id.as_str()).collect();
        if these.len() != run.cases.len() {
            return Err(HarnessError::Data(format!("run '{}' repeats a case", run.run_id)));
        }
        if these != reference {
            let missing: Vec<&str> = reference.difference(&these).copied().collect();
            let extra: Vec<&str> = these.difference(&reference).copied().collect();
            return Err(HarnessError::Alignment(format!(
                "'{}' vs '{}': missing [{}], extra [{}]",
                run.algorithm.name,
                first.algorithm.name,
                missing.join(", "),
                extra.join(", ")
            )));
        }
    }
    let algorithms = runs.iter().map(|r| r.algorithm.name.clone()).collect();
    let mut partial = PartialMetricMatrix::new(algorithms, cases)?;
    for run in runs {
        for c in &run.cases {
            partial.set(&run.algorithm.name, &c.case_id, c.cell())?;
        }
    }
    Ok(fill_penalties(&partial, &PenaltyPolicy::default())?)
}

/// Ranks the runs and writes `metric_matrix.csv`, `leaderboard.csv`,
/// `leaderboard.json` and, with two or more algorithms, `stability.json`
/// and `bootstrap_ranks.csv` into `out_dir`.
pub fn cmd_rank(runs: &[EvaluationRun], out_dir: &Path, options: &RankOptions) -> Result<RankOutcome, HarnessError> {
    if options.n_boot == 0 {
        return Err(HarnessError::Config("--n-boot must be at least 1".into()));
    }
    let matrix = assemble_matrix(runs)?;
    let board = leaderboard(&matrix)?;
    let bootstrap = if matrix.n_algorithms() >= 2 {
        Some(bootstrap_rankings(&matrix, options.n_boot, options.seed)?)
    } else {
        log::warn!("only one algorithm: bootstrap stability analysis skipped");
        None
    };

    std::fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    write_text(&out_dir.join("metric_matrix.csv"), &matrix.to_csv()?)?;
    board.write_files(&out_dir.join("leaderboard.csv"), &out_dir.join("leaderboard.json"))?;
    if let Some(report) = &bootstrap {
        write_text(&out_dir.join("stability.json"), &(report.to_json()? + "\n"))?;
        write_text(&out_dir.join("bootstrap_ranks.csv"), &report.histogram_csv())?;
    }
    Ok(RankOutcome {
        matrix,
        leaderboard: board,
        bootstrap,
    })
}
