use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_string, write_text, CaseManifest, HarnessError};
use crate::metrics::{evaluate_case, CaseAccuracy, ToleranceTable};
use crate::profiler::{run_and_profile, Invocation, ResourceProvider, RunStatus, RunSummary, DEFAULT_TIMEOUT_S};
use crate::ranking::{Cell, MetricValues};
use crate::volume::{load_volume, to_canonical_ras};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub invocation: Invocation,
}

impl AlgorithmSpec {
    pub fn new(name: impl Into<String>, invocation: Invocation) -> Result<Self, HarnessError> {
        let name = name.into();
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(HarnessError::Config(format!("'{name}' is not a usable algorithm name")));
        }
        Ok(Self { name, invocation })
    }
}

/// Outcome of one case. `values` is the row entering the metric matrix,
/// with penalties already applied to stuck and failed runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub run: RunSummary,
    pub accuracy: Option<CaseAccuracy>,
    pub error: Option<String>,
    pub values: MetricValues,
}

impl CaseOutcome {
    pub fn status(&self) -> RunStatus {
        self.run.status
    }

    pub fn cell(&self) -> Cell {
        match self.run.status {
            RunStatus::Completed => Cell::Measured(self.values),
            RunStatus::Stuck => Cell::Stuck,
            RunStatus::Failed => Cell::Failed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub run_id: String,
    pub algorithm: AlgorithmSpec,
    pub label_map_version: String,
    pub timeout_s: f64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub cases: Vec<CaseOutcome>,
}

impl EvaluationRun {
    pub fn case(&self, case_id: &str) -> Option<&CaseOutcome> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn case_ids(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.case_id.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("evaluation run: {e}")))
    }

    /// Loads `run.json`, or `<dir>/run.json` when given a directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = if path.is_dir() { path.join("run.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(HarnessError::io(&file))?;
        Self::from_json(&text)
    }

    /// One row per case: status, the five metric values, exit code and error.
    pub fn cases_csv(&self) -> Result<String, HarnessError> {
        csv_string(self.cases.iter().map(|c| CaseRow {
            case_id: c.case_id.clone(),
            status: c.run.status,
            dsc: c.values.dsc,
            nsd: c.values.nsd,
            time_s: c.values.time_s,
            auc_gpu: c.values.auc_gpu,
            auc_cpu: c.values.auc_cpu,
            exit_code: c.run.exit_code,
            error: c.error.clone().unwrap_or_default(),
        }))
    }

    pub fn organs_csv(&self) -> Result<String, HarnessError> {
        csv_string(self.cases.iter().flat_map(|c| {
            c.accuracy.iter().flat_map(move |a| {
                a.organs.iter().map(move |o| OrganRow {
                    case_id: c.case_id.clone(),
                    organ: o.organ.name().to_string(),
                    dsc: o.dsc,
                    nsd: o.nsd,
                    gt_volume_cm3: o.gt_volume_cm3,
                    pred_volume_cm3: o.pred_volume_cm3,
                })
            })
        }))
    }

    /// Writes `run.json`, `cases.csv` and `organs.csv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        write_text(&dir.join("run.json"), &(self.to_json()? + "\n"))?;
        write_text(&dir.join("cases.csv"), &self.cases_csv()?)?;
        write_text(&dir.join("organs.csv"), &self.organs_csv()?)
    }
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CaseRow {
    case_id: String,
    status: RunStatus,
    dsc: f64,
    nsd: f64,
    time_s: f64,
    auc_gpu: f64,
    auc_cpu: f64,
    exit_code: Option<i32>,
    error: String,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct OrganRow {
    case_id: String,
    organ: String,
    dsc: f64,
    nsd: f64,
    gt_volume_cm3: f64,
    pred_volume_cm3: f64,
}

#[derive(Clone, Debug)]
pub struct EvaluateOptions {
    pub timeout_s: f64,
    /// Overrides the tolerance file named in the manifest.
    pub tolerances: Option<ToleranceTable>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            timeout_s: DEFAULT_TIMEOUT_S,
            tolerances: None,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn image_suffix(path: &Path) -> Result<&'static str, HarnessError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.ends_with(".nii.gz") {
        Ok(".nii.gz")
    } else if name.ends_with(".nii") {
        Ok(".nii")
    } else {
        Err(HarnessError::Config(format!("{} is not a .nii or .nii.gz file", path.display())))
    }
}

/// Places the case image at `<dir>/<case_id><suffix>`, hard-linking when
/// possible.
fn stage_input(image: &Path, dir: &Path, case_id: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let staged = dir.join(format!("{case_id}{}", image_suffix(image)?));
    if staged.exists() {
        std::fs::remove_file(&staged).map_err(HarnessError::io(&staged))?;
    }
    if std::fs::hard_link(image, &staged).is_err() {
        std::fs::copy(image, &staged).map_err(HarnessError::io(&staged))?;
    }
    Ok(staged)
}

fn score_case(pred_path: &Path, gt_path: &Path, tol: &ToleranceTable) -> Result<CaseAccuracy, HarnessError> {
    let pred = to_canonical_ras(&load_volume(pred_path)?)?;
    let gt = to_canonical_ras(&load_volume(gt_path)?)?;
    Ok(evaluate_case(&gt, &pred, tol)?)
}

/// Runs `algorithm` on every case of the manifest, one case at a time, then
/// scores the predictions in parallel.
///
/// A case whose run gets stuck, fails, or whose prediction cannot be scored
/// keeps its measurements in `run` and receives the penalty row in `values`.
/// Only a failure to start the program aborts the evaluation.
pub fn cmd_evaluate(
    manifest: &CaseManifest,
    algorithm: &AlgorithmSpec,
    out_dir: &Path,
    options: &EvaluateOptions,
    sampler: &mut dyn ResourceProvider,
) -> Result<EvaluationRun, HarnessError> {
    let tol = match (&options.tolerances, &manifest.tolerances) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => ToleranceTable::from_file(path)?,
        (None, None) => {
            return Err(HarnessError::Config(
                "no tolerance table: pass one explicitly or add a '#!tolerances:' directive to the manifest".into(),
            ))
        }
    };
    let algo_dir = out_dir.join(&algorithm.name);
    std::fs::create_dir_all(&algo_dir).map_err(HarnessError::io(&algo_dir))?;
    let started = unix_now();
    log::info!(
        "evaluating '{}' on {} cases with sampler '{}'",
        algorithm.name,
        manifest.cases.len(),
        sampler.name()
    );

    let mut runs = Vec::with_capacity(manifest.cases.len());
    for case in &manifest.cases {
        let case_dir = algo_dir.join(&case.case_id);
        let input = stage_input(&case.image, &case_dir.join("input"), &case.case_id)?;
        let output_dir = case_dir.join("output");
        if output_dir.exists() {
            std::fs::remove_dir_all(&output_dir).map_err(HarnessError::io(&output_dir))?;
        }
        let result = run_and_profile(
            &algorithm.invocation,
            &input,
            &output_dir,
            options.timeout_s,
            sampler,
            Some(&case_dir.join("run.log")),
        )?;
        write_text(&case_dir.join("trace.csv"), &result.trace.to_csv())?;
        log::info!(
            "case {}: {} in {:.3} s",
            case.case_id,
            result.status.as_str(),
            result.trace.elapsed()
        );
        let prediction = output_dir.join(format!("{}.nii.gz", case.case_id));
        runs.push((case, result.summary(), prediction));
    }

    let cases = runs
        .into_par_iter()
        .map(|(case, mut run, prediction)| {
            let mut accuracy = None;
            let mut error = None;
            match run.status {
                RunStatus::Completed => match score_case(&prediction, &case.label, &tol) {
                    Ok(a) => accuracy = Some(a),
                    Err(e) => {
                        log::warn!("case {}: prediction rejected: {e}", case.case_id);
                        run.status = RunStatus::Failed;
                        error = Some(e.to_string());
                    }
                },
                RunStatus::Stuck => error = Some(format!("timed out after {} s", options.timeout_s)),
                RunStatus::Failed => {
                    error = Some(match run.exit_code {
                        Some(0) => "no prediction written".to_string(),
                        Some(c) => format!("exit code {c}"),
                        None => "terminated by signal".to_string(),
                    })
                }
            }
            let values = match &accuracy {
                Some(a) => MetricValues {
                    dsc: a.mean_dsc(),
                    nsd: a.mean_nsd(),
                    time_s: run.time_s,
                    auc_gpu: run.auc_gpu,
                    auc_cpu: run.auc_cpu,
                },
                None => MetricValues::PENALTY,
            };
            CaseOutcome {
                case_id: case.case_id.clone(),
                run,
                accuracy,
                error,
                values,
            }
        })
        .collect();

    let run = EvaluationRun {
        run_id: format!("{}-{}", algorithm.name, (started * 1000.0) as u64),
        algorithm: algorithm.clone(),
        label_map_version: manifest.label_map_version.clone(),
        timeout_s: options.timeout_s,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        cases,
    };
    run.persist(&algo_dir)?;
    Ok(run)
}
