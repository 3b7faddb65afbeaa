use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_string, write_text, EvaluationRun, HarnessError};
use crate::metrics::{pearson_r, MetricsError};
use crate::volume::OrganId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumePair {
    pub case_id: String,
    pub gt_cm3: f64,
    pub pred_cm3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganVolumes {
    pub organ: OrganId,
    pub pairs: Vec<VolumePair>,
    /// `None` when the correlation is undefined; see `notice`.
    pub pearson_r: Option<f64>,
    pub notice: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub algorithm: String,
    pub organs: Vec<OrganVolumes>,
}

#[derive(Serialize, Deserialize)]
struct ScatterRow {
    organ: String,
    case_id: String,
    gt_cm3: f64,
    pred_cm3: f64,
}

#[derive(Serialize, Deserialize)]
struct SummaryRow {
    organ: String,
    n_cases: usize,
    pearson_r: Option<f64>,
    notice: String,
}

impl VolumeReport {
    pub fn organ(&self, organ: OrganId) -> &OrganVolumes {
        &self.organs[organ.index()]
    }

    pub fn scatter_csv(&self) -> Result<String, HarnessError> {
        csv_string(self.organs.iter().flat_map(|o| {
            o.pairs.iter().map(move |p| ScatterRow {
                organ: o.organ.name().to_string(),
                case_id: p.case_id.clone(),
                gt_cm3: p.gt_cm3,
                pred_cm3: p.pred_cm3,
            })
        }))
    }

    pub fn summary_csv(&self) -> Result<String, HarnessError> {
        csv_string(self.organs.iter().map(|o| SummaryRow {
            organ: o.organ.name().to_string(),
            n_cases: o.pairs.len(),
            pearson_r: o.pearson_r,
            notice: o.notice.clone().unwrap_or_default(),
        }))
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Data(e.to_string()))
    }
}

/// Ground-truth against predicted organ volumes over the scored cases of a
/// run, with Pearson's r per organ. Cases where the organ is absent from the
/// ground truth are left out. Organs with fewer than two cases or constant
/// volumes get a notice instead of r.
///
/// With `out_dir`, writes `volumes_scatter.csv`, `volumes_summary.csv` and
/// `volumes.json`.
pub fn cmd_volumes(run: &EvaluationRun, out_dir: Option<&Path>) -> Result<VolumeReport, HarnessError> {
    let organs = OrganId::ALL
        .iter()
        .map(|&organ| {
            let pairs: Vec<VolumePair> = run
                .cases
                .iter()
                .filter_map(|c| {
                    let o = c.accuracy.as_ref()?.organ(organ);
                    (o.gt_volume_cm3 > 0.0).then(|| VolumePair {
                        case_id: c.case_id.clone(),
                        gt_cm3: o.gt_volume_cm3,
                        pred_cm3: o.pred_volume_cm3,
                    })
                })
                .collect();
            let (pearson_r, notice) = if pairs.len() < 2 {
                (None, Some(format!("{} case(s) with this organ; need 2", pairs.len())))
            } else {
                let gt: Vec<f64> = pairs.iter().map(|p| p.gt_cm3).collect();
                let pred: Vec<f64> = pairs.iter().map(|p| p.pred_cm3).collect();
                match pearson_r(&gt, &pred) {
                    Ok(r) => (Some(r), None),
                    Err(MetricsError::DegenerateVariance(which)) => {
                        let side = if which == "xs" { "ground-truth" } else { "predicted" };
                        (None, Some(format!("{side} volumes are constant")))
                    }
                    Err(e) => return Err(HarnessError::from(e)),
                }
            };
            if let Some(n) = &notice {
                log::warn!("{organ}: correlation skipped: {n}");
            }
            Ok(OrganVolumes {
                organ,
                pairs,
                pearson_r,
                notice,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let report = VolumeReport {
        algorithm: run.algorithm.name.clone(),
        organs,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        write_text(&dir.join("volumes_scatter.csv"), &report.scatter_csv()?)?;
        write_text(&dir.join("volumes_summary.csv"), &report.summary_csv()?)?;
        write_text(&dir.join("volumes.json"), &(report.to_json()? + "\n"))?;
    }
    Ok(report)
}
