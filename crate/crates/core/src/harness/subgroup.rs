use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_string, read_csv, write_text, CaseManifest, EvaluationRun, HarnessError, SubgroupKey};
use crate::stats::quantile;

/// Median and quartiles of per-case mean DSC and NSD within one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub n_cases: usize,
    pub dsc_median: f64,
    pub dsc_q1: f64,
    pub dsc_q3: f64,
    pub dsc_iqr: f64,
    pub nsd_median: f64,
    pub nsd_q1: f64,
    pub nsd_q3: f64,
    pub nsd_iqr: f64,
}

impl GroupSummary {
    fn of(group: String, dsc: &[f64], nsd: &[f64]) -> Self {
        let q = |v: &[f64], p| quantile(v, p).unwrap_or(f64::NAN);
        let (d1, d3, n1, n3) = (q(dsc, 0.25), q(dsc, 0.75), q(nsd, 0.25), q(nsd, 0.75));
        Self {
            group,
            n_cases: dsc.len(),
            dsc_median: q(dsc, 0.5),
            dsc_q1: d1,
            dsc_q3: d3,
            dsc_iqr: d3 - d1,
            nsd_median: q(nsd, 0.5),
            nsd_q1: n1,
            nsd_q3: n3,
            nsd_iqr: n3 - n1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub algorithm: String,
    pub key: String,
    /// Groups in lexical order.
    pub groups: Vec<GroupSummary>,
    /// Cases without a value for the key.
    pub excluded_cases: Vec<String>,
}

impl SubgroupSummary {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        csv_string(&self.groups)
    }

    /// Reads back the rows written by [`SubgroupSummary::to_csv`].
    pub fn groups_from_csv(text: &str) -> Result<Vec<GroupSummary>, HarnessError> {
        read_csv(text)
    }

    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// Per-group summaries of the per-case mean DSC and NSD (penalised cases
/// count with their penalty values). Written to
/// `<out_dir>/subgroup_<key>.csv` when `out_dir` is given.
pub fn cmd_subgroup(
    run: &EvaluationRun,
    manifest: &CaseManifest,
    key: SubgroupKey,
    out_dir: Option<&Path>,
) -> Result<SubgroupSummary, HarnessError> {
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut excluded = Vec::new();
    for outcome in &run.cases {
        let entry = manifest.case(&outcome.case_id).ok_or_else(|| {
            HarnessError::Data(format!("case '{}' of the run is not in the manifest", outcome.case_id))
        })?;
        match key.value_of(&entry.metadata) {
            Some(g) => {
                let slot = groups.entry(g).or_default();
                slot.0.push(outcome.values.dsc);
                slot.1.push(outcome.values.nsd);
            }
            None => excluded.push(outcome.case_id.clone()),
        }
    }
    if groups.is_empty() {
        return Err(HarnessError::Config(format!("no case has a value for '{key}'")));
    }
    if !excluded.is_empty() {
        log::warn!("{} cases without '{key}' excluded", excluded.len());
    }
    let summary = SubgroupSummary {
        algorithm: run.algorithm.name.clone(),
        key: key.name().to_string(),
        groups: groups
            .into_iter()
            .map(|(g, (d, n))| GroupSummary::of(g, &d, &n))
            .collect(),
        excluded_cases: excluded,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        write_text(&dir.join(format!("subgroup_{}.csv", key.name())), &summary.to_csv()?)?;
    }
    Ok(summary)
}
