//! Batch pipeline: manifest ingestion, profiled evaluation, ranking,
//! stability analysis and report export.
//!
//! Output layout of `evaluate` for algorithm `A`:
//!
//! ```text
//! <out>/A/run.json               EvaluationRun
//! <out>/A/cases.csv              one row per case (status and five metrics)
//! <out>/A/organs.csv             per-organ DSC, NSD and volumes
//! <out>/A/<case>/input/          staged input image
//! <out>/A/<case>/output/         algorithm output (prediction)
//! <out>/A/<case>/trace.csv       resource trace
//! <out>/A/<case>/run.log         algorithm stdout and stderr
//! ```

mod evaluate;
mod manifest;
mod rank;
mod subgroup;
mod volumes;

use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::profiler::ProfilerError;
use crate::ranking::RankingError;
use crate::stats::StatsError;
use crate::volume::VolumeError;

pub use evaluate::{cmd_evaluate, AlgorithmSpec, CaseOutcome, EvaluateOptions, EvaluationRun};
pub use manifest::{AgeGroup, CaseEntry, CaseManifest, CaseMetadata, SubgroupKey};
pub use rank::{assemble_matrix, cmd_rank, RankOptions, RankOutcome};
pub use subgroup::{cmd_subgroup, GroupSummary, SubgroupSummary};
pub use volumes::{cmd_volumes, OrganVolumes, VolumePair, VolumeReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("case sets differ between runs: {0}")]
    Alignment(String),
    #[error("launch error: {0}")]
    Launch(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 data, 4 launch.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Alignment(_) | HarnessError::Io { .. } => 3,
            HarnessError::Launch(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

impl From<VolumeError> for HarnessError {
    fn from(e: VolumeError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<MetricsError> for HarnessError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Tolerance(_) => HarnessError::Config(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<ProfilerError> for HarnessError {
    fn from(e: ProfilerError) -> Self {
        match e {
            ProfilerError::Launch { .. } => HarnessError::Launch(e.to_string()),
            ProfilerError::Config(_) => HarnessError::Config(e.to_string()),
            ProfilerError::Io { path, source } => HarnessError::Io { path, source },
            ProfilerError::Trace(_) => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<RankingError> for HarnessError {
    fn from(e: RankingError) -> Self {
        match e {
            RankingError::Io { path, source } => HarnessError::Io { path, source },
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<StatsError> for HarnessError {
    fn from(e: StatsError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

pub(crate) fn write_text(path: &std::path::Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(HarnessError::io(path))
}

pub(crate) fn csv_string<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| HarnessError::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Data(e.to_string()))
}

pub(crate) fn read_csv<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, HarnessError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| HarnessError::Data(e.to_string()))
}
