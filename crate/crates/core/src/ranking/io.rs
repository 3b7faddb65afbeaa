//! CSV and JSON exchange formats for metric matrices and leaderboards.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Leaderboard, LeaderboardEntry, MetricMatrix, MetricValues, RankingError};

#[derive(Serialize, Deserialize)]
struct MatrixRow {
    algorithm: String,
    case: String,
    dsc: f64,
    nsd: f64,
    time_s: f64,
    auc_gpu: f64,
    auc_cpu: f64,
}

fn csv_err(e: csv::Error) -> RankingError {
    RankingError::Parse(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), RankingError> {
    std::fs::write(path, text).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, RankingError> {
    std::fs::read_to_string(path).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, RankingError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| RankingError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RankingError::Parse(e.to_string()))
}

impl MetricMatrix {
    /// One row per (algorithm, case), algorithm-major.
    pub fn to_csv(&self) -> Result<String, RankingError> {
        let rows = self.algorithms.iter().enumerate().flat_map(|(a, name)| {
            self.cases.iter().enumerate().map(move |(c, case)| {
                let v = self.value(a, c);
                MatrixRow {
                    algorithm: name.clone(),
                    case: case.clone(),
                    dsc: v.dsc,
                    nsd: v.nsd,
                    time_s: v.time_s,
                    auc_gpu: v.auc_gpu,
                    auc_cpu: v.auc_cpu,
                }
            })
        });
        to_csv_string(rows)
    }

    /// Algorithms and cases are taken in order of first appearance. Every
    /// (algorithm, case) pair must appear exactly once.
    pub fn from_csv(text: &str) -> Result<Self, RankingError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut algorithms: Vec<String> = Vec::new();
        let mut cases: Vec<String> = Vec::new();
        let mut a_index: HashMap<String, usize> = HashMap::new();
        let mut c_index: HashMap<String, usize> = HashMap::new();
        let mut cells: HashMap<(usize, usize), MetricValues> = HashMap::new();
        for (line, row) in rdr.deserialize::<MatrixRow>().enumerate() {
            let row = row.map_err(csv_err)?;
            let a = *a_index.entry(row.algorithm.clone()).or_insert_with(|| {
                algorithms.push(row.algorithm.clone());
                algorithms.len() - 1
            });
            let c = *c_index.entry(row.case.clone()).or_insert_with(|| {
                cases.push(row.case.clone());
                cases.len() - 1
            });
            let v = MetricValues {
                dsc: row.dsc,
                nsd: row.nsd,
                time_s: row.time_s,
                auc_gpu: row.auc_gpu,
                auc_cpu: row.auc_cpu,
            };
            if cells.insert((a, c), v).is_some() {
                return Err(RankingError::Data(format!(
                    "row {}: duplicate cell ({}, {})",
                    line + 2,
                    row.algorithm,
                    row.case
                )));
            }
        }
        let mut values = Vec::with_capacity(algorithms.len() * cases.len());
        for (a, name) in algorithms.iter().enumerate() {
            for (c, case) in cases.iter().enumerate() {
                let v = cells
                    .get(&(a, c))
                    .ok_or_else(|| RankingError::Data(format!("missing cell ({name}, {case})")))?;
                values.push(*v);
            }
        }
        MetricMatrix::new(algorithms, cases, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), RankingError> {
        write_file(path, &self.to_csv()?)
    }

    pub fn read_csv(path: &Path) -> Result<Self, RankingError> {
        Self::from_csv(&read_file(path)?)
    }
}

impl Leaderboard {
    pub fn to_csv(&self) -> Result<String, RankingError> {
        to_csv_string(&self.entries)
    }

    pub fn from_csv(text: &str) -> Result<Self, RankingError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let entries = rdr
            .deserialize::<LeaderboardEntry>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> Result<String, RankingError> {
        serde_json::to_string_pretty(self).map_err(|e| RankingError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, RankingError> {
        serde_json::from_str(text).map_err(|e| RankingError::Parse(e.to_string()))
    }

    pub fn write_files(&self, csv_path: &Path, json_path: &Path) -> Result<(), RankingError> {
        write_file(csv_path, &self.to_csv()?)?;
        write_file(json_path, &(self.to_json()? + "\n"))
    }
}
