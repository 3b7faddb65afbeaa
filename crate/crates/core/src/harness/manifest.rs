//! Case manifests.
//!
//! A manifest is a CSV file with a header row and one case per line:
//!
//! ```text
//! #!tolerances: tolerances.txt
//! #!label_map_version: abdomen13-v1
//! case_id,image,label,sex,age_group,manufacturer,region
//! case_001,images/case_001.nii.gz,labels/case_001.nii.gz,F,51-70,GE,Asia
//! ```
//!
//! `case_id`, `image` and `label` are required; the metadata columns are
//! optional and may be left empty. Paths are relative to the manifest file.
//! Lines starting with `#!` are directives; other `#` lines are comments.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::volume::LABEL_MAP_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "0-50")]
    UpTo50,
    #[serde(rename = "51-70")]
    From51To70,
    #[serde(rename = "70+")]
    Over70,
}

impl AgeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::UpTo50 => "0-50",
            AgeGroup::From51To70 => "51-70",
            AgeGroup::Over70 => "70+",
        }
    }
}

impl FromStr for AgeGroup {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0-50" => Ok(AgeGroup::UpTo50),
            "51-70" => Ok(AgeGroup::From51To70),
            "70+" => Ok(AgeGroup::Over70),
            _ => Err(HarnessError::Config(format!(
                "age group '{s}' is not one of 0-50, 51-70, 70+"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseMetadata {
    pub sex: Option<String>,
    pub age_group: Option<AgeGroup>,
    pub manufacturer: Option<String>,
    pub region: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubgroupKey {
    Sex,
    AgeGroup,
    Manufacturer,
    Region,
}

impl SubgroupKey {
    pub fn name(self) -> &'static str {
        match self {
            SubgroupKey::Sex => "sex",
            SubgroupKey::AgeGroup => "age_group",
            SubgroupKey::Manufacturer => "manufacturer",
            SubgroupKey::Region => "region",
        }
    }

    pub fn value_of(self, meta: &CaseMetadata) -> Option<String> {
        match self {
            SubgroupKey::Sex => meta.sex.clone(),
            SubgroupKey::AgeGroup => meta.age_group.map(|g| g.as_str().to_string()),
            SubgroupKey::Manufacturer => meta.manufacturer.clone(),
            SubgroupKey::Region => meta.region.clone(),
        }
    }
}

impl fmt::Display for SubgroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubgroupKey {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sex" => Ok(SubgroupKey::Sex),
            "age_group" => Ok(SubgroupKey::AgeGroup),
            "manufacturer" => Ok(SubgroupKey::Manufacturer),
            "region" => Ok(SubgroupKey::Region),
            _ => Err(HarnessError::Config(format!(
                "unknown subgroup key '{s}' (expected sex, age_group, manufacturer or region)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    /// Absolute, or relative to the working directory.
    pub image: PathBuf,
    pub label: PathBuf,
    pub metadata: CaseMetadata,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseManifest {
    pub path: PathBuf,
    pub cases: Vec<CaseEntry>,
    pub tolerances: Option<PathBuf>,
    pub label_map_version: String,
}

#[derive(Deserialize)]
struct Row {
    case_id: String,
    image: String,
    label: String,
    #[serde(default)]
    sex: Option<String>,
    #[serde(default)]
    age_group: Option<String>,
    #[serde(default)]
    manufacturer: Option<String>,
    #[serde(default)]
    region: Option<String>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

impl CaseManifest {
    /// Parses manifest text; relative paths resolve against `base_dir`.
    /// File existence is not checked here.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut tolerances = None;
        let mut version = None;
        let mut body = String::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(directive) = trimmed.strip_prefix("#!") {
                let (key, value) = directive.split_once(':').ok_or_else(|| {
                    HarnessError::Config(format!("manifest line {}: malformed directive '{trimmed}'", i + 1))
                })?;
                let value = value.trim();
                match key.trim() {
                    "tolerances" => tolerances = Some(base_dir.join(value)),
                    "label_map_version" => version = Some(value.to_string()),
                    other => {
                        return Err(HarnessError::Config(format!(
                            "manifest line {}: unknown directive '{other}'",
                            i + 1
                        )))
                    }
                }
            } else if trimmed.starts_with('#') {
                body.push('\n');
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let label_map_version = version.unwrap_or_else(|| LABEL_MAP_VERSION.to_string());
        if label_map_version != LABEL_MAP_VERSION {
            return Err(HarnessError::Config(format!(
                "manifest uses label map '{label_map_version}', this build implements '{LABEL_MAP_VERSION}'"
            )));
        }

        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(body.as_bytes());
        let mut cases = Vec::new();
        let mut seen = HashSet::new();
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| HarnessError::Config(format!("manifest: {e}")))?;
            if row.case_id.is_empty() || row.image.is_empty() || row.label.is_empty() {
                return Err(HarnessError::Config(format!(
                    "manifest: case '{}' has an empty required field",
                    row.case_id
                )));
            }
            if row.case_id.contains(['/', '\\']) || row.case_id == "." || row.case_id == ".." {
                return Err(HarnessError::Config(format!(
                    "manifest: case id '{}' cannot be used as a file name",
                    row.case_id
                )));
            }
            if !seen.insert(row.case_id.clone()) {
                return Err(HarnessError::Config(format!("manifest: duplicate case id '{}'", row.case_id)));
            }
            let age_group = non_empty(row.age_group).map(|s| s.parse()).transpose()?;
            cases.push(CaseEntry {
                case_id: row.case_id,
                image: base_dir.join(row.image),
                label: base_dir.join(row.label),
                metadata: CaseMetadata {
                    sex: non_empty(row.sex),
                    age_group,
                    manufacturer: non_empty(row.manufacturer),
                    region: non_empty(row.region),
                },
            });
        }
        if cases.is_empty() {
            return Err(HarnessError::Config("manifest lists no cases".into()));
        }
        Ok(Self {
            path: base_dir.to_path_buf(),
            cases,
            tolerances,
            label_map_version,
        })
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut m = Self::parse(&text, base)?;
        m.path = path.to_path_buf();
        for c in &m.cases {
            for p in [&c.image, &c.label] {
                if !p.is_file() {
                    return Err(HarnessError::Config(format!(
                        "case '{}': file {} does not exist",
                        c.case_id,
                        p.display()
                    )));
                }
            }
        }
        if let Some(t) = &m.tolerances {
            if !t.is_file() {
                return Err(HarnessError::Config(format!("tolerance file {} does not exist", t.display())));
            }
        }
        Ok(m)
    }

    pub fn case(&self, case_id: &str) -> Option<&CaseEntry> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}
