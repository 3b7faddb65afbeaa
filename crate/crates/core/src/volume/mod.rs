//! Multi-label segmentation volumes.
//!
//! A [`LabelVolume`] is a dense `u8` grid (x fastest) holding background (0) or
//! one of the 13 abdominal organ labels, together with voxel spacing in
//! millimetres and the voxel-to-world affine. Volumes are read from and written
//! to single-file NIfTI-1 (`.nii` / `.nii.gz`) and can be reoriented to
//! canonical RAS without resampling.

mod nifti;
mod orient;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mask::Mask;

pub use nifti::{decode_nifti, encode_nifti, load_volume, write_volume, NIFTI1_HEADER_SIZE};
pub use orient::{orientation_of, to_canonical_ras, AxisCode, Orientation};

/// Largest valid label value.
pub const MAX_LABEL: u8 = 13;

/// Tag identifying the label numbering implemented by [`OrganId`].
pub const LABEL_MAP_VERSION: &str = "abdomen13-v1";

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed NIfTI-1 file: {0}")]
    Format(String),
    #[error("unsupported datatype (code {code}): {reason}")]
    UnsupportedDatatype { code: i16, reason: String },
    #[error("invalid label {value} at voxel ({}, {}, {})", index[0], index[1], index[2])]
    InvalidLabel { value: f64, index: [usize; 3] },
    #[error("unsupported orientation: {0}")]
    UnsupportedOrientation(String),
    #[error("invalid volume: {0}")]
    Invalid(String),
}

const ORGAN_NAMES: [&str; 13] = [
    "liver",
    "right kidney",
    "spleen",
    "pancreas",
    "aorta",
    "inferior vena cava",
    "right adrenal gland",
    "left adrenal gland",
    "gallbladder",
    "esophagus",
    "stomach",
    "duodenum",
    "left kidney",
];

/// One of the 13 abdominal organ labels (1..=13).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrganId(u8);

impl OrganId {
    pub const LIVER: OrganId = OrganId(1);
    pub const RIGHT_KIDNEY: OrganId = OrganId(2);
    pub const SPLEEN: OrganId = OrganId(3);
    pub const PANCREAS: OrganId = OrganId(4);
    pub const AORTA: OrganId = OrganId(5);
    pub const INFERIOR_VENA_CAVA: OrganId = OrganId(6);
    pub const RIGHT_ADRENAL_GLAND: OrganId = OrganId(7);
    pub const LEFT_ADRENAL_GLAND: OrganId = OrganId(8);
    pub const GALLBLADDER: OrganId = OrganId(9);
    pub const ESOPHAGUS: OrganId = OrganId(10);
    pub const STOMACH: OrganId = OrganId(11);
    pub const DUODENUM: OrganId = OrganId(12);
    pub const LEFT_KIDNEY: OrganId = OrganId(13);

    pub const ALL: [OrganId; 13] = [
        OrganId(1),
        OrganId(2),
        OrganId(3),
        OrganId(4),
        OrganId(5),
        OrganId(6),
        OrganId(7),
        OrganId(8),
        OrganId(9),
        OrganId(10),
        OrganId(11),
        OrganId(12),
        OrganId(13),
    ];

    pub fn new(value: u8) -> Option<Self> {
        (1..=MAX_LABEL).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based position in [`OrganId::ALL`].
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn name(self) -> &'static str {
        ORGAN_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ORGAN_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| Self(i as u8 + 1))
    }
}

impl fmt::Display for OrganId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for OrganId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for OrganId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        OrganId::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown organ '{name}'")))
    }
}

pub type Affine = [[f64; 4]; 4];

/// A validated multi-label 3D volume.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Affine,
    voxels: Vec<u8>,
}

impl LabelVolume {
    /// Builds a volume, checking dimensions, spacing, affine invertibility and
    /// that every voxel is a known label.
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        affine: Affine,
        voxels: Vec<u8>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::Invalid(format!("zero-sized dimension in {dims:?}")));
        }
        let n = dims.iter().product::<usize>();
        if voxels.len() != n {
            return Err(VolumeError::Invalid(format!(
                "expected {n} voxels for dims {dims:?}, got {}",
                voxels.len()
            )));
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::Invalid(format!("non-positive spacing {spacing:?}")));
        }
        if affine.iter().flatten().any(|v| !v.is_finite()) {
            return Err(VolumeError::Invalid("non-finite affine".into()));
        }
        if orient::det3(&affine) == 0.0 {
            return Err(VolumeError::UnsupportedOrientation(
                "singular voxel-to-world affine".into(),
            ));
        }
        if let Some(i) = voxels.iter().position(|&v| v > MAX_LABEL) {
            return Err(VolumeError::InvalidLabel {
                value: f64::from(voxels[i]),
                index: unravel(dims, i),
            });
        }
        Ok(Self {
            dims,
            spacing,
            affine,
            voxels,
        })
    }

    /// A RAS volume whose affine is `diag(spacing)` with the origin at voxel 0.
    pub fn with_spacing(
        dims: [usize; 3],
        spacing: [f64; 3],
        voxels: Vec<u8>,
    ) -> Result<Self, VolumeError> {
        let mut affine = [[0.0; 4]; 4];
        for (i, s) in spacing.iter().enumerate() {
            affine[i][i] = *s;
        }
        affine[3][3] = 1.0;
        Self::new(dims, spacing, affine, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> u8 {
        self.voxels[self.linear_index(idx)]
    }

    pub fn orientation(&self) -> Result<Orientation, VolumeError> {
        orientation_of(&self.affine)
    }

    /// World (millimetre) coordinate of a possibly fractional voxel index.
    pub fn voxel_to_world(&self, ijk: [f64; 3]) -> [f64; 3] {
        let a = &self.affine;
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = a[r][0] * ijk[0] + a[r][1] * ijk[1] + a[r][2] * ijk[2] + a[r][3];
        }
        out
    }

    /// Voxel count per label value, index 0 = background.
    pub fn label_counts(&self) -> [usize; MAX_LABEL as usize + 1] {
        let mut counts = [0usize; MAX_LABEL as usize + 1];
        for &v in &self.voxels {
            counts[usize::from(v)] += 1;
        }
        counts
    }

    pub fn organ_mask(&self, organ: OrganId) -> Mask {
        organ_mask(self, organ)
    }
}

/// Binary mask of the voxels carrying `organ`'s label.
pub fn organ_mask(vol: &LabelVolume, organ: OrganId) -> Mask {
    let label = organ.value();
    let data = vol.voxels.iter().map(|&v| v == label).collect();
    Mask::new(vol.dims, data).expect("mask length matches volume")
}

pub(crate) fn unravel(dims: [usize; 3], i: usize) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}
