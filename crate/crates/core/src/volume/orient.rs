//! Axis-code decoding and reorientation to canonical RAS.
//!
//! World space follows the NIfTI convention: +x = Right, +y = Anterior,
//! +z = Superior. Each voxel axis is labelled by the world axis its affine
//! column points along most strongly. Oblique affines whose dominant axes are
//! ambiguous are rejected instead of being resampled.

use std::fmt;

use super::{Affine, LabelVolume, VolumeError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisCode {
    R,
    L,
    A,
    P,
    S,
    I,
}

impl AxisCode {
    fn from_world(axis: usize, negative: bool) -> Self {
        match (axis, negative) {
            (0, false) => AxisCode::R,
            (0, true) => AxisCode::L,
            (1, false) => AxisCode::A,
            (1, true) => AxisCode::P,
            (2, false) => AxisCode::S,
            _ => AxisCode::I,
        }
    }

    fn as_char(self) -> char {
        match self {
            AxisCode::R => 'R',
            AxisCode::L => 'L',
            AxisCode::A => 'A',
            AxisCode::P => 'P',
            AxisCode::S => 'S',
            AxisCode::I => 'I',
        }
    }
}

/// Three-letter orientation code, one letter per voxel axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Orientation(pub [AxisCode; 3]);

impl Orientation {
    pub const RAS: Orientation = Orientation([AxisCode::R, AxisCode::A, AxisCode::S]);
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.0 {
            write!(f, "{}", c.as_char())?;
        }
        Ok(())
    }
}

pub(crate) fn det3(a: &Affine) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// For every voxel axis: the world axis it runs along and whether it runs
/// in the negative direction.
fn axis_mapping(affine: &Affine) -> Result<[(usize, bool); 3], VolumeError> {
    if det3(affine) == 0.0 || !det3(affine).is_finite() {
        return Err(VolumeError::UnsupportedOrientation(
            "singular voxel-to-world affine".into(),
        ));
    }
    let mut mapping = [(0usize, false); 3];
    let mut used = [false; 3];
    for (j, slot) in mapping.iter_mut().enumerate() {
        let col = [affine[0][j], affine[1][j], affine[2][j]];
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()));
        let (best, second) = (col[order[0]].abs(), col[order[1]].abs());
        if best == 0.0 || second >= best * (1.0 - 1e-6) {
            return Err(VolumeError::UnsupportedOrientation(format!(
                "voxel axis {j} has no dominant world axis (column {col:?})"
            )));
        }
        let world = order[0];
        if used[world] {
            return Err(VolumeError::UnsupportedOrientation(format!(
                "two voxel axes map to world axis {world}"
            )));
        }
        used[world] = true;
        *slot = (world, col[world] < 0.0);
    }
    Ok(mapping)
}

pub fn orientation_of(affine: &Affine) -> Result<Orientation, VolumeError> {
    let m = axis_mapping(affine)?;
    Ok(Orientation([
        AxisCode::from_world(m[0].0, m[0].1),
        AxisCode::from_world(m[1].0, m[1].1),
        AxisCode::from_world(m[2].0, m[2].1),
    ]))
}

/// Permutes and flips voxel axes so that the result is RAS.
///
/// Voxel data is never interpolated; the affine is updated so that each voxel
/// keeps its world coordinate.
pub fn to_canonical_ras(vol: &LabelVolume) -> Result<LabelVolume, VolumeError> {
    let mapping = axis_mapping(vol.affine())?;
    if mapping == [(0, false), (1, false), (2, false)] {
        return Ok(vol.clone());
    }

    // source voxel axis and flip flag for every output axis
    let mut source = [(0usize, false); 3];
    for (j, &(world, flip)) in mapping.iter().enumerate() {
        source[world] = (j, flip);
    }

    let old_dims = vol.dims();
    let old_spacing = vol.spacing();
    let old = vol.affine();
    let mut dims = [0usize; 3];
    let mut spacing = [0.0; 3];
    let mut affine = [[0.0; 4]; 4];
    affine[3][3] = 1.0;
    for r in 0..3 {
        affine[r][3] = old[r][3];
    }
    for (k, &(j, flip)) in source.iter().enumerate() {
        dims[k] = old_dims[j];
        spacing[k] = old_spacing[j];
        let sign = if flip { -1.0 } else { 1.0 };
        for r in 0..3 {
            affine[r][k] = sign * old[r][j];
            if flip {
                affine[r][3] += (old_dims[j] - 1) as f64 * old[r][j];
            }
        }
    }

    let src = vol.voxels();
    let mut voxels = Vec::with_capacity(src.len());
    let mut old_idx = [0usize; 3];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                for (k, &n) in [x, y, z].iter().enumerate() {
                    let (j, flip) = source[k];
                    old_idx[j] = if flip { old_dims[j] - 1 - n } else { n };
                }
                voxels.push(src[vol.linear_index(old_idx)]);
            }
        }
    }
    LabelVolume::new(dims, spacing, affine, voxels)
}
