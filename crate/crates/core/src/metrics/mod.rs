//! Segmentation accuracy metrics.
//!
//! Boundaries are voxel sets: a mask voxel belongs to the boundary when at
//! least one of its six face neighbours is background or lies outside the
//! grid. NSD counts boundary voxels of each mask that lie within `tau`
//! millimetres (centre to centre, anisotropic spacing) of the other mask's
//! boundary.
//!
//! Empty masks follow a fixed convention for both DSC and NSD: two empty
//! masks score 1, exactly one empty mask scores 0.

mod edt;
mod tolerance;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::Mask;
use crate::volume::{LabelVolume, OrganId};

pub use edt::{distance_to_set, DistanceField};
pub use tolerance::ToleranceTable;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: [usize; 3], right: [usize; 3] },
    #[error("length mismatch: expected {0}, got {1}")]
    Length(usize, usize),
    #[error("distance target set is empty")]
    EmptyTarget,
    #[error("case pairing error: {0}")]
    CasePairing(String),
    #[error("degenerate variance in {0}")]
    DegenerateVariance(&'static str),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("invalid tolerance: {0}")]
    Tolerance(String),
    #[error("invalid spacing {0:?}")]
    Spacing([f64; 3]),
}

/// Voxels on the boundary of a mask, in storage order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundarySet {
    dims: [usize; 3],
    voxels: Vec<[usize; 3]>,
}

impl BoundarySet {
    /// Wraps an arbitrary voxel set, e.g. as a distance-transform target.
    pub fn from_voxels(dims: [usize; 3], voxels: Vec<[usize; 3]>) -> Self {
        Self { dims, voxels }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Physical voxel-centre coordinates in millimetres (grid origin at 0).
    pub fn coords_mm(&self, spacing: [f64; 3]) -> Vec<[f64; 3]> {
        self.voxels
            .iter()
            .map(|v| {
                [
                    v[0] as f64 * spacing[0],
                    v[1] as f64 * spacing[1],
                    v[2] as f64 * spacing[2],
                ]
            })
            .collect()
    }
}

fn check_dims(a: &Mask, b: &Mask) -> Result<(), MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::Shape {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

fn check_spacing(spacing: [f64; 3]) -> Result<(), MetricsError> {
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(MetricsError::Spacing(spacing));
    }
    Ok(())
}

/// Dice similarity coefficient `2|G ∩ S| / (|G| + |S|)`.
pub fn dsc(gt: &Mask, pred: &Mask) -> Result<f64, MetricsError> {
    check_dims(gt, pred)?;
    let (mut g, mut s, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in gt.as_slice().iter().zip(pred.as_slice()) {
        g += usize::from(a);
        s += usize::from(b);
        both += usize::from(a && b);
    }
    Ok(match (g, s) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => (2 * both) as f64 / (g + s) as f64,
    })
}

pub fn extract_boundary(mask: &Mask) -> BoundarySet {
    let [nx, ny, nz] = mask.dims();
    let data = mask.as_slice();
    let mut voxels = Vec::new();
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if data[i] {
                    let interior = x > 0
                        && x + 1 < nx
                        && y > 0
                        && y + 1 < ny
                        && z > 0
                        && z + 1 < nz
                        && data[i - 1]
                        && data[i + 1]
                        && data[i - nx]
                        && data[i + nx]
                        && data[i - nx * ny]
                        && data[i + nx * ny];
                    if !interior {
                        voxels.push([x, y, z]);
                    }
                }
                i += 1;
            }
        }
    }
    BoundarySet {
        dims: mask.dims(),
        voxels,
    }
}

/// Integer counts behind an NSD value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceOverlap {
    /// Boundary voxels of the ground truth within tolerance of the prediction boundary.
    pub gt_within: usize,
    pub gt_boundary: usize,
    /// Boundary voxels of the prediction within tolerance of the ground-truth boundary.
    pub pred_within: usize,
    pub pred_boundary: usize,
}

impl SurfaceOverlap {
    pub fn nsd(&self) -> f64 {
        match (self.gt_boundary, self.pred_boundary) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            (g, s) => (self.gt_within + self.pred_within) as f64 / (g + s) as f64,
        }
    }
}

/// Counts boundary voxels within `tau` of the opposite boundary.
pub fn surface_overlap(
    gt: &Mask,
    pred: &Mask,
    spacing: [f64; 3],
    tau: f64,
) -> Result<SurfaceOverlap, MetricsError> {
    check_dims(gt, pred)?;
    check_spacing(spacing)?;
    if !tau.is_finite() || tau < 0.0 {
        return Err(MetricsError::Tolerance(format!("tau = {tau} must be finite and >= 0")));
    }
    let bg = extract_boundary(gt);
    let bs = extract_boundary(pred);
    let mut out = SurfaceOverlap {
        gt_within: 0,
        gt_boundary: bg.len(),
        pred_within: 0,
        pred_boundary: bs.len(),
    };
    if bg.is_empty() || bs.is_empty() {
        return Ok(out);
    }

    // Both boundaries fit inside their joint bounding box, and distances are
    // translation invariant, so the transform only needs that box.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for v in bg.voxels().iter().chain(bs.voxels()) {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let box_dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let local = |set: &BoundarySet| -> Vec<[usize; 3]> {
        set.voxels()
            .iter()
            .map(|v| [v[0] - lo[0], v[1] - lo[1], v[2] - lo[2]])
            .collect()
    };
    let g_local = local(&bg);
    let s_local = local(&bs);

    let within = |field: &[f64], points: &[[usize; 3]]| {
        points
            .iter()
            .filter(|p| field[p[0] + box_dims[0] * (p[1] + box_dims[1] * p[2])].sqrt() <= tau)
            .count()
    };
    let to_pred = edt::squared_edt(box_dims, spacing, &s_local);
    out.gt_within = within(&to_pred, &g_local);
    drop(to_pred);
    let to_gt = edt::squared_edt(box_dims, spacing, &g_local);
    out.pred_within = within(&to_gt, &s_local);
    Ok(out)
}

/// Normalized surface distance at tolerance `tau` millimetres.
pub fn nsd(gt: &Mask, pred: &Mask, spacing: [f64; 3], tau: f64) -> Result<f64, MetricsError> {
    surface_overlap(gt, pred, spacing, tau).map(|o| o.nsd())
}

/// Volume of a mask in cm³.
pub fn organ_volume(mask: &Mask, spacing: [f64; 3]) -> f64 {
    mask.count() as f64 * (spacing[0] * spacing[1] * spacing[2]) / 1000.0
}

/// Sample Pearson correlation, accumulated in a single pass with running
/// means and co-moments.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::Length(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooFewSamples {
            need: 2,
            got: xs.len(),
        });
    }
    let (mut mx, mut my) = (0.0, 0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (k + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(MetricsError::DegenerateVariance("xs"));
    }
    if syy <= 0.0 {
        return Err(MetricsError::DegenerateVariance("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrganAccuracy {
    pub organ: OrganId,
    pub dsc: f64,
    pub nsd: f64,
    pub gt_volume_cm3: f64,
    pub pred_volume_cm3: f64,
}

/// Per-organ accuracy of one case, ordered by organ id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseAccuracy {
    pub organs: Vec<OrganAccuracy>,
}

impl CaseAccuracy {
    pub fn organ(&self, organ: OrganId) -> &OrganAccuracy {
        &self.organs[organ.index()]
    }

    /// Unweighted mean DSC over the 13 organs.
    pub fn mean_dsc(&self) -> f64 {
        self.organs.iter().map(|o| o.dsc).sum::<f64>() / self.organs.len() as f64
    }

    pub fn mean_nsd(&self) -> f64 {
        self.organs.iter().map(|o| o.nsd).sum::<f64>() / self.organs.len() as f64
    }
}

/// Label bounding boxes (inclusive) gathered in one pass.
fn label_boxes(vol: &LabelVolume, boxes: &mut [Option<([usize; 3], [usize; 3])>; 14]) {
    let [nx, ny, nz] = vol.dims();
    let vox = vol.voxels();
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let l = usize::from(vox[i]);
                if l != 0 {
                    let b = boxes[l].get_or_insert(([x, y, z], [x, y, z]));
                    let p = [x, y, z];
                    for k in 0..3 {
                        b.0[k] = b.0[k].min(p[k]);
                        b.1[k] = b.1[k].max(p[k]);
                    }
                }
                i += 1;
            }
        }
    }
}

/// Organ mask restricted to `[lo, hi]`. Masks never touch the crop edge
/// unless it coincides with the grid edge, so boundaries are unchanged.
fn cropped_mask(vol: &LabelVolume, label: u8, lo: [usize; 3], hi: [usize; 3]) -> Mask {
    let dims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    Mask::from_fn(dims, |[x, y, z]| vol.get([x + lo[0], y + lo[1], z + lo[2]]) == label)
}

fn pairing_check(gt: &LabelVolume, pred: &LabelVolume) -> Result<(), MetricsError> {
    if gt.dims() != pred.dims() {
        return Err(MetricsError::CasePairing(format!(
            "dimensions differ: gt {:?}, pred {:?}",
            gt.dims(),
            pred.dims()
        )));
    }
    for (a, b) in gt.spacing().iter().zip(pred.spacing()) {
        if (a - b).abs() > 1e-3 * a.abs().max(b.abs()) {
            return Err(MetricsError::CasePairing(format!(
                "spacing differs: gt {:?}, pred {:?}",
                gt.spacing(),
                pred.spacing()
            )));
        }
    }
    match (gt.orientation(), pred.orientation()) {
        (Ok(a), Ok(b)) if a == b => Ok(()),
        (Ok(a), Ok(b)) => Err(MetricsError::CasePairing(format!(
            "orientation differs: gt {a}, pred {b}"
        ))),
        _ => Err(MetricsError::CasePairing("undecodable orientation".into())),
    }
}

/// DSC, NSD and volumes for all 13 organs of one case.
///
/// Organs are evaluated in parallel on crops around the union of both
/// labels; results are identical to evaluating full-size organ masks.
pub fn evaluate_case(
    gt: &LabelVolume,
    pred: &LabelVolume,
    tol: &ToleranceTable,
) -> Result<CaseAccuracy, MetricsError> {
    pairing_check(gt, pred)?;
    let spacing = gt.spacing();
    let dims = gt.dims();
    let mut gt_boxes = [None; 14];
    let mut pred_boxes = [None; 14];
    label_boxes(gt, &mut gt_boxes);
    label_boxes(pred, &mut pred_boxes);

    let organs = OrganId::ALL
        .par_iter()
        .map(|&organ| {
            let l = usize::from(organ.value());
            let joint = match (gt_boxes[l], pred_boxes[l]) {
                (None, None) => None,
                (Some(b), None) | (None, Some(b)) => Some(b),
                (Some(a), Some(b)) => Some((
                    [a.0[0].min(b.0[0]), a.0[1].min(b.0[1]), a.0[2].min(b.0[2])],
                    [a.1[0].max(b.1[0]), a.1[1].max(b.1[1]), a.1[2].max(b.1[2])],
                )),
            };
            let Some((lo, hi)) = joint else {
                return Ok(OrganAccuracy {
                    organ,
                    dsc: 1.0,
                    nsd: 1.0,
                    gt_volume_cm3: 0.0,
                    pred_volume_cm3: 0.0,
                });
            };
            let lo = lo.map(|v| v.saturating_sub(1));
            let hi = [
                (hi[0] + 1).min(dims[0] - 1),
                (hi[1] + 1).min(dims[1] - 1),
                (hi[2] + 1).min(dims[2] - 1),
            ];
            let gm = cropped_mask(gt, organ.value(), lo, hi);
            let pm = cropped_mask(pred, organ.value(), lo, hi);
            Ok(OrganAccuracy {
                organ,
                dsc: dsc(&gm, &pm)?,
                nsd: nsd(&gm, &pm, spacing, tol.get(organ))?,
                gt_volume_cm3: organ_volume(&gm, spacing),
                pred_volume_cm3: organ_volume(&pm, spacing),
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(CaseAccuracy { organs })
}
