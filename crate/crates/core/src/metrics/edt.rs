//! Exact anisotropic Euclidean distance transform.
//!
//! Squared distances are computed by three separable lower-envelope passes
//! (x, then y, then z). Every output value is the sum
//! `((dx*sx)^2 + (dy*sy)^2) + (dz*sz)^2` for some target voxel, evaluated in
//! that order, so results compare bit-for-bit with a direct pairwise
//! computation that sums in the same order. Tiny problems skip the envelope
//! and minimise over all targets directly.

use super::{BoundarySet, MetricsError};

/// Above this many voxel-target pairs the separable transform is used.
const BRUTE_FORCE_LIMIT: usize = 1 << 14;

/// Per-voxel distance (millimetres) to the nearest voxel of a target set.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl DistanceField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, [x, y, z]: [usize; 3]) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Exact distance from every voxel of a `dims` grid to the nearest voxel of
/// `target`, measured between voxel centres with the given spacing.
pub fn distance_to_set(
    target: &BoundarySet,
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<DistanceField, MetricsError> {
    if target.is_empty() {
        return Err(MetricsError::EmptyTarget);
    }
    if let Some(v) = target
        .voxels()
        .iter()
        .find(|v| v.iter().zip(dims.iter()).any(|(c, d)| c >= d))
    {
        return Err(MetricsError::CasePairing(format!(
            "target voxel {v:?} outside grid {dims:?}"
        )));
    }
    let values = squared_edt(dims, spacing, target.voxels())
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Ok(DistanceField { dims, values })
}

/// Squared distance field over `dims` for targets given in grid coordinates.
/// Voxels are never farther than `+inf` (only when `targets` is empty).
pub(crate) fn squared_edt(dims: [usize; 3], spacing: [f64; 3], targets: &[[usize; 3]]) -> Vec<f64> {
    let n: usize = dims.iter().product();
    if n.saturating_mul(targets.len()) <= BRUTE_FORCE_LIMIT {
        return brute_force(dims, spacing, targets);
    }
    let mut f = vec![f64::INFINITY; n];
    let [nx, ny, nz] = dims;
    for t in targets {
        f[t[0] + nx * (t[1] + ny * t[2])] = 0.0;
    }

    let longest = nx.max(ny).max(nz);
    let mut scratch = Envelope::with_capacity(longest);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];

    // x: contiguous rows
    for row in f.chunks_mut(nx) {
        scratch.transform(row, &mut out[..nx], spacing[0]);
        row.copy_from_slice(&out[..nx]);
    }
    // y
    for z in 0..nz {
        for x in 0..nx {
            let base = x + nx * ny * z;
            for y in 0..ny {
                line[y] = f[base + nx * y];
            }
            scratch.transform(&line[..ny], &mut out[..ny], spacing[1]);
            for y in 0..ny {
                f[base + nx * y] = out[y];
            }
        }
    }
    // z
    let plane = nx * ny;
    for i in 0..plane {
        for z in 0..nz {
            line[z] = f[i + plane * z];
        }
        scratch.transform(&line[..nz], &mut out[..nz], spacing[2]);
        for z in 0..nz {
            f[i + plane * z] = out[z];
        }
    }
    f
}

fn brute_force(dims: [usize; 3], spacing: [f64; 3], targets: &[[usize; 3]]) -> Vec<f64> {
    let mut f = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let best = targets
                    .iter()
                    .map(|t| {
                        let dx = (x as f64 - t[0] as f64) * spacing[0];
                        let dy = (y as f64 - t[1] as f64) * spacing[1];
                        let dz = (z as f64 - t[2] as f64) * spacing[2];
                        dx * dx + dy * dy + dz * dz
                    })
                    .fold(f64::INFINITY, f64::min);
                f.push(best);
            }
        }
    }
    f
}

/// Lower envelope of parabolas `g(q) + ((p - q) * s)^2` along one line.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    #[inline]
    fn eval(g: &[f64], q: usize, p: usize, s: f64) -> f64 {
        let d = (p as f64 - q as f64) * s;
        g[q] + d * d
    }

    fn transform(&mut self, g: &[f64], out: &mut [f64], s: f64) {
        self.sites.clear();
        self.bounds.clear();
        let s2 = s * s;
        // abscissa where the parabolas of sites q < r intersect
        let meet = |q: usize, r: usize| -> f64 {
            let (qf, rf) = (q as f64, r as f64);
            ((g[r] + s2 * rf * rf) - (g[q] + s2 * qf * qf)) / (2.0 * s2 * (rf - qf))
        };

        for (q, &gq) in g.iter().enumerate() {
            if !gq.is_finite() {
                continue;
            }
            loop {
                match self.sites.last() {
                    None => {
                        self.sites.push(q);
                        self.bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&top) => {
                        let x = meet(top, q);
                        if x <= *self.bounds.last().unwrap() {
                            self.sites.pop();
                            self.bounds.pop();
                        } else {
                            self.sites.push(q);
                            self.bounds.push(x);
                            break;
                        }
                    }
                }
            }
        }

        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }

        let m = self.sites.len();
        let mut k = 0;
        for (p, o) in out.iter_mut().enumerate() {
            while k + 1 < m && self.bounds[k + 1] < p as f64 {
                k += 1;
            }
            // neighbouring segments guard against rounding in the breakpoints
            let mut best = Self::eval(g, self.sites[k], p, s);
            if k > 0 {
                best = best.min(Self::eval(g, self.sites[k - 1], p, s));
            }
            if k + 1 < m {
                best = best.min(Self::eval(g, self.sites[k + 1], p, s));
            }
            *o = best;
        }
    }
}
