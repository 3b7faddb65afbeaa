//! Independent reference implementations used as test oracles, plus
//! synthetic fixtures. Everything here favours obviousness over speed.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use segbench_core::ranking::{MetricMatrix, MetricValues};
use segbench_core::volume::OrganId;
use segbench_core::{LabelVolume, Mask};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- masks

/// Union of a few random boxes and balls inside `dims`; may be empty.
pub fn random_mask(rng: &mut StdRng, dims: [usize; 3]) -> Mask {
    let mut m = Mask::empty(dims);
    let shapes = rng.random_range(0..4);
    for _ in 0..shapes {
        let c: [f64; 3] = std::array::from_fn(|k| rng.random_range(0.0..dims[k] as f64));
        let r: [f64; 3] = std::array::from_fn(|k| rng.random_range(0.5..(dims[k] as f64 / 2.0).max(1.0)));
        let ball = rng.random_bool(0.5);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let inside = if ball {
                        (0..3).map(|k| ((p[k] - c[k]) / r[k]).powi(2)).sum::<f64>() <= 1.0
                    } else {
                        (0..3).all(|k| (p[k] - c[k]).abs() <= r[k])
                    };
                    if inside {
                        m.set([x, y, z], true);
                    }
                }
            }
        }
    }
    if rng.random_bool(0.2) {
        // salt noise for ragged surfaces
        for _ in 0..rng.random_range(1..20) {
            let p = std::array::from_fn(|k| rng.random_range(0..dims[k]));
            m.set(p, true);
        }
    }
    m
}

/// Voxels of the mask that are set and have a 6-neighbour outside the mask
/// or outside the grid.
pub fn oracle_boundary(m: &Mask) -> Vec<[usize; 3]> {
    let d = m.dims();
    let mut out = Vec::new();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if !m.get([x, y, z]) {
                    continue;
                }
                let p = [x as isize, y as isize, z as isize];
                let offsets = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
                let exposed = offsets.iter().any(|o| {
                    let q: Vec<isize> = (0..3).map(|k| p[k] + o[k]).collect();
                    let outside = (0..3).any(|k| q[k] < 0 || q[k] >= d[k] as isize);
                    outside || !m.get([q[0] as usize, q[1] as usize, q[2] as usize])
                });
                if exposed {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Squared distance in millimetres between voxel centres.
pub fn sq_dist(a: [usize; 3], b: [usize; 3], s: [f64; 3]) -> f64 {
    let dx = (a[0] as f64 - b[0] as f64) * s[0];
    let dy = (a[1] as f64 - b[1] as f64) * s[1];
    let dz = (a[2] as f64 - b[2] as f64) * s[2];
    dx * dx + dy * dy + dz * dz
}

/// Distance from `p` to the nearest voxel of `set` by exhaustive search.
pub fn oracle_distance(p: [usize; 3], set: &[[usize; 3]], s: [f64; 3]) -> f64 {
    set.iter().map(|&q| sq_dist(p, q, s)).fold(f64::INFINITY, f64::min).sqrt()
}

/// `(2|G∩S|, |G|+|S|)`.
pub fn oracle_dice_counts(g: &Mask, s: &Mask) -> (usize, usize) {
    let inter = g.as_slice().iter().zip(s.as_slice()).filter(|(a, b)| **a && **b).count();
    let total = g.as_slice().iter().filter(|v| **v).count() + s.as_slice().iter().filter(|v| **v).count();
    (2 * inter, total)
}

pub fn oracle_dsc(g: &Mask, s: &Mask) -> f64 {
    let (n, d) = oracle_dice_counts(g, s);
    let (gc, sc) = (g.as_slice().iter().filter(|v| **v).count(), s.as_slice().iter().filter(|v| **v).count());
    match (gc, sc) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => n as f64 / d as f64,
    }
}

/// `(gt_within, gt_boundary, pred_within, pred_boundary)` by pairwise search.
pub fn oracle_surface_counts(g: &Mask, s: &Mask, spacing: [f64; 3], tau: f64) -> (usize, usize, usize, usize) {
    let bg = oracle_boundary(g);
    let bs = oracle_boundary(s);
    let within = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        if to.is_empty() {
            return 0;
        }
        from.iter().filter(|&&p| oracle_distance(p, to, spacing) <= tau).count()
    };
    (within(&bg, &bs), bg.len(), within(&bs, &bg), bs.len())
}

pub fn oracle_nsd(g: &Mask, s: &Mask, spacing: [f64; 3], tau: f64) -> f64 {
    let (gw, gb, sw, sb) = oracle_surface_counts(g, s, spacing, tau);
    match (gb, sb) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => (gw + sw) as f64 / (gb + sb) as f64,
    }
}

// ---------------------------------------------------------------- stats

/// τ-b by enumerating all pairs. A constant list has no defined τ-b; the
/// harness convention is 1 when both lists are constant and 0 otherwise.
pub fn oracle_kendall(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut con, mut dis, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                ta += 1;
                tb += 1;
            } else if da == 0.0 {
                ta += 1;
            } else if db == 0.0 {
                tb += 1;
            } else if (da > 0.0) == (db > 0.0) {
                con += 1;
            } else {
                dis += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    match (ta == n0, tb == n0) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let denom = (((n0 - ta) * (n0 - tb)) as f64).sqrt();
    (con - dis) as f64 / denom
}

/// Average ranks of `v` ascending, by counting smaller and equal elements.
pub fn oracle_average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count();
            let equal = v.iter().filter(|&&y| y == x).count();
            less as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided exact Wilcoxon p-value by enumerating every sign assignment.
/// Returns `(W+, p)`.
pub fn oracle_wilcoxon(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    // doubled ranks are integers, so sums compare exactly
    let r2: Vec<u64> = oracle_average_ranks(&abs).iter().map(|r| (r * 2.0) as u64).collect();
    let observed: u64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| r2[i]).sum();
    let (mut le, mut ge) = (0u64, 0u64);
    for signs in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|&i| signs >> i & 1 == 1).map(|i| r2[i]).sum();
        if w <= observed {
            le += 1;
        }
        if w >= observed {
            ge += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let p = (2.0 * le.min(ge) as f64 / total).min(1.0);
    (observed as f64 / 2.0, p)
}

/// Pearson's r from the textbook two-pass formula.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

// ---------------------------------------------------------------- volumes

pub type Affine = [[f64; 4]; 4];

pub fn apply(a: &Affine, p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| a[r][0] * p[0] + a[r][1] * p[1] + a[r][2] * p[2] + a[r][3])
}

/// LPS-style affine: x runs right-to-left, y anterior-to-posterior.
pub fn lps_affine(spacing: [f64; 3], origin: [f64; 3]) -> Affine {
    [
        [-spacing[0], 0.0, 0.0, origin[0]],
        [0.0, -spacing[1], 0.0, origin[1]],
        [0.0, 0.0, spacing[2], origin[2]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Checks that `canonical` shows the same labels at the same world
/// positions as `source`, and that its affine is RAS-aligned. Each source
/// voxel is mapped to world space with the source affine and back with the
/// inverse of the (diagonal) canonical affine.
pub fn assert_same_world_content(source: &LabelVolume, canonical: &LabelVolume) {
    let a = canonical.affine();
    for r in 0..3 {
        for c in 0..3 {
            if r == c {
                assert!(a[r][c] > 0.0, "canonical axis {r} not positive: {a:?}");
            } else {
                assert_eq!(a[r][c], 0.0, "canonical affine not axis-aligned: {a:?}");
            }
        }
    }
    let [nx, ny, nz] = source.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let w = apply(source.affine(), [x as f64, y as f64, z as f64]);
                let ijk: Vec<usize> = (0..3)
                    .map(|k| {
                        let v = (w[k] - a[k][3]) / a[k][k];
                        let r = v.round();
                        assert!((v - r).abs() < 1e-6, "world point falls between voxels");
                        r as usize
                    })
                    .collect();
                assert_eq!(
                    canonical.get([ijk[0], ijk[1], ijk[2]]),
                    source.get([x, y, z]),
                    "label mismatch at source voxel {:?}",
                    [x, y, z]
                );
            }
        }
    }
}

pub fn random_label_volume(rng: &mut StdRng) -> LabelVolume {
    let dims = [rng.random_range(1..12), rng.random_range(1..12), rng.random_range(1..12)];
    let spacing = [rng.random_range(0.3..4.0), rng.random_range(0.3..4.0), rng.random_range(0.3..4.0)];
    let n = dims.iter().product();
    let voxels = (0..n).map(|_| rng.random_range(0..=13u8)).collect();
    let affine = if rng.random_bool(0.5) {
        lps_affine(spacing, [rng.random_range(-100.0..100.0), 3.25, -7.5])
    } else {
        [
            [spacing[0], 0.0, 0.0, rng.random_range(-100.0..100.0)],
            [0.0, spacing[1], 0.0, 1.5],
            [0.0, 0.0, spacing[2], -20.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    };
    LabelVolume::new(dims, spacing, affine, voxels).unwrap()
}

/// A `n³` volume with every organ as a box or ellipsoid of random extent in
/// its own cell of a 3 × 3 × 2 grid, so organs never touch.
pub fn phantom(rng: &mut StdRng, n: usize, spacing: [f64; 3]) -> LabelVolume {
    let cells = [3usize, 3, 2];
    let cell: [usize; 3] = std::array::from_fn(|k| n / cells[k]);
    let mut voxels = vec![0u8; n * n * n];
    for (k, organ) in OrganId::ALL.iter().enumerate() {
        let cx = k % 3;
        let cy = (k / 3) % 3;
        let cz = k / 9;
        let origin = [cx * cell[0], cy * cell[1], cz * cell[2]];
        // keep a one-voxel gap around each organ
        let half: [f64; 3] = std::array::from_fn(|a| rng.random_range(1.0..(cell[a] as f64 / 2.0 - 1.0)));
        let centre: [f64; 3] = std::array::from_fn(|a| origin[a] as f64 + cell[a] as f64 / 2.0 - 0.5);
        let ball = rng.random_bool(0.5);
        for z in origin[2]..origin[2] + cell[2] {
            for y in origin[1]..origin[1] + cell[1] {
                for x in origin[0]..origin[0] + cell[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let inside = if ball {
                        (0..3).map(|a| ((p[a] - centre[a]) / half[a]).powi(2)).sum::<f64>() <= 1.0
                    } else {
                        (0..3).all(|a| (p[a] - centre[a]).abs() <= half[a])
                    };
                    if inside {
                        voxels[x + n * (y + n * z)] = organ.value();
                    }
                }
            }
        }
    }
    LabelVolume::with_spacing([n, n, n], spacing, voxels).unwrap()
}

// ranking fixtures

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:02}")).collect()
}

pub fn random_matrix(r: &mut StdRng, n_alg: usize, n_cases: usize) -> MetricMatrix {
    let mut values = Vec::new();
    for _ in 0..n_alg * n_cases {
        // coarse grids make ties common
        let coarse = r.random_bool(0.3);
        // strictly positive so that an all-zero row is worse than everything
        let q = |r: &mut StdRng| if coarse { r.random_range(1..=4) as f64 / 4.0 } else { r.random_range(0.01..=1.0) };
        values.push(MetricValues {
            dsc: q(r),
            nsd: q(r),
            time_s: if coarse { 10.0 } else { r.random_range(1.0..3600.0) },
            auc_gpu: if r.random_bool(0.5) { 0.0 } else { r.random_range(0.0..1e6) },
            auc_cpu: r.random_range(0.0..1e5),
        });
    }
    MetricMatrix::new(names("alg", n_alg), names("case", n_cases), values).unwrap()
}

/// `n_alg` algorithms whose quality decreases with their index. Per-case
/// noise lets neighbours swap on individual cases, but the expected order
/// is clear; `alg00` beats every other algorithm on every metric of every
/// case.
pub fn graded_matrix(r: &mut StdRng, n_alg: usize, n_cases: usize) -> MetricMatrix {
    let mut values = Vec::new();
    for a in 0..n_alg {
        let k = a as f64;
        for _ in 0..n_cases {
            let mut noise = |scale: f64| if a == 0 { 0.0 } else { r.random_range(-0.6..0.6) * scale };
            values.push(MetricValues {
                dsc: 0.95 - 0.1 * k + noise(0.1),
                nsd: 0.95 - 0.1 * k + noise(0.1),
                time_s: 10.0 + 10.0 * k + noise(10.0),
                auc_gpu: 1000.0 + 1000.0 * k + noise(1000.0),
                auc_cpu: 500.0 + 500.0 * k + noise(500.0),
            });
        }
    }
    MetricMatrix::new(names("alg", n_alg), names("case", n_cases), values).unwrap()
}
