use super::StatsError;

/// Kendall's τ-b between two paired lists, in O(n log n).
///
/// With `P` concordant and `Q` discordant pairs, `n0 = n(n-1)/2`, and `n1`,
/// `n2` the pairs tied in the first and second list,
/// `τ_b = (P - Q) / sqrt((n0 - n1)(n0 - n2))`, which is the plain τ when
/// there are no ties. If both lists are constant they are taken as
/// identical (τ = 1); if only one is, τ = 0.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Shape(format!("lists of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::Shape(format!("need at least 2 items, got {n}")));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(StatsError::Data("NaN in rank list".into()));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let pairs = |t: u64| t * (t.saturating_sub(1)) / 2;
    let (mut n1, mut n3) = (0u64, 0u64);
    let (mut run_a, mut run_ab) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if a[i] == a[j] {
            run_a += 1;
            if b[i] == b[j] {
                run_ab += 1;
            } else {
                n3 += pairs(run_ab);
                run_ab = 1;
            }
        } else {
            n1 += pairs(run_a);
            n3 += pairs(run_ab);
            run_a = 1;
            run_ab = 1;
        }
    }
    n1 += pairs(run_a);
    n3 += pairs(run_ab);

    let mut ys: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let swaps = count_inversions(&mut ys);

    let mut n2 = 0u64;
    let mut run_b = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            n2 += pairs(run_b);
            run_b = 1;
        }
    }
    n2 += pairs(run_b);

    let n0 = pairs(n as u64);
    let (da, db) = (n0 - n1, n0 - n2);
    match (da, db) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let diff = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    let tau = diff as f64 / ((da as f64) * (db as f64)).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

/// Sorts `v` and returns the number of pairs `i < j` with `v[i] > v[j]`.
fn count_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut buf = v.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j] < v[i] {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        v.copy_from_slice(&buf);
        width *= 2;
    }
    swaps
}
