//! Minimum-time reachability for the double integrator by feasibility
//! bisection. Each axis is a scalar double integrator with `|u| ≤ 1`, so the
//! set of states reachable from the origin in `k` steps is a planar
//! zonotope; membership is checked against its facet normals, which are
//! the generators rotated by 90°.

/// True iff `x0 = (p, v)` can be driven to the origin so that the state at
/// 1-indexed step `n` is zero (`n − 1` controls).
pub fn reachable_axis(p: f64, v: f64, ts: f64, n: usize, tol: f64) -> bool {
    if n <= 1 {
        return p.abs() <= tol && v.abs() <= tol;
    }
    let steps = n - 1;
    // x(n) = A^steps x0 + Σ_k A^(steps-1-k) B u_k, A^j = [[1, j ts], [0, 1]].
    let free = (p + steps as f64 * ts * v, v);
    let target = (-free.0, -free.1);
    let gens: Vec<(f64, f64)> = (0..steps)
        .map(|k| {
            let j = (steps - 1 - k) as f64;
            (0.5 * ts * ts + j * ts * ts, ts)
        })
        .collect();
    gens.iter().all(|g| {
        let normal = (-g.1, g.0);
        let support: f64 = gens.iter().map(|h| (normal.0 * h.0 + normal.1 * h.1).abs()).sum();
        (normal.0 * target.0 + normal.1 * target.1).abs() <= support + tol
    })
}

/// Smallest `n ∈ 1..=horizon` with the origin reachable at step `n`, found
/// by bisection (reachability is monotone in `n` because `u = 0` holds the
/// origin).
pub fn min_terminal_step_axis(p: f64, v: f64, ts: f64, horizon: usize, tol: f64) -> Option<usize> {
    if !reachable_axis(p, v, ts, horizon, tol) {
        return None;
    }
    let (mut lo, mut hi) = (1usize, horizon);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if reachable_axis(p, v, ts, mid, tol) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// State ordering `[p_1..p_a, v_1..v_a]`; axes decouple under the ∞-norm
/// control bound, so the answer is the slowest axis.
pub fn min_terminal_step(x0: &[f64], ts: f64, horizon: usize, tol: f64) -> Option<usize> {
    let axes = x0.len() / 2;
    (0..axes)
        .map(|i| min_terminal_step_axis(x0[i], x0[axes + i], ts, horizon, tol))
        .try_fold(1usize, |acc, s| s.map(|s| acc.max(s)))
}
