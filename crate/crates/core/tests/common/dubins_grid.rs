//! Shortest Dubins path by exhaustive search: for every three-segment word
//! the last arc is fixed by the heading, the first two lengths are scanned
//! on a grid, and every grid local minimum of the position residual is
//! polished with Newton's method. Works in units of the turn radius.

use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Heading rate per unit length of each segment: +1 left, 0 straight, -1 right.
pub const WORDS: [(&str, [f64; 3]); 6] = [
    ("LSL", [1.0, 0.0, 1.0]),
    ("RSR", [-1.0, 0.0, -1.0]),
    ("LSR", [1.0, 0.0, -1.0]),
    ("RSL", [-1.0, 0.0, 1.0]),
    ("RLR", [-1.0, 1.0, -1.0]),
    ("LRL", [1.0, -1.0, 1.0]),
];

fn wrap(a: f64) -> f64 {
    a.rem_euclid(TWO_PI)
}

/// Integrates one segment of unit-radius motion exactly.
fn advance(p: (f64, f64, f64), rate: f64, len: f64) -> (f64, f64, f64) {
    let (x, y, h) = p;
    if rate == 0.0 {
        (x + len * h.cos(), y + len * h.sin(), h)
    } else {
        let h1 = h + rate * len;
        (x + (h1.sin() - h.sin()) / rate, y - (h1.cos() - h.cos()) / rate, h1)
    }
}

fn last_arc(rates: [f64; 3], dh: f64, t: f64, p: f64) -> f64 {
    let q = wrap((dh - rates[0] * t - rates[1] * p) / rates[2]);
    // A full turn closes the same pose as no turn.
    if q > TWO_PI - 1e-9 {
        0.0
    } else {
        q
    }
}

fn residual(rates: [f64; 3], goal: (f64, f64, f64), t: f64, p: f64) -> ((f64, f64), f64) {
    let q = last_arc(rates, goal.2, t, p);
    let mut s = (0.0, 0.0, 0.0);
    for (rate, len) in rates.iter().zip([t, p, q]) {
        s = advance(s, *rate, len);
    }
    ((s.0 - goal.0, s.1 - goal.1), q)
}

/// Length of the shortest path from `(x0, y0, h0)` to `(x1, y1, h1)` with
/// turn radius `rho`, or `None` if the search found nothing.
pub fn shortest_length(start: (f64, f64, f64), end: (f64, f64, f64), rho: f64, grid: usize) -> Option<f64> {
    let (dx, dy) = ((end.0 - start.0) / rho, (end.1 - start.1) / rho);
    let (c, s) = (start.2.cos(), start.2.sin());
    // Goal in the start frame.
    let goal = (c * dx + s * dy, -s * dx + c * dy, wrap(end.2 - start.2));
    let d = (goal.0 * goal.0 + goal.1 * goal.1).sqrt();
    if d < 1e-12 && (goal.2 < 1e-12 || TWO_PI - goal.2 < 1e-12) {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    for (_, rates) in WORDS {
        let p_max = if rates[1] == 0.0 { d + 4.0 } else { TWO_PI };
        let tv: Vec<f64> = (0..=grid).map(|i| TWO_PI * i as f64 / grid as f64).collect();
        let pv: Vec<f64> = (0..=grid).map(|i| p_max * i as f64 / grid as f64).collect();
        let r: Vec<Vec<f64>> = tv
            .iter()
            .map(|&t| {
                pv.iter()
                    .map(|&p| {
                        let ((ex, ey), _) = residual(rates, goal, t, p);
                        (ex * ex + ey * ey).sqrt()
                    })
                    .collect()
            })
            .collect();
        for i in 0..=grid {
            for j in 0..=grid {
                let v = r[i][j];
                let mut is_min = true;
                for (di, dj) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a > grid as i64 || b > grid as i64 {
                        continue;
                    }
                    if r[a as usize][b as usize] < v {
                        is_min = false;
                        break;
                    }
                }
                if !is_min {
                    continue;
                }
                if let Some(len) = polish(rates, goal, tv[i], pv[j]) {
                    if best.is_none_or(|b| len < b) {
                        best = Some(len);
                    }
                }
            }
        }
    }
    best.map(|b| b * rho)
}

/// Newton iteration on the 2×2 position residual with a finite-difference
/// Jacobian. Accepts only solutions with nonnegative segment lengths.
fn polish(rates: [f64; 3], goal: (f64, f64, f64), mut t: f64, mut p: f64) -> Option<f64> {
    let h = 1e-7;
    for _ in 0..60 {
        let ((ex, ey), _) = residual(rates, goal, t, p);
        if (ex * ex + ey * ey).sqrt() < 1e-13 {
            break;
        }
        let ((ex_t, ey_t), _) = residual(rates, goal, t + h, p);
        let ((ex_p, ey_p), _) = residual(rates, goal, t, p + h);
        let (a, b, c, d) = ((ex_t - ex) / h, (ex_p - ex) / h, (ey_t - ey) / h, (ey_p - ey) / h);
        let det = a * d - b * c;
        if det.abs() < 1e-14 {
            return None;
        }
        let dt = (d * ex - b * ey) / det;
        let dp = (-c * ex + a * ey) / det;
        t -= dt;
        p -= dp;
        if t < -1e-9 || p < -1e-9 {
            return None;
        }
        t = t.max(0.0);
        p = p.max(0.0);
    }
    let ((ex, ey), q) = residual(rates, goal, t, p);
    if (ex * ex + ey * ey).sqrt() > 1e-10 {
        return None;
    }
    Some(t + p + q)
}
