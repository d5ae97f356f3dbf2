//! Shortest Dubins paths between oriented planar poses.
//!
//! Poses use the standard convention: heading 0 points along `+x` and left
//! turns increase the heading. [`pose_from_car_state`] converts the car
//! model's `[r_x, r_y, θ]` state (heading 0 along `+r_y`, `ṙ_x = v sin θ`)
//! into this convention by swapping the planar axes. The swap is a
//! reflection, so path lengths are preserved.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::Serialize;

use crate::models::State;

/// Angles this close to a full turn are snapped to zero; a full turn returns
/// to the same pose, so the endpoint is unchanged.
const FULL_TURN_SNAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Maps an angle to `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn mod2pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > TAU - FULL_TURN_SNAP {
        0.0
    } else {
        r
    }
}

pub fn pose_from_car_state(x: &State) -> Pose {
    Pose::new(x[1], x[0], x[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Segment {
    Left,
    Straight,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DubinsWord {
    Lsl,
    Rsr,
    Lsr,
    Rsl,
    Rlr,
    Lrl,
}

impl DubinsWord {
    pub const ALL: [DubinsWord; 6] = [
        DubinsWord::Lsl,
        DubinsWord::Rsr,
        DubinsWord::Lsr,
        DubinsWord::Rsl,
        DubinsWord::Rlr,
        DubinsWord::Lrl,
    ];

    pub fn segments(self) -> [Segment; 3] {
        use Segment::*;
        match self {
            DubinsWord::Lsl => [Left, Straight, Left],
            DubinsWord::Rsr => [Right, Straight, Right],
            DubinsWord::Lsr => [Left, Straight, Right],
            DubinsWord::Rsl => [Right, Straight, Left],
            DubinsWord::Rlr => [Right, Left, Right],
            DubinsWord::Lrl => [Left, Right, Left],
        }
    }
}

impl fmt::Display for DubinsWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DubinsWord::Lsl => "LSL",
            DubinsWord::Rsr => "RSR",
            DubinsWord::Lsr => "LSR",
            DubinsWord::Rsl => "RSL",
            DubinsWord::Rlr => "RLR",
            DubinsWord::Lrl => "LRL",
        };
        f.write_str(s)
    }
}

/// Advances `pose` along one segment of arc length `len`.
pub fn advance(pose: Pose, segment: Segment, len: f64, rho: f64) -> Pose {
    let (s, c) = pose.heading.sin_cos();
    match segment {
        Segment::Straight => Pose::new(pose.x + len * c, pose.y + len * s, pose.heading),
        Segment::Left => {
            let (cx, cy) = (pose.x - rho * s, pose.y + rho * c);
            let h = pose.heading + len / rho;
            Pose::new(cx + rho * h.sin(), cy - rho * h.cos(), h)
        }
        Segment::Right => {
            let (cx, cy) = (pose.x + rho * s, pose.y - rho * c);
            let h = pose.heading - len / rho;
            Pose::new(cx - rho * h.sin(), cy + rho * h.cos(), h)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DubinsResult {
    pub word: DubinsWord,
    /// Arc lengths of the three segments, in distance units.
    pub segments: [f64; 3],
    pub total: f64,
}

impl DubinsResult {
    pub fn endpoint(&self, start: Pose, rho: f64) -> Pose {
        self.word
            .segments()
            .iter()
            .zip(self.segments)
            .fold(start, |p, (seg, len)| advance(p, *seg, len, rho))
    }

    /// Pose after travelling `s` along the path (clamped to its length).
    pub fn sample(&self, start: Pose, rho: f64, s: f64) -> Pose {
        let mut left = s.clamp(0.0, self.total);
        let mut pose = start;
        for (seg, len) in self.word.segments().iter().zip(self.segments) {
            let step = left.min(len);
            pose = advance(pose, *seg, step, rho);
            left -= step;
            if left <= 0.0 {
                break;
            }
        }
        pose
    }
}

/// Normalized `(t, p, q)` for one word, or `None` when the word does not
/// exist for this geometry.
fn word_params(word: DubinsWord, d: f64, alpha: f64, beta: f64) -> Option<[f64; 3]> {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let c_ab = (alpha - beta).cos();
    match word {
        DubinsWord::Lsl => {
            let p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb);
            (p_sq >= 0.0).then(|| {
                let tmp = (cb - ca).atan2(d + sa - sb);
                [mod2pi(tmp - alpha), p_sq.sqrt(), mod2pi(beta - tmp)]
            })
        }
        DubinsWord::Rsr => {
            let p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa);
            (p_sq >= 0.0).then(|| {
                let tmp = (ca - cb).atan2(d - sa + sb);
                [mod2pi(alpha - tmp), p_sq.sqrt(), mod2pi(tmp - beta)]
            })
        }
        DubinsWord::Lsr => {
            let p_sq = -2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb);
            (p_sq >= 0.0).then(|| {
                let p = p_sq.sqrt();
                let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
                [mod2pi(tmp - alpha), p, mod2pi(tmp - beta)]
            })
        }
        DubinsWord::Rsl => {
            let p_sq = -2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb);
            (p_sq >= 0.0).then(|| {
                let p = p_sq.sqrt();
                let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
                [mod2pi(alpha - tmp), p, mod2pi(beta - tmp)]
            })
        }
        DubinsWord::Rlr => {
            let tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
            (tmp.abs() <= 1.0).then(|| {
                let phi = (ca - cb).atan2(d - sa + sb);
                let p = mod2pi(TAU - tmp.acos());
                let t = mod2pi(alpha - phi + mod2pi(p / 2.0));
                [t, p, mod2pi(alpha - beta - t + p)]
            })
        }
        DubinsWord::Lrl => {
            let tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
            (tmp.abs() <= 1.0).then(|| {
                let phi = (ca - cb).atan2(d + sa - sb);
                let p = mod2pi(TAU - tmp.acos());
                let t = mod2pi(-alpha - phi + p / 2.0);
                [t, p, mod2pi(beta - alpha - t + p)]
            })
        }
    }
}

/// Every geometrically valid word between `q0` and `q1`, each checked by
/// integrating it forward.
pub fn candidate_paths(q0: Pose, q1: Pose, rho: f64) -> Vec<DubinsResult> {
    assert!(rho > 0.0, "turn radius must be positive");
    let (dx, dy) = (q1.x - q0.x, q1.y - q0.y);
    let dist = dx.hypot(dy);
    let scale = dist.max(rho);
    if dist <= 1e-12 * scale && normalize_angle(q1.heading - q0.heading).abs() <= 1e-12 {
        return vec![DubinsResult {
            word: DubinsWord::Lsl,
            segments: [0.0; 3],
            total: 0.0,
        }];
    }
    let d = dist / rho;
    let theta = if dist > 0.0 { dy.atan2(dx) } else { 0.0 };
    let alpha = mod2pi(q0.heading - theta);
    let beta = mod2pi(q1.heading - theta);
    DubinsWord::ALL
        .iter()
        .filter_map(|&word| {
            let params = word_params(word, d, alpha, beta)?;
            let segments = params.map(|v| v * rho);
            let path = DubinsResult {
                word,
                segments,
                total: segments.iter().sum(),
            };
            let end = path.endpoint(q0, rho);
            let err = end.distance(&q1) + rho * normalize_angle(end.heading - q1.heading).abs();
            (err <= 1e-7 * scale).then_some(path)
        })
        .collect()
}

pub fn shortest_path(q0: Pose, q1: Pose, rho: f64) -> DubinsResult {
    candidate_paths(q0, q1, rho)
        .into_iter()
        .min_by(|a, b| a.total.total_cmp(&b.total))
        .expect("a Dubins path always exists")
}

/// Whole steps needed to drive the shortest path at `v_max` with sample time
/// `ts`, i.e. `⌈L / (v_max ts)⌉`.
pub fn completion_steps(q: Pose, target: Pose, rho: f64, v_max: f64, ts: f64) -> usize {
    assert!(v_max > 0.0 && ts > 0.0);
    let len = shortest_path(q, target, rho).total;
    let steps = len / (v_max * ts);
    // Absorb round-off so that a length of exactly n steps is n, not n + 1.
    (steps - 1e-9 * steps.max(1.0)).ceil().max(0.0) as usize
}
