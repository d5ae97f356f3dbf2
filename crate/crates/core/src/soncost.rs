//! Temporally weighted sum-of-norm objective and terminal-step bookkeeping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::State;

/// Lower clamp applied to the logarithmic family so that `ω(1) > 0`.
pub const LOG_WEIGHT_FLOOR: f64 = 1e-6;

/// Default tolerance under which a state counts as having reached the origin.
pub const DEFAULT_ZERO_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Const,
    Lin,
    Log,
    Quad,
    Custom(Vec<f64>),
}

impl WeightKind {
    pub fn label(&self) -> &'static str {
        match self {
            WeightKind::Const => "const",
            WeightKind::Lin => "lin",
            WeightKind::Log => "log",
            WeightKind::Quad => "quad",
            WeightKind::Custom(_) => "custom",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "const" => Ok(WeightKind::Const),
            "lin" => Ok(WeightKind::Lin),
            "log" => Ok(WeightKind::Log),
            "quad" => Ok(WeightKind::Quad),
            _ => Err(Error::UnknownWeightKind(s.to_string())),
        }
    }
}

/// `ω(1..Γ)`, strictly positive and nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSequence {
    pub kind: WeightKind,
    values: Vec<f64>,
}

impl WeightSequence {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight at 1-indexed step `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub fn weight_sequence(kind: &WeightKind, horizon: usize) -> Result<WeightSequence> {
    if horizon < 2 {
        return Err(Error::invalid("horizon", "need at least two steps"));
    }
    let values: Vec<f64> = match kind {
        WeightKind::Const => vec![1.0; horizon],
        WeightKind::Lin => (1..=horizon).map(|k| k as f64).collect(),
        WeightKind::Log => (1..=horizon)
            .map(|k| (k as f64).ln().max(LOG_WEIGHT_FLOOR))
            .collect(),
        WeightKind::Quad => (1..=horizon).map(|k| (k * k) as f64).collect(),
        WeightKind::Custom(v) => {
            if v.len() != horizon {
                return Err(Error::DimensionMismatch {
                    context: "custom weights",
                    expected: horizon,
                    actual: v.len(),
                });
            }
            if v.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::invalid("weights", "custom weights must be positive"));
            }
            if v.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::invalid("weights", "custom weights must be nondecreasing"));
            }
            v.clone()
        }
    };
    Ok(WeightSequence {
        kind: kind.clone(),
        values,
    })
}

pub fn norm_profile(states: &[State]) -> Vec<f64> {
    states.iter().map(|x| x.norm()).collect()
}

/// `(1/m) Σᵢ Σₖ ω(k) ‖xⁱ(k)‖₂`.
pub fn expected_sonc_cost(trajectories: &[Vec<State>], weights: &WeightSequence) -> Result<f64> {
    if trajectories.is_empty() {
        return Err(Error::invalid("trajectories", "need at least one trajectory"));
    }
    let mut total = 0.0;
    for traj in trajectories {
        if traj.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory length",
                expected: weights.len(),
                actual: traj.len(),
            });
        }
        total += traj
            .iter()
            .zip(weights.values())
            .map(|(x, w)| w * x.norm())
            .sum::<f64>();
    }
    Ok(total / trajectories.len() as f64)
}

/// Smallest 1-indexed `k` such that every norm from `k` on is `≤ tol`.
pub fn terminal_step_of_norms(norms: &[f64], tol: f64) -> Option<usize> {
    let tail = norms.iter().rev().take_while(|n| **n <= tol).count();
    (tail > 0).then(|| norms.len() - tail + 1)
}

pub fn terminal_step(states: &[State], tol: f64) -> Option<usize> {
    terminal_step_of_norms(&norm_profile(states), tol)
}

/// True iff the set of steps with norm `≤ tol` is a suffix of `1..Γ`.
pub fn persists_at_zero(norms: &[f64], tol: f64) -> bool {
    match norms.iter().position(|n| *n <= tol) {
        None => true,
        Some(first) => norms[first..].iter().all(|n| *n <= tol),
    }
}

pub fn check_persistence(trajectories: &[Vec<State>], tol: f64) -> Vec<bool> {
    trajectories
        .iter()
        .map(|t| persists_at_zero(&norm_profile(t), tol))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalReport {
    pub steps: Vec<Option<usize>>,
    /// Mean over converged particles; `None` when none converged.
    pub mean: Option<f64>,
}

impl TerminalReport {
    pub fn from_trajectories(trajectories: &[Vec<State>], tol: f64) -> Self {
        let steps: Vec<Option<usize>> = trajectories.iter().map(|t| terminal_step(t, tol)).collect();
        let done: Vec<f64> = steps.iter().flatten().map(|s| *s as f64).collect();
        let mean = (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64);
        Self { steps, mean }
    }

    pub fn converged(&self) -> usize {
        self.steps.iter().flatten().count()
    }
}
