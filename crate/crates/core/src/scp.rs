//! Penalized-trust-region sequential convex programming.
//!
//! Linear models are solved with a single conic solve. Nonlinear models start
//! from a straight-line guess and repeatedly re-linearize about the latest
//! subproblem solution until the largest normalized change of any state or
//! control drops below `δ_tol` and the virtual control has vanished.

use log::{debug, info, warn};
use serde::Serialize;

use crate::conic::{solve, ConicSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::models::{Control, DynamicsModel, State};
use crate::soncost::expected_sonc_cost;
use crate::stochastic::ParticleEnsemble;
use crate::transcription::{build_linear_program, build_ptr_subproblem, SolveConfig, VariableLayout};

/// `v ↦ (v − lo) / span`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    pub lo: f64,
    pub span: f64,
}

impl AffineMap {
    /// Interval `[lo, hi]`; zero-width or non-finite intervals are repaired
    /// to unit width around their center.
    pub fn from_interval(lo: f64, hi: f64) -> Self {
        let span = hi - lo;
        if span.is_finite() && span > 0.0 {
            Self { lo, span }
        } else {
            let center = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            };
            Self { lo: center - 0.5, span: 1.0 }
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.lo) / self.span
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.lo + v * self.span
    }
}

/// Per-component normalization of states and controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingMap {
    pub state: Vec<AffineMap>,
    pub control: Vec<AffineMap>,
}

impl ScalingMap {
    pub fn check_dims(&self, model: &DynamicsModel) -> Result<()> {
        if self.state.len() != model.state_dim() || self.control.len() != model.control_dim() {
            return Err(Error::Scaling(format!(
                "expected {}/{} state/control maps, got {}/{}",
                model.state_dim(),
                model.control_dim(),
                self.state.len(),
                self.control.len()
            )));
        }
        if self.state.iter().chain(&self.control).any(|a| !(a.span > 0.0) || !a.lo.is_finite()) {
            return Err(Error::Scaling("non-invertible map".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub deviation: f64,
    pub virtual_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySolution {
    /// `xⁱ(1..Γ)` per particle.
    pub states: Vec<Vec<State>>,
    /// `uⁱ(1..Γ−1)` per particle; the first `T̄c − 1` entries equal `consensus`.
    pub controls: Vec<Vec<Control>>,
    /// `ū(1..T̄c−1)`.
    pub consensus: Vec<Control>,
    /// Sum-of-norm objective of `states`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl TrajectorySolution {
    fn from_primal(layout: &VariableLayout, primal: &[f64], objective: f64) -> Self {
        Self {
            states: layout.extract_states(primal),
            controls: layout.extract_controls(primal),
            consensus: layout.extract_consensus(primal),
            objective,
            iterations: 1,
            converged: true,
            history: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Largest normalized change of any state or control between two
    /// solutions of identical shape.
    pub fn max_deviation(&self, other: &TrajectorySolution, scales: &ScalingMap) -> f64 {
        let mut dev: f64 = 0.0;
        for (a, b) in self.states.iter().flatten().zip(other.states.iter().flatten()) {
            for (c, map) in scales.state.iter().enumerate() {
                dev = dev.max((a[c] - b[c]).abs() / map.span);
            }
        }
        for (a, b) in self.controls.iter().flatten().zip(other.controls.iter().flatten()) {
            for (c, map) in scales.control.iter().enumerate() {
                dev = dev.max((a[c] - b[c]).abs() / map.span);
            }
        }
        dev
    }
}

/// Straight-line state interpolation from each particle to `x_f` with a
/// constant control.
pub fn initial_guess(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
    x_f: &State,
) -> TrajectorySolution {
    let horizon = cfg.horizon;
    let u = cfg
        .guess_control
        .as_ref()
        .map(|g| Control::from_column_slice(g))
        .unwrap_or_else(|| model.default_guess_control());
    let states = ensemble
        .particles
        .iter()
        .map(|x1| {
            (0..horizon)
                .map(|k| {
                    let s = k as f64 / (horizon - 1) as f64;
                    x1 + (x_f - x1) * s
                })
                .collect()
        })
        .collect();
    TrajectorySolution {
        states,
        controls: vec![vec![u.clone(); horizon - 1]; ensemble.len()],
        consensus: vec![u; cfg.consensus_horizon - 1],
        objective: f64::NAN,
        iterations: 0,
        converged: false,
        history: Vec::new(),
    }
}

/// Controls map their box onto `[0, 1]`; states map the envelope of the
/// initial guess, widened by `scaling_margin` of its width, onto `[0, 1]`.
pub fn make_scaling(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
    x_f: &State,
) -> ScalingMap {
    let guess = initial_guess(model, ensemble, cfg, x_f);
    let margin = cfg.ptr.scaling_margin;
    let state = (0..model.state_dim())
        .map(|c| {
            let (lo, hi) = guess
                .states
                .iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[c]), hi.max(x[c])));
            let pad = 0.5 * margin * (hi - lo);
            AffineMap::from_interval(lo - pad, hi + pad)
        })
        .collect();
    let bounds = model.control_box();
    let control = (0..model.control_dim())
        .map(|c| {
            let (lo, hi) = (bounds.lower[c], bounds.upper[c]);
            if lo.is_finite() && hi.is_finite() {
                AffineMap::from_interval(lo, hi)
            } else {
                let g = guess.consensus.first().map_or(0.0, |u| u[c]);
                AffineMap::from_interval(g, g)
            }
        })
        .collect();
    ScalingMap { state, control }
}

fn check_status(sol: &ConicSolution, iteration: usize) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Inaccurate => {
            warn!("subproblem {iteration} solved to reduced accuracy");
            Ok(())
        }
        status => Err(Error::SubproblemFailed { iteration, status }),
    }
}

/// One conic solve of the linear particle program.
pub fn solve_linear(model: &DynamicsModel, ensemble: &ParticleEnsemble, cfg: &SolveConfig) -> Result<TrajectorySolution> {
    let (prog, layout) = build_linear_program(model, ensemble, cfg)?;
    let sol = solve(&prog, &cfg.conic)?;
    check_status(&sol, 1)?;
    let mut out = TrajectorySolution::from_primal(&layout, &sol.primal, sol.objective);
    out.history.push(IterationRecord {
        iteration: 1,
        objective: sol.objective,
        deviation: 0.0,
        virtual_control: 0.0,
    });
    Ok(out)
}

/// The sequential loop, usable for any model.
pub fn solve_ptr(model: &DynamicsModel, ensemble: &ParticleEnsemble, cfg: &SolveConfig) -> Result<TrajectorySolution> {
    let x_f = State::zeros(model.state_dim());
    let scales = make_scaling(model, ensemble, cfg, &x_f);
    let mut reference = initial_guess(model, ensemble, cfg, &x_f);
    let mut history = Vec::new();

    for iteration in 1..=cfg.ptr.max_iter {
        let (prog, layout) = build_ptr_subproblem(model, ensemble, cfg, &reference, &scales)?;
        let sol = solve(&prog, &cfg.conic)?;
        check_status(&sol, iteration)?;

        let nu = layout.extract_virtual(&sol.primal);
        let vc: f64 = nu
            .iter()
            .flatten()
            .map(|v| v.iter().zip(&scales.state).map(|(x, m)| x.abs() / m.span).sum::<f64>())
            .sum();
        let states = layout.extract_states(&sol.primal);
        let objective = expected_sonc_cost(&states, &cfg.weights)?;
        let next = TrajectorySolution {
            states,
            controls: layout.extract_controls(&sol.primal),
            consensus: layout.extract_consensus(&sol.primal),
            objective,
            iterations: iteration,
            converged: false,
            history: Vec::new(),
        };
        let deviation = next.max_deviation(&reference, &scales);
        debug!(
            "scp iteration={iteration} objective={objective:.6e} deviation={deviation:.3e} vc={vc:.3e} status={:?}",
            sol.status
        );
        history.push(IterationRecord {
            iteration,
            objective,
            deviation,
            virtual_control: vc,
        });
        reference = next;
        if deviation <= cfg.ptr.delta_tol && vc <= cfg.ptr.vc_tol {
            info!("scp converged in {iteration} iterations (objective {objective:.6e})");
            reference.converged = true;
            reference.history = history;
            return Ok(reference);
        }
    }
    warn!("scp hit the iteration cap of {}", cfg.ptr.max_iter);
    reference.history = history;
    Ok(reference)
}

/// Direct solve for linear models, sequential solve otherwise.
pub fn solve_expected_time(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
) -> Result<TrajectorySolution> {
    if model.is_linear() {
        solve_linear(model, ensemble, cfg)
    } else {
        solve_ptr(model, ensemble, cfg)
    }
}
