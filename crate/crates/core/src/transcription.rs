//! Builds the particle sum-of-norm program and its linearized, penalized
//! counterpart for sequential solves.
//!
//! Layout conventions (all indices 0-based internally):
//! - states `xⁱ(k)` for `k = 0..Γ` (one block per particle);
//! - controls `k = 0..T̄c−1` are a single shared block `ū(k)`, substituted
//!   for every particle; controls `k = T̄c−1..Γ−1` are per particle;
//! - one epigraph scalar `tᵢₖ ≥ ‖xⁱ(k)‖₂` per particle and step;
//! - for the penalized subproblem, virtual controls `νⁱ(k) = ν⁺ − ν⁻`
//!   and trust-region scalars.
//!
//! The destination is the origin.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, ConicSettings};
use crate::error::{Error, Result};
use crate::models::{Control, DynamicsModel, Linearization, State};
use crate::scp::{ScalingMap, TrajectorySolution};
use crate::soncost::{weight_sequence, WeightKind, WeightSequence};
use crate::stochastic::ParticleEnsemble;

const FREE: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustNorm {
    Inf,
    One,
}

/// Penalized-trust-region parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtrParams {
    /// Weight on `‖ν‖₁` (normalized units).
    pub w_vc: f64,
    /// Weight on the trust-region deviation norm.
    pub w_tr: f64,
    /// Convergence threshold on the ∞-norm change of normalized variables.
    pub delta_tol: f64,
    pub trust_norm: TrustNorm,
    pub max_iter: usize,
    /// `‖ν‖₁` (normalized) must fall below this for convergence.
    pub vc_tol: f64,
    /// Fractional inflation of the state envelope used for scaling.
    pub scaling_margin: f64,
}

impl Default for PtrParams {
    fn default() -> Self {
        Self {
            w_vc: 1e2,
            w_tr: 1e-2,
            delta_tol: 5e-3,
            trust_norm: TrustNorm::Inf,
            max_iter: 30,
            vc_tol: 1e-6,
            scaling_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub horizon: usize,
    pub consensus_horizon: usize,
    pub weights: WeightSequence,
    pub ptr: PtrParams,
    pub conic: ConicSettings,
    /// Constant control used by the initial guess; model default when `None`.
    pub guess_control: Option<Vec<f64>>,
}

impl SolveConfig {
    pub fn new(horizon: usize, consensus_horizon: usize, weights: &WeightKind) -> Result<Self> {
        let cfg = Self {
            horizon,
            consensus_horizon,
            weights: weight_sequence(weights, horizon)?,
            ptr: PtrParams::default(),
            conic: ConicSettings::default(),
            guess_control: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same settings with a different horizon and consensus horizon; the
    /// weight family is re-generated for the new horizon.
    pub fn with_horizons(&self, horizon: usize, consensus_horizon: usize) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.horizon = horizon;
        cfg.consensus_horizon = consensus_horizon;
        cfg.weights = weight_sequence(&self.weights.kind, horizon)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_weights(&self, kind: &WeightKind) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.weights = weight_sequence(kind, self.horizon)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", "need at least two steps"));
        }
        if self.consensus_horizon < 2 || self.consensus_horizon > self.horizon {
            return Err(Error::invalid(
                "consensus_horizon",
                format!("must lie in 2..={} (horizon), got {}", self.horizon, self.consensus_horizon),
            ));
        }
        if self.weights.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "weights",
                expected: self.horizon,
                actual: self.weights.len(),
            });
        }
        if !(self.ptr.w_vc > 0.0 && self.ptr.w_tr > 0.0 && self.ptr.delta_tol > 0.0) {
            return Err(Error::invalid("ptr", "w_vc, w_tr and delta_tol must be positive"));
        }
        if self.ptr.scaling_margin < 0.0 {
            return Err(Error::invalid("ptr.scaling_margin", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    pub particles: usize,
    pub horizon: usize,
    pub consensus_horizon: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    states: usize,
    consensus: usize,
    free: usize,
    epigraph: usize,
    virtual_plus: Option<usize>,
    virtual_minus: Option<usize>,
    trust: Option<Range<usize>>,
    total: usize,
}

impl VariableLayout {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn num_states(&self) -> usize {
        self.particles * self.horizon * self.state_dim
    }

    /// Number of shared control steps, `T̄c − 1`.
    pub fn shared_steps(&self) -> usize {
        self.consensus_horizon - 1
    }

    pub fn num_consensus(&self) -> usize {
        self.shared_steps() * self.control_dim
    }

    pub fn num_free_controls(&self) -> usize {
        self.particles * (self.horizon - self.consensus_horizon) * self.control_dim
    }

    pub fn num_epigraph(&self) -> usize {
        self.particles * self.horizon
    }

    pub fn num_virtual(&self) -> usize {
        if self.virtual_plus.is_some() {
            2 * self.particles * (self.horizon - 1) * self.state_dim
        } else {
            0
        }
    }

    pub fn trust_range(&self) -> Option<Range<usize>> {
        self.trust.clone()
    }

    pub fn state(&self, i: usize, k: usize, c: usize) -> usize {
        self.states + (i * self.horizon + k) * self.state_dim + c
    }

    pub fn is_shared(&self, k: usize) -> bool {
        k < self.shared_steps()
    }

    pub fn control(&self, i: usize, k: usize, c: usize) -> usize {
        if self.is_shared(k) {
            self.consensus + k * self.control_dim + c
        } else {
            let per = self.horizon - self.consensus_horizon;
            self.free + (i * per + (k - self.shared_steps())) * self.control_dim + c
        }
    }

    pub fn epigraph(&self, i: usize, k: usize) -> usize {
        self.epigraph + i * self.horizon + k
    }

    fn virtual_offset(&self, i: usize, k: usize, c: usize) -> usize {
        (i * (self.horizon - 1) + k) * self.state_dim + c
    }

    pub fn virtual_plus(&self, i: usize, k: usize, c: usize) -> Option<usize> {
        self.virtual_plus.map(|s| s + self.virtual_offset(i, k, c))
    }

    pub fn virtual_minus(&self, i: usize, k: usize, c: usize) -> Option<usize> {
        self.virtual_minus.map(|s| s + self.virtual_offset(i, k, c))
    }

    pub fn extract_states(&self, x: &[f64]) -> Vec<Vec<State>> {
        (0..self.particles)
            .map(|i| {
                (0..self.horizon)
                    .map(|k| State::from_fn(self.state_dim, |c, _| x[self.state(i, k, c)]))
                    .collect()
            })
            .collect()
    }

    pub fn extract_controls(&self, x: &[f64]) -> Vec<Vec<Control>> {
        (0..self.particles)
            .map(|i| {
                (0..self.horizon - 1)
                    .map(|k| Control::from_fn(self.control_dim, |c, _| x[self.control(i, k, c)]))
                    .collect()
            })
            .collect()
    }

    pub fn extract_consensus(&self, x: &[f64]) -> Vec<Control> {
        (0..self.shared_steps())
            .map(|k| Control::from_fn(self.control_dim, |c, _| x[self.control(0, k, c)]))
            .collect()
    }

    /// Per-particle virtual controls `ν⁺ − ν⁻`; empty when absent.
    pub fn extract_virtual(&self, x: &[f64]) -> Vec<Vec<State>> {
        if self.virtual_plus.is_none() {
            return Vec::new();
        }
        (0..self.particles)
            .map(|i| {
                (0..self.horizon - 1)
                    .map(|k| {
                        State::from_fn(self.state_dim, |c, _| {
                            x[self.virtual_plus(i, k, c).unwrap()] - x[self.virtual_minus(i, k, c).unwrap()]
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

fn check_inputs(model: &DynamicsModel, ensemble: &ParticleEnsemble, cfg: &SolveConfig) -> Result<()> {
    cfg.validate()?;
    if ensemble.is_empty() {
        return Err(Error::invalid("ensemble", "need at least one particle"));
    }
    if ensemble.state_dim() != model.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "ensemble state",
            expected: model.state_dim(),
            actual: ensemble.state_dim(),
        });
    }
    Ok(())
}

/// Variables, initial conditions, control bounds, epigraph cones and the
/// sum-of-norm objective shared by both builders.
fn base_program(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
) -> (ConicProgram, VariableLayout) {
    let (m, horizon, tc) = (ensemble.len(), cfg.horizon, cfg.consensus_horizon);
    let (nx, nu) = (model.state_dim(), model.control_dim());
    let mut prog = ConicProgram::new();
    let states = prog.add_variables(m * horizon * nx, -FREE, FREE).start;
    let consensus = prog.add_variables((tc - 1) * nu, -FREE, FREE).start;
    let free = prog.add_variables(m * (horizon - tc) * nu, -FREE, FREE).start;
    let epigraph = prog.add_variables(m * horizon, 0.0, FREE).start;
    let total = prog.num_vars();
    let layout = VariableLayout {
        particles: m,
        horizon,
        consensus_horizon: tc,
        state_dim: nx,
        control_dim: nu,
        states,
        consensus,
        free,
        epigraph,
        virtual_plus: None,
        virtual_minus: None,
        trust: None,
        total,
    };

    let bounds = model.control_box();
    for j in consensus..epigraph {
        let c = (j - consensus) % nu;
        prog.set_bounds(j, bounds.lower[c], bounds.upper[c]);
    }
    for (i, x1) in ensemble.particles.iter().enumerate() {
        for c in 0..nx {
            let j = layout.state(i, 0, c);
            prog.set_bounds(j, x1[c], x1[c]);
        }
    }
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        for k in 0..horizon {
            let t = layout.epigraph(i, k);
            prog.add_cost(t, cfg.weights.at(k + 1) * inv_m);
            prog.add_soc(t, (0..nx).map(|c| layout.state(i, k, c)).collect());
        }
    }
    (prog, layout)
}

/// Adds `x(k+1) − A x(k) − B u(k) [− ν⁺ + ν⁻] = c` for every particle/step.
fn add_dynamics(prog: &mut ConicProgram, layout: &VariableLayout, lin: &dyn Fn(usize, usize) -> Linearization) {
    let (nx, nu) = (layout.state_dim, layout.control_dim);
    for i in 0..layout.particles {
        for k in 0..layout.horizon - 1 {
            let l = lin(i, k);
            for r in 0..nx {
                let mut terms = Vec::with_capacity(2 + nx + nu);
                terms.push((layout.state(i, k + 1, r), 1.0));
                for c in 0..nx {
                    let a = l.a[(r, c)];
                    if a != 0.0 {
                        terms.push((layout.state(i, k, c), -a));
                    }
                }
                for c in 0..nu {
                    let b = l.b[(r, c)];
                    if b != 0.0 {
                        terms.push((layout.control(i, k, c), -b));
                    }
                }
                if let (Some(p), Some(n)) = (layout.virtual_plus(i, k, r), layout.virtual_minus(i, k, r)) {
                    terms.push((p, -1.0));
                    terms.push((n, 1.0));
                }
                prog.add_equality(terms, l.c[r]);
            }
        }
    }
}

/// The particle sum-of-norm program for linear dynamics.
pub fn build_linear_program(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
) -> Result<(ConicProgram, VariableLayout)> {
    let lin = model.as_linear().ok_or(Error::NonlinearModel)?;
    check_inputs(model, ensemble, cfg)?;
    let (mut prog, layout) = base_program(model, ensemble, cfg);
    let fixed = model.jacobians(&State::zeros(model.state_dim()), &Control::zeros(model.control_dim()));
    debug_assert_eq!(fixed.a, lin.a);
    add_dynamics(&mut prog, &layout, &|_, _| fixed.clone());
    Ok((prog, layout))
}

/// Linearized subproblem about `reference` with virtual-control and
/// trust-region penalties.
///
/// Penalties are measured in normalized units (`scales`) and multiplied by
/// `Σₖ ω(k)` so that their weights are relative to a unit-sum weight sequence.
/// The trust region covers only the components listed by
/// [`DynamicsModel::nonlinear_components`]; for a linear model it is empty
/// and the subproblem is the exact problem plus virtual control.
pub fn build_ptr_subproblem(
    model: &DynamicsModel,
    ensemble: &ParticleEnsemble,
    cfg: &SolveConfig,
    reference: &TrajectorySolution,
    scales: &ScalingMap,
) -> Result<(ConicProgram, VariableLayout)> {
    check_inputs(model, ensemble, cfg)?;
    scales.check_dims(model)?;
    let m = ensemble.len();
    if reference.states.len() != m
        || reference.controls.len() != m
        || reference.states.iter().any(|s| s.len() != cfg.horizon)
        || reference.controls.iter().any(|u| u.len() + 1 != cfg.horizon)
    {
        return Err(Error::invalid("reference", "does not match ensemble size and horizon"));
    }

    let (mut prog, mut layout) = base_program(model, ensemble, cfg);
    let (nx, horizon) = (layout.state_dim, layout.horizon);
    let penalty_scale = cfg.weights.total();

    let n_vc = m * (horizon - 1) * nx;
    let plus = prog.add_variables(n_vc, 0.0, FREE).start;
    let minus = prog.add_variables(n_vc, 0.0, FREE).start;
    layout.virtual_plus = Some(plus);
    layout.virtual_minus = Some(minus);
    for i in 0..m {
        for k in 0..horizon - 1 {
            for c in 0..nx {
                let w = penalty_scale * cfg.ptr.w_vc / scales.state[c].span;
                prog.add_cost(layout.virtual_plus(i, k, c).unwrap(), w);
                prog.add_cost(layout.virtual_minus(i, k, c).unwrap(), w);
            }
        }
    }

    // (variable, reference value, span) for every decision variable under the
    // trust region. Initial states are fixed and omitted.
    let (state_comps, control_comps) = model.nonlinear_components();
    let mut tracked: Vec<(usize, f64, f64)> = Vec::new();
    for i in 0..m {
        for k in 1..horizon {
            for &c in &state_comps {
                tracked.push((layout.state(i, k, c), reference.states[i][k][c], scales.state[c].span));
            }
        }
    }
    for k in 0..horizon - 1 {
        let owners: Vec<usize> = if layout.is_shared(k) { vec![0] } else { (0..m).collect() };
        for i in owners {
            let value = if layout.is_shared(k) {
                &reference.consensus[k]
            } else {
                &reference.controls[i][k]
            };
            for &c in &control_comps {
                tracked.push((layout.control(i, k, c), value[c], scales.control[c].span));
            }
        }
    }
    let w_tr = penalty_scale * cfg.ptr.w_tr;
    match cfg.ptr.trust_norm {
        _ if tracked.is_empty() => {}
        TrustNorm::Inf => {
            let eta = prog.add_variables(1, 0.0, FREE);
            prog.add_cost(eta.start, w_tr);
            for (j, r, span) in &tracked {
                prog.add_inequality(vec![(*j, 1.0 / span), (eta.start, -1.0)], r / span);
                prog.add_inequality(vec![(*j, -1.0 / span), (eta.start, -1.0)], -r / span);
            }
            layout.trust = Some(eta);
        }
        TrustNorm::One => {
            let aux = prog.add_variables(tracked.len(), 0.0, FREE);
            for (a, (j, r, span)) in aux.clone().zip(&tracked) {
                prog.add_cost(a, w_tr);
                prog.add_inequality(vec![(*j, 1.0 / span), (a, -1.0)], r / span);
                prog.add_inequality(vec![(*j, -1.0 / span), (a, -1.0)], -r / span);
            }
            layout.trust = Some(aux);
        }
    }
    layout.total = prog.num_vars();

    let mut lins = Vec::with_capacity(m);
    for i in 0..m {
        lins.push(model.linearize_along(&reference.states[i], &reference.controls[i])?);
    }
    add_dynamics(&mut prog, &layout, &|i, k| lins[i][k].clone());
    Ok((prog, layout))
}
