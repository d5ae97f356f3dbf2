//! Experiment engines: open-loop Monte Carlo evaluation, closed-loop
//! replanning, the deterministic minimum-time baseline and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use log::{info, warn};
use serde::Serialize;

use crate::dubins::{completion_steps, pose_from_car_state};
use crate::error::{Error, Result};
use crate::models::{Control, DynamicsModel, ModelKind, State};
use crate::par::map_indexed;
use crate::scp::{solve_expected_time, TrajectorySolution};
use crate::soncost::{terminal_step, WeightKind, DEFAULT_ZERO_TOL};
use crate::stochastic::{derive_seed, measurement_update, sample_ensemble, GaussianSpec, ParticleEnsemble};
use crate::transcription::SolveConfig;

/// Samples at or above this many terminal steps form the "slow" group.
pub const DEFAULT_SLOW_THRESHOLD: usize = 20;
pub const DEFAULT_CLOSED_LOOP_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MAX_STEPS: usize = 300;

// Sub-seed tags so that each random quantity has its own stream.
const TAG_ENSEMBLE: u64 = 1;
const TAG_EVAL: u64 = 2;
const TAG_TRUE_STATE: u64 = 3;
const TAG_MEASUREMENT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Proposed,
    Baseline,
}

impl Policy {
    pub fn label(self) -> &'static str {
        match self {
            Policy::Proposed => "proposed",
            Policy::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Seed actually used for the particle ensemble of a run with master `seed`.
pub fn ensemble_seed(seed: u64, replan: u64) -> u64 {
    derive_seed(seed, TAG_ENSEMBLE, replan)
}

pub fn evaluation_seed(seed: u64) -> u64 {
    derive_seed(seed, TAG_EVAL, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McOptions {
    pub n_mc: usize,
    pub seed: u64,
    /// A state with norm at most this counts as at the destination.
    pub zero_tol: f64,
    pub slow_threshold: usize,
    /// Worker cap; `Some(1)` forces sequential evaluation.
    pub jobs: Option<usize>,
    pub include_baseline: bool,
    /// Turn radius of the Dubins completion; `v_max / steer_max` when `None`.
    pub turn_radius: Option<f64>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_mc: 1000,
            seed: 0,
            zero_tol: DEFAULT_ZERO_TOL,
            slow_threshold: DEFAULT_SLOW_THRESHOLD,
            jobs: None,
            include_baseline: true,
            turn_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub policy: Policy,
    pub terminal_steps: Option<usize>,
    pub converged: bool,
    /// Propagation produced a non-finite state.
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean: Option<f64>,
}

impl GroupStats {
    fn of(values: &[usize]) -> Self {
        Self {
            count: values.len(),
            mean: mean_of(values),
        }
    }
}

fn mean_of(values: &[usize]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().map(|v| *v as f64).sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub records: Vec<SampleRecord>,
    /// Mean over converged samples only.
    pub mean: Option<f64>,
    pub converged: usize,
    pub non_converged: usize,
    pub diverged: usize,
    /// `(terminal steps, count)` over converged samples, ascending.
    pub histogram: Vec<(usize, usize)>,
    pub fast: GroupStats,
    pub slow: GroupStats,
    pub slow_threshold: usize,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

impl PolicySummary {
    pub fn from_records(
        policy: Policy,
        records: Vec<SampleRecord>,
        slow_threshold: usize,
        plan: &TrajectorySolution,
    ) -> Self {
        let steps: Vec<usize> = records.iter().filter_map(|r| r.terminal_steps).collect();
        let mut hist = BTreeMap::new();
        for s in &steps {
            *hist.entry(*s).or_insert(0usize) += 1;
        }
        let (fast, slow): (Vec<usize>, Vec<usize>) = steps.iter().partition(|s| **s < slow_threshold);
        let diverged = records.iter().filter(|r| r.diverged).count();
        Self {
            policy,
            mean: mean_of(&steps),
            converged: steps.len(),
            non_converged: records.len() - steps.len() - diverged,
            diverged,
            histogram: hist.into_iter().collect(),
            fast: GroupStats::of(&fast),
            slow: GroupStats::of(&slow),
            slow_threshold,
            solver_iterations: plan.iterations,
            solver_converged: plan.converged,
            records,
        }
    }

    /// Fraction of all samples in the slow group.
    pub fn slow_fraction(&self) -> f64 {
        self.slow.count as f64 / self.records.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub seed: u64,
    pub ensemble_seed: u64,
    pub evaluation_seed: u64,
    pub n_mc: usize,
    pub proposed: PolicySummary,
    pub baseline: Option<PolicySummary>,
}

impl McSummary {
    pub fn policies(&self) -> impl Iterator<Item = &PolicySummary> {
        std::iter::once(&self.proposed).chain(self.baseline.as_ref())
    }

    /// `sample_id,policy,terminal_steps,converged`, one row per sample and
    /// policy. Non-converged samples leave `terminal_steps` empty.
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "sample_id,policy,terminal_steps,converged")?;
        for p in self.policies() {
            for r in &p.records {
                let steps = r.terminal_steps.map(|s| s.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", r.sample_id, r.policy, steps, r.converged)?;
            }
        }
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "policy,terminal_steps,count")?;
        for p in self.policies() {
            for (steps, count) in &p.histogram {
                writeln!(out, "{},{},{}", p.policy, steps, count)?;
            }
        }
        Ok(())
    }
}

/// The single-particle, full-consensus instance of the same pipeline: the
/// sum-of-norm deterministic minimum-time controller from `x0`.
pub fn deterministic_min_time_policy(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    x0: &State,
) -> Result<TrajectorySolution> {
    let det = cfg.with_horizons(cfg.horizon, cfg.horizon)?;
    let ensemble = ParticleEnsemble::from_states(vec![x0.clone()])?;
    solve_expected_time(model, &ensemble, &det)
}

/// Open-loop controls a policy applies before handing off to the completion
/// controller.
fn consensus_block(sol: &TrajectorySolution, cfg: &SolveConfig) -> Vec<Control> {
    let n = cfg.consensus_horizon - 1;
    if sol.consensus.len() >= n {
        sol.consensus[..n].to_vec()
    } else {
        sol.controls[0][..n].to_vec()
    }
}

fn is_finite(x: &State) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Outcome of completing one sample from its handoff state.
enum Completion {
    /// Steps after the handoff state until the destination is reached.
    Steps(usize),
    NotReached,
}

/// Deterministic minimum-time completion from `x` (the state at index `T̄c`).
fn complete(model: &DynamicsModel, cfg: &SolveConfig, x: &State, opts: &McOptions) -> Result<Completion> {
    if x.norm() <= opts.zero_tol {
        return Ok(Completion::Steps(0));
    }
    match model.kind() {
        ModelKind::Dubins(car) => {
            let rho = opts.turn_radius.unwrap_or(car.v_max / car.steer_max);
            let target = pose_from_car_state(&State::zeros(3));
            let n = completion_steps(pose_from_car_state(x), target, rho, car.v_max, model.ts());
            Ok(Completion::Steps(n))
        }
        ModelKind::Linear(_) => {
            let sol = deterministic_min_time_policy(model, cfg, x)?;
            let traj = model.rollout(x, &sol.controls[0]);
            Ok(match terminal_step(&traj, opts.zero_tol) {
                Some(k) => Completion::Steps(k - 1),
                None => Completion::NotReached,
            })
        }
    }
}

/// Propagates every sample under `controls`, completes it, and returns the
/// per-sample records. Terminal steps count the steps taken: `T̄c − 1`
/// consensus steps plus the completion steps.
fn evaluate_policy(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    policy: Policy,
    controls: &[Control],
    samples: &[State],
    opts: &McOptions,
) -> Vec<SampleRecord> {
    map_indexed(samples.len(), opts.jobs, |id| {
        let handoff = model.rollout(&samples[id], controls).pop().expect("rollout keeps the initial state");
        let record = |steps: Option<usize>, diverged: bool| SampleRecord {
            sample_id: id,
            policy,
            terminal_steps: steps,
            converged: steps.is_some(),
            diverged,
        };
        if !is_finite(&handoff) {
            return record(None, true);
        }
        match complete(model, cfg, &handoff, opts) {
            Ok(Completion::Steps(n)) => record(Some(cfg.consensus_horizon - 1 + n), false),
            Ok(Completion::NotReached) => record(None, false),
            Err(e) => {
                warn!("{policy} sample {id}: completion failed: {e}");
                record(None, false)
            }
        }
    })
}

fn count_warnings(summary: &PolicySummary) {
    if summary.diverged > 0 {
        warn!("{}: {} samples diverged", summary.policy, summary.diverged);
    }
    if summary.non_converged > 0 {
        warn!("{}: {} samples did not reach the destination", summary.policy, summary.non_converged);
    }
}

/// Open-loop Monte Carlo evaluation of the proposed policy (and optionally
/// the deterministic baseline started at the distribution mean).
pub fn run_open_loop_mc(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    m: usize,
    dist: &GaussianSpec,
    opts: &McOptions,
) -> Result<McSummary> {
    if opts.n_mc == 0 {
        return Err(Error::invalid("n_mc", "need at least one Monte Carlo sample"));
    }
    cfg.validate()?;
    dist.validate()?;
    let ens_seed = ensemble_seed(opts.seed, 0);
    let eval_seed = evaluation_seed(opts.seed);
    let ensemble = sample_ensemble(dist, m, ens_seed)?;
    let plan = solve_expected_time(model, &ensemble, cfg)?;
    info!(
        "proposed plan: objective {:.6}, {} iterations, converged {}",
        plan.objective, plan.iterations, plan.converged
    );
    let samples = dist.draw(opts.n_mc, eval_seed);

    let records = evaluate_policy(model, cfg, Policy::Proposed, &consensus_block(&plan, cfg), &samples, opts);
    let proposed = PolicySummary::from_records(Policy::Proposed, records, opts.slow_threshold, &plan);
    count_warnings(&proposed);

    let baseline = if opts.include_baseline {
        let det = deterministic_min_time_policy(model, cfg, &dist.mean)?;
        let records = evaluate_policy(model, cfg, Policy::Baseline, &consensus_block(&det, cfg), &samples, opts);
        let summary = PolicySummary::from_records(Policy::Baseline, records, opts.slow_threshold, &det);
        count_warnings(&summary);
        Some(summary)
    } else {
        None
    };

    Ok(McSummary {
        seed: opts.seed,
        ensemble_seed: ens_seed,
        evaluation_seed: eval_seed,
        n_mc: opts.n_mc,
        proposed,
        baseline,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub mean: Option<f64>,
    pub converged: usize,
    pub non_converged: usize,
    pub diverged: usize,
}

impl SweepRow {
    fn new(parameter: &str, value: String, s: &PolicySummary) -> Self {
        Self {
            parameter: parameter.to_string(),
            value,
            mean: s.mean,
            converged: s.converged,
            non_converged: s.non_converged,
            diverged: s.diverged,
        }
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "parameter,value,mean_terminal_steps,converged,non_converged,diverged")?;
    for r in rows {
        let mean = r.mean.map(|m| format!("{m:.6}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.parameter, r.value, mean, r.converged, r.non_converged, r.diverged
        )?;
    }
    Ok(())
}

/// Proposed-policy mean terminal steps per weight family. All rows share the
/// seed and therefore the ensemble and evaluation samples.
pub fn sweep_weights(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    m: usize,
    dist: &GaussianSpec,
    kinds: &[WeightKind],
    opts: &McOptions,
) -> Result<Vec<SweepRow>> {
    let opts = McOptions {
        include_baseline: false,
        ..*opts
    };
    kinds
        .iter()
        .map(|kind| {
            let c = cfg.with_weights(kind)?;
            let s = run_open_loop_mc(model, &c, m, dist, &opts)?;
            info!("weights {kind}: mean {:?}", s.proposed.mean);
            Ok(SweepRow::new("weights", kind.to_string(), &s.proposed))
        })
        .collect()
}

pub fn sweep_consensus(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    m: usize,
    dist: &GaussianSpec,
    horizons: &[usize],
    opts: &McOptions,
) -> Result<Vec<SweepRow>> {
    let opts = McOptions {
        include_baseline: false,
        ..*opts
    };
    horizons
        .iter()
        .map(|&tc| {
            let c = cfg.with_horizons(cfg.horizon, tc)?;
            let s = run_open_loop_mc(model, &c, m, dist, &opts)?;
            info!("consensus horizon {tc}: mean {:?}", s.proposed.mean);
            Ok(SweepRow::new("consensus_horizon", tc.to_string(), &s.proposed))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedLoopOptions {
    pub seed: u64,
    /// Converged once the distance to the destination drops below this.
    pub threshold: f64,
    pub max_steps: usize,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            threshold: DEFAULT_CLOSED_LOOP_THRESHOLD,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replan {
    /// Number of steps already applied when the plan was made.
    pub step: usize,
    pub belief_mean: State,
    pub controls: Vec<Control>,
    pub solver_iterations: usize,
    pub solver_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub step: usize,
    pub value: State,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopTrace {
    pub policy: Policy,
    pub seed: u64,
    /// True state after `k` applied steps, `k = 0, 1, ...`.
    pub states: Vec<State>,
    pub distances: Vec<f64>,
    pub measurements: Vec<Measurement>,
    pub replans: Vec<Replan>,
    /// Applied steps until the distance first fell below the threshold.
    pub convergence_step: Option<usize>,
}

impl ClosedLoopTrace {
    pub fn converged(&self) -> bool {
        self.convergence_step.is_some()
    }

    /// `step,policy,distance,x0,...` per time step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let cols: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
        writeln!(out, "step,policy,distance,{}", cols.join(","))?;
        for (k, (x, d)) in self.states.iter().zip(&self.distances).enumerate() {
            let vals: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{k},{},{d:.17e},{}", self.policy, vals.join(","))?;
        }
        Ok(())
    }
}

/// Receding-horizon simulation: plan from the current belief, apply the
/// first `T̄c − 1` controls to the true state, measure it with `noise`, and
/// re-center the belief on the measurement. The destination is the origin.
///
/// The true initial state and every measurement are drawn from streams
/// derived from `opts.seed` only, so both policies see the same realization.
pub fn run_closed_loop(
    model: &DynamicsModel,
    cfg: &SolveConfig,
    m: usize,
    dist: &GaussianSpec,
    noise: &GaussianSpec,
    policy: Policy,
    opts: &ClosedLoopOptions,
) -> Result<ClosedLoopTrace> {
    if !(opts.threshold > 0.0) {
        return Err(Error::invalid("threshold", "must be positive"));
    }
    cfg.validate()?;
    dist.validate()?;
    noise.validate()?;
    let mut x = dist
        .draw(1, derive_seed(opts.seed, TAG_TRUE_STATE, 0))
        .pop()
        .expect("one draw");
    let mut belief = dist.clone();
    let mut trace = ClosedLoopTrace {
        policy,
        seed: opts.seed,
        states: vec![x.clone()],
        distances: vec![x.norm()],
        measurements: Vec::new(),
        replans: Vec::new(),
        convergence_step: None,
    };
    if x.norm() < opts.threshold {
        trace.convergence_step = Some(0);
        return Ok(trace);
    }
    let mut steps = 0usize;
    for r in 0.. {
        let plan = match policy {
            Policy::Proposed => {
                let ensemble = sample_ensemble(&belief, m, ensemble_seed(opts.seed, r))?;
                solve_expected_time(model, &ensemble, cfg)?
            }
            Policy::Baseline => deterministic_min_time_policy(model, cfg, &belief.mean)?,
        };
        let controls = consensus_block(&plan, cfg);
        trace.replans.push(Replan {
            step: steps,
            belief_mean: belief.mean.clone(),
            controls: controls.clone(),
            solver_iterations: plan.iterations,
            solver_converged: plan.converged,
        });
        for u in &controls {
            x = model.step(&x, u);
            steps += 1;
            let d = x.norm();
            trace.states.push(x.clone());
            trace.distances.push(d);
            if !d.is_finite() {
                warn!("closed loop diverged at step {steps}");
                return Ok(trace);
            }
            if d < opts.threshold {
                trace.convergence_step = Some(steps);
                return Ok(trace);
            }
            if steps >= opts.max_steps {
                warn!("closed loop hit the step cap of {}", opts.max_steps);
                return Ok(trace);
            }
        }
        belief = measurement_update(&x, noise, derive_seed(opts.seed, TAG_MEASUREMENT, r))?;
        trace.measurements.push(Measurement {
            step: steps,
            value: belief.mean.clone(),
        });
    }
    unreachable!("the replanning loop only exits by returning")
}
