//! JSON experiment configuration: schema, cross-field validation and the
//! builders that turn it into models, solver settings and distributions.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::ConicSettings;
use crate::error::{Error, Result};
use crate::harness::{
    ClosedLoopOptions, McOptions, DEFAULT_CLOSED_LOOP_THRESHOLD, DEFAULT_MAX_STEPS, DEFAULT_SLOW_THRESHOLD,
};
use crate::models::{double_integrator_nd, dubins_car, ControlBox, DynamicsModel};
use crate::soncost::{weight_sequence, WeightKind, DEFAULT_ZERO_TOL};
use crate::stochastic::GaussianSpec;
use crate::transcription::{PtrParams, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    DoubleIntegrator,
    Dubins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    McOpenLoop,
    ClosedLoop,
    SweepWeights,
    SweepConsensus,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::McOpenLoop => "mc-open-loop",
            Mode::ClosedLoop => "closed-loop",
            Mode::SweepWeights => "sweep-weights",
            Mode::SweepConsensus => "sweep-consensus",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelName,
    /// Planning horizon in time steps.
    pub horizon: usize,
    /// Fixed sample time. Exactly one of `sample_time` and `time_span` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_time: Option<f64>,
    /// Total time covered by the horizon; the sample time is
    /// `time_span / (horizon − 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_span: Option<f64>,
    /// Double integrator: number of position/velocity axes.
    #[serde(default = "default_axes")]
    pub axes: usize,
    /// Double integrator: `‖u‖∞` bound.
    #[serde(default = "default_control_bound")]
    pub control_bound: f64,
    /// Dubins car: speed bound, `0 ≤ v ≤ v_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    /// Dubins car: steering-rate bound, `|φ| ≤ steer_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer_max: Option<f64>,
}

fn default_axes() -> usize {
    2
}

fn default_control_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlock {
    pub mean: Vec<f64>,
    /// Row-major covariance matrix.
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianBlock {
    fn to_spec(&self) -> Result<GaussianSpec> {
        let n = self.mean.len();
        if self.covariance.len() != n || self.covariance.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "covariance",
                expected: n,
                actual: self.covariance.len(),
            });
        }
        let flat: Vec<f64> = self.covariance.iter().flatten().copied().collect();
        GaussianSpec::new(DVector::from_vec(self.mean.clone()), DMatrix::from_row_slice(n, n, &flat))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBlock {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Ensemble size used by the planner.
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub weights: WeightKind,
    pub consensus_horizon: usize,
    #[serde(default)]
    pub ptr: PtrParams,
    #[serde(default)]
    pub conic: ConicSettings,
    /// Constant control of the initial guess; model default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess_control: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub mode: Mode,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    #[serde(default = "default_slow_threshold")]
    pub slow_threshold: usize,
    #[serde(default = "default_true")]
    pub include_baseline: bool,
    /// Dubins completion turn radius; `v_max / steer_max` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_radius: Option<f64>,
    #[serde(default = "default_closed_loop_threshold")]
    pub closed_loop_threshold: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Additive measurement noise for closed-loop runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_noise: Option<GaussianBlock>,
    #[serde(default = "default_sweep_weights")]
    pub sweep_weights: Vec<WeightKind>,
    #[serde(default = "default_sweep_consensus")]
    pub sweep_consensus: Vec<usize>,
    /// Output directory when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_n_mc() -> usize {
    1000
}
fn default_zero_tol() -> f64 {
    DEFAULT_ZERO_TOL
}
fn default_slow_threshold() -> usize {
    DEFAULT_SLOW_THRESHOLD
}
fn default_true() -> bool {
    true
}
fn default_closed_loop_threshold() -> f64 {
    DEFAULT_CLOSED_LOOP_THRESHOLD
}
fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}
fn default_sweep_weights() -> Vec<WeightKind> {
    vec![WeightKind::Const, WeightKind::Lin, WeightKind::Log, WeightKind::Quad]
}
fn default_sweep_consensus() -> Vec<usize> {
    vec![2, 6, 10, 14, 18]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub uncertainty: UncertaintyBlock,
    pub solver: SolverBlock,
    pub experiment: ExperimentBlock,
}

/// One failed check. `fields` names every configuration field involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub fields: Vec<String>,
    pub message: String,
}

impl Violation {
    fn new(fields: &[&str], message: impl Into<String>) -> Self {
        Self {
            fields: fields.iter().map(|f| f.to_string()).collect(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.fields.join(", "), self.message)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn state_dim(&self) -> usize {
        match self.model.kind {
            ModelName::DoubleIntegrator => 2 * self.model.axes,
            ModelName::Dubins => 3,
        }
    }

    pub fn sample_time(&self) -> Option<f64> {
        match (self.model.sample_time, self.model.time_span) {
            (Some(ts), None) => Some(ts),
            (None, Some(span)) if self.model.horizon >= 2 => Some(span / (self.model.horizon - 1) as f64),
            _ => None,
        }
    }

    /// Every schema and cross-field problem; empty when the config is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let m = &self.model;
        if m.horizon < 2 {
            out.push(Violation::new(&["model.horizon"], "must be at least 2"));
        }
        match (m.sample_time, m.time_span) {
            (Some(_), Some(_)) | (None, None) => out.push(Violation::new(
                &["model.sample_time", "model.time_span"],
                "set exactly one of sample_time and time_span",
            )),
            (Some(ts), None) if !(ts.is_finite() && ts > 0.0) => {
                out.push(Violation::new(&["model.sample_time"], format!("must be positive, got {ts}")))
            }
            (None, Some(span)) if !(span.is_finite() && span > 0.0) => {
                out.push(Violation::new(&["model.time_span"], format!("must be positive, got {span}")))
            }
            _ => {}
        }
        match m.kind {
            ModelName::DoubleIntegrator => {
                if m.axes == 0 {
                    out.push(Violation::new(&["model.axes"], "must be at least 1"));
                }
                if !(m.control_bound.is_finite() && m.control_bound > 0.0) {
                    out.push(Violation::new(&["model.control_bound"], "must be positive"));
                }
            }
            ModelName::Dubins => {
                for (name, v) in [("model.v_max", m.v_max), ("model.steer_max", m.steer_max)] {
                    match v {
                        None => out.push(Violation::new(&[name], "required for the dubins model")),
                        Some(v) if !(v.is_finite() && v > 0.0) => out.push(Violation::new(&[name], "must be positive")),
                        _ => {}
                    }
                }
            }
        }

        let n = self.state_dim();
        let u = &self.uncertainty;
        if u.mean.len() != n {
            out.push(Violation::new(
                &["uncertainty.mean"],
                format!("expected {n} entries, got {}", u.mean.len()),
            ));
        } else {
            let block = GaussianBlock {
                mean: u.mean.clone(),
                covariance: u.covariance.clone(),
            };
            if let Err(e) = block.to_spec().and_then(|s| s.validate()) {
                out.push(Violation::new(&["uncertainty.covariance"], e.to_string()));
            }
        }
        if u.particles == 0 {
            out.push(Violation::new(&["uncertainty.particles"], "must be at least 1"));
        }

        let s = &self.solver;
        if s.consensus_horizon < 2 || s.consensus_horizon > m.horizon {
            out.push(Violation::new(
                &["solver.consensus_horizon", "model.horizon"],
                format!(
                    "consensus horizon {} must lie in 2..={} (the horizon)",
                    s.consensus_horizon, m.horizon
                ),
            ));
        }
        if m.horizon >= 2 {
            if let Err(e) = weight_sequence(&s.weights, m.horizon) {
                out.push(Violation::new(&["solver.weights"], e.to_string()));
            }
        }
        let p = &s.ptr;
        for (name, v) in [
            ("solver.ptr.w_vc", p.w_vc),
            ("solver.ptr.w_tr", p.w_tr),
            ("solver.ptr.delta_tol", p.delta_tol),
            ("solver.conic.tol", s.conic.tol),
            ("solver.conic.gap_tol", s.conic.gap_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(Violation::new(&[name], "must be positive"));
            }
        }
        if p.max_iter == 0 {
            out.push(Violation::new(&["solver.ptr.max_iter"], "must be at least 1"));
        }
        if let Some(g) = &s.guess_control {
            let nu = match m.kind {
                ModelName::DoubleIntegrator => m.axes,
                ModelName::Dubins => 2,
            };
            if g.len() != nu {
                out.push(Violation::new(&["solver.guess_control"], format!("expected {nu} entries")));
            }
        }

        let e = &self.experiment;
        if e.n_mc == 0 {
            out.push(Violation::new(&["experiment.n_mc"], "must be at least 1"));
        }
        if !(e.zero_tol > 0.0) {
            out.push(Violation::new(&["experiment.zero_tol"], "must be positive"));
        }
        if !(e.closed_loop_threshold > 0.0) {
            out.push(Violation::new(&["experiment.closed_loop_threshold"], "must be positive"));
        }
        if let Some(r) = e.turn_radius {
            if !(r.is_finite() && r > 0.0) {
                out.push(Violation::new(&["experiment.turn_radius"], "must be positive"));
            }
        }
        match &e.measurement_noise {
            Some(noise) => {
                if let Err(err) = noise.to_spec().and_then(|s| {
                    s.validate()?;
                    if s.dim() == n {
                        Ok(())
                    } else {
                        Err(Error::invalid("dimension", format!("expected {n}")))
                    }
                }) {
                    out.push(Violation::new(&["experiment.measurement_noise"], err.to_string()));
                }
            }
            None if e.mode == Mode::ClosedLoop => out.push(Violation::new(
                &["experiment.measurement_noise"],
                "required for closed-loop runs",
            )),
            None => {}
        }
        if e.mode == Mode::SweepWeights && e.sweep_weights.is_empty() {
            out.push(Violation::new(&["experiment.sweep_weights"], "must not be empty"));
        }
        if e.mode == Mode::SweepConsensus && e.sweep_consensus.is_empty() {
            out.push(Violation::new(&["experiment.sweep_consensus"], "must not be empty"));
        }
        for tc in &e.sweep_consensus {
            if *tc < 2 || *tc > m.horizon {
                out.push(Violation::new(
                    &["experiment.sweep_consensus", "model.horizon"],
                    format!("consensus horizon {tc} must lie in 2..={}", m.horizon),
                ));
            }
        }
        out
    }

    /// Fails with every violation listed when the config is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Err(Error::Config(text.join("; ")))
        }
    }

    pub fn build_model(&self) -> Result<DynamicsModel> {
        let ts = self
            .sample_time()
            .ok_or_else(|| Error::Config("set exactly one of sample_time and time_span".into()))?;
        let m = &self.model;
        match m.kind {
            ModelName::DoubleIntegrator => double_integrator_nd(m.axes, ts)?
                .with_control_box(ControlBox::symmetric(m.axes, m.control_bound)),
            ModelName::Dubins => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| Error::Config(format!("model.{name} is required for the dubins model")))
                };
                dubins_car(ts, need(m.v_max, "v_max")?, need(m.steer_max, "steer_max")?)
            }
        }
    }

    pub fn solve_config(&self) -> Result<SolveConfig> {
        let mut cfg = SolveConfig::new(self.model.horizon, self.solver.consensus_horizon, &self.solver.weights)?;
        cfg.ptr = self.solver.ptr;
        cfg.conic = self.solver.conic;
        cfg.guess_control = self.solver.guess_control.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn initial_distribution(&self) -> Result<GaussianSpec> {
        let spec = GaussianBlock {
            mean: self.uncertainty.mean.clone(),
            covariance: self.uncertainty.covariance.clone(),
        }
        .to_spec()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn measurement_noise(&self) -> Result<GaussianSpec> {
        let block = self
            .experiment
            .measurement_noise
            .as_ref()
            .ok_or_else(|| Error::Config("experiment.measurement_noise is required".into()))?;
        let spec = block.to_spec()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn mc_options(&self, jobs: Option<usize>) -> McOptions {
        let e = &self.experiment;
        McOptions {
            n_mc: e.n_mc,
            seed: self.uncertainty.seed,
            zero_tol: e.zero_tol,
            slow_threshold: e.slow_threshold,
            jobs,
            include_baseline: e.include_baseline,
            turn_radius: e.turn_radius,
        }
    }

    pub fn closed_loop_options(&self) -> ClosedLoopOptions {
        ClosedLoopOptions {
            seed: self.uncertainty.seed,
            threshold: self.experiment.closed_loop_threshold,
            max_steps: self.experiment.max_steps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
              "model": {"kind": "double_integrator", "horizon": 40, "time_span": 6.0},
              "uncertainty": {
                "mean": [2, 1, 0, 0],
                "covariance": [[0.2,0,0,0],[0,0.2,0,0],[0,0,0.2,0],[0,0,0,0.2]],
                "particles": 30,
                "seed": 1
              },
              "solver": {"weights": "lin", "consensus_horizon": 10},
              "experiment": {"mode": "mc-open-loop"}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn valid_config_has_empty_report() {
        let c = base();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        assert!((c.sample_time().unwrap() - 6.0 / 39.0).abs() < 1e-15);
        assert_eq!(c.experiment.n_mc, 1000);
        assert_eq!(c.experiment.sweep_consensus, vec![2, 6, 10, 14, 18]);
        let model = c.build_model().unwrap();
        assert_eq!(model.state_dim(), 4);
        assert_eq!(c.solve_config().unwrap().weights.at(3), 3.0);
    }

    #[test]
    fn consensus_beyond_horizon_names_both_fields() {
        let mut c = base();
        c.solver.consensus_horizon = 50;
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].fields, vec!["solver.consensus_horizon", "model.horizon"]);
        assert!(c.ensure_valid().is_err());
    }

    #[test]
    fn negative_sample_time_is_a_violation() {
        let mut c = base();
        c.model.time_span = None;
        c.model.sample_time = Some(-0.1);
        let v = c.validate();
        assert!(v.iter().any(|x| x.fields == vec!["model.sample_time"]));
    }

    #[test]
    fn covariance_must_be_psd() {
        let mut c = base();
        c.uncertainty.covariance[0][0] = -1.0;
        assert!(c.validate().iter().any(|x| x.fields == vec!["uncertainty.covariance"]));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = base().to_json().unwrap().replace("\"horizon\"", "\"horizn\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn closed_loop_needs_noise() {
        let mut c = base();
        c.experiment.mode = Mode::ClosedLoop;
        assert!(c
            .validate()
            .iter()
            .any(|x| x.fields == vec!["experiment.measurement_noise"]));
    }

    #[test]
    fn json_round_trip() {
        let c = base();
        assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }
}
