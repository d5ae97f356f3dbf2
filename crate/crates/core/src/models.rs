//! Discrete-time benchmark dynamics and their linearizations.
//!
//! Two models are provided: a zero-order-hold double integrator with
//! `[position; velocity]` state blocks, and a forward-Euler Dubins car whose
//! heading convention pairs `sin θ` with `r_x` (heading 0 points along `+r_y`).
//! Both have an equilibrium at the origin.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type State = DVector<f64>;
pub type Control = DVector<f64>;

/// Per-component interval bounds on the control input.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "control box",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || l.is_nan()) {
            return Err(Error::invalid("control_box", "lower bound exceeds upper bound"));
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric unit box, i.e. `‖u‖∞ ≤ radius`.
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        Self {
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &Control, tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}

/// First-order expansion `f(x, u) ≈ A x + B u + c` about a reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::invalid("A", "transition matrix must be square"));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch {
                context: "input matrix rows",
                expected: a.nrows(),
                actual: b.nrows(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("A/B", "entries must be finite"));
        }
        Ok(Self { a, b })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DubinsCar {
    pub v_max: f64,
    pub steer_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Linear(LinearDynamics),
    Dubins(DubinsCar),
}

/// A discrete-time dynamics model `x(k+1) = f(x(k), u(k))` with a control box.
///
/// Models are immutable after construction and are `Send + Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    kind: ModelKind,
    ts: f64,
    state_dim: usize,
    control_dim: usize,
    controls: ControlBox,
}

impl DynamicsModel {
    pub fn linear(dynamics: LinearDynamics, ts: f64, controls: ControlBox) -> Result<Self> {
        check_ts(ts)?;
        let state_dim = dynamics.a.nrows();
        let control_dim = dynamics.b.ncols();
        if controls.dim() != control_dim {
            return Err(Error::DimensionMismatch {
                context: "control box",
                expected: control_dim,
                actual: controls.dim(),
            });
        }
        Ok(Self {
            kind: ModelKind::Linear(dynamics),
            ts,
            state_dim,
            control_dim,
            controls,
        })
    }

    /// Same dynamics with a different control box.
    pub fn with_control_box(mut self, controls: ControlBox) -> Result<Self> {
        if controls.dim() != self.control_dim {
            return Err(Error::DimensionMismatch {
                context: "control box",
                expected: self.control_dim,
                actual: controls.dim(),
            });
        }
        self.controls = controls;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.controls
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, ModelKind::Linear(_))
    }

    pub fn as_linear(&self) -> Option<&LinearDynamics> {
        match &self.kind {
            ModelKind::Linear(l) => Some(l),
            ModelKind::Dubins(_) => None,
        }
    }

    pub fn as_dubins(&self) -> Option<&DubinsCar> {
        match &self.kind {
            ModelKind::Dubins(d) => Some(d),
            ModelKind::Linear(_) => None,
        }
    }

    pub fn step(&self, x: &State, u: &Control) -> State {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(u.len(), self.control_dim);
        match &self.kind {
            ModelKind::Linear(l) => &l.a * x + &l.b * u,
            ModelKind::Dubins(_) => {
                let (v, phi, theta) = (u[0], u[1], x[2]);
                State::from_vec(vec![
                    x[0] + self.ts * v * theta.sin(),
                    x[1] + self.ts * v * theta.cos(),
                    x[2] + self.ts * phi,
                ])
            }
        }
    }

    /// State and control components the Jacobians depend on. Linearization
    /// error can only come from these, so they are the ones a trust region
    /// needs to hold near the reference.
    pub fn nonlinear_components(&self) -> (Vec<usize>, Vec<usize>) {
        match &self.kind {
            ModelKind::Linear(_) => (Vec::new(), Vec::new()),
            // Heading and speed enter through v·sin θ and v·cos θ.
            ModelKind::Dubins(_) => (vec![2], vec![0]),
        }
    }

    /// Jacobians of `step` at `(x, u)` plus the affine residual
    /// `c = f(x, u) − A x − B u`.
    pub fn jacobians(&self, x: &State, u: &Control) -> Linearization {
        match &self.kind {
            ModelKind::Linear(l) => Linearization {
                a: l.a.clone(),
                b: l.b.clone(),
                c: DVector::zeros(self.state_dim),
            },
            ModelKind::Dubins(_) => {
                let (v, theta) = (u[0], x[2]);
                let (s, c) = theta.sin_cos();
                let ts = self.ts;
                #[rustfmt::skip]
                let a = DMatrix::from_row_slice(3, 3, &[
                    1.0, 0.0, ts * v * c,
                    0.0, 1.0, -ts * v * s,
                    0.0, 0.0, 1.0,
                ]);
                #[rustfmt::skip]
                let b = DMatrix::from_row_slice(3, 2, &[
                    ts * s, 0.0,
                    ts * c, 0.0,
                    0.0, ts,
                ]);
                let residual = self.step(x, u) - &a * x - &b * u;
                Linearization { a, b, c: residual }
            }
        }
    }

    /// One linearization per step of a reference trajectory with `Γ` states
    /// and `Γ − 1` controls.
    pub fn linearize_along(&self, x_ref: &[State], u_ref: &[Control]) -> Result<Vec<Linearization>> {
        if x_ref.is_empty() || u_ref.len() + 1 != x_ref.len() {
            return Err(Error::DimensionMismatch {
                context: "reference controls (states − 1)",
                expected: x_ref.len().saturating_sub(1),
                actual: u_ref.len(),
            });
        }
        for x in x_ref {
            if x.len() != self.state_dim {
                return Err(Error::DimensionMismatch {
                    context: "reference state",
                    expected: self.state_dim,
                    actual: x.len(),
                });
            }
        }
        for u in u_ref {
            if u.len() != self.control_dim {
                return Err(Error::DimensionMismatch {
                    context: "reference control",
                    expected: self.control_dim,
                    actual: u.len(),
                });
            }
        }
        Ok(x_ref
            .iter()
            .zip(u_ref)
            .map(|(x, u)| self.jacobians(x, u))
            .collect())
    }

    /// Rolls `controls` forward from `x0`, returning all visited states
    /// (including `x0`).
    pub fn rollout(&self, x0: &State, controls: &[Control]) -> Vec<State> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in controls {
            let next = self.step(states.last().unwrap(), u);
            states.push(next);
        }
        states
    }

    /// Default constant control used to seed sequential solves.
    pub fn default_guess_control(&self) -> Control {
        match &self.kind {
            ModelKind::Linear(_) => Control::zeros(self.control_dim),
            ModelKind::Dubins(_) => Control::from_vec(vec![0.25, 0.0]),
        }
    }
}

fn check_ts(ts: f64) -> Result<()> {
    if ts.is_finite() && ts > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("ts", format!("sampling time must be positive, got {ts}")))
    }
}

/// Planar double integrator under zero-order hold: `A = [[I, Ts I], [0, I]]`,
/// `B = [[½Ts² I], [Ts I]]`, `‖u‖∞ ≤ 1`.
pub fn double_integrator(ts: f64) -> Result<DynamicsModel> {
    double_integrator_nd(2, ts)
}

/// Double integrator with `axes` independent position/velocity pairs.
/// State ordering is `[p_1..p_axes, v_1..v_axes]`.
pub fn double_integrator_nd(axes: usize, ts: f64) -> Result<DynamicsModel> {
    check_ts(ts)?;
    if axes == 0 {
        return Err(Error::invalid("axes", "need at least one axis"));
    }
    let n = 2 * axes;
    let mut a = DMatrix::identity(n, n);
    let mut b = DMatrix::zeros(n, axes);
    for i in 0..axes {
        a[(i, axes + i)] = ts;
        b[(i, i)] = 0.5 * ts * ts;
        b[(axes + i, i)] = ts;
    }
    DynamicsModel::linear(LinearDynamics::new(a, b)?, ts, ControlBox::symmetric(axes, 1.0))
}

/// Euler-discretized Dubins car, `x = [r_x, r_y, θ]`, `u = [v, φ]`,
/// `x(k+1) = x(k) + Ts·[v sin θ, v cos θ, φ]`, `0 ≤ v ≤ v_max`, `|φ| ≤ steer_max`.
pub fn dubins_car(ts: f64, v_max: f64, steer_max: f64) -> Result<DynamicsModel> {
    check_ts(ts)?;
    if !(v_max > 0.0) || !(steer_max > 0.0) {
        return Err(Error::invalid("dubins bounds", "v_max and steer_max must be positive"));
    }
    Ok(DynamicsModel {
        kind: ModelKind::Dubins(DubinsCar { v_max, steer_max }),
        ts,
        state_dim: 3,
        control_dim: 2,
        controls: ControlBox::new(vec![0.0, -steer_max], vec![v_max, steer_max])?,
    })
}
