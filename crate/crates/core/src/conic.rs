//! Standard-form convex programs and the solver contract.
//!
//! A [`ConicProgram`] has a linear objective, sparse linear equalities and
//! inequalities, per-variable bounds and second-order cones `‖z‖₂ ≤ t` over
//! variable index groups. [`solve`] hands it to the Clarabel interior-point
//! solver.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(j, a)| a * x[*j]).sum()
    }
}

/// `‖x[z]‖₂ ≤ x[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocCone {
    pub t: usize,
    pub z: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    equalities: Vec<LinearRow>,
    /// Rows read `a·x ≤ rhs`.
    inequalities: Vec<LinearRow>,
    cones: Vec<SocCone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_variables(&mut self, count: usize, lower: f64, upper: f64) -> Range<usize> {
        let start = self.objective.len();
        self.objective.resize(start + count, 0.0);
        self.lower.resize(start + count, lower);
        self.upper.resize(start + count, upper);
        start..start + count
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn add_cost(&mut self, j: usize, c: f64) {
        self.objective[j] += c;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn scale_objective(&mut self, factor: f64) {
        self.objective.iter_mut().for_each(|c| *c *= factor);
    }

    pub fn add_equality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow { terms, rhs });
    }

    pub fn add_inequality(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearRow { terms, rhs });
    }

    pub fn add_soc(&mut self, t: usize, z: Vec<usize>) {
        self.cones.push(SocCone { t, z });
    }

    pub fn equalities(&self) -> &[LinearRow] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinearRow] {
        &self.inequalities
    }

    pub fn cones(&self) -> &[SocCone] {
        &self.cones
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint at `x` (0 when feasible).
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|r| (r.eval(x) - r.rhs).abs());
        let ineq = self.inequalities.iter().map(|r| (r.eval(x) - r.rhs).max(0.0));
        let bounds = (0..x.len()).map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0));
        let cones = self.cones.iter().map(|c| {
            let nz = c.z.iter().map(|j| x[*j] * x[*j]).sum::<f64>().sqrt();
            (nz - x[c.t]).max(0.0)
        });
        eq.chain(ineq).chain(bounds).chain(cones).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad_index = |j: &usize| *j >= n;
        for row in self.equalities.iter().chain(&self.inequalities) {
            if row.terms.iter().any(|(j, _)| bad_index(j)) {
                return Err(Error::MalformedProgram("row index out of range".into()));
            }
            if !row.rhs.is_finite() || row.terms.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::MalformedProgram("non-finite row data".into()));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedProgram("non-finite objective".into()));
        }
        if (0..n).any(|j| !(self.lower[j] <= self.upper[j])) {
            return Err(Error::MalformedProgram("empty variable bounds".into()));
        }
        let mut t_used = vec![false; n];
        for c in &self.cones {
            if bad_index(&c.t) || c.z.iter().any(bad_index) {
                return Err(Error::MalformedProgram("cone index out of range".into()));
            }
            if std::mem::replace(&mut t_used[c.t], true) {
                return Err(Error::MalformedProgram(format!(
                    "variable {} is the t-slot of more than one cone",
                    c.t
                )));
            }
        }
        Ok(())
    }

    /// Plain-text dump, one record per line:
    ///
    /// ```text
    /// vars N
    /// obj <j> <c>            (nonzero objective entries)
    /// bound <j> <lo> <hi>    (only non-free variables)
    /// eq <rhs> <j>:<a> ...
    /// le <rhs> <j>:<a> ...
    /// soc <t> <z1> <z2> ...
    /// ```
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "vars {}", self.num_vars())?;
        for (j, c) in self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            writeln!(out, "obj {j} {c:e}")?;
        }
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_finite() || hi.is_finite() {
                writeln!(out, "bound {j} {lo:e} {hi:e}")?;
            }
        }
        let row_text = |kind: &str, r: &LinearRow| {
            let mut s = format!("{kind} {:e}", r.rhs);
            for (j, a) in &r.terms {
                let _ = write!(s, " {j}:{a:e}");
            }
            s
        };
        for r in &self.equalities {
            writeln!(out, "{}", row_text("eq", r))?;
        }
        for r in &self.inequalities {
            writeln!(out, "{}", row_text("le", r))?;
        }
        for c in &self.cones {
            let z: Vec<String> = c.z.iter().map(|j| j.to_string()).collect();
            writeln!(out, "soc {} {}", c.t, z.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConicSettings {
    /// Primal/dual feasibility tolerance.
    pub tol: f64,
    /// Absolute and relative duality-gap tolerance. Kept tighter than `tol`
    /// so that states pinned at the origin by the cone constraints come out
    /// well below the feasibility level.
    pub gap_tol: f64,
    pub max_iter: u32,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            gap_tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Converged only to the solver's reduced tolerances.
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalError,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub primal: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: u32,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn map_status(status: SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIter,
        _ => SolveStatus::NumericalError,
    }
}

/// Solves `prog`. Infeasibility and iteration limits are reported through
/// [`ConicSolution::status`]; only malformed programs return `Err`.
pub fn solve(prog: &ConicProgram, settings: &ConicSettings) -> Result<ConicSolution> {
    prog.validate()?;
    if !(settings.tol > 0.0) || !(settings.gap_tol > 0.0) {
        return Err(Error::invalid("conic tol", "tolerances must be positive"));
    }
    let n = prog.num_vars();

    // Rows of A x + s = b, ordered: zero cone, nonnegative cone, SOCs.
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut push_row = |terms: &[(usize, f64)], rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for (j, a) in terms {
            rows.push(r);
            cols.push(*j);
            vals.push(*a);
        }
        b.push(rhs);
    };

    for r in &prog.equalities {
        push_row(&r.terms, r.rhs, &mut b);
    }
    for j in 0..n {
        let (lo, hi) = (prog.lower[j], prog.upper[j]);
        if lo == hi {
            push_row(&[(j, 1.0)], lo, &mut b);
        }
    }
    let n_zero = b.len();
    for r in &prog.inequalities {
        push_row(&r.terms, r.rhs, &mut b);
    }
    for j in 0..n {
        let (lo, hi) = (prog.lower[j], prog.upper[j]);
        if lo == hi {
            continue;
        }
        if hi.is_finite() {
            push_row(&[(j, 1.0)], hi, &mut b);
        }
        if lo.is_finite() {
            push_row(&[(j, -1.0)], -lo, &mut b);
        }
    }
    let n_nonneg = b.len() - n_zero;
    let mut cones: Vec<SupportedConeT<f64>> = Vec::with_capacity(prog.cones.len() + 2);
    if n_zero > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_zero));
    }
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    for c in &prog.cones {
        push_row(&[(c.t, -1.0)], 0.0, &mut b);
        for j in &c.z {
            push_row(&[(*j, -1.0)], 0.0, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(c.z.len() + 1));
    }

    let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol)
        .tol_feas(settings.tol)
        .max_threads(1)
        .build()
        .map_err(|e| Error::MalformedProgram(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(&p, &prog.objective, &a, &b, &cones, clarabel_settings)
        .map_err(|e| Error::MalformedProgram(format!("{e:?}")))?;
    solver.solve();

    let status = map_status(solver.solution.status);
    let primal = solver.solution.x.clone();
    let residuals = Residuals {
        primal: prog.primal_violation(&primal),
        dual: solver.info.res_dual,
        gap: solver.info.gap_rel,
    };
    Ok(ConicSolution {
        objective: prog.objective_value(&primal),
        primal,
        status,
        residuals,
        iterations: solver.solution.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_argument_cone() {
        let mut p = ConicProgram::new();
        let t = p.add_variables(1, f64::NEG_INFINITY, f64::INFINITY).start;
        let z = p.add_variables(2, f64::NEG_INFINITY, f64::INFINITY);
        p.add_cost(t, 1.0);
        p.set_bounds(z.start, 3.0, 3.0);
        p.set_bounds(z.start + 1, 4.0, 4.0);
        p.add_soc(t, z.collect());
        let s = solve(&p, &ConicSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn bounded_scalar() {
        let mut p = ConicProgram::new();
        let x = p.add_variables(1, 0.0, 1.0).start;
        p.add_cost(x, 1.0);
        let s = solve(&p, &ConicSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert!(s.primal[0].abs() < 1e-7);
    }

    #[test]
    fn infeasible_is_a_status() {
        let mut p = ConicProgram::new();
        let x = p.add_variables(1, 0.0, 1.0).start;
        p.add_cost(x, 1.0);
        p.add_equality(vec![(x, 1.0)], 2.0);
        let s = solve(&p, &ConicSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_a_status() {
        let mut p = ConicProgram::new();
        let x = p.add_variables(1, f64::NEG_INFINITY, 0.0).start;
        p.add_cost(x, 1.0);
        let s = solve(&p, &ConicSettings::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn inequality_rows() {
        // min -x - y  s.t. x + 2y <= 4, x <= 3, x,y >= 0  ->  x = 3, y = 0.5
        let mut p = ConicProgram::new();
        let v = p.add_variables(2, 0.0, f64::INFINITY);
        p.add_cost(v.start, -1.0);
        p.add_cost(v.start + 1, -1.0);
        p.add_inequality(vec![(0, 1.0), (1, 2.0)], 4.0);
        p.add_inequality(vec![(0, 1.0)], 3.0);
        let s = solve(&p, &ConicSettings::default()).unwrap();
        assert!(s.is_optimal());
        assert!((s.primal[0] - 3.0).abs() < 1e-6 && (s.primal[1] - 0.5).abs() < 1e-6);
        assert!(s.residuals.primal < 1e-7);
    }

    #[test]
    fn validation_catches_malformed_programs() {
        let mut p = ConicProgram::new();
        let v = p.add_variables(3, f64::NEG_INFINITY, f64::INFINITY);
        p.add_soc(v.start, vec![1, 2]);
        p.add_soc(v.start, vec![1]);
        assert!(matches!(p.validate(), Err(Error::MalformedProgram(_))));

        let mut q = ConicProgram::new();
        q.add_variables(1, 0.0, 1.0);
        q.add_equality(vec![(5, 1.0)], 0.0);
        assert!(solve(&q, &ConicSettings::default()).is_err());
    }

    #[test]
    fn text_dump() {
        let mut p = ConicProgram::new();
        let v = p.add_variables(3, f64::NEG_INFINITY, f64::INFINITY);
        p.add_cost(0, 2.0);
        p.set_bounds(1, -1.0, 1.0);
        p.add_equality(vec![(1, 1.0), (2, -1.0)], 0.5);
        p.add_soc(v.start, vec![1, 2]);
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "vars 3\nobj 0 2e0\nbound 1 -1e0 1e0\neq 5e-1 1:1e0 2:-1e0\nsoc 0 1 2\n");
    }

    #[test]
    fn objective_scaling_leaves_argmin() {
        let build = |scale: f64| {
            let mut p = ConicProgram::new();
            let t = p.add_variables(1, f64::NEG_INFINITY, f64::INFINITY).start;
            let z = p.add_variables(2, -2.0, 2.0);
            p.add_cost(t, 1.0);
            p.add_cost(z.start, 0.3);
            p.add_cost(z.start + 1, -0.5);
            p.add_equality(vec![(z.start, 1.0), (z.start + 1, 1.0)], 1.0);
            p.add_soc(t, z.collect());
            p.scale_objective(scale);
            solve(&p, &ConicSettings::default()).unwrap()
        };
        let a = build(1.0);
        let b = build(37.0);
        assert!((37.0 * a.objective - b.objective).abs() <= 1e-7 * b.objective.abs());
        // Interior-point iterates agree to roughly the square root of the gap tolerance.
        for (x, y) in a.primal.iter().zip(&b.primal) {
            assert!((x - y).abs() < 1e-4, "{x} vs {y}");
        }
    }
}
