//! Checks shared by the integration tests and the acceptance runner. Each
//! returns a report; callers decide how to assert or print it.

use etopt_core::conic::{self, ConicSettings};
use etopt_core::dubins::{normalize_angle, shortest_path, Pose};
use etopt_core::harness::deterministic_min_time_policy;
use etopt_core::models::{double_integrator_nd, dubins_car, DynamicsModel};
use etopt_core::scp::solve_expected_time;
use etopt_core::soncost::{norm_profile, persists_at_zero, terminal_step, WeightKind};
use etopt_core::stochastic::{sample_ensemble, GaussianSpec};
use etopt_core::{SolveConfig, State};
use nalgebra::{DMatrix, DVector};

use super::{barrier, dubins_grid, min_time, Sampler};

#[derive(Debug, Default)]
pub struct ConicReport {
    pub programs: usize,
    pub solved: usize,
    pub max_rel_error: f64,
    pub failures: Vec<String>,
}

/// Relative objective error with a unit floor on the denominator.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn conic_vs_barrier(count: usize, seed: u64, tol: f64) -> ConicReport {
    let mut rng = Sampler::new(seed);
    let mut rep = ConicReport::default();
    for k in 0..count {
        let inst = barrier::random_socp(&mut rng);
        let (_, reference) = barrier::solve(&inst.program, &inst.interior, 1e-10);
        rep.programs += 1;
        match conic::solve(&inst.program, &ConicSettings::default()) {
            Ok(sol) if sol.is_optimal() => {
                rep.solved += 1;
                let e = rel_error(sol.objective, reference);
                rep.max_rel_error = rep.max_rel_error.max(e);
                if e > tol {
                    rep.failures.push(format!("program {k}: {} vs {reference} (rel {e:.2e})", sol.objective));
                }
            }
            Ok(sol) => rep.failures.push(format!("program {k}: status {:?}", sol.status)),
            Err(e) => rep.failures.push(format!("program {k}: {e}")),
        }
    }
    rep
}

#[derive(Debug, Default)]
pub struct MinTimeReport {
    pub instances: usize,
    pub one_axis: usize,
    pub two_axis: usize,
    pub mismatches: Vec<String>,
}

/// Random double-integrator instances whose minimum time fits the horizon.
pub fn min_time_instances(count: usize, seed: u64) -> Vec<(usize, f64, usize, Vec<f64>)> {
    let mut rng = Sampler::new(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let axes = 1 + out.len() % 2;
        let ts = rng.range(0.25, 0.6);
        let horizon = rng.int(18, 26);
        let mut x0 = Vec::new();
        for _ in 0..axes {
            x0.push(rng.range(-2.0, 2.0));
        }
        for _ in 0..axes {
            x0.push(rng.range(-1.0, 1.0));
        }
        match min_time::min_terminal_step(&x0, ts, horizon, 1e-9) {
            Some(n) if n + 2 < horizon => out.push((axes, ts, horizon, x0)),
            _ => {}
        }
    }
    out
}

pub fn min_time_vs_bisection(count: usize, seed: u64, zero_tol: f64) -> MinTimeReport {
    let mut rep = MinTimeReport::default();
    for (axes, ts, horizon, x0) in min_time_instances(count, seed) {
        rep.instances += 1;
        if axes == 1 {
            rep.one_axis += 1;
        } else {
            rep.two_axis += 1;
        }
        let expected = min_time::min_terminal_step(&x0, ts, horizon, 1e-9);
        let model = double_integrator_nd(axes, ts).unwrap();
        let cfg = SolveConfig::new(horizon, horizon, &WeightKind::Lin).unwrap();
        let got = deterministic_min_time_policy(&model, &cfg, &DVector::from_vec(x0.clone()))
            .map(|s| terminal_step(&s.states[0], zero_tol));
        match got {
            Ok(found) if found == expected => {}
            other => rep
                .mismatches
                .push(format!("x0 {x0:?}, ts {ts:.4}, horizon {horizon}: oracle {expected:?}, solver {other:?}")),
        }
    }
    rep
}

#[derive(Debug, Default)]
pub struct DubinsReport {
    pub pairs: usize,
    pub max_rel_error: f64,
    pub max_endpoint_error: f64,
    pub failures: Vec<String>,
}

pub fn dubins_vs_grid(count: usize, seed: u64, grid: usize) -> DubinsReport {
    let mut rng = Sampler::new(seed);
    let mut rep = DubinsReport::default();
    for k in 0..count {
        let rho = rng.range(0.5, 2.0);
        let a = Pose::new(rng.range(-5.0, 5.0), rng.range(-5.0, 5.0), rng.range(-3.14, 3.14));
        let b = Pose::new(rng.range(-5.0, 5.0), rng.range(-5.0, 5.0), rng.range(-3.14, 3.14));
        rep.pairs += 1;
        let path = shortest_path(a, b, rho);
        let end = path.endpoint(a, rho);
        let ang = normalize_angle(end.heading - b.heading).abs();
        let ep = (end.x - b.x).hypot(end.y - b.y).max(ang);
        rep.max_endpoint_error = rep.max_endpoint_error.max(ep);
        let reference = dubins_grid::shortest_length((a.x, a.y, a.heading), (b.x, b.y, b.heading), rho, grid);
        match reference {
            Some(r) => {
                let e = (path.total - r).abs() / r.max(1e-12);
                rep.max_rel_error = rep.max_rel_error.max(e);
                if e > 1e-6 {
                    rep.failures
                        .push(format!("pair {k}: {} ({}) vs grid {r} (rel {e:.2e})", path.total, path.word));
                }
            }
            None => rep.failures.push(format!("pair {k}: grid search found no path")),
        }
        if ep > 1e-9 {
            rep.failures.push(format!("pair {k}: endpoint error {ep:.2e}"));
        }
    }
    rep
}

#[derive(Debug, Default)]
pub struct ZeroSetReport {
    pub configs: usize,
    pub converged_solutions: usize,
    pub particles_checked: usize,
    pub violations: Vec<String>,
    pub errors: Vec<String>,
}

fn random_problem(rng: &mut Sampler, k: usize) -> (DynamicsModel, SolveConfig, GaussianSpec, usize) {
    let kinds = [WeightKind::Const, WeightKind::Lin, WeightKind::Log, WeightKind::Quad];
    let weights = &kinds[rng.int(0, 3)];
    if k % 2 == 0 {
        let axes = rng.int(1, 2);
        let ts = rng.range(0.25, 0.6);
        let horizon = rng.int(8, 16);
        let tc = rng.int(2, horizon);
        let mut mean = Vec::new();
        for _ in 0..axes {
            mean.push(rng.range(-1.5, 1.5));
        }
        for _ in 0..axes {
            mean.push(rng.range(-0.5, 0.5));
        }
        let diag: Vec<f64> = (0..2 * axes).map(|_| rng.range(0.0, 0.2)).collect();
        let spec = GaussianSpec::new(DVector::from_vec(mean), DMatrix::from_diagonal(&DVector::from_vec(diag))).unwrap();
        let cfg = SolveConfig::new(horizon, tc, weights).unwrap();
        (double_integrator_nd(axes, ts).unwrap(), cfg, spec, rng.int(2, 5))
    } else {
        let horizon = rng.int(10, 16);
        let tc = rng.int(2, horizon);
        let mean = vec![rng.range(-0.1, 0.1), rng.range(-0.6, -0.3), rng.range(-0.2, 0.2)];
        let diag = vec![rng.range(0.0, 0.01), rng.range(0.0, 0.02), 0.0];
        let spec = GaussianSpec::new(DVector::from_vec(mean), DMatrix::from_diagonal(&DVector::from_vec(diag))).unwrap();
        let mut cfg = SolveConfig::new(horizon, tc, weights).unwrap();
        cfg.guess_control = Some(vec![0.25, 0.0]);
        (dubins_car(0.1, 0.5, 5.0).unwrap(), cfg, spec, rng.int(2, 4))
    }
}

/// Solves random problems for both models and checks that the set of
/// steps at which each particle sits at the destination is a suffix.
pub fn zero_set_suffix(count: usize, seed: u64) -> ZeroSetReport {
    let mut rng = Sampler::new(seed);
    let mut rep = ZeroSetReport::default();
    for k in 0..count {
        let (model, cfg, spec, m) = random_problem(&mut rng, k);
        rep.configs += 1;
        let tol = 10.0 * cfg.conic.tol;
        let ensemble = sample_ensemble(&spec, m, 1000 + k as u64).unwrap();
        let sol = match solve_expected_time(&model, &ensemble, &cfg) {
            Ok(s) => s,
            Err(e) => {
                rep.errors.push(format!("config {k}: {e}"));
                continue;
            }
        };
        if !sol.converged {
            continue;
        }
        rep.converged_solutions += 1;
        for (i, traj) in sol.states.iter().enumerate() {
            rep.particles_checked += 1;
            let norms = norm_profile(traj);
            if !persists_at_zero(&norms, tol) {
                let shown: Vec<String> = norms.iter().map(|v| format!("{v:.2e}")).collect();
                rep.violations.push(format!("config {k}, particle {i}: norms [{}]", shown.join(", ")));
            }
        }
    }
    rep
}

pub fn state(v: &[f64]) -> State {
    DVector::from_row_slice(v)
}
