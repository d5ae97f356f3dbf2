//! Dense primal log-barrier method with equality elimination and damped
//! Newton steps. Slow and simple; meant for programs with a handful of
//! variables and a strictly feasible starting point.

use etopt_core::conic::ConicProgram;
use nalgebra::{DMatrix, DVector};

use super::Sampler;

pub struct Instance {
    pub program: ConicProgram,
    /// Strictly feasible point used to start the barrier method.
    pub interior: Vec<f64>,
}

/// Random bounded SOCP with a known strictly feasible point: box bounds,
/// a few equality rows, inequality rows and disjoint second-order cones.
pub fn random_socp(rng: &mut Sampler) -> Instance {
    let n = rng.int(3, 8);
    let bound = rng.range(1.0, 4.0);
    let mut x0: Vec<f64> = (0..n).map(|_| rng.range(-0.5, 0.5) * bound).collect();
    let mut prog = ConicProgram::new();
    prog.add_variables(n, -bound, bound);

    let mut free: Vec<usize> = (0..n).collect();
    let n_cones = rng.int(1, 2.min(n / 2));
    for _ in 0..n_cones {
        if free.len() < 2 {
            break;
        }
        let size = rng.int(2, free.len().min(4));
        let members: Vec<usize> = free.drain(..size).collect();
        let t = members[0];
        let z = members[1..].to_vec();
        let zn: f64 = z.iter().map(|&j| x0[j] * x0[j]).sum::<f64>().sqrt();
        x0[t] = (zn + rng.range(0.1, 0.5) * bound).min(0.9 * bound);
        if x0[t] <= zn {
            for &j in &z {
                x0[j] *= 0.5 * x0[t] / zn.max(1e-12);
            }
        }
        prog.add_soc(t, z);
    }
    let p = rng.int(0, (n - 1).min(2));
    for _ in 0..p {
        let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.range(-1.0, 1.0))).collect();
        let rhs = terms.iter().map(|(j, a)| a * x0[*j]).sum();
        prog.add_equality(terms, rhs);
    }
    for _ in 0..rng.int(0, 3) {
        let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.range(-1.0, 1.0))).collect();
        let rhs = terms.iter().map(|(j, a)| a * x0[*j]).sum::<f64>() + rng.range(0.05, 1.0);
        prog.add_inequality(terms, rhs);
    }
    for j in 0..n {
        prog.add_cost(j, rng.range(-1.0, 1.0));
    }
    Instance {
        program: prog,
        interior: x0,
    }
}

/// Barrier value, gradient and Hessian at `x`; `None` outside the domain.
fn barrier(prog: &ConicProgram, t: f64, x: &DVector<f64>) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = x.len();
    let mut f = 0.0;
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for (j, c) in prog.objective().iter().enumerate() {
        f += t * c * x[j];
        g[j] += t * c;
    }
    for j in 0..n {
        let (lo, hi) = prog.bounds(j);
        for (slack, sign) in [(hi - x[j], 1.0), (x[j] - lo, -1.0)] {
            if !slack.is_finite() {
                continue;
            }
            if slack <= 0.0 {
                return None;
            }
            f -= slack.ln();
            g[j] += sign / slack;
            h[(j, j)] += 1.0 / (slack * slack);
        }
    }
    for row in prog.inequalities() {
        let slack = row.rhs - row.eval(x.as_slice());
        if slack <= 0.0 {
            return None;
        }
        f -= slack.ln();
        for &(i, ai) in &row.terms {
            g[i] += ai / slack;
            for &(k, ak) in &row.terms {
                h[(i, k)] += ai * ak / (slack * slack);
            }
        }
    }
    for cone in prog.cones() {
        let tv = x[cone.t];
        let zz: f64 = cone.z.iter().map(|&j| x[j] * x[j]).sum();
        let s = tv * tv - zz;
        if tv <= 0.0 || s <= 0.0 {
            return None;
        }
        f -= s.ln();
        // d s = (2t, -2z); d² s = diag(2, -2I)
        let idx: Vec<usize> = std::iter::once(cone.t).chain(cone.z.iter().copied()).collect();
        let ds: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(p, &j)| if p == 0 { 2.0 * x[j] } else { -2.0 * x[j] })
            .collect();
        for (p, &i) in idx.iter().enumerate() {
            g[i] -= ds[p] / s;
            let curv = if p == 0 { -2.0 } else { 2.0 };
            h[(i, i)] += curv / s;
            for (q, &k) in idx.iter().enumerate() {
                h[(i, k)] += ds[p] * ds[q] / (s * s);
            }
        }
    }
    Some((f, g, h))
}

fn barrier_degree(prog: &ConicProgram) -> f64 {
    let boxes: usize = (0..prog.num_vars())
        .map(|j| {
            let (lo, hi) = prog.bounds(j);
            lo.is_finite() as usize + hi.is_finite() as usize
        })
        .sum();
    (boxes + prog.inequalities().len() + 2 * prog.cones().len()) as f64
}

/// Minimizes the program starting from the strictly feasible `start`.
/// Returns the primal point and objective; the duality gap bound at exit is
/// below `gap`.
pub fn solve(prog: &ConicProgram, start: &[f64], gap: f64) -> (Vec<f64>, f64) {
    let n = prog.num_vars();
    let (basis, mut x) = if prog.equalities().is_empty() {
        (DMatrix::identity(n, n), DVector::from_column_slice(start))
    } else {
        let p = prog.equalities().len();
        let mut a = DMatrix::<f64>::zeros(p, n);
        for (r, row) in prog.equalities().iter().enumerate() {
            for &(j, v) in &row.terms {
                a[(r, j)] += v;
            }
        }
        // Null space of A from the eigenvectors of AᵀA with zero eigenvalue.
        let eig = (a.transpose() * &a).symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(1.0);
        let cols: Vec<DVector<f64>> = (0..n)
            .filter(|&j| eig.eigenvalues[j] < 1e-10 * scale)
            .map(|j| eig.eigenvectors.column(j).into_owned())
            .collect();
        (DMatrix::from_columns(&cols), DVector::from_column_slice(start))
    };
    let nu = barrier_degree(prog);
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let (f, g, h) = barrier(prog, t, &x).expect("iterate stays interior");
            let gr = basis.transpose() * &g;
            let hr = basis.transpose() * &h * &basis;
            let step = match hr.clone().cholesky() {
                Some(ch) => ch.solve(&(-&gr)),
                None => hr.lu().solve(&(-&gr)).expect("reduced Hessian is invertible"),
            };
            let decrement = -gr.dot(&step);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let dx = &basis * &step;
            let mut s = 1.0;
            loop {
                let trial = &x + s * &dx;
                if let Some((ft, _, _)) = barrier(prog, t, &trial) {
                    if ft <= f - 0.25 * s * decrement {
                        x = trial;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    break;
                }
            }
            if s < 1e-14 {
                break;
            }
        }
        if nu / t < gap {
            break;
        }
        t *= 8.0;
    }
    let obj = prog.objective_value(x.as_slice());
    (x.as_slice().to_vec(), obj)
}
