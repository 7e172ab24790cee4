//! Deterministic finite-difference reference solver for the oscillating and
//! the homogenized Dirichlet problem on hyperrectangles, d <= 2.
//!
//! The discrete operator mirrors the torus generator: central second
//! differences, drift differencing that switches per node and axis between
//! central and one-sided depending on the cell Peclet number (one-sided
//! whenever |drift| dx > a, which keeps the Jacobian an M-matrix in the
//! advection-dominated small-eps regime), and central differences for the
//! ∇u σ argument of the driver. The nonlinear system is solved by damped
//! Newton with backtracking on the residual norm, damping floor 2^-20,
//! starting from u = 0.
//!
//! Degenerate oscillating problems at small eps are out of this module's
//! scope: discrete irreducibility can fail there, and those cases are
//! validated by Monte Carlo cross-checks instead. Ball domains likewise go
//! through the probabilistic solvers.

use serde::{Deserialize, Serialize};

use crate::coeffs::{wrap_torus, MatValue, PeriodicModel, Point, VecValue, MAX_DIM};
use crate::domain::Domain;
use crate::driver::{DirichletProblem, Driver, DriverVals};
use crate::effective::EffectiveModel;
use crate::error::{Error, Result};

/// Nodal solution on a uniform grid over the closed domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSolution {
    pub d: usize,
    /// Intervals per axis; nodes per axis = n + 1.
    pub n: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Node values, row-major over (n+1)^d nodes; boundary nodes carry g.
    pub values: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iters: usize,
}

impl GridSolution {
    fn nodes_per_axis(&self) -> usize {
        self.n + 1
    }

    pub fn node_point(&self, flat: usize) -> Point {
        let npa = self.nodes_per_axis();
        let mut p = [0.0; MAX_DIM];
        let mut r = flat;
        for i in 0..self.d {
            let k = r % npa;
            r /= npa;
            p[i] = self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / self.n as f64;
        }
        p
    }

    /// Multilinear interpolation of the nodal values.
    pub fn value_at(&self, x: &Point) -> f64 {
        let npa = self.nodes_per_axis();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for i in 0..self.d {
            let u = ((x[i] - self.lo[i]) / (self.hi[i] - self.lo[i]) * self.n as f64)
                .clamp(0.0, self.n as f64);
            let fl = u.floor().min(self.n as f64 - 1.0);
            base[i] = fl as usize;
            frac[i] = u - fl;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for i in (0..self.d).rev() {
                let up = corner & (1 << i) != 0;
                w *= if up { frac[i] } else { 1.0 - frac[i] };
                flat = flat * npa + base[i] + usize::from(up);
            }
            acc += w * self.values[flat];
        }
        acc
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// CSV export: node coordinates and value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 1..=self.d {
            out.push_str(&format!("x_{i},"));
        }
        out.push_str("value\n");
        let total = self.nodes_per_axis().pow(self.d as u32);
        for flat in 0..total {
            let p = self.node_point(flat);
            for v in p.iter().take(self.d) {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{}\n", self.values[flat]));
        }
        out
    }
}

/// What the Newton solver is discretizing.
enum FdProblem<'a> {
    Oscillating {
        model: &'a PeriodicModel,
        driver: &'a Driver,
        eps: f64,
    },
    Effective(&'a EffectiveModel),
}

impl FdProblem<'_> {
    /// (a, drift, sigma-for-z) at a slow-space point.
    fn coeffs_at(&self, x: &Point) -> (MatValue, VecValue, MatValue) {
        match self {
            FdProblem::Oscillating { model, eps, .. } => {
                let d = model.dim();
                let mut y = [0.0; MAX_DIM];
                for i in 0..d {
                    y[i] = x[i] / eps;
                }
                let v = model.eval(&y);
                let mut drift = [0.0; MAX_DIM];
                for i in 0..d {
                    drift[i] = v.b[i] / eps + v.c[i];
                }
                (v.a, drift, v.sigma)
            }
            FdProblem::Effective(eff) => {
                let mut id = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..eff.d {
                    id[i][i] = 1.0;
                }
                (eff.a, eff.c, id)
            }
        }
    }

    fn driver_at(&self, x: &Point, y: f64, z: &VecValue) -> DriverVals {
        match self {
            FdProblem::Oscillating { model, driver, eps } => {
                let d = model.dim();
                let mut xf = [0.0; MAX_DIM];
                for i in 0..d {
                    xf[i] = x[i] / eps;
                }
                driver.eval_with_partials(&wrap_torus(&xf, d), y, z)
            }
            FdProblem::Effective(eff) => eff.fbar_with_partials(x, y, z),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonParams {
    pub max_iters: usize,
    /// Residual tolerance relative to the operator scale.
    pub rel_tol: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            max_iters: 40,
            rel_tol: 1e-11,
        }
    }
}

/// Solves the oscillating problem at scale eps on an n-interval grid.
pub fn solve_oscillating(
    model: &PeriodicModel,
    problem: &DirichletProblem,
    eps: f64,
    n: usize,
) -> Result<GridSolution> {
    if n as f64 * eps < 32.0 {
        return Err(Error::Resolution {
            neps: n as f64 * eps,
            required: 32.0,
        });
    }
    let fd = FdProblem::Oscillating {
        model,
        driver: &problem.driver,
        eps,
    };
    newton_solve(&fd, problem, model.dim(), n, &NewtonParams::default())
}

/// Solves the homogenized problem with constant coefficients and the
/// averaged driver.
pub fn solve_effective(
    eff: &EffectiveModel,
    problem: &DirichletProblem,
    n: usize,
) -> Result<GridSolution> {
    if !eff.spd {
        return Err(Error::NotSpd {
            min_eig: eff.min_eigenvalue(),
        });
    }
    let fd = FdProblem::Effective(eff);
    newton_solve(&fd, problem, eff.d, n, &NewtonParams::default())
}

fn newton_solve(
    fd: &FdProblem,
    problem: &DirichletProblem,
    d: usize,
    n: usize,
    params: &NewtonParams,
) -> Result<GridSolution> {
    if d > 2 {
        return Err(Error::Config("finite differences support d <= 2".into()));
    }
    let (lo, hi) = match &problem.domain {
        Domain::Rect { lo, hi } => (lo.clone(), hi.clone()),
        Domain::Ball { .. } => {
            return Err(Error::Config(
                "finite differences run on hyperrectangles; use the probabilistic solvers on balls"
                    .into(),
            ))
        }
    };
    let npa = n + 1;
    let total = npa.pow(d as u32);
    let n_int_axis = n - 1;
    let n_int = n_int_axis.pow(d as u32);
    let dx: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / n as f64).collect();

    let node_point = |flat: usize| -> Point {
        let mut p = [0.0; MAX_DIM];
        let mut r = flat;
        for i in 0..d {
            let k = r % npa;
            r /= npa;
            p[i] = lo[i] + dx[i] * k as f64;
        }
        p
    };
    let interior_to_node = |int: usize| -> usize {
        let mut r = int;
        let mut flat = 0usize;
        let mut mul = 1usize;
        for _axis in 0..d {
            let k = r % n_int_axis + 1;
            r /= n_int_axis;
            flat += k * mul;
            mul *= npa;
        }
        flat
    };

    // full nodal vector with boundary pinned to g
    let mut u = vec![0.0f64; total];
    let mut is_interior = vec![false; total];
    for int in 0..n_int {
        is_interior[interior_to_node(int)] = true;
    }
    for flat in 0..total {
        if !is_interior[flat] {
            u[flat] = problem.g.eval(&node_point(flat));
        }
    }
    let node_to_interior: Vec<Option<usize>> = {
        let mut map = vec![None; total];
        for int in 0..n_int {
            map[interior_to_node(int)] = Some(int);
        }
        map
    };

    // row-major interior indexing: axis 0 is contiguous
    let bw = match d {
        1 => 1,
        _ => n_int_axis + 1,
    };

    let axis_stride = |axis: usize| -> usize { npa.pow(axis as u32) };

    // assemble residual and Jacobian at the current iterate
    let assemble = |u: &Vec<f64>| -> (Vec<f64>, Banded) {
        let mut res = vec![0.0f64; n_int];
        let mut jac = Banded::new(n_int, bw);
        for int in 0..n_int {
            let flat = interior_to_node(int);
            let x = node_point(flat);
            let (a, drift, sigma) = fd.coeffs_at(&x);

            let mut lin = 0.0; // second-order + drift terms
            let add = |jac: &mut Banded, col_flat: usize, coef: f64, lin: &mut f64, u: &Vec<f64>| {
                *lin += coef * u[col_flat];
                if let Some(col) = node_to_interior[col_flat] {
                    jac.add(int, col, coef);
                }
            };

            let mut diag_coef = 0.0;
            for axis in 0..d {
                let s = axis_stride(axis);
                let up = flat + s;
                let dn = flat - s;
                let aii = a[axis][axis].max(0.0);
                let diff = 0.5 * aii / (dx[axis] * dx[axis]);
                let b = drift[axis];
                let (up_c, dn_c) = if b.abs() * dx[axis] <= aii {
                    (diff + 0.5 * b / dx[axis], diff - 0.5 * b / dx[axis])
                } else if b > 0.0 {
                    (diff + b / dx[axis], diff)
                } else {
                    (diff, diff - b / dx[axis])
                };
                add(&mut jac, up, up_c, &mut lin, u);
                add(&mut jac, dn, dn_c, &mut lin, u);
                diag_coef -= up_c + dn_c;
            }
            // cross term for d = 2
            if d == 2 {
                let a12 = 0.5 * (a[0][1] + a[1][0]);
                if a12 != 0.0 {
                    let c = a12 / (4.0 * dx[0] * dx[1]);
                    let s0 = axis_stride(0);
                    let s1 = axis_stride(1);
                    add(&mut jac, flat + s0 + s1, c, &mut lin, u);
                    add(&mut jac, flat - s0 - s1, c, &mut lin, u);
                    add(&mut jac, flat + s0 - s1, -c, &mut lin, u);
                    add(&mut jac, flat - s0 + s1, -c, &mut lin, u);
                }
            }
            lin += diag_coef * u[flat];
            jac.add(int, int, diag_coef);

            // z = ∇u σ by central differences
            let mut grad = [0.0; MAX_DIM];
            for axis in 0..d {
                let s = axis_stride(axis);
                grad[axis] = (u[flat + s] - u[flat - s]) / (2.0 * dx[axis]);
            }
            let mut z = [0.0; MAX_DIM];
            for j in 0..d {
                for i in 0..d {
                    z[j] += grad[i] * sigma[i][j];
                }
            }
            let dv = fd.driver_at(&x, u[flat], &z);
            res[int] = lin + dv.f;
            jac.add(int, int, dv.df_dy);
            // driver coupling through the central-difference gradient
            for axis in 0..d {
                let s = axis_stride(axis);
                let mut dz = 0.0;
                for j in 0..d {
                    dz += dv.df_dz[j] * sigma[axis][j];
                }
                let coef = dz / (2.0 * dx[axis]);
                if let Some(col) = node_to_interior[flat + s] {
                    jac.add(int, col, coef);
                }
                if let Some(col) = node_to_interior[flat - s] {
                    jac.add(int, col, -coef);
                }
            }
        }
        (res, jac)
    };

    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let op_scale: f64 = {
        let x0 = node_point(interior_to_node(n_int / 2));
        let (a, drift, _) = fd.coeffs_at(&x0);
        let mut s = 1.0f64;
        for axis in 0..d {
            s = s.max(a[axis][axis].abs() / (dx[axis] * dx[axis]))
                .max(drift[axis].abs() / dx[axis]);
        }
        s
    };
    let tol = params.rel_tol * op_scale.max(1.0);

    let (mut res, mut jac) = assemble(&u);
    let mut res_norm = inf(&res);
    let mut iters = 0;
    while res_norm > tol && iters < params.max_iters {
        let mut rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        jac.lu_solve(&mut rhs).map_err(|_| Error::NewtonDiverged {
            residual: res_norm,
            iters,
        })?;
        // backtracking line search on the residual norm, floor 2^-20
        let mut t = 1.0f64;
        loop {
            let mut trial = u.clone();
            for int in 0..n_int {
                trial[interior_to_node(int)] += t * rhs[int];
            }
            let (trial_res, trial_jac) = assemble(&trial);
            let trial_norm = inf(&trial_res);
            if trial_norm < res_norm || trial_norm <= tol {
                u = trial;
                res = trial_res;
                jac = trial_jac;
                res_norm = trial_norm;
                break;
            }
            t *= 0.5;
            if t < 2.0f64.powi(-20) {
                return Err(Error::NewtonDiverged {
                    residual: res_norm,
                    iters,
                });
            }
        }
        iters += 1;
    }
    if res_norm > tol {
        return Err(Error::NewtonDiverged {
            residual: res_norm,
            iters,
        });
    }

    Ok(GridSolution {
        d,
        n,
        lo,
        hi,
        values: u,
        residual_norm: res_norm,
        newton_iters: iters,
    })
}

/// Band-storage LU without pivoting. The discretization produces diagonally
/// dominant Jacobians, so pivoting is unnecessary; a zero pivot is reported
/// as an error and surfaces as Newton divergence.
struct Banded {
    n: usize,
    bw: usize,
    /// data[i][k] holds entry (i, i + k - bw).
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        row * (2 * self.bw + 1) + (col + self.bw - row)
    }

    fn add(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(col + self.bw >= row && col <= row + self.bw);
        let k = self.idx(row, col);
        self.data[k] += v;
    }

    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.idx(row, col)]
    }

    fn set(&mut self, row: usize, col: usize, v: f64) {
        let k = self.idx(row, col);
        self.data[k] = v;
    }

    /// In-place LU factorization and solve.
    fn lu_solve(&mut self, rhs: &mut [f64]) -> std::result::Result<(), ()> {
        let n = self.n;
        let bw = self.bw;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(());
            }
            let i_max = (k + bw).min(n - 1);
            for i in (k + 1)..=i_max {
                let l = self.get(i, k) / pivot;
                if l != 0.0 {
                    self.set(i, k, l);
                    let j_max = (k + bw).min(n - 1);
                    for j in (k + 1)..=j_max {
                        let v = self.get(i, j) - l * self.get(k, j);
                        self.set(i, j, v);
                    }
                    rhs[i] -= l * rhs[k];
                }
            }
        }
        for k in (0..n).rev() {
            let j_max = (k + bw).min(n - 1);
            let mut s = rhs[k];
            for j in (k + 1)..=j_max {
                s -= self.get(k, j) * rhs[j];
            }
            rhs[k] = s / self.get(k, k);
        }
        Ok(())
    }
}

impl EffectiveModel {
    /// fbar together with its y and z partial derivatives, by quadrature of
    /// the catalog driver's partials with the cell factor chain rule.
    pub fn fbar_with_partials(&self, _x_slow: &Point, y: f64, z: &VecValue) -> DriverVals {
        let d = self.d;
        let mut f = 0.0;
        let mut df_dy = 0.0;
        let mut df_dz = [0.0; MAX_DIM];
        for cell in &self.cells {
            let mut lz = [0.0; MAX_DIM];
            for i in 0..d {
                for j in 0..d {
                    lz[i] += cell.lambda[i][j] * z[j];
                }
            }
            let dv = self.driver.eval_with_partials(&cell.center, y, &lz);
            f += cell.weight * dv.f;
            df_dy += cell.weight * dv.df_dy;
            for j in 0..d {
                for i in 0..d {
                    df_dz[j] += cell.weight * dv.df_dz[i] * cell.lambda[i][j];
                }
            }
        }
        DriverVals { f, df_dy, df_dz }
    }
}
