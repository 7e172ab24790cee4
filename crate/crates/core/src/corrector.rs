//! The cell (Poisson) problem on the torus: L bhat_i + b_i = 0, solved either
//! on the finite-volume grid or through the probabilistic representation
//! bhat_i(x) = ∫_0^∞ E_x[b_i(X_t)] dt truncated by the measured mixing rate.
//!
//! The centering condition ∫ b dμ = 0 is a hard precondition: without it the
//! probabilistic integral diverges and the grid system is inconsistent. The
//! grid backend projects the right-hand side onto the range of the discrete
//! generator using the *discrete* stationary vector (exact solvability) and
//! pins the additive constant with a bordered solve; the probabilistic
//! backend truncates at a horizon where the fitted spectral-gap envelope
//! C e^{-rho t} pushes the tail below `tail_tol`, with a 10x safety factor.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{MatValue, PeriodicModel, Point, VecValue, MAX_DIM};
use crate::dynamics::walk_fast;
use crate::error::{Error, Result};
use crate::generator::{assemble_generator, stationary_vector, TorusGrid};
use crate::measure::{MeasureEstimate, MixingEstimate};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectorBackend {
    Grid,
    FeynmanKac,
}

/// Grid values of the corrector bhat and its spatial Jacobian; together with
/// sigma they define the homogenized diffusion factor
/// Lambda = (I + d bhat) sigma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorField {
    pub grid: TorusGrid,
    /// bhat components per cell.
    pub bhat: Vec<VecValue>,
    /// dbhat[cell][i][j] = d bhat_i / d x_j, by centered differences.
    pub dbhat: Vec<MatValue>,
    /// max_i || L_h bhat_i + b_i ||_inf on the grid (grid backend), or the
    /// truncation tail bound (probabilistic backend).
    pub residual_norm: f64,
    pub backend: CorrectorBackend,
    /// Per-cell standard error of bhat (probabilistic backend only).
    pub se: Option<Vec<VecValue>>,
}

impl CorrectorField {
    /// Multilinear periodic interpolation of bhat at an arbitrary point.
    pub fn bhat_at(&self, x: &Point) -> VecValue {
        let d = self.grid.dim();
        let n = self.grid.n_per_axis();
        let nf = n as f64;
        // cell-center coordinates: center_k = (k + 1/2)/n
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for i in 0..d {
            let w = x[i] - x[i].floor();
            let u = w * nf - 0.5;
            let fl = u.floor();
            base[i] = ((fl as i64).rem_euclid(n as i64)) as usize;
            frac[i] = u - fl;
        }
        let mut out = [0.0; MAX_DIM];
        for corner in 0..(1usize << d) {
            let mut idx = [0usize; MAX_DIM];
            let mut w = 1.0;
            for i in 0..d {
                if corner & (1 << i) != 0 {
                    idx[i] = (base[i] + 1) % n;
                    w *= frac[i];
                } else {
                    idx[i] = base[i];
                    w *= 1.0 - frac[i];
                }
            }
            let v = &self.bhat[self.grid.flat_index(&idx)];
            for i in 0..d {
                out[i] += w * v[i];
            }
        }
        out
    }

    /// Lambda = (I + d bhat) sigma at a cell center.
    pub fn lambda_at_cell(&self, model: &PeriodicModel, cell: usize) -> MatValue {
        let d = self.grid.dim();
        let sigma = model.eval(&self.grid.center(cell)).sigma;
        let db = &self.dbhat[cell];
        let mut lambda = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                let mut s = sigma[i][j];
                for k in 0..d {
                    s += db[i][k] * sigma[k][j];
                }
                lambda[i][j] = s;
            }
        }
        lambda
    }

    /// Largest |bhat| over the grid, across components.
    pub fn sup_norm(&self) -> f64 {
        self.bhat
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// mu-average of each bhat component under the given measure.
    pub fn mean_under(&self, measure: &MeasureEstimate) -> VecValue {
        let d = self.grid.dim();
        let mut mean = [0.0; MAX_DIM];
        for (cell, w) in measure.weights.iter().enumerate() {
            for i in 0..d {
                mean[i] += w * self.bhat[cell][i];
            }
        }
        mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorParams {
    /// Largest tolerated |∫ b_i dμ| before the solve refuses to run.
    pub centering_tol: f64,
    /// Target size of the neglected probabilistic tail.
    pub tail_tol: f64,
    /// Paths per grid node (probabilistic backend).
    pub n_paths: usize,
    pub h: f64,
    pub seed: u64,
}

impl CorrectorParams {
    pub fn new(seed: u64) -> Self {
        Self {
            centering_tol: 1e-3,
            tail_tol: 1e-4,
            n_paths: 400,
            h: 1e-3,
            seed,
        }
    }
}

/// Solves the cell problem for every drift component.
///
/// Preconditions: the drift must be centered under `measure` within
/// `params.centering_tol`; the probabilistic backend additionally needs an
/// accepted mixing estimate to place its truncation horizon.
pub fn solve_cell_problem(
    model: &PeriodicModel,
    measure: &MeasureEstimate,
    backend: CorrectorBackend,
    mixing: Option<&MixingEstimate>,
    params: &CorrectorParams,
) -> Result<CorrectorField> {
    let residual = measure
        .centering_residual(model)
        .into_iter()
        .fold(0.0f64, f64::max);
    if residual > params.centering_tol {
        return Err(Error::CenteringViolated {
            residual,
            tol: params.centering_tol,
        });
    }
    match backend {
        CorrectorBackend::Grid => solve_cell_grid(model, measure),
        CorrectorBackend::FeynmanKac => solve_cell_feynman_kac(model, measure, mixing, params),
    }
}

fn solve_cell_grid(model: &PeriodicModel, measure: &MeasureEstimate) -> Result<CorrectorField> {
    let grid = measure.grid;
    let d = grid.dim();
    let n = grid.n_cells();
    let q = assemble_generator(model, 0.0, &grid);
    // compatibility projection against the discrete stationary vector
    let m_h = stationary_vector(&q)?;

    let b_vals: Vec<VecValue> = (0..n).map(|cell| model.eval(&grid.center(cell)).b).collect();

    // bordered system [Q 1; m^T 0] pins the m_h-mean of the solution to zero
    let mut bordered = DMatrix::<f64>::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(&q);
    for i in 0..n {
        bordered[(i, n)] = 1.0;
        bordered[(n, i)] = m_h[i];
    }
    let lu = bordered.lu();

    let mut bhat = vec![[0.0; MAX_DIM]; n];
    let mut residual_norm = 0.0f64;
    for comp in 0..d {
        let alpha: f64 = (0..n).map(|i| m_h[i] * b_vals[i][comp]).sum();
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -(b_vals[i][comp] - alpha);
        }
        let sol = lu.solve(&rhs).ok_or_else(|| {
            Error::SingularSystem(format!(
                "bordered cell system singular for component {comp} at N = {}",
                grid.n_per_axis()
            ))
        })?;
        // residual against the unprojected right-hand side
        let x = sol.rows(0, n).clone_owned();
        let r = &q * &x;
        for i in 0..n {
            residual_norm = residual_norm.max((r[i] + b_vals[i][comp]).abs());
        }
        let q_scale = q.amax().max(1.0);
        let solve_defect = (0..n)
            .map(|i| (r[i] - rhs[i]).abs())
            .fold(0.0f64, f64::max);
        if solve_defect > 1e-6 * q_scale {
            return Err(Error::SingularSystem(format!(
                "cell solve defect {solve_defect:.3e} for component {comp} at N = {}",
                grid.n_per_axis()
            )));
        }
        for i in 0..n {
            bhat[i][comp] = x[i];
        }
    }

    let dbhat = centered_jacobian(&grid, &bhat);
    let mut field = CorrectorField {
        grid,
        bhat,
        dbhat,
        residual_norm,
        backend: CorrectorBackend::Grid,
        se: None,
    };
    recenter(&mut field, measure);
    Ok(field)
}

fn solve_cell_feynman_kac(
    model: &PeriodicModel,
    measure: &MeasureEstimate,
    mixing: Option<&MixingEstimate>,
    params: &CorrectorParams,
) -> Result<CorrectorField> {
    let grid = measure.grid;
    let d = grid.dim();
    let n = grid.n_cells();
    let mixing = mixing.ok_or_else(|| {
        Error::Config("probabilistic cell backend needs a mixing estimate".into())
    })?;
    if !mixing.accepted || !(mixing.rho > 0.0) {
        return Err(Error::Config(
            "mixing estimate was rejected; cannot place the truncation horizon".into(),
        ));
    }
    let b_sup = (0..n)
        .map(|cell| {
            let b = model.eval(&grid.center(cell)).b;
            (0..d).map(|i| b[i].abs()).fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max)
        .max(1e-12);
    // tail bound (C ||b|| / rho) e^{-rho T} < tail_tol, with 10x safety
    let c_pref = mixing.c_pref.max(1.0);
    let t_max =
        ((10.0 * c_pref * b_sup) / (mixing.rho * params.tail_tol)).ln().max(0.0) / mixing.rho;
    let tail_bound = c_pref * b_sup / mixing.rho * (-mixing.rho * t_max).exp();
    let n_steps = (t_max / params.h).ceil() as usize;

    let mut bhat = vec![[0.0; MAX_DIM]; n];
    let mut se = vec![[0.0; MAX_DIM]; n];
    let cell_results: Vec<(VecValue, VecValue)> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let x0 = grid.center(cell);
            let mut sum = [0.0f64; MAX_DIM];
            let mut sumsq = [0.0f64; MAX_DIM];
            for path in 0..params.n_paths {
                let mut rng =
                    stream_rng(params.seed, (cell * params.n_paths + path) as u64);
                let mut acc = [0.0f64; MAX_DIM];
                walk_fast(model, &x0, 0.0, params.h, n_steps, &mut rng, |t, x| {
                    if t > 0.0 {
                        let b = model.eval(x).b;
                        for i in 0..d {
                            acc[i] += b[i] * params.h;
                        }
                    }
                });
                for i in 0..d {
                    sum[i] += acc[i];
                    sumsq[i] += acc[i] * acc[i];
                }
            }
            let p = params.n_paths as f64;
            let mut mean = [0.0; MAX_DIM];
            let mut err = [0.0; MAX_DIM];
            for i in 0..d {
                mean[i] = sum[i] / p;
                let var = (sumsq[i] - sum[i] * sum[i] / p).max(0.0) / (p - 1.0).max(1.0);
                err[i] = (var / p).sqrt();
            }
            (mean, err)
        })
        .collect();
    for (cell, (mean, err)) in cell_results.into_iter().enumerate() {
        bhat[cell] = mean;
        se[cell] = err;
    }

    let dbhat = centered_jacobian(&grid, &bhat);
    let mut field = CorrectorField {
        grid,
        bhat,
        dbhat,
        residual_norm: tail_bound,
        backend: CorrectorBackend::FeynmanKac,
        se: Some(se),
    };
    recenter(&mut field, measure);
    Ok(field)
}

fn centered_jacobian(grid: &TorusGrid, bhat: &[VecValue]) -> Vec<MatValue> {
    let d = grid.dim();
    let two_dx = 2.0 * grid.spacing();
    (0..grid.n_cells())
        .map(|cell| {
            let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
            for axis in 0..d {
                let up = grid.neighbor(cell, axis, 1);
                let dn = grid.neighbor(cell, axis, -1);
                for comp in 0..d {
                    jac[comp][axis] = (bhat[up][comp] - bhat[dn][comp]) / two_dx;
                }
            }
            jac
        })
        .collect()
}

/// Shifts each component so its mu-average under the companion measure is
/// exactly zero; the generator kills constants, so residuals are unaffected.
fn recenter(field: &mut CorrectorField, measure: &MeasureEstimate) {
    let mean = field.mean_under(measure);
    let d = field.grid.dim();
    for v in field.bhat.iter_mut() {
        for i in 0..d {
            v[i] -= mean[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{ScalarCoeff, TrigPoly};
    use crate::measure::{estimate_invariant_measure, MeasureBackend, OccupationParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_drift_gives_zero_corrector() {
        let m = PeriodicModel::scalar_1d(
            ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
            ScalarCoeff::zero(),
            ScalarCoeff::zero(),
        );
        let mu = estimate_invariant_measure(
            &m,
            0.0,
            MeasureBackend::StationaryGrid,
            64,
            &OccupationParams::new(0),
        )
        .unwrap();
        let field = solve_cell_problem(
            &m,
            &mu,
            CorrectorBackend::Grid,
            None,
            &CorrectorParams::new(0),
        )
        .unwrap();
        assert!(field.residual_norm < 1e-10);
        for cell in 0..field.grid.n_cells() {
            assert_abs_diff_eq!(field.bhat[cell][0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(field.dbhat[cell][0][0], 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn centering_violation_is_rejected() {
        // constant drift on a flat measure is maximally uncentered
        let m = PeriodicModel::scalar_1d(
            ScalarCoeff::constant(1.0),
            ScalarCoeff::constant(1.0),
            ScalarCoeff::zero(),
        );
        let mu = estimate_invariant_measure(
            &m,
            0.0,
            MeasureBackend::StationaryGrid,
            32,
            &OccupationParams::new(0),
        )
        .unwrap();
        let err = solve_cell_problem(
            &m,
            &mu,
            CorrectorBackend::Grid,
            None,
            &CorrectorParams::new(0),
        );
        assert!(matches!(err, Err(Error::CenteringViolated { .. })));
    }

    #[test]
    fn corrector_is_centered_after_solve() {
        // a = 2 + sin 2πx with b = cos 2πx / 2 is exactly centered by symmetry
        let m = PeriodicModel::scalar_1d(
            ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
            ScalarCoeff::Trig(TrigPoly::single(0.0, [1, 0, 0], 0.5, 0.0)),
            ScalarCoeff::zero(),
        );
        let mu = estimate_invariant_measure(
            &m,
            0.0,
            MeasureBackend::StationaryGrid,
            64,
            &OccupationParams::new(0),
        )
        .unwrap();
        let field = solve_cell_problem(
            &m,
            &mu,
            CorrectorBackend::Grid,
            None,
            &CorrectorParams::new(0),
        )
        .unwrap();
        let mean = field.mean_under(&mu);
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-12);
        // exact discrete centering by symmetry: residual at roundoff level
        assert!(field.residual_norm < 1e-8, "residual {}", field.residual_norm);
    }

    #[test]
    fn interpolation_reproduces_cell_centers() {
        let grid = TorusGrid::new(1, 8);
        let bhat: Vec<VecValue> = (0..8)
            .map(|i| {
                let mut v = [0.0; MAX_DIM];
                v[0] = i as f64;
                v
            })
            .collect();
        let field = CorrectorField {
            grid,
            dbhat: vec![[[0.0; MAX_DIM]; MAX_DIM]; 8],
            bhat,
            residual_norm: 0.0,
            backend: CorrectorBackend::Grid,
            se: None,
        };
        for i in 0..8 {
            let x = grid.center(i);
            assert_abs_diff_eq!(field.bhat_at(&x)[0], i as f64, epsilon = 1e-12);
        }
        // halfway between centers 2 and 3
        assert_abs_diff_eq!(field.bhat_at(&[0.375, 0.0, 0.0])[0], 2.5, epsilon = 1e-12);
    }
}
