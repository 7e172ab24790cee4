//! Assembly of the effective (homogenized) model: the constant diffusion
//! matrix A = ∫ Λ Λ* dμ, the constant drift C = ∫ (I + ∂bhat) c dμ, and the
//! averaged driver fbar(x, y, z) = ∫ f(·, x, y, Λ(·) z) dμ realized as a
//! quadrature over the torus grid.

use serde::{Deserialize, Serialize};

use crate::coeffs::{MatValue, PeriodicModel, Point, VecValue, MAX_DIM};
use crate::corrector::{CorrectorBackend, CorrectorField};
use crate::driver::Driver;
use crate::dynamics::{sym_sqrt, ForwardDynamics};
use crate::error::{Error, Result};
use crate::measure::{MeasureBackend, MeasureEstimate};

/// One quadrature cell of the averaged driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FbarCell {
    pub center: Point,
    pub weight: f64,
    pub lambda: MatValue,
}

/// Where an effective model came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub measure_backend: MeasureBackend,
    pub corrector_backend: CorrectorBackend,
    pub grid_n: usize,
}

/// Constant-coefficient limit model with the averaged driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub d: usize,
    /// Symmetrized effective diffusion matrix.
    pub a: MatValue,
    pub c: VecValue,
    /// Eigenvalues of A, ascending.
    pub eigenvalues: Vec<f64>,
    /// min eigenvalue > spd_tol.
    pub spd: bool,
    pub spd_tol: f64,
    /// Standard error of A entries propagated from Monte Carlo inputs, when
    /// either input carried per-cell noise (independent-error approximation).
    pub a_se: Option<MatValue>,
    /// Quadrature data captured by the fbar closure.
    pub cells: Vec<FbarCell>,
    pub driver: Driver,
    pub provenance: Provenance,
}

/// Computes A, C and the fbar quadrature from a measure/corrector pair
/// sharing one grid. A non-SPD A is not an error here: the flag and the
/// eigenvalue report feed the validation stage.
pub fn effective_coefficients(
    model: &PeriodicModel,
    measure: &MeasureEstimate,
    corrector: &CorrectorField,
    driver: &Driver,
    spd_tol: f64,
) -> Result<EffectiveModel> {
    if measure.grid != corrector.grid {
        return Err(Error::Config(
            "measure and corrector must share a torus grid".into(),
        ));
    }
    let grid = measure.grid;
    let d = grid.dim();
    let n = grid.n_cells();

    let mut a = [[0.0; MAX_DIM]; MAX_DIM];
    let mut c = [0.0; MAX_DIM];
    let mut cells = Vec::with_capacity(n);
    for cell in 0..n {
        let w = measure.weights[cell];
        let lambda = corrector.lambda_at_cell(model, cell);
        let vals = model.eval(&grid.center(cell));
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += lambda[i][k] * lambda[j][k];
                }
                a[i][j] += w * s;
            }
            let db = &corrector.dbhat[cell];
            let mut ci = vals.c[i];
            for k in 0..d {
                ci += db[i][k] * vals.c[k];
            }
            c[i] += w * ci;
        }
        cells.push(FbarCell {
            center: grid.center(cell),
            weight: w,
            lambda,
        });
    }
    // exact symmetry by construction up to roundoff; enforce it
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }

    let mut am = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            am[(i, j)] = a[i][j];
        }
    }
    let mut eigenvalues: Vec<f64> = am.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let spd = eigenvalues[0] > spd_tol;

    let a_se = propagate_a_se(model, measure, corrector, &a);

    Ok(EffectiveModel {
        d,
        a,
        c,
        eigenvalues,
        spd,
        spd_tol,
        a_se,
        cells,
        driver: driver.clone(),
        provenance: Provenance {
            measure_backend: measure.backend,
            corrector_backend: corrector.backend,
            grid_n: grid.n_per_axis(),
        },
    })
}

/// First-order error propagation into A from per-cell measure noise and
/// per-cell corrector noise, treated as independent across cells.
fn propagate_a_se(
    model: &PeriodicModel,
    measure: &MeasureEstimate,
    corrector: &CorrectorField,
    a: &MatValue,
) -> Option<MatValue> {
    if measure.se.is_none() && corrector.se.is_none() {
        return None;
    }
    let grid = measure.grid;
    let d = grid.dim();
    let n = grid.n_cells();
    let two_dx = 2.0 * grid.spacing();
    let mut var = [[0.0; MAX_DIM]; MAX_DIM];

    for cell in 0..n {
        let lambda = corrector.lambda_at_cell(model, cell);
        let mut lam2 = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    lam2[i][j] += lambda[i][k] * lambda[j][k];
                }
            }
        }
        // measure noise: d A_ij / d w_cell = (ΛΛ*)_ij - A_ij (weights sum to 1)
        if let Some(se_w) = &measure.se {
            let sw = se_w[cell];
            for i in 0..d {
                for j in 0..d {
                    let g = lam2[i][j] - a[i][j];
                    var[i][j] += g * g * sw * sw;
                }
            }
        }
        // corrector noise enters through dbhat = centered differences of bhat
        if let Some(se_b) = &corrector.se {
            let sigma = model.eval(&grid.center(cell)).sigma;
            let w = measure.weights[cell];
            // se of dbhat_{k,l} at this cell
            let mut se_db = [[0.0; MAX_DIM]; MAX_DIM];
            for l in 0..d {
                let up = grid.neighbor(cell, l, 1);
                let dn = grid.neighbor(cell, l, -1);
                for k in 0..d {
                    se_db[k][l] =
                        (se_b[up][k].powi(2) + se_b[dn][k].powi(2)).sqrt() / two_dx;
                }
            }
            // d (ΛΛ*)_ij / d D_kl = δ_ik (σ Λ*)_lj + δ_jk (σ Λ*)_li
            let mut sig_lam = [[0.0; MAX_DIM]; MAX_DIM];
            for l in 0..d {
                for j in 0..d {
                    for m in 0..d {
                        sig_lam[l][j] += sigma[l][m] * lambda[j][m];
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let mut g = 0.0;
                            if i == k {
                                g += sig_lam[l][j];
                            }
                            if j == k {
                                g += sig_lam[l][i];
                            }
                            var[i][j] += (w * g * se_db[k][l]).powi(2);
                        }
                    }
                }
            }
        }
    }
    let mut se = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            se[i][j] = var[i][j].sqrt();
        }
    }
    Some(se)
}

impl EffectiveModel {
    /// Averaged driver: quadrature of f(cell, y, Lambda(cell) z) against the
    /// captured measure. Deterministic in its inputs. The slow-space argument
    /// is accepted for interface completeness; catalog drivers do not read it.
    pub fn evaluate_fbar(&self, _x_slow: &Point, y: f64, z: &VecValue) -> f64 {
        let d = self.d;
        let mut acc = 0.0;
        for cell in &self.cells {
            let mut lz = [0.0; MAX_DIM];
            for i in 0..d {
                for j in 0..d {
                    lz[i] += cell.lambda[i][j] * z[j];
                }
            }
            acc += cell.weight * self.driver.eval(&cell.center, y, &lz);
        }
        acc
    }

    /// μ-average of Lambda itself, ∫ Λ dμ.
    pub fn lambda_mean(&self) -> MatValue {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for cell in &self.cells {
            for i in 0..self.d {
                for j in 0..self.d {
                    m[i][j] += cell.weight * cell.lambda[i][j];
                }
            }
        }
        m
    }

    /// Forward dynamics x + C t + A^{1/2} B_t of the limit diffusion.
    pub fn dynamics(&self) -> Result<ForwardDynamics<'static>> {
        let sqrt_a = sym_sqrt(&self.a, self.d, self.spd_tol)?;
        Ok(ForwardDynamics::limit(self.d, self.c, sqrt_a))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }
}
