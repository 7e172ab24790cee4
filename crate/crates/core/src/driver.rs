//! Driver catalog for the semilinear term and the Dirichlet problem data.
//!
//! Each catalog family carries closed-form monotonicity and Lipschitz
//! constants (mu, K) rather than estimating them: a driver is monotone in y
//! with constant mu < 0 (or mu = 0 for y-independent families), Lipschitz in
//! z with constant at most K, and of linear growth K(1 + |y| + |z|). The
//! fast argument enters through a trigonometric source; slow-space
//! dependence is not part of the catalog.

use crate::coeffs::{Point, TrigPoly, VecValue, MAX_DIM};
use crate::domain::Domain;
use crate::error::{Error, Result};

/// Semilinear driver f(x_fast, x_slow, y, z).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Driver {
    Zero,
    /// f = value.
    Const { value: f64 },
    /// f = -kappa * y, kappa >= 0.
    LinearY { kappa: f64 },
    /// f = source(x_fast) - kappa * y + zeta . z.
    FastModulated {
        source: TrigPoly,
        kappa: f64,
        zeta: Vec<f64>,
    },
    /// f = -kappa * y + amp * sin(y) + gamma * (sqrt(1 + |z|^2) - 1).
    /// Monotone when amp < kappa; exercises genuine nonlinearity in y and z.
    Saturating { kappa: f64, amp: f64, gamma: f64 },
}

/// Driver value together with its partial derivatives, for Newton solves.
#[derive(Debug, Clone, Copy)]
pub struct DriverVals {
    pub f: f64,
    pub df_dy: f64,
    pub df_dz: VecValue,
}

impl Driver {
    pub fn eval(&self, x_fast: &Point, y: f64, z: &VecValue) -> f64 {
        self.eval_with_partials(x_fast, y, z).f
    }

    pub fn eval_with_partials(&self, x_fast: &Point, y: f64, z: &VecValue) -> DriverVals {
        match self {
            Driver::Zero => DriverVals {
                f: 0.0,
                df_dy: 0.0,
                df_dz: [0.0; MAX_DIM],
            },
            Driver::Const { value } => DriverVals {
                f: *value,
                df_dy: 0.0,
                df_dz: [0.0; MAX_DIM],
            },
            Driver::LinearY { kappa } => DriverVals {
                f: -kappa * y,
                df_dy: -kappa,
                df_dz: [0.0; MAX_DIM],
            },
            Driver::FastModulated {
                source,
                kappa,
                zeta,
            } => {
                let mut f = source.eval(x_fast) - kappa * y;
                let mut df_dz = [0.0; MAX_DIM];
                for (i, zi) in zeta.iter().enumerate().take(MAX_DIM) {
                    f += zi * z[i];
                    df_dz[i] = *zi;
                }
                DriverVals {
                    f,
                    df_dy: -kappa,
                    df_dz,
                }
            }
            Driver::Saturating { kappa, amp, gamma } => {
                let z2: f64 = z.iter().map(|v| v * v).sum();
                let root = (1.0 + z2).sqrt();
                let f = -kappa * y + amp * y.sin() + gamma * (root - 1.0);
                let mut df_dz = [0.0; MAX_DIM];
                for i in 0..MAX_DIM {
                    df_dz[i] = gamma * z[i] / root;
                }
                DriverVals {
                    f,
                    df_dy: -kappa + amp * y.cos(),
                    df_dz,
                }
            }
        }
    }

    /// Monotonicity constant mu: (y - y')(f(y) - f(y')) <= mu (y - y')^2.
    pub fn mu(&self) -> f64 {
        match self {
            Driver::Zero | Driver::Const { .. } => 0.0,
            Driver::LinearY { kappa } => -kappa,
            Driver::FastModulated { kappa, .. } => -kappa,
            Driver::Saturating { kappa, amp, .. } => amp - kappa,
        }
    }

    /// Lipschitz/growth constant K of (H2.2).
    pub fn k_lip(&self) -> f64 {
        match self {
            Driver::Zero => 0.0,
            Driver::Const { value } => value.abs(),
            Driver::LinearY { kappa } => *kappa,
            Driver::FastModulated {
                source,
                kappa,
                zeta,
            } => {
                let znorm = zeta.iter().map(|v| v * v).sum::<f64>().sqrt();
                source.sup_bound().max(*kappa).max(znorm)
            }
            Driver::Saturating { kappa, amp, gamma } => (kappa + amp).max(*gamma),
        }
    }

    /// True when f does not depend on (y, z); such drivers admit the plain
    /// Feynman-Kac representation without Picard iteration.
    pub fn is_additive(&self) -> bool {
        match self {
            Driver::Zero | Driver::Const { .. } => true,
            Driver::FastModulated { kappa, zeta, .. } => {
                *kappa == 0.0 && zeta.iter().all(|v| *v == 0.0)
            }
            _ => false,
        }
    }
}

/// Boundary data g on the boundary of G, from a closed catalog. Entries are
/// defined on all of R^d so the same object serves as the g-interpolant that
/// pins boundary values in the regression solver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    Constant { value: f64 },
    /// g(x) = offset + coefs . x
    Affine { offset: f64, coefs: Vec<f64> },
    /// g(x) = offset + sum_i quad_i x_i^2 + coefs . x
    Quadratic {
        offset: f64,
        coefs: Vec<f64>,
        quad: Vec<f64>,
    },
}

impl BoundaryData {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            BoundaryData::Constant { value } => *value,
            BoundaryData::Affine { offset, coefs } => {
                offset + coefs.iter().enumerate().map(|(i, c)| c * x[i]).sum::<f64>()
            }
            BoundaryData::Quadratic {
                offset,
                coefs,
                quad,
            } => {
                let mut v = *offset;
                for (i, c) in coefs.iter().enumerate() {
                    v += c * x[i];
                }
                for (i, q) in quad.iter().enumerate() {
                    v += q * x[i] * x[i];
                }
                v
            }
        }
    }

    /// Spatial gradient (independent of the evaluation point for affine
    /// data; evaluated pointwise for quadratic data).
    pub fn grad_at(&self, x: &Point, d: usize) -> VecValue {
        let mut g = [0.0; MAX_DIM];
        match self {
            BoundaryData::Constant { .. } => {}
            BoundaryData::Affine { coefs, .. } => {
                for (i, c) in coefs.iter().take(d).enumerate() {
                    g[i] = *c;
                }
            }
            BoundaryData::Quadratic { coefs, quad, .. } => {
                for (i, c) in coefs.iter().take(d).enumerate() {
                    g[i] = *c;
                }
                for (i, q) in quad.iter().take(d).enumerate() {
                    g[i] += 2.0 * q * x[i];
                }
            }
        }
        g
    }

    /// Oscillation of g over a boundary sample (max - min); used to scale
    /// boundary-consistency tolerances.
    pub fn oscillation(&self, domain: &Domain, n_sample: usize) -> f64 {
        let d = domain.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n_sample.max(2) {
            let t = k as f64 / (n_sample.max(2) - 1) as f64;
            let p = boundary_probe(domain, d, t);
            let v = self.eval(&p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }
}

fn boundary_probe(domain: &Domain, d: usize, t: f64) -> Point {
    match domain {
        Domain::Rect { lo, hi } => {
            let mut p = [0.0; MAX_DIM];
            // walk one face pair per coordinate, sweeping the others
            for i in 0..d {
                p[i] = lo[i] + t * (hi[i] - lo[i]);
            }
            let face_axis = ((t * 977.0) as usize) % d;
            p[face_axis] = if t < 0.5 { lo[face_axis] } else { hi[face_axis] };
            p
        }
        Domain::Ball { center, radius } => {
            let mut p = [0.0; MAX_DIM];
            let theta = 2.0 * std::f64::consts::PI * t;
            p[0] = center[0] + radius * theta.cos();
            if d > 1 {
                p[1] = center[1] + radius * theta.sin();
            }
            for i in 2..d {
                p[i] = center[i];
            }
            p
        }
    }
}

/// The Dirichlet problem: domain, boundary data, driver, discount exponent,
/// and the scales swept by convergence experiments.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DirichletProblem {
    pub domain: Domain,
    pub g: BoundaryData,
    pub driver: Driver,
    pub lambda: f64,
    pub eps_list: Vec<f64>,
}

impl DirichletProblem {
    /// Builds the problem, enforcing lambda > 2 mu + K^2 at construction.
    pub fn new(
        domain: Domain,
        g: BoundaryData,
        driver: Driver,
        lambda: f64,
        eps_list: Vec<f64>,
    ) -> Result<Self> {
        let p = Self::new_lenient(domain, g, driver, lambda, eps_list);
        let (ok, margin) = p.h24_margin();
        if !ok {
            return Err(Error::Config(format!(
                "lambda = {} violates lambda > 2 mu + K^2 = {} (margin {margin:.3e})",
                p.lambda,
                2.0 * p.driver.mu() + p.driver.k_lip().powi(2),
            )));
        }
        Ok(p)
    }

    /// Builds without enforcing the exponent condition, for diagnostic flows
    /// that want validate_assumptions to report the violation instead.
    pub fn new_lenient(
        domain: Domain,
        g: BoundaryData,
        driver: Driver,
        lambda: f64,
        eps_list: Vec<f64>,
    ) -> Self {
        Self {
            domain,
            g,
            driver,
            lambda,
            eps_list,
        }
    }

    /// (passes, lambda - (2 mu + K^2)).
    pub fn h24_margin(&self) -> (bool, f64) {
        let bound = 2.0 * self.driver.mu() + self.driver.k_lip().powi(2);
        let margin = self.lambda - bound;
        (margin > 0.0, margin)
    }
}
