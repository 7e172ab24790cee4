//! Periodic coefficient fields on the torus and the multiscale model they form.
//!
//! Coefficients come from a closed catalog built on truncated trigonometric
//! polynomials: the trig family itself, square roots of nonnegative trig
//! polynomials (so a diffusion matrix entry a = sigma^2 can be prescribed
//! directly), and clipped powers max(p, 0)^q for fields that vanish on part
//! of the torus. Catalog entries are 1-periodic in every coordinate by
//! construction. Arbitrary user closures are accepted through
//! [`ScalarCoeff::Custom`] and are tagged unchecked: they are wrapped into
//! [0,1)^d before evaluation but nothing verifies their smoothness.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Point on the torus or in state space, padded to three coordinates; only
/// the first `d` entries are meaningful.
pub type Point = [f64; 3];

pub const MAX_DIM: usize = 3;

/// Wraps every coordinate into [0,1).
pub fn wrap_torus(x: &Point, d: usize) -> Point {
    let mut y = [0.0; MAX_DIM];
    for i in 0..d {
        y[i] = x[i] - x[i].floor();
        // x.floor() on e.g. -1e-17 yields 1.0 - 1e-17 -> wraps to exactly 1.0
        if y[i] >= 1.0 {
            y[i] = 0.0;
        }
    }
    y
}

pub fn point_from_slice(x: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    for (i, v) in x.iter().take(MAX_DIM).enumerate() {
        p[i] = *v;
    }
    p
}

/// One Fourier mode of a truncated trigonometric polynomial.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigMode {
    /// Integer wave vector; only the first `d` entries are used.
    pub k: [i32; MAX_DIM],
    /// Coefficient of cos(2*pi*k.x).
    pub cos: f64,
    /// Coefficient of sin(2*pi*k.x).
    pub sin: f64,
}

/// Truncated trigonometric polynomial `c0 + sum_k [ a_k cos(2πk·x) + b_k sin(2πk·x) ]`.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct TrigPoly {
    pub constant: f64,
    #[serde(default)]
    pub modes: Vec<TrigMode>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            modes: Vec::new(),
        }
    }

    /// `c0 + a1 cos(2π k·x) + b1 sin(2π k·x)` with a single mode.
    pub fn single(c0: f64, k: [i32; MAX_DIM], cos: f64, sin: f64) -> Self {
        Self {
            constant: c0,
            modes: vec![TrigMode { k, cos, sin }],
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let mut v = self.constant;
        for m in &self.modes {
            let phase = 2.0
                * std::f64::consts::PI
                * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1] + m.k[2] as f64 * x[2]);
            v += m.cos * phase.cos() + m.sin * phase.sin();
        }
        v
    }

    /// Maximum wave number in infinity norm, 0 for constants.
    pub fn max_wavenumber(&self) -> i32 {
        self.modes
            .iter()
            .map(|m| m.k.iter().map(|k| k.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Crude upper bound: |c0| + sum of mode amplitudes.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs() + self.modes.iter().map(|m| m.cos.abs() + m.sin.abs()).sum::<f64>()
    }

    /// All coefficients multiplied by `s`.
    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for m in self.modes.iter_mut() {
            m.cos *= s;
            m.sin *= s;
        }
        self
    }
}

type CustomFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// A scalar coefficient field on the torus.
#[derive(Clone)]
pub enum ScalarCoeff {
    /// Truncated trigonometric polynomial (C-infinity).
    Trig(TrigPoly),
    /// sqrt(max(p(x), 0)). Lets a diagonal diffusion entry prescribe
    /// a(x) = p(x) exactly; smooth wherever p > 0.
    SqrtTrig(TrigPoly),
    /// max(p(x), 0)^power, power >= 1. Vanishes on {p <= 0}; C^{power-1}
    /// across the boundary of the dead set.
    ClippedTrig { poly: TrigPoly, power: u32 },
    /// User-supplied closure, periodized by wrapping; smoothness unchecked.
    Custom(CustomFn),
}

impl fmt::Debug for ScalarCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarCoeff::Trig(p) => f.debug_tuple("Trig").field(p).finish(),
            ScalarCoeff::SqrtTrig(p) => f.debug_tuple("SqrtTrig").field(p).finish(),
            ScalarCoeff::ClippedTrig { poly, power } => f
                .debug_struct("ClippedTrig")
                .field("poly", poly)
                .field("power", power)
                .finish(),
            ScalarCoeff::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ScalarCoeff {
    pub fn zero() -> Self {
        ScalarCoeff::Trig(TrigPoly::constant(0.0))
    }

    pub fn constant(c: f64) -> Self {
        ScalarCoeff::Trig(TrigPoly::constant(c))
    }

    /// Evaluates at a point already wrapped into the torus.
    pub fn eval_wrapped(&self, x: &Point) -> f64 {
        match self {
            ScalarCoeff::Trig(p) => p.eval(x),
            ScalarCoeff::SqrtTrig(p) => p.eval(x).max(0.0).sqrt(),
            ScalarCoeff::ClippedTrig { poly, power } => {
                poly.eval(x).max(0.0).powi(*power as i32)
            }
            ScalarCoeff::Custom(f) => f(x),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, ScalarCoeff::Custom(_))
    }
}

/// d x d matrix and d-vector values padded to the maximal dimension.
pub type MatValue = [[f64; MAX_DIM]; MAX_DIM];
pub type VecValue = [f64; MAX_DIM];

/// Values of all coefficient fields at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffValues {
    pub sigma: MatValue,
    pub b: VecValue,
    pub c: VecValue,
    /// a = sigma sigma^T, computed from the returned sigma.
    pub a: MatValue,
}

/// The multiscale problem data: periodic sigma, b, c on the d-torus.
///
/// Immutable after construction; shared freely across threads.
#[derive(Debug, Clone)]
pub struct PeriodicModel {
    d: usize,
    /// Row-major d x d entries.
    sigma: Vec<ScalarCoeff>,
    b: Vec<ScalarCoeff>,
    c: Vec<ScalarCoeff>,
}

impl PeriodicModel {
    pub fn new(
        d: usize,
        sigma: Vec<ScalarCoeff>,
        b: Vec<ScalarCoeff>,
        c: Vec<ScalarCoeff>,
    ) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::ModelInvalid(format!(
                "dimension {d} unsupported (1 <= d <= {MAX_DIM})"
            )));
        }
        if sigma.len() != d * d {
            return Err(Error::ModelInvalid(format!(
                "sigma needs {} entries for d = {d}, got {}",
                d * d,
                sigma.len()
            )));
        }
        if b.len() != d || c.len() != d {
            return Err(Error::ModelInvalid(format!(
                "b and c need {d} entries, got {} and {}",
                b.len(),
                c.len()
            )));
        }
        Ok(Self { d, sigma, b, c })
    }

    /// Model with sigma = sigma0 * I, b = 0, c = 0.
    pub fn isotropic_constant(d: usize, sigma0: f64) -> Self {
        let mut sigma = vec![ScalarCoeff::zero(); d * d];
        for i in 0..d {
            sigma[i * d + i] = ScalarCoeff::constant(sigma0);
        }
        Self::new(
            d,
            sigma,
            vec![ScalarCoeff::zero(); d],
            vec![ScalarCoeff::zero(); d],
        )
        .expect("constant model is well formed")
    }

    /// 1D model from scalar fields.
    pub fn scalar_1d(sigma: ScalarCoeff, b: ScalarCoeff, c: ScalarCoeff) -> Self {
        Self::new(1, vec![sigma], vec![b], vec![c]).expect("1d model is well formed")
    }

    /// Diagonal-sigma model in any supported dimension.
    pub fn diagonal(
        d: usize,
        sigma_diag: Vec<ScalarCoeff>,
        b: Vec<ScalarCoeff>,
        c: Vec<ScalarCoeff>,
    ) -> Result<Self> {
        if sigma_diag.len() != d {
            return Err(Error::ModelInvalid(format!(
                "diagonal sigma needs {d} entries, got {}",
                sigma_diag.len()
            )));
        }
        let mut sigma = vec![ScalarCoeff::zero(); d * d];
        for (i, s) in sigma_diag.into_iter().enumerate() {
            sigma[i * d + i] = s;
        }
        Self::new(d, sigma, b, c)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// True if any coefficient came through the unchecked programmatic route.
    pub fn has_custom_coeffs(&self) -> bool {
        self.sigma
            .iter()
            .chain(self.b.iter())
            .chain(self.c.iter())
            .any(ScalarCoeff::is_custom)
    }

    /// Evaluates sigma, b, c and a = sigma sigma^T at x (wrapped into the torus).
    pub fn eval(&self, x: &Point) -> CoeffValues {
        let y = wrap_torus(x, self.d);
        let d = self.d;
        let mut sigma = [[0.0; MAX_DIM]; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        let mut c = [0.0; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                sigma[i][j] = self.sigma[i * d + j].eval_wrapped(&y);
            }
            b[i] = self.b[i].eval_wrapped(&y);
            c[i] = self.c[i].eval_wrapped(&y);
        }
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += sigma[i][k] * sigma[j][k];
                }
                a[i][j] = s;
            }
        }
        CoeffValues { sigma, b, c, a }
    }

    /// Drift of the fast torus process: b + eps * c.
    pub fn fast_drift(&self, x: &Point, eps: f64) -> VecValue {
        let v = self.eval(x);
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.d {
            out[i] = v.b[i] + eps * v.c[i];
        }
        out
    }
}
