//! Bundled example models used by the test suites, the shipped configs, and
//! the documentation. They are chosen so that reflection symmetry makes the
//! drift centering exact (continuum and discrete), which keeps the cell
//! problem solvable to machine precision.

use crate::coeffs::{PeriodicModel, ScalarCoeff, TrigPoly};
use crate::domain::Domain;
use crate::driver::{BoundaryData, DirichletProblem, Driver};

/// d = 1, a(x) = 2 + sin 2πx, b = c = 0. The effective diffusion is the
/// harmonic mean 1 / ∫ a^{-1} = sqrt(3).
pub fn harmonic_mean_1d() -> PeriodicModel {
    PeriodicModel::scalar_1d(
        ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
        ScalarCoeff::zero(),
        ScalarCoeff::zero(),
    )
}

/// d = 1, a(x) = 2 + sin 2πx, b(x) = cos(2πx)/2, c = 0. The drift is odd and
/// a is even about x = 1/4, so ∫ b dμ = 0 exactly, including on even grids.
pub fn centered_drift_1d() -> PeriodicModel {
    PeriodicModel::scalar_1d(
        ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
        ScalarCoeff::Trig(TrigPoly::single(0.0, [1, 0, 0], 0.5, 0.0)),
        ScalarCoeff::zero(),
    )
}

/// Width of the dead zone of the degenerate showcase model.
pub const DEGENERATE_DEAD_WIDTH: f64 = 0.025;

/// d = 1 degenerate showcase: sigma = 0.35 max(cos(0.025π) + cos 2πx, 0)^2
/// vanishes on the interval |x - 1/2| <= 0.0125; the drift b = -0.6 sin 2πx
/// points out of the dead zone from both sides and is odd about 1/2, so the
/// centering stays exact by symmetry while the invariant measure vanishes
/// only on the dead zone.
pub fn degenerate_1d() -> PeriodicModel {
    let c0 = (DEGENERATE_DEAD_WIDTH * std::f64::consts::PI).cos();
    PeriodicModel::scalar_1d(
        ScalarCoeff::ClippedTrig {
            poly: TrigPoly::single(c0, [1, 0, 0], 1.0, 0.0).scaled(0.591_6),
            power: 2,
        },
        ScalarCoeff::Trig(TrigPoly::single(0.0, [1, 0, 0], 0.0, -0.6)),
        ScalarCoeff::zero(),
    )
}

/// d = 2 model with diagonal sigma: a_ii(x) = 2 + sin 2πx_i, b = 0, c = 0.
/// The effective diffusion is sqrt(3) I.
pub fn diagonal_2d() -> PeriodicModel {
    PeriodicModel::diagonal(
        2,
        vec![
            ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
            ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [0, 1, 0], 0.0, 1.0)),
        ],
        vec![ScalarCoeff::zero(), ScalarCoeff::zero()],
        vec![ScalarCoeff::zero(), ScalarCoeff::zero()],
    )
    .expect("well-formed 2d model")
}

/// The oscillating semilinear benchmark: centered drift, a slow drift c, a
/// fast-modulated monotone driver, and non-constant boundary data on (0, 1).
pub fn oscillating_semilinear_1d() -> (PeriodicModel, DirichletProblem) {
    let model = PeriodicModel::scalar_1d(
        ScalarCoeff::SqrtTrig(TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0)),
        ScalarCoeff::Trig(TrigPoly::single(0.0, [1, 0, 0], 0.5, 0.0)),
        ScalarCoeff::Trig(TrigPoly::single(0.2, [1, 0, 0], 0.2, 0.0)),
    );
    let driver = Driver::FastModulated {
        source: TrigPoly::single(1.0, [1, 0, 0], 0.0, 0.8),
        kappa: 1.0,
        zeta: vec![0.3],
    };
    let problem = DirichletProblem::new(
        Domain::unit_interval(),
        BoundaryData::Affine {
            offset: 0.1,
            coefs: vec![0.5],
        },
        driver,
        2.0,
        vec![0.5, 0.25, 0.1, 0.05],
    )
    .expect("bundled semilinear problem satisfies the exponent condition");
    (model, problem)
}

/// Dirichlet data for the degenerate showcase convergence run.
pub fn degenerate_problem() -> DirichletProblem {
    DirichletProblem::new(
        Domain::unit_interval(),
        BoundaryData::Affine {
            offset: 0.0,
            coefs: vec![1.0],
        },
        Driver::LinearY { kappa: 1.0 },
        1.0,
        vec![0.5, 0.25, 0.1, 0.05],
    )
    .expect("degenerate showcase problem satisfies the exponent condition")
}
