//! Invariant measure, ergodic averages, mixing, corrector, and effective
//! coefficients checked against the independent quadrature oracle.

mod common;

use common::{a_two_plus_sin, b_half_cos, zero_field, Oracle1d};
use homog_core::coeffs::{PeriodicModel, ScalarCoeff, TrigPoly};
use homog_core::corrector::{solve_cell_problem, CorrectorBackend, CorrectorParams};
use homog_core::driver::Driver;
use homog_core::effective::effective_coefficients;
use homog_core::measure::{
    ergodic_average, estimate_invariant_measure, estimate_mixing, MeasureBackend, MixingParams,
    OccupationParams,
};
use homog_core::models;

fn harmonic_oracle() -> Oracle1d {
    Oracle1d::new(&a_two_plus_sin, &zero_field, 1 << 13)
}

fn drift_oracle() -> Oracle1d {
    Oracle1d::new(&a_two_plus_sin, &b_half_cos, 1 << 13)
}

#[test]
fn stationary_grid_matches_quadrature_density() {
    let model = models::harmonic_mean_1d();
    let n = 64;
    let est = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        n,
        &OccupationParams::new(0),
    )
    .unwrap();
    let oracle = harmonic_oracle();
    for i in 0..n {
        let expected = oracle.cell_mass(i, n);
        assert!(
            (est.weights[i] - expected).abs() < 2e-5,
            "cell {i}: grid {} vs oracle {expected}",
            est.weights[i]
        );
    }
    assert!((est.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn occupation_histogram_matches_oracle_within_3se() {
    let model = models::harmonic_mean_1d();
    let n = 32;
    let mut params = OccupationParams::new(11);
    params.n_paths = 600;
    params.t_burn = 1.0;
    params.t_avg = 20.0;
    params.h = 1.5e-4;
    params.x0 = [0.37, 0.0, 0.0];
    let est =
        estimate_invariant_measure(&model, 0.0, MeasureBackend::OccupationMc, n, &params).unwrap();
    let oracle = harmonic_oracle();
    let se = est.se.as_ref().unwrap();
    let mut misses = 0;
    for i in 0..n {
        let expected = oracle.cell_mass(i, n);
        if (est.weights[i] - expected).abs() > 3.0 * se[i].max(1e-9) {
            misses += 1;
        }
    }
    // 3 SE per cell: a few misses in 32 cells would already be suspicious
    assert!(misses <= 1, "{misses} cells off by more than 3 SE");
}

#[test]
fn measure_backends_agree_within_3se() {
    let model = models::centered_drift_1d();
    let n = 32;
    let mut params = OccupationParams::new(21);
    params.n_paths = 800;
    params.t_burn = 1.0;
    params.t_avg = 20.0;
    params.h = 1.5e-4;
    let mc =
        estimate_invariant_measure(&model, 0.0, MeasureBackend::OccupationMc, n, &params).unwrap();
    let grid = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        n,
        &OccupationParams::new(0),
    )
    .unwrap();
    let se = mc.se.as_ref().unwrap();
    let mut misses = 0;
    for i in 0..n {
        if (mc.weights[i] - grid.weights[i]).abs() > 3.0 * se[i].max(1e-9) {
            misses += 1;
        }
    }
    assert!(misses <= 1, "{misses} cells disagree beyond 3 SE");
}

#[test]
fn ergodic_average_of_odd_function_vanishes() {
    let model = PeriodicModel::isotropic_constant(1, 1.0);
    let mut params = OccupationParams::new(31);
    params.n_paths = 200;
    params.h = 1e-3;
    let f = |x: &homog_core::Point| (2.0 * std::f64::consts::PI * x[0]).sin();
    let est = ergodic_average(&model, f, 0.0, 100.0, &params).unwrap();
    assert!(
        est.value.abs() <= 3.0 * est.se.max(1e-6),
        "mean {} se {}",
        est.value,
        est.se
    );
}

#[test]
fn ergodic_average_of_a_is_harmonic_mean() {
    let model = models::harmonic_mean_1d();
    let mut params = OccupationParams::new(41);
    params.n_paths = 300;
    params.h = 4e-4;
    let f = |x: &homog_core::Point| a_two_plus_sin(x[0]);
    let est = ergodic_average(&model, f, 0.0, 150.0, &params).unwrap();
    let expected = 3.0f64.sqrt();
    assert!(
        (est.value - expected).abs() <= 3.0 * est.se + 5e-3,
        "ergodic mean {} ± {} vs sqrt(3) = {expected}",
        est.value,
        est.se
    );
}

#[test]
fn mixing_rate_matches_slowest_heat_mode() {
    // a = 2 constant: E cos(2πX_t) decays at (a/2)(2π)^2 = 4π².
    let model = PeriodicModel::scalar_1d(
        ScalarCoeff::constant(2.0f64.sqrt()),
        ScalarCoeff::zero(),
        ScalarCoeff::zero(),
    );
    let mut params = MixingParams::new(5);
    params.n_paths = 6000;
    params.h = 2e-4;
    params.t_fit = 0.1;
    params.x0 = [0.0; 3];
    let probe = |x: &homog_core::Point| (2.0 * std::f64::consts::PI * x[0]).cos();
    let est = estimate_mixing(&model, probe, &params).unwrap();
    let expected = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    assert!(est.accepted, "fit rejected: {est:?}");
    assert!(
        (est.rho - expected).abs() < 0.15 * expected,
        "rho {} vs 4π² = {expected}",
        est.rho
    );
    assert!(est.rho > 0.0);
}

#[test]
fn corrector_grid_converges_at_second_order() {
    let model = models::centered_drift_1d();
    let oracle = drift_oracle();
    let mut errs = Vec::new();
    for n in [64usize, 128, 256] {
        let mu = estimate_invariant_measure(
            &model,
            0.0,
            MeasureBackend::StationaryGrid,
            n,
            &OccupationParams::new(0),
        )
        .unwrap();
        let field = solve_cell_problem(
            &model,
            &mu,
            CorrectorBackend::Grid,
            None,
            &CorrectorParams::new(0),
        )
        .unwrap();
        let mut err = 0.0f64;
        for cell in 0..n {
            let x = field.grid.center(cell)[0];
            err = err.max((field.bhat[cell][0] - oracle.bhat(x)).abs());
        }
        errs.push(err);
    }
    let order1 = (errs[0] / errs[1]).log2();
    let order2 = (errs[1] / errs[2]).log2();
    assert!(
        order1 >= 1.8 && order2 >= 1.8,
        "orders {order1:.2}, {order2:.2}; errors {errs:?}"
    );
}

#[test]
fn corrector_residual_is_roundoff_at_n512() {
    let model = models::centered_drift_1d();
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        512,
        &OccupationParams::new(0),
    )
    .unwrap();
    let field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    assert!(
        field.residual_norm <= 1e-6,
        "residual {}",
        field.residual_norm
    );
}

#[test]
fn feynman_kac_corrector_agrees_with_grid() {
    let model = models::centered_drift_1d();
    let n = 16;
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        n,
        &OccupationParams::new(0),
    )
    .unwrap();
    let grid_field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    let mixing = estimate_mixing(
        &model,
        |x: &homog_core::Point| (2.0 * std::f64::consts::PI * x[0]).cos(),
        &MixingParams::new(17),
    )
    .unwrap();
    assert!(mixing.accepted);
    let mut params = CorrectorParams::new(19);
    params.n_paths = 600;
    params.h = 4e-4;
    let fk = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::FeynmanKac,
        Some(&mixing),
        &params,
    )
    .unwrap();
    let se = fk.se.as_ref().unwrap();
    let mut misses = 0;
    for cell in 0..n {
        let diff = (fk.bhat[cell][0] - grid_field.bhat[cell][0]).abs();
        // grid truncation error at this resolution enters the comparison
        let tol = 3.0 * se[cell][0] + 2e-3;
        if diff > tol {
            misses += 1;
        }
    }
    assert!(misses == 0, "{misses} nodes disagree beyond 3 SE");
}

#[test]
fn effective_a_is_harmonic_mean_within_1pct() {
    let model = models::harmonic_mean_1d();
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        256,
        &OccupationParams::new(0),
    )
    .unwrap();
    let field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    let eff = effective_coefficients(&model, &mu, &field, &Driver::Zero, 1e-10).unwrap();
    let expected = 3.0f64.sqrt();
    assert!(
        (eff.a[0][0] - expected).abs() < 0.01 * expected,
        "A = {} vs sqrt(3)",
        eff.a[0][0]
    );
    assert!(eff.spd);
}

#[test]
fn effective_c_matches_quadrature() {
    let (model, problem) = models::oscillating_semilinear_1d();
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        256,
        &OccupationParams::new(0),
    )
    .unwrap();
    let field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    let eff =
        effective_coefficients(&model, &mu, &field, &problem.driver, 1e-10).unwrap();
    let oracle = drift_oracle();
    let c_fn = |x: f64| 0.2 + 0.2 * (2.0 * std::f64::consts::PI * x).cos();
    let expected_c = oracle.c_eff(&c_fn);
    let expected_a = oracle.a_eff();
    assert!(
        (eff.a[0][0] - expected_a).abs() < 5e-4,
        "A = {} vs {expected_a}",
        eff.a[0][0]
    );
    assert!(
        (eff.c[0] - expected_c).abs() < 5e-4,
        "C = {} vs {expected_c}",
        eff.c[0]
    );
}

#[test]
fn effective_a_scales_with_kappa_squared() {
    // replacing sigma by kappa sigma scales A by kappa^2
    let base = |kappa: f64| {
        let sigma = ScalarCoeff::SqrtTrig(
            TrigPoly::single(2.0, [1, 0, 0], 0.0, 1.0).scaled(kappa * kappa),
        );
        let model = PeriodicModel::scalar_1d(sigma, ScalarCoeff::zero(), ScalarCoeff::zero());
        let mu = estimate_invariant_measure(
            &model,
            0.0,
            MeasureBackend::StationaryGrid,
            128,
            &OccupationParams::new(0),
        )
        .unwrap();
        let field = solve_cell_problem(
            &model,
            &mu,
            CorrectorBackend::Grid,
            None,
            &CorrectorParams::new(0),
        )
        .unwrap();
        effective_coefficients(&model, &mu, &field, &Driver::Zero, 1e-10)
            .unwrap()
            .a[0][0]
    };
    let a1 = base(1.0);
    for kappa in [2.0f64, 0.5] {
        let ak = base(kappa);
        assert!(
            (ak - kappa * kappa * a1).abs() < 1e-8 * kappa * kappa,
            "kappa {kappa}: {ak} vs {}",
            kappa * kappa * a1
        );
    }
}

#[test]
fn fbar_of_z_linear_driver_is_lambda_mean() {
    let model = models::harmonic_mean_1d();
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        256,
        &OccupationParams::new(0),
    )
    .unwrap();
    let field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    let driver = Driver::FastModulated {
        source: TrigPoly::constant(0.0),
        kappa: 0.0,
        zeta: vec![1.0],
    };
    let eff = effective_coefficients(&model, &mu, &field, &driver, 1e-10).unwrap();
    let oracle = harmonic_oracle();
    let expected = oracle.lambda_mean();
    let got = eff.evaluate_fbar(&[0.0; 3], 0.0, &[1.0, 0.0, 0.0]);
    assert!(
        (got - expected).abs() < 1e-3,
        "fbar(z=1) = {got} vs ∫Λdμ = {expected}"
    );
    // and z = 0 kills the dependence entirely
    assert_eq!(eff.evaluate_fbar(&[0.0; 3], 0.4, &[0.0; 3]), 0.0);
}

#[test]
fn degenerate_model_pipeline_is_solvable() {
    let model = models::degenerate_1d();
    let n = 128;
    let mu = estimate_invariant_measure(
        &model,
        0.0,
        MeasureBackend::StationaryGrid,
        n,
        &OccupationParams::new(0),
    )
    .unwrap();
    // measure positive on at least 95% of cells, zero only on the dead zone
    let positive = mu.weights.iter().filter(|w| **w > 0.0).count();
    assert!(
        positive as f64 >= 0.95 * n as f64,
        "only {positive}/{n} cells carry mass"
    );
    // drift centered by symmetry
    let resid = mu.centering_residual(&model)[0];
    assert!(resid < 1e-10, "centering residual {resid}");
    let field = solve_cell_problem(
        &model,
        &mu,
        CorrectorBackend::Grid,
        None,
        &CorrectorParams::new(0),
    )
    .unwrap();
    let eff = effective_coefficients(&model, &mu, &field, &Driver::Zero, 1e-10).unwrap();
    assert!(
        eff.a[0][0] > 0.0,
        "degenerate effective diffusion A = {}",
        eff.a[0][0]
    );
}
