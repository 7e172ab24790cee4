//! Euler-Maruyama path simulation: the fast torus process, the slow
//! multiscale process with first-exit detection, the corrected process, and
//! the constant-coefficient limit diffusion.
//!
//! Every path is a pure function of (model, params, stream): noise comes from
//! a counter-based substream keyed by (seed, stream_index), so disjoint
//! streams can run concurrently and reproduce bit-identically in any order.
//! Each path actually consumes two ChaCha streams, 2k for the Gaussian
//! increments and 2k+1 for auxiliary draws (Brownian-bridge exit tests), so
//! switching the exit rule never desynchronizes the driving noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coeffs::{wrap_torus, MatValue, PeriodicModel, Point, VecValue, MAX_DIM};
use crate::corrector::CorrectorField;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// How the first exit from G is detected along a discrete path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitRule {
    /// Exit at the first step whose endpoint leaves the closed domain; the
    /// crossing time/state is linearly interpolated along the step.
    GridCrossing,
    /// Grid crossing plus a half-space Brownian-bridge test per rectangle
    /// face, which catches within-step excursions and removes most of the
    /// O(sqrt(h)) exit-time bias. Falls back to grid crossing on balls.
    BrownianBridge,
}

/// Time-stepping parameters shared by all simulators.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SchemeParams {
    /// Base time step. The slow multiscale process steps with h * eps^2 so
    /// the per-step drift displacement stays O(h) on the torus scale.
    pub h: f64,
    /// Horizon cap; paths that reach it without exiting are censored.
    pub t_max: f64,
    pub exit_rule: ExitRule,
    pub seed: u64,
    /// Path counter for substream derivation.
    pub stream_index: u64,
}

impl SchemeParams {
    pub fn new(h: f64, t_max: f64, seed: u64) -> Self {
        Self {
            h,
            t_max,
            exit_rule: ExitRule::GridCrossing,
            seed,
            stream_index: 0,
        }
    }

    pub fn with_stream(mut self, stream_index: u64) -> Self {
        self.stream_index = stream_index;
        self
    }

    pub fn with_exit_rule(mut self, rule: ExitRule) -> Self {
        self.exit_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::StepInvalid(format!("h = {} must be positive", self.h)));
        }
        if self.t_max < self.h {
            return Err(Error::StepInvalid(format!(
                "t_max = {} smaller than one step h = {}",
                self.t_max, self.h
            )));
        }
        Ok(())
    }

    pub(crate) fn rngs(&self) -> (ChaCha8Rng, ChaCha8Rng) {
        (
            stream_rng(self.seed, 2 * self.stream_index),
            stream_rng(self.seed, 2 * self.stream_index + 1),
        )
    }
}

/// A simulated path on a uniform time grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub exited: bool,
    /// Defined iff exited.
    pub exit_time: Option<f64>,
    /// On the boundary of G (within projection tolerance), iff exited.
    pub exit_state: Option<Point>,
    /// Horizon cap reached without exit.
    pub censored: bool,
    /// (seed, stream_index) that generated the path.
    pub seed_stream: (u64, u64),
}

/// Forward dynamics driving exit-time functionals: either the slow
/// multiscale process or the constant-coefficient limit diffusion.
#[derive(Clone)]
pub enum ForwardDynamics<'a> {
    Multiscale {
        model: &'a PeriodicModel,
        eps: f64,
    },
    Limit {
        d: usize,
        drift: VecValue,
        sqrt_a: MatValue,
        /// Diagonal of A, used by the bridge exit rule.
        a_diag: VecValue,
    },
}

impl<'a> ForwardDynamics<'a> {
    pub fn multiscale(model: &'a PeriodicModel, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::StepInvalid(format!("eps = {eps} must be positive")));
        }
        Ok(ForwardDynamics::Multiscale { model, eps })
    }

    /// Constant-coefficient diffusion x + C t + A^{1/2} B_t. `sqrt_a` must be
    /// the symmetric square root of the (clamped) PSD matrix A.
    pub fn limit(d: usize, drift: VecValue, sqrt_a: MatValue) -> Self {
        let mut a_diag = [0.0; MAX_DIM];
        for i in 0..d {
            for k in 0..d {
                a_diag[i] += sqrt_a[i][k] * sqrt_a[i][k];
            }
        }
        ForwardDynamics::Limit {
            d,
            drift,
            sqrt_a,
            a_diag,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ForwardDynamics::Multiscale { model, .. } => model.dim(),
            ForwardDynamics::Limit { d, .. } => *d,
        }
    }

    /// Effective time step for a base step h.
    pub fn effective_step(&self, h: f64) -> f64 {
        match self {
            ForwardDynamics::Multiscale { eps, .. } => h * eps * eps,
            ForwardDynamics::Limit { .. } => h,
        }
    }

    /// The diffusion factor entering the driver's z argument at x: sigma(x/eps)
    /// for the multiscale process, identity for the limit (the averaged driver
    /// applies its own cell factor).
    pub fn z_sigma(&self, x: &Point) -> MatValue {
        match self {
            ForwardDynamics::Multiscale { model, eps } => {
                let y = scale_point(x, 1.0 / *eps, model.dim());
                model.eval(&y).sigma
            }
            ForwardDynamics::Limit { d, .. } => {
                let mut m = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..*d {
                    m[i][i] = 1.0;
                }
                m
            }
        }
    }

    /// Torus position x/eps (wrapped) for the multiscale process; None for
    /// the limit, whose driver has already been averaged.
    pub fn fast_position(&self, x: &Point) -> Option<Point> {
        match self {
            ForwardDynamics::Multiscale { model, eps } => {
                let y = scale_point(x, 1.0 / *eps, model.dim());
                Some(wrap_torus(&y, model.dim()))
            }
            ForwardDynamics::Limit { .. } => None,
        }
    }

    fn drift_sigma_adiag(&self, x: &Point) -> (VecValue, MatValue, VecValue) {
        match self {
            ForwardDynamics::Multiscale { model, eps } => {
                let d = model.dim();
                let y = scale_point(x, 1.0 / *eps, d);
                let v = model.eval(&y);
                let mut drift = [0.0; MAX_DIM];
                for i in 0..d {
                    drift[i] = v.b[i] / eps + v.c[i];
                }
                let mut a_diag = [0.0; MAX_DIM];
                for i in 0..d {
                    a_diag[i] = v.a[i][i];
                }
                (drift, v.sigma, a_diag)
            }
            ForwardDynamics::Limit {
                drift,
                sqrt_a,
                a_diag,
                ..
            } => (*drift, *sqrt_a, *a_diag),
        }
    }
}

fn scale_point(x: &Point, factor: f64, d: usize) -> Point {
    let mut y = [0.0; MAX_DIM];
    for i in 0..d {
        y[i] = x[i] * factor;
    }
    y
}

fn gaussian_step(rng: &mut ChaCha8Rng, d: usize) -> Point {
    let mut xi = [0.0; MAX_DIM];
    for v in xi.iter_mut().take(d) {
        *v = rng.sample(StandardNormal);
    }
    xi
}

/// Exit summary of a single walked path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExitInfo {
    pub exited: bool,
    /// Exit time if exited, otherwise the horizon.
    pub tau: f64,
    pub exit_state: Point,
}

/// Walks the dynamics until exit or horizon without storing states. The
/// visitor sees (state, t, dt) for every step segment, with the state at the
/// segment's left endpoint and dt the time actually advanced (a partial step
/// on exit), which is exactly what left-endpoint path integrals need.
/// `flip` negates the Gaussian draws (antithetic pairing).
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk_exit<F: FnMut(&Point, f64, f64)>(
    dynamics: &ForwardDynamics,
    domain: &Domain,
    x0: &Point,
    h: f64,
    t_max: f64,
    rule: ExitRule,
    rng: &mut ChaCha8Rng,
    aux: &mut ChaCha8Rng,
    flip: bool,
    mut visit: F,
) -> ExitInfo {
    let n_max = (t_max / h).ceil() as usize;
    let mut x = *x0;
    for k in 0..n_max {
        let t = k as f64 * h;
        match exit_step_inner(dynamics, domain, &x, h, rule, rng, aux, flip) {
            StepOutcome::Inside(next) => {
                visit(&x, t, h);
                x = next;
            }
            StepOutcome::Exited { time_frac, state } => {
                visit(&x, t, time_frac * h);
                return ExitInfo {
                    exited: true,
                    tau: t + time_frac * h,
                    exit_state: state,
                };
            }
        }
    }
    ExitInfo {
        exited: false,
        tau: t_max,
        exit_state: x,
    }
}

fn apply_step(
    x: &Point,
    drift: &VecValue,
    sigma: &MatValue,
    xi: &Point,
    h: f64,
    d: usize,
) -> Point {
    let sqrt_h = h.sqrt();
    let mut y = *x;
    for i in 0..d {
        let mut noise = 0.0;
        for j in 0..d {
            noise += sigma[i][j] * xi[j];
        }
        y[i] += drift[i] * h + sqrt_h * noise;
    }
    y
}

/// Simulates the fast torus process d x = (b + eps c) dt + sigma dB, states
/// wrapped into [0,1)^d. Never exits.
pub fn simulate_fast_path(
    model: &PeriodicModel,
    x0: &Point,
    eps: f64,
    params: &SchemeParams,
) -> Result<PathSample> {
    params.validate()?;
    if eps < 0.0 {
        return Err(Error::StepInvalid(format!("eps = {eps} must be >= 0")));
    }
    let d = model.dim();
    let n_steps = (params.t_max / params.h).round() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let (mut rng, _aux) = params.rngs();

    let mut x = wrap_torus(x0, d);
    times.push(0.0);
    states.push(x);
    for k in 0..n_steps {
        let v = model.eval(&x);
        let mut drift = [0.0; MAX_DIM];
        for i in 0..d {
            drift[i] = v.b[i] + eps * v.c[i];
        }
        let xi = gaussian_step(&mut rng, d);
        x = wrap_torus(&apply_step(&x, &drift, &v.sigma, &xi, params.h, d), d);
        times.push((k + 1) as f64 * params.h);
        states.push(x);
    }
    Ok(PathSample {
        times,
        states,
        exited: false,
        exit_time: None,
        exit_state: None,
        censored: false,
        seed_stream: (params.seed, params.stream_index),
    })
}

/// Streaming variant of the fast simulation: calls `visit(t, x)` at t = 0 and
/// after every step, without storing the path.
pub(crate) fn walk_fast<F: FnMut(f64, &Point)>(
    model: &PeriodicModel,
    x0: &Point,
    eps: f64,
    h: f64,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
    mut visit: F,
) {
    let d = model.dim();
    let mut x = wrap_torus(x0, d);
    visit(0.0, &x);
    for k in 0..n_steps {
        let v = model.eval(&x);
        let mut drift = [0.0; MAX_DIM];
        for i in 0..d {
            drift[i] = v.b[i] + eps * v.c[i];
        }
        let xi = gaussian_step(rng, d);
        x = wrap_torus(&apply_step(&x, &drift, &v.sigma, &xi, h, d), d);
        visit((k + 1) as f64 * h, &x);
    }
}

/// Outcome of one exit-detected step.
pub(crate) enum StepOutcome {
    Inside(Point),
    Exited { time_frac: f64, state: Point },
}

/// Advances one Euler step from x (inside G) and applies the exit rule.
/// `time_frac` locates the exit within the step.
pub(crate) fn exit_step(
    dynamics: &ForwardDynamics,
    domain: &Domain,
    x: &Point,
    h: f64,
    rule: ExitRule,
    rng: &mut ChaCha8Rng,
    aux: &mut ChaCha8Rng,
) -> StepOutcome {
    exit_step_inner(dynamics, domain, x, h, rule, rng, aux, false)
}

#[allow(clippy::too_many_arguments)]
fn exit_step_inner(
    dynamics: &ForwardDynamics,
    domain: &Domain,
    x: &Point,
    h: f64,
    rule: ExitRule,
    rng: &mut ChaCha8Rng,
    aux: &mut ChaCha8Rng,
    flip: bool,
) -> StepOutcome {
    let d = dynamics.dim();
    let (drift, sigma, a_diag) = dynamics.drift_sigma_adiag(x);
    let mut xi = gaussian_step(rng, d);
    if flip {
        for v in xi.iter_mut().take(d) {
            *v = -*v;
        }
    }
    let x_next = apply_step(x, &drift, &sigma, &xi, h, d);

    if !domain.contains(&x_next) {
        let (s, p) = domain.crossing(x, &x_next);
        return StepOutcome::Exited {
            time_frac: s,
            state: p,
        };
    }

    if rule == ExitRule::BrownianBridge {
        if let Some(faces) = domain.rect_face_distances(x) {
            let next_faces = domain.rect_face_distances(&x_next).unwrap();
            // Half-space bridge: crossing prob exp(-2 d0 d1 / (a_nn h)) per face.
            let mut best: Option<(f64, usize, bool)> = None; // (prob, axis, hi-face)
            for ((axis, d0_lo, d0_hi), (_, d1_lo, d1_hi)) in faces.iter().zip(next_faces.iter()) {
                let var = a_diag[*axis] * h;
                if var <= 0.0 {
                    continue;
                }
                for (d0, d1, hi) in [(d0_lo, d1_lo, false), (d0_hi, d1_hi, true)] {
                    let expo = -2.0 * d0 * d1 / var;
                    if expo > -30.0 {
                        let p = expo.exp();
                        if aux.gen::<f64>() < p && best.map(|(bp, _, _)| p > bp).unwrap_or(true) {
                            best = Some((p, *axis, hi));
                        }
                    }
                }
            }
            if let Some((_, axis, hi)) = best {
                // Exit mid-step: tangential coordinates at the midpoint, the
                // normal coordinate pinned to the face.
                let mut p = [0.0; MAX_DIM];
                for i in 0..d {
                    p[i] = 0.5 * (x[i] + x_next[i]);
                }
                if let Domain::Rect { lo, hi: hivec } = domain {
                    p[axis] = if hi { hivec[axis] } else { lo[axis] };
                }
                return StepOutcome::Exited {
                    time_frac: 0.5,
                    state: p,
                };
            }
        }
    }

    StepOutcome::Inside(x_next)
}

/// Simulates the slow multiscale process until its first exit from G, with
/// coefficients evaluated at x/eps. The effective step is params.h * eps^2.
pub fn simulate_slow_path(
    model: &PeriodicModel,
    x0: &Point,
    eps: f64,
    domain: &Domain,
    params: &SchemeParams,
) -> Result<PathSample> {
    let dynamics = ForwardDynamics::multiscale(model, eps)?;
    simulate_exit_path(&dynamics, x0, domain, params)
}

/// Simulates an exit path of either forward dynamics, recording every state.
pub fn simulate_exit_path(
    dynamics: &ForwardDynamics,
    x0: &Point,
    domain: &Domain,
    params: &SchemeParams,
) -> Result<PathSample> {
    params.validate()?;
    if !domain.contains(x0) {
        return Err(Error::DomainInvalid(format!(
            "x0 = {:?} not in the open domain",
            &x0[..dynamics.dim()]
        )));
    }
    let h = dynamics.effective_step(params.h);
    let n_max = (params.t_max / h).ceil() as usize;
    let (mut rng, mut aux) = params.rngs();

    let mut times = vec![0.0];
    let mut states = vec![*x0];
    let mut x = *x0;
    let mut exited = false;
    let mut exit_time = None;
    let mut exit_state = None;
    for k in 0..n_max {
        let t = k as f64 * h;
        match exit_step(dynamics, domain, &x, h, params.exit_rule, &mut rng, &mut aux) {
            StepOutcome::Inside(next) => {
                x = next;
                times.push(t + h);
                states.push(x);
            }
            StepOutcome::Exited { time_frac, state } => {
                exited = true;
                exit_time = Some(t + time_frac * h);
                exit_state = Some(state);
                times.push(t + time_frac * h);
                states.push(state);
                break;
            }
        }
    }
    Ok(PathSample {
        times,
        states,
        exited,
        exit_time,
        exit_state,
        censored: !exited,
        seed_stream: (params.seed, params.stream_index),
    })
}

/// Simulates the limit diffusion x + C t + A^{1/2} B_t with exit detection.
/// Eigenvalues of `a` in [-spd_tol, 0) are clamped to zero before the square
/// root; anything lower is NOT_SPD.
pub fn simulate_limit_path(
    a: &MatValue,
    c: &VecValue,
    d: usize,
    x0: &Point,
    domain: &Domain,
    params: &SchemeParams,
    spd_tol: f64,
) -> Result<PathSample> {
    let sqrt_a = sym_sqrt(a, d, spd_tol)?;
    let dynamics = ForwardDynamics::limit(d, *c, sqrt_a);
    simulate_exit_path(&dynamics, x0, domain, params)
}

/// Symmetric square root by eigendecomposition (the input is symmetrized
/// first), with eigenvalue clamping as in [`simulate_limit_path`].
pub fn sym_sqrt(a: &MatValue, d: usize, spd_tol: f64) -> Result<MatValue> {
    let mut m = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    let eig = m.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -spd_tol {
        return Err(Error::NotSpd { min_eig });
    }
    let mut sqrt_vals = eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    let s = &eig.eigenvectors
        * nalgebra::DMatrix::from_diagonal(&sqrt_vals)
        * eig.eigenvectors.transpose();
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = s[(i, j)];
        }
    }
    Ok(out)
}

/// Applies the corrector transform X_hat = X + eps (bhat(X/eps) - bhat(x0/eps))
/// pointwise to a slow path.
pub fn corrected_path(
    model: &PeriodicModel,
    slow_path: &PathSample,
    corrector: &CorrectorField,
    eps: f64,
) -> PathSample {
    let d = model.dim();
    let x0 = &slow_path.states[0];
    let bhat0 = corrector.bhat_at(&scale_point(x0, 1.0 / eps, d));
    let transform = |x: &Point| -> Point {
        let bhat = corrector.bhat_at(&scale_point(x, 1.0 / eps, d));
        let mut y = *x;
        for i in 0..d {
            y[i] += eps * (bhat[i] - bhat0[i]);
        }
        y
    };
    let states: Vec<Point> = slow_path.states.iter().map(|x| transform(x)).collect();
    PathSample {
        times: slow_path.times.clone(),
        states,
        exited: slow_path.exited,
        exit_time: slow_path.exit_time,
        exit_state: slow_path.exit_state.as_ref().map(|x| transform(x)),
        censored: slow_path.censored,
        seed_stream: slow_path.seed_stream,
    }
}

/// Writes paths as CSV rows (stream, k, t, x_1..x_d, exited_flag).
pub fn paths_to_csv(paths: &[PathSample], d: usize) -> String {
    let mut out = String::from("stream,k,t");
    for i in 1..=d {
        out.push_str(&format!(",x_{i}"));
    }
    out.push_str(",exited_flag\n");
    for p in paths {
        for (k, (t, x)) in p.times.iter().zip(p.states.iter()).enumerate() {
            let exited_here = p.exited && k + 1 == p.times.len();
            out.push_str(&format!("{},{},{}", p.seed_stream.1, k, t));
            for xi in x.iter().take(d) {
                out.push_str(&format!(",{xi}"));
            }
            out.push_str(&format!(",{}\n", u8::from(exited_here)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::ScalarCoeff;
    use approx::assert_abs_diff_eq;

    fn drift_only_model(rate: f64) -> PeriodicModel {
        PeriodicModel::scalar_1d(
            ScalarCoeff::zero(),
            ScalarCoeff::constant(rate),
            ScalarCoeff::zero(),
        )
    }

    #[test]
    fn deterministic_drift_advances_linearly() {
        let m = drift_only_model(1.0);
        let params = SchemeParams::new(0.1, 0.5, 1);
        let p = simulate_fast_path(&m, &[0.0; 3], 0.0, &params).unwrap();
        assert_eq!(p.states.len(), 6);
        assert_abs_diff_eq!(p.states[5][0], 0.5, epsilon = 1e-12);
        assert!(!p.exited);
    }

    #[test]
    fn pure_brownian_increments_match_raw_draws() {
        let m = PeriodicModel::isotropic_constant(1, 1.0);
        let params = SchemeParams::new(0.01, 0.05, 42).with_stream(3);
        let p = simulate_fast_path(&m, &[0.5, 0.0, 0.0], 0.0, &params).unwrap();
        let (mut rng, _) = params.rngs();
        let sqrt_h = params.h.sqrt();
        for k in 0..5 {
            let xi: f64 = rng.sample(StandardNormal);
            let mut inc = p.states[k + 1][0] - p.states[k][0];
            // undo torus wrap to the nearest representative
            if inc > 0.5 {
                inc -= 1.0;
            }
            if inc < -0.5 {
                inc += 1.0;
            }
            assert_abs_diff_eq!(inc, sqrt_h * xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn slow_path_rejects_outside_start() {
        let m = PeriodicModel::isotropic_constant(1, 1.0);
        let g = Domain::unit_interval();
        let params = SchemeParams::new(1e-3, 10.0, 0);
        let err = simulate_slow_path(&m, &[0.0, 0.0, 0.0], 0.5, &g, &params);
        assert!(matches!(err, Err(Error::DomainInvalid(_))));
        // boundary of a ball counts as outside the open domain
        let ball = Domain::Ball {
            center: vec![0.0],
            radius: 1.0,
        };
        let err = simulate_slow_path(&m, &[1.0, 0.0, 0.0], 0.5, &ball, &params);
        assert!(matches!(err, Err(Error::DomainInvalid(_))));
    }

    #[test]
    fn transport_exit_time_is_sharp() {
        // sigma = 0, b = 0, c = 1: pure transport at unit speed exits at 0.5.
        let m = PeriodicModel::scalar_1d(
            ScalarCoeff::zero(),
            ScalarCoeff::zero(),
            ScalarCoeff::constant(1.0),
        );
        let g = Domain::unit_interval();
        let params = SchemeParams::new(0.01, 10.0, 7);
        let p = simulate_slow_path(&m, &[0.5, 0.0, 0.0], 1.0, &g, &params).unwrap();
        assert!(p.exited);
        assert_abs_diff_eq!(p.exit_time.unwrap(), 0.5, epsilon = 0.011);
        assert_abs_diff_eq!(p.exit_state.unwrap()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn step_invalid_on_bad_h() {
        let m = drift_only_model(0.0);
        let params = SchemeParams::new(0.0, 1.0, 0);
        assert!(matches!(
            simulate_fast_path(&m, &[0.0; 3], 0.0, &params),
            Err(Error::StepInvalid(_))
        ));
    }

    #[test]
    fn identical_streams_reproduce_bit_identical_paths() {
        let m = PeriodicModel::isotropic_constant(2, 1.3);
        let params = SchemeParams::new(0.01, 1.0, 99).with_stream(17);
        let a = simulate_fast_path(&m, &[0.2, 0.7, 0.0], 0.1, &params).unwrap();
        let b = simulate_fast_path(&m, &[0.2, 0.7, 0.0], 0.1, &params).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn fast_states_stay_on_torus() {
        let m = PeriodicModel::scalar_1d(
            ScalarCoeff::constant(2.0),
            ScalarCoeff::constant(5.0),
            ScalarCoeff::zero(),
        );
        let params = SchemeParams::new(0.05, 5.0, 3);
        let p = simulate_fast_path(&m, &[0.9, 0.0, 0.0], 0.0, &params).unwrap();
        assert!(p.states.iter().all(|x| (0.0..1.0).contains(&x[0])));
    }

    #[test]
    fn bridge_exits_no_later_than_grid_crossing() {
        let m = PeriodicModel::isotropic_constant(1, 1.0);
        let g = Domain::unit_interval();
        for stream in 0..50 {
            let base = SchemeParams::new(0.02, 50.0, 5).with_stream(stream);
            let grid = simulate_slow_path(&m, &[0.3, 0.0, 0.0], 1.0, &g, &base).unwrap();
            let bridge = simulate_slow_path(
                &m,
                &[0.3, 0.0, 0.0],
                1.0,
                &g,
                &base.with_exit_rule(ExitRule::BrownianBridge),
            )
            .unwrap();
            assert!(grid.exited && bridge.exited);
            assert!(
                bridge.exit_time.unwrap() <= grid.exit_time.unwrap() + 1e-12,
                "stream {stream}: bridge {} > grid {}",
                bridge.exit_time.unwrap(),
                grid.exit_time.unwrap()
            );
        }
    }

    #[test]
    fn limit_path_requires_psd() {
        let a = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let err = simulate_limit_path(
            &a,
            &[0.0; 3],
            1,
            &[0.5, 0.0, 0.0],
            &Domain::unit_interval(),
            &SchemeParams::new(1e-3, 1.0, 0),
            1e-10,
        );
        assert!(matches!(err, Err(Error::NotSpd { .. })));
    }

    #[test]
    fn ballistic_limit_hits_boundary_along_drift() {
        let a = [[1e-12, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let c = [2.0, 0.0, 0.0];
        let p = simulate_limit_path(
            &a,
            &c,
            1,
            &[0.5, 0.0, 0.0],
            &Domain::unit_interval(),
            &SchemeParams::new(1e-3, 10.0, 11),
            1e-10,
        )
        .unwrap();
        assert!(p.exited);
        assert_abs_diff_eq!(p.exit_time.unwrap(), 0.25, epsilon = 5e-3);
        assert_abs_diff_eq!(p.exit_state.unwrap()[0], 1.0, epsilon = 1e-9);
    }
}
