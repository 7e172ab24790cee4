//! Invariant measure estimation on the torus, ergodic averages, and the
//! empirical mixing (spectral gap) rate.
//!
//! Two backends approximate the invariant measure: a long-run occupation
//! histogram of the simulated fast process, and the kernel of the adjoint of
//! the discrete generator (the stationary vector of the finite-volume Markov
//! chain). They carry different error sources — Monte Carlo noise plus
//! Euler bias versus pure discretization error — so their agreement is a
//! meaningful cross-check and is part of the acceptance suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{PeriodicModel, Point};
use crate::dynamics::walk_fast;
use crate::error::{Error, Result};
use crate::generator::{assemble_generator, stationary_vector, TorusGrid};
use crate::rng::stream_rng;
use crate::stats::{linear_fit, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureBackend {
    OccupationMc,
    StationaryGrid,
}

/// Discrete approximation of the invariant measure on a torus grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub grid: TorusGrid,
    /// Nonnegative cell masses summing to one.
    pub weights: Vec<f64>,
    pub backend: MeasureBackend,
    /// Per-cell standard error (occupation backend only).
    pub se: Option<Vec<f64>>,
}

impl MeasureEstimate {
    /// Integral of a grid function against the measure.
    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * f(&self.grid.center(i)))
            .sum()
    }

    /// Per-component centering residual |∫ b_i dμ| of the model drift.
    pub fn centering_residual(&self, model: &PeriodicModel) -> Vec<f64> {
        (0..model.dim())
            .map(|i| self.integrate(|x| model.eval(x).b[i]).abs())
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Parameters for the occupation-histogram backend and other path averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationParams {
    pub n_paths: usize,
    pub t_burn: f64,
    pub t_avg: f64,
    pub h: f64,
    pub seed: u64,
    /// Common starting point of the paths.
    pub x0: Point,
}

impl OccupationParams {
    pub fn new(seed: u64) -> Self {
        Self {
            n_paths: 1000,
            t_burn: 2.0,
            t_avg: 50.0,
            h: 1e-3,
            seed,
            x0: [0.0; 3],
        }
    }
}

const CHUNK: usize = 128;

/// Estimates the invariant measure of the fast process (drift b + eps c).
///
/// The stationary-grid backend solves the adjoint problem Q^T m = 0 with
/// sum(m) = 1 on the finite-volume discretization of the generator and is
/// restricted to d <= 2; the occupation backend averages path histograms over
/// [t_burn, t_burn + t_avg] and works in any supported dimension.
pub fn estimate_invariant_measure(
    model: &PeriodicModel,
    eps: f64,
    backend: MeasureBackend,
    grid_n: usize,
    params: &OccupationParams,
) -> Result<MeasureEstimate> {
    match backend {
        MeasureBackend::OccupationMc => occupation_measure(model, eps, grid_n, params),
        MeasureBackend::StationaryGrid => stationary_measure(model, eps, grid_n),
    }
}

fn occupation_measure(
    model: &PeriodicModel,
    eps: f64,
    grid_n: usize,
    params: &OccupationParams,
) -> Result<MeasureEstimate> {
    if !(params.h > 0.0) {
        return Err(Error::StepInvalid("occupation h must be positive".into()));
    }
    let grid = TorusGrid::new(model.dim(), grid_n);
    let n_cells = grid.n_cells();
    let burn_steps = (params.t_burn / params.h).round() as usize;
    let avg_steps = (params.t_avg / params.h).round() as usize;
    if avg_steps == 0 {
        return Err(Error::StepInvalid("t_avg shorter than one step".into()));
    }

    // One frequency histogram per path; chunked so the parallel reduction
    // stays deterministic (partial sums are combined in chunk order).
    let mut sum = vec![0.0f64; n_cells];
    let mut sumsq = vec![0.0f64; n_cells];
    let indices: Vec<u64> = (0..params.n_paths as u64).collect();
    for chunk in indices.chunks(CHUNK) {
        let partials: Vec<(Vec<f64>, Vec<f64>)> = chunk
            .par_iter()
            .map(|&path_idx| {
                let mut rng = stream_rng(params.seed, path_idx);
                let mut counts = vec![0u32; n_cells];
                walk_fast(
                    model,
                    &params.x0,
                    eps,
                    params.h,
                    burn_steps + avg_steps,
                    &mut rng,
                    |t, x| {
                        if t > params.t_burn {
                            counts[grid.cell_of(x)] += 1;
                        }
                    },
                );
                let total: u32 = counts.iter().sum();
                let mut s = vec![0.0; n_cells];
                let mut s2 = vec![0.0; n_cells];
                for (i, c) in counts.iter().enumerate() {
                    let f = *c as f64 / total as f64;
                    s[i] = f;
                    s2[i] = f * f;
                }
                (s, s2)
            })
            .collect();
        for (s, s2) in partials {
            for i in 0..n_cells {
                sum[i] += s[i];
                sumsq[i] += s2[i];
            }
        }
    }

    let p = params.n_paths as f64;
    let mut weights: Vec<f64> = sum.iter().map(|s| s / p).collect();
    let se: Vec<f64> = (0..n_cells)
        .map(|i| {
            if params.n_paths < 2 {
                return 0.0;
            }
            let var = (sumsq[i] - sum[i] * sum[i] / p).max(0.0) / (p - 1.0);
            (var / p).sqrt()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(MeasureEstimate {
        grid,
        weights,
        backend: MeasureBackend::OccupationMc,
        se: Some(se),
    })
}

fn stationary_measure(model: &PeriodicModel, eps: f64, grid_n: usize) -> Result<MeasureEstimate> {
    if model.dim() > 2 {
        return Err(Error::Config(
            "stationary-grid backend supports d <= 2 only".into(),
        ));
    }
    let grid = TorusGrid::new(model.dim(), grid_n);
    let q = assemble_generator(model, eps, &grid);
    let m = stationary_vector(&q)?;
    Ok(MeasureEstimate {
        grid,
        weights: m.iter().copied().collect(),
        backend: MeasureBackend::StationaryGrid,
        se: None,
    })
}

/// Path-average (1/t) ∫_0^t f(X_s) ds over independent fast paths, with the
/// standard error across paths. For small eps and large t this approximates
/// the μ-average of f; the O(1/t) initialization bias is not subtracted.
pub fn ergodic_average<F>(
    model: &PeriodicModel,
    f: F,
    eps: f64,
    t: f64,
    params: &OccupationParams,
) -> Result<McEstimate>
where
    F: Fn(&Point) -> f64 + Sync,
{
    if !(params.h > 0.0) || t < params.h {
        return Err(Error::StepInvalid("need t >= h > 0".into()));
    }
    let steps = (t / params.h).round() as usize;
    let indices: Vec<u64> = (0..params.n_paths as u64).collect();
    let mut values = Vec::with_capacity(params.n_paths);
    for chunk in indices.chunks(CHUNK) {
        let mut part: Vec<f64> = chunk
            .par_iter()
            .map(|&path_idx| {
                let mut rng = stream_rng(params.seed, path_idx);
                let mut acc = 0.0;
                walk_fast(model, &params.x0, eps, params.h, steps, &mut rng, |t_k, x| {
                    if t_k > 0.0 {
                        acc += f(x) * params.h;
                    }
                });
                acc / (steps as f64 * params.h)
            })
            .collect();
        values.append(&mut part);
    }
    let (value, se) = crate::stats::mean_se(&values);
    Ok(McEstimate {
        value,
        se,
        n_paths: params.n_paths,
        seed: params.seed,
        h: params.h,
        t_max: t,
        censored: 0,
    })
}

/// Empirical mixing rate: decay exponent of |E probe(X_t) - mu(probe)|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    /// Decay exponent of the fitted C e^{-rho t}.
    pub rho: f64,
    pub c_pref: f64,
    pub r_squared: f64,
    /// False when the log-linear fit is rejected (R^2 < 0.9 or too few
    /// resolvable points); rho is then indicative only.
    pub accepted: bool,
    pub n_points: usize,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    pub n_paths: usize,
    pub h: f64,
    /// Length of the observed decay window.
    pub t_fit: f64,
    pub n_snapshots: usize,
    pub seed: u64,
    pub x0: Point,
    /// mu(probe); the probe is expected to be centered, pass 0 by default.
    pub probe_mean: f64,
}

impl MixingParams {
    pub fn new(seed: u64) -> Self {
        Self {
            n_paths: 4000,
            h: 2e-4,
            t_fit: 0.12,
            n_snapshots: 40,
            seed,
            x0: [0.0; 3],
            probe_mean: 0.0,
        }
    }
}

/// Fits log |ensemble mean of probe(X_t) - probe_mean| against t by least
/// squares over the snapshots that stand above the Monte Carlo noise floor.
pub fn estimate_mixing<F>(
    model: &PeriodicModel,
    probe: F,
    params: &MixingParams,
) -> Result<MixingEstimate>
where
    F: Fn(&Point) -> f64 + Sync,
{
    if !(params.h > 0.0) {
        return Err(Error::StepInvalid("mixing h must be positive".into()));
    }
    let snap_every = ((params.t_fit / params.h) / params.n_snapshots as f64)
        .round()
        .max(1.0) as usize;
    let n_steps = snap_every * params.n_snapshots;
    let n_snaps = params.n_snapshots + 1;

    let indices: Vec<u64> = (0..params.n_paths as u64).collect();
    let mut sum = vec![0.0f64; n_snaps];
    let mut sumsq = vec![0.0f64; n_snaps];
    for chunk in indices.chunks(CHUNK) {
        let partials: Vec<Vec<f64>> = chunk
            .par_iter()
            .map(|&path_idx| {
                let mut rng = stream_rng(params.seed, path_idx);
                let mut snaps = vec![0.0; n_snaps];
                let mut k = 0usize;
                walk_fast(model, &params.x0, 0.0, params.h, n_steps, &mut rng, |_, x| {
                    if k % snap_every == 0 {
                        snaps[k / snap_every] = probe(x);
                    }
                    k += 1;
                });
                snaps
            })
            .collect();
        for snaps in partials {
            for i in 0..n_snaps {
                sum[i] += snaps[i];
                sumsq[i] += snaps[i] * snaps[i];
            }
        }
    }

    let p = params.n_paths as f64;
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut t_last: f64 = 0.0;
    for i in 0..n_snaps {
        let mean = sum[i] / p - params.probe_mean;
        let var = (sumsq[i] - sum[i] * sum[i] / p).max(0.0) / (p - 1.0).max(1.0);
        let se = (var / p).sqrt();
        let t = (i * snap_every) as f64 * params.h;
        // keep snapshots whose signal stands clear of the noise floor
        if mean.abs() > 5.0 * se && mean.abs() > 1e-12 {
            ts.push(t);
            logs.push(mean.abs().ln());
            t_last = t;
        }
    }

    if ts.len() < 5 {
        return Ok(MixingEstimate {
            rho: f64::NAN,
            c_pref: f64::NAN,
            r_squared: 0.0,
            accepted: false,
            n_points: ts.len(),
            window: (0.0, t_last),
        });
    }
    let (intercept, slope, r2) = linear_fit(&ts, &logs);
    let rho = -slope;
    Ok(MixingEstimate {
        rho,
        c_pref: intercept.exp(),
        r_squared: r2,
        accepted: r2 >= 0.9 && rho > 0.0,
        n_points: ts.len(),
        window: (ts[0], t_last),
    })
}
