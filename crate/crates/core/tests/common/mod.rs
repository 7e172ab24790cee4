//! Independent reference solutions used by the integration and acceptance
//! suites. Everything here is plain quadrature on fine 1D grids or closed
//! forms; none of it touches the generator assembly, the Monte Carlo
//! engines, or the finite-difference solver it is checking.

#![allow(dead_code)]

/// Quadrature oracle for 1D torus diffusions with strictly positive a.
///
/// With B(x) = ∫_0^x 2b/a, the flux-free stationary density is
/// m = e^B / (a Z), the corrector derivative is bhat' = -1 + K e^{-B} with
/// K = 1 / ∫ e^{-B}, and the effective diffusion reduces to A = K / Z.
pub struct Oracle1d {
    xs: Vec<f64>,
    a: Vec<f64>,
    m: Vec<f64>,
    bhat: Vec<f64>,
    bhat_prime: Vec<f64>,
    a_eff: f64,
}

impl Oracle1d {
    pub fn new(a_fn: &dyn Fn(f64) -> f64, b_fn: &dyn Fn(f64) -> f64, n: usize) -> Self {
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let a: Vec<f64> = xs.iter().map(|&x| a_fn(x)).collect();
        assert!(
            a.iter().all(|v| *v > 0.0),
            "oracle requires strictly positive a"
        );
        // B by cumulative trapezoid
        let integrand: Vec<f64> = xs.iter().map(|&x| 2.0 * b_fn(x) / a_fn(x)).collect();
        let mut b_big = vec![0.0; n + 1];
        for i in 1..=n {
            b_big[i] = b_big[i - 1] + 0.5 * (integrand[i] + integrand[i - 1]) / n as f64;
        }
        let e_b: Vec<f64> = b_big.iter().map(|v| v.exp()).collect();
        let e_mb: Vec<f64> = b_big.iter().map(|v| (-v).exp()).collect();
        let z = trapz(&xs, &e_b.iter().zip(a.iter()).map(|(e, a)| e / a).collect::<Vec<_>>());
        let k = 1.0 / trapz(&xs, &e_mb);
        let a_eff = k / z;
        let m: Vec<f64> = e_b.iter().zip(a.iter()).map(|(e, av)| e / (av * z)).collect();
        let bhat_prime: Vec<f64> = e_mb.iter().map(|e| -1.0 + k * e).collect();
        let mut bhat = vec![0.0; n + 1];
        for i in 1..=n {
            bhat[i] = bhat[i - 1] + 0.5 * (bhat_prime[i] + bhat_prime[i - 1]) / n as f64;
        }
        let mean = trapz(
            &xs,
            &bhat.iter().zip(m.iter()).map(|(b, m)| b * m).collect::<Vec<_>>(),
        );
        for v in bhat.iter_mut() {
            *v -= mean;
        }
        Self {
            xs,
            a,
            m,
            bhat,
            bhat_prime,
            a_eff,
        }
    }

    fn interp(&self, table: &[f64], x: f64) -> f64 {
        let n = self.xs.len() - 1;
        let w = x - x.floor();
        let u = w * n as f64;
        let i = (u.floor() as usize).min(n - 1);
        let frac = u - i as f64;
        table[i] * (1.0 - frac) + table[i + 1] * frac
    }

    pub fn density(&self, x: f64) -> f64 {
        self.interp(&self.m, x)
    }

    pub fn bhat(&self, x: f64) -> f64 {
        self.interp(&self.bhat, x)
    }

    pub fn bhat_prime(&self, x: f64) -> f64 {
        self.interp(&self.bhat_prime, x)
    }

    pub fn bhat_sup(&self) -> f64 {
        self.bhat.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn a_eff(&self) -> f64 {
        self.a_eff
    }

    /// mu-average ∫ f dμ.
    pub fn mean_of(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .xs
            .iter()
            .zip(self.m.iter())
            .map(|(&x, &m)| f(x) * m)
            .collect();
        trapz(&self.xs, &vals)
    }

    /// Effective drift A * ∫ c / a for a slow drift field c.
    pub fn c_eff(&self, c_fn: &dyn Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .xs
            .iter()
            .zip(self.a.iter())
            .map(|(&x, &a)| c_fn(x) / a)
            .collect();
        self.a_eff * trapz(&self.xs, &vals)
    }

    /// Mass of the cell [i/n, (i+1)/n) under μ.
    pub fn cell_mass(&self, i: usize, n_cells: usize) -> f64 {
        let lo = i as f64 / n_cells as f64;
        let hi = (i + 1) as f64 / n_cells as f64;
        let steps = 32;
        let mut acc = 0.0;
        for k in 0..steps {
            let x0 = lo + (hi - lo) * k as f64 / steps as f64;
            let x1 = lo + (hi - lo) * (k + 1) as f64 / steps as f64;
            acc += 0.5 * (self.density(x0) + self.density(x1)) * (x1 - x0);
        }
        acc
    }

    /// μ-average of Λ = (1 + bhat') σ with σ = sqrt(a).
    pub fn lambda_mean(&self) -> f64 {
        let vals: Vec<f64> = (0..self.xs.len())
            .map(|i| (1.0 + self.bhat_prime[i]) * self.a[i].sqrt() * self.m[i])
            .collect();
        trapz(&self.xs, &vals)
    }
}

fn trapz(xs: &[f64], ys: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// E_x tau for dX = sqrt(a) dB on (0,1): solves (a/2) u'' = -1, u(0)=u(1)=0.
pub fn brownian_exit_mean(x: f64, a: f64) -> f64 {
    x * (1.0 - x) / a
}

/// E_x e^{lambda tau} for dX = sqrt(a) dB on (0,1):
/// cos(sqrt(2 lambda / a)(x - 1/2)) / cos(sqrt(2 lambda / a)/2),
/// valid for lambda below the principal eigenvalue a pi^2 / 2.
pub fn exit_exponential_interval(x: f64, lambda: f64, a: f64) -> f64 {
    let w = (2.0 * lambda / a).sqrt();
    (w * (x - 0.5)).cos() / (w / 2.0).cos()
}

/// Solution of (A/2) u'' - kappa u = 0 on (0,1) with u = g0 on the boundary.
pub fn cosh_solution(x: f64, a_eff: f64, kappa: f64, g0: f64) -> f64 {
    let w = (2.0 * kappa / a_eff).sqrt();
    g0 * (w * (x - 0.5)).cosh() / (w / 2.0).cosh()
}

/// Fields of the bundled a = 2 + sin 2πx family, for building oracles.
pub fn a_two_plus_sin(x: f64) -> f64 {
    2.0 + (2.0 * std::f64::consts::PI * x).sin()
}

pub fn b_half_cos(x: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * x).cos()
}

pub fn zero_field(_x: f64) -> f64 {
    0.0
}

#[cfg(test)]
mod oracle_self_checks {
    use super::*;

    #[test]
    fn harmonic_mean_recovered() {
        let oracle = Oracle1d::new(&a_two_plus_sin, &zero_field, 1 << 14);
        assert!((oracle.a_eff() - 3.0f64.sqrt()).abs() < 1e-7);
        // m(0.25) = (1/3) / (1/sqrt(3)) = sqrt(3)/3
        assert!((oracle.density(0.25) - 3.0f64.sqrt() / 3.0).abs() < 1e-7);
    }

    #[test]
    fn centered_drift_effective_value() {
        // cross-computed with an independent quadrature implementation
        let oracle = Oracle1d::new(&a_two_plus_sin, &b_half_cos, 1 << 14);
        assert!((oracle.a_eff() - 1.767_023_960_498).abs() < 1e-6);
        assert!(oracle.mean_of(&b_half_cos).abs() < 1e-9);
    }

    #[test]
    fn exit_exponential_value() {
        let v = exit_exponential_interval(0.5, 1.0, 1.0);
        assert!((v - 1.315_366_138_538_33).abs() < 1e-12);
    }
}
