//! Error type shared across the toolkit.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// a(x) has an eigenvalue below -tol at a sampled point, or a coefficient
    /// field is otherwise unusable.
    #[error("MODEL_INVALID: {0}")]
    ModelInvalid(String),

    /// Starting point outside the open domain G.
    #[error("DOMAIN_INVALID: {0}")]
    DomainInvalid(String),

    /// Nonpositive time step or inconsistent scheme parameters.
    #[error("STEP_INVALID: {0}")]
    StepInvalid(String),

    /// Discrete kernel of the adjoint generator has numerical dimension != 1.
    /// Carries the two smallest singular values for diagnosis.
    #[error("SINGULAR_STATIONARY: kernel dimension != 1 (two smallest singular values {sv_min:.3e}, {sv_next:.3e})")]
    SingularStationary { sv_min: f64, sv_next: f64 },

    /// Drift fails the centering condition under the supplied measure, so the
    /// corrector integral diverges.
    #[error("CENTERING_VIOLATED: |∫b dμ| = {residual:.3e} exceeds tolerance {tol:.3e}")]
    CenteringViolated { residual: f64, tol: f64 },

    /// Grid cell problem is not solvable at this resolution (degenerate a with
    /// insufficient drift connectivity). Refine the grid and retry.
    #[error("SINGULAR_SYSTEM: {0}; refine the torus grid and retry")]
    SingularSystem(String),

    /// Effective diffusion matrix has an eigenvalue below -tol.
    #[error("NOT_SPD: min eigenvalue {min_eig:.3e}")]
    NotSpd { min_eig: f64 },

    /// More than the allowed fraction of paths hit the horizon before exiting.
    #[error("CENSORED: {censored} of {total} paths hit t_max before exit (allowed fraction {allowed:.1e})")]
    Censored {
        censored: usize,
        total: usize,
        allowed: f64,
    },

    /// Picard sup-norm deltas grew for three consecutive iterations.
    #[error("NO_CONTRACTION: contraction log increased for 3 consecutive iterations: {0:?}")]
    NoContraction(Vec<f64>),

    /// Damped Newton hit the damping floor without reducing the residual.
    #[error("NEWTON_DIVERGED: residual {residual:.3e} after {iters} iterations")]
    NewtonDiverged { residual: f64, iters: usize },

    /// N*eps too small to resolve the fast scale in the oscillating solve.
    #[error("RESOLUTION: N*eps = {neps:.1} < {required:.1}; refine the grid")]
    Resolution { neps: f64, required: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
