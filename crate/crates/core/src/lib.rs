//! Probabilistic homogenization toolkit for semilinear elliptic Dirichlet
//! problems with rapidly oscillating, possibly degenerate periodic
//! coefficients.
//!
//! The pipeline mirrors the probabilistic construction of the effective
//! problem: simulate the fast diffusion on the torus, estimate its invariant
//! measure and mixing rate, solve the cell (Poisson) problem for the
//! corrector, assemble the constant effective coefficients (A, C) and the
//! averaged driver, then solve prelimit and limit Dirichlet problems through
//! exit-time Monte Carlo / BSDE regression and a finite-difference reference
//! solver, and finally check that the oscillating solutions approach the
//! effective one as the scale parameter shrinks.

pub mod bsde;
pub mod bundle;
pub mod coeffs;
pub mod config;
pub mod corrector;
pub mod domain;
pub mod driver;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod fd;
pub mod generator;
pub mod measure;
pub mod models;
pub mod pipeline;
pub mod plots;
pub mod rng;
pub mod stats;
pub mod validate;

pub use coeffs::{CoeffValues, PeriodicModel, Point, ScalarCoeff, TrigPoly};
pub use domain::Domain;
pub use driver::{BoundaryData, DirichletProblem, Driver};
pub use error::{Error, Result};
