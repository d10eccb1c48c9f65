//! Entropy-regularized unbalanced optimal transport, classical and
//! non-commutative.
//!
//! * [`herm`]: Hermitian operators, spectral calculus, partial traces and
//!   the von Neumann / Umegaki entropies.
//! * [`classical`]: unbalanced Sinkhorn between finite positive measures.
//! * [`quantum`]: the operator problem, its dual, gradient and solver.
//! * [`gamma`]: sweeps towards the `ε → 0` and `τ → ∞` limits.
//!
//! ```
//! use uqot::herm::HermitianOperator;
//! use uqot::quantum::{solve_uqot, QuantumProblem, QuantumSolverConfig};
//!
//! let cost = HermitianOperator::from_diagonal(&[0.0, 1.0, 1.0, 0.0]);
//! let rho = HermitianOperator::from_diagonal(&[0.5, 0.5]);
//! let sigma = HermitianOperator::from_diagonal(&[0.3, 0.7]);
//! let prob = QuantumProblem::new(cost, rho, sigma, 0.1, 1.0, 1.0)?;
//! let (_gamma, report) = solve_uqot(&prob, &QuantumSolverConfig::default())?;
//! assert!(report.converged);
//! assert!(report.gap >= -1e-8);
//! # Ok::<(), uqot::Error>(())
//! ```

pub mod classical;
mod error;
pub mod gamma;
pub mod herm;
pub mod quantum;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/classical.md")]
    mod classical {}
    #[doc = include_str!("../../../book/src/quantum.md")]
    mod quantum {}
    #[doc = include_str!("../../../book/src/limits.md")]
    mod limits {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
