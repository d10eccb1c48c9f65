//! Seeded generators for random test instances.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uqot::classical::{ClassicalProblem, DiscreteMeasure};
use uqot::herm::HermitianOperator;
use uqot::quantum::QuantumProblem;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    rand::SeedableRng::seed_from_u64(seed)
}

fn complex_matrix(rng: &mut TestRng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Hermitian with entries of modulus at most about `scale`.
pub fn hermitian(rng: &mut TestRng, d: usize, scale: f64) -> HermitianOperator {
    let m = complex_matrix(rng, d, d);
    let h = (&m + m.adjoint()) * Complex64::new(0.5 * scale, 0.0);
    HermitianOperator::new(h).expect("symmetrized matrix is Hermitian")
}

/// Positive definite with smallest eigenvalue at least `floor / (1 + floor d)`
/// after normalization to trace `trace`.
pub fn positive_definite(rng: &mut TestRng, d: usize, floor: f64, trace: f64) -> HermitianOperator {
    let m = complex_matrix(rng, d, d);
    let h = HermitianOperator::new(&m * m.adjoint()).expect("Gram matrix is Hermitian").add_identity(floor * d as f64);
    let t = h.trace();
    h.scale(trace / t)
}

/// Positive semidefinite of rank at most `rank`.
pub fn low_rank_psd(rng: &mut TestRng, d: usize, rank: usize) -> HermitianOperator {
    let m = complex_matrix(rng, d, rank);
    HermitianOperator::new(&m * m.adjoint()).expect("Gram matrix is Hermitian")
}

/// Haar-ish unitary from the QR factorization of a random matrix.
pub fn unitary(rng: &mut TestRng, d: usize) -> DMatrix<Complex64> {
    complex_matrix(rng, d, d).qr().q()
}

pub fn uniform(rng: &mut TestRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn index(rng: &mut TestRng, lo: usize, hi_inclusive: usize) -> usize {
    rng.random_range(lo..=hi_inclusive)
}

/// Classical instance with `n, m ≤ 6`, `ε ∈ [0.05, 1]`, `τ ∈ [0.1, 10]`,
/// masses in `[0.2, 3]` and costs in `[0, 1]`.
pub fn classical_instance(rng: &mut TestRng) -> ClassicalProblem {
    let n = index(rng, 1, 6);
    let m = index(rng, 1, 6);
    classical_with_shape(rng, n, m)
}

pub fn classical_with_shape(rng: &mut TestRng, n: usize, m: usize) -> ClassicalProblem {
    let eps = uniform(rng, 0.05, 1.0);
    let t1 = uniform(rng, 0.1, 10.0);
    let t2 = uniform(rng, 0.1, 10.0);
    let mu = (0..n).map(|_| uniform(rng, 0.2, 3.0)).collect();
    let nu = (0..m).map(|_| uniform(rng, 0.2, 3.0)).collect();
    let cost = DMatrix::from_fn(n, m, |_, _| rng.random_range(0.0..1.0));
    ClassicalProblem::new(
        DiscreteMeasure::new(mu).expect("positive weights"),
        DiscreteMeasure::new(nu).expect("positive weights"),
        cost,
        eps,
        t1,
        t2,
    )
    .expect("valid parameters")
}

/// Dense quantum instance with PD marginals of trace in `[0.5, 2]`.
pub fn quantum_instance(rng: &mut TestRng, d1: usize, d2: usize) -> QuantumProblem {
    let cost = hermitian(rng, d1 * d2, 1.0).add_identity(1.0);
    let t_rho = uniform(rng, 0.5, 2.0);
    let t_sigma = uniform(rng, 0.5, 2.0);
    let rho = positive_definite(rng, d1, 0.1, t_rho);
    let sigma = positive_definite(rng, d2, 0.1, t_sigma);
    let eps = uniform(rng, 0.1, 1.0);
    let t1 = uniform(rng, 0.5, 5.0);
    let t2 = uniform(rng, 0.5, 5.0);
    QuantumProblem::new(cost, rho, sigma, eps, t1, t2).expect("valid instance")
}

/// Quantum instance with diagonal cost and marginals.
pub fn diagonal_quantum_instance(rng: &mut TestRng, d1: usize, d2: usize) -> QuantumProblem {
    let c: Vec<f64> = (0..d1 * d2).map(|_| uniform(rng, 0.0, 1.0)).collect();
    let mu: Vec<f64> = (0..d1).map(|_| uniform(rng, 0.2, 3.0)).collect();
    let nu: Vec<f64> = (0..d2).map(|_| uniform(rng, 0.2, 3.0)).collect();
    let eps = uniform(rng, 0.1, 1.0);
    let t1 = uniform(rng, 0.5, 5.0);
    let t2 = uniform(rng, 0.5, 5.0);
    QuantumProblem::new(
        HermitianOperator::from_diagonal(&c),
        HermitianOperator::from_diagonal(&mu),
        HermitianOperator::from_diagonal(&nu),
        eps,
        t1,
        t2,
    )
    .expect("valid instance")
}
