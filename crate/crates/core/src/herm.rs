//! Hermitian operators on finite-dimensional spaces and the spectral
//! machinery the solvers are built on: functional calculus, partial traces,
//! Kronecker sums and the von Neumann / Umegaki entropies.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Entrywise tolerance for accepting a matrix as Hermitian, relative to
/// `max(1, max |h_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenvalues above `-PSD_TOL * max(1, spectral radius)` count as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

/// Relative threshold deciding when an eigenvalue of the reference operator
/// counts as zero in [`umegaki_relative_entropy`].
pub const KERNEL_TOL: f64 = 1e-10;

/// Relative log floor used by [`default_log_floor`].
pub const LOG_FLOOR_REL: f64 = 1e-13;

const EIG_MAX_ITER: usize = 100_000;

/// A dense Hermitian matrix. Construction checks Hermiticity and then
/// symmetrizes exactly, so `h[(i, j)] == conj(h[(j, i)])` holds bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    m: DMatrix<C64>,
}

impl HermitianOperator {
    /// Validates `m` against [`HERMITIAN_TOL`] and symmetrizes it.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("operator entries"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let mut deviation = 0.0_f64;
        for i in 0..m.nrows() {
            for j in 0..=i {
                deviation = deviation.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if deviation > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(m))
    }

    /// Builds `(m + m^*) / 2` without any check. Used internally for
    /// products that are Hermitian up to rounding.
    pub(crate) fn symmetrized(m: DMatrix<C64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
            for j in 0..i {
                let z = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        Self { m: out }
    }

    /// Row-major construction from `dim * dim` complex entries.
    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Real symmetric matrix given row-major.
    pub fn from_real_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        let z: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(dim, &z)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self { m }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    /// `Tr[A B]`, which is real for Hermitian `A`, `B`.
    pub fn trace_product(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        // Tr[AB] = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij)
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.m[(i, j)].norm() <= tol))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { m: &self.m * C64::new(a, 0.0) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { m: &self.m + &other.m }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { m: &self.m - &other.m }
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        Self { m: &self.m * C64::new(a, 0.0) + &other.m * C64::new(b, 0.0) }
    }

    pub fn add_identity(&self, a: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)].re += a;
        }
        Self { m }
    }

    /// `self ⊗ other`, with composite index `i * other.dim() + j`.
    pub fn kron(&self, other: &Self) -> Self {
        Self { m: self.m.kronecker(&other.m) }
    }

    /// `W H W^*` for a square `w`. Hermitian by construction.
    pub fn conjugate_by(&self, w: &DMatrix<C64>) -> Self {
        Self::symmetrized(w * &self.m * w.adjoint())
    }

    /// Spectral radius, computed from the eigenvalues.
    pub fn spectral_radius(&self) -> Result<f64> {
        let sd = spectral_decompose(self)?;
        Ok(sd.eigenvalues.iter().fold(0.0_f64, |a, &x| a.max(x.abs())))
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors (as columns).
/// Each eigenvector's first nonzero component is real and positive.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<C64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `Q diag(f(λ)) Q^*`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        self.with_eigenvalues(&vals)
    }

    /// Same eigenvectors, replacement eigenvalues.
    pub fn with_eigenvalues(&self, vals: &[f64]) -> HermitianOperator {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (k, &x) in vals.iter().enumerate() {
            scaled.column_mut(k).scale_mut(x);
        }
        HermitianOperator::symmetrized(scaled * q.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        self.with_eigenvalues(&self.eigenvalues)
    }

    /// `⟨q_k| A |q_k⟩` for every eigenvector `q_k`.
    pub fn diagonal_of(&self, a: &HermitianOperator) -> Vec<f64> {
        let q = &self.eigenvectors;
        (0..self.dim())
            .map(|k| {
                let col = q.column(k);
                let acol = a.as_matrix() * col;
                col.dotc(&acol).re
            })
            .collect()
    }
}

pub fn spectral_decompose(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let n = h.dim();
    if n == 0 {
        return Ok(SpectralDecomposition { eigenvalues: vec![], eigenvectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(h.m.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or(Error::Eigensolver)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigensolver);
    }
    let mut q = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(z) = col.iter().copied().find(|z| z.norm() > 1e-12) {
            let phase = z.conj() / z.norm();
            col *= phase;
        }
        q.set_column(dst, &col);
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: q })
}

/// `f(H)` through the spectral decomposition. With `floor = Some(δ)` every
/// eigenvalue below `δ` is raised to `δ` before `f` is applied.
pub fn apply_spectral_function(
    h: &HermitianOperator,
    f: impl Fn(f64) -> f64,
    floor: Option<f64>,
) -> Result<HermitianOperator> {
    let sd = spectral_decompose(h)?;
    Ok(match floor {
        Some(d) => sd.map(|x| f(x.max(d))),
        None => sd.map(f),
    })
}

/// `δ = 1e-13 · ‖H‖`, with the spectral radius as the norm.
pub fn default_log_floor(h: &HermitianOperator) -> Result<f64> {
    Ok(LOG_FLOOR_REL * h.spectral_radius()?)
}

/// Matrix logarithm of a positive semidefinite operator. Eigenvalues are
/// floored at `floor` first; anything still nonpositive is an error, as is
/// an eigenvalue clearly below zero.
pub fn spectral_log(h: &HermitianOperator, floor: Option<f64>) -> Result<HermitianOperator> {
    let sd = spectral_decompose(h)?;
    log_of_decomposition(&sd, floor)
}

pub(crate) fn log_of_decomposition(sd: &SpectralDecomposition, floor: Option<f64>) -> Result<HermitianOperator> {
    let scale = sd.eigenvalues.iter().fold(1.0_f64, |a, &x| a.max(x.abs()));
    let lo = sd.min_eigenvalue();
    if lo < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    let vals: Vec<f64> = sd.eigenvalues.iter().map(|&x| floor.map_or(x, |d| x.max(d))).collect();
    if let Some(&bad) = vals.iter().find(|&&x| x <= 0.0) {
        return Err(Error::NonPositiveLog { eigenvalue: bad });
    }
    Ok(sd.with_eigenvalues(&vals.iter().map(|x| x.ln()).collect::<Vec<_>>()))
}

/// `exp(H)` computed as `e^m exp(H - m)` with `m = λ_max`; returns the
/// shifted exponential and `m` so callers can keep the scale in log form.
pub fn shifted_exp(sd: &SpectralDecomposition) -> (HermitianOperator, f64) {
    let m = sd.max_eigenvalue();
    (sd.map(|x| (x - m).exp()), m)
}

/// Raises every eigenvalue below `delta` to `delta`.
pub fn psd_floor(h: &HermitianOperator, delta: f64) -> Result<HermitianOperator> {
    apply_spectral_function(h, |x| x, Some(delta))
}

/// Checks positive semidefiniteness with tolerance `PSD_TOL` relative to
/// the spectral radius; returns the decomposition on success.
pub fn check_psd(h: &HermitianOperator) -> Result<SpectralDecomposition> {
    let sd = spectral_decompose(h)?;
    let scale = sd.eigenvalues.iter().fold(1.0_f64, |a, &x| a.max(x.abs()));
    if sd.min_eigenvalue() < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: sd.min_eigenvalue() });
    }
    Ok(sd)
}

/// Dimensions of a bipartite space `C^d1 ⊗ C^d2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BipartiteShape {
    pub d1: usize,
    pub d2: usize,
}

impl BipartiteShape {
    pub fn new(d1: usize, d2: usize) -> Self {
        Self { d1, d2 }
    }

    pub fn total(&self) -> usize {
        self.d1 * self.d2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    First,
    Second,
}

/// Traces out one factor. `keep = First` gives the operator on `C^d1`.
pub fn partial_trace(g: &HermitianOperator, shape: BipartiteShape, keep: Subsystem) -> Result<HermitianOperator> {
    if g.dim() != shape.total() {
        return Err(Error::DimensionMismatch { expected: shape.total(), found: g.dim() });
    }
    let (d1, d2) = (shape.d1, shape.d2);
    let m = g.as_matrix();
    let out = match keep {
        Subsystem::First => DMatrix::from_fn(d1, d1, |i, k| (0..d2).map(|j| m[(i * d2 + j, k * d2 + j)]).sum()),
        Subsystem::Second => DMatrix::from_fn(d2, d2, |j, l| (0..d1).map(|i| m[(i * d2 + j, i * d2 + l)]).sum()),
    };
    Ok(HermitianOperator::symmetrized(out))
}

/// `U ⊗ I + I ⊗ V`.
pub fn kron_sum(u: &HermitianOperator, v: &HermitianOperator) -> HermitianOperator {
    let (d1, d2) = (u.dim(), v.dim());
    let mu = u.as_matrix();
    let mv = v.as_matrix();
    let n = d1 * d2;
    let m = DMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (r / d2, r % d2);
        let (k, l) = (c / d2, c % d2);
        let mut z = C64::new(0.0, 0.0);
        if j == l {
            z += mu[(i, k)];
        }
        if i == k {
            z += mv[(j, l)];
        }
        z
    });
    HermitianOperator { m }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `S[G] = Tr[G (log G - I)]` with `0 log 0 = 0`. Eigenvalues in
/// `[-1e-10 · scale, 0)` are clipped to zero; more negative ones are an error.
pub fn von_neumann_entropy(g: &HermitianOperator) -> Result<f64> {
    let sd = check_psd(g)?;
    Ok(entropy_from_eigenvalues(&sd.eigenvalues))
}

pub(crate) fn entropy_from_eigenvalues(vals: &[f64]) -> f64 {
    vals.iter().map(|&x| if x > 0.0 { xlogx(x) - x } else { 0.0 }).sum()
}

/// Outcome of the support test `ker G2 ⊆ ker G1` used by the relative entropy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelCheck {
    /// True when the kernel inclusion holds and the relative entropy is finite.
    pub finite: bool,
    /// True when some overlap `⟨v|G1|v⟩` on the numerical kernel of `G2`
    /// lies within a factor 100 of the threshold on either side.
    pub near_threshold: bool,
}

/// Umegaki relative entropy `E[G1|G2] = Tr[G1 (log G1 - log G2)] - Tr G1 + Tr G2`.
///
/// Returns `+∞` when an eigenvector `v` of `G2` with eigenvalue at most
/// `KERNEL_TOL · λ_max` has `⟨v|G1|v⟩ > KERNEL_TOL · λ_max`, where `λ_max`
/// is the larger top eigenvalue of the two operators.
pub fn umegaki_relative_entropy(g1: &HermitianOperator, g2: &HermitianOperator) -> Result<f64> {
    Ok(umegaki_with_check(g1, g2)?.0)
}

pub fn umegaki_with_check(g1: &HermitianOperator, g2: &HermitianOperator) -> Result<(f64, KernelCheck)> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch { expected: g1.dim(), found: g2.dim() });
    }
    let s1 = check_psd(g1)?;
    let s2 = check_psd(g2)?;
    Ok(umegaki_from_parts(&s1, &s2, g1))
}

pub(crate) fn umegaki_from_parts(
    s1: &SpectralDecomposition,
    s2: &SpectralDecomposition,
    g1: &HermitianOperator,
) -> (f64, KernelCheck) {
    let top = s1.max_eigenvalue().max(s2.max_eigenvalue()).max(f64::MIN_POSITIVE);
    let tol = KERNEL_TOL * top;
    let overlaps = s2.diagonal_of(g1);
    let mut check = KernelCheck { finite: true, near_threshold: false };
    let mut cross = 0.0;
    for (&mu, &w) in s2.eigenvalues.iter().zip(&overlaps) {
        if mu <= tol {
            if w > tol {
                check.finite = false;
            }
            if w > tol / 100.0 && w <= tol * 100.0 {
                check.near_threshold = true;
            }
        } else {
            cross += w * mu.ln();
        }
    }
    if !check.finite {
        return (f64::INFINITY, check);
    }
    let t1: f64 = s1.eigenvalues.iter().map(|&x| x.max(0.0)).sum();
    let t2: f64 = s2.eigenvalues.iter().map(|&x| x.max(0.0)).sum();
    let self_term: f64 = s1.eigenvalues.iter().map(|&x| xlogx(x)).sum();
    (self_term - cross - t1 + t2, check)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pauli_y() -> HermitianOperator {
        HermitianOperator::from_row_major(2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap()
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(1e-6, 0.), c(0., 0.), c(1., 0.)]);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn symmetrizes_small_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1., 1e-14), c(0.5, 1e-14), c(0.5, 0.), c(2., 0.)]);
        let h = HermitianOperator::new(m).unwrap();
        assert_eq!(h.get(0, 1), h.get(1, 0).conj());
        assert_eq!(h.get(0, 0).im, 0.0);
    }

    #[test]
    fn pauli_y_spectrum() {
        let sd = spectral_decompose(&pauli_y()).unwrap();
        assert!((sd.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((sd.eigenvalues[1] - 1.0).abs() < 1e-14);
        for k in 0..2 {
            let z = sd.eigenvectors[(0, k)];
            assert!(z.re > 0.0 && z.im.abs() < 1e-15);
        }
        let back = sd.reconstruct();
        assert!(back.sub(&pauli_y()).frobenius_norm() < 1e-14);
    }

    #[test]
    fn exp_of_log_round_trips() {
        let h = HermitianOperator::from_real_row_major(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let l = spectral_log(&h, None).unwrap();
        let e = apply_spectral_function(&l, f64::exp, None).unwrap();
        assert!(e.sub(&h).frobenius_norm() < 1e-13);
    }

    #[test]
    fn log_of_singular_needs_floor() {
        let h = HermitianOperator::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(spectral_log(&h, None), Err(Error::NonPositiveLog { .. })));
        let d = default_log_floor(&h).unwrap();
        let l = spectral_log(&h, Some(d)).unwrap();
        assert!((l.get(1, 1).re - (1e-13f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn partial_traces_of_product() {
        let a = HermitianOperator::from_real_row_major(2, &[1.0, 0.2, 0.2, 3.0]).unwrap();
        #[rustfmt::skip]
        let b = HermitianOperator::from_row_major(3, &[
            c(2., 0.), c(0., 1.), c(0., 0.),
            c(0., -1.), c(1., 0.), c(0.5, 0.),
            c(0., 0.), c(0.5, 0.), c(4., 0.),
        ])
        .unwrap();
        let g = a.kron(&b);
        let shape = BipartiteShape::new(2, 3);
        let g1 = partial_trace(&g, shape, Subsystem::First).unwrap();
        let g2 = partial_trace(&g, shape, Subsystem::Second).unwrap();
        assert!(g1.sub(&a.scale(b.trace())).frobenius_norm() < 1e-13);
        assert!(g2.sub(&b.scale(a.trace())).frobenius_norm() < 1e-13);
    }

    #[test]
    fn kron_sum_matches_definition() {
        let u = HermitianOperator::from_real_row_major(2, &[1.0, 2.0, 2.0, -1.0]).unwrap();
        let v = pauli_y();
        let direct = u.kron(&HermitianOperator::identity(2)).add(&HermitianOperator::identity(2).kron(&v));
        assert!(kron_sum(&u, &v).sub(&direct).frobenius_norm() == 0.0);
    }

    #[test]
    fn entropy_of_identity() {
        for d in 1..=9 {
            let s = von_neumann_entropy(&HermitianOperator::identity(d)).unwrap();
            assert!((s + d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_entropy_infinite_outside_support() {
        let g1 = HermitianOperator::from_diagonal(&[1.0, 1.0]);
        let g2 = HermitianOperator::from_diagonal(&[1.0, 0.0]);
        assert_eq!(umegaki_relative_entropy(&g1, &g2).unwrap(), f64::INFINITY);
        let e = umegaki_relative_entropy(&g2, &g1).unwrap();
        // 1·log 1 - 0 - 1 + 2
        assert!((e - 1.0).abs() < 1e-13);
    }

    #[test]
    fn relative_entropy_of_scalars() {
        let g1 = HermitianOperator::from_diagonal(&[2.0]);
        let g2 = HermitianOperator::from_diagonal(&[3.0]);
        let e = umegaki_relative_entropy(&g1, &g2).unwrap();
        let want = 2.0 * (2.0f64 / 3.0).ln() - 2.0 + 3.0;
        assert!((e - want).abs() < 1e-14);
    }

    #[test]
    fn negative_eigenvalue_is_not_psd() {
        let h = HermitianOperator::from_diagonal(&[1.0, -1e-3]);
        assert!(matches!(von_neumann_entropy(&h), Err(Error::NotPsd { .. })));
        let tiny = HermitianOperator::from_diagonal(&[1.0, -1e-12]);
        assert!(von_neumann_entropy(&tiny).is_ok());
    }
}
