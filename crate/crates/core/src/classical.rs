//! Entropy-regularized unbalanced transport between finite positive measures.
//!
//! A coupling is stored through its density `p` with respect to `μ ⊗ ν`;
//! the dual potentials `(u, v)` live on the supports of `μ` and `ν`.

use nalgebra::DMatrix;

use crate::error::{check_parameter, Error, Result};

/// A finite positive measure. Individual weights may vanish, the total may not.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    mass: f64,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!("weight {w} is negative or not finite")));
        }
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            return Err(Error::InvalidMeasure("total mass is zero".into()));
        }
        Ok(Self { weights, mass })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect()
    }
}

/// Data of one classical instance: marginals, an `n × m` cost and the
/// regularization / penalty strengths.
#[derive(Clone, Debug)]
pub struct ClassicalProblem {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    cost: DMatrix<f64>,
    epsilon: f64,
    tau1: f64,
    tau2: f64,
    log_mu: Vec<f64>,
    log_nu: Vec<f64>,
}

impl ClassicalProblem {
    pub fn new(
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        cost: DMatrix<f64>,
        epsilon: f64,
        tau1: f64,
        tau2: f64,
    ) -> Result<Self> {
        check_parameter("epsilon", epsilon)?;
        check_parameter("tau1", tau1)?;
        check_parameter("tau2", tau2)?;
        if cost.nrows() != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), found: cost.nrows() });
        }
        if cost.ncols() != nu.len() {
            return Err(Error::DimensionMismatch { expected: nu.len(), found: cost.ncols() });
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost"));
        }
        let log_mu = mu.log_weights();
        let log_nu = nu.log_weights();
        Ok(Self { mu, nu, cost, epsilon, tau1, tau2, log_mu, log_nu })
    }

    pub fn mu(&self) -> &DiscreteMeasure {
        &self.mu
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.nu.clone(), self.cost.clone(), epsilon, self.tau1, self.tau2)
    }

    pub fn with_tau(&self, tau1: f64, tau2: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.nu.clone(), self.cost.clone(), self.epsilon, tau1, tau2)
    }

    fn cost_sup(&self) -> f64 {
        self.cost.iter().fold(0.0_f64, |a, c| a.max(c.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalPotentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ClassicalPotentials {
    pub fn zeros(prob: &ClassicalProblem) -> Self {
        Self { u: vec![0.0; prob.mu.len()], v: vec![0.0; prob.nu.len()] }
    }
}

/// A coupling given by its density with respect to `μ ⊗ ν`, together with
/// the densities of its marginals with respect to `μ` and `ν`.
#[derive(Clone, Debug)]
pub struct DiscreteCoupling {
    pub density: DMatrix<f64>,
    pub p_x: Vec<f64>,
    pub p_y: Vec<f64>,
}

impl DiscreteCoupling {
    pub fn from_density(density: DMatrix<f64>, prob: &ClassicalProblem) -> Result<Self> {
        if density.shape() != prob.cost.shape() {
            return Err(Error::DimensionMismatch { expected: prob.cost.len(), found: density.len() });
        }
        if density.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidMeasure("coupling density must be finite and nonnegative".into()));
        }
        let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
        let p_x = (0..mu.len()).map(|i| (0..nu.len()).map(|j| density[(i, j)] * nu[j]).sum()).collect();
        let p_y = (0..nu.len()).map(|j| (0..mu.len()).map(|i| density[(i, j)] * mu[i]).sum()).collect();
        Ok(Self { density, p_x, p_y })
    }

    /// Builds the coupling from the masses `γ_ij` it puts on each pair.
    pub fn from_masses(masses: DMatrix<f64>, prob: &ClassicalProblem) -> Result<Self> {
        let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
        let mut density = masses.clone();
        for i in 0..mu.len() {
            for j in 0..nu.len() {
                let w = mu[i] * nu[j];
                if w > 0.0 {
                    density[(i, j)] = masses[(i, j)] / w;
                } else if masses[(i, j)] != 0.0 {
                    return Err(Error::InvalidMeasure("coupling charges a null pair of μ ⊗ ν".into()));
                }
            }
        }
        Self::from_density(density, prob)
    }

    pub fn masses(&self, prob: &ClassicalProblem) -> DMatrix<f64> {
        let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
        DMatrix::from_fn(mu.len(), nu.len(), |i, j| self.density[(i, j)] * mu[i] * nu[j])
    }

    pub fn total_mass(&self, prob: &ClassicalProblem) -> f64 {
        self.p_x.iter().zip(prob.mu.weights()).map(|(p, w)| p * w).sum()
    }
}

fn xlogx_minus_x(x: f64) -> f64 {
    if x > 0.0 {
        x * (x.ln() - 1.0)
    } else {
        0.0
    }
}

/// `KL(α|β)` for weight vectors on a common finite set:
/// `Σ α log(α/β) - α + β`, and `+∞` when `α` charges a null atom of `β`.
pub fn kl_divergence(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    if alpha.len() != beta.len() {
        return Err(Error::DimensionMismatch { expected: beta.len(), found: alpha.len() });
    }
    let mut total = 0.0;
    for (&a, &b) in alpha.iter().zip(beta) {
        if a < 0.0 || b < 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidMeasure("KL arguments must be finite and nonnegative".into()));
        }
        if b == 0.0 {
            if a > 0.0 {
                return Ok(f64::INFINITY);
            }
        } else if a == 0.0 {
            total += b;
        } else {
            total += a * (a / b).ln() - a + b;
        }
    }
    Ok(total)
}

/// `S(γ) = Σ p (log p - 1) μ ⊗ ν`.
pub fn relative_shannon_entropy(gamma: &DiscreteCoupling, prob: &ClassicalProblem) -> f64 {
    let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
    let mut s = 0.0;
    for (i, &a) in mu.iter().enumerate() {
        for (j, &b) in nu.iter().enumerate() {
            if a * b > 0.0 {
                s += xlogx_minus_x(gamma.density[(i, j)]) * a * b;
            }
        }
    }
    s
}

/// Transport cost plus entropic and marginal penalties of a coupling.
pub fn primal_value_classical(gamma: &DiscreteCoupling, prob: &ClassicalProblem) -> f64 {
    let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
    let mut transport = 0.0;
    for (i, &a) in mu.iter().enumerate() {
        for (j, &b) in nu.iter().enumerate() {
            transport += prob.cost[(i, j)] * gamma.density[(i, j)] * a * b;
        }
    }
    // Marginal KL terms in density form: Σ [p (log p - 1) + 1] μ.
    let kl_x: f64 = gamma.p_x.iter().zip(mu).map(|(&p, &w)| (xlogx_minus_x(p) + 1.0) * w).sum();
    let kl_y: f64 = gamma.p_y.iter().zip(nu).map(|(&p, &w)| (xlogx_minus_x(p) + 1.0) * w).sum();
    transport + prob.epsilon * relative_shannon_entropy(gamma, prob) + prob.tau1 * kl_x + prob.tau2 * kl_y
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = terms.filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + vals.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_potentials(pots: &ClassicalPotentials, prob: &ClassicalProblem) -> Result<()> {
    if pots.u.len() != prob.mu.len() {
        return Err(Error::DimensionMismatch { expected: prob.mu.len(), found: pots.u.len() });
    }
    if pots.v.len() != prob.nu.len() {
        return Err(Error::DimensionMismatch { expected: prob.nu.len(), found: pots.v.len() });
    }
    if pots.u.iter().chain(&pots.v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("potentials"));
    }
    Ok(())
}

/// Dual objective, with the coupling term summed in log-sum-exp form.
/// Potentials far below zero can make the value `-∞`.
pub fn dual_value_classical(pots: &ClassicalPotentials, prob: &ClassicalProblem) -> Result<f64> {
    check_potentials(pots, prob)?;
    Ok(dual_unchecked(&pots.u, &pots.v, prob))
}

fn dual_unchecked(u: &[f64], v: &[f64], prob: &ClassicalProblem) -> f64 {
    let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
    let (eps, t1, t2) = (prob.epsilon, prob.tau1, prob.tau2);
    let pen_x: f64 = u.iter().zip(mu).map(|(&x, &w)| (-x / t1).exp_m1() * w).sum();
    let pen_y: f64 = v.iter().zip(nu).map(|(&x, &w)| (-x / t2).exp_m1() * w).sum();
    let lse = log_sum_exp((0..mu.len()).flat_map(|i| {
        (0..nu.len()).map(move |j| (u[i] + v[j] - prob.cost[(i, j)]) / eps + prob.log_mu[i] + prob.log_nu[j])
    }));
    -t1 * pen_x - t2 * pen_y - eps * lse.exp()
}

/// Best response in `v` to a fixed `u`:
/// `v_j = -(τ2 ε / (τ2 + ε)) log Σ_i exp((u_i - c_ij)/ε) μ_i`.
pub fn ctau_transform_of_u(u: &[f64], prob: &ClassicalProblem) -> Result<Vec<f64>> {
    if u.len() != prob.mu.len() {
        return Err(Error::DimensionMismatch { expected: prob.mu.len(), found: u.len() });
    }
    Ok(transform_u(u, prob))
}

/// Best response in `u` to a fixed `v`; the mirror image of [`ctau_transform_of_u`].
pub fn ctau_transform_of_v(v: &[f64], prob: &ClassicalProblem) -> Result<Vec<f64>> {
    if v.len() != prob.nu.len() {
        return Err(Error::DimensionMismatch { expected: prob.nu.len(), found: v.len() });
    }
    Ok(transform_v(v, prob))
}

fn transform_u(u: &[f64], prob: &ClassicalProblem) -> Vec<f64> {
    let eps = prob.epsilon;
    let k = prob.tau2 * eps / (prob.tau2 + eps);
    (0..prob.nu.len())
        .map(|j| -k * log_sum_exp((0..u.len()).map(|i| (u[i] - prob.cost[(i, j)]) / eps + prob.log_mu[i])))
        .collect()
}

fn transform_v(v: &[f64], prob: &ClassicalProblem) -> Vec<f64> {
    let eps = prob.epsilon;
    let k = prob.tau1 * eps / (prob.tau1 + eps);
    (0..prob.mu.len())
        .map(|i| -k * log_sum_exp((0..v.len()).map(|j| (v[j] - prob.cost[(i, j)]) / eps + prob.log_nu[j])))
        .collect()
}

/// Exact maximizer of `λ ↦ D(u + λ, v - λ)`. The coupling term does not
/// depend on `λ`, so the optimality condition balances the two penalties.
fn translation(u: &[f64], v: &[f64], prob: &ClassicalProblem) -> f64 {
    let (mu, nu) = (prob.mu.weights(), prob.nu.weights());
    let (t1, t2) = (prob.tau1, prob.tau2);
    let a: f64 = u.iter().zip(mu).map(|(&x, &w)| (-x / t1).exp_m1() * w).sum::<f64>() / prob.mu.mass();
    let b: f64 = v.iter().zip(nu).map(|(&x, &w)| (-x / t2).exp_m1() * w).sum::<f64>() / prob.nu.mass();
    let lam = t1 * t2 / (t1 + t2) * ((prob.mu.mass() / prob.nu.mass()).ln() + a.ln_1p() - b.ln_1p());
    if lam.is_finite() {
        lam
    } else {
        0.0
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn sup_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()))
}

/// `max(‖u - T(v)‖∞, ‖v - T(u)‖∞)`: zero exactly at the dual maximizer.
pub fn transform_residual(pots: &ClassicalPotentials, prob: &ClassicalProblem) -> Result<f64> {
    check_potentials(pots, prob)?;
    Ok(residual_unchecked(&pots.u, &pots.v, prob))
}

fn residual_unchecked(u: &[f64], v: &[f64], prob: &ClassicalProblem) -> f64 {
    sup_diff(u, &transform_v(v, prob)).max(sup_diff(v, &transform_u(u, prob)))
}

/// `p = exp((u ⊕ v - c)/ε)`, evaluated in log space and exponentiated last.
pub fn recover_coupling(pots: &ClassicalPotentials, prob: &ClassicalProblem) -> Result<DiscreteCoupling> {
    check_potentials(pots, prob)?;
    let density = DMatrix::from_fn(prob.mu.len(), prob.nu.len(), |i, j| {
        ((pots.u[i] + pots.v[j] - prob.cost[(i, j)]) / prob.epsilon).exp()
    });
    if density.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("coupling density"));
    }
    DiscreteCoupling::from_density(density, prob)
}

#[derive(Clone, Debug)]
pub struct SinkhornOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Insert the exact translation step `(u, v) → (u + λ, v - λ)` after
    /// each sweep. It never decreases the dual and removes the slow mode
    /// that plain alternation has when `τ` is large.
    pub translate: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 50_000, translate: true }
    }
}

#[derive(Clone, Debug)]
pub struct ClassicalSolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub transform_residual: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `primal_value - dual_value`; nonnegative up to rounding.
    pub gap: f64,
    /// Largest relative decrease `(D_before - D_after) / (1 + |D_before|)`
    /// over all half-steps, or zero if the dual never went down.
    pub max_dual_decrease: f64,
}

/// Alternating `(c, τ, ε)`-transforms from `u = 0`.
pub fn sinkhorn_solve(
    prob: &ClassicalProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(ClassicalPotentials, ClassicalSolveReport)> {
    sinkhorn_solve_from(
        prob,
        ClassicalPotentials::zeros(prob),
        &SinkhornOptions { tol, max_iter, ..Default::default() },
    )
}

/// Sinkhorn from an arbitrary starting point. When `max_iter` is exhausted
/// the iterate with the smallest transform residual is returned with
/// `converged = false`.
pub fn sinkhorn_solve_from(
    prob: &ClassicalProblem,
    init: ClassicalPotentials,
    opts: &SinkhornOptions,
) -> Result<(ClassicalPotentials, ClassicalSolveReport)> {
    check_potentials(&init, prob)?;
    check_parameter("tol", opts.tol)?;
    let ClassicalPotentials { mut u, mut v } = init;
    let mut d_prev = dual_unchecked(&u, &v, prob);
    let mut max_drop = 0.0_f64;
    let mut track = |d_new: f64, d_prev: &mut f64| {
        if d_prev.is_finite() && d_new.is_finite() {
            max_drop = max_drop.max((*d_prev - d_new) / (1.0 + d_prev.abs()));
        }
        *d_prev = d_new;
    };
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        iterations = it;
        u = transform_v(&v, prob);
        track(dual_unchecked(&u, &v, prob), &mut d_prev);
        v = transform_u(&u, prob);
        track(dual_unchecked(&u, &v, prob), &mut d_prev);
        if opts.translate {
            let lam = translation(&u, &v, prob);
            u.iter_mut().for_each(|x| *x += lam);
            v.iter_mut().for_each(|x| *x -= lam);
            track(dual_unchecked(&u, &v, prob), &mut d_prev);
        }
        let r = residual_unchecked(&u, &v, prob);
        if !r.is_finite() {
            return Err(Error::NonFinite("Sinkhorn iterate"));
        }
        if best.as_ref().is_none_or(|b| r < b.0) {
            best = Some((r, u.clone(), v.clone()));
        }
        if r <= opts.tol * sup_norm(&u).max(sup_norm(&v)).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        if let Some((_, bu, bv)) = best {
            u = bu;
            v = bv;
        }
    }
    let pots = ClassicalPotentials { u, v };
    let coupling = recover_coupling(&pots, prob)?;
    let primal = primal_value_classical(&coupling, prob);
    let dual = dual_unchecked(&pots.u, &pots.v, prob);
    let report = ClassicalSolveReport {
        iterations,
        converged,
        transform_residual: residual_unchecked(&pots.u, &pots.v, prob),
        primal_value: primal,
        dual_value: dual,
        gap: primal - dual,
        max_dual_decrease: max_drop.max(0.0),
    };
    Ok((pots, report))
}

#[derive(Clone, Debug)]
pub struct OptimalityReport {
    pub transform_residual: f64,
    /// `‖p_X - exp(-u/τ1)‖∞`, the first-order condition on the first marginal.
    pub marginal_residual_x: f64,
    pub marginal_residual_y: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
}

pub fn check_optimality(pots: &ClassicalPotentials, prob: &ClassicalProblem) -> Result<OptimalityReport> {
    let coupling = recover_coupling(pots, prob)?;
    let rx = coupling.p_x.iter().zip(&pots.u).fold(0.0_f64, |a, (p, u)| a.max((p - (-u / prob.tau1).exp()).abs()));
    let ry = coupling.p_y.iter().zip(&pots.v).fold(0.0_f64, |a, (p, v)| a.max((p - (-v / prob.tau2).exp()).abs()));
    let primal = primal_value_classical(&coupling, prob);
    let dual = dual_unchecked(&pots.u, &pots.v, prob);
    Ok(OptimalityReport {
        transform_residual: residual_unchecked(&pots.u, &pots.v, prob),
        marginal_residual_x: rx,
        marginal_residual_y: ry,
        primal_value: primal,
        dual_value: dual,
        gap: primal - dual,
    })
}

/// A-priori interval for a transformed potential. If `D(u, v) ≥ -m`, then
/// every value of the transform lies in `[lower, upper]`, whatever `(u, v)` is.
#[derive(Clone, Copy, Debug)]
pub struct TransformBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Interval for the best response `u = T(v)` when `D(u, v) ≥ -m`.
pub fn u_transform_bounds(prob: &ClassicalProblem, m: f64) -> TransformBounds {
    let (eps, t1, t2) = (prob.epsilon, prob.tau1, prob.tau2);
    let (mx, ny) = (prob.mu.mass(), prob.nu.mass());
    let c = prob.cost_sup();
    let a = m + t1 * mx + t2 * ny;
    let omega1 = t1 * (t1 * mx / a).ln();
    let omega2 = t2 * (t2 * ny / a).ln();
    let k = t1 * eps / (t1 + eps);
    TransformBounds {
        lower: -k * ((a / (eps * mx)).ln() - (omega1 - 2.0 * c) / eps),
        upper: -k * (ny.ln() + (omega2 - c) / eps),
    }
}

/// Interval for the best response `v = T(u)` when `D(u, v) ≥ -m`.
pub fn v_transform_bounds(prob: &ClassicalProblem, m: f64) -> TransformBounds {
    let (eps, t1, t2) = (prob.epsilon, prob.tau1, prob.tau2);
    let (mx, ny) = (prob.mu.mass(), prob.nu.mass());
    let c = prob.cost_sup();
    let a = m + t1 * mx + t2 * ny;
    let omega1 = t1 * (t1 * mx / a).ln();
    let omega2 = t2 * (t2 * ny / a).ln();
    let k = t2 * eps / (t2 + eps);
    TransformBounds {
        lower: -k * ((a / (eps * ny)).ln() - (omega2 - 2.0 * c) / eps),
        upper: -k * (mx.ln() + (omega1 - c) / eps),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob_1x1(c: f64, m1: f64, m2: f64, eps: f64, t1: f64, t2: f64) -> ClassicalProblem {
        ClassicalProblem::new(
            DiscreteMeasure::new(vec![m1]).unwrap(),
            DiscreteMeasure::new(vec![m2]).unwrap(),
            DMatrix::from_element(1, 1, c),
            eps,
            t1,
            t2,
        )
        .unwrap()
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_divergence(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(kl_divergence(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(kl_divergence(&[1.0], &[0.0]).unwrap(), f64::INFINITY);
        let want = 2.0 * 2.0f64.ln() - 2.0 + 1.0;
        assert!((kl_divergence(&[2.0], &[1.0]).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_measure_rejected() {
        assert!(DiscreteMeasure::new(vec![0.0, 0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![-1.0, 2.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 2.0]).is_ok());
    }

    #[test]
    fn zero_potentials_zero_cost() {
        let p = prob_1x1(0.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let d = dual_value_classical(&ClassicalPotentials { u: vec![0.0], v: vec![0.0] }, &p).unwrap();
        assert!((d + 1.0).abs() < 1e-15);
        let v = ctau_transform_of_u(&[0.0], &p).unwrap();
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn balanced_like_scalar_solution() {
        // With c = 0 and unit masses the optimum is p = 1, u = v = 0, value -ε.
        let p = prob_1x1(0.0, 1.0, 1.0, 0.5, 2.0, 3.0);
        let (pots, rep) = sinkhorn_solve(&p, 1e-12, 1000).unwrap();
        assert!(rep.converged);
        assert!(pots.u[0].abs() < 1e-10 && pots.v[0].abs() < 1e-10);
        assert!((rep.primal_value + 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_atoms_are_ignored() {
        let mu = DiscreteMeasure::new(vec![1.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::new(vec![2.0]).unwrap();
        let cost = DMatrix::from_row_slice(2, 1, &[0.3, 1e6]);
        let p = ClassicalProblem::new(mu, nu, cost, 0.2, 1.0, 1.0).unwrap();
        let reduced = prob_1x1(0.3, 1.0, 2.0, 0.2, 1.0, 1.0);
        let (_, r1) = sinkhorn_solve(&p, 1e-12, 10_000).unwrap();
        let (_, r2) = sinkhorn_solve(&reduced, 1e-12, 10_000).unwrap();
        assert!((r1.primal_value - r2.primal_value).abs() < 1e-10);
    }

    #[test]
    fn nonconvergence_returns_best_iterate() {
        let mu = DiscreteMeasure::new(vec![1.0, 2.0, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.7, 1.1]).unwrap();
        let cost = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 2.0, 0.5, 0.1, 0.9]);
        let p = ClassicalProblem::new(mu, nu, cost, 0.05, 5.0, 5.0).unwrap();
        let (_, rep) = sinkhorn_solve(&p, 1e-15, 2).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
    }
}
