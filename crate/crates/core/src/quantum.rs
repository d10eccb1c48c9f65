//! Unbalanced transport between positive semidefinite operators, with the
//! von Neumann entropy as regularizer and Umegaki relative entropies as
//! marginal penalties.

use nalgebra::DMatrix;

use crate::classical::{ClassicalProblem, DiscreteMeasure};
use crate::error::{check_parameter, Error, Result};
use crate::herm::{
    check_psd, entropy_from_eigenvalues, kron_sum, log_of_decomposition, partial_trace, spectral_decompose,
    umegaki_from_parts, BipartiteShape, HermitianOperator, SpectralDecomposition, Subsystem,
};

/// Marginals are floored at this multiple of `Tr Γ` before taking logs.
pub const MARGINAL_FLOOR_REL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct QuantumProblem {
    cost: HermitianOperator,
    rho: HermitianOperator,
    sigma: HermitianOperator,
    epsilon: f64,
    tau1: f64,
    tau2: f64,
    shape: BipartiteShape,
    rho_sd: SpectralDecomposition,
    sigma_sd: SpectralDecomposition,
    log_rho: Option<HermitianOperator>,
    log_sigma: Option<HermitianOperator>,
}

fn positive_trace(what: &'static str, sd: &SpectralDecomposition) -> Result<()> {
    if sd.eigenvalues.iter().sum::<f64>() > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!("{what} has zero trace")))
    }
}

fn pd_log(sd: &SpectralDecomposition) -> Option<HermitianOperator> {
    let scale = sd.max_eigenvalue().max(f64::MIN_POSITIVE);
    if sd.min_eigenvalue() > crate::herm::KERNEL_TOL * scale {
        log_of_decomposition(sd, None).ok()
    } else {
        None
    }
}

impl QuantumProblem {
    pub fn new(
        cost: HermitianOperator,
        rho: HermitianOperator,
        sigma: HermitianOperator,
        epsilon: f64,
        tau1: f64,
        tau2: f64,
    ) -> Result<Self> {
        check_parameter("epsilon", epsilon)?;
        check_parameter("tau1", tau1)?;
        check_parameter("tau2", tau2)?;
        let shape = BipartiteShape::new(rho.dim(), sigma.dim());
        if cost.dim() != shape.total() {
            return Err(Error::DimensionMismatch { expected: shape.total(), found: cost.dim() });
        }
        let rho_sd = check_psd(&rho)?;
        let sigma_sd = check_psd(&sigma)?;
        positive_trace("rho", &rho_sd)?;
        positive_trace("sigma", &sigma_sd)?;
        let log_rho = pd_log(&rho_sd);
        let log_sigma = pd_log(&sigma_sd);
        Ok(Self { cost, rho, sigma, epsilon, tau1, tau2, shape, rho_sd, sigma_sd, log_rho, log_sigma })
    }

    pub fn cost(&self) -> &HermitianOperator {
        &self.cost
    }

    pub fn rho(&self) -> &HermitianOperator {
        &self.rho
    }

    pub fn sigma(&self) -> &HermitianOperator {
        &self.sigma
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

    pub fn shape(&self) -> BipartiteShape {
        self.shape
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_parameter("epsilon", epsilon)?;
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn with_tau(&self, tau1: f64, tau2: f64) -> Result<Self> {
        check_parameter("tau1", tau1)?;
        check_parameter("tau2", tau2)?;
        Ok(Self { tau1, tau2, ..self.clone() })
    }

    /// True when both marginals are positive definite, which the dual and
    /// fixed-point machinery needs.
    pub fn has_definite_marginals(&self) -> bool {
        self.log_rho.is_some() && self.log_sigma.is_some()
    }

    fn logs(&self) -> Result<(&HermitianOperator, &HermitianOperator)> {
        match (&self.log_rho, &self.log_sigma) {
            (Some(a), Some(b)) => Ok((a, b)),
            (None, _) => Err(Error::NotPositiveDefinite { what: "rho", min_eigenvalue: self.rho_sd.min_eigenvalue() }),
            (_, None) => {
                Err(Error::NotPositiveDefinite { what: "sigma", min_eigenvalue: self.sigma_sd.min_eigenvalue() })
            }
        }
    }

    /// The classical instance seen by diagonal couplings when `C`, `ρ`, `σ`
    /// are all diagonal. The von Neumann entropy has no reference measure
    /// while the classical one is taken relative to `μ ⊗ ν`; the difference
    /// is absorbed into the cost as `ε (log μ_i + log ν_j)`.
    pub fn diagonal_reduction(&self) -> Result<ClassicalProblem> {
        let tol = 1e-12 * self.cost.max_abs().max(self.rho.max_abs()).max(self.sigma.max_abs()).max(1.0);
        if !(self.cost.is_diagonal(tol) && self.rho.is_diagonal(tol) && self.sigma.is_diagonal(tol)) {
            return Err(Error::InvalidMeasure("diagonal reduction needs diagonal C, rho and sigma".into()));
        }
        let mu = self.rho.diagonal();
        let nu = self.sigma.diagonal();
        let (d1, d2) = (self.shape.d1, self.shape.d2);
        let cdiag = self.cost.diagonal();
        let ln = |x: f64| if x > 0.0 { x.ln() } else { 0.0 };
        let cost = DMatrix::from_fn(d1, d2, |i, j| cdiag[i * d2 + j] + self.epsilon * (ln(mu[i]) + ln(nu[j])));
        ClassicalProblem::new(
            DiscreteMeasure::new(mu.iter().map(|x| x.max(0.0)).collect())?,
            DiscreteMeasure::new(nu.iter().map(|x| x.max(0.0)).collect())?,
            cost,
            self.epsilon,
            self.tau1,
            self.tau2,
        )
    }
}

/// A positive semidefinite operator on the product space, with its two
/// partial traces.
#[derive(Clone, Debug)]
pub struct CouplingOperator {
    gamma: HermitianOperator,
    gamma1: HermitianOperator,
    gamma2: HermitianOperator,
    sd: SpectralDecomposition,
}

impl CouplingOperator {
    /// Accepts eigenvalues down to `-1e-10` (relative) and clips them to zero.
    pub fn new(gamma: HermitianOperator, shape: BipartiteShape) -> Result<Self> {
        if gamma.dim() != shape.total() {
            return Err(Error::DimensionMismatch { expected: shape.total(), found: gamma.dim() });
        }
        let mut sd = check_psd(&gamma)?;
        let gamma = if sd.min_eigenvalue() < 0.0 {
            sd.eigenvalues.iter_mut().for_each(|x| *x = x.max(0.0));
            sd.reconstruct()
        } else {
            gamma
        };
        let gamma1 = partial_trace(&gamma, shape, Subsystem::First)?;
        let gamma2 = partial_trace(&gamma, shape, Subsystem::Second)?;
        Ok(Self { gamma, gamma1, gamma2, sd })
    }

    pub fn gamma(&self) -> &HermitianOperator {
        &self.gamma
    }

    pub fn gamma1(&self) -> &HermitianOperator {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &HermitianOperator {
        &self.gamma2
    }

    pub fn trace(&self) -> f64 {
        self.gamma.trace()
    }

    pub fn scaled(&self, s: f64, shape: BipartiteShape) -> Result<Self> {
        Self::new(self.gamma.scale(s), shape)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumPotentials {
    pub u: HermitianOperator,
    pub v: HermitianOperator,
}

impl QuantumPotentials {
    pub fn zeros(shape: BipartiteShape) -> Self {
        Self { u: HermitianOperator::zeros(shape.d1), v: HermitianOperator::zeros(shape.d2) }
    }
}

fn check_coupling(g: &CouplingOperator, prob: &QuantumProblem) -> Result<()> {
    if g.gamma.dim() != prob.shape.total() || g.gamma1.dim() != prob.shape.d1 {
        return Err(Error::DimensionMismatch { expected: prob.shape.total(), found: g.gamma.dim() });
    }
    Ok(())
}

/// The four terms of the primal functional.
#[derive(Clone, Copy, Debug)]
pub struct PrimalTerms {
    pub transport: f64,
    pub entropy: f64,
    pub penalty1: f64,
    pub penalty2: f64,
    /// Set when a marginal kernel test landed within two decades of its threshold.
    pub kernel_near_threshold: bool,
}

impl PrimalTerms {
    pub fn total(&self, prob: &QuantumProblem) -> f64 {
        self.transport + prob.epsilon * self.entropy + prob.tau1 * self.penalty1 + prob.tau2 * self.penalty2
    }

    /// The functional with the entropic term removed.
    pub fn unregularized(&self, prob: &QuantumProblem) -> f64 {
        self.transport + prob.tau1 * self.penalty1 + prob.tau2 * self.penalty2
    }

    /// `E[Γ1|ρ] + E[Γ2|σ]`.
    pub fn marginal_residual(&self) -> f64 {
        self.penalty1 + self.penalty2
    }
}

pub fn primal_terms(g: &CouplingOperator, prob: &QuantumProblem) -> Result<PrimalTerms> {
    check_coupling(g, prob)?;
    let s1 = spectral_decompose(&g.gamma1)?;
    let s2 = spectral_decompose(&g.gamma2)?;
    let (e1, k1) = umegaki_from_parts(&s1, &prob.rho_sd, &g.gamma1);
    let (e2, k2) = umegaki_from_parts(&s2, &prob.sigma_sd, &g.gamma2);
    Ok(PrimalTerms {
        transport: prob.cost.trace_product(&g.gamma),
        entropy: entropy_from_eigenvalues(&g.sd.eigenvalues),
        penalty1: e1,
        penalty2: e2,
        kernel_near_threshold: k1.near_threshold || k2.near_threshold,
    })
}

/// `F(Γ) = Tr[CΓ] + ε S[Γ] + τ1 E[Γ1|ρ] + τ2 E[Γ2|σ]`; `+∞` when a
/// marginal leaves the support of `ρ` or `σ`.
pub fn primal_value_quantum(g: &CouplingOperator, prob: &QuantumProblem) -> Result<f64> {
    Ok(primal_terms(g, prob)?.total(prob))
}

fn log_trace_exp(sd: &SpectralDecomposition) -> f64 {
    let m = sd.max_eigenvalue();
    m + sd.eigenvalues.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `D(U, V) = -τ1 Tr[(e^{-U/τ1} - I)ρ] - τ2 Tr[(e^{-V/τ2} - I)σ] - ε Tr[e^{(U⊕V - C)/ε}]`.
pub fn dual_value_quantum(pots: &QuantumPotentials, prob: &QuantumProblem) -> Result<f64> {
    if pots.u.dim() != prob.shape.d1 {
        return Err(Error::DimensionMismatch { expected: prob.shape.d1, found: pots.u.dim() });
    }
    if pots.v.dim() != prob.shape.d2 {
        return Err(Error::DimensionMismatch { expected: prob.shape.d2, found: pots.v.dim() });
    }
    let (eps, t1, t2) = (prob.epsilon, prob.tau1, prob.tau2);
    let su = spectral_decompose(&pots.u)?;
    let sv = spectral_decompose(&pots.v)?;
    let pen1: f64 = su.eigenvalues.iter().zip(su.diagonal_of(&prob.rho)).map(|(l, w)| (-l / t1).exp_m1() * w).sum();
    let pen2: f64 = sv.eigenvalues.iter().zip(sv.diagonal_of(&prob.sigma)).map(|(l, w)| (-l / t2).exp_m1() * w).sum();
    let x = kron_sum(&pots.u, &pots.v).sub(&prob.cost).scale(1.0 / eps);
    let coupling = eps * log_trace_exp(&spectral_decompose(&x)?).exp();
    Ok(-t1 * pen1 - t2 * pen2 - coupling)
}

fn floored_log(h: &HermitianOperator, delta: f64) -> Result<HermitianOperator> {
    log_of_decomposition(&spectral_decompose(h)?, Some(delta))
}

/// `Ũ = τ1 (log ρ - log Γ1)`, `Ṽ = τ2 (log σ - log Γ2)`: the maximizers of
/// the penalty conjugates at the marginals of `Γ`. Requires `ρ, σ ≻ 0`.
pub fn potentials_from_coupling(g: &CouplingOperator, prob: &QuantumProblem) -> Result<QuantumPotentials> {
    check_coupling(g, prob)?;
    let (log_rho, log_sigma) = prob.logs()?;
    let delta = MARGINAL_FLOOR_REL * g.trace().max(f64::MIN_POSITIVE);
    let l1 = floored_log(&g.gamma1, delta)?;
    let l2 = floored_log(&g.gamma2, delta)?;
    Ok(QuantumPotentials { u: log_rho.sub(&l1).scale(prob.tau1), v: log_sigma.sub(&l2).scale(prob.tau2) })
}

/// `Φ(Γ) = exp((Ũ ⊕ Ṽ - C)/ε)` with `(Ũ, Ṽ)` from [`potentials_from_coupling`].
pub fn fixed_point_map(g: &CouplingOperator, prob: &QuantumProblem) -> Result<CouplingOperator> {
    let pots = potentials_from_coupling(g, prob)?;
    let x = kron_sum(&pots.u, &pots.v).sub(&prob.cost).scale(1.0 / prob.epsilon);
    let sd = spectral_decompose(&x)?;
    let out = sd.map(f64::exp);
    if out.max_abs().is_infinite() {
        return Err(Error::NonFinite("fixed-point image"));
    }
    CouplingOperator::new(out, prob.shape)
}

/// `∇F(Γ) = C + ε log Γ + τ1 (log Γ1 - log ρ) ⊗ I + I ⊗ τ2 (log Γ2 - log σ)`,
/// with `Γ` and its marginals floored at `1e-12 Tr Γ`.
pub fn gradient_primal(g: &CouplingOperator, prob: &QuantumProblem) -> Result<HermitianOperator> {
    check_coupling(g, prob)?;
    let (log_rho, log_sigma) = prob.logs()?;
    let delta = MARGINAL_FLOOR_REL * g.trace().max(f64::MIN_POSITIVE);
    let lg = log_of_decomposition(&g.sd, Some(delta))?;
    let a = floored_log(&g.gamma1, delta)?.sub(log_rho).scale(prob.tau1);
    let b = floored_log(&g.gamma2, delta)?.sub(log_sigma).scale(prob.tau2);
    Ok(prob.cost.add(&lg.scale(prob.epsilon)).add(&kron_sum(&a, &b)))
}

/// Fenchel–Young gap `Θ(Z) + Θ*(-Γ) + Tr[ΓZ]` for the entropic part, with
/// `Θ(Z) = ε Tr[e^{(-Z-C)/ε}]` and `Θ*(-Γ) = Tr[CΓ] + ε S[Γ]`.
/// Nonnegative, and zero exactly at `Z = -C - ε log Γ`.
pub fn fenchel_residual(z: &HermitianOperator, g: &CouplingOperator, prob: &QuantumProblem) -> Result<f64> {
    check_coupling(g, prob)?;
    if z.dim() != prob.shape.total() {
        return Err(Error::DimensionMismatch { expected: prob.shape.total(), found: z.dim() });
    }
    let eps = prob.epsilon;
    let w = z.add(&prob.cost).scale(-1.0 / eps);
    let theta = eps * log_trace_exp(&spectral_decompose(&w)?).exp();
    let theta_star = prob.cost.trace_product(&g.gamma) + eps * entropy_from_eigenvalues(&g.sd.eigenvalues);
    Ok(theta + theta_star + g.gamma.trace_product(z))
}

#[derive(Clone, Debug)]
pub struct QuantumSolverConfig {
    /// Multiplier in `(0, 1]` on the per-block relaxations `ε/(ε + τ_i)`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Sweeps without a 1% gradient improvement before switching to
    /// gradient descent on `log Γ`.
    pub stall_window: usize,
    pub record_trace: bool,
}

impl Default for QuantumSolverConfig {
    fn default() -> Self {
        Self { damping: 1.0, tol: 1e-9, max_iter: 50_000, stall_window: 5_000, record_trace: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub primal_value: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub struct QuantumSolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖Γ - Φ(Γ)‖_F`.
    pub fixed_point_residual: f64,
    pub gradient_norm: f64,
    pub primal_value: f64,
    /// `D(Ũ, Ṽ)` at the potentials read off the final coupling.
    pub dual_value: f64,
    pub gap: f64,
    /// Smallest relaxation factor applied by an accepted sweep.
    pub damping_used: f64,
    pub rejected_steps: usize,
    pub fallback_used: bool,
    /// Largest relative increase of `F` between accepted iterates.
    pub max_primal_increase: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug)]
pub struct QuantumSolution {
    pub coupling: CouplingOperator,
    /// Final iterate, suitable as a warm start for a nearby problem.
    pub potentials: QuantumPotentials,
    pub report: QuantumSolveReport,
}

/// Everything the solver needs about `Γ = exp(X)`. Quantities marked
/// `hat` belong to `exp(X - shift)`, which keeps the exponentials finite.
#[derive(Clone)]
struct Point {
    x: SpectralDecomposition,
    shift: f64,
    ghat: HermitianOperator,
    g1hat: SpectralDecomposition,
    g2hat: SpectralDecomposition,
    log_g1hat: HermitianOperator,
    log_g2hat: HermitianOperator,
    trhat: f64,
    transport_hat: f64,
    cross1_hat: f64,
    cross2_hat: f64,
    f: f64,
    /// Rounding scale of `f`: the sum of the magnitudes of its parts.
    f_noise: f64,
}

struct Context<'a> {
    prob: &'a QuantumProblem,
    log_rho: &'a HermitianOperator,
    log_sigma: &'a HermitianOperator,
    tr_rho: f64,
    tr_sigma: f64,
}

impl<'a> Context<'a> {
    fn new(prob: &'a QuantumProblem) -> Result<Self> {
        let (log_rho, log_sigma) = prob.logs()?;
        Ok(Self { prob, log_rho, log_sigma, tr_rho: prob.rho.trace(), tr_sigma: prob.sigma.trace() })
    }

    fn point(&self, x_op: &HermitianOperator) -> Result<Point> {
        let shape = self.prob.shape;
        let x = spectral_decompose(x_op)?;
        let shift = x.max_eigenvalue();
        let ghat = x.map(|l| (l - shift).exp());
        let trhat = ghat.trace();
        let delta = MARGINAL_FLOOR_REL * trhat;
        let g1hat = spectral_decompose(&partial_trace(&ghat, shape, Subsystem::First)?)?;
        let g2hat = spectral_decompose(&partial_trace(&ghat, shape, Subsystem::Second)?)?;
        let log_g1hat = g1hat.map(|l| l.max(delta).ln());
        let log_g2hat = g2hat.map(|l| l.max(delta).ln());
        let transport_hat = self.prob.cost.trace_product(&ghat);
        let cross1_hat: f64 = g1hat.eigenvalues.iter().zip(g1hat.diagonal_of(self.log_rho)).map(|(a, b)| a * b).sum();
        let cross2_hat: f64 = g2hat.eigenvalues.iter().zip(g2hat.diagonal_of(self.log_sigma)).map(|(a, b)| a * b).sum();
        let mut p = Point {
            x,
            shift,
            ghat,
            g1hat,
            g2hat,
            log_g1hat,
            log_g2hat,
            trhat,
            transport_hat,
            cross1_hat,
            cross2_hat,
            f: 0.0,
            f_noise: 0.0,
        };
        (p.f, p.f_noise) = self.objective(&p);
        Ok(p)
    }

    fn objective(&self, p: &Point) -> (f64, f64) {
        let prob = self.prob;
        let es = p.shift.exp();
        let delta = MARGINAL_FLOOR_REL * p.trhat;
        let self_term = |sd: &SpectralDecomposition| -> f64 {
            sd.eigenvalues.iter().map(|&g| if g > 0.0 { g * (g.max(delta).ln() + p.shift) } else { 0.0 }).sum()
        };
        let ent: f64 = p.x.eigenvalues.iter().map(|&l| l.exp() * (l - 1.0)).sum();
        let ent_abs: f64 = p.x.eigenvalues.iter().map(|&l| (l.exp() * (l - 1.0)).abs()).sum();
        let (s1, s2) = (self_term(&p.g1hat), self_term(&p.g2hat));
        let e1 = es * (s1 - p.cross1_hat - p.trhat) + self.tr_rho;
        let e2 = es * (s2 - p.cross2_hat - p.trhat) + self.tr_sigma;
        let f = es * p.transport_hat + prob.epsilon * ent + prob.tau1 * e1 + prob.tau2 * e2;
        let noise = es * p.transport_hat.abs()
            + prob.epsilon * ent_abs
            + prob.tau1 * (es * (s1.abs() + p.cross1_hat.abs() + p.trhat) + self.tr_rho)
            + prob.tau2 * (es * (s2.abs() + p.cross2_hat.abs() + p.trhat) + self.tr_sigma);
        if f.is_nan() {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (f, 64.0 * f64::EPSILON * noise)
        }
    }

    /// `Γ → e^t Γ` without a new eigensolve.
    fn rescaled(&self, p: &Point, t: f64) -> Point {
        let mut q = p.clone();
        q.x.eigenvalues.iter_mut().for_each(|l| *l += t);
        q.shift += t;
        (q.f, q.f_noise) = self.objective(&q);
        q
    }

    fn u_tilde(&self, p: &Point) -> HermitianOperator {
        self.log_rho.sub(&p.log_g1hat).add_identity(-p.shift).scale(self.prob.tau1)
    }

    fn v_tilde(&self, p: &Point) -> HermitianOperator {
        self.log_sigma.sub(&p.log_g2hat).add_identity(-p.shift).scale(self.prob.tau2)
    }

    /// Exact minimizer of `t ↦ F(tΓ)`, returned as `log t`.
    fn mass_step(&self, p: &Point) -> f64 {
        let prob = self.prob;
        let mass = p.shift.exp() * p.trhat;
        let a = p.f - prob.tau1 * self.tr_rho - prob.tau2 * self.tr_sigma;
        let k = (prob.epsilon + prob.tau1 + prob.tau2) * mass;
        let lt = -a / k - 1.0;
        if lt.is_finite() {
            lt
        } else {
            0.0
        }
    }

    fn x_of(&self, u: &HermitianOperator, v: &HermitianOperator) -> HermitianOperator {
        kron_sum(u, v).sub(&self.prob.cost).scale(1.0 / self.prob.epsilon)
    }

    /// `∇F` at a general `Γ = exp(X)`.
    fn gradient(&self, p: &Point) -> HermitianOperator {
        let prob = self.prob;
        let a = p.log_g1hat.add_identity(p.shift).sub(self.log_rho).scale(prob.tau1);
        let b = p.log_g2hat.add_identity(p.shift).sub(self.log_sigma).scale(prob.tau2);
        let x = p.x.reconstruct();
        prob.cost.add(&x.scale(prob.epsilon)).add(&kron_sum(&a, &b))
    }
}

/// `‖A ⊗ I + I ⊗ B‖_F` without forming the Kronecker sum.
fn kron_sum_norm(a: &HermitianOperator, b: &HermitianOperator) -> f64 {
    let (d1, d2) = (a.dim() as f64, b.dim() as f64);
    let sq = d2 * a.trace_product(a) + d1 * b.trace_product(b) + 2.0 * a.trace() * b.trace();
    sq.max(0.0).sqrt()
}

/// Damped alternating potential updates from `Γ⁰ ∝ exp(-C/ε)` with
/// `Tr Γ⁰ = sqrt(Tr ρ Tr σ)`.
pub fn solve_uqot(
    prob: &QuantumProblem,
    config: &QuantumSolverConfig,
) -> Result<(CouplingOperator, QuantumSolveReport)> {
    let sol = solve_uqot_from(prob, config, None)?;
    Ok((sol.coupling, sol.report))
}

/// Initial potentials for the default start `Γ⁰`.
pub fn initial_potentials(prob: &QuantumProblem) -> Result<QuantumPotentials> {
    let x = spectral_decompose(&prob.cost.scale(-1.0 / prob.epsilon))?;
    let k = 0.5 * (prob.rho.trace() * prob.sigma.trace()).ln() - log_trace_exp(&x);
    Ok(QuantumPotentials {
        u: HermitianOperator::identity(prob.shape.d1).scale(k * prob.epsilon),
        v: HermitianOperator::zeros(prob.shape.d2),
    })
}

/// Solver with an optional warm start.
///
/// Each sweep relaxes `U` towards `Ũ` with factor `ω ε/(ε+τ1)`, then `V`
/// towards `Ṽ` with `ω ε/(ε+τ2)`, then rescales `Γ` by the exact
/// minimizer of `t ↦ F(tΓ)`. In the commuting case the two relaxations
/// are exact block updates of classical unbalanced Sinkhorn. A sweep that
/// raises `F` is replaced by a joint update of both potentials with the
/// smaller factor; if that also fails `ω` is halved. `ω` grows back after
/// a run of accepted sweeps. If the gradient stops improving the solver continues
/// with gradient descent on `log Γ` under a backtracking line search.
pub fn solve_uqot_from(
    prob: &QuantumProblem,
    config: &QuantumSolverConfig,
    init: Option<&QuantumPotentials>,
) -> Result<QuantumSolution> {
    check_parameter("tol", config.tol)?;
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(Error::NonPositiveParameter { name: "damping", value: config.damping });
    }
    let ctx = Context::new(prob)?;
    let eps = prob.epsilon;
    let theta1 = eps / (eps + prob.tau1);
    let theta2 = eps / (eps + prob.tau2);

    let start = match init {
        Some(p) => {
            if p.u.dim() != prob.shape.d1 || p.v.dim() != prob.shape.d2 {
                return Err(Error::DimensionMismatch { expected: prob.shape.d1, found: p.u.dim() });
            }
            p.clone()
        }
        None => initial_potentials(prob)?,
    };
    let (mut u, mut v) = (start.u, start.v);
    let mut cur = ctx.point(&ctx.x_of(&u, &v))?;
    // A warm start may be badly scaled for the new parameters.
    let lt = ctx.mass_step(&cur);
    let scaled = ctx.rescaled(&cur, lt);
    if scaled.f <= cur.f {
        cur = scaled;
        u = u.add_identity(0.5 * eps * lt);
        v = v.add_identity(0.5 * eps * lt);
    }

    let mut omega = config.damping;
    let mut omega_min = omega;
    let mut accepted_run = 0usize;
    let mut rejected = 0usize;
    let mut max_increase = 0.0_f64;
    let mut best_grad = f64::INFINITY;
    let mut last_improvement = 0usize;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut fallback = false;
    let mut iterations = 0usize;
    let mut grad_norm;

    loop {
        grad_norm = kron_sum_norm(&u.sub(&ctx.u_tilde(&cur)), &v.sub(&ctx.v_tilde(&cur)));
        if config.record_trace {
            trace.push(TracePoint { iteration: iterations, primal_value: cur.f, gradient_norm: grad_norm });
        }
        if grad_norm <= config.tol * (1.0 + cur.f.abs()) {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        if grad_norm < 0.99 * best_grad {
            best_grad = grad_norm;
            last_improvement = iterations;
        }
        if iterations - last_improvement >= config.stall_window || omega < 1e-12 {
            fallback = true;
            break;
        }
        iterations += 1;

        let w1 = omega * theta1;
        let u1 = u.lin_comb(1.0 - w1, &ctx.u_tilde(&cur), w1);
        let p1 = ctx.point(&ctx.x_of(&u1, &v))?;
        let w2 = omega * theta2;
        let v1 = v.lin_comb(1.0 - w2, &ctx.v_tilde(&p1), w2);
        let p2 = ctx.point(&ctx.x_of(&u1, &v1))?;
        let lt = ctx.mass_step(&p2);
        let p3 = ctx.rescaled(&p2, lt);

        let accept = |p: &Point, cur: &Point| p.f.is_finite() && p.f <= cur.f + cur.f_noise.max(p.f_noise);
        let mut step = accept(&p3, &cur).then_some((u1, v1, p3, lt));
        if step.is_none() {
            // Away from the commuting case a block update need not lower F.
            // Moving both potentials with one weight follows -∇F through the
            // positive derivative of exp, so it does for small ω.
            let w = omega * theta1.min(theta2);
            let uj = u.lin_comb(1.0 - w, &ctx.u_tilde(&cur), w);
            let vj = v.lin_comb(1.0 - w, &ctx.v_tilde(&cur), w);
            let pj = ctx.point(&ctx.x_of(&uj, &vj))?;
            let lj = ctx.mass_step(&pj);
            let pj = ctx.rescaled(&pj, lj);
            if accept(&pj, &cur) {
                step = Some((uj, vj, pj, lj));
            }
        }
        match step {
            Some((u1, v1, p, lt)) => {
                max_increase = max_increase.max((p.f - cur.f) / (1.0 + cur.f.abs()));
                u = u1.add_identity(0.5 * eps * lt);
                v = v1.add_identity(0.5 * eps * lt);
                cur = p;
                omega_min = omega_min.min(omega);
                accepted_run += 1;
                if accepted_run >= 20 && omega < config.damping {
                    omega = (2.0 * omega).min(config.damping);
                    accepted_run = 0;
                }
            }
            None => {
                rejected += 1;
                accepted_run = 0;
                omega *= 0.5;
            }
        }
    }

    if fallback {
        let (p, it, conv, gn, inc) = gradient_descent(&ctx, cur, config, iterations, &mut trace)?;
        cur = p;
        iterations = it;
        converged = conv;
        grad_norm = gn;
        max_increase = max_increase.max(inc);
    }

    let es = cur.shift.exp();
    let coupling = CouplingOperator::new(cur.ghat.scale(es), prob.shape)?;
    let primal = primal_value_quantum(&coupling, prob)?;
    let certificate = potentials_from_coupling(&coupling, prob)?;
    let dual = dual_value_quantum(&certificate, prob)?;
    let fixed_point_residual = match fixed_point_map(&coupling, prob) {
        Ok(phi) => phi.gamma.sub(&coupling.gamma).frobenius_norm(),
        Err(_) => f64::INFINITY,
    };
    let potentials = if fallback { certificate } else { QuantumPotentials { u, v } };
    Ok(QuantumSolution {
        coupling,
        potentials,
        report: QuantumSolveReport {
            iterations,
            converged,
            fixed_point_residual,
            gradient_norm: grad_norm,
            primal_value: primal,
            dual_value: dual,
            gap: primal - dual,
            damping_used: omega_min * theta1.max(theta2),
            rejected_steps: rejected,
            fallback_used: fallback,
            max_primal_increase: max_increase,
            trace,
        },
    })
}

type DescentOutcome = (Point, usize, bool, f64, f64);

fn gradient_descent(
    ctx: &Context<'_>,
    start: Point,
    config: &QuantumSolverConfig,
    mut iterations: usize,
    trace: &mut Vec<TracePoint>,
) -> Result<DescentOutcome> {
    let prob = ctx.prob;
    let mut cur = start;
    let mut step = 1.0 / ((prob.epsilon + prob.tau1 + prob.tau2) * cur.shift.exp());
    loop {
        let g = ctx.gradient(&cur);
        let gn = g.frobenius_norm();
        if config.record_trace {
            trace.push(TracePoint { iteration: iterations, primal_value: cur.f, gradient_norm: gn });
        }
        if gn <= config.tol * (1.0 + cur.f.abs()) {
            return Ok((cur, iterations, true, gn, 0.0));
        }
        if iterations >= config.max_iter {
            return Ok((cur, iterations, false, gn, 0.0));
        }
        iterations += 1;
        let x = cur.x.reconstruct();
        let mut accepted = None;
        for _ in 0..60 {
            let cand = ctx.point(&x.lin_comb(1.0, &g, -step))?;
            if cand.f < cur.f {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(p) => {
                cur = p;
                step *= 1.5;
            }
            // No decrease at any step length: numerically stationary.
            None => return Ok((cur, iterations, false, gn, 0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::herm::C64;

    fn diag(v: &[f64]) -> HermitianOperator {
        HermitianOperator::from_diagonal(v)
    }

    fn small_problem() -> QuantumProblem {
        #[rustfmt::skip]
        let c = HermitianOperator::from_row_major(4, &[
            C64::new(0.0, 0.0), C64::new(0.3, 0.1), C64::new(0.0, 0.0), C64::new(0.2, 0.0),
            C64::new(0.3, -0.1), C64::new(1.0, 0.0), C64::new(0.1, 0.2), C64::new(0.0, 0.0),
            C64::new(0.0, 0.0), C64::new(0.1, -0.2), C64::new(0.5, 0.0), C64::new(0.0, 0.1),
            C64::new(0.2, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -0.1), C64::new(0.2, 0.0),
        ])
        .unwrap();
        #[rustfmt::skip]
        let rho = HermitianOperator::from_row_major(2, &[
            C64::new(0.7, 0.0), C64::new(0.1, 0.1), C64::new(0.1, -0.1), C64::new(0.5, 0.0),
        ])
        .unwrap();
        QuantumProblem::new(c, rho, diag(&[0.4, 0.9]), 0.5, 1.0, 2.0).unwrap()
    }

    #[test]
    fn zero_coupling_value() {
        let p = small_problem();
        let g = CouplingOperator::new(HermitianOperator::zeros(4), p.shape()).unwrap();
        let f = primal_value_quantum(&g, &p).unwrap();
        assert!((f - (1.0 * 1.2 + 2.0 * 1.3)).abs() < 1e-12);
    }

    #[test]
    fn zero_potentials_dual() {
        let p = small_problem();
        let d = dual_value_quantum(&QuantumPotentials::zeros(p.shape()), &p).unwrap();
        let e = crate::herm::apply_spectral_function(&p.cost().scale(-2.0), f64::exp, None).unwrap();
        assert!((d + 0.5 * e.trace()).abs() < 1e-12);
    }

    #[test]
    fn matched_marginals_give_zero_potentials() {
        let p = small_problem();
        let g = CouplingOperator::new(p.rho().kron(p.sigma()).scale(1.0 / 1.3), p.shape()).unwrap();
        // Γ1 = ρ Tr σ / 1.3 = ρ; Γ2 = σ Tr ρ / 1.3 ≠ σ in general.
        let pots = potentials_from_coupling(&g, &p).unwrap();
        assert!(pots.u.frobenius_norm() < 1e-12);
    }

    #[test]
    fn doubling_shifts_potentials() {
        let p = small_problem();
        let g = CouplingOperator::new(p.rho().kron(p.sigma()), p.shape()).unwrap();
        let g2 = g.scaled(2.0, p.shape()).unwrap();
        let a = potentials_from_coupling(&g, &p).unwrap();
        let b = potentials_from_coupling(&g2, &p).unwrap();
        let want = a.u.add_identity(-p.tau1() * 2f64.ln());
        assert!(b.u.sub(&want).frobenius_norm() < 1e-12);
    }

    #[test]
    fn non_psd_coupling_rejected() {
        let p = small_problem();
        assert!(matches!(CouplingOperator::new(diag(&[1.0, -0.5, 1.0, 1.0]), p.shape()), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn singular_marginal_rejected_for_potentials() {
        let c = HermitianOperator::zeros(4);
        let p = QuantumProblem::new(c, diag(&[1.0, 0.0]), diag(&[1.0, 1.0]), 1.0, 1.0, 1.0).unwrap();
        let g = CouplingOperator::new(HermitianOperator::identity(4), p.shape()).unwrap();
        assert!(matches!(potentials_from_coupling(&g, &p), Err(Error::NotPositiveDefinite { what: "rho", .. })));
        // The primal still evaluates, to +∞ since Γ1 charges ker ρ.
        assert_eq!(primal_value_quantum(&g, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn solver_converges_and_certifies() {
        let p = small_problem();
        let (g, rep) = solve_uqot(&p, &QuantumSolverConfig { tol: 1e-11, ..Default::default() }).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.gap >= -1e-8);
        assert!(rep.max_primal_increase <= 1e-13);
        let grad = gradient_primal(&g, &p).unwrap();
        assert!(grad.frobenius_norm() < 1e-8);
        assert!(rep.fixed_point_residual < 1e-8);
    }

    #[test]
    fn fallback_path_reaches_the_same_minimum() {
        let p = small_problem();
        let cfg = QuantumSolverConfig { tol: 1e-10, ..Default::default() };
        let (_, reference) = solve_uqot(&p, &cfg).unwrap();
        let forced = QuantumSolverConfig { stall_window: 0, max_iter: 20_000, ..cfg };
        let (_, rep) = solve_uqot(&p, &forced).unwrap();
        assert!(rep.fallback_used);
        assert!((rep.primal_value - reference.primal_value).abs() < 1e-7 * (1.0 + reference.primal_value.abs()));
    }
}
