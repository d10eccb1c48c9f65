//! Parameter sweeps for the two variational limits of the quantum problem:
//! vanishing regularization `ε → 0` and hard marginals `τ1 = τ2 = τ → ∞`.

use crate::error::{Error, Result};
use crate::herm::{spectral_decompose, HermitianOperator};
use crate::quantum::{
    primal_terms, solve_uqot_from, CouplingOperator, QuantumPotentials, QuantumProblem, QuantumSolverConfig,
};

/// Trace agreement required for sweeps towards hard marginals.
pub const TRACE_MATCH_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Epsilon,
    Tau,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Tau => "tau",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    parameter: SweepParameter,
    values: Vec<f64>,
    base: QuantumProblem,
}

pub const DEFAULT_EPSILONS: [f64; 7] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001];
pub const DEFAULT_TAUS: [f64; 7] = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];

fn check_traces(prob: &QuantumProblem) -> Result<()> {
    let (a, b) = (prob.rho().trace(), prob.sigma().trace());
    if (a - b).abs() > TRACE_MATCH_TOL * a.max(b).max(1.0) {
        return Err(Error::TraceMismatch { mass1: a, mass2: b });
    }
    Ok(())
}

impl Schedule {
    /// `ε` schedules must decrease strictly and `τ` schedules increase
    /// strictly; `τ` schedules also need `Tr ρ = Tr σ`.
    pub fn new(parameter: SweepParameter, values: Vec<f64>, base: QuantumProblem) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSchedule("no values".into()));
        }
        if let Some(x) = values.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::InvalidSchedule(format!("value {x} is not positive")));
        }
        let ordered = values.windows(2).all(|w| match parameter {
            SweepParameter::Epsilon => w[1] < w[0],
            SweepParameter::Tau => w[1] > w[0],
        });
        if !ordered {
            let dir = if parameter == SweepParameter::Epsilon { "decreasing" } else { "increasing" };
            return Err(Error::InvalidSchedule(format!("{} values must be strictly {dir}", parameter.name())));
        }
        if parameter == SweepParameter::Tau {
            check_traces(&base)?;
        }
        Ok(Self { parameter, values, base })
    }

    pub fn default_epsilon(base: QuantumProblem) -> Result<Self> {
        Self::new(SweepParameter::Epsilon, DEFAULT_EPSILONS.to_vec(), base)
    }

    pub fn default_tau(base: QuantumProblem) -> Result<Self> {
        Self::new(SweepParameter::Tau, DEFAULT_TAUS.to_vec(), base)
    }

    pub fn parameter(&self) -> SweepParameter {
        self.parameter
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn base(&self) -> &QuantumProblem {
        &self.base
    }

    pub fn problem_at(&self, value: f64) -> Result<QuantumProblem> {
        match self.parameter {
            SweepParameter::Epsilon => self.base.with_epsilon(value),
            SweepParameter::Tau => self.base.with_tau(value, value),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub parameter: f64,
    /// Value of the regularized functional at the computed minimizer.
    pub min_value: f64,
    /// The same coupling evaluated with the entropic term dropped.
    pub unregularized_value: f64,
    /// `E[Γ1|ρ] + E[Γ2|σ]`.
    pub marginal_residual: f64,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    /// Frobenius distance to the previous point's minimizer.
    pub coupling_step: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub records: Vec<SweepRecord>,
    /// Three-point polynomial extrapolation of the minima to the limit
    /// (`ε = 0`, or `1/τ = 0`). An estimate: no convergence rate is known.
    pub limit_estimate: Option<f64>,
    /// The values the extrapolation used.
    pub tail_values: Vec<f64>,
    /// `|min_{k+1} - min_k|` between consecutive successful points.
    pub cauchy_residuals: Vec<f64>,
}

impl SweepReport {
    pub fn all_converged(&self) -> bool {
        self.records.iter().all(|r| r.converged)
    }
}

/// Value at `0` of the quadratic through three points.
pub fn extrapolate_to_zero(xs: [f64; 3], ys: [f64; 3]) -> f64 {
    let mut out = 0.0;
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if i != j {
                w *= (0.0 - xs[j]) / (xs[i] - xs[j]);
            }
        }
        out += w * ys[i];
    }
    out
}

struct PointResult {
    record: SweepRecord,
    coupling: Option<CouplingOperator>,
    potentials: Option<QuantumPotentials>,
}

fn solve_point(
    sched: &Schedule,
    value: f64,
    config: &QuantumSolverConfig,
    warm: Option<&QuantumPotentials>,
) -> PointResult {
    let attempt = || -> Result<(SweepRecord, CouplingOperator, QuantumPotentials)> {
        let prob = sched.problem_at(value)?;
        let sol = solve_uqot_from(&prob, config, warm)?;
        let terms = primal_terms(&sol.coupling, &prob)?;
        let record = SweepRecord {
            parameter: value,
            min_value: sol.report.primal_value,
            unregularized_value: terms.unregularized(&prob),
            marginal_residual: terms.marginal_residual(),
            iterations: sol.report.iterations,
            gap: sol.report.gap,
            converged: sol.report.converged,
            coupling_step: None,
            error: None,
        };
        Ok((record, sol.coupling, sol.potentials))
    };
    match attempt() {
        Ok((record, c, p)) => PointResult { record, coupling: Some(c), potentials: Some(p) },
        Err(e) => PointResult {
            record: SweepRecord {
                parameter: value,
                min_value: f64::NAN,
                unregularized_value: f64::NAN,
                marginal_residual: f64::NAN,
                iterations: 0,
                gap: f64::NAN,
                converged: false,
                coupling_step: None,
                error: Some(e.to_string()),
            },
            coupling: None,
            potentials: None,
        },
    }
}

fn run_chain(
    sched: &Schedule,
    values: &[f64],
    config: &QuantumSolverConfig,
    mut warm: Option<QuantumPotentials>,
) -> Vec<PointResult> {
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let r = solve_point(sched, value, config, warm.as_ref());
        if let Some(p) = &r.potentials {
            warm = Some(p.clone());
        }
        out.push(r);
    }
    out
}

/// Solves every schedule point, warm-starting each from its predecessor.
///
/// With `threads > 1` the points after the first are split into that many
/// contiguous chains, each seeded from the first point's solution and run
/// on its own thread. The output depends on `threads` but is deterministic
/// for a fixed value.
pub fn sweep(sched: &Schedule, config: &QuantumSolverConfig, threads: usize) -> Result<SweepReport> {
    let values = sched.values();
    let first = solve_point(sched, values[0], config, None);
    let seed = first.potentials.clone();
    let rest = &values[1..];
    let chains = threads.max(1).min(rest.len().max(1));
    let mut results = vec![first];
    if chains <= 1 {
        results.extend(run_chain(sched, rest, config, seed));
    } else {
        let size = rest.len().div_ceil(chains);
        let parts: Vec<Vec<PointResult>> = std::thread::scope(|s| {
            let handles: Vec<_> = rest
                .chunks(size)
                .map(|chunk| {
                    let seed = seed.clone();
                    s.spawn(move || run_chain(sched, chunk, config, seed))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep chain panicked")).collect()
        });
        results.extend(parts.into_iter().flatten());
    }

    for k in 1..results.len() {
        if let (Some(a), Some(b)) = (&results[k - 1].coupling, &results[k].coupling) {
            let step = a.gamma().sub(b.gamma()).frobenius_norm();
            results[k].record.coupling_step = Some(step);
        }
    }
    let records: Vec<SweepRecord> = results.into_iter().map(|r| r.record).collect();

    let good: Vec<&SweepRecord> = records.iter().filter(|r| r.error.is_none() && r.min_value.is_finite()).collect();
    let cauchy_residuals = good.windows(2).map(|w| (w[1].min_value - w[0].min_value).abs()).collect();
    let x_of = |r: &SweepRecord| match sched.parameter {
        SweepParameter::Epsilon => r.parameter,
        SweepParameter::Tau => 1.0 / r.parameter,
    };
    let (limit_estimate, tail_values) = if good.len() >= 3 {
        let t = &good[good.len() - 3..];
        let xs = [x_of(t[0]), x_of(t[1]), x_of(t[2])];
        let ys = [t[0].min_value, t[1].min_value, t[2].min_value];
        (Some(extrapolate_to_zero(xs, ys)), ys.to_vec())
    } else {
        (None, good.iter().map(|r| r.min_value).collect())
    };
    Ok(SweepReport { parameter: sched.parameter, records, limit_estimate, tail_values, cauchy_residuals })
}

/// `ε → 0` with `τ1, τ2` fixed; the limit estimate targets the minimum of
/// the unregularized functional.
pub fn epsilon_sweep(sched: &Schedule, config: &QuantumSolverConfig) -> Result<SweepReport> {
    if sched.parameter != SweepParameter::Epsilon {
        return Err(Error::InvalidSchedule("expected an epsilon schedule".into()));
    }
    sweep(sched, config, 1)
}

/// `τ1 = τ2 = τ → ∞` with `ε` fixed; the limit estimate targets the
/// minimum over couplings with marginals exactly `ρ` and `σ`.
pub fn tau_sweep(sched: &Schedule, config: &QuantumSolverConfig) -> Result<SweepReport> {
    if sched.parameter != SweepParameter::Tau {
        return Err(Error::InvalidSchedule("expected a tau schedule".into()));
    }
    sweep(sched, config, 1)
}

/// Penalty strength used for the balanced reference, reached by continuation.
pub const BALANCED_TAUS: [f64; 3] = [1e2, 1e3, 1e4];
/// Residual above which the balanced reference is flagged.
pub const BALANCED_RESIDUAL_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct BalancedReference {
    pub value: f64,
    /// `E[Γ1|ρ] + E[Γ2|σ]` at the final penalty strength.
    pub marginal_residual: f64,
    /// False when the residual exceeds [`BALANCED_RESIDUAL_TOL`] or a solve
    /// did not converge.
    pub trusted: bool,
    pub iterations: usize,
}

/// Approximates the hard-marginal minimum by solving with `τ = 1e4`,
/// continued from `τ = 1e2`.
pub fn balanced_reference(prob: &QuantumProblem, config: &QuantumSolverConfig) -> Result<BalancedReference> {
    check_traces(prob)?;
    let mut warm: Option<QuantumPotentials> = None;
    let mut iterations = 0;
    let mut all_converged = true;
    let mut last = None;
    for &tau in &BALANCED_TAUS {
        let p = prob.with_tau(tau, tau)?;
        let sol = solve_uqot_from(&p, config, warm.as_ref())?;
        iterations += sol.report.iterations;
        all_converged &= sol.report.converged;
        let terms = primal_terms(&sol.coupling, &p)?;
        last = Some((sol.report.primal_value, terms.marginal_residual()));
        warm = Some(sol.potentials);
    }
    let (value, marginal_residual) = last.expect("at least one continuation step");
    Ok(BalancedReference {
        value,
        marginal_residual,
        trusted: all_converged && marginal_residual <= BALANCED_RESIDUAL_TOL,
        iterations,
    })
}

#[derive(Clone, Debug)]
pub struct CoercivityProbe {
    pub scales: Vec<f64>,
    pub grid: Vec<(f64, f64)>,
    /// `values[s][g]` is `F` at scale `scales[s]` and grid point `grid[g]`.
    pub values: Vec<Vec<f64>>,
    /// Lower bound `-ε d1 d2 - ‖C‖ Tr[sΓ]` at each entry.
    pub lower_bounds: Vec<Vec<f64>>,
    pub lower_bound_violations: usize,
    /// `min_g F(s_max Γ) / max_g |F(s_min Γ)|`.
    pub growth_ratio: f64,
}

impl CoercivityProbe {
    /// Growth of at least a factor 10, uniformly over the grid.
    pub fn diverges_uniformly(&self) -> bool {
        self.growth_ratio >= 10.0
    }
}

pub const PROBE_EPSILONS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
pub const PROBE_TAUS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Evaluates the functional along the ray `s ↦ sΓ` for every `(ε, τ)` in
/// the default probe grid (with `τ1 = τ2 = τ`).
pub fn equicoercivity_probe(
    prob: &QuantumProblem,
    gamma: &HermitianOperator,
    scales: &[f64],
) -> Result<CoercivityProbe> {
    let grid: Vec<(f64, f64)> = PROBE_EPSILONS.iter().flat_map(|&e| PROBE_TAUS.iter().map(move |&t| (e, t))).collect();
    equicoercivity_probe_on(prob, gamma, scales, &grid)
}

pub fn equicoercivity_probe_on(
    prob: &QuantumProblem,
    gamma: &HermitianOperator,
    scales: &[f64],
    grid: &[(f64, f64)],
) -> Result<CoercivityProbe> {
    if scales.is_empty() || grid.is_empty() {
        return Err(Error::InvalidSchedule("empty probe".into()));
    }
    let shape = prob.shape();
    let c_norm = spectral_decompose(prob.cost())?.eigenvalues.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let dim = shape.total() as f64;
    let mut values = Vec::with_capacity(scales.len());
    let mut lower_bounds = Vec::with_capacity(scales.len());
    let mut violations = 0;
    for &s in scales {
        let g = CouplingOperator::new(gamma.scale(s), shape)?;
        let mut row = Vec::with_capacity(grid.len());
        let mut lows = Vec::with_capacity(grid.len());
        for &(eps, tau) in grid {
            let p = prob.with_epsilon(eps)?.with_tau(tau, tau)?;
            let f = primal_terms(&g, &p)?.total(&p);
            let low = -eps * dim - c_norm * g.trace();
            if f < low {
                violations += 1;
            }
            row.push(f);
            lows.push(low);
        }
        values.push(row);
        lower_bounds.push(lows);
    }
    let base = values[0].iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let top = values[values.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CoercivityProbe {
        scales: scales.to_vec(),
        grid: grid.to_vec(),
        values,
        lower_bounds,
        lower_bound_violations: violations,
        growth_ratio: top / base.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_is_exact_on_quadratics() {
        let f = |x: f64| 2.0 - 3.0 * x + 0.5 * x * x;
        let xs = [0.1, 0.03, 0.01];
        let got = extrapolate_to_zero(xs, xs.map(f));
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_order_enforced() {
        let p = QuantumProblem::new(
            HermitianOperator::zeros(1),
            HermitianOperator::identity(1),
            HermitianOperator::identity(1),
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(Schedule::new(SweepParameter::Epsilon, vec![0.1, 1.0], p.clone()).is_err());
        assert!(Schedule::new(SweepParameter::Tau, vec![10.0, 1.0], p.clone()).is_err());
        assert!(Schedule::default_tau(p).is_ok());
    }

    #[test]
    fn tau_schedule_needs_equal_traces() {
        let p = QuantumProblem::new(
            HermitianOperator::zeros(1),
            HermitianOperator::identity(1),
            HermitianOperator::identity(1).scale(2.0),
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(Schedule::default_tau(p.clone()), Err(Error::TraceMismatch { .. })));
        assert!(Schedule::default_epsilon(p).is_ok());
    }
}
