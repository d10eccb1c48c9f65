//! Self-test suites. Each check draws seeded random instances, compares
//! solver output against an independent reference and reports pass/fail
//! together with its wall time against a budget.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use uqot::classical::{
    primal_value_classical, recover_coupling, sinkhorn_solve, sinkhorn_solve_from, ClassicalPotentials,
    ClassicalProblem, DiscreteMeasure, SinkhornOptions,
};
use uqot::gamma::{epsilon_sweep, tau_sweep, Schedule};
use uqot::herm::{psd_floor, spectral_log, umegaki_relative_entropy, von_neumann_entropy, HermitianOperator};
use uqot::quantum::{
    dual_value_quantum, fenchel_residual, gradient_primal, potentials_from_coupling, primal_value_quantum, solve_uqot,
    CouplingOperator, QuantumPotentials, QuantumProblem, QuantumSolverConfig,
};

use crate::oracle;
use crate::random::{self, TestRng};

#[derive(Clone, Debug)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

pub struct Suite {
    pub name: &'static str,
    pub summary: &'static str,
    pub budget: Duration,
    run: fn(&mut TestRng) -> Check,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: &'static str,
    pub summary: &'static str,
    pub check: Check,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.check.passed && self.elapsed <= self.budget
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let slow = if self.elapsed > self.budget { " [over time budget]" } else { "" };
        format!(
            "[{status}] {:<22} {:>8.2}s / {:>4}s  {}: {}{slow}",
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            self.summary,
            self.check.detail
        )
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

pub fn suites() -> Vec<Suite> {
    vec![
        Suite {
            name: "classical-duality",
            summary: "Sinkhorn closes the duality gap",
            budget: secs(10),
            run: classical_duality,
        },
        Suite {
            name: "classical-scalar",
            summary: "1x1 values match golden section",
            budget: secs(1),
            run: classical_scalar,
        },
        Suite {
            name: "quantum-weak-duality",
            summary: "F >= D everywhere",
            budget: secs(30),
            run: quantum_weak_duality,
        },
        Suite {
            name: "diagonal-reduction",
            summary: "diagonal operators solve like measures",
            budget: secs(30),
            run: diagonal_reduction,
        },
        Suite { name: "gradient", summary: "gradient matches central differences", budget: secs(10), run: gradient },
        Suite { name: "fenchel-young", summary: "entropic conjugate pair", budget: secs(10), run: fenchel_young },
        Suite { name: "entropy", summary: "Klein inequality and entropy identities", budget: secs(5), run: entropy },
        Suite { name: "epsilon-limit", summary: "minima converge as eps -> 0", budget: secs(120), run: epsilon_limit },
        Suite { name: "tau-limit", summary: "minima converge as tau -> inf", budget: secs(180), run: tau_limit },
        Suite { name: "dual-ascent", summary: "no Sinkhorn half-step lowers D", budget: secs(10), run: dual_ascent },
    ]
}

/// Runs every suite whose name contains `filter`. Each suite gets its own
/// generator derived from `seed` and its position, so filtering does not
/// change what a suite sees.
pub fn run(filter: Option<&str>, seed: u64) -> Vec<Outcome> {
    suites()
        .into_iter()
        .enumerate()
        .filter(|(_, s)| filter.is_none_or(|f| s.name.contains(f)))
        .map(|(k, s)| {
            let mut rng = random::rng(seed.wrapping_mul(1_000_003).wrapping_add(k as u64));
            let start = Instant::now();
            let check = (s.run)(&mut rng);
            Outcome { name: s.name, summary: s.summary, check, elapsed: start.elapsed(), budget: s.budget }
        })
        .collect()
}

fn check(passed: bool, detail: String) -> Check {
    Check { passed, detail }
}

/// Both this and [`dual_ascent`] solve the same 100 instances.
fn classical_runs(rng: &mut TestRng) -> Vec<(ClassicalProblem, uqot::classical::ClassicalSolveReport)> {
    (0..100)
        .map(|_| {
            let p = random::classical_instance(rng);
            let (_, rep) = sinkhorn_solve(&p, 1e-9, 50_000).expect("valid instance");
            (p, rep)
        })
        .collect()
}

fn classical_duality(rng: &mut TestRng) -> Check {
    let runs = classical_runs(rng);
    let unconverged = runs.iter().filter(|(_, r)| !r.converged).count();
    let worst = runs.iter().map(|(_, r)| r.gap.abs() / (1.0 + r.primal_value.abs())).fold(0.0, f64::max);
    let iters = runs.iter().map(|(_, r)| r.iterations).max().unwrap_or(0);
    check(
        unconverged == 0 && worst <= 1e-7,
        format!(
            "100 instances, max |gap|/(1+|F|) = {worst:.2e} (<= 1e-7), unconverged {unconverged}, max sweeps {iters}"
        ),
    )
}

fn dual_ascent(rng: &mut TestRng) -> Check {
    // Same draw as classical_duality when both run from a fresh generator.
    let runs = classical_runs(rng);
    let worst = runs.iter().map(|(_, r)| r.max_dual_decrease).fold(0.0, f64::max);
    check(worst <= 1e-12, format!("100 runs, largest relative dual decrease {worst:.2e} (<= 1e-12)"))
}

fn scalar_classical(c: f64, m1: f64, m2: f64, eps: f64, t1: f64, t2: f64) -> ClassicalProblem {
    ClassicalProblem::new(
        DiscreteMeasure::new(vec![m1]).expect("positive"),
        DiscreteMeasure::new(vec![m2]).expect("positive"),
        DMatrix::from_element(1, 1, c),
        eps,
        t1,
        t2,
    )
    .expect("valid")
}

fn classical_scalar(rng: &mut TestRng) -> Check {
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let c = random::uniform(rng, 0.0, 1.0);
        let m1 = random::uniform(rng, 0.2, 3.0);
        let m2 = random::uniform(rng, 0.2, 3.0);
        let eps = random::uniform(rng, 0.05, 1.0);
        let t1 = random::uniform(rng, 0.1, 10.0);
        let t2 = random::uniform(rng, 0.1, 10.0);
        let (_, rep) = sinkhorn_solve(&scalar_classical(c, m1, m2, eps, t1, t2), 1e-12, 50_000).expect("valid");
        let want = oracle::classical_scalar_value(c, m1, m2, eps, t1, t2);
        worst = worst.max((rep.primal_value - want).abs());
    }
    check(worst <= 1e-8, format!("50 instances, max |F - oracle| = {worst:.2e} (<= 1e-8)"))
}

fn random_coupling(rng: &mut TestRng, d: usize) -> HermitianOperator {
    let rank = random::index(rng, 1, d);
    let g = random::low_rank_psd(rng, d, rank);
    let t = g.trace();
    g.scale(random::uniform(rng, 0.1, 3.0) / t)
}

fn quantum_weak_duality(rng: &mut TestRng) -> Check {
    let mut worst_slack = f64::INFINITY;
    let mut worst_gap = f64::INFINITY;
    let mut largest_gap = 0.0_f64;
    let mut unconverged = 0;
    for _ in 0..100 {
        let d1 = random::index(rng, 2, 3);
        let d2 = random::index(rng, 2, 3);
        let p = random::quantum_instance(rng, d1, d2);
        for _ in 0..3 {
            let g = CouplingOperator::new(random_coupling(rng, d1 * d2), p.shape()).expect("PSD");
            let pots = QuantumPotentials { u: random::hermitian(rng, d1, 2.0), v: random::hermitian(rng, d2, 2.0) };
            let f = primal_value_quantum(&g, &p).expect("evaluates");
            let d = dual_value_quantum(&pots, &p).expect("evaluates");
            worst_slack = worst_slack.min((f - d) / (1.0 + f.abs()));
        }
        let (g, rep) = solve_uqot(&p, &QuantumSolverConfig::default()).expect("solves");
        // Pairs near the optimum, where the inequality is tight.
        let cert = potentials_from_coupling(&g, &p).expect("PD marginals");
        for _ in 0..2 {
            let n = d1 * d2;
            let dg = random::hermitian(rng, n, 1e-3 * g.trace());
            let near = CouplingOperator::new(psd_floor(&g.gamma().add(&dg), 0.0).expect("eigensolve"), p.shape())
                .expect("PSD");
            let pots = QuantumPotentials {
                u: cert.u.add(&random::hermitian(rng, d1, 1e-3)),
                v: cert.v.add(&random::hermitian(rng, d2, 1e-3)),
            };
            let f = primal_value_quantum(&near, &p).expect("evaluates");
            let d = dual_value_quantum(&pots, &p).expect("evaluates");
            worst_slack = worst_slack.min((f - d) / (1.0 + f.abs()));
        }
        unconverged += usize::from(!rep.converged);
        worst_gap = worst_gap.min(rep.gap);
        largest_gap = largest_gap.max(rep.gap.abs());
    }
    check(
        worst_slack >= -1e-9 && worst_gap >= -1e-8 && unconverged == 0,
        format!(
            "500 pairs (200 near the optimum), min (F-D)/(1+|F|) = {worst_slack:.2e} (>= -1e-9); \
             100 solves, min gap {worst_gap:.2e} (>= -1e-8), max |gap| {largest_gap:.2e}, unconverged {unconverged}"
        ),
    )
}

/// The classical instance seen by diagonal couplings, built here from the
/// definitions. The operator entropy has no reference measure, so the
/// cost picks up `ε log(μ_i ν_j)`.
fn induced_classical(p: &QuantumProblem) -> ClassicalProblem {
    let (d1, d2) = (p.shape().d1, p.shape().d2);
    let mu: Vec<f64> = (0..d1).map(|i| p.rho().get(i, i).re).collect();
    let nu: Vec<f64> = (0..d2).map(|j| p.sigma().get(j, j).re).collect();
    let eps = p.epsilon();
    let cost = DMatrix::from_fn(d1, d2, |i, j| p.cost().get(i * d2 + j, i * d2 + j).re + eps * (mu[i] * nu[j]).ln());
    ClassicalProblem::new(
        DiscreteMeasure::new(mu).expect("positive"),
        DiscreteMeasure::new(nu).expect("positive"),
        cost,
        eps,
        p.tau1(),
        p.tau2(),
    )
    .expect("valid")
}

fn classical_reference(p: &ClassicalProblem, tol: f64, max_iter: usize) -> (f64, bool) {
    let opts = SinkhornOptions { tol, max_iter, translate: true };
    let (pots, rep) = sinkhorn_solve_from(p, ClassicalPotentials::zeros(p), &opts).expect("solves");
    let coupling = recover_coupling(&pots, p).expect("finite");
    (primal_value_classical(&coupling, p), rep.converged)
}

fn diagonal_reduction(rng: &mut TestRng) -> Check {
    let mut worst = 0.0_f64;
    let mut unconverged = 0;
    let cfg = QuantumSolverConfig { tol: 1e-10, ..Default::default() };
    for _ in 0..50 {
        let p = random::diagonal_quantum_instance(rng, 3, 2);
        let (_, rep) = solve_uqot(&p, &cfg).expect("solves");
        let (want, ok) = classical_reference(&induced_classical(&p), 1e-12, 50_000);
        unconverged += usize::from(!rep.converged || !ok);
        worst = worst.max((rep.primal_value - want).abs() / want.abs());
    }
    check(
        worst <= 1e-6 && unconverged == 0,
        format!("50 instances (3x2), max relative difference {worst:.2e} (<= 1e-6), unconverged {unconverged}"),
    )
}

fn gradient(rng: &mut TestRng) -> Check {
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let d1 = random::index(rng, 2, 3);
        let d2 = random::index(rng, 2, 3);
        let p = random::quantum_instance(rng, d1, d2);
        let trace = random::uniform(rng, 0.5, 2.0);
        let gamma = random::positive_definite(rng, d1 * d2, 0.2, trace);
        let g = CouplingOperator::new(gamma.clone(), p.shape()).expect("PSD");
        let grad = gradient_primal(&g, &p).expect("PD");
        let f = |x: &HermitianOperator| {
            primal_value_quantum(&CouplingOperator::new(x.clone(), p.shape()).expect("PSD"), &p).expect("evaluates")
        };
        for _ in 0..20 {
            let dir = random::hermitian(rng, d1 * d2, 1.0);
            let dir = dir.scale(1.0 / dir.frobenius_norm());
            let fd = (f(&gamma.lin_comb(1.0, &dir, h)) - f(&gamma.lin_comb(1.0, &dir, -h))) / (2.0 * h);
            let an = grad.trace_product(&dir);
            worst = worst.max((fd - an).abs() / an.abs());
        }
    }
    check(worst <= 1e-5, format!("400 directions, h = 1e-5, max relative error {worst:.2e} (<= 1e-5)"))
}

fn fenchel_young(rng: &mut TestRng) -> Check {
    let mut lowest = f64::INFINITY;
    let mut at_max = 0.0_f64;
    for _ in 0..200 {
        let d1 = random::index(rng, 1, 3);
        let d2 = random::index(rng, 1, 3);
        let p = random::quantum_instance(rng, d1, d2);
        let n = d1 * d2;
        let g = CouplingOperator::new(random_coupling(rng, n), p.shape()).expect("PSD");
        let z = random::hermitian(rng, n, 3.0);
        lowest = lowest.min(fenchel_residual(&z, &g, &p).expect("evaluates"));

        let trace = random::uniform(rng, 0.1, 3.0);
        let pd = random::positive_definite(rng, n, 0.05, trace);
        let log = spectral_log(&pd, None).expect("PD");
        let z_star = p.cost().lin_comb(-1.0, &log, -p.epsilon());
        let g = CouplingOperator::new(pd, p.shape()).expect("PSD");
        at_max = at_max.max(fenchel_residual(&z_star, &g, &p).expect("evaluates").abs());
    }
    check(
        lowest >= -1e-10 && at_max <= 1e-8,
        format!("200 pairs, min residual {lowest:.2e} (>= -1e-10); at Z = -C - eps log G max {at_max:.2e} (<= 1e-8)"),
    )
}

fn entropy(rng: &mut TestRng) -> Check {
    let mut self_max = 0.0_f64;
    let mut klein_min = f64::INFINITY;
    let mut unitary_max = 0.0_f64;
    for _ in 0..200 {
        let d = random::index(rng, 1, 4);
        let t1 = random::uniform(rng, 0.2, 3.0);
        let t2 = random::uniform(rng, 0.2, 3.0);
        let a = random::positive_definite(rng, d, 0.05, t1);
        let b = random::positive_definite(rng, d, 0.05, t2);
        self_max = self_max.max(umegaki_relative_entropy(&a, &a).expect("PD").abs());
        klein_min = klein_min.min(umegaki_relative_entropy(&a, &b).expect("PD"));
        let w = random::unitary(rng, d);
        let s = von_neumann_entropy(&a).expect("PSD");
        let s_rot = von_neumann_entropy(&a.conjugate_by(&w)).expect("PSD");
        unitary_max = unitary_max.max((s - s_rot).abs());
    }
    let identity_exact = (1..=9).all(|d| von_neumann_entropy(&HermitianOperator::identity(d)) == Ok(-(d as f64)));
    check(
        self_max <= 1e-10 && klein_min >= -1e-10 && unitary_max <= 1e-10 && identity_exact,
        format!(
            "200 pairs: max |E[G|G]| {self_max:.2e}, min E {klein_min:.2e}, unitary drift {unitary_max:.2e}; \
             S[I_d] = -d exactly for d <= 9: {identity_exact}"
        ),
    )
}

fn tail_decreasing(r: &[f64]) -> bool {
    r.len() >= 3 && r[r.len() - 3] > r[r.len() - 2] && r[r.len() - 2] > r[r.len() - 1]
}

fn epsilon_limit(rng: &mut TestRng) -> Check {
    let cfg = QuantumSolverConfig { tol: 1e-10, max_iter: 100_000, ..Default::default() };
    let mut tails_ok = 0;
    let mut unconverged = 0;
    for _ in 0..10 {
        let base = random::quantum_instance(rng, 2, 2);
        let rep = epsilon_sweep(&Schedule::default_epsilon(base).expect("valid"), &cfg).expect("sweeps");
        unconverged += rep.records.iter().filter(|r| !r.converged).count();
        tails_ok += usize::from(tail_decreasing(&rep.cauchy_residuals));
    }
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let c = random::uniform(rng, 0.2, 1.0);
        let m1 = random::uniform(rng, 0.5, 2.0);
        let m2 = random::uniform(rng, 0.5, 2.0);
        let t1 = random::uniform(rng, 0.5, 2.0);
        let t2 = random::uniform(rng, 0.5, 2.0);
        let p = QuantumProblem::new(
            HermitianOperator::from_diagonal(&[c]),
            HermitianOperator::from_diagonal(&[m1]),
            HermitianOperator::from_diagonal(&[m2]),
            1.0,
            t1,
            t2,
        )
        .expect("valid");
        let rep = epsilon_sweep(&Schedule::default_epsilon(p).expect("valid"), &cfg).expect("sweeps");
        unconverged += rep.records.iter().filter(|r| !r.converged).count();
        let want = oracle::unregularized_scalar_value(c, m1, m2, t1, t2);
        let got = rep.limit_estimate.unwrap_or(f64::NAN);
        let rel = (got - want).abs() / want.abs();
        worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
    }
    check(
        tails_ok == 10 && worst <= 5e-3 && unconverged == 0,
        format!(
            "2x2 sweeps with decreasing Cauchy tail {tails_ok}/10; 1x1 extrapolated limit max relative error \
             {worst:.2e} (<= 5e-3); unconverged points {unconverged}"
        ),
    )
}

fn tau_limit(rng: &mut TestRng) -> Check {
    let cfg = QuantumSolverConfig { tol: 1e-10, max_iter: 100_000, ..Default::default() };
    let mut decay_ok = 0;
    let mut tails_ok = 0;
    let mut worst_ratio = 0.0_f64;
    let mut unconverged = 0;
    for _ in 0..10 {
        let cost = random::hermitian(rng, 4, 1.0).add_identity(1.0);
        let rho = random::positive_definite(rng, 2, 0.1, 1.0);
        let sigma = random::positive_definite(rng, 2, 0.1, 1.0);
        let eps = random::uniform(rng, 0.1, 1.0);
        let base = QuantumProblem::new(cost, rho, sigma, eps, 1.0, 1.0).expect("valid");
        let rep = tau_sweep(&Schedule::default_tau(base).expect("unit traces"), &cfg).expect("sweeps");
        unconverged += rep.records.iter().filter(|r| !r.converged).count();
        let first = rep.records.first().expect("points").marginal_residual;
        let last = rep.records.last().expect("points").marginal_residual;
        worst_ratio = worst_ratio.max(last / first);
        decay_ok += usize::from(last <= first / 50.0);
        tails_ok += usize::from(tail_decreasing(&rep.cauchy_residuals));
    }
    let mut worst_rel = 0.0_f64;
    for _ in 0..10 {
        let mu: Vec<f64> = (0..2).map(|_| random::uniform(rng, 0.2, 1.0)).collect();
        let nu: Vec<f64> = (0..2).map(|_| random::uniform(rng, 0.2, 1.0)).collect();
        let (sm, sn) = (mu.iter().sum::<f64>(), nu.iter().sum::<f64>());
        let mu: Vec<f64> = mu.iter().map(|x| x / sm).collect();
        let nu: Vec<f64> = nu.iter().map(|x| x / sn).collect();
        let c: Vec<f64> = (0..4).map(|_| random::uniform(rng, 0.0, 1.0)).collect();
        let eps = random::uniform(rng, 0.5, 1.0);
        let base = QuantumProblem::new(
            HermitianOperator::from_diagonal(&c),
            HermitianOperator::from_diagonal(&mu),
            HermitianOperator::from_diagonal(&nu),
            eps,
            1.0,
            1.0,
        )
        .expect("valid");
        let rep = tau_sweep(&Schedule::default_tau(base.clone()).expect("unit traces"), &cfg).expect("sweeps");
        unconverged += rep.records.iter().filter(|r| !r.converged).count();
        let got = rep.records.last().expect("points").min_value;
        let reference = induced_classical(&base.with_tau(1e8, 1e8).expect("valid"));
        let (want, ok) = classical_reference(&reference, 1e-12, 200_000);
        unconverged += usize::from(!ok);
        worst_rel = worst_rel.max((got - want).abs() / want.abs());
    }
    check(
        decay_ok == 10 && tails_ok == 10 && worst_rel <= 1e-3 && unconverged == 0,
        format!(
            "residual(1000)/residual(1) <= 1/50 in {decay_ok}/10 (worst {worst_ratio:.2e}), decreasing Cauchy tail \
             {tails_ok}/10; diagonal tau=1000 vs classical tau=1e8 max relative {worst_rel:.2e} (<= 1e-3); \
             unconverged {unconverged}"
        ),
    )
}
