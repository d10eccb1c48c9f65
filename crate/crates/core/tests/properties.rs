use nalgebra::DMatrix;
use proptest::prelude::*;
use uqot::classical::{
    ctau_transform_of_u, ctau_transform_of_v, dual_value_classical, kl_divergence, primal_value_classical,
    u_transform_bounds, v_transform_bounds, ClassicalPotentials, ClassicalProblem, DiscreteCoupling, DiscreteMeasure,
};
use uqot::herm::{
    kron_sum, partial_trace, psd_floor, umegaki_relative_entropy, von_neumann_entropy, BipartiteShape,
    HermitianOperator, Subsystem, C64,
};
use uqot::quantum::{
    dual_value_quantum, primal_terms, primal_value_quantum, CouplingOperator, QuantumPotentials, QuantumProblem,
};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2..3.0_f64, n)
}

fn classical() -> impl Strategy<Value = ClassicalProblem> {
    (1..5usize, 1..5usize).prop_flat_map(|(n, m)| {
        (
            weights(n),
            weights(m),
            prop::collection::vec(0.0..1.0_f64, n * m),
            0.05..1.0_f64,
            0.1..10.0_f64,
            0.1..10.0_f64,
        )
            .prop_map(move |(mu, nu, c, eps, t1, t2)| {
                ClassicalProblem::new(
                    DiscreteMeasure::new(mu).unwrap(),
                    DiscreteMeasure::new(nu).unwrap(),
                    DMatrix::from_row_slice(n, m, &c),
                    eps,
                    t1,
                    t2,
                )
                .unwrap()
            })
    })
}

fn density(p: &ClassicalProblem, raw: &[f64]) -> DiscreteCoupling {
    let (n, m) = (p.mu().len(), p.nu().len());
    DiscreteCoupling::from_density(DMatrix::from_fn(n, m, |i, j| raw[(i * m + j) % raw.len()]), p).unwrap()
}

fn hermitian(d: usize, scale: f64) -> impl Strategy<Value = HermitianOperator> {
    prop::collection::vec(-1.0..1.0_f64, 2 * d * d).prop_map(move |x| {
        let a = DMatrix::from_fn(d, d, |i, j| C64::new(x[2 * (i * d + j)], x[2 * (i * d + j) + 1]));
        HermitianOperator::new((&a + a.adjoint()).scale(0.5 * scale)).unwrap()
    })
}

/// `A A* + floor·I`, rescaled to the given trace.
fn positive(d: usize, trace: f64) -> impl Strategy<Value = HermitianOperator> {
    (prop::collection::vec(-1.0..1.0_f64, 2 * d * d), 0.01..0.5_f64).prop_map(move |(x, floor)| {
        let a = DMatrix::from_fn(d, d, |i, j| C64::new(x[2 * (i * d + j)], x[2 * (i * d + j) + 1]));
        let g = HermitianOperator::new(&a * a.adjoint()).unwrap().add_identity(floor);
        let t = g.trace();
        g.scale(trace / t)
    })
}

fn quantum(d1: usize, d2: usize) -> impl Strategy<Value = QuantumProblem> {
    (
        hermitian(d1 * d2, 1.0),
        positive(d1, 1.0),
        positive(d2, 1.0),
        0.5..2.0_f64,
        0.05..1.0_f64,
        0.5..5.0_f64,
        0.5..5.0_f64,
    )
        .prop_map(|(c, rho, sigma, mass, eps, t1, t2)| {
            QuantumProblem::new(c.add_identity(1.0), rho.scale(mass), sigma, eps, t1, t2).unwrap()
        })
}

fn coupling(p: &QuantumProblem, g: &HermitianOperator) -> CouplingOperator {
    CouplingOperator::new(g.clone(), p.shape()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classical_weak_duality(
        p in classical(),
        raw in prop::collection::vec(0.0..3.0_f64, 16),
        pots in prop::collection::vec(-2.0..2.0_f64, 8),
    ) {
        let g = density(&p, &raw);
        let u = pots[..p.mu().len()].to_vec();
        let v = pots[4..4 + p.nu().len()].to_vec();
        let f = primal_value_classical(&g, &p);
        let d = dual_value_classical(&ClassicalPotentials { u, v }, &p).unwrap();
        prop_assert!(f >= d - 1e-12 * (1.0 + f.abs()), "F = {f}, D = {d}");
    }

    #[test]
    fn classical_primal_is_convex(
        p in classical(),
        a in prop::collection::vec(0.0..3.0_f64, 16),
        b in prop::collection::vec(0.0..3.0_f64, 16),
        t in 0.0..1.0_f64,
    ) {
        let (ga, gb) = (density(&p, &a), density(&p, &b));
        let mid = DiscreteCoupling::from_density(&ga.density * t + &gb.density * (1.0 - t), &p).unwrap();
        let fa = primal_value_classical(&ga, &p);
        let fb = primal_value_classical(&gb, &p);
        let fm = primal_value_classical(&mid, &p);
        prop_assert!(fm <= t * fa + (1.0 - t) * fb + 1e-12 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn transform_is_best_response(p in classical(), pots in prop::collection::vec(-2.0..2.0_f64, 8), k in 0..4usize, h in -0.5..0.5_f64) {
        let u = pots[..p.mu().len()].to_vec();
        let v = ctau_transform_of_u(&u, &p).unwrap();
        let best = dual_value_classical(&ClassicalPotentials { u: u.clone(), v: v.clone() }, &p).unwrap();
        let mut w = v.clone();
        let j = k % w.len();
        w[j] += h;
        let other = dual_value_classical(&ClassicalPotentials { u, v: w }, &p).unwrap();
        prop_assert!(other <= best + 1e-12 * (1.0 + best.abs()));
    }

    #[test]
    fn sinkhorn_iterates_obey_sandwich_bounds(p in classical(), pots in prop::collection::vec(-2.0..2.0_f64, 8)) {
        // One half-step from an arbitrary v, then bound the next transform
        // using the dual value reached.
        let v0 = pots[4..4 + p.nu().len()].to_vec();
        let u = ctau_transform_of_v(&v0, &p).unwrap();
        let v = ctau_transform_of_u(&u, &p).unwrap();
        let m = -dual_value_classical(&ClassicalPotentials { u: u.clone(), v: v.clone() }, &p).unwrap();
        let b = v_transform_bounds(&p, m);
        let slack = 1e-9 * (1.0 + b.lower.abs() + b.upper.abs());
        for x in &v {
            prop_assert!(b.lower - slack <= *x && *x <= b.upper + slack, "{} <= {x} <= {}", b.lower, b.upper);
        }
        let u2 = ctau_transform_of_v(&v, &p).unwrap();
        let m2 = -dual_value_classical(&ClassicalPotentials { u: u2.clone(), v }, &p).unwrap();
        let b = u_transform_bounds(&p, m2);
        let slack = 1e-9 * (1.0 + b.lower.abs() + b.upper.abs());
        for x in &u2 {
            prop_assert!(b.lower - slack <= *x && *x <= b.upper + slack, "{} <= {x} <= {}", b.lower, b.upper);
        }
    }

    #[test]
    fn kl_is_nonnegative(a in weights(4), b in weights(4)) {
        prop_assert!(kl_divergence(&a, &b).unwrap() >= -1e-12);
        prop_assert!(kl_divergence(&a, &a).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn klein_inequality(a in positive(3, 1.7), b in positive(3, 0.6)) {
        prop_assert!(umegaki_relative_entropy(&a, &b).unwrap() >= -1e-10);
        prop_assert!(umegaki_relative_entropy(&a, &a).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn quantum_weak_duality(
        p in quantum(2, 2),
        g in positive(4, 1.0),
        s in 0.01..4.0_f64,
        u in hermitian(2, 2.0),
        v in hermitian(2, 2.0),
    ) {
        let f = primal_value_quantum(&coupling(&p, &g.scale(s)), &p).unwrap();
        let d = dual_value_quantum(&QuantumPotentials { u, v }, &p).unwrap();
        prop_assert!(f >= d - 1e-9 * (1.0 + f.abs()));
    }

    #[test]
    fn quantum_primal_is_convex(p in quantum(2, 2), a in positive(4, 1.0), b in positive(4, 2.0), t in 0.0..1.0_f64) {
        let fa = primal_value_quantum(&coupling(&p, &a), &p).unwrap();
        let fb = primal_value_quantum(&coupling(&p, &b), &p).unwrap();
        let fm = primal_value_quantum(&coupling(&p, &a.lin_comb(t, &b, 1.0 - t)), &p).unwrap();
        prop_assert!(fm <= t * fa + (1.0 - t) * fb + 1e-10 * (1.0 + fa.abs() + fb.abs()));
    }

    #[test]
    fn marginal_penalty_is_convex(p in quantum(2, 3), a in positive(6, 1.0), b in positive(6, 0.3), t in 0.0..1.0_f64) {
        let pen = |g: &HermitianOperator| primal_terms(&coupling(&p, g), &p).unwrap().penalty1;
        let mid = pen(&a.lin_comb(t, &b, 1.0 - t));
        prop_assert!(mid <= t * pen(&a) + (1.0 - t) * pen(&b) + 1e-10);
    }

    #[test]
    fn functional_is_bounded_below_linearly(p in quantum(2, 2), g in positive(4, 1.0), s in 0.0..50.0_f64) {
        let c_norm = p.cost().spectral_radius().unwrap();
        let f = primal_value_quantum(&coupling(&p, &g.scale(s)), &p).unwrap();
        prop_assert!(f >= -p.epsilon() * 4.0 - c_norm * s - 1e-10);
    }

    #[test]
    fn epsilon_enters_linearly(p in quantum(2, 2), g in positive(4, 1.3), e2 in 0.01..2.0_f64) {
        let gc = coupling(&p, &g);
        let q = p.with_epsilon(e2).unwrap();
        let diff = primal_value_quantum(&gc, &q).unwrap() - primal_value_quantum(&gc, &p).unwrap();
        let s = von_neumann_entropy(&g).unwrap();
        prop_assert!((diff - (e2 - p.epsilon()) * s).abs() <= 1e-12 * (1.0 + diff.abs() + s.abs()));
    }

    #[test]
    fn diagonal_couplings_match_the_reduced_problem(
        c in prop::collection::vec(0.0..1.0_f64, 6),
        mu in weights(3),
        nu in weights(2),
        g in prop::collection::vec(0.0..2.0_f64, 6),
        eps in 0.05..1.0_f64,
        t1 in 0.1..10.0_f64,
        t2 in 0.1..10.0_f64,
    ) {
        let p = QuantumProblem::new(
            HermitianOperator::from_diagonal(&c),
            HermitianOperator::from_diagonal(&mu),
            HermitianOperator::from_diagonal(&nu),
            eps, t1, t2,
        ).unwrap();
        let reduced = p.diagonal_reduction().unwrap();
        let fq = primal_value_quantum(&coupling(&p, &HermitianOperator::from_diagonal(&g)), &p).unwrap();
        let gc = DiscreteCoupling::from_masses(DMatrix::from_row_slice(3, 2, &g), &reduced).unwrap();
        let fc = primal_value_classical(&gc, &reduced);
        prop_assert!((fq - fc).abs() <= 1e-12 * (1.0 + fq.abs()), "{fq} vs {fc}");
    }

    #[test]
    fn partial_traces_of_products(a in positive(2, 0.7), b in positive(3, 1.9)) {
        let shape = BipartiteShape::new(2, 3);
        let ab = a.kron(&b);
        let first = partial_trace(&ab, shape, Subsystem::First).unwrap();
        let second = partial_trace(&ab, shape, Subsystem::Second).unwrap();
        prop_assert!(first.sub(&a.scale(1.9)).frobenius_norm() <= 1e-12);
        prop_assert!(second.sub(&b.scale(0.7)).frobenius_norm() <= 1e-12);
    }

    #[test]
    fn kron_sum_pairs_with_partial_traces(u in hermitian(2, 1.0), v in hermitian(3, 1.0), g in positive(6, 1.0)) {
        let shape = BipartiteShape::new(2, 3);
        let lhs = kron_sum(&u, &v).trace_product(&g);
        let rhs = u.trace_product(&partial_trace(&g, shape, Subsystem::First).unwrap())
            + v.trace_product(&partial_trace(&g, shape, Subsystem::Second).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn psd_floor_lifts_the_spectrum(h in hermitian(4, 2.0), delta in 0.0..0.1_f64) {
        let lifted = psd_floor(&h, delta).unwrap();
        let min = uqot::herm::spectral_decompose(&lifted).unwrap().min_eigenvalue();
        prop_assert!(min >= delta - 1e-12);
    }
}
