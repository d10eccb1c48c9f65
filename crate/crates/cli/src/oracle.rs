//! Brute-force reference values that share no code with the solvers.

/// Minimizes a unimodal function on `[a, b]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn kl(t: f64, m: f64) -> f64 {
    t * (t / m).ln() - t + m
}

/// Scalar unbalanced problem over the mass `t = γ({(x, y)})` of a coupling
/// between two Dirac masses `m1`, `m2`. `entropy(t)` supplies the
/// regularizer, which differs between the classical and operator settings.
fn scalar_min(c: f64, m1: f64, m2: f64, t1: f64, t2: f64, entropy: impl Fn(f64) -> f64) -> f64 {
    // Unimodal in log t; the bracket covers every instance the suites draw.
    let f = |s: f64| {
        let t = s.exp();
        c * t + entropy(t) + t1 * kl(t, m1) + t2 * kl(t, m2)
    };
    golden_section(f, -60.0, 60.0, 1e-13).1
}

/// Classical: the entropy is relative to `μ ⊗ ν`, whose only atom has mass `m1 m2`.
pub fn classical_scalar_value(c: f64, m1: f64, m2: f64, eps: f64, t1: f64, t2: f64) -> f64 {
    scalar_min(c, m1, m2, t1, t2, |t| eps * t * ((t / (m1 * m2)).ln() - 1.0))
}

/// Operator setting in dimension one: `S[t] = t (log t - 1)`.
pub fn quantum_scalar_value(c: f64, m1: f64, m2: f64, eps: f64, t1: f64, t2: f64) -> f64 {
    scalar_min(c, m1, m2, t1, t2, |t| eps * t * (t.ln() - 1.0))
}

/// The unregularized scalar problem.
pub fn unregularized_scalar_value(c: f64, m1: f64, m2: f64, t1: f64, t2: f64) -> f64 {
    scalar_min(c, m1, m2, t1, t2, |_| 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3) * (x - 0.3) + 2.0, -5.0, 5.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unregularized_matches_closed_form() {
        // Stationarity: c + τ1 log(t/m1) + τ2 log(t/m2) = 0.
        let (c, m1, m2, t1, t2): (f64, f64, f64, f64, f64) = (0.4, 1.5, 0.7, 2.0, 0.5);
        let lt = (t1 * m1.ln() + t2 * m2.ln() - c) / (t1 + t2);
        let t = lt.exp();
        let want = c * t + t1 * kl(t, m1) + t2 * kl(t, m2);
        assert!((unregularized_scalar_value(c, m1, m2, t1, t2) - want).abs() < 1e-12);
    }
}
