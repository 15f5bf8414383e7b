//! Reference integration used to cross-check derived rules and exact basis
//! integrals. Composite Gauss-Legendre per knot span, with nodes found by
//! Newton on the Legendre recurrence; independent of the rule derivation
//! machinery in this crate.

use crate::real::Real;

/// Legendre polynomial and derivative at `x` by the three-term recurrence.
fn legendre_with_derivative<R: Real>(n: usize, x: R) -> (R, R) {
    let mut p0 = R::one();
    let mut p1 = x;
    if n == 0 {
        return (p0, R::zero());
    }
    for k in 2..=n {
        let kf = R::from_usize(k);
        let a = (R::from_usize(2 * k - 1)) / kf;
        let b = (R::from_usize(k - 1)) / kf;
        let p2 = a * x * p1 - b * p0;
        p0 = p1;
        p1 = p2;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let nf = R::from_usize(n);
    let dp = nf * (x * p1 - p0) / (x * x - R::one());
    (p1, dp)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre<R: Real>(n: usize) -> (Vec<R>, Vec<R>) {
    assert!(n >= 1);
    let mut nodes = vec![R::zero(); n];
    let mut weights = vec![R::zero(); n];
    if n == 1 {
        weights[0] = R::from_i64(2);
        return (nodes, weights);
    }
    for i in 0..n.div_ceil(2) {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut x = R::from_f64(guess);
        for _ in 0..60 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= R::epsilon() * R::from_f64(4.0) {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = R::from_i64(2) / ((R::one() - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate `f` over `[a, b]` partitioned by `breakpoints`, applying an
/// `n`-point Gauss-Legendre rule on each span. Exact for piecewise
/// polynomials of degree <= 2n-1 on the partition.
pub fn integrate_per_span<R: Real>(
    breakpoints: &[R],
    n: usize,
    mut f: impl FnMut(R) -> R,
) -> R {
    let (nodes, weights) = gauss_legendre::<R>(n);
    let half = R::from_ratio(1, 2);
    let mut total = R::zero();
    for w in breakpoints.windows(2) {
        let mid = (w[0] + w[1]) * half;
        let scale = (w[1] - w[0]) * half;
        for (x, wt) in nodes.iter().zip(&weights) {
            total += *wt * scale * f(mid + scale * *x);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::DDouble;

    #[test]
    fn five_point_rule_matches_published_values() {
        let (nodes, weights) = gauss_legendre::<f64>(5);
        assert!((nodes[4] - 0.9061798459386640).abs() < 1e-15);
        assert!((weights[4] - 0.2369268850561891).abs() < 1e-15);
        assert!((nodes[2]).abs() < 1e-15);
        assert!((weights[2] - 128.0 / 225.0).abs() < 1e-15);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // x^7 over [0, 2] with 4 points per span: exact (degree 7 = 2*4-1).
        let v = integrate_per_span(&[0.0, 0.7, 2.0], 4, |x: f64| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn extended_precision_nodes_square_to_better_than_double() {
        let (nodes, _) = gauss_legendre::<DDouble>(6);
        // P_6 at a computed node is ~0 to double-double accuracy.
        let (p, _) = legendre_with_derivative(6, nodes[0]);
        assert!(p.abs().to_f64() < 1e-28);
    }
}
