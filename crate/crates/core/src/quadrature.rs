//! Quadrature rules over spline spaces: application, exactness residuals,
//! optimality verification and symmetry helpers.

use crate::real::{convert, Real};
use crate::spline::{RuleKind, Side, SplineSpace, KNOT_REL_TOL};

#[derive(Debug, thiserror::Error)]
pub enum QuadratureError {
    #[error("nodes and weights differ in length")]
    LengthMismatch,
    #[error("nodes must be strictly increasing inside the domain")]
    BadNodes,
    #[error("weight {index} is not positive: {value:e}")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {got:e}, expected domain length {expected:e}")]
    WeightSum { got: f64, expected: f64 },
    #[error("rule domain does not match space domain")]
    DomainMismatch,
    #[error("node {index} lies beyond the reflection midpoint")]
    NodeBeyondMidpoint { index: usize },
    #[error("rules are not contiguous")]
    NotContiguous,
}

/// Nodes and positive weights over `[a, b]`, exact for some spline space.
#[derive(Clone, Debug)]
pub struct QuadratureRule<R: Real> {
    nodes: Vec<R>,
    weights: Vec<R>,
    domain: (R, R),
    kind: RuleKind,
    pinned_index: Option<usize>,
}

impl<R: Real> QuadratureRule<R> {
    pub fn new(
        nodes: Vec<R>,
        weights: Vec<R>,
        domain: (R, R),
        kind: RuleKind,
        pinned_index: Option<usize>,
    ) -> Result<Self, QuadratureError> {
        if nodes.len() != weights.len() {
            return Err(QuadratureError::LengthMismatch);
        }
        let (a, b) = domain;
        let tol = (b - a) * R::from_f64(KNOT_REL_TOL);
        for (i, x) in nodes.iter().enumerate() {
            if *x < a - tol || *x > b + tol {
                return Err(QuadratureError::BadNodes);
            }
            if i > 0 && !(nodes[i - 1] < *x) {
                return Err(QuadratureError::BadNodes);
            }
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            domain,
            kind,
            pinned_index,
        })
    }

    /// Validate the invariants of a finished rule: positive weights and
    /// exactness on constants.
    pub fn validate_finalized(&self) -> Result<(), QuadratureError> {
        for (i, w) in self.weights.iter().enumerate() {
            if !(*w > R::zero()) {
                return Err(QuadratureError::NonPositiveWeight {
                    index: i,
                    value: w.to_f64(),
                });
            }
        }
        let sum = self.weight_sum();
        let expected = self.domain.1 - self.domain.0;
        if (sum - expected).abs() > expected.abs() * R::from_f64(1e-10) {
            return Err(QuadratureError::WeightSum {
                got: sum.to_f64(),
                expected: expected.to_f64(),
            });
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[R] {
        &self.nodes
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn domain(&self) -> (R, R) {
        self.domain
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn pinned_index(&self) -> Option<usize> {
        self.pinned_index
    }

    pub fn weight_sum(&self) -> R {
        let mut s = R::zero();
        for w in &self.weights {
            s += *w;
        }
        s
    }

    /// Apply the rule to an arbitrary function.
    pub fn apply(&self, mut f: impl FnMut(R) -> R) -> R {
        let mut acc = R::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += *w * f(*x);
        }
        acc
    }

    /// Quadrature values of every basis function of `space`.
    ///
    /// A node sitting on a discontinuity knot of the space (full interior
    /// multiplicity) contributes the average of the one-sided limits, which is
    /// the convention under which symmetric rules with a node on the middle
    /// discontinuity integrate both halves correctly.
    pub fn apply_to_basis(&self, space: &SplineSpace<R>) -> Vec<R> {
        let dim = space.dimension();
        let mut q = vec![R::zero(); dim];
        let half = R::from_ratio(1, 2);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            if space.is_discontinuity_point(*x) {
                for side in [Side::Left, Side::Right] {
                    let (first, values) = space.basis_values_at(*x, side);
                    for (offset, v) in values.iter().enumerate() {
                        let j = first + offset;
                        if j < dim {
                            q[j] += *w * half * *v;
                        }
                    }
                }
            } else {
                let (first, values) = space.basis_values_at(*x, Side::Right);
                for (offset, v) in values.iter().enumerate() {
                    let j = first + offset;
                    if j < dim {
                        q[j] += *w * *v;
                    }
                }
            }
        }
        q
    }

    /// Map the rule onto a new domain; nodes move affinely, weights scale.
    pub fn affine_mapped(&self, new_a: R, new_b: R) -> QuadratureRule<R> {
        let (a, b) = self.domain;
        let scale = (new_b - new_a) / (b - a);
        let nodes = self.nodes.iter().map(|&x| new_a + (x - a) * scale).collect();
        let weights = self.weights.iter().map(|&w| w * scale).collect();
        QuadratureRule {
            nodes,
            weights,
            domain: (new_a, new_b),
            kind: self.kind,
            pinned_index: self.pinned_index,
        }
    }

    /// Convert node and weight values to another precision.
    pub fn convert<S: Real>(&self) -> QuadratureRule<S> {
        QuadratureRule {
            nodes: self.nodes.iter().map(|x| convert::<R, S>(*x)).collect(),
            weights: self.weights.iter().map(|x| convert::<R, S>(*x)).collect(),
            domain: (
                convert::<R, S>(self.domain.0),
                convert::<R, S>(self.domain.1),
            ),
            kind: self.kind,
            pinned_index: self.pinned_index,
        }
    }
}

/// Union of contiguous rules over adjacent domains (C^-1 merged spaces).
pub fn concat_rules<R: Real>(rules: &[QuadratureRule<R>]) -> Result<QuadratureRule<R>, QuadratureError> {
    assert!(!rules.is_empty());
    let a = rules[0].domain.0;
    let b = rules[rules.len() - 1].domain.1;
    let tol = (b - a) * R::from_f64(KNOT_REL_TOL);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (i, rule) in rules.iter().enumerate() {
        if i > 0 && (rules[i - 1].domain.1 - rule.domain.0).abs() > tol {
            return Err(QuadratureError::NotContiguous);
        }
        nodes.extend_from_slice(&rule.nodes);
        weights.extend_from_slice(&rule.weights);
    }
    QuadratureRule::new(nodes, weights, (a, b), rules[0].kind, None)
}

/// Per-basis exactness residuals and their normalized Euclidean norm.
#[derive(Clone, Debug)]
pub struct ResidualReport<R: Real> {
    pub residuals: Vec<R>,
    /// `sqrt(sum r_i^2) / dimension`.
    pub norm: R,
    pub max_abs: R,
    pub dimension: usize,
}

/// Residual vector of `rule` against the full basis of `space`.
pub fn residuals<R: Real>(
    rule: &QuadratureRule<R>,
    space: &SplineSpace<R>,
) -> Result<ResidualReport<R>, QuadratureError> {
    let (a, b) = space.domain();
    let (ra, rb) = rule.domain();
    let tol = (b - a) * R::from_f64(KNOT_REL_TOL);
    if (a - ra).abs() > tol || (b - rb).abs() > tol {
        return Err(QuadratureError::DomainMismatch);
    }
    let q = rule.apply_to_basis(space);
    let dim = space.dimension();
    let mut res = Vec::with_capacity(dim);
    let mut sum_sq = R::zero();
    let mut max_abs = R::zero();
    for (j, qj) in q.into_iter().enumerate() {
        let r = qj - space.basis_integral(j);
        sum_sq += r * r;
        max_abs = max_abs.max_of(r.abs());
        res.push(r);
    }
    Ok(ResidualReport {
        residuals: res,
        norm: sum_sq.sqrt() / R::from_usize(dim),
        max_abs,
        dimension: dim,
    })
}

/// Default exactness tolerance for the working precision: 1e-13 in double,
/// 1e-24 in extended mode.
pub fn default_exactness_tol<R: Real>() -> R {
    if R::NAME == "extended" {
        R::from_f64(1e-24)
    } else {
        R::from_f64(1e-13)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome<R: Real> {
    pub exact: bool,
    pub optimal: bool,
    pub weights_positive: bool,
    pub report: ResidualReport<R>,
}

/// Check exactness (residual norm below `tol`) and optimality (node count
/// equals the Micchelli count for the space).
pub fn verify<R: Real>(
    rule: &QuadratureRule<R>,
    space: &SplineSpace<R>,
    tol: R,
) -> Result<VerifyOutcome<R>, QuadratureError> {
    let report = residuals(rule, space)?;
    let (m_opt, _) = space.optimal_node_count();
    Ok(VerifyOutcome {
        exact: report.norm <= tol,
        optimal: rule.len() == m_opt,
        weights_positive: rule.weights().iter().all(|w| *w > R::zero()),
        report,
    })
}

/// Complete a symmetric rule from its left half. Mirrored nodes get the same
/// weights; a node exactly at the midpoint appears once with its own weight.
pub fn reflect_symmetric<R: Real>(
    half: &QuadratureRule<R>,
    midpoint: R,
) -> Result<QuadratureRule<R>, QuadratureError> {
    let (a, b) = half.domain();
    let tol = (midpoint - a).abs() * R::from_f64(KNOT_REL_TOL);
    for (i, x) in half.nodes().iter().enumerate() {
        if *x > midpoint + tol {
            return Err(QuadratureError::NodeBeyondMidpoint { index: i });
        }
    }
    if (b - midpoint).abs() > tol {
        // Already a full rule whose domain extends past the midpoint only if
        // midpoint == b was intended; treat exact match as idempotent case.
        return Err(QuadratureError::DomainMismatch);
    }
    let mut nodes = half.nodes().to_vec();
    let mut weights = half.weights().to_vec();
    let has_mid = half
        .nodes()
        .last()
        .map(|&x| (x - midpoint).abs() <= tol)
        .unwrap_or(false);
    let pinned = if has_mid { Some(nodes.len() - 1) } else { None };
    let take = if has_mid {
        nodes.len() - 1
    } else {
        nodes.len()
    };
    for i in (0..take).rev() {
        nodes.push(midpoint + midpoint - half.nodes()[i]);
        weights.push(half.weights()[i]);
    }
    let two = R::from_i64(2);
    QuadratureRule::new(
        nodes,
        weights,
        (a, two * midpoint - a),
        half.kind(),
        pinned,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::spline::{KnotVector, SpaceKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space_6_757() -> SplineSpace<f64> {
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![7, 5, 7]).unwrap();
        SplineSpace::new(6, kv, SpaceKind::Source).unwrap()
    }

    /// Classical per-element Gauss rule: exact on the space, not optimal.
    fn per_element_gauss(space: &SplineSpace<f64>, points: usize) -> QuadratureRule<f64> {
        let (gl_nodes, gl_weights) = reference::gauss_legendre::<f64>(points);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in space.knots().breakpoints().windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let scale = 0.5 * (w[1] - w[0]);
            for (x, wt) in gl_nodes.iter().zip(&gl_weights) {
                nodes.push(mid + scale * x);
                weights.push(wt * scale);
            }
        }
        QuadratureRule::new(nodes, weights, space.domain(), RuleKind::Gauss, None).unwrap()
    }

    #[test]
    fn constant_function_integrates_to_domain_length() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        assert!((rule.apply(|_| 1.0) - 2.0).abs() < 1e-14);
        rule.validate_finalized().unwrap();
    }

    #[test]
    fn per_element_gauss_is_exact_but_not_optimal() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        let out = verify(&rule, &s, default_exactness_tol::<f64>()).unwrap();
        assert!(out.exact, "norm {:e}", out.report.norm);
        assert!(!out.optimal);
        assert!(out.weights_positive);
    }

    #[test]
    fn deleting_a_node_breaks_exactness() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        let nodes = rule.nodes()[..rule.len() - 1].to_vec();
        let weights = rule.weights()[..rule.len() - 1].to_vec();
        let broken = QuadratureRule::new(nodes, weights, s.domain(), RuleKind::Gauss, None).unwrap();
        let out = verify(&broken, &s, default_exactness_tol::<f64>()).unwrap();
        assert!(!out.exact);
    }

    #[test]
    fn residuals_flag_superspace() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        // Refined space: extra interior knot raises the dimension.
        let kv = KnotVector::new(vec![0.0, 0.5, 1.0, 2.0], vec![7, 5, 5, 7]).unwrap();
        let superspace = SplineSpace::new(6, kv, SpaceKind::Target).unwrap();
        let report = residuals(&rule, &superspace).unwrap();
        assert!(report.max_abs > 1e-6);
    }

    #[test]
    fn exactness_on_random_splines_against_reference() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let coeffs: Vec<f64> = (0..s.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |x: f64| {
                let (first, values) = s.basis_values_at(x, Side::Right);
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| coeffs[first + i] * v)
                    .sum::<f64>()
            };
            let exact = reference::integrate_per_span(s.knots().breakpoints(), 6, f);
            let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((rule.apply(f) - exact).abs() <= 1e-12 * norm.max(1.0));
        }
    }

    #[test]
    fn affine_invariance_of_residual_norm() {
        let s = space_6_757();
        let rule = per_element_gauss(&s, 4);
        let mapped_rule = rule.affine_mapped(0.0, 1.0);
        let mapped_space = s.affine_mapped(0.0, 1.0);
        let r0 = residuals(&rule, &s).unwrap();
        let r1 = residuals(&mapped_rule, &mapped_space).unwrap();
        // Residuals scale linearly with the domain under an affine map.
        assert!((r1.norm * 2.0 - r0.norm).abs() <= 1e-14);
        for (x, y) in rule.nodes().iter().zip(mapped_rule.nodes()) {
            assert!((x * 0.5 - y).abs() <= 1e-14);
        }
        for (w, v) in rule.weights().iter().zip(mapped_rule.weights()) {
            assert!((w * 0.5 - v).abs() <= 1e-14);
        }
    }

    #[test]
    fn reflect_symmetric_mirrors_and_keeps_midpoint_once() {
        let half = QuadratureRule::new(
            vec![0.2, 0.8, 1.0],
            vec![0.5, 0.4, 0.2],
            (0.0, 1.0),
            RuleKind::GaussRadau,
            Some(2),
        )
        .unwrap();
        let full = reflect_symmetric(&half, 1.0).unwrap();
        assert_eq!(full.len(), 5);
        assert_eq!(full.nodes(), &[0.2, 0.8, 1.0, 1.2, 1.8]);
        assert_eq!(full.weights(), &[0.5, 0.4, 0.2, 0.4, 0.5]);
        assert_eq!(full.pinned_index(), Some(2));

        let no_mid = QuadratureRule::new(
            vec![0.25, 0.75],
            vec![0.5, 0.5],
            (0.0, 1.0),
            RuleKind::Gauss,
            None,
        )
        .unwrap();
        let full = reflect_symmetric(&no_mid, 1.0).unwrap();
        assert_eq!(full.nodes(), &[0.25, 0.75, 1.25, 1.75]);

        let beyond = QuadratureRule::new(
            vec![0.25, 1.2],
            vec![0.5, 0.5],
            (0.0, 1.5),
            RuleKind::Gauss,
            None,
        )
        .unwrap();
        assert!(reflect_symmetric(&beyond, 1.0).is_err());
    }

    #[test]
    fn discontinuity_node_counts_half_per_side() {
        // C^-1 space on [0,2]; a rule with a node at the discontinuity must
        // see value 1/2 from each side's end function.
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 5, 5]).unwrap();
        let s = SplineSpace::new(4, kv, SpaceKind::Merged).unwrap();
        let rule = QuadratureRule::new(
            vec![1.0],
            vec![2.0],
            (0.0, 2.0),
            RuleKind::GaussRadau,
            Some(0),
        )
        .unwrap();
        let q = rule.apply_to_basis(&s);
        // Basis 4 ends at the discontinuity with left limit 1; basis 5 starts
        // there with right limit 1. Each must receive half the weight.
        assert!((q[4] - 1.0).abs() < 1e-14);
        assert!((q[5] - 1.0).abs() < 1e-14);
    }
}
