//! Knot vectors, spline spaces and B-spline basis evaluation.
//!
//! Spaces are stored as a strictly increasing domain partition plus a
//! multiplicity per breakpoint. The basis is the normalized recurrence-based
//! B-spline basis; evaluation supports one-sided limits so that rules with
//! nodes sitting on discontinuity knots can be assembled consistently.

use crate::real::Real;

/// Relative tolerance (w.r.t. the domain length) under which two breakpoints
/// are considered the same knot.
pub const KNOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SplineError {
    #[error("partition must be strictly increasing")]
    PartitionNotIncreasing,
    #[error("partition and multiplicities must have equal length >= 2")]
    LengthMismatch,
    #[error("multiplicities must satisfy 1 <= m <= degree+1, got {got} (degree {degree})")]
    BadMultiplicity { got: usize, degree: usize },
    #[error("knot vector is not open for degree {degree}: end multiplicities {left}/{right}")]
    NotOpen {
        degree: usize,
        left: usize,
        right: usize,
    },
    #[error("spaces live on different domains")]
    DomainMismatch,
    #[error("spaces have different degrees")]
    DegreeMismatch,
    #[error("invalid Galerkin parameters: need 0 <= l <= k < p, got p={p} k={k} l={l}")]
    BadGalerkinSpec { p: usize, k: usize, l: usize },
    #[error("basis index {index} out of range (dimension {dimension})")]
    IndexOutOfRange { index: usize, dimension: usize },
    #[error("evaluation point outside the domain")]
    OutOfDomain,
}

/// Side from which a point is approached when evaluating the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Domain partition plus per-breakpoint multiplicities.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector<R: Real> {
    breakpoints: Vec<R>,
    multiplicities: Vec<usize>,
}

impl<R: Real> KnotVector<R> {
    pub fn new(breakpoints: Vec<R>, multiplicities: Vec<usize>) -> Result<Self, SplineError> {
        if breakpoints.len() != multiplicities.len() || breakpoints.len() < 2 {
            return Err(SplineError::LengthMismatch);
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(SplineError::PartitionNotIncreasing);
            }
        }
        if multiplicities.iter().any(|&m| m == 0) {
            return Err(SplineError::BadMultiplicity { got: 0, degree: 0 });
        }
        Ok(KnotVector {
            breakpoints,
            multiplicities,
        })
    }

    /// Open knot vector with constant interior multiplicity.
    pub fn open_uniform_multiplicity(
        degree: usize,
        breakpoints: Vec<R>,
        interior_multiplicity: usize,
    ) -> Result<Self, SplineError> {
        let n = breakpoints.len();
        if n < 2 {
            return Err(SplineError::LengthMismatch);
        }
        let mut mults = vec![interior_multiplicity; n];
        mults[0] = degree + 1;
        mults[n - 1] = degree + 1;
        KnotVector::new(breakpoints, mults)
    }

    /// Merge a list of (position, multiplicity) pairs, combining coincident
    /// positions under the knot tolerance.
    pub fn from_pairs(pairs: &[(R, usize)]) -> Result<Self, SplineError> {
        if pairs.is_empty() {
            return Err(SplineError::LengthMismatch);
        }
        let mut sorted: Vec<(R, usize)> = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let span = (sorted[sorted.len() - 1].0 - sorted[0].0).abs();
        let tol = span * R::from_f64(KNOT_REL_TOL);
        let mut breakpoints = Vec::new();
        let mut mults: Vec<usize> = Vec::new();
        for (x, m) in sorted {
            if let (Some(last_x), Some(last_m)) = (breakpoints.last().copied(), mults.last_mut()) {
                if (x - last_x).abs() <= tol {
                    *last_m += m;
                    continue;
                }
            }
            breakpoints.push(x);
            mults.push(m);
        }
        KnotVector::new(breakpoints, mults)
    }

    pub fn breakpoints(&self) -> &[R] {
        &self.breakpoints
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn domain(&self) -> (R, R) {
        (
            self.breakpoints[0],
            self.breakpoints[self.breakpoints.len() - 1],
        )
    }

    pub fn element_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn total_multiplicity(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn flatten(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.total_multiplicity());
        for (x, m) in self.breakpoints.iter().zip(&self.multiplicities) {
            for _ in 0..*m {
                out.push(*x);
            }
        }
        out
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        if self.breakpoints.len() != other.breakpoints.len() {
            return false;
        }
        let (a, b) = self.domain();
        let tol = (b - a) * R::from_f64(KNOT_REL_TOL);
        self.breakpoints
            .iter()
            .zip(&other.breakpoints)
            .all(|(x, y)| (*x - *y).abs() <= tol)
    }

    /// True when all elements have the same length (up to knot tolerance).
    pub fn is_uniform(&self) -> bool {
        let (a, b) = self.domain();
        let tol = (b - a) * R::from_f64(1e-10);
        let h = (b - a) / R::from_usize(self.element_count());
        self.breakpoints
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
    }
}

/// Role a space plays in a derivation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Target,
    Source,
    Merged,
}

/// Kind of optimal rule a space admits, by dimension parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RuleKind {
    Gauss,
    GaussRadau,
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleKind::Gauss => write!(f, "gauss"),
            RuleKind::GaussRadau => write!(f, "gauss-radau"),
        }
    }
}

/// Piecewise polynomial space of a fixed degree over an open knot vector.
#[derive(Clone, Debug)]
pub struct SplineSpace<R: Real> {
    degree: usize,
    knots: KnotVector<R>,
    kind: SpaceKind,
    flat: Vec<R>,
}

impl<R: Real> SplineSpace<R> {
    pub fn new(degree: usize, knots: KnotVector<R>, kind: SpaceKind) -> Result<Self, SplineError> {
        let mults = knots.multiplicities();
        let left = mults[0];
        let right = mults[mults.len() - 1];
        if left != degree + 1 || right != degree + 1 {
            return Err(SplineError::NotOpen {
                degree,
                left,
                right,
            });
        }
        for &m in &mults[1..mults.len() - 1] {
            if m > degree + 1 {
                return Err(SplineError::BadMultiplicity { got: m, degree });
            }
        }
        let flat = knots.flatten();
        if flat.len() < 2 * (degree + 1) {
            return Err(SplineError::LengthMismatch);
        }
        Ok(SplineSpace {
            degree,
            knots,
            kind,
            flat,
        })
    }

    /// Open space with constant interior multiplicity `degree - continuity`.
    pub fn with_continuity(
        degree: usize,
        continuity: i64,
        breakpoints: Vec<R>,
        kind: SpaceKind,
    ) -> Result<Self, SplineError> {
        let interior = (degree as i64 - continuity) as usize;
        let knots = KnotVector::open_uniform_multiplicity(degree, breakpoints, interior)?;
        SplineSpace::new(degree, knots, kind)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &KnotVector<R> {
        &self.knots
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn domain(&self) -> (R, R) {
        self.knots.domain()
    }

    /// Flattened knot sequence (each breakpoint repeated by multiplicity).
    pub fn flat_knots(&self) -> &[R] {
        &self.flat
    }

    /// Number of linearly independent basis functions.
    pub fn dimension(&self) -> usize {
        self.flat.len() - (self.degree + 1)
    }

    /// Smoothness order at breakpoint index `k`: `degree - multiplicity`.
    pub fn continuity_at(&self, k: usize) -> i64 {
        self.degree as i64 - self.knots.multiplicities()[k] as i64
    }

    /// Optimal node count and rule kind for this space.
    pub fn optimal_node_count(&self) -> (usize, RuleKind) {
        let dim = self.dimension();
        if dim % 2 == 0 {
            (dim / 2, RuleKind::Gauss)
        } else {
            ((dim + 1) / 2, RuleKind::GaussRadau)
        }
    }

    /// Exact integral of normalized basis function `j` over the domain.
    pub fn basis_integral(&self, j: usize) -> R {
        let d = self.degree;
        (self.flat[j + d + 1] - self.flat[j]) / R::from_usize(d + 1)
    }

    /// Scale factor that renormalizes basis `j` so its integral becomes
    /// `1/(degree+1)`, the convention used for unit two-element source blocks.
    pub fn unit_basis_scale(&self, j: usize) -> R {
        let d = self.degree;
        R::one() / (self.flat[j + d + 1] - self.flat[j])
    }

    fn span_bounds(&self) -> (usize, usize) {
        let d = self.degree;
        (d, self.flat.len() - d - 2)
    }

    /// Index `k` of the knot span `[t_k, t_{k+1}]` used to evaluate at `x`.
    pub fn find_span(&self, x: R, side: Side) -> usize {
        let t = &self.flat;
        let (k_min, k_max) = self.span_bounds();
        match side {
            Side::Right => {
                let mut k = t.partition_point(|v| *v <= x);
                k = k.saturating_sub(1).clamp(k_min, k_max);
                while k > k_min && t[k] == t[k + 1] {
                    k -= 1;
                }
                k
            }
            Side::Left => {
                let mut k = t.partition_point(|v| *v < x);
                k = k.saturating_sub(1).clamp(k_min, k_max);
                while k < k_max && t[k] == t[k + 1] {
                    k += 1;
                }
                k
            }
        }
    }

    /// Values of the `degree+1` basis functions that are nonzero on the span
    /// containing `x`. Returns the index of the first such function.
    pub fn basis_values_at(&self, x: R, side: Side) -> (usize, Vec<R>) {
        let d = self.degree;
        let k = self.find_span(x, side);
        let t = &self.flat;
        let mut values = vec![R::zero(); d + 1];
        let mut left = vec![R::zero(); d + 1];
        let mut right = vec![R::zero(); d + 1];
        values[0] = R::one();
        for r in 1..=d {
            left[r] = x - t[k + 1 - r];
            right[r] = t[k + r] - x;
            let mut saved = R::zero();
            for i in 0..r {
                let tmp = values[i] / (right[i + 1] + left[r - i]);
                values[i] = saved + right[i + 1] * tmp;
                saved = left[r - i] * tmp;
            }
            values[r] = saved;
        }
        (k - d, values)
    }

    /// Values and derivatives (orders `0..=n_der`) of the nonzero basis
    /// functions at `x`. Row `o` holds the order-`o` derivatives.
    pub fn basis_derivatives_at(&self, x: R, side: Side, n_der: usize) -> (usize, Vec<Vec<R>>) {
        let d = self.degree;
        let n_der = n_der.min(d);
        let k = self.find_span(x, side);
        let t = &self.flat;

        // ndu upper triangle: basis values by degree; lower: knot differences.
        let mut ndu = vec![vec![R::zero(); d + 1]; d + 1];
        let mut left = vec![R::zero(); d + 1];
        let mut right = vec![R::zero(); d + 1];
        ndu[0][0] = R::one();
        for j in 1..=d {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = R::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![R::zero(); d + 1]; n_der + 1];
        for (j, row) in ndu.iter().enumerate().take(d + 1) {
            ders[0][j] = row[d];
        }
        let mut a = [vec![R::zero(); d + 1], vec![R::zero(); d + 1]];
        for r in 0..=d as isize {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0].iter_mut().for_each(|v| *v = R::zero());
            a[1].iter_mut().for_each(|v| *v = R::zero());
            a[0][0] = R::one();
            for order in 1..=n_der as isize {
                let mut acc = R::zero();
                let rk = r - order;
                let pk = d as isize - order;
                if r >= order {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    acc = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { -rk };
                let j2 = if r - 1 <= pk {
                    order - 1
                } else {
                    d as isize - r
                };
                for j in j1..=j2 {
                    a[s2][j as usize] = (a[s1][j as usize] - a[s1][(j - 1) as usize])
                        / ndu[(pk + 1) as usize][(rk + j) as usize];
                    acc += a[s2][j as usize] * ndu[(rk + j) as usize][pk as usize];
                }
                if r <= pk {
                    a[s2][order as usize] = -a[s1][(order - 1) as usize]
                        / ndu[(pk + 1) as usize][r as usize];
                    acc += a[s2][order as usize] * ndu[r as usize][pk as usize];
                }
                ders[order as usize][r as usize] = acc;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = R::from_usize(d);
        for order in 1..=n_der {
            for v in ders[order].iter_mut() {
                *v *= factor;
            }
            factor *= R::from_usize(d - order);
        }
        (k - d, ders)
    }

    /// Single basis function value, zero outside its support.
    pub fn basis_value(&self, j: usize, x: R, side: Side) -> R {
        let dim = self.dimension();
        assert!(j < dim, "basis index {j} out of range (dim {dim})");
        let (first, values) = self.basis_values_at(x, side);
        if j >= first && j <= first + self.degree {
            values[j - first]
        } else {
            R::zero()
        }
    }

    /// Single basis derivative of the given order, zero outside support.
    pub fn basis_derivative(&self, j: usize, x: R, side: Side, order: usize) -> R {
        let dim = self.dimension();
        assert!(j < dim, "basis index {j} out of range (dim {dim})");
        let (first, ders) = self.basis_derivatives_at(x, side, order);
        if j >= first && j <= first + self.degree {
            ders[order][j - first]
        } else {
            R::zero()
        }
    }

    /// True when `x` coincides (knot tolerance) with an interior breakpoint of
    /// full multiplicity `degree+1`, i.e. a discontinuity of the space.
    pub fn is_discontinuity_point(&self, x: R) -> bool {
        let (a, b) = self.domain();
        let tol = (b - a) * R::from_f64(KNOT_REL_TOL);
        let bps = self.knots.breakpoints();
        let mults = self.knots.multiplicities();
        for i in 1..bps.len() - 1 {
            if (bps[i] - x).abs() <= tol && mults[i] == self.degree + 1 {
                return true;
            }
        }
        false
    }

    /// Affinely map the space onto a new domain.
    pub fn affine_mapped(&self, new_a: R, new_b: R) -> SplineSpace<R> {
        let (a, b) = self.domain();
        let scale = (new_b - new_a) / (b - a);
        let bps = self
            .knots
            .breakpoints()
            .iter()
            .map(|&x| new_a + (x - a) * scale)
            .collect();
        let knots = KnotVector::new(bps, self.knots.multiplicities().to_vec()).unwrap();
        SplineSpace::new(self.degree, knots, self.kind).unwrap()
    }
}

/// Join two spaces of equal degree over adjacent domains; the shared
/// breakpoint receives full multiplicity so the bases decouple.
pub fn merge_c_minus_1<R: Real>(
    left: &SplineSpace<R>,
    right: &SplineSpace<R>,
) -> Result<SplineSpace<R>, SplineError> {
    if left.degree() != right.degree() {
        return Err(SplineError::DegreeMismatch);
    }
    let (_, left_b) = left.domain();
    let (right_a, right_b) = right.domain();
    let tol = (right_b - left.domain().0) * R::from_f64(KNOT_REL_TOL);
    if (left_b - right_a).abs() > tol {
        return Err(SplineError::DomainMismatch);
    }
    let d = left.degree();
    let mut bps: Vec<R> = left.knots().breakpoints().to_vec();
    let mut mults: Vec<usize> = left.knots().multiplicities().to_vec();
    *mults.last_mut().unwrap() = d + 1;
    bps.extend_from_slice(&right.knots().breakpoints()[1..]);
    mults.extend_from_slice(&right.knots().multiplicities()[1..]);
    let knots = KnotVector::new(bps, mults)?;
    SplineSpace::new(d, knots, SpaceKind::Merged)
}

/// Parameters of a Galerkin discretization: original degree `p`, continuity
/// `k`, and derivative order `l` of the operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GalerkinSpec {
    pub p: usize,
    pub k: usize,
    pub l: usize,
}

impl GalerkinSpec {
    pub fn new(p: usize, k: usize, l: usize) -> Result<Self, SplineError> {
        if l > k || k >= p {
            return Err(SplineError::BadGalerkinSpec { p, k, l });
        }
        Ok(GalerkinSpec { p, k, l })
    }
}

/// Smallest space containing all products appearing in mass and stiffness
/// assembly: degree `2p`, continuity `k - l`.
pub fn galerkin_target(spec: GalerkinSpec) -> (usize, i64) {
    (2 * spec.p, spec.k as i64 - spec.l as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space_6_757() -> SplineSpace<f64> {
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![7, 5, 7]).unwrap();
        SplineSpace::new(6, kv, SpaceKind::Source).unwrap()
    }

    #[test]
    fn galerkin_target_examples() {
        assert_eq!(galerkin_target(GalerkinSpec::new(3, 2, 1).unwrap()), (6, 1));
        assert_eq!(galerkin_target(GalerkinSpec::new(2, 1, 1).unwrap()), (4, 0));
        assert_eq!(galerkin_target(GalerkinSpec::new(1, 0, 0).unwrap()), (2, 0));
        assert!(GalerkinSpec::new(3, 1, 2).is_err());
        assert!(GalerkinSpec::new(2, 2, 0).is_err());
    }

    #[test]
    fn dimensions_match_reference_counts() {
        assert_eq!(space_6_757().dimension(), 12);

        let kv = KnotVector::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![5, 4, 5, 4, 5],
        )
        .unwrap();
        let s = SplineSpace::new(4, kv, SpaceKind::Source).unwrap();
        assert_eq!(s.dimension(), 18);

        let bps = vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0];
        let s = SplineSpace::with_continuity(6, 1, bps, SpaceKind::Target).unwrap();
        assert_eq!(s.dimension(), 42);
    }

    #[test]
    fn optimal_node_counts() {
        let bps: Vec<f64> = (0..=16).map(|i| i as f64).collect();
        let s = SplineSpace::with_continuity(6, 1, bps, SpaceKind::Target).unwrap();
        assert_eq!(s.dimension(), 82);
        assert_eq!(s.optimal_node_count(), (41, RuleKind::Gauss));

        let bps: Vec<f64> = (0..=32).map(|i| i as f64).collect();
        let s = SplineSpace::with_continuity(4, 0, bps, SpaceKind::Target).unwrap();
        assert_eq!(s.dimension(), 129);
        assert_eq!(s.optimal_node_count(), (65, RuleKind::GaussRadau));

        assert_eq!(space_6_757().optimal_node_count(), (6, RuleKind::Gauss));
    }

    #[test]
    fn endpoint_basis_values() {
        let s = space_6_757();
        assert_eq!(s.basis_value(0, 0.0, Side::Right), 1.0);
        assert_eq!(s.basis_value(11, 2.0, Side::Left), 1.0);
        assert_eq!(s.basis_value(5, 0.0, Side::Right), 0.0);
    }

    fn random_space(rng: &mut ChaCha8Rng) -> SplineSpace<f64> {
        let degree = [2usize, 3, 4, 5, 6][rng.gen_range(0..5)];
        let n_elem = rng.gen_range(1..=5);
        let mut bps = vec![0.0f64];
        for _ in 0..n_elem {
            let last = *bps.last().unwrap();
            bps.push(last + rng.gen_range(0.3..2.0));
        }
        let mut mults = vec![degree + 1];
        for _ in 1..n_elem {
            mults.push(rng.gen_range(1..=degree + 1));
        }
        mults.push(degree + 1);
        let kv = KnotVector::new(bps, mults).unwrap();
        SplineSpace::new(degree, kv, SpaceKind::Target).unwrap()
    }

    #[test]
    fn partition_of_unity_on_random_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let s = random_space(&mut rng);
            let (a, b) = s.domain();
            for _ in 0..100 {
                let x = a + (b - a) * rng.gen::<f64>();
                let (_, values) = s.basis_values_at(x, Side::Right);
                let sum: f64 = values.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-14, "PU failed at {x}: {sum}");
            }
        }
    }

    #[test]
    fn dimension_formula_on_random_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let s = random_space(&mut rng);
            let total: usize = s.knots().multiplicities().iter().sum();
            assert_eq!(s.dimension(), total - (s.degree() + 1));
        }
    }

    #[test]
    fn basis_integrals_sum_to_domain_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let s = random_space(&mut rng);
            let (a, b) = s.domain();
            let sum = (0..s.dimension()).map(|j| s.basis_integral(j)).sum::<f64>();
            assert!((sum - (b - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_scaled_integrals_for_block_spaces() {
        let s = space_6_757();
        for j in 0..s.dimension() {
            let scaled = s.basis_integral(j) * s.unit_basis_scale(j);
            assert!((scaled - 1.0 / 7.0).abs() < 1e-15);
        }
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 4, 5]).unwrap();
        let s = SplineSpace::new(4, kv, SpaceKind::Source).unwrap();
        for j in 0..s.dimension() {
            let scaled = s.basis_integral(j) * s.unit_basis_scale(j);
            assert!((scaled - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn c0_basis_is_continuous_at_middle_knot() {
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 4, 5]).unwrap();
        let s = SplineSpace::new(4, kv, SpaceKind::Target).unwrap();
        for j in 0..s.dimension() {
            let l = s.basis_value(j, 1.0, Side::Left);
            let r = s.basis_value(j, 1.0, Side::Right);
            assert!((l - r).abs() < 1e-14, "basis {j}: left {l} right {r}");
        }
    }

    #[test]
    fn one_sided_derivatives_agree_up_to_continuity_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = random_space(&mut rng);
            let bps = s.knots().breakpoints().to_vec();
            for (k, &x) in bps.iter().enumerate().take(bps.len() - 1).skip(1) {
                let smooth = s.continuity_at(k);
                if smooth < 0 {
                    continue;
                }
                for j in 0..s.dimension() {
                    let (_, dl) = s.basis_derivatives_at(x, Side::Left, smooth as usize);
                    let (fl, _) = s.basis_derivatives_at(x, Side::Left, 0);
                    let (fr, dr) = s.basis_derivatives_at(x, Side::Right, smooth as usize);
                    for order in 0..=smooth as usize {
                        let vl = if j >= fl && j <= fl + s.degree() {
                            dl[order][j - fl]
                        } else {
                            0.0
                        };
                        let vr = if j >= fr && j <= fr + s.degree() {
                            dr[order][j - fr]
                        } else {
                            0.0
                        };
                        let scale = vl.abs().max(vr.abs()).max(1.0);
                        assert!(
                            (vl - vr).abs() <= 1e-10 * scale,
                            "order {order} at knot {x}: {vl} vs {vr}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn discontinuous_basis_has_one_sided_limits() {
        // C^-1 middle knot: last left function jumps from 1 to 0.
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 5, 5]).unwrap();
        let s = SplineSpace::new(4, kv, SpaceKind::Merged).unwrap();
        assert!(s.is_discontinuity_point(1.0));
        assert!(!s.is_discontinuity_point(0.5));
        let left_val = s.basis_value(4, 1.0, Side::Left);
        let right_val = s.basis_value(4, 1.0, Side::Right);
        assert!((left_val - 1.0).abs() < 1e-14);
        assert!(right_val.abs() < 1e-14);
    }

    #[test]
    fn merge_examples() {
        let left = space_6_757();
        let right = left.affine_mapped(2.0, 4.0);
        let merged = merge_c_minus_1(&left, &right).unwrap();
        assert_eq!(merged.knots().multiplicities(), &[7, 5, 7, 5, 7]);
        assert_eq!(merged.dimension(), left.dimension() + right.dimension());

        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 4, 5]).unwrap();
        let l = SplineSpace::new(4, kv, SpaceKind::Source).unwrap();
        let r = l.affine_mapped(2.0, 4.0);
        let m = merge_c_minus_1(&l, &r).unwrap();
        assert_eq!(m.knots().multiplicities(), &[5, 4, 5, 4, 5]);
        assert_eq!(m.dimension(), 18);

        let detached = l.affine_mapped(3.0, 5.0);
        assert!(merge_c_minus_1(&l, &detached).is_err());
        let wrong_degree = space_6_757().affine_mapped(2.0, 4.0);
        assert!(merge_c_minus_1(&l, &wrong_degree).is_err());
    }
}
