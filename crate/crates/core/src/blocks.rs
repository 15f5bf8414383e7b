//! Two-element (and four-element Gauss-Radau) building blocks: the smallest
//! spline spaces whose optimal rules are solved directly from their algebraic
//! systems. These seed the continuation that derives rules for larger spaces.

use crate::linalg::{solve_in_place, Matrix};
use crate::newton::{self, NewtonOptions, NonlinearSystem};
use crate::quadrature::{self, QuadratureRule};
use crate::real::Real;
use crate::spline::{KnotVector, RuleKind, SpaceKind, SplineSpace};
use crate::system::{ExactnessSystem, NodeSlot, SlotValues};

#[derive(Debug, thiserror::Error)]
pub enum BlockError {
    #[error("resultant polynomial root count {got} in [0,1], expected {expected}")]
    RootCount { expected: usize, got: usize },
    #[error("root filtering left {survivors} candidate node sets, expected exactly one")]
    Filtering { survivors: usize },
    #[error("closed-form / numeric cross-check mismatch: {what} differs by {diff:e}")]
    CrossCheck { what: &'static str, diff: f64 },
    #[error("block system has {dim}-dimensional space, unsupported for kind {kind:?}")]
    BadDimension { dim: usize, kind: RuleKind },
    #[error("no Newton seed converged for the block system")]
    NoSeed,
    #[error("derived block fails verification: residual norm {norm:e}")]
    Verification { norm: f64 },
    #[error(transparent)]
    Newton(#[from] newton::NewtonError),
    #[error(transparent)]
    Spline(#[from] crate::spline::SplineError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

/// Two-element block request; the rule kind follows the parity of the block
/// space dimension (even: Gauss, odd: Gauss-Radau).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub degree: usize,
    pub continuity: i64,
    pub n_elements: usize,
}

impl BlockSpec {
    pub fn new(degree: usize, continuity: i64, n_elements: usize) -> Self {
        BlockSpec {
            degree,
            continuity,
            n_elements,
        }
    }

    /// Dimension of the two-element open block space.
    pub fn two_element_dimension(&self) -> usize {
        self.degree + 1 + (self.degree as i64 - self.continuity) as usize
    }

    pub fn kind(&self) -> RuleKind {
        if self.two_element_dimension() % 2 == 0 {
            RuleKind::Gauss
        } else {
            RuleKind::GaussRadau
        }
    }
}

fn horner<R: Real>(coeffs: &[i64], x: R) -> (R, R) {
    let mut value = R::zero();
    let mut derivative = R::zero();
    for &c in coeffs.iter().rev() {
        derivative = derivative * x + value;
        value = value * x + R::from_i64(c);
    }
    (value, derivative)
}

/// All real roots of an integer-coefficient polynomial inside `[lo, hi]`, by
/// sign-change scan plus bisection, then Newton polishing in `R` precision.
fn real_roots_in<R: Real>(coeffs: &[i64], lo: f64, hi: f64, scan: usize) -> Vec<R> {
    let eval_f64 = |x: f64| horner::<f64>(coeffs, x).0;
    let mut roots = Vec::new();
    let h = (hi - lo) / scan as f64;
    let mut prev_x = lo;
    let mut prev_v = eval_f64(lo);
    for i in 1..=scan {
        let x = lo + h * i as f64;
        let v = eval_f64(x);
        if prev_v == 0.0 {
            roots.push(prev_x);
        } else if prev_v * v < 0.0 {
            let (mut a, mut b) = (prev_x, x);
            let (mut fa, _) = (prev_v, v);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let fm = eval_f64(mid);
                if fa * fm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_v = v;
    }
    roots
        .into_iter()
        .map(|r0| {
            let mut r = R::from_f64(r0);
            for _ in 0..8 {
                let (v, dv) = horner::<R>(coeffs, r);
                if dv == R::zero() {
                    break;
                }
                r -= v / dv;
            }
            r
        })
        .collect()
}

/// Coefficients (ascending powers) of the resultant sextic whose roots in
/// [0,1] contain the three first-element node positions of the degree-6 C^1
/// block rule, plus two false positives introduced by the factorization.
const SEXTIC_D6C1: [i64; 7] = [2, -54, 507, -2024, 3840, -3402, 1127];

fn block_space_d6c1<R: Real>() -> SplineSpace<R> {
    let kv = KnotVector::new(
        vec![R::zero(), R::one(), R::from_i64(2)],
        vec![7, 5, 7],
    )
    .unwrap();
    SplineSpace::new(6, kv, SpaceKind::Source).unwrap()
}

/// Optimal six-node rule for the degree-6, C^1 two-element block on [0, 2].
///
/// Finds candidate node positions among the roots of the resultant sextic,
/// filters false positives by back-substitution (linear weight solve plus the
/// residual of the remaining equations, positivity, ordering), and polishes
/// the unique survivor on the full exactness system.
pub fn gauss_block_d6c1<R: Real>() -> Result<QuadratureRule<R>, BlockError> {
    let space = block_space_d6c1::<R>();
    let dim = space.dimension();
    let two = R::from_i64(2);
    let roots = real_roots_in::<R>(&SEXTIC_D6C1, 0.0, 1.0, 4096);
    if roots.len() != 5 {
        return Err(BlockError::RootCount {
            expected: 5,
            got: roots.len(),
        });
    }

    let residual_of = |nodes: &[R; 3], weights: &[R; 3]| -> R {
        let mut worst = R::zero();
        for j in 0..dim {
            let mut q = R::zero();
            for i in 0..3 {
                q += weights[i]
                    * (space.basis_value(j, nodes[i], crate::spline::Side::Right)
                        + space.basis_value(j, two - nodes[i], crate::spline::Side::Right));
            }
            worst = worst.max_of((q - space.basis_integral(j)).abs());
        }
        worst
    };

    let mut survivor: Option<([R; 3], [R; 3])> = None;
    let mut survivors = 0usize;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            for k in j + 1..roots.len() {
                let nodes = [roots[i], roots[j], roots[k]];
                // Weights from the first three exactness equations, which are
                // linear once the nodes are fixed.
                let mut a = Matrix::zeros(3, 3);
                let mut b = vec![R::zero(); 3];
                for eq in 0..3 {
                    for (col, node) in nodes.iter().enumerate() {
                        let v = space.basis_value(eq, *node, crate::spline::Side::Right)
                            + space.basis_value(eq, two - *node, crate::spline::Side::Right);
                        a.set(eq, col, v);
                    }
                    b[eq] = space.basis_integral(eq);
                }
                if solve_in_place(&mut a, &mut b).is_err() {
                    continue;
                }
                let weights = [b[0], b[1], b[2]];
                if weights.iter().any(|w| !(*w > R::zero())) {
                    continue;
                }
                if residual_of(&nodes, &weights) > R::from_f64(1e-10) {
                    continue;
                }
                survivors += 1;
                survivor = Some((nodes, weights));
            }
        }
    }
    if survivors != 1 {
        return Err(BlockError::Filtering { survivors });
    }
    let (nodes, weights) = survivor.unwrap();

    // Polish on the full 12x12 exactness system.
    let slots: Vec<NodeSlot<R>> = (0..6)
        .map(|i| {
            if i < 3 {
                NodeSlot::Free {
                    lo: R::zero(),
                    hi: R::one(),
                }
            } else {
                NodeSlot::Free {
                    lo: R::one(),
                    hi: two,
                }
            }
        })
        .collect();
    let values: Vec<SlotValues<R>> = (0..3)
        .map(|i| SlotValues {
            position: nodes[i],
            weights: (weights[i], None),
        })
        .chain((0..3).rev().map(|i| SlotValues {
            position: two - nodes[i],
            weights: (weights[i], None),
        }))
        .collect();
    let system = ExactnessSystem::new(&space, &slots, dim);
    let mut x = system.pack(&values);
    let tol = polish_tolerance::<R>();
    newton::solve(&system, &mut x, &NewtonOptions::with_tol(tol))?;
    let polished = system.unpack(&x);

    let rule = QuadratureRule::new(
        polished.iter().map(|v| v.position).collect(),
        polished.iter().map(|v| v.total_weight()).collect(),
        (R::zero(), two),
        RuleKind::Gauss,
        None,
    )?;
    check_block(&rule, &space)?;
    Ok(rule)
}

fn polish_tolerance<R: Real>() -> R {
    R::epsilon() * R::from_f64(64.0)
}

fn check_block<R: Real>(
    rule: &QuadratureRule<R>,
    space: &SplineSpace<R>,
) -> Result<(), BlockError> {
    rule.validate_finalized()?;
    let report = quadrature::residuals(rule, space)?;
    let tol = quadrature::default_exactness_tol::<R>();
    if report.max_abs > tol {
        return Err(BlockError::Verification {
            norm: report.max_abs.to_f64(),
        });
    }
    Ok(())
}

/// The two coupled quartic systems of the degree-4 C^0 Gauss-Radau block,
/// kept in their literal printed form for the closed-form cross-check.
struct QuarticFirstElement;

impl<R: Real> NonlinearSystem<R> for QuarticFirstElement {
    fn dim(&self) -> usize {
        4
    }
    fn residual(&self, x: &[R], out: &mut [R]) {
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let one = R::one();
        let fifth = R::from_ratio(1, 5);
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        out[0] = w1 * (one - t1).powi(4) + w2 * (one - t2).powi(4) - fifth;
        out[1] = c4 * t1 * w1 * (one - t1).powi(3) + c4 * t2 * w2 * (one - t2).powi(3) - fifth;
        out[2] = c6 * t1 * t1 * w1 * (one - t1).powi(2) + c6 * t2 * t2 * w2 * (one - t2).powi(2)
            - fifth;
        out[3] = c4 * t1.powi(3) * w1 * (one - t1) + c4 * t2.powi(3) * w2 * (one - t2) - fifth;
    }
    fn jacobian(&self, x: &[R], out: &mut Matrix<R>) {
        let one = R::one();
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        for (col, (t, w)) in [(x[0], x[2]), (x[1], x[3])].into_iter().enumerate() {
            let u = one - t;
            // d/dt and d/dw of each equation's (t, w) term.
            let rows = [
                (-c4 * w * u.powi(3), u.powi(4)),
                (
                    c4 * w * (u.powi(3) - R::from_i64(3) * t * u.powi(2)),
                    c4 * t * u.powi(3),
                ),
                (
                    c6 * w * (R::from_i64(2) * t * u.powi(2) - R::from_i64(2) * t * t * u),
                    c6 * t * t * u.powi(2),
                ),
                (
                    c4 * w * (R::from_i64(3) * t * t * u - t.powi(3)),
                    c4 * t.powi(3) * u,
                ),
            ];
            for (row, (dt, dw)) in rows.into_iter().enumerate() {
                out.set(row, col, dt);
                out.set(row, col + 2, dw);
            }
        }
    }
}

struct QuarticSecondElement<R: Real> {
    rho: R,
}

impl<R: Real> NonlinearSystem<R> for QuarticSecondElement<R> {
    fn dim(&self) -> usize {
        5
    }
    fn residual(&self, x: &[R], out: &mut [R]) {
        let (t3, t4, w3, w4, w5) = (x[0], x[1], x[2], x[3], x[4]);
        let one = R::one();
        let two = R::from_i64(2);
        let fifth = R::from_ratio(1, 5);
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        // The spanning C^0 function integrates to 2/5 over its two elements
        // in this per-element scaling; rho is its first-element part.
        out[0] = w3 * (two - t3).powi(4) + w4 * (two - t4).powi(4)
            - (two * fifth - self.rho);
        out[1] = c4 * (t3 - one) * w3 * (two - t3).powi(3)
            + c4 * (t4 - one) * w4 * (two - t4).powi(3)
            - fifth;
        out[2] = c6 * (t3 - one).powi(2) * w3 * (two - t3).powi(2)
            + c6 * (t4 - one).powi(2) * w4 * (two - t4).powi(2)
            - fifth;
        out[3] = c4 * (t3 - one).powi(3) * w3 * (two - t3)
            + c4 * (t4 - one).powi(3) * w4 * (two - t4)
            - fifth;
        out[4] = (t3 - one).powi(4) * w3 + (t4 - one).powi(4) * w4 + w5 * R::from_ratio(1, 2)
            - fifth;
    }
    fn jacobian(&self, x: &[R], out: &mut Matrix<R>) {
        out.fill_zero();
        let one = R::one();
        let two = R::from_i64(2);
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        for (col, (t, w)) in [(x[0], x[2]), (x[1], x[3])].into_iter().enumerate() {
            let s = t - one;
            let u = two - t;
            let rows = [
                (-c4 * w * u.powi(3), u.powi(4)),
                (
                    c4 * w * (u.powi(3) - R::from_i64(3) * s * u.powi(2)),
                    c4 * s * u.powi(3),
                ),
                (
                    c6 * w * (R::from_i64(2) * s * u.powi(2) - R::from_i64(2) * s * s * u),
                    c6 * s * s * u.powi(2),
                ),
                (
                    c4 * w * (R::from_i64(3) * s * s * u - s.powi(3)),
                    c4 * s.powi(3) * u,
                ),
                (c4 * s.powi(3) * w, s.powi(4)),
            ];
            for (row, (dt, dw)) in rows.into_iter().enumerate() {
                out.set(row, col, dt);
                out.set(row, col + 2, dw);
            }
        }
        out.set(4, 4, R::from_ratio(1, 2));
    }
}

/// Closed-form values of the degree-4 C^0 Gauss-Radau block, assembled over
/// four unit elements on [0, 4] with the pinned node at the discontinuity
/// knot x = 2. Everything is cross-checked against a numeric solve of the
/// same coupled systems.
pub fn radau_block_d4c0<R: Real>() -> Result<QuadratureRule<R>, BlockError> {
    let sqrt6 = R::from_i64(6).sqrt();
    let sqrt174 = R::from_i64(174).sqrt();
    let t1 = R::from_ratio(2, 5) - sqrt6 / R::from_i64(10);
    let t2 = R::from_ratio(2, 5) + sqrt6 / R::from_i64(10);
    let w1 = R::from_ratio(4, 9) - sqrt6 / R::from_i64(36);
    let w2 = R::from_ratio(4, 9) + sqrt6 / R::from_i64(36);
    let rho = w1 * t1.powi(4) + w2 * t2.powi(4);
    let rho_diff = (rho - R::from_ratio(4, 45)).abs();
    if rho_diff > R::from_f64(1e-14) {
        return Err(BlockError::CrossCheck {
            what: "first-element residuum",
            diff: rho_diff.to_f64(),
        });
    }
    let t3 = R::from_ratio(34, 25) - sqrt174 / R::from_i64(50);
    let t4 = R::from_ratio(34, 25) + sqrt174 / R::from_i64(50);
    let w3 = R::from_ratio(76, 153) - R::from_i64(7) * sqrt174 / R::from_i64(1972);
    let w4 = R::from_ratio(76, 153) + R::from_i64(7) * sqrt174 / R::from_i64(1972);
    let w5 = R::from_ratio(4, 17);

    // Numeric route: damped Newton on the printed coupled systems, seeded
    // near the closed forms (the printed second system has a spurious far
    // branch that does not solve the underlying basis equations).
    let opts = NewtonOptions::polishing(polish_tolerance::<R>());
    let mut x1 = [
        R::from_f64(0.16),
        R::from_f64(0.64),
        R::from_f64(0.38),
        R::from_f64(0.51),
    ];
    newton::solve(&QuarticFirstElement, &mut x1, &opts)?;
    let mut x2 = [
        R::from_f64(1.10),
        R::from_f64(1.62),
        R::from_f64(0.45),
        R::from_f64(0.54),
        R::from_f64(0.24),
    ];
    newton::solve(
        &QuarticSecondElement {
            rho: x1[2] * x1[0].powi(4) + x1[3] * x1[1].powi(4),
        },
        &mut x2,
        &opts,
    )?;
    let closed = [t1, t2, w1, w2, t3, t4, w3, w4, w5];
    let numeric = [x1[0], x1[1], x1[2], x1[3], x2[0], x2[1], x2[2], x2[3], x2[4]];
    const NAMES: [&str; 9] = [
        "tau1", "tau2", "omega1", "omega2", "tau3", "tau4", "omega3", "omega4", "omega5",
    ];
    for ((c, n), name) in closed.iter().zip(&numeric).zip(NAMES) {
        let diff = (*c - *n).abs();
        if diff > R::from_f64(1e-14) {
            return Err(BlockError::CrossCheck { what: name, diff: diff.to_f64() });
        }
    }

    let two = R::from_i64(2);
    let four = R::from_i64(4);
    let nodes = vec![t1, t2, t3, t4, two, four - t4, four - t3, four - t2, four - t1];
    let weights = vec![w1, w2, w3, w4, w5, w4, w3, w2, w1];
    let rule = QuadratureRule::new(nodes, weights, (R::zero(), four), RuleKind::GaussRadau, Some(4))?;
    let kv = KnotVector::new(
        vec![R::zero(), R::one(), two, R::from_i64(3), four],
        vec![5, 4, 5, 4, 5],
    )?;
    let space = SplineSpace::new(4, kv, SpaceKind::Source)?;
    check_block(&rule, &space)?;
    Ok(rule)
}

/// Generic two-element block rule over arbitrary breakpoints, solved by
/// damped Newton from equispaced multi-start seeds.
pub fn two_element_rule<R: Real>(
    degree: usize,
    continuity: i64,
    breakpoints: [R; 3],
) -> Result<QuadratureRule<R>, BlockError> {
    let space = SplineSpace::with_continuity(
        degree,
        continuity,
        breakpoints.to_vec(),
        SpaceKind::Source,
    )?;
    let dim = space.dimension();
    let (m, kind) = space.optimal_node_count();
    match kind {
        RuleKind::Gauss => solve_free_block(&space, m, &breakpoints),
        RuleKind::GaussRadau => radau_half_on(&space, m, &breakpoints),
    }
    .map_err(|e| match e {
        BlockError::NoSeed => BlockError::BadDimension { dim, kind },
        other => other,
    })
}

fn seed_positions<R: Real>(lo: R, hi: R, count: usize) -> Vec<R> {
    (0..count)
        .map(|i| lo + (hi - lo) * R::from_usize(i + 1) / R::from_usize(count + 1))
        .collect()
}

/// Seed nodes/weights for `count` nodes in one element: Gauss-Legendre
/// positions resemble the optimal layout far better than equispaced ones.
fn seed_element<R: Real>(lo: R, hi: R, count: usize, equispaced: bool) -> Vec<(R, R)> {
    if count == 0 {
        return Vec::new();
    }
    if equispaced {
        let w0 = (hi - lo) / R::from_usize(count);
        return seed_positions(lo, hi, count)
            .into_iter()
            .map(|p| (p, w0))
            .collect();
    }
    let (gl_nodes, gl_weights) = crate::reference::gauss_legendre::<R>(count);
    let half = R::from_ratio(1, 2);
    let mid = (lo + hi) * half;
    let scale = (hi - lo) * half;
    gl_nodes
        .into_iter()
        .zip(gl_weights)
        .map(|(x, w)| (mid + scale * x, w * scale))
        .collect()
}

fn solve_free_block<R: Real>(
    space: &SplineSpace<R>,
    m: usize,
    breakpoints: &[R; 3],
) -> Result<QuadratureRule<R>, BlockError> {
    let dim = space.dimension();
    let mut splits: Vec<(usize, usize)> = Vec::new();
    let base = m / 2;
    for delta in [0i64, 1, -1, 2, -2] {
        let n1 = base as i64 + delta;
        if n1 >= 0 && n1 <= m as i64 {
            splits.push((n1 as usize, m - n1 as usize));
        }
    }
    for equispaced in [false, true] {
        for &(n1, n2) in &splits {
            let mut slots = Vec::with_capacity(m);
            let mut values = Vec::with_capacity(m);
            for (count, (lo, hi)) in [
                (n1, (breakpoints[0], breakpoints[1])),
                (n2, (breakpoints[1], breakpoints[2])),
            ] {
                for (p, w0) in seed_element(lo, hi, count, equispaced) {
                    slots.push(NodeSlot::Free { lo, hi });
                    values.push(SlotValues {
                        position: p,
                        weights: (w0, None),
                    });
                }
            }
            let system = ExactnessSystem::new(space, &slots, dim);
            let mut x = system.pack(&values);
            if newton::solve(&system, &mut x, &NewtonOptions::polishing(polish_tolerance::<R>()))
                .is_err()
            {
                continue;
            }
            let solved = system.unpack(&x);
            let nodes: Vec<R> = solved.iter().map(|v| v.position).collect();
            let weights: Vec<R> = solved.iter().map(|v| v.total_weight()).collect();
            if nodes.windows(2).any(|w| !(w[0] < w[1])) {
                continue;
            }
            if weights.iter().any(|w| !(*w > R::zero())) {
                continue;
            }
            let rule = QuadratureRule::new(
                nodes,
                weights,
                (breakpoints[0], breakpoints[2]),
                RuleKind::Gauss,
                None,
            )?;
            if check_block(&rule, space).is_ok() {
                return Ok(rule);
            }
        }
    }
    Err(BlockError::NoSeed)
}

/// Odd-dimensional (Gauss-Radau) half block: the last node is pinned on the
/// right boundary and only its weight remains unknown. The returned pinned
/// weight is this half-space share; mirroring into the four-element block
/// doubles it.
fn radau_half_on<R: Real>(
    space: &SplineSpace<R>,
    m: usize,
    breakpoints: &[R; 3],
) -> Result<QuadratureRule<R>, BlockError> {
    let dim = space.dimension();
    let free = m - 1;
    let base = free / 2;
    let mut splits: Vec<(usize, usize)> = Vec::new();
    for delta in [0i64, 1, -1] {
        let n1 = base as i64 + delta;
        if n1 >= 0 && n1 <= free as i64 {
            splits.push((n1 as usize, free - n1 as usize));
        }
    }
    for equispaced in [false, true] {
        for &(n1, n2) in &splits {
            let mut slots = Vec::with_capacity(m);
            let mut values = Vec::with_capacity(m);
            for (count, (lo, hi)) in [
                (n1, (breakpoints[0], breakpoints[1])),
                (n2, (breakpoints[1], breakpoints[2])),
            ] {
                for (p, w0) in seed_element(lo, hi, count, equispaced) {
                    slots.push(NodeSlot::Free { lo, hi });
                    values.push(SlotValues {
                        position: p,
                        weights: (w0, None),
                    });
                }
            }
            slots.push(NodeSlot::PinnedBoundary {
                position: breakpoints[2],
            });
            values.push(SlotValues {
                position: breakpoints[2],
                weights: ((breakpoints[2] - breakpoints[0]) / R::from_usize(2 * m), None),
            });
            let system = ExactnessSystem::new(space, &slots, dim);
            let mut x = system.pack(&values);
            if newton::solve(&system, &mut x, &NewtonOptions::polishing(polish_tolerance::<R>()))
                .is_err()
            {
                continue;
            }
            let solved = system.unpack(&x);
            let nodes: Vec<R> = solved.iter().map(|v| v.position).collect();
            let weights: Vec<R> = solved.iter().map(|v| v.total_weight()).collect();
            if nodes.windows(2).any(|w| !(w[0] < w[1]))
                || weights.iter().any(|w| !(*w > R::zero()))
            {
                continue;
            }
            let rule = QuadratureRule::new(
                nodes,
                weights,
                (breakpoints[0], breakpoints[2]),
                RuleKind::GaussRadau,
                Some(m - 1),
            )?;
            // Half rule: weight sum equals the domain length only after
            // mirroring, so check exactness directly.
            let report = quadrature::residuals(&rule, space)?;
            if report.max_abs > quadrature::default_exactness_tol::<R>() {
                continue;
            }
            return Ok(rule);
        }
    }
    let _ = dim;
    Err(BlockError::NoSeed)
}

/// Solve a canonical unit-element block per `spec`: two-element rules on
/// [0, 2], four-element Gauss-Radau assemblies on [0, 4].
pub fn solve_block<R: Real>(spec: &BlockSpec) -> Result<QuadratureRule<R>, BlockError> {
    let two = R::from_i64(2);
    match (spec.n_elements, spec.kind()) {
        (2, _) => two_element_rule(spec.degree, spec.continuity, [R::zero(), R::one(), two]),
        (4, RuleKind::GaussRadau) => {
            let half = two_element_rule(spec.degree, spec.continuity, [R::zero(), R::one(), two])?;
            let mut nodes = half.nodes().to_vec();
            let mut weights = half.weights().to_vec();
            // The shared discontinuity node carries both halves' shares.
            let last = weights.len() - 1;
            weights[last] = weights[last] * two;
            let m = nodes.len();
            for i in (0..m - 1).rev() {
                nodes.push(two + two - half.nodes()[i]);
                weights.push(half.weights()[i]);
            }
            let rule = QuadratureRule::new(
                nodes,
                weights,
                (R::zero(), R::from_i64(4)),
                RuleKind::GaussRadau,
                Some(m - 1),
            )?;
            rule.validate_finalized()?;
            Ok(rule)
        }
        (n, kind) => Err(BlockError::BadDimension {
            dim: n,
            kind,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::DDouble;
    use crate::spline::Side;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn degree6_block_reproduces_reference_values() {
        let rule = gauss_block_d6c1::<f64>().unwrap();
        assert_eq!(rule.len(), 6);
        // First-element nodes and weights; the remaining three mirror them.
        let expect = [
            (0.09242547443652244021, 0.23004836288935413032),
            (0.42759570120004222829, 0.40614522687566702979),
            (0.82792440129801198117, 0.36380641023497883991),
        ];
        for (i, (t, w)) in expect.iter().enumerate() {
            assert!(rel_close(rule.nodes()[i], *t, 1e-14), "node {i}");
            assert!(rel_close(rule.weights()[i], *w, 1e-14), "weight {i}");
        }
        let space = block_space_d6c1::<f64>();
        let report = quadrature::residuals(&rule, &space).unwrap();
        assert!(report.max_abs <= 1e-13);
    }

    #[test]
    fn degree6_block_nodes_are_sextic_roots() {
        let rule = gauss_block_d6c1::<f64>().unwrap();
        for i in 0..3 {
            let (v, _) = horner::<f64>(&SEXTIC_D6C1, rule.nodes()[i]);
            assert!(v.abs() < 1e-10, "node {i} is not a sextic root: {v:e}");
        }
        // The sextic has five roots in [0,1]; two are false positives.
        let roots = real_roots_in::<f64>(&SEXTIC_D6C1, 0.0, 1.0, 4096);
        assert_eq!(roots.len(), 5);
    }

    #[test]
    fn degree6_block_in_extended_precision() {
        let rule = gauss_block_d6c1::<DDouble>().unwrap();
        let t1 = DDouble::parse_str("0.09242547443652244021345644").unwrap();
        assert!((rule.nodes()[0] - t1).abs().to_f64() < 1e-25);
        let space = block_space_d6c1::<DDouble>();
        let report = quadrature::residuals(&rule, &space).unwrap();
        assert!(report.max_abs.to_f64() <= 1e-26);
    }

    #[test]
    fn degree4_block_closed_forms() {
        let rule = radau_block_d4c0::<f64>().unwrap();
        assert_eq!(rule.len(), 9);
        let s6 = 6.0f64.sqrt();
        let s174 = 174.0f64.sqrt();
        let expect_nodes = [
            0.4 - s6 / 10.0,
            0.4 + s6 / 10.0,
            34.0 / 25.0 - s174 / 50.0,
            34.0 / 25.0 + s174 / 50.0,
            2.0,
        ];
        let expect_weights = [
            4.0 / 9.0 - s6 / 36.0,
            4.0 / 9.0 + s6 / 36.0,
            76.0 / 153.0 - 7.0 * s174 / 1972.0,
            76.0 / 153.0 + 7.0 * s174 / 1972.0,
            4.0 / 17.0,
        ];
        for i in 0..5 {
            assert!(rel_close(rule.nodes()[i], expect_nodes[i], 1e-15));
            assert!(rel_close(rule.weights()[i], expect_weights[i], 1e-15));
        }
        assert_eq!(rule.pinned_index(), Some(4));
        // Residuum of the first element block.
        let rho = expect_weights[0] * expect_nodes[0].powi(4)
            + expect_weights[1] * expect_nodes[1].powi(4);
        assert!((rho - 4.0 / 45.0).abs() < 1e-15);
    }

    #[test]
    fn blocks_are_symmetric() {
        for (rule, span) in [
            (gauss_block_d6c1::<f64>().unwrap(), 2.0),
            (radau_block_d4c0::<f64>().unwrap(), 4.0),
        ] {
            let m = rule.len();
            for i in 0..m {
                assert!((rule.nodes()[i] + rule.nodes()[m - 1 - i] - span).abs() < 1e-13);
                assert!((rule.weights()[i] - rule.weights()[m - 1 - i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn generic_solver_matches_direct_blocks() {
        let direct = gauss_block_d6c1::<f64>().unwrap();
        let generic = solve_block::<f64>(&BlockSpec::new(6, 1, 2)).unwrap();
        assert_eq!(generic.len(), direct.len());
        for i in 0..direct.len() {
            assert!((generic.nodes()[i] - direct.nodes()[i]).abs() < 1e-14);
            assert!((generic.weights()[i] - direct.weights()[i]).abs() < 1e-14);
        }

        let direct = radau_block_d4c0::<f64>().unwrap();
        let generic = solve_block::<f64>(&BlockSpec::new(4, 0, 4)).unwrap();
        assert_eq!(generic.len(), direct.len());
        for i in 0..direct.len() {
            assert!((generic.nodes()[i] - direct.nodes()[i]).abs() < 1e-13);
            assert!((generic.weights()[i] - direct.weights()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn radau_half_block_is_exact_on_half_space() {
        let spec = BlockSpec::new(4, 0, 2);
        assert_eq!(spec.two_element_dimension(), 9);
        assert_eq!(spec.kind(), RuleKind::GaussRadau);
        let half = solve_block::<f64>(&spec).unwrap();
        assert_eq!(half.len(), 5);
        assert!((half.nodes()[4] - 2.0).abs() < 1e-15);
        // Pinned half-share is 2/17 (the merged four-element value is 4/17).
        assert!((half.weights()[4] - 2.0 / 17.0).abs() < 1e-14);
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![5, 4, 5]).unwrap();
        let space = SplineSpace::new(4, kv, SpaceKind::Source).unwrap();
        let report = quadrature::residuals(&half, &space).unwrap();
        assert!(report.max_abs <= 1e-13);
    }

    #[test]
    fn table_counts_for_initial_blocks() {
        assert_eq!(BlockSpec::new(4, 0, 2).two_element_dimension(), 9);
        assert_eq!(BlockSpec::new(4, 0, 2).kind(), RuleKind::GaussRadau);
        assert_eq!(BlockSpec::new(6, 1, 2).two_element_dimension(), 12);
        assert_eq!(BlockSpec::new(6, 1, 2).kind(), RuleKind::Gauss);
        assert_eq!(gauss_block_d6c1::<f64>().unwrap().len(), 6);
        // The (4,0) two-element half needs 5 nodes.
        assert_eq!(solve_block::<f64>(&BlockSpec::new(4, 0, 2)).unwrap().len(), 5);
    }

    #[test]
    fn generic_solver_handles_unequal_elements() {
        let rule = two_element_rule::<f64>(6, 1, [0.0, 0.5, 2.0]).unwrap();
        let kv = KnotVector::new(vec![0.0, 0.5, 2.0], vec![7, 5, 7]).unwrap();
        let space = SplineSpace::new(6, kv, SpaceKind::Source).unwrap();
        let report = quadrature::residuals(&rule, &space).unwrap();
        assert!(report.max_abs <= 1e-13);
        assert!(rule.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn eq19_rule_applied_to_first_basis_function() {
        // Q[(1-t)^6] over [0,2] equals the unit-element integral 1/7.
        let rule = gauss_block_d6c1::<f64>().unwrap();
        let v = rule.apply(|t| if t <= 1.0 { (1.0 - t).powi(6) } else { 0.0 });
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn apply_of_block_to_scaled_spanning_functions() {
        // The unit-scale layer: every scaled basis integral is 1/(d+1) and the
        // block rule integrates each exactly.
        let rule = gauss_block_d6c1::<f64>().unwrap();
        let space = block_space_d6c1::<f64>();
        for j in 0..space.dimension() {
            let s = space.unit_basis_scale(j);
            let q = rule.apply(|t| s * space.basis_value(j, t, Side::Right));
            assert!((q - 1.0 / 7.0).abs() < 1e-14, "scaled basis {j}");
        }
    }
}
