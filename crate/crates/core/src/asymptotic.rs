//! Asymptotic rules on infinite uniform knot vectors: closed-form periodic
//! node/weight patterns that finite-domain rules converge to away from the
//! boundaries, plus composition of finite rules from a boundary block and the
//! pattern, and measurement of the boundary decay depth.

use crate::linalg::Matrix;
use crate::newton::{self, NewtonOptions, NonlinearSystem};
use crate::quadrature::QuadratureRule;
use crate::real::Real;
use crate::spline::RuleKind;

#[derive(Debug, thiserror::Error)]
pub enum AsymptoticError {
    #[error("unsupported family (degree {degree}, continuity {continuity}); only (4,0) and (6,1) have asymptotic rules")]
    Unsupported { degree: usize, continuity: i64 },
    #[error("closed form and numeric solve disagree on {what} by {diff:e}")]
    CrossCheck { what: &'static str, diff: f64 },
    #[error("composed rule must span at least {needed} elements, got {got}")]
    TooFewElements { needed: usize, got: usize },
    #[error("boundary rule has unexpected layout: {0}")]
    BadBoundary(String),
    #[error(transparent)]
    Newton(#[from] newton::NewtonError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

/// Periodic pattern of an optimal rule on an infinite uniform knot vector.
///
/// For (4,0) the pattern repeats every element: two nodes at offsets `d2 < d1`
/// from the element's left end (weights `w2`, `w1`), plus a middle
/// discontinuity node of weight `extra` when a finite symmetric rule is
/// assembled. For (6,1) it repeats every two elements: nodes at `2i`,
/// `2i+d1`, `2i+d2`, `2i+2-d2`, `2i+2-d1` with weights `extra, w1, w2, w2,
/// w1`.
#[derive(Clone, Debug)]
pub struct AsymptoticRule<R: Real> {
    pub degree: usize,
    pub continuity: i64,
    /// Elements per repeating pattern: 1 for (4,0), 2 for (6,1).
    pub period: usize,
    pub d1: R,
    pub d2: R,
    pub w1: R,
    pub w2: R,
    /// Knot-node weight for (6,1); middle discontinuity weight for (4,0).
    pub extra: R,
}

impl<R: Real> AsymptoticRule<R> {
    /// Average number of nodes per element in the periodic regime.
    pub fn nodes_per_element(&self) -> f64 {
        match self.period {
            1 => 2.0,
            _ => 2.5,
        }
    }
}

/// Exactness of the (4,0) pattern on four consecutive basis functions over a
/// unit element (three single-element plus the spanning C^0 bridge).
struct AsymptoticSystem40;

impl<R: Real> NonlinearSystem<R> for AsymptoticSystem40 {
    fn dim(&self) -> usize {
        4
    }
    fn residual(&self, x: &[R], out: &mut [R]) {
        let (d1, d2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let one = R::one();
        let fifth = R::from_ratio(1, 5);
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        out[0] = c4 * d1 * w1 * (one - d1).powi(3) + c4 * d2 * w2 * (one - d2).powi(3) - fifth;
        out[1] = c6 * d1 * d1 * w1 * (one - d1).powi(2) + c6 * d2 * d2 * w2 * (one - d2).powi(2)
            - fifth;
        out[2] = c4 * d1.powi(3) * w1 * (one - d1) + c4 * d2.powi(3) * w2 * (one - d2) - fifth;
        out[3] = w1 * d1.powi(4) + w2 * d2.powi(4) + w1 * (one - d1).powi(4)
            + w2 * (one - d2).powi(4)
            - R::from_ratio(2, 5);
    }
    fn jacobian(&self, x: &[R], out: &mut Matrix<R>) {
        let one = R::one();
        let c2 = R::from_i64(2);
        let c3 = R::from_i64(3);
        let c4 = R::from_i64(4);
        let c6 = R::from_i64(6);
        for (col, (d, w)) in [(x[0], x[2]), (x[1], x[3])].into_iter().enumerate() {
            let u = one - d;
            let rows = [
                (c4 * w * (u.powi(3) - c3 * d * u.powi(2)), c4 * d * u.powi(3)),
                (
                    c6 * w * (c2 * d * u.powi(2) - c2 * d * d * u),
                    c6 * d * d * u.powi(2),
                ),
                (c4 * w * (c3 * d * d * u - d.powi(3)), c4 * d.powi(3) * u),
                (
                    c4 * w * (d.powi(3) - u.powi(3)),
                    d.powi(4) + u.powi(4),
                ),
            ];
            for (row, (dd, dw)) in rows.into_iter().enumerate() {
                out.set(row, col, dd);
                out.set(row, col + 2, dw);
            }
        }
    }
}

/// Exactness of the (6,1) pattern on four consecutive basis functions over a
/// unit element (three interior plus the spanning C^1 bridge).
struct AsymptoticSystem61;

impl<R: Real> NonlinearSystem<R> for AsymptoticSystem61 {
    fn dim(&self) -> usize {
        4
    }
    fn residual(&self, x: &[R], out: &mut [R]) {
        let (d1, d2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let one = R::one();
        let seventh = R::from_ratio(1, 7);
        let c15 = R::from_i64(15);
        let c20 = R::from_i64(20);
        let c5 = R::from_i64(5);
        let c6 = R::from_i64(6);
        out[0] = c15 * d1 * d1 * w1 * (one - d1).powi(4)
            + c15 * d2 * d2 * w2 * (one - d2).powi(4)
            - seventh;
        out[1] = c20 * d1.powi(3) * w1 * (one - d1).powi(3)
            + c20 * d2.powi(3) * w2 * (one - d2).powi(3)
            - seventh;
        out[2] = c15 * d1.powi(4) * w1 * (one - d1).powi(2)
            + c15 * d2.powi(4) * w2 * (one - d2).powi(2)
            - seventh;
        out[3] = c6 * w1 * d1.powi(5) - c5 * w1 * d1.powi(6) + c6 * w2 * d2.powi(5)
            - c5 * w2 * d2.powi(6)
            - R::from_ratio(2, 7);
    }
    fn jacobian(&self, x: &[R], out: &mut Matrix<R>) {
        let one = R::one();
        let c2 = R::from_i64(2);
        let c3 = R::from_i64(3);
        let c4 = R::from_i64(4);
        let c15 = R::from_i64(15);
        let c20 = R::from_i64(20);
        let c30 = R::from_i64(30);
        for (col, (d, w)) in [(x[0], x[2]), (x[1], x[3])].into_iter().enumerate() {
            let u = one - d;
            let rows = [
                (
                    c15 * w * (c2 * d * u.powi(4) - c4 * d * d * u.powi(3)),
                    c15 * d * d * u.powi(4),
                ),
                (
                    c20 * w * (c3 * d * d * u.powi(3) - c3 * d.powi(3) * u.powi(2)),
                    c20 * d.powi(3) * u.powi(3),
                ),
                (
                    c15 * w * (c4 * d.powi(3) * u.powi(2) - c2 * d.powi(4) * u),
                    c15 * d.powi(4) * u.powi(2),
                ),
                (
                    c30 * w * (d.powi(4) - d.powi(5)),
                    R::from_i64(6) * d.powi(5) - R::from_i64(5) * d.powi(6),
                ),
            ];
            for (row, (dd, dw)) in rows.into_iter().enumerate() {
                out.set(row, col, dd);
                out.set(row, col + 2, dw);
            }
        }
    }
}

fn cross_check<R: Real>(
    what: &'static str,
    closed: R,
    numeric: R,
) -> Result<(), AsymptoticError> {
    let diff = (closed - numeric).abs();
    if diff > R::from_f64(1e-14) {
        return Err(AsymptoticError::CrossCheck {
            what,
            diff: diff.to_f64(),
        });
    }
    Ok(())
}

/// Closed-form asymptotic pattern for degree 4, continuity 0, verified
/// against a numeric solve of its 4x4 system.
pub fn solve_d4c0<R: Real>() -> Result<AsymptoticRule<R>, AsymptoticError> {
    let half = R::from_ratio(1, 2);
    let sqrt7 = R::from_i64(7).sqrt();
    let sqrt2 = R::from_i64(2).sqrt();
    let sqrt14 = R::from_i64(14).sqrt();
    let d1 = half + sqrt7 / R::from_i64(10) - sqrt2 / R::from_i64(10);
    let d2 = half - sqrt7 / R::from_i64(10) - sqrt2 / R::from_i64(10);
    let w1 = half + sqrt14 / R::from_i64(84);
    let w2 = half - sqrt14 / R::from_i64(84);
    // Middle discontinuity weight from exactness on the cut bridge function.
    let wm = (R::from_ratio(1, 5) - w1 * d1.powi(4) - w2 * d2.powi(4)) * R::from_i64(2);
    cross_check("middle weight", wm, sqrt2 / R::from_i64(6))?;

    let mut x = [
        R::from_f64(0.62),
        R::from_f64(0.094),
        R::from_f64(0.54),
        R::from_f64(0.46),
    ];
    newton::solve(
        &AsymptoticSystem40,
        &mut x,
        &NewtonOptions::polishing(R::epsilon() * R::from_f64(64.0)),
    )?;
    cross_check("d1", d1, x[0])?;
    cross_check("d2", d2, x[1])?;
    cross_check("w1", w1, x[2])?;
    cross_check("w2", w2, x[3])?;

    Ok(AsymptoticRule {
        degree: 4,
        continuity: 0,
        period: 1,
        d1,
        d2,
        w1,
        w2,
        extra: sqrt2 / R::from_i64(6),
    })
}

/// Closed-form asymptotic pattern for degree 6, continuity 1, verified
/// against a numeric solve of its 4x4 system.
pub fn solve_d6c1<R: Real>() -> Result<AsymptoticRule<R>, AsymptoticError> {
    let sqrt78 = R::from_i64(78).sqrt();
    let n98 = R::from_i64(98);
    let d1 = (R::from_i64(67) - R::from_i64(3) * sqrt78
        - (R::from_i64(95) - R::from_i64(10) * sqrt78).sqrt())
        / n98;
    let d2 = (R::from_i64(67) + R::from_i64(3) * sqrt78
        - (R::from_i64(95) + R::from_i64(10) * sqrt78).sqrt())
        / n98;
    let sqrt65 = R::from_i64(65).sqrt();
    let sqrt30 = R::from_i64(30).sqrt();
    let sqrt78v = sqrt78;
    let w_base = R::from_ratio(1693, 4160) + R::from_i64(3) * sqrt65 / R::from_i64(4160);
    let w_osc = R::from_i64(673) * sqrt30 / R::from_i64(99840)
        - R::from_i64(2047) * sqrt78v / R::from_i64(299520);
    let w1 = w_base - w_osc;
    let w2 = w_base + w_osc;
    let w3 = R::from_ratio(387, 1040) - R::from_i64(3) * sqrt65 / R::from_i64(1040);
    // Exactness on constants: 2 w1 + 2 w2 + w3 = 2 per two elements.
    let sum = R::from_i64(2) * w1 + R::from_i64(2) * w2 + w3;
    cross_check("constant exactness", sum, R::from_i64(2))?;

    let mut x = [
        R::from_f64(0.387),
        R::from_f64(0.816),
        R::from_f64(0.436),
        R::from_f64(0.389),
    ];
    newton::solve(
        &AsymptoticSystem61,
        &mut x,
        &NewtonOptions::polishing(R::epsilon() * R::from_f64(64.0)),
    )?;
    cross_check("d1", d1, x[0])?;
    cross_check("d2", d2, x[1])?;
    cross_check("w1", w1, x[2])?;
    cross_check("w2", w2, x[3])?;

    // d1 and d2 are roots in (0,1) of the quartic resolvent. Coefficients
    // reach ~1e3, so allow that much evaluation rounding.
    let quartic_tol = R::epsilon() * R::from_f64(4096.0);
    for (name, v) in [("quartic at d1", d1), ("quartic at d2", d2)] {
        let q = R::from_i64(52) - R::from_i64(364) * v + R::from_i64(905) * v * v
            - R::from_i64(938) * v.powi(3)
            + R::from_i64(343) * v.powi(4);
        if q.abs() > quartic_tol {
            return Err(AsymptoticError::CrossCheck {
                what: name,
                diff: q.abs().to_f64(),
            });
        }
    }

    Ok(AsymptoticRule {
        degree: 6,
        continuity: 1,
        period: 2,
        d1,
        d2,
        w1,
        w2,
        extra: w3,
    })
}

/// Dispatch on the supported families.
pub fn solve<R: Real>(degree: usize, continuity: i64) -> Result<AsymptoticRule<R>, AsymptoticError> {
    match (degree, continuity) {
        (4, 0) => solve_d4c0(),
        (6, 1) => solve_d6c1(),
        _ => Err(AsymptoticError::Unsupported { degree, continuity }),
    }
}

/// Pattern nodes and weights for element `k` (0-based) of `n` unit elements
/// on `[0, n]`, in left-half orientation.
fn pattern_element<R: Real>(asym: &AsymptoticRule<R>, k: usize) -> Vec<(R, R)> {
    let base = R::from_usize(k);
    match asym.period {
        1 => vec![
            (base + asym.d2, asym.w2),
            (base + asym.d1, asym.w1),
        ],
        _ => {
            // Knot node on even knots, then the in-element pair.
            let mut out = Vec::new();
            if k % 2 == 0 {
                out.push((base, asym.extra));
                out.push((base + asym.d1, asym.w1));
                out.push((base + asym.d2, asym.w2));
            } else {
                out.push((base + R::one() - asym.d2, asym.w2));
                out.push((base + R::one() - asym.d1, asym.w1));
            }
            out
        }
    }
}

/// Assemble a finite-domain rule from the boundary block of `boundary` (its
/// first `depth` elements) plus the periodic pattern, mirrored about the
/// middle. `n` is the element count; the rule lives on `domain`.
pub fn compose_finite<R: Real>(
    asym: &AsymptoticRule<R>,
    boundary: &QuadratureRule<R>,
    depth: usize,
    n: usize,
    domain: (R, R),
) -> Result<QuadratureRule<R>, AsymptoticError> {
    if n % 2 != 0 || n / 2 < depth + 1 {
        return Err(AsymptoticError::TooFewElements {
            needed: 2 * (depth + 1),
            got: n,
        });
    }
    // Work on [0, n] in unit elements, then map onto the requested domain.
    let (ba, bb) = boundary.domain();
    let b_elems = (bb - ba).to_f64().round() as usize;
    if b_elems < depth {
        return Err(AsymptoticError::BadBoundary(format!(
            "boundary rule spans {b_elems} elements, need at least {depth}"
        )));
    }
    let boundary_unit = boundary.affine_mapped(R::zero(), R::from_usize(b_elems));
    let cut = R::from_usize(depth);
    let tol = R::from_f64(1e-9);
    let mut pairs: Vec<(R, R)> = boundary_unit
        .nodes()
        .iter()
        .zip(boundary_unit.weights())
        .filter(|(x, _)| **x < cut - tol)
        .map(|(x, w)| (*x, *w))
        .collect();
    // Periodic pattern on elements depth..n/2.
    for k in depth..n / 2 {
        for (x, w) in pattern_element(asym, k) {
            if x < R::from_usize(n / 2) - tol {
                pairs.push((x, w));
            }
        }
    }
    // Middle node: (4,0) carries the discontinuity weight; (6,1) carries the
    // knot-node weight when the middle is an even knot, and none otherwise
    // (an odd middle knot has no pattern node on it only when n/2 is odd and
    // the period-2 pattern is knot-node aligned to even knots; the mirrored
    // pattern then supplies symmetric in-element nodes instead).
    let mid = R::from_usize(n / 2);
    match asym.period {
        1 => pairs.push((mid, asym.extra)),
        _ => {
            if (n / 2) % 2 == 0 {
                pairs.push((mid, asym.extra));
            }
        }
    }
    // Mirror.
    let full = R::from_usize(n);
    let mut mirrored: Vec<(R, R)> = pairs
        .iter()
        .filter(|(x, _)| (*x - mid).abs() > tol)
        .map(|(x, w)| (full - *x, *w))
        .collect();
    mirrored.reverse();
    pairs.extend(mirrored);

    let kind = match asym.period {
        1 => RuleKind::GaussRadau,
        _ => RuleKind::Gauss,
    };
    let pinned = if asym.period == 1 {
        Some(pairs.iter().position(|(x, _)| (*x - mid).abs() <= tol).unwrap())
    } else {
        None
    };
    let rule = QuadratureRule::new(
        pairs.iter().map(|(x, _)| *x).collect(),
        pairs.iter().map(|(_, w)| *w).collect(),
        (R::zero(), full),
        kind,
        pinned,
    )?;
    rule.validate_finalized()?;
    Ok(rule.affine_mapped(domain.0, domain.1))
}

/// Smallest `k` such that every element beyond the first `k` matches the
/// periodic pattern within relative tolerance `tol`. Checks the left half of
/// a uniform-element rule; returns the element count if no tail matches.
pub fn boundary_depth<R: Real>(
    rule: &QuadratureRule<R>,
    asym: &AsymptoticRule<R>,
    tol: R,
) -> usize {
    let (a, b) = rule.domain();
    let n = (b - a).to_f64().round() as usize;
    let unit = rule.affine_mapped(R::zero(), R::from_usize(n));
    let half = n / 2;
    let knot_tol = R::from_f64(1e-6);
    let rel = |x: R, y: R| -> bool {
        let scale = y.abs().max_of(R::one());
        (x - y).abs() <= tol * scale
    };
    let mut depth = 0usize;
    for k in 0..half {
        let lo = R::from_usize(k);
        let hi = lo + R::one();
        // Nodes in [k, k+1); knot nodes count toward the element they start.
        let expected = pattern_element(asym, k);
        let got: Vec<(R, R)> = unit
            .nodes()
            .iter()
            .zip(unit.weights())
            .filter(|(x, _)| **x >= lo - knot_tol && **x < hi - knot_tol)
            .map(|(x, w)| (*x, *w))
            .collect();
        let matches = got.len() == expected.len()
            && got
                .iter()
                .zip(&expected)
                .all(|((x, w), (ex, ew))| rel(*x, *ex) && rel(*w, *ew));
        if !matches {
            depth = k + 1;
        }
    }
    depth
}
