//! Derivation of optimal rules by continuation: the rule of a C^-1-merged
//! source space is traced while the knot vector deforms into the target.
//!
//! Knots that the target does not need migrate to the right boundary and the
//! trailing node vanishes there with weight zero; odd-dimensional symmetric
//! targets keep one node pinned on the middle discontinuity knot, where its
//! weight splits into one share per side. Structural changes (a pin engaging
//! when a migrating knot crosses the middle junction, trailing equations
//! dropping when their basis functions lose support) are detected between
//! steps from the segment parities of the current knot vector.

use std::collections::HashMap;

use crate::newton::{self, NewtonOptions};
use crate::quadrature::{self, concat_rules, QuadratureRule, ResidualReport};
use crate::real::{DDouble, Real};
use crate::spline::{merge_c_minus_1, KnotVector, SpaceKind, SplineSpace, KNOT_REL_TOL};
use crate::system::{ExactnessSystem, NodeSlot, SlotValues};

#[derive(Clone, Debug)]
pub struct HomotopyConfig {
    /// Number of uniform tracing steps from source to target.
    pub steps: usize,
    /// Limit-system switch threshold: the trailing pair of equations is
    /// dropped once the trailing basis integral falls below this fraction of
    /// the last target element length.
    pub vanish_threshold: f64,
    /// Residual infinity-norm tolerance of the per-step corrector.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Retries with doubled step count after a failed trace.
    pub max_retries: usize,
    /// Record one entry per accepted step.
    pub collect_log: bool,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        HomotopyConfig {
            steps: 200,
            vanish_threshold: 1e-3,
            newton_tol: 1e-12,
            newton_max_iter: 30,
            max_retries: 3,
            collect_log: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HomotopyError {
    #[error("unsupported target: {0}")]
    Unsupported(String),
    #[error("source and target knots are incompatible: {0}")]
    BadSchedule(String),
    #[error("corrector failed at step {step} (t = {t}): {source}")]
    StepFailed {
        step: usize,
        t: f64,
        source: newton::NewtonError,
    },
    #[error("node ordering broke at step {step} (t = {t})")]
    OrderingBroke { step: usize, t: f64 },
    #[error("negative weight {weight:e} at t = 1")]
    NegativeWeight { weight: f64 },
    #[error("vanishing node still carries weight {weight:e} at t = 1")]
    PhantomNotVanishing { weight: f64 },
    #[error("knot collision at step {step} could not be stepped over")]
    UnresolvedCollision { step: usize },
    #[error("segment parities {parities:?} admit no pin assignment")]
    UnpairableSegments { parities: Vec<usize> },
    #[error("derived rule fails verification: residual norm {norm:e}")]
    Verification { norm: f64 },
    #[error(transparent)]
    Newton(#[from] newton::NewtonError),
    #[error(transparent)]
    Spline(#[from] crate::spline::SplineError),
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
    #[error(transparent)]
    Block(#[from] crate::blocks::BlockError),
}

/// One knot in motion: `mult` copies travel from `from` to `to`.
#[derive(Clone, Copy, Debug)]
pub struct Mover {
    pub from: f64,
    pub to: f64,
    pub mult: usize,
}

impl Mover {
    fn position(&self, t: f64) -> f64 {
        self.from + (self.to - self.from) * t
    }
}

/// Linear-in-time correspondence between source and target knot vectors.
#[derive(Clone, Debug)]
pub struct KnotSchedule {
    stationary: Vec<(f64, usize)>,
    movers: Vec<Mover>,
    source: KnotVector<f64>,
    target: KnotVector<f64>,
    degree: usize,
    /// Length of the last target element; scales the vanish threshold.
    last_element: f64,
}

impl KnotSchedule {
    /// Match source against target: surplus multiplicity feeds deficits from
    /// the nearest excess strictly to the left, the rest migrates to the
    /// right boundary.
    pub fn build(
        degree: usize,
        source: &KnotVector<f64>,
        target: &KnotVector<f64>,
    ) -> Result<Self, HomotopyError> {
        let (a, b) = source.domain();
        let (ta, tb) = target.domain();
        let tol = (b - a) * KNOT_REL_TOL;
        if (a - ta).abs() > tol || (b - tb).abs() > tol {
            return Err(HomotopyError::BadSchedule(
                "source and target domains differ".into(),
            ));
        }
        let mut positions: Vec<f64> = source
            .breakpoints()
            .iter()
            .chain(target.breakpoints())
            .copied()
            .collect();
        positions.sort_by(|x, y| x.partial_cmp(y).unwrap());
        positions.dedup_by(|x, y| (*x - *y).abs() <= tol);

        let mult_at = |kv: &KnotVector<f64>, p: f64| -> usize {
            kv.breakpoints()
                .iter()
                .position(|x| (x - p).abs() <= tol)
                .map(|i| kv.multiplicities()[i])
                .unwrap_or(0)
        };

        let mut stationary = Vec::new();
        let mut excess: Vec<(f64, usize)> = Vec::new();
        let mut deficit: Vec<(f64, usize)> = Vec::new();
        for &p in &positions {
            let s = mult_at(source, p);
            let t = mult_at(target, p);
            let interior = (p - a).abs() > tol && (p - b).abs() > tol;
            if !interior {
                if s != t || s != degree + 1 {
                    return Err(HomotopyError::BadSchedule(format!(
                        "boundary multiplicity mismatch at {p}: {s} vs {t}"
                    )));
                }
                stationary.push((p, s));
                continue;
            }
            if s.min(t) > 0 {
                stationary.push((p, s.min(t)));
            }
            if s > t {
                excess.push((p, s - t));
            } else if t > s {
                deficit.push((p, t - s));
            }
        }

        let mut movers = Vec::new();
        for (dp, mut need) in deficit {
            while need > 0 {
                // Nearest excess strictly left of the deficit.
                let donor = excess
                    .iter_mut()
                    .filter(|(p, units)| *p < dp - tol && *units > 0)
                    .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
                match donor {
                    Some((p, units)) => {
                        movers.push(Mover {
                            from: *p,
                            to: dp,
                            mult: 1,
                        });
                        *units -= 1;
                        need -= 1;
                    }
                    None => {
                        return Err(HomotopyError::BadSchedule(format!(
                            "no excess knot left of required knot at {dp}"
                        )))
                    }
                }
            }
        }
        let mut exiting = 0usize;
        for (p, units) in excess {
            if units > 0 {
                exiting += units;
                movers.push(Mover {
                    from: p,
                    to: b,
                    mult: units,
                });
            }
        }
        if exiting % 2 != 0 {
            return Err(HomotopyError::BadSchedule(format!(
                "odd number of exiting knots ({exiting}); dimension difference must be even"
            )));
        }
        let bp = target.breakpoints();
        let last_element = bp[bp.len() - 1] - bp[bp.len() - 2];
        Ok(KnotSchedule {
            stationary,
            movers,
            source: source.clone(),
            target: target.clone(),
            degree,
            last_element,
        })
    }

    pub fn movers(&self) -> &[Mover] {
        &self.movers
    }

    pub fn target(&self) -> &KnotVector<f64> {
        &self.target
    }

    pub fn source(&self) -> &KnotVector<f64> {
        &self.source
    }

    /// Knot vector at time `t`; at `t = 1` arrived movers collapse onto their
    /// destinations and the boundary pile is capped at `degree + 1`.
    pub fn at(&self, t: f64) -> Result<KnotVector<f64>, HomotopyError> {
        if t >= 1.0 {
            return Ok(self.target.clone());
        }
        let mut pairs = self.stationary.clone();
        for m in &self.movers {
            pairs.push((m.position(t), m.mult));
        }
        let kv = KnotVector::from_pairs(&pairs)?;
        Ok(kv)
    }

    /// Evenly spaced snapshots, endpoints included.
    pub fn snapshots(&self, steps: usize) -> Result<Vec<KnotVector<f64>>, HomotopyError> {
        (0..=steps)
            .map(|k| self.at(k as f64 / steps as f64))
            .collect()
    }

    /// True when the multiset at `t` would stack some interior position past
    /// full multiplicity (a mover passing over a discontinuity junction);
    /// such an instant cannot be represented as a spline space.
    fn overfull_at(&self, t: f64) -> bool {
        match self.at(t) {
            Ok(kv) => {
                let mults = kv.multiplicities();
                mults[1..mults.len() - 1]
                    .iter()
                    .any(|&m| m > self.degree + 1)
            }
            Err(_) => true,
        }
    }

    /// Times at which a mover passes over a stationary pile. States near
    /// these instants are nearly degenerate (a node rides a closing knot
    /// window), while the instants themselves carry a clean discontinuity
    /// structure, so the tracer samples them exactly.
    fn crossing_times(&self) -> Vec<f64> {
        let (a, b) = self.source.domain();
        let tol = (b - a) * KNOT_REL_TOL;
        let mut times = Vec::new();
        for m in &self.movers {
            let lo = m.from.min(m.to);
            let hi = m.from.max(m.to);
            for (p, _) in &self.stationary {
                if *p > lo + tol && *p < hi - tol {
                    times.push((p - m.from) / (m.to - m.from));
                }
            }
        }
        times.retain(|t| *t > 0.0 && *t < 1.0);
        times.sort_by(|x, y| x.partial_cmp(y).unwrap());
        times.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        times
    }
}

/// Snapshot of the traced root, exposed in logs and for inspection.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TraceRecord {
    pub t: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// Weight of the rightmost node; decays to zero when a node vanishes.
    pub trailing_weight: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Mutable state of a trace between steps.
pub struct TraceState {
    pub t: f64,
    pub knots: KnotVector<f64>,
    pub slots: Vec<NodeSlot<f64>>,
    pub values: Vec<SlotValues<f64>>,
    pub active_equations: usize,
}

impl TraceState {
    pub fn unknown_count(&self) -> usize {
        self.slots
            .iter()
            .map(|s| s.position_unknowns() + s.weight_unknowns())
            .sum()
    }

    pub fn node_positions(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.position).collect()
    }

    pub fn node_weights(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.total_weight()).collect()
    }
}

/// Constrain the node nearest `midpoint` to sit exactly on it, its weight
/// split into one unknown share per side; the system stays square.
pub fn pin_radau(state: &mut TraceState, midpoint: f64) -> Result<(), HomotopyError> {
    let nearest = state
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| matches!(state.slots[*i], NodeSlot::Free { .. }))
        .min_by(|(_, x), (_, y)| {
            (x.position - midpoint)
                .abs()
                .partial_cmp(&(y.position - midpoint).abs())
                .unwrap()
        })
        .map(|(i, _)| i);
    let Some(i) = nearest else {
        return Err(HomotopyError::Unsupported(
            "no free node available to pin".into(),
        ));
    };
    let w = state.values[i].total_weight();
    state.slots[i] = NodeSlot::PinnedSplit { position: midpoint };
    state.values[i] = SlotValues {
        position: midpoint,
        weights: (w * 0.5, Some(w * 0.5)),
    };
    Ok(())
}

/// Release a pinned node. Its new seed position is nudged off the knot into
/// the narrowest adjacent element: a node sitting exactly on a knot is blind
/// to one side and leaves the equations there structurally underdetermined.
fn unpin(state: &mut TraceState, index: usize, kv: &KnotVector<f64>) {
    let v = &state.values[index];
    let w = v.total_weight();
    let p = v.position;
    let bps = kv.breakpoints();
    let k = bps.partition_point(|x| *x < p - (bps[bps.len() - 1] - bps[0]) * 1e-12);
    let seed = if k == 0 || k >= bps.len() {
        p
    } else {
        let prev = bps[k.saturating_sub(1)];
        let next = bps[(k + 1).min(bps.len() - 1)];
        let left_gap = p - prev;
        let right_gap = next - p;
        if left_gap > 0.0 && (right_gap <= 0.0 || left_gap < right_gap) {
            p - 0.5 * left_gap
        } else if right_gap > 0.0 {
            p + 0.5 * right_gap
        } else {
            p
        }
    };
    state.slots[index] = NodeSlot::Free { lo: seed, hi: seed };
    state.values[index] = SlotValues {
        position: seed,
        weights: (w, None),
    };
}

/// Interior breakpoints carrying full multiplicity (C^-1 junctions).
fn junctions(degree: usize, kv: &KnotVector<f64>) -> Vec<f64> {
    let bps = kv.breakpoints();
    let mults = kv.multiplicities();
    (1..bps.len() - 1)
        .filter(|&i| mults[i] == degree + 1)
        .map(|i| bps[i])
        .collect()
}

/// Pin positions demanded by the segment parities: consecutive odd segments
/// pair up and share a pinned node on the junction between them.
fn required_pins(
    degree: usize,
    kv: &KnotVector<f64>,
    junction_positions: &[f64],
) -> Result<Vec<f64>, HomotopyError> {
    if junction_positions.is_empty() {
        return Ok(Vec::new());
    }
    let bps = kv.breakpoints();
    let mults = kv.multiplicities();
    let (a, b) = kv.domain();
    let tol = (b - a) * KNOT_REL_TOL;
    let mut bounds = vec![a];
    bounds.extend_from_slice(junction_positions);
    bounds.push(b);
    let mut dims = Vec::new();
    for w in bounds.windows(2) {
        let interior: usize = bps
            .iter()
            .zip(mults)
            .filter(|(x, _)| **x > w[0] + tol && **x < w[1] - tol)
            .map(|(_, m)| m)
            .sum();
        dims.push(degree + 1 + interior);
    }
    let mut pins = Vec::new();
    let mut i = 0;
    while i < dims.len() {
        if dims[i] % 2 == 1 {
            if i + 1 >= dims.len() || dims[i + 1] % 2 == 0 {
                return Err(HomotopyError::UnpairableSegments { parities: dims });
            }
            pins.push(junction_positions[i]);
            i += 2;
        } else {
            i += 1;
        }
    }
    Ok(pins)
}

/// Bring the pin set of `state` in line with what the current knot vector
/// demands: stale pins are released, missing pins capture the nearest node.
fn reconcile_pins(
    degree: usize,
    state: &mut TraceState,
    kv: &KnotVector<f64>,
) -> Result<(), HomotopyError> {
    let (a, b) = kv.domain();
    let tol = (b - a) * 1e-9;
    let junction_positions = junctions(degree, kv);
    let pins = required_pins(degree, kv, &junction_positions)?;
    // Release pins that are no longer demanded.
    for i in 0..state.slots.len() {
        if let NodeSlot::PinnedSplit { position } = state.slots[i] {
            if !pins.iter().any(|p| (p - position).abs() <= tol) {
                unpin(state, i, kv);
            }
        }
    }
    // Engage missing pins.
    for p in pins {
        let already = state.slots.iter().any(|s| {
            matches!(s, NodeSlot::PinnedSplit { position } if (position - p).abs() <= tol)
        });
        if !already {
            pin_radau(state, p)?;
        }
    }
    Ok(())
}

/// Every active basis function needs a node inside its support: when the
/// predictor leaves one uncovered (a node "riding" across a knot that a
/// migrating knot just passed), pull the nearest free node into the support.
fn cover_uncovered_supports(state: &mut TraceState, space: &SplineSpace<f64>) {
    let degree = space.degree();
    let flat = space.flat_knots();
    let (a, b) = space.domain();
    let tol = (b - a) * 1e-12;
    for j in 0..state.active_equations {
        let lo = flat[j];
        let hi = flat[j + degree + 1];
        if hi - lo <= tol {
            continue;
        }
        let mut coverage = 0.0f64;
        for (slot, v) in state.slots.iter().zip(&state.values) {
            coverage += match slot {
                NodeSlot::PinnedSplit { position } => {
                    space.basis_value(j, *position, crate::spline::Side::Left)
                        + space.basis_value(j, *position, crate::spline::Side::Right)
                }
                _ => space.basis_value(j, v.position, crate::spline::Side::Right),
            };
        }
        if coverage > 1e-10 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let nearest = state
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, NodeSlot::Free { .. }))
            .min_by(|(i, _), (k, _)| {
                (state.values[*i].position - mid)
                    .abs()
                    .partial_cmp(&(state.values[*k].position - mid).abs())
                    .unwrap()
            })
            .map(|(i, _)| i);
        if let Some(i) = nearest {
            let bj = space.basis_value(j, mid, crate::spline::Side::Right);
            let weight = if bj > 1e-8 {
                (space.basis_integral(j) / bj).min(state.values[i].total_weight().abs() + 1.0)
            } else {
                state.values[i].total_weight()
            };
            state.values[i] = SlotValues {
                position: mid,
                weights: (weight, None),
            };
        }
    }
}

/// Run the corrector; on a structurally singular Jacobian, push the node
/// nearest the narrowest element into that element (a node parked exactly on
/// a knot is blind to one side) and retry once.
fn correct(
    space: &SplineSpace<f64>,
    kv: &KnotVector<f64>,
    state: &mut TraceState,
    opts: &NewtonOptions<f64>,
) -> Result<newton::NewtonReport, HomotopyError> {
    let first = {
        let system = ExactnessSystem::new(space, &state.slots, state.active_equations);
        let mut x = system.pack(&state.values);
        let outcome = newton::solve(&system, &mut x, opts);
        if outcome.is_ok() {
            state.values = system.unpack(&x);
        }
        outcome
    };
    match first {
        Ok(report) => Ok(report),
        Err(newton::NewtonError::Singular(_)) => {
            rescue_into_narrowest_gap(state, kv);
            let system = ExactnessSystem::new(space, &state.slots, state.active_equations);
            let mut x = system.pack(&state.values);
            let report = newton::solve(&system, &mut x, opts)?;
            state.values = system.unpack(&x);
            Ok(report)
        }
        Err(e) => Err(e.into()),
    }
}

/// Move the free node nearest the narrowest element into its midpoint.
fn rescue_into_narrowest_gap(state: &mut TraceState, kv: &KnotVector<f64>) {
    let bps = kv.breakpoints();
    let Some((k, _)) = bps
        .windows(2)
        .enumerate()
        .min_by(|(_, x), (_, y)| (x[1] - x[0]).partial_cmp(&(y[1] - y[0])).unwrap())
    else {
        return;
    };
    let mid = 0.5 * (bps[k] + bps[k + 1]);
    let nearest = state
        .slots
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, NodeSlot::Free { .. }))
        .min_by(|(i, _), (j, _)| {
            (state.values[*i].position - mid)
                .abs()
                .partial_cmp(&(state.values[*j].position - mid).abs())
                .unwrap()
        })
        .map(|(i, _)| i);
    if let Some(i) = nearest {
        let w = state.values[i].total_weight();
        state.slots[i] = NodeSlot::Free { lo: bps[k], hi: bps[k + 1] };
        state.values[i] = SlotValues {
            position: mid,
            weights: (w, None),
        };
    }
}

/// Update free-node boxes: the element containing the node, widened by one
/// neighboring element on each side. Guards the corrector against jumping
/// across the domain while letting nodes drift through knots over many steps.
fn refresh_boxes(state: &mut TraceState, kv: &KnotVector<f64>) {
    let bps = kv.breakpoints();
    for (slot, value) in state.slots.iter_mut().zip(&state.values) {
        if let NodeSlot::Free { lo, hi } = slot {
            let x = value.position;
            let k = bps
                .partition_point(|p| *p <= x)
                .saturating_sub(1)
                .min(bps.len() - 2);
            *lo = bps[k.saturating_sub(1)];
            *hi = bps[(k + 2).min(bps.len() - 1)];
        }
    }
}

/// Drop trailing equation pairs whose defining basis functions are about to
/// lose support, freezing the trailing node on the boundary. Returns the
/// number of dropped pairs.
fn vanish_switch(
    state: &mut TraceState,
    space: &SplineSpace<f64>,
    threshold: f64,
) -> Result<usize, HomotopyError> {
    let (_, b) = space.domain();
    let mut dropped = 0;
    while state.active_equations >= 2 && space.basis_integral(state.active_equations - 1) < threshold
    {
        // Freeze the rightmost free slot on the boundary.
        let Some(last_free) = state
            .slots
            .iter()
            .rposition(|s| matches!(s, NodeSlot::Free { .. }))
        else {
            break;
        };
        let w = state.values[last_free].total_weight();
        state.slots[last_free] = NodeSlot::Frozen {
            position: b,
            weight: w,
        };
        state.values[last_free] = SlotValues {
            position: b,
            weights: (w, None),
        };
        state.active_equations -= 2;
        dropped += 1;
    }
    Ok(dropped)
}

/// Explicit update of frozen trailing weights from the first dropped
/// equation: `w = (I[B_e] - Q_others[B_e]) / B_e(b)` while the function
/// still has support, zero afterwards.
fn update_frozen_weights(state: &mut TraceState, space: &SplineSpace<f64>) {
    let dim = space.dimension();
    let (_, b) = space.domain();
    let frozen: Vec<usize> = state
        .slots
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, NodeSlot::Frozen { .. }))
        .map(|(i, _)| i)
        .collect();
    for (rank, &i) in frozen.iter().rev().enumerate() {
        // The most recently frozen slot balances the last dropped equation.
        let e = state.active_equations + 2 * rank + 1;
        if e >= dim {
            continue;
        }
        let coeff = space.basis_value(e, b, crate::spline::Side::Left);
        let new_weight = if coeff.abs() > 1e-8 {
            let mut q = 0.0;
            for (j, v) in state.values.iter().enumerate() {
                if j == i {
                    continue;
                }
                let contribution = match state.slots[j] {
                    NodeSlot::PinnedSplit { position } => {
                        v.weights.0 * space.basis_value(e, position, crate::spline::Side::Left)
                            + v.weights.1.unwrap_or(0.0)
                                * space.basis_value(e, position, crate::spline::Side::Right)
                    }
                    _ => {
                        v.total_weight()
                            * space.basis_value(e, v.position, crate::spline::Side::Right)
                    }
                };
                q += contribution;
            }
            ((space.basis_integral(e) - q) / coeff).max(0.0)
        } else {
            0.0
        };
        if let NodeSlot::Frozen { position, .. } = state.slots[i] {
            state.slots[i] = NodeSlot::Frozen {
                position,
                weight: new_weight,
            };
            state.values[i] = SlotValues {
                position,
                weights: (new_weight, None),
            };
        }
    }
}

/// Outcome of a completed derivation.
#[derive(Debug)]
pub struct DerivedRule {
    /// Double-precision rule (rounded from the extended polish).
    pub rule: QuadratureRule<f64>,
    /// Extended-precision rule from the final double-double polish.
    pub extended: QuadratureRule<DDouble>,
    pub report: ResidualReport<f64>,
    /// Residual norm of the extended rule on the extended-precision system.
    pub extended_norm: f64,
    pub trace_log: Vec<TraceRecord>,
}

fn initial_state(
    degree: usize,
    source_space: &SplineSpace<f64>,
    source_rule: &QuadratureRule<f64>,
) -> Result<TraceState, HomotopyError> {
    let (a, b) = source_space.domain();
    let tol = (b - a) * 1e-9;
    let mut slots = Vec::new();
    let mut values = Vec::new();
    let junction_positions = junctions(degree, source_space.knots());
    for (&x, &w) in source_rule.nodes().iter().zip(source_rule.weights()) {
        if let Some(p) = junction_positions.iter().find(|p| (**p - x).abs() <= tol) {
            slots.push(NodeSlot::PinnedSplit { position: *p });
            values.push(SlotValues {
                position: *p,
                weights: (w * 0.5, Some(w * 0.5)),
            });
        } else {
            slots.push(NodeSlot::Free { lo: a, hi: b });
            values.push(SlotValues {
                position: x,
                weights: (w, None),
            });
        }
    }
    let state = TraceState {
        t: 0.0,
        knots: source_space.knots().clone(),
        slots,
        values,
        active_equations: source_space.dimension(),
    };
    if state.unknown_count() != state.active_equations {
        return Err(HomotopyError::BadSchedule(format!(
            "source rule has {} unknowns for a {}-dimensional space",
            state.unknown_count(),
            state.active_equations
        )));
    }
    Ok(state)
}

/// Trace the source rule along the schedule; returns the rule at `t = 1`
/// polished in extended precision.
pub fn trace(
    degree: usize,
    source_space: &SplineSpace<f64>,
    source_rule: &QuadratureRule<f64>,
    schedule: &KnotSchedule,
    config: &HomotopyConfig,
) -> Result<DerivedRule, HomotopyError> {
    let mut attempt = 0;
    let mut steps = config.steps.max(1);
    loop {
        match trace_once(degree, source_space, source_rule, schedule, config, steps) {
            Ok(out) => return Ok(out),
            Err(e) if attempt < config.max_retries => {
                let retryable = matches!(
                    e,
                    HomotopyError::StepFailed { .. }
                        | HomotopyError::OrderingBroke { .. }
                        | HomotopyError::UnresolvedCollision { .. }
                );
                if !retryable {
                    return Err(e);
                }
                attempt += 1;
                steps *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

fn trace_once(
    degree: usize,
    source_space: &SplineSpace<f64>,
    source_rule: &QuadratureRule<f64>,
    schedule: &KnotSchedule,
    config: &HomotopyConfig,
    steps: usize,
) -> Result<DerivedRule, HomotopyError> {
    let mut state = initial_state(degree, source_space, source_rule)?;
    let mut log = Vec::new();
    let threshold = config.vanish_threshold * schedule.last_element;
    let newton_opts = NewtonOptions {
        tol: config.newton_tol,
        max_iter: config.newton_max_iter,
        min_damping: 1.0 / 65536.0,
        refine_steps: 0,
    };

    if schedule.movers().is_empty() {
        // Stationary homotopy: the source rule already solves the target.
        return finalize(degree, state, schedule, config, log);
    }

    let crossings = schedule.crossing_times();
    let half_step = 0.5 / steps as f64;
    for k in 1..steps {
        let t_plain = k as f64 / steps as f64;
        // Snap onto a knot-crossing instant when one falls within half a
        // step: the structure there is a clean discontinuity handled by the
        // pin bookkeeping, while its neighborhood is nearly degenerate.
        let mut t = t_plain;
        if let Some(&tc) = crossings
            .iter()
            .find(|tc| (**tc - t_plain).abs() <= half_step)
        {
            t = if schedule.overfull_at(tc) {
                // Crossing over an existing junction: sample just past it,
                // where the junction pin covers the reopened knot window.
                tc + 0.9 * half_step
            } else {
                tc
            };
        }
        if schedule.overfull_at(t) {
            t = t_plain + 0.5 * half_step;
        }
        if schedule.overfull_at(t) {
            return Err(HomotopyError::UnresolvedCollision { step: k });
        }
        let kv = schedule.at(t)?;
        let space = SplineSpace::new(degree, kv.clone(), SpaceKind::Merged)?;
        reconcile_pins(degree, &mut state, &kv)?;
        vanish_switch(&mut state, &space, threshold)?;
        cover_uncovered_supports(&mut state, &space);
        refresh_boxes(&mut state, &kv);
        debug_assert_eq!(state.unknown_count(), state.active_equations);

        let report =
            correct(&space, &kv, &mut state, &newton_opts).map_err(|source| match source {
                HomotopyError::Newton(e) => HomotopyError::StepFailed { step: k, t, source: e },
                other => other,
            })?;
        state.t = t;
        state.knots = kv;
        update_frozen_weights(&mut state, &space);

        let positions = state.node_positions();
        if positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(HomotopyError::OrderingBroke { step: k, t });
        }
        if config.collect_log {
            log.push(TraceRecord {
                t,
                residual_norm: report.residual_norm,
                newton_iterations: report.iterations,
                trailing_weight: state
                    .values
                    .last()
                    .map(|v| v.total_weight())
                    .unwrap_or(0.0),
                nodes: positions,
                weights: state.node_weights(),
            });
        }
    }
    finalize(degree, state, schedule, config, log)
}

/// Restructure onto the exact target space, solve, and polish in extended
/// precision.
fn finalize(
    degree: usize,
    mut state: TraceState,
    schedule: &KnotSchedule,
    config: &HomotopyConfig,
    mut log: Vec<TraceRecord>,
) -> Result<DerivedRule, HomotopyError> {
    let target = schedule.target().clone();
    let space = SplineSpace::new(degree, target.clone(), SpaceKind::Target)?;
    let dim = space.dimension();
    let (_, b) = space.domain();

    reconcile_pins(degree, &mut state, &target)?;
    // Vanishing nodes: drop trailing free slots until the system is square.
    while state.unknown_count() > dim {
        let Some(last_free) = state
            .slots
            .iter()
            .rposition(|s| matches!(s, NodeSlot::Free { .. }))
        else {
            return Err(HomotopyError::Unsupported(
                "cannot shrink system to target dimension".into(),
            ));
        };
        state.slots.remove(last_free);
        state.values.remove(last_free);
    }
    // Frozen phantoms have lost their support; their weights, which track the
    // trailing basis integral, are below the switch threshold at the last
    // sampled step and zero in the limit.
    let weight_cap = (10.0 * config.vanish_threshold * schedule.last_element).max(1e-9);
    let mut i = 0;
    while i < state.slots.len() {
        if let NodeSlot::Frozen { weight, .. } = state.slots[i] {
            if weight.abs() > weight_cap {
                return Err(HomotopyError::PhantomNotVanishing { weight });
            }
            state.slots.remove(i);
            state.values.remove(i);
        } else {
            i += 1;
        }
    }
    if state.unknown_count() != dim {
        return Err(HomotopyError::BadSchedule(format!(
            "target system is not square: {} unknowns vs {} equations",
            state.unknown_count(),
            dim
        )));
    }
    state.active_equations = dim;
    refresh_boxes(&mut state, &target);

    // Final double-precision solve.
    let newton_opts = NewtonOptions {
        tol: config.newton_tol,
        max_iter: config.newton_max_iter.max(40),
        min_damping: 1.0 / 65536.0,
        refine_steps: 1,
    };
    {
        let system = ExactnessSystem::new(&space, &state.slots, dim);
        let mut x = system.pack(&state.values);
        newton::solve(&system, &mut x, &newton_opts)?;
        state.values = system.unpack(&x);
    }

    // Extended-precision polish of the same structure.
    let kv_dd = KnotVector::new(
        target
            .breakpoints()
            .iter()
            .map(|&x| DDouble::from(x))
            .collect(),
        target.multiplicities().to_vec(),
    )?;
    let space_dd = SplineSpace::new(degree, kv_dd, SpaceKind::Target)?;
    let slots_dd: Vec<NodeSlot<DDouble>> = state
        .slots
        .iter()
        .map(|s| match s {
            NodeSlot::Free { lo, hi } => NodeSlot::Free {
                lo: DDouble::from(*lo),
                hi: DDouble::from(*hi),
            },
            NodeSlot::PinnedSplit { position } => NodeSlot::PinnedSplit {
                position: DDouble::from(*position),
            },
            NodeSlot::PinnedBoundary { position } => NodeSlot::PinnedBoundary {
                position: DDouble::from(*position),
            },
            NodeSlot::Frozen { position, weight } => NodeSlot::Frozen {
                position: DDouble::from(*position),
                weight: DDouble::from(*weight),
            },
        })
        .collect();
    let values_dd: Vec<SlotValues<DDouble>> = state
        .values
        .iter()
        .map(|v| SlotValues {
            position: DDouble::from(v.position),
            weights: (
                DDouble::from(v.weights.0),
                v.weights.1.map(DDouble::from),
            ),
        })
        .collect();
    let system_dd = ExactnessSystem::new(&space_dd, &slots_dd, dim);
    let mut x_dd = system_dd.pack(&values_dd);
    let dd_opts = NewtonOptions::<DDouble> {
        tol: DDouble::epsilon() * DDouble::from(256.0),
        max_iter: 40,
        min_damping: 1.0 / 65536.0,
        refine_steps: 2,
    };
    newton::solve(&system_dd, &mut x_dd, &dd_opts)?;
    let values_dd = system_dd.unpack(&x_dd);

    // Assemble rules: extended values, rounded copies for double precision.
    let (m_opt, kind) = space.optimal_node_count();
    let pinned = slots_dd
        .iter()
        .position(|s| matches!(s, NodeSlot::PinnedSplit { .. } | NodeSlot::PinnedBoundary { .. }));
    let nodes_dd: Vec<DDouble> = values_dd.iter().map(|v| v.position).collect();
    let weights_dd: Vec<DDouble> = values_dd.iter().map(|v| v.total_weight()).collect();
    for w in &weights_dd {
        if !(*w > DDouble::ZERO) {
            return Err(HomotopyError::NegativeWeight { weight: w.to_f64() });
        }
    }
    let extended = QuadratureRule::new(
        nodes_dd,
        weights_dd,
        space_dd.domain(),
        kind,
        pinned,
    )?;
    let rule: QuadratureRule<f64> = extended.convert();
    rule.validate_finalized()?;
    if rule.len() != m_opt {
        return Err(HomotopyError::Verification {
            norm: f64::INFINITY,
        });
    }
    let report = quadrature::residuals(&rule, &space)?;
    if report.norm > quadrature::default_exactness_tol::<f64>() {
        return Err(HomotopyError::Verification {
            norm: report.norm,
        });
    }
    let report_dd = quadrature::residuals(&extended, &space_dd)?;
    if config.collect_log {
        log.push(TraceRecord {
            t: 1.0,
            residual_norm: report_dd.norm.to_f64(),
            newton_iterations: 0,
            trailing_weight: 0.0,
            nodes: rule.nodes().to_vec(),
            weights: rule.weights().to_vec(),
        });
    }
    Ok(DerivedRule {
        rule,
        extended,
        report,
        extended_norm: report_dd.norm.to_f64(),
        trace_log: log,
    })
}

/// Largest `base * 2^k` not exceeding `limit` (0 if even `base` exceeds it).
fn largest_doubling(base: usize, limit: usize) -> usize {
    if base > limit {
        return 0;
    }
    let mut v = base;
    while v * 2 <= limit {
        v *= 2;
    }
    v
}

struct UniformFamily {
    degree: usize,
    continuity: i64,
    /// Interior multiplicity bump at the middle breakpoint (1 for the odd
    /// dimension family, 0 otherwise).
    middle_bump: usize,
    block_elements: usize,
}

impl UniformFamily {
    fn classify(degree: usize, continuity: i64, n: usize) -> Result<Self, HomotopyError> {
        if degree % 2 != 0 || continuity < 0 || continuity as usize >= degree {
            return Err(HomotopyError::Unsupported(format!(
                "degree {degree} / continuity {continuity} outside the even-degree Galerkin family"
            )));
        }
        let interior = degree as i64 - continuity;
        let dim = degree as i64 + 1 + interior * (n as i64 - 1);
        if dim % 2 == 0 {
            if n % 2 != 0 {
                return Err(HomotopyError::Unsupported(format!(
                    "element count {n} is not decomposable into two-element blocks"
                )));
            }
            Ok(UniformFamily {
                degree,
                continuity,
                middle_bump: 0,
                block_elements: 2,
            })
        } else {
            if continuity != 0 {
                return Err(HomotopyError::Unsupported(format!(
                    "odd-dimensional family with continuity {continuity} has no discontinuity-pinned middle construction"
                )));
            }
            if n % 4 != 0 {
                return Err(HomotopyError::Unsupported(format!(
                    "element count {n} is not decomposable into four-element Gauss-Radau blocks"
                )));
            }
            Ok(UniformFamily {
                degree,
                continuity,
                middle_bump: 1,
                block_elements: 4,
            })
        }
    }

    /// Canonical derivation target on [0, n]: uniform interior multiplicity,
    /// plus one extra knot on the middle breakpoint for the odd family.
    fn canonical_target(&self, n: usize) -> Result<KnotVector<f64>, HomotopyError> {
        let breakpoints: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let interior = (self.degree as i64 - self.continuity) as usize;
        let mut mults = vec![interior; n + 1];
        mults[0] = self.degree + 1;
        mults[n] = self.degree + 1;
        if self.middle_bump == 1 {
            mults[n / 2] += 1;
        }
        Ok(KnotVector::new(breakpoints, mults)?)
    }

    fn block_rule(&self) -> Result<QuadratureRule<f64>, HomotopyError> {
        match (self.degree, self.continuity, self.block_elements) {
            (6, 1, 2) => Ok(crate::blocks::gauss_block_d6c1()?),
            (4, 0, 4) => Ok(crate::blocks::radau_block_d4c0()?),
            (d, c, n) => Ok(crate::blocks::solve_block(&crate::blocks::BlockSpec::new(
                d, c, n,
            ))?),
        }
    }
}

fn canonical_space(
    family: &UniformFamily,
    n: usize,
) -> Result<SplineSpace<f64>, HomotopyError> {
    Ok(SplineSpace::new(
        family.degree,
        family.canonical_target(n)?,
        SpaceKind::Target,
    )?)
}

/// Derive the canonical rule for `n` uniform unit elements, recursing on the
/// block decomposition. Results are memoized per element count.
fn derive_canonical(
    family: &UniformFamily,
    n: usize,
    config: &HomotopyConfig,
    cache: &mut HashMap<usize, DerivedRule>,
) -> Result<(), HomotopyError> {
    if cache.contains_key(&n) {
        return Ok(());
    }
    if n == family.block_elements {
        let rule = family.block_rule()?;
        let space = canonical_space(family, n)?;
        let report = quadrature::residuals(&rule, &space)?;
        let extended = block_rule_extended(family)?;
        cache.insert(
            n,
            DerivedRule {
                rule,
                extended,
                report,
                extended_norm: 0.0,
                trace_log: Vec::new(),
            },
        );
        return Ok(());
    }
    let base = family.block_elements;
    let right = largest_doubling(base, n - base);
    let left = n - right;
    if right == 0 || left % base != 0 {
        return Err(HomotopyError::Unsupported(format!(
            "cannot decompose {n} elements into {base}-element based blocks"
        )));
    }
    derive_canonical(family, left, config, cache)?;
    derive_canonical(family, right, config, cache)?;

    let left_rule = &cache[&left];
    let right_rule = &cache[&right];
    let left_space = canonical_space(family, left)?;
    let right_space = canonical_space(family, right)?.affine_mapped(left as f64, n as f64);
    let source_space = merge_c_minus_1(&left_space, &right_space)?;
    let source_rule = concat_rules(&[
        left_rule.rule.clone(),
        right_rule.rule.affine_mapped(left as f64, n as f64),
    ])?;
    let target = family.canonical_target(n)?;
    let schedule = KnotSchedule::build(family.degree, source_space.knots(), &target)?;
    let derived = trace(family.degree, &source_space, &source_rule, &schedule, config)?;
    cache.insert(n, derived);
    Ok(())
}

fn block_rule_extended(family: &UniformFamily) -> Result<QuadratureRule<DDouble>, HomotopyError> {
    match (family.degree, family.continuity, family.block_elements) {
        (6, 1, 2) => Ok(crate::blocks::gauss_block_d6c1()?),
        (4, 0, 4) => Ok(crate::blocks::radau_block_d4c0()?),
        (d, c, n) => Ok(crate::blocks::solve_block(&crate::blocks::BlockSpec::new(
            d, c, n,
        ))?),
    }
}

/// Build the one-level source for a target: the C^-1 merge of recursively
/// derived sub-rules covering the domain, together with the union rule.
pub fn build_source(
    degree: usize,
    continuity: i64,
    target: &KnotVector<f64>,
    config: &HomotopyConfig,
) -> Result<(SplineSpace<f64>, QuadratureRule<f64>), HomotopyError> {
    let n = target.element_count();
    if target.is_uniform() {
        let family = UniformFamily::classify(degree, continuity, n)?;
        let (a, b) = target.domain();
        if n == family.block_elements {
            let rule = family.block_rule()?;
            let space = canonical_space(&family, n)?;
            return Ok((
                space.affine_mapped(a, b),
                rule.affine_mapped(a, b),
            ));
        }
        let base = family.block_elements;
        let right = largest_doubling(base, n - base);
        let left = n - right;
        let mut cache = HashMap::new();
        derive_canonical(&family, left, config, &mut cache)?;
        derive_canonical(&family, right, config, &mut cache)?;
        let h = (b - a) / n as f64;
        let mid = a + h * left as f64;
        let left_space = canonical_space(&family, left)?.affine_mapped(a, mid);
        let right_space = canonical_space(&family, right)?.affine_mapped(mid, b);
        let source_space = merge_c_minus_1(&left_space, &right_space)?;
        let source_rule = concat_rules(&[
            cache[&left].rule.affine_mapped(a, mid),
            cache[&right].rule.affine_mapped(mid, b),
        ])?;
        Ok((source_space, source_rule))
    } else {
        build_paired_source(degree, continuity, target)
    }
}

/// Source for a non-uniform target: one two-element block per consecutive
/// pair of target elements, solved directly on the mapped breakpoints.
fn build_paired_source(
    degree: usize,
    continuity: i64,
    target: &KnotVector<f64>,
) -> Result<(SplineSpace<f64>, QuadratureRule<f64>), HomotopyError> {
    let bps = target.breakpoints();
    let n = target.element_count();
    if n % 2 != 0 {
        return Err(HomotopyError::Unsupported(format!(
            "non-uniform target needs an even element count, got {n}"
        )));
    }
    let mut spaces = Vec::new();
    let mut rules = Vec::new();
    let canonical = match (degree, continuity) {
        (6, 1) => Some(crate::blocks::gauss_block_d6c1::<f64>()?),
        _ => None,
    };
    for pair in 0..n / 2 {
        let x0 = bps[2 * pair];
        let x1 = bps[2 * pair + 1];
        let x2 = bps[2 * pair + 2];
        let equal = ((x1 - x0) - (x2 - x1)).abs() <= (x2 - x0) * 1e-12;
        let rule = match (&canonical, equal) {
            (Some(block), true) => block.affine_mapped(x0, x2),
            _ => crate::blocks::two_element_rule(degree, continuity, [x0, x1, x2])?,
        };
        let kv = KnotVector::open_uniform_multiplicity(
            degree,
            vec![x0, x1, x2],
            (degree as i64 - continuity) as usize,
        )?;
        spaces.push(SplineSpace::new(degree, kv, SpaceKind::Source)?);
        rules.push(rule);
    }
    let mut space = spaces[0].clone();
    for s in &spaces[1..] {
        space = merge_c_minus_1(&space, s)?;
    }
    let rule = concat_rules(&rules)?;
    Ok((space, rule))
}

/// Top-level driver: derive the optimal rule for the target space of the
/// given degree and continuity over `target` breakpoints.
///
/// For odd-dimensional (Gauss-Radau) targets the derivation runs on the
/// superspace with one extra knot on the middle breakpoint; the returned rule
/// is exact for both and carries the pinned middle node.
pub fn derive_rule(
    degree: usize,
    continuity: i64,
    target: &KnotVector<f64>,
    config: &HomotopyConfig,
) -> Result<DerivedRule, HomotopyError> {
    let user_space = SplineSpace::with_continuity(
        degree,
        continuity,
        target.breakpoints().to_vec(),
        SpaceKind::Target,
    )?;
    let n = target.element_count();
    let derived = if target.is_uniform() {
        let family = UniformFamily::classify(degree, continuity, n)?;
        let mut cache = HashMap::new();
        derive_canonical(&family, n, config, &mut cache)?;
        let derived = cache.remove(&n).unwrap();
        let (a, b) = target.domain();
        if (a, b) != (0.0, n as f64) {
            map_derived(derived, a, b)
        } else {
            derived
        }
    } else {
        let dim = user_space.dimension();
        if dim % 2 != 0 {
            return Err(HomotopyError::Unsupported(
                "non-uniform odd-dimensional targets are not supported".into(),
            ));
        }
        let (source_space, source_rule) = build_paired_source(degree, continuity, target)?;
        let schedule = KnotSchedule::build(
            degree,
            source_space.knots(),
            &KnotVector::open_uniform_multiplicity(
                degree,
                target.breakpoints().to_vec(),
                (degree as i64 - continuity) as usize,
            )?,
        )?;
        trace(degree, &source_space, &source_rule, &schedule, config)?
    };

    // Verify against the space the caller asked for (for the odd family this
    // is the contained all-equal-multiplicity space).
    let report = quadrature::residuals(&derived.rule, &user_space)?;
    if report.norm > quadrature::default_exactness_tol::<f64>() {
        return Err(HomotopyError::Verification { norm: report.norm });
    }
    Ok(DerivedRule { report, ..derived })
}

fn map_derived(derived: DerivedRule, a: f64, b: f64) -> DerivedRule {
    let rule = derived.rule.affine_mapped(a, b);
    let extended = derived
        .extended
        .affine_mapped(DDouble::from(a), DDouble::from(b));
    DerivedRule {
        rule,
        extended,
        ..derived
    }
}

/// Convenience wrapper for uniform targets on a given domain.
pub fn derive_uniform(
    degree: usize,
    continuity: i64,
    n_elements: usize,
    domain: (f64, f64),
    config: &HomotopyConfig,
) -> Result<DerivedRule, HomotopyError> {
    let (a, b) = domain;
    let breakpoints: Vec<f64> = (0..=n_elements)
        .map(|i| a + (b - a) * i as f64 / n_elements as f64)
        .collect();
    let kv = KnotVector::open_uniform_multiplicity(
        degree,
        breakpoints,
        (degree as i64 - continuity) as usize,
    )?;
    derive_rule(degree, continuity, &kv, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{RuleKind, Side};

    fn config() -> HomotopyConfig {
        HomotopyConfig::default()
    }

    #[test]
    fn schedule_endpoints_match_source_and_target() {
        let source = KnotVector::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![7, 5, 7, 5, 7],
        )
        .unwrap();
        let target = KnotVector::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![7, 5, 5, 5, 7],
        )
        .unwrap();
        let schedule = KnotSchedule::build(6, &source, &target).unwrap();
        assert_eq!(schedule.at(0.0).unwrap(), source);
        assert_eq!(schedule.at(1.0).unwrap(), target);
        // One double knot migrates from the middle to the right boundary.
        assert_eq!(schedule.movers().len(), 1);
        assert_eq!(schedule.movers()[0].mult, 2);
        assert_eq!(schedule.movers()[0].from, 2.0);
        assert_eq!(schedule.movers()[0].to, 4.0);
        // Intermediate snapshot keeps the multiset size.
        let mid = schedule.at(0.25).unwrap();
        assert_eq!(mid.total_multiplicity(), source.total_multiplicity());
        assert_eq!(
            mid.multiplicities(),
            &[7, 5, 5, 2, 5, 7],
            "double knot drifts as its own breakpoint"
        );
    }

    #[test]
    fn trace_d6c1_four_elements() {
        let target = KnotVector::open_uniform_multiplicity(
            6,
            (0..=4).map(f64::from).collect(),
            5,
        )
        .unwrap();
        let derived = derive_rule(6, 1, &target, &config()).unwrap();
        assert_eq!(derived.rule.len(), 11);
        let space =
            SplineSpace::with_continuity(6, 1, (0..=4).map(f64::from).collect(), SpaceKind::Target)
                .unwrap();
        let outcome =
            quadrature::verify(&derived.rule, &space, quadrature::default_exactness_tol::<f64>())
                .unwrap();
        assert!(outcome.exact, "norm {:e}", outcome.report.norm);
        assert!(outcome.optimal);
        assert!(outcome.weights_positive);
        // Symmetric rule with a knot node at the middle.
        assert!((derived.rule.nodes()[5] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_schedule_returns_input() {
        let block = crate::blocks::gauss_block_d6c1::<f64>().unwrap();
        let kv = KnotVector::new(vec![0.0, 1.0, 2.0], vec![7, 5, 7]).unwrap();
        let space = SplineSpace::new(6, kv.clone(), SpaceKind::Source).unwrap();
        let schedule = KnotSchedule::build(6, &kv, &kv).unwrap();
        let derived = trace(6, &space, &block, &schedule, &config()).unwrap();
        for (x, y) in derived.rule.nodes().iter().zip(block.nodes()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn build_source_d6c1_four_elements_is_two_blocks() {
        let target = KnotVector::open_uniform_multiplicity(
            6,
            (0..=4).map(f64::from).collect(),
            5,
        )
        .unwrap();
        let (space, rule) = build_source(6, 1, &target, &config()).unwrap();
        assert_eq!(space.knots().multiplicities(), &[7, 5, 7, 5, 7]);
        assert_eq!(rule.len(), 12);
        let block = crate::blocks::gauss_block_d6c1::<f64>().unwrap();
        for i in 0..6 {
            assert!((rule.nodes()[i] - block.nodes()[i]).abs() < 1e-14);
            assert!((rule.nodes()[i + 6] - (block.nodes()[i] + 2.0)).abs() < 1e-14);
        }
        // The union rule is exact on its own merged space.
        let report = quadrature::residuals(&rule, &space).unwrap();
        assert!(report.max_abs < 1e-13);
        // Even dimension difference to the target.
        let target_space = SplineSpace::new(6, target, SpaceKind::Target).unwrap();
        let diff = space.dimension() - target_space.dimension();
        assert_eq!(diff % 2, 0);
        assert!(space.dimension() >= target_space.dimension());
    }

    #[test]
    fn build_source_d4c0_twenty_elements_merges_4_and_16() {
        let target = KnotVector::open_uniform_multiplicity(
            4,
            (0..=20).map(f64::from).collect(),
            4,
        )
        .unwrap();
        let (space, rule) = build_source(4, 0, &target, &config()).unwrap();
        // 4 + 16 split: junction at x = 4 has full multiplicity.
        let bp4 = space
            .knots()
            .breakpoints()
            .iter()
            .position(|x| (*x - 4.0).abs() < 1e-12)
            .unwrap();
        assert_eq!(space.knots().multiplicities()[bp4], 5);
        assert_eq!(rule.len(), 9 + 33);
        let report = quadrature::residuals(&rule, &space).unwrap();
        assert!(report.max_abs < 1e-12, "{:e}", report.max_abs);
    }

    #[test]
    fn trace_d4c0_eight_elements_with_pin_crossing() {
        let derived = derive_uniform(4, 0, 8, (0.0, 8.0), &config()).unwrap();
        assert_eq!(derived.rule.len(), 17);
        assert_eq!(derived.rule.kind(), RuleKind::GaussRadau);
        // Middle node pinned on the discontinuity knot.
        let i = derived.rule.pinned_index().unwrap();
        assert_eq!(derived.rule.nodes()[i], 4.0);
        // Exact on the C^0 space the caller asked about.
        let space =
            SplineSpace::with_continuity(4, 0, (0..=8).map(f64::from).collect(), SpaceKind::Target)
                .unwrap();
        let outcome =
            quadrature::verify(&derived.rule, &space, quadrature::default_exactness_tol::<f64>())
                .unwrap();
        assert!(outcome.exact, "norm {:e}", outcome.report.norm);
        assert!(outcome.optimal);
        // Symmetry about the middle.
        let m = derived.rule.len();
        for i in 0..m {
            assert!(
                (derived.rule.nodes()[i] + derived.rule.nodes()[m - 1 - i] - 8.0).abs() < 1e-11,
                "node symmetry at {i}"
            );
        }
    }

    #[test]
    fn pin_radau_makes_system_square() {
        let kv = KnotVector::new(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![5, 4, 5, 4, 5],
        )
        .unwrap();
        let space = SplineSpace::new(4, kv.clone(), SpaceKind::Source).unwrap();
        let rule = crate::blocks::radau_block_d4c0::<f64>().unwrap();
        let mut state = initial_state(4, &space, &rule).unwrap();
        // The block rule's middle node is already pinned by the junction scan.
        assert_eq!(state.unknown_count(), space.dimension());
        // Unpin and re-pin: the unknown count stays square throughout.
        let idx = state
            .slots
            .iter()
            .position(|s| matches!(s, NodeSlot::PinnedSplit { .. }))
            .unwrap();
        unpin(&mut state, idx, &kv);
        assert_eq!(state.unknown_count(), space.dimension());
        assert!(matches!(state.slots[idx], NodeSlot::Free { .. }));
        pin_radau(&mut state, 2.0).unwrap();
        assert_eq!(state.unknown_count(), space.dimension());
        assert!(state.slots.iter().any(|s| matches!(
            s,
            NodeSlot::PinnedSplit { position } if *position == 2.0
        )));
    }

    #[test]
    fn vanish_switch_engages_with_fine_steps() {
        // With many steps the trailing-pair drop happens before t = 1 and the
        // trailing weight decays monotonically.
        let target = KnotVector::open_uniform_multiplicity(
            6,
            (0..=4).map(f64::from).collect(),
            5,
        )
        .unwrap();
        let (space, rule) = build_source(6, 1, &target, &config()).unwrap();
        let schedule = KnotSchedule::build(6, space.knots(), &target).unwrap();
        let cfg = HomotopyConfig {
            steps: 2000,
            collect_log: true,
            ..config()
        };
        let derived = trace(6, &space, &rule, &schedule, &cfg).unwrap();
        assert_eq!(derived.rule.len(), 11);
        let late: Vec<&TraceRecord> = derived
            .trace_log
            .iter()
            .filter(|r| r.t >= 0.9 && r.t < 1.0)
            .collect();
        for w in late.windows(2) {
            assert!(
                w[1].trailing_weight <= w[0].trailing_weight + 1e-9,
                "trailing weight must not grow: {} -> {} at t = {}",
                w[0].trailing_weight,
                w[1].trailing_weight,
                w[1].t
            );
        }
        // The switch fired before the final restructure.
        assert!(derived
            .trace_log
            .iter()
            .any(|r| r.t < 1.0 && r.trailing_weight == 0.0));
    }

    #[test]
    fn derived_rule_is_exact_on_random_splines() {
        use rand::{Rng, SeedableRng};
        let derived = derive_uniform(6, 1, 4, (0.0, 4.0), &config()).unwrap();
        let space =
            SplineSpace::with_continuity(6, 1, (0..=4).map(f64::from).collect(), SpaceKind::Target)
                .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let coeffs: Vec<f64> =
                (0..space.dimension()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = |x: f64| {
                let (first, values) = space.basis_values_at(x, Side::Right);
                values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| coeffs[first + i] * v)
                    .sum::<f64>()
            };
            let exact =
                crate::reference::integrate_per_span(space.knots().breakpoints(), 6, f);
            let got = derived.rule.apply(f);
            let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((got - exact).abs() <= 1e-12 * norm.max(1.0));
        }
    }

    #[test]
    fn rejects_undecomposable_element_counts() {
        assert!(matches!(
            derive_uniform(6, 1, 3, (0.0, 3.0), &config()),
            Err(HomotopyError::Unsupported(_))
        ));
        assert!(matches!(
            derive_uniform(4, 0, 6, (0.0, 6.0), &config()),
            Err(HomotopyError::Unsupported(_))
        ));
    }
}
