//! The exactness system `Q[B_j] = I[B_j]` as a Newton-ready nonlinear system.
//!
//! Node slots distinguish ordinary free nodes from constrained ones: a node
//! pinned on an interior discontinuity knot carries two weight unknowns (one
//! share per side, since the basis functions there have one-sided limits), a
//! node pinned on a domain boundary carries a single weight unknown, and a
//! frozen node (a vanishing trailing node parked on `b`) carries none.

use crate::linalg::Matrix;
use crate::newton::NonlinearSystem;
use crate::real::Real;
use crate::spline::{Side, SplineSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeSlot<R: Real> {
    /// Position and weight unknown; position clamped into `[lo, hi]`.
    Free { lo: R, hi: R },
    /// Node fixed on an interior full-multiplicity knot; the two weight
    /// shares (left side, right side) are unknowns.
    PinnedSplit { position: R },
    /// Node fixed on a domain endpoint; weight unknown.
    PinnedBoundary { position: R },
    /// Fully fixed node, excluded from the unknowns.
    Frozen { position: R, weight: R },
}

impl<R: Real> NodeSlot<R> {
    pub fn position_unknowns(&self) -> usize {
        matches!(self, NodeSlot::Free { .. }) as usize
    }

    pub fn weight_unknowns(&self) -> usize {
        match self {
            NodeSlot::Free { .. } | NodeSlot::PinnedBoundary { .. } => 1,
            NodeSlot::PinnedSplit { .. } => 2,
            NodeSlot::Frozen { .. } => 0,
        }
    }
}

/// Concrete node values extracted from an unknown vector.
#[derive(Clone, Debug)]
pub struct SlotValues<R: Real> {
    pub position: R,
    /// (left share, right share); equal-sided for ordinary nodes.
    pub weights: (R, Option<R>),
}

impl<R: Real> SlotValues<R> {
    pub fn total_weight(&self) -> R {
        match self.weights.1 {
            Some(b) => self.weights.0 + b,
            None => self.weights.0,
        }
    }
}

/// Exactness of a rule, parameterized by slots, on the leading
/// `active_equations` basis functions of `space`.
pub struct ExactnessSystem<'a, R: Real> {
    space: &'a SplineSpace<R>,
    slots: &'a [NodeSlot<R>],
    active_equations: usize,
}

impl<'a, R: Real> ExactnessSystem<'a, R> {
    pub fn new(
        space: &'a SplineSpace<R>,
        slots: &'a [NodeSlot<R>],
        active_equations: usize,
    ) -> Self {
        let unknowns: usize = slots
            .iter()
            .map(|s| s.position_unknowns() + s.weight_unknowns())
            .sum();
        assert_eq!(
            unknowns, active_equations,
            "exactness system must be square ({unknowns} unknowns vs {active_equations} equations)"
        );
        ExactnessSystem {
            space,
            slots,
            active_equations,
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.active_equations
    }

    /// Pack slot values into an unknown vector (positions first, weights after).
    pub fn pack(&self, values: &[SlotValues<R>]) -> Vec<R> {
        assert_eq!(values.len(), self.slots.len());
        let mut x = Vec::with_capacity(self.active_equations);
        for (slot, v) in self.slots.iter().zip(values) {
            if slot.position_unknowns() == 1 {
                x.push(v.position);
            }
        }
        for (slot, v) in self.slots.iter().zip(values) {
            match slot {
                NodeSlot::Free { .. } | NodeSlot::PinnedBoundary { .. } => x.push(v.weights.0),
                NodeSlot::PinnedSplit { .. } => {
                    x.push(v.weights.0);
                    x.push(v.weights.1.expect("split slot needs two weight shares"));
                }
                NodeSlot::Frozen { .. } => {}
            }
        }
        x
    }

    /// Unpack an unknown vector into per-slot values.
    pub fn unpack(&self, x: &[R]) -> Vec<SlotValues<R>> {
        let mut pos_idx = 0;
        let n_pos: usize = self.slots.iter().map(|s| s.position_unknowns()).sum();
        let mut w_idx = n_pos;
        let mut out = Vec::with_capacity(self.slots.len());
        for slot in self.slots {
            let position = match slot {
                NodeSlot::Free { .. } => {
                    let p = x[pos_idx];
                    pos_idx += 1;
                    p
                }
                NodeSlot::PinnedSplit { position } | NodeSlot::PinnedBoundary { position } => {
                    *position
                }
                NodeSlot::Frozen { position, .. } => *position,
            };
            let weights = match slot {
                NodeSlot::Free { .. } | NodeSlot::PinnedBoundary { .. } => {
                    let w = x[w_idx];
                    w_idx += 1;
                    (w, None)
                }
                NodeSlot::PinnedSplit { .. } => {
                    let a = x[w_idx];
                    let b = x[w_idx + 1];
                    w_idx += 2;
                    (a, Some(b))
                }
                NodeSlot::Frozen { position: _, weight } => (*weight, None),
            };
            out.push(SlotValues { position, weights });
        }
        out
    }

    fn scatter(&self, q: &mut [R], first: usize, values: &[R], weight: R) {
        for (offset, v) in values.iter().enumerate() {
            let j = first + offset;
            if j < self.active_equations {
                q[j] += weight * *v;
            }
        }
    }

    /// Quadrature values of the leading active basis functions.
    pub fn quadrature_vector(&self, values: &[SlotValues<R>]) -> Vec<R> {
        let mut q = vec![R::zero(); self.active_equations];
        for (slot, v) in self.slots.iter().zip(values) {
            match slot {
                NodeSlot::Free { .. } | NodeSlot::Frozen { .. } | NodeSlot::PinnedBoundary { .. } => {
                    let (first, vals) = self.space.basis_values_at(v.position, Side::Right);
                    self.scatter(&mut q, first, &vals, v.weights.0);
                }
                NodeSlot::PinnedSplit { position } => {
                    let (fl, left_vals) = self.space.basis_values_at(*position, Side::Left);
                    self.scatter(&mut q, fl, &left_vals, v.weights.0);
                    let (fr, right_vals) = self.space.basis_values_at(*position, Side::Right);
                    self.scatter(&mut q, fr, &right_vals, v.weights.1.unwrap());
                }
            }
        }
        q
    }
}

impl<'a, R: Real> NonlinearSystem<R> for ExactnessSystem<'a, R> {
    fn dim(&self) -> usize {
        self.active_equations
    }

    fn residual(&self, x: &[R], out: &mut [R]) {
        let values = self.unpack(x);
        let q = self.quadrature_vector(&values);
        for (j, out_j) in out.iter_mut().enumerate() {
            *out_j = q[j] - self.space.basis_integral(j);
        }
    }

    fn jacobian(&self, x: &[R], out: &mut Matrix<R>) {
        out.fill_zero();
        let values = self.unpack(x);
        let n_pos: usize = self.slots.iter().map(|s| s.position_unknowns()).sum();
        let mut pos_idx = 0;
        let mut w_idx = n_pos;
        for (slot, v) in self.slots.iter().zip(&values) {
            match slot {
                NodeSlot::Free { .. } => {
                    let (first, ders) =
                        self.space.basis_derivatives_at(v.position, Side::Right, 1);
                    for offset in 0..ders[0].len() {
                        let j = first + offset;
                        if j < self.active_equations {
                            out.add_to(j, pos_idx, v.weights.0 * ders[1][offset]);
                            out.add_to(j, w_idx, ders[0][offset]);
                        }
                    }
                    pos_idx += 1;
                    w_idx += 1;
                }
                NodeSlot::PinnedBoundary { position } => {
                    let (first, vals) = self.space.basis_values_at(*position, Side::Right);
                    for (offset, val) in vals.iter().enumerate() {
                        let j = first + offset;
                        if j < self.active_equations {
                            out.add_to(j, w_idx, *val);
                        }
                    }
                    w_idx += 1;
                }
                NodeSlot::PinnedSplit { position } => {
                    let (fl, left_vals) = self.space.basis_values_at(*position, Side::Left);
                    for (offset, val) in left_vals.iter().enumerate() {
                        let j = fl + offset;
                        if j < self.active_equations {
                            out.add_to(j, w_idx, *val);
                        }
                    }
                    let (fr, right_vals) = self.space.basis_values_at(*position, Side::Right);
                    for (offset, val) in right_vals.iter().enumerate() {
                        let j = fr + offset;
                        if j < self.active_equations {
                            out.add_to(j, w_idx + 1, *val);
                        }
                    }
                    w_idx += 2;
                }
                NodeSlot::Frozen { .. } => {}
            }
        }
    }

    fn project(&self, x: &mut [R]) {
        let mut pos_idx = 0;
        for slot in self.slots {
            if let NodeSlot::Free { lo, hi } = slot {
                if x[pos_idx] < *lo {
                    x[pos_idx] = *lo;
                }
                if x[pos_idx] > *hi {
                    x[pos_idx] = *hi;
                }
                pos_idx += 1;
            }
        }
    }
}
