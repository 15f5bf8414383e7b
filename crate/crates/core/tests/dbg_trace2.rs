use spline_gauss::linalg::Matrix;
use spline_gauss::newton::NonlinearSystem;
use spline_gauss::spline::{SpaceKind, SplineSpace};
use spline_gauss::system::{ExactnessSystem, NodeSlot, SlotValues};

#[test]
fn dump_jacobian() {
    let positions = [
        0.09261, 0.42847, 0.83019, 1.18642, 1.61384, 1.99775, 2.36940, 2.77346, 3.00000,
        3.21234, 3.59053, 3.91141,
    ];
    let weights = [
        0.2305, 0.4070, 0.3671, 0.3860, 0.4352, 0.3408, 0.4157, 0.3509, 0.1292, 0.3288,
        0.3882, 0.2205,
    ];
    let kv = spline_gauss::spline::KnotVector::from_pairs(&[
        (0.0, 7), (1.0, 5), (2.0, 5), (3.0, 5), (3.0 + 0.505 * 2.0 - 1.0, 2), (4.0, 7),
    ])
    .unwrap();
    let space = SplineSpace::new(6, kv, SpaceKind::Merged).unwrap();
    let dim = space.dimension();
    let slots: Vec<NodeSlot<f64>> = positions.iter().map(|_| NodeSlot::Free { lo: 0.0, hi: 4.0 }).collect();
    let values: Vec<SlotValues<f64>> = positions
        .iter()
        .zip(&weights)
        .map(|(&p, &w)| SlotValues { position: p, weights: (w, None) })
        .collect();
    let system = ExactnessSystem::new(&space, &slots, dim);
    let x = system.pack(&values);
    let mut jac = Matrix::zeros(dim, dim);
    system.jacobian(&x, &mut jac);
    let mut rows = Vec::new();
    for r in 0..dim {
        let row: Vec<f64> = (0..dim).map(|c| jac.get(r, c)).collect();
        rows.push(row);
    }
    std::fs::write("/tmp/jac.json", serde_json::to_string(&rows).unwrap()).unwrap();
    println!("wrote /tmp/jac.json");
}
