use spline_gauss::homotopy::{self, HomotopyConfig, KnotSchedule};
use spline_gauss::spline::KnotVector;

#[test]
fn probe_trace_61_n4() {
    let target =
        KnotVector::open_uniform_multiplicity(6, (0..=4).map(f64::from).collect(), 5).unwrap();
    let cfg = HomotopyConfig {
        steps: 200,
        max_retries: 0,
        collect_log: true,
        ..HomotopyConfig::default()
    };
    let (space, rule) = homotopy::build_source(6, 1, &target, &cfg).unwrap();
    let schedule = KnotSchedule::build(6, space.knots(), &target).unwrap();
    match homotopy::trace(6, &space, &rule, &schedule, &cfg) {
        Ok(d) => {
            println!("OK {} nodes, norm {:e}", d.rule.len(), d.report.norm);
            for r in d.trace_log.iter().filter(|r| (r.t - 0.5).abs() < 0.02) {
                println!("t={:.4} iters={} res={:.2e} nodes={:?}", r.t, r.newton_iterations, r.residual_norm, &r.nodes[6..10]);
            }
        }
        Err(e) => {
            println!("FAILED: {e}");
        }
    }
}

#[test]
fn probe_jacobian_at_unpin() {
    use spline_gauss::linalg::Matrix;
    use spline_gauss::newton::NonlinearSystem;
    use spline_gauss::spline::{SpaceKind, SplineSpace};
    use spline_gauss::system::{ExactnessSystem, NodeSlot, SlotValues};
    // State captured from the failing step 101 (t = 0.505).
    let positions = [
        0.09261, 0.42847, 0.83019, 1.18642, 1.61384, 1.99775, 2.36940, 2.77346, 3.00000,
        3.21234, 3.59053, 3.91141,
    ];
    let kv = spline_gauss::spline::KnotVector::from_pairs(&[
        (0.0, 7), (1.0, 5), (2.0, 5), (3.0, 5), (3.01, 2), (4.0, 7),
    ])
    .unwrap();
    let space = SplineSpace::new(6, kv, SpaceKind::Merged).unwrap();
    let dim = space.dimension();
    println!("dim = {dim}");
    let slots: Vec<NodeSlot<f64>> = positions
        .iter()
        .map(|_| NodeSlot::Free { lo: 0.0, hi: 4.0 })
        .collect();
    let values: Vec<SlotValues<f64>> = positions
        .iter()
        .map(|&p| SlotValues { position: p, weights: (0.3, None) })
        .collect();
    let system = ExactnessSystem::new(&space, &slots, dim);
    let x = system.pack(&values);
    let mut jac = Matrix::zeros(dim, dim);
    system.jacobian(&x, &mut jac);
    // print columns 8 and 20 (rider position and weight)
    for col in [8usize, 20] {
        let col_vals: Vec<f64> = (0..dim).map(|r| jac.get(r, col)).collect();
        println!("col {col}: {:?}", col_vals.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>());
    }
}
