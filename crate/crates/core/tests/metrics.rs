use doco::adversary::{random_scenario, LossSpec};
use doco::encoding::{norm, EncoderSpec};
use doco::graph::Graph;
use doco::metrics::*;
use doco::partition::StackSettings;
use doco::sim::{run_baseline, run_single, RunOptions};
use doco::transport::DeliveryModel;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_regrets_round_trip(seed in any::<u64>(), n in 1usize..6, us in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let g = Graph::path(n).unwrap();
        let nodes: Vec<usize> = g.nodes().collect();
        let sc = random_scenario(&nodes, 120, seed, 2, 1.0, &LossSpec::Absolute { target: vec![0.2, 0.1] }).unwrap();
        let tmpl = EncoderSpec::deterministic(2, 1.0, 2).unwrap();
        let trace = run_single(&g, &sc, &StackSettings::default(), &tmpl, RunOptions::new(32 * n, seed)).unwrap();
        let comps: Vec<Vec<f64>> = us.chunks(2).map(|c| c.to_vec()).collect();
        let mut buf = Vec::new();
        let written = write_trace_csv(&mut buf, &trace, &sc, &comps).unwrap();
        let reread = regrets_from_csv(buf.as_slice()).unwrap();
        for ((u, w), r) in comps.iter().zip(&written).zip(&reread) {
            let direct = regret(&trace, &sc, u).unwrap().regret;
            prop_assert!((w - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            prop_assert!((r - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        }
    }

    /// The lag from recorded missing sets equals the lag from availability queries.
    #[test]
    fn trace_lag_matches_availability(seed in any::<u64>(), n in 2usize..7) {
        let g = Graph::path(n).unwrap();
        let nodes: Vec<usize> = g.nodes().collect();
        let sc = random_scenario(&nodes, 90, seed, 2, 1.0, &LossSpec::UniformBall).unwrap();
        let tmpl = EncoderSpec::deterministic(2, 1.0, 2).unwrap();
        let trace = run_baseline(&g, &sc, 0.1, &tmpl, RunOptions::new(32 * n, seed)).unwrap();
        let model = DeliveryModel::for_graph(&g, g.diameter()).unwrap();
        let norms: Vec<f64> = trace.rounds.iter().map(|r| norm(&r.g)).collect();
        let mut expected = 0.0;
        for (t, r) in trace.rounds.iter().enumerate() {
            let missing: f64 = (0..t)
                .filter(|&s| !model.available(sc.activations[s], s as u64 + 1, r.node, t as u64 + 1))
                .map(|s| norms[s])
                .sum();
            expected += norms[t] * norms[t] + 2.0 * norms[t] * missing;
        }
        let lags = trace_lags(&trace);
        prop_assert!((lags.lambda - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn bounds_grow_with_lag(u in 0.01f64..100.0, lam in 0.0f64..1e4, d in 1usize..10) {
        let a = scale_bound(u, 1.0, 0.0, 1.0, d, 1000, lam);
        let b = scale_bound(u, 1.0, 0.0, 1.0, d, 1000, lam + 100.0);
        prop_assert!(b >= a && a >= 1.0);
        prop_assert!(deterministic_b(u, 1.0, 0.0, 1.0, d, 1000, lam + 1.0) >= deterministic_b(u, 1.0, 0.0, 1.0, d, 1000, lam));
    }
}

#[test]
fn explicit_bounds_match_reference_values() {
    assert!(rel(scale_bound(10.0, 0.5, 0.01, 1.0, 4, 1000, 300.0), 107120.81492542433) < 1e-13);
    assert!(rel(scale_bound(0.001, 1.0, 0.0, 1.0, 0, 1000, 10.0), 1.264) < 1e-13);
    assert!(rel(deterministic_b(3.0, 1.0, 0.02, 2.0, 3, 5000, 900.0), 16610.69797892306) < 1e-13);
    assert!(rel(stochastic_b(2.0, 1.0, 8, 1.0, 3, 2000, 4000.0), 138592.73473463478) < 1e-13);
    let p = BoundParams {
        collection_size: Some(3),
        grad_bound: Some(1.0),
        dim: Some(2),
        budget: Some(64),
        delay: Some(4),
        cells: Some(vec![
            CellParams { u_norm: 1.0, lambda: 100.0, diameter: 2, rounds: 500 },
            CellParams { u_norm: 0.5, lambda: 40.0, diameter: 4, rounds: 300 },
        ]),
        ..BoundParams::default()
    };
    let v = bound_evaluator(Theorem::T6, &p, 0.0).unwrap();
    assert!(v.order_level);
    assert!(rel(v.value, 39.49317734699479) < 1e-13);
    assert!(matches!(bound_evaluator(Theorem::T3, &p, 1.0), Err(MetricsError::MissingMetadata("nu"))));
}

#[test]
fn stack_csv_has_one_row_per_stack_round() {
    let g = Graph::path(3).unwrap();
    let sc = random_scenario(&[0, 1, 2], 50, 2, 2, 1.0, &LossSpec::UniformBall).unwrap();
    let tmpl = EncoderSpec::deterministic(2, 1.0, 2).unwrap();
    let trace = run_single(&g, &sc, &StackSettings::default(), &tmpl, RunOptions::new(64, 2)).unwrap();
    let mut buf = Vec::new();
    write_stack_csv(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 51);
    assert!(text.starts_with("t,subgraph,v_t,z_norm,h_t,hhat_t,potential,w_0,w_1"));
    let summary = summarize(&trace, &sc, &[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    assert!(summary.scale_bound_ok && summary.null_regret_ok);
    assert!(summary.comparators.iter().all(|c| c.within_bound == Some(true)));
    assert!(potential_slacks(&trace.stacks[0], true).unwrap().iter().all(|&s| s >= -1e-9));
}

#[test]
fn malformed_csv_is_reported() {
    assert!(matches!(regrets_from_csv("a,b\n1,2\n".as_bytes()), Err(MetricsError::Malformed(_))));
}
