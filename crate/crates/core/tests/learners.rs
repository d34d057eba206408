use doco::graph::Graph;
use doco::learners::blackbox::LearnerStack;
use doco::learners::direction::{project_unit_ball, LazyProjection};
use doco::learners::inequalities::{exp_concavity_max_second_difference, prod_generalization_check};
use doco::learners::integral::{ln_moments, ln_normalizer, quadrature_ln_moment};
use doco::learners::ogd::Ogd;
use doco::learners::scale::{ScaleLearner, ScaleTuning};
use doco::learners::{LearnerError, OnlineLearner};
use doco::transport::DeliveryModel;
use proptest::prelude::*;

fn path_model(d: usize) -> (Graph, DeliveryModel) {
    let g = Graph::path(d + 1).unwrap();
    let m = DeliveryModel::for_graph(&g, d.max(1)).unwrap();
    (g, m)
}

proptest! {
    #[test]
    fn closed_form_matches_quadrature(l in -4000.0f64..4000.0, extra in 0.0f64..5000.0, d in 0usize..16) {
        let a = 1.0 / (20.0 * (1.0 + 2.0 * d as f64));
        let v = 1.0 + extra;
        let m = ln_moments(l, v, a).unwrap();
        let q0 = quadrature_ln_moment(l, v, a, 0, 1e-12);
        let q1 = quadrature_ln_moment(l, v, a, 1, 1e-12);
        prop_assert!((m.ln_j0 - q0).abs() < 1e-9, "ln J0 {} vs {}", m.ln_j0, q0);
        prop_assert!((m.ln_j1 - q1).abs() < 1e-9, "ln J1 {} vs {}", m.ln_j1, q1);
    }

    /// Scale learner on a path with round-robin activations: `v >= 0`, the
    /// potential decreases by at least `v (ĥ + ε)`, and the bet total stays below `ν`.
    #[test]
    fn scale_learner_potential_decreases(
        d in 1usize..8,
        eps in prop_oneof![Just(0.0), 0.0f64..0.05],
        hs in proptest::collection::vec(-1.0f64..1.0, 1..150),
        nu in 0.1f64..4.0,
    ) {
        let (_, model) = path_model(d);
        let tuning = ScaleTuning { nu, eps, grad_bound: 1.0, delay_bound: d };
        let mut s = ScaleLearner::new(tuning, model).unwrap();
        let mut prev = nu;
        let mut total = 0.0;
        for (i, &h) in hs.iter().enumerate() {
            let t = i as u64 + 1;
            let node = i % (d + 1);
            let v = s.predict(t, node).unwrap().v;
            prop_assert!(v >= 0.0);
            s.record(t, node, h).unwrap();
            let (l, big_v) = s.global_sums();
            let a = s.a();
            let phi = nu * (quadrature_ln_moment(l, big_v, a, 0, 1e-13) - ln_normalizer(a)).exp();
            let x = h + eps;
            prop_assert!(phi <= prev - v * x + 1e-9 * (prev.abs() + (v * x).abs()), "round {}: {} > {} - {}", t, phi, prev, v * x);
            prev = phi;
            total += v * x;
        }
        prop_assert!(total <= nu * (1.0 + 1e-9));
    }

    #[test]
    fn prod_generalization_on_valid_tuples(
        tau in 0usize..=8,
        seeds in proptest::collection::vec((-1.0f64..1.0, 0.0f64..=1.0), 9),
        x in -1.0f64..1.0,
    ) {
        let r = 1.0 / (20.0 * (1.0 + tau as f64));
        let ys: Vec<f64> = seeds[..tau].iter().map(|(y, _)| y * r).collect();
        let a: Vec<f64> = seeds[..tau].iter().map(|(_, a)| a * 0.05).collect();
        prop_assert!(prod_generalization_check(x * r, &ys, &a).unwrap());
    }

    #[test]
    fn projection_lands_in_the_ball(x in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
        let p = project_unit_ball(x.clone());
        let n: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n <= 1.0 + 1e-12);
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx <= 1.0 {
            prop_assert_eq!(p, x);
        }
    }
}

#[test]
fn exp_concavity_on_small_histories() {
    for ys in [vec![], vec![0.05], vec![0.02, -0.03], vec![-0.025; 4]] {
        assert!(exp_concavity_max_second_difference(&ys, 401).unwrap() <= 1e-15);
    }
    assert!(exp_concavity_max_second_difference(&[0.5], 11).is_err());
}

#[test]
fn stack_plays_scale_times_direction() {
    let (_, model) = path_model(2);
    let tuning = ScaleTuning { nu: 1.0, eps: 0.0, grad_bound: 1.0, delay_bound: 2 };
    let scale = ScaleLearner::new(tuning, model.clone()).unwrap();
    let dir = LazyProjection::new(model, 2, 1.0).unwrap();
    let mut stack = LearnerStack::new(scale, Box::new(dir));
    for t in 1..40u64 {
        let node = (t % 3) as usize;
        let p = stack.predict_full(t, node).unwrap();
        for (w, z) in p.w.iter().zip(&p.z) {
            assert_eq!(*w, p.scale.v * z);
        }
        let h = stack.record_gradient(t, node, &[-0.6, 0.8]).unwrap();
        assert!((h - (-0.6 * p.z[0] + 0.8 * p.z[1])).abs() < 1e-15);
    }
    assert!(matches!(
        stack.record_gradient(99, 0, &[0.0, 0.0]),
        Err(LearnerError::RecordWithoutPrediction { got: 99, expected: None })
    ));
}

#[test]
fn ogd_respects_delays() {
    let (_, model) = path_model(3);
    let mut o = Ogd::new(model, 1, 0.5).unwrap();
    o.predict(1, 0).unwrap();
    o.record(1, 0, &[1.0]).unwrap();
    assert_eq!(o.predict(2, 3).unwrap(), vec![0.0]);
    o.record(2, 3, &[1.0]).unwrap();
    assert_eq!(o.predict(3, 0).unwrap(), vec![-0.5]);
    o.record(3, 0, &[1.0]).unwrap();
    assert_eq!(o.predict(4, 3).unwrap(), vec![-1.0]);
    assert!(Ogd::new(path_model(1).1, 1, 0.0).is_err());
}

#[test]
fn degenerate_tunings_are_rejected() {
    let (_, model) = path_model(1);
    let bad = [
        ScaleTuning { nu: -1.0, eps: 0.0, grad_bound: 1.0, delay_bound: 1 },
        ScaleTuning { nu: 1.0, eps: -0.1, grad_bound: 1.0, delay_bound: 1 },
        ScaleTuning { nu: 1.0, eps: 0.0, grad_bound: 0.0, delay_bound: 1 },
    ];
    for t in bad {
        assert!(matches!(ScaleLearner::new(t, model.clone()), Err(LearnerError::DegenerateTuning(_))));
    }
    assert!(LazyProjection::new(model, 2, 0.0).is_err());
}
