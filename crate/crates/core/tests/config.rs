use doco::adversary::LossSpec;
use doco::config::*;
use doco::encoding::EncoderKind;
use proptest::prelude::*;

fn base(nodes: usize, dim: usize, budget: usize) -> ExperimentConfig {
    ExperimentConfig {
        graph: GraphSpec::Path { nodes },
        scenario: ScenarioSpec::Random { loss: LossSpec::UniformBall, nodes: None },
        encoder: EncoderConfig { kind: EncoderKind::DeterministicGrid, precision: None },
        learner: LearnerConfig::Stack {
            nu_total: 1.0,
            direction_c: 1.0,
            eps_override: None,
            grad_bound_override: None,
            limit_factor: 1.0,
        },
        collection: CollectionSpec::Single,
        dim,
        grad_bound: 1.0,
        rounds: 20,
        budget,
        comparators: vec![vec![0.0; dim]],
        cells: vec![],
        seeds: 1,
        master_seed: 0,
        keep_payloads: false,
        output_dir: None,
    }
}

fn loss(dim: usize, pick: u8, v: f64) -> LossSpec {
    match pick % 3 {
        0 => LossSpec::UniformBall,
        1 => LossSpec::Absolute { target: vec![v; dim] },
        _ => {
            let mut direction = vec![0.0; dim];
            direction[0] = 1.0;
            LossSpec::LinearSign { direction, bias: v.clamp(-1.0, 1.0) }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(nodes in 1usize..9, dim in 1usize..5, extra in 0usize..64, pick in any::<u8>(),
                       v in -1.0f64..1.0, seeds in 1usize..5, master in any::<u32>(), ogd in any::<bool>(),
                       balls in any::<bool>(), stoch in any::<bool>()) {
        let horizon = nodes - 1;
        let mut c = base(nodes, dim, 0);
        c.budget = if stoch { 64 + extra } else { dim * horizon.max(1) + extra };
        c.scenario = ScenarioSpec::Random { loss: loss(dim, pick, v / 2.0), nodes: None };
        c.seeds = seeds;
        c.master_seed = master as u64;
        if ogd {
            c.learner = LearnerConfig::Ogd { eta: 0.1 };
        } else if balls {
            c.collection = CollectionSpec::Balls { mode: doco::graph::RadiiMode::Dyadic };
        }
        if stoch {
            c.encoder = EncoderConfig { kind: EncoderKind::SparsifiedQuantization, precision: Some(2) };
        }
        c.prepare().unwrap();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.seed(2), master as u64 + 2);
    }
}

#[test]
fn bundled_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let c = ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        c.prepare().unwrap();
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn invalid_configs_are_rejected_with_messages() {
    let c = base(5, 2, 3);
    let err = c.prepare().unwrap_err().to_string();
    assert!(err.contains("budget"), "{err}");

    let mut c = base(3, 2, 64);
    c.comparators = vec![vec![0.0; 3]];
    assert!(matches!(c.prepare(), Err(ConfigError::Invalid(_))));

    let mut c = base(3, 2, 64);
    c.cells = vec![CellSpec { subgraph: 4, comparator: 0 }];
    assert!(c.prepare().is_err());

    let mut c = base(3, 2, 64);
    c.grad_bound = -1.0;
    assert!(c.prepare().is_err());

    let mut c = base(3, 2, 64);
    c.graph = GraphSpec::Edges { nodes: Some(3), edges: vec![(0, 1)], text: None };
    assert!(matches!(c.prepare(), Err(ConfigError::Graph(_))));

    assert!(matches!(ExperimentConfig::from_json("{\"graph\": 1}"), Err(ConfigError::Parse(_))));
    let mut doc = serde_json::to_value(base(3, 2, 64)).unwrap();
    doc["colour"] = serde_json::json!(1);
    assert!(ExperimentConfig::from_json(&doc.to_string()).is_err());
}

#[test]
fn with_param_and_sweep() {
    let c = base(3, 2, 64);
    assert_eq!(c.with_param("rounds", "7").unwrap().rounds, 7);
    assert_eq!(c.with_param("graph.nodes", "4").unwrap().graph, GraphSpec::Path { nodes: 4 });
    assert!(c.with_param("kind", "path").is_err());
    assert!(c.with_param("nope", "1").is_err());
    assert!(c.with_param("budget", "1").is_err());
    let (name, values) = parse_sweep("budget=64, 128").unwrap();
    assert_eq!((name.as_str(), values), ("budget", vec!["64".to_string(), "128".to_string()]));
    assert!(parse_sweep("budget").is_err());
    assert!(parse_sweep("=1").is_err());
}

#[test]
fn run_seed_is_deterministic() {
    let c = base(4, 2, 64);
    let p = c.prepare().unwrap();
    let (_, a) = c.run_seed(&p, 0).unwrap();
    let (_, b) = c.run_seed(&p, 0).unwrap();
    let (_, other) = c.run_seed(&p, 1).unwrap();
    let ws = |t: &doco::sim::Trace| t.rounds.iter().map(|r| r.w.clone()).collect::<Vec<_>>();
    assert_eq!(ws(&a), ws(&b));
    assert_ne!(ws(&a), ws(&other));
}
