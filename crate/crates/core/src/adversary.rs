//! Activation and loss streams: benign random streams, the two-cluster
//! scenario and the lower-bound constructions (indistinguishable gradients,
//! worst-delay activation, ±G sign sequences).
//!
//! Streams are generated up front from `stream_rng(seed, STREAM_SCENARIO, 0)`,
//! so `(spec, seed)` regenerates a scenario bit for bit.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{encode_deterministic, norm, EncoderKind, EncoderSpec, EncodingError, F64_GRID_BITS};
use crate::graph::{Graph, NodeId, TwoClusterLayout};
use crate::rng::{stream_rng, STREAM_SCENARIO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error("no colliding pair: {0} bits per coordinate resolve below f64 precision")]
    NoCollisionFound(usize),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// Loss of one round, fixed before the learner moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundLoss {
    /// `w ↦ ⟨g, w⟩`.
    Linear { g: Vec<f64> },
    /// `w ↦ |⟨x, w - target⟩|`.
    Absolute { x: Vec<f64>, target: Vec<f64> },
}

impl RoundLoss {
    pub fn value(&self, w: &[f64]) -> f64 {
        match self {
            RoundLoss::Linear { g } => dot(g, w),
            RoundLoss::Absolute { x, target } => residual(x, target, w).abs(),
        }
    }

    /// Designated subgradient at `w` (zero at the kink of the absolute loss).
    pub fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        match self {
            RoundLoss::Linear { g } => g.clone(),
            RoundLoss::Absolute { x, target } => {
                let r = residual(x, target, w);
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                x.iter().map(|v| s * v).collect()
            }
        }
    }

    /// Bound on the norm of every subgradient.
    pub fn lipschitz(&self) -> f64 {
        match self {
            RoundLoss::Linear { g } => norm(g),
            RoundLoss::Absolute { x, .. } => norm(x),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, RoundLoss::Linear { .. })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(x: &[f64], target: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).zip(target).map(|((xi, wi), ti)| xi * (wi - ti)).sum()
}

/// How per-round losses are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `g = -G s d/|d|` with `P(s = +1) = (1 + bias)/2`; comparators along
    /// `d` gain linearly.
    LinearSign { direction: Vec<f64>, bias: f64 },
    /// `|⟨x, w - target⟩|` with `x` uniform on the sphere of radius `G`.
    Absolute { target: Vec<f64> },
    /// Linear loss with `g` uniform in the ball of radius `G`.
    UniformBall,
}

impl LossSpec {
    fn validate(&self, dim: usize) -> Result<(), ScenarioError> {
        let check_len = |v: &[f64], what: &str| {
            if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
                Err(ScenarioError::InvalidParameter(format!("{what} must be a finite {dim}-vector")))
            } else {
                Ok(())
            }
        };
        match self {
            LossSpec::LinearSign { direction, bias } => {
                check_len(direction, "direction")?;
                if norm(direction) == 0.0 {
                    return Err(ScenarioError::InvalidParameter("direction must be non-zero".into()));
                }
                if !(-1.0..=1.0).contains(bias) {
                    return Err(ScenarioError::InvalidParameter(format!("bias {bias} outside [-1, 1]")));
                }
                Ok(())
            }
            LossSpec::Absolute { target } => check_len(target, "target"),
            LossSpec::UniformBall => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, dim: usize, g: f64, rng: &mut R) -> RoundLoss {
        match self {
            LossSpec::LinearSign { direction, bias } => {
                let s = if rng.gen_bool((1.0 + bias) / 2.0) { 1.0 } else { -1.0 };
                let n = norm(direction);
                RoundLoss::Linear { g: within(direction.iter().map(|x| -g * s * x / n).collect(), g) }
            }
            LossSpec::Absolute { target } => {
                RoundLoss::Absolute { x: within(sphere(dim, g, rng), g), target: target.clone() }
            }
            LossSpec::UniformBall => {
                let r = g * rng.gen::<f64>().powf(1.0 / dim as f64);
                RoundLoss::Linear { g: within(sphere(dim, r, rng), g) }
            }
        }
    }
}

fn sphere<R: Rng>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| radius * x / n).collect();
        }
    }
}

/// Shrinks `v` by ulps until `|v| <= bound`.
fn within(mut v: Vec<f64>, bound: f64) -> Vec<f64> {
    while norm(&v) > bound {
        for x in &mut v {
            *x *= 1.0 - f64::EPSILON;
        }
    }
    v
}

/// A colliding pair for a deterministic encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub payload: String,
}

impl CollisionPair {
    pub fn distance(&self) -> f64 {
        norm(&self.g.iter().zip(&self.h).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    /// Unit vector along `h - g`.
    pub fn aligned_direction(&self) -> Vec<f64> {
        let diff: Vec<f64> = self.h.iter().zip(&self.g).map(|(a, b)| a - b).collect();
        let n = norm(&diff);
        diff.into_iter().map(|x| x / n).collect()
    }

    /// Expected-regret floor `(T/4) |g - h| |u|`.
    pub fn regret_floor(&self, rounds: usize, comparator_norm: f64) -> f64 {
        rounds as f64 / 4.0 * self.distance() * comparator_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub tag: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub descriptor: ScenarioDescriptor,
    pub dim: usize,
    pub grad_bound: f64,
    pub activations: Vec<NodeId>,
    pub losses: Vec<RoundLoss>,
    pub collision: Option<CollisionPair>,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    /// Activation of round `t` (1-based).
    pub fn active(&self, t: u64) -> NodeId {
        self.activations[t as usize - 1]
    }

    pub fn loss(&self, t: u64) -> &RoundLoss {
        &self.losses[t as usize - 1]
    }

    fn assert_bounded(&self) {
        for (i, l) in self.losses.iter().enumerate() {
            assert!(
                l.lipschitz() <= self.grad_bound,
                "round {} gradient norm {} exceeds {}",
                i + 1,
                l.lipschitz(),
                self.grad_bound
            );
        }
    }
}

fn check_common(dim: usize, g: f64) -> Result<(), ScenarioError> {
    if dim == 0 {
        return Err(ScenarioError::InvalidParameter("dimension must be at least 1".into()));
    }
    if !(g > 0.0 && g.is_finite()) {
        return Err(ScenarioError::InvalidParameter(format!("gradient bound {g} must be positive")));
    }
    Ok(())
}

fn e1(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

/// Default per-cluster losses: linear, biased towards `+e1` in cluster 0
/// and `-e1` in cluster 1.
pub fn default_cluster_losses(dim: usize) -> [LossSpec; 2] {
    let neg: Vec<f64> = e1(dim).into_iter().map(|x| -x).collect();
    [LossSpec::LinearSign { direction: e1(dim), bias: 0.5 }, LossSpec::LinearSign { direction: neg, bias: 0.5 }]
}

/// Activations uniform over the hubs and leaves of both clusters; each
/// round's loss is drawn from the active node's cluster.
pub fn two_cluster_scenario(
    layout: &TwoClusterLayout,
    rounds: usize,
    seed: u64,
    dim: usize,
    grad_bound: f64,
    losses: &[LossSpec; 2],
) -> Result<Scenario, ScenarioError> {
    check_common(dim, grad_bound)?;
    for l in losses {
        l.validate(dim)?;
    }
    let members: Vec<(NodeId, usize)> =
        (0..2).flat_map(|c| layout.cluster(c).into_iter().map(move |n| (n, c))).collect();
    let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
    let mut activations = Vec::with_capacity(rounds);
    let mut round_losses = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let (node, c) = members[rng.gen_range(0..members.len())];
        activations.push(node);
        round_losses.push(losses[c].sample(dim, grad_bound, &mut rng));
    }
    let s = Scenario {
        descriptor: ScenarioDescriptor {
            tag: "two_cluster".into(),
            seed,
            params: serde_json::json!({ "losses": losses, "layout": layout }),
        },
        dim,
        grad_bound,
        activations,
        losses: round_losses,
        collision: None,
    };
    s.assert_bounded();
    Ok(s)
}

/// Uniform activations over `nodes` with i.i.d. losses.
pub fn random_scenario(
    nodes: &[NodeId],
    rounds: usize,
    seed: u64,
    dim: usize,
    grad_bound: f64,
    loss: &LossSpec,
) -> Result<Scenario, ScenarioError> {
    check_common(dim, grad_bound)?;
    loss.validate(dim)?;
    if nodes.is_empty() {
        return Err(ScenarioError::InvalidParameter("no nodes to activate".into()));
    }
    let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
    let mut activations = Vec::with_capacity(rounds);
    let mut losses = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        activations.push(nodes[rng.gen_range(0..nodes.len())]);
        losses.push(loss.sample(dim, grad_bound, &mut rng));
    }
    let s = Scenario {
        descriptor: ScenarioDescriptor {
            tag: "random".into(),
            seed,
            params: serde_json::json!({ "nodes": nodes, "loss": loss }),
        },
        dim,
        grad_bound,
        activations,
        losses,
        collision: None,
    };
    s.assert_bounded();
    Ok(s)
}

/// Activation cycle `path[0], path[2], …, path[2(m-1)]` with `m = max(⌊D/2⌋, 1)`
/// along a diameter-realizing path.
pub fn worst_delay_cycle(g: &Graph) -> Vec<NodeId> {
    let path = g.diameter_path();
    let m = (g.diameter() / 2).max(1);
    (0..m).map(|j| path[(2 * j).min(path.len() - 1)]).collect()
}

pub fn worst_delay_scenario(
    g: &Graph,
    rounds: usize,
    seed: u64,
    dim: usize,
    grad_bound: f64,
    loss: &LossSpec,
) -> Result<Scenario, ScenarioError> {
    check_common(dim, grad_bound)?;
    loss.validate(dim)?;
    let cycle = worst_delay_cycle(g);
    let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
    let activations: Vec<NodeId> = (0..rounds).map(|i| cycle[i % cycle.len()]).collect();
    let losses = (0..rounds).map(|_| loss.sample(dim, grad_bound, &mut rng)).collect();
    let s = Scenario {
        descriptor: ScenarioDescriptor {
            tag: "worst_delay".into(),
            seed,
            params: serde_json::json!({ "cycle": cycle, "loss": loss }),
        },
        dim,
        grad_bound,
        activations,
        losses,
        collision: None,
    };
    s.assert_bounded();
    Ok(s)
}

/// Two points of one grid cell at nearly the cell diameter: the origin and
/// `c·(1, …, 1)` with `c` just below the cell width (or `G/√d` if smaller).
pub fn grid_collision(spec: &EncoderSpec) -> Result<CollisionPair, ScenarioError> {
    if spec.kind != EncoderKind::DeterministicGrid {
        return Err(EncodingError::WrongKind("deterministic").into());
    }
    spec.validate()?;
    let q = spec.cell_bits();
    if q >= F64_GRID_BITS {
        return Err(ScenarioError::NoCollisionFound(q));
    }
    let d = spec.dim;
    let width = 2.0 * spec.grad_bound * 2f64.powi(-(q as i32));
    let c = (width * (1.0 - 1e-9)).min(spec.grad_bound / (d as f64).sqrt() * (1.0 - 1e-12));
    let g = vec![0.0; d];
    let pg = encode_deterministic(&g, spec)?;
    for sign in [1.0, -1.0] {
        let h = within(vec![sign * c; d], spec.grad_bound);
        let ph = encode_deterministic(&h, spec)?;
        if ph == pg {
            return Ok(CollisionPair { g, h, payload: crate::encoding::bits_to_hex(&pg) });
        }
    }
    Err(ScenarioError::NoCollisionFound(q))
}

/// Birthday search: samples `samples` points uniformly in the ball of radius
/// `G`, buckets them by payload and returns the farthest pair sharing one.
pub fn collision_search<E, R>(
    encode: E,
    dim: usize,
    grad_bound: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Option<CollisionPair>, ScenarioError>
where
    E: Fn(&[f64]) -> Result<Vec<bool>, EncodingError>,
    R: Rng,
{
    check_common(dim, grad_bound)?;
    let mut buckets: HashMap<Vec<bool>, Vec<Vec<f64>>> = HashMap::new();
    for _ in 0..samples {
        let r = grad_bound * rng.gen::<f64>().powf(1.0 / dim as f64);
        let x = within(sphere(dim, r, rng), grad_bound);
        buckets.entry(encode(&x)?).or_default().push(x);
    }
    let mut best: Option<(f64, CollisionPair)> = None;
    for (payload, pts) in &buckets {
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let dist = norm(&pts[i].iter().zip(&pts[j]).map(|(a, b)| a - b).collect::<Vec<_>>());
                if best.as_ref().is_none_or(|(b, _)| dist > *b) {
                    let pair = CollisionPair {
                        g: pts[i].clone(),
                        h: pts[j].clone(),
                        payload: crate::encoding::bits_to_hex(payload),
                    };
                    best = Some((dist, pair));
                }
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Single active node; `g_t = g` or `-(g + h)/2` with probability ½ each,
/// where `g` and `h` share a payload.
pub fn encoding_attack_scenario(
    spec: &EncoderSpec,
    rounds: usize,
    seed: u64,
    node: NodeId,
) -> Result<Scenario, ScenarioError> {
    let pair = grid_collision(spec)?;
    let alt: Vec<f64> = pair.g.iter().zip(&pair.h).map(|(a, b)| -(a + b) / 2.0).collect();
    let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
    let losses = (0..rounds)
        .map(|_| RoundLoss::Linear { g: if rng.gen_bool(0.5) { pair.g.clone() } else { alt.clone() } })
        .collect();
    let s = Scenario {
        descriptor: ScenarioDescriptor {
            tag: "encoding_attack".into(),
            seed,
            params: serde_json::json!({ "encoder": spec, "pair": pair, "node": node }),
        },
        dim: spec.dim,
        grad_bound: spec.grad_bound,
        activations: vec![node; rounds],
        losses,
        collision: Some(pair),
    };
    s.assert_bounded();
    Ok(s)
}

/// Single active node; `g_t = ±G d/|d|` with probability ½ each.
pub fn sign_sequence_scenario(
    direction: &[f64],
    rounds: usize,
    seed: u64,
    grad_bound: f64,
    node: NodeId,
) -> Result<Scenario, ScenarioError> {
    let loss = LossSpec::LinearSign { direction: direction.to_vec(), bias: 0.0 };
    check_common(direction.len(), grad_bound)?;
    loss.validate(direction.len())?;
    let mut rng = stream_rng(seed, STREAM_SCENARIO, 0);
    let losses = (0..rounds).map(|_| loss.sample(direction.len(), grad_bound, &mut rng)).collect();
    let s = Scenario {
        descriptor: ScenarioDescriptor {
            tag: "sign_sequence".into(),
            seed,
            params: serde_json::json!({ "direction": direction, "node": node }),
        },
        dim: direction.len(),
        grad_bound,
        activations: vec![node; rounds],
        losses,
        collision: None,
    };
    s.assert_bounded();
    Ok(s)
}
