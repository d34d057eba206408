//! Round loop: activation, prediction, loss, encoding, forwarding and
//! bookkeeping for one seeded run.
//!
//! Round `t` draws its encoder randomness from
//! `stream_rng(master, STREAM_ENCODER, t)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Scenario;
use crate::encoding::{bits_to_hex, decode, encode, EncoderSpec, EncodingError};
use crate::graph::{Graph, NodeId};
use crate::learners::blackbox::dot;
use crate::learners::ogd::Ogd;
use crate::learners::scale::ScaleTuning;
use crate::learners::{LearnerError, OnlineLearner};
use crate::partition::{PartitionError, PartitionLearner, QCollection, StackSettings};
use crate::rng::{stream_rng, STREAM_ENCODER};
use crate::transport::{DeliveryModel, KnowledgeView, Transport, TransportError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("scenario does not fit the run: {0}")]
    Mismatch(String),
}

impl SimError {
    /// Coarse category for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::Learner(LearnerError::NumericalInstability(_))
            | SimError::Partition(PartitionError::Learner(LearnerError::NumericalInstability(_))) => "numeric",
            SimError::Transport(_)
            | SimError::Learner(LearnerError::Transport(_))
            | SimError::Partition(PartitionError::OrphanNode(_)) => "protocol",
            _ => "config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub t: u64,
    pub node: NodeId,
    pub w: Vec<f64>,
    /// Subgradient of the round's loss at `w`.
    pub g: Vec<f64>,
    pub ghat: Vec<f64>,
    pub loss: f64,
    pub payload: Option<String>,
    pub bits_round: u64,
    pub bits_total: u64,
    /// `|S_{I_t}(t)|` on the full graph.
    pub available: usize,
    /// `γ(t)` on the full graph, as rounds.
    pub gamma: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackRow {
    pub t: u64,
    pub v: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub l: f64,
    pub big_v: f64,
    pub hhat: f64,
    /// `⟨z_t, g_t⟩` with the true subgradient.
    pub h: f64,
    /// Full-information potential after recording round `t`.
    pub potential: f64,
    /// `γ(t)` in this stack's view, as indices into `rows`.
    pub gamma: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackTrace {
    pub subgraph: usize,
    pub nodes: Vec<NodeId>,
    pub diameter: usize,
    pub tuning: ScaleTuning,
    pub a: f64,
    pub rows: Vec<StackRow>,
}

impl StackTrace {
    /// Potential before the first round, `ν`.
    pub fn initial_potential(&self) -> f64 {
        self.tuning.nu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub learner: String,
    pub rounds: usize,
    pub dim: usize,
    pub grad_bound: f64,
    pub budget: usize,
    pub bits_per_gradient: usize,
    pub horizon: usize,
    pub graph_diameter: usize,
    pub collection_size: usize,
    pub encoder: EncoderSpec,
    pub master_seed: u64,
    pub nu_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundRow>,
    pub stacks: Vec<StackTrace>,
}

impl Trace {
    pub fn activations(&self) -> Vec<NodeId> {
        self.rounds.iter().map(|r| r.node).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub budget: usize,
    pub master_seed: u64,
    pub keep_payloads: bool,
    /// Multiplier on every tuned integration limit (1 for the tuned value).
    pub limit_factor: f64,
}

impl RunOptions {
    pub fn new(budget: usize, master_seed: u64) -> Self {
        Self { budget, master_seed, keep_payloads: false, limit_factor: 1.0 }
    }
}

/// Encoder spec with the bits available per gradient at this horizon.
pub fn encoder_for(template: &EncoderSpec, budget: usize, horizon: usize) -> Result<EncoderSpec, EncodingError> {
    let mut spec = template.clone();
    spec.bits_per_gradient = crate::partition::bits_per_gradient(budget, horizon);
    spec.validate()?;
    Ok(spec)
}

struct Ledger {
    global: KnowledgeView,
    transport: Transport,
    encoder: EncoderSpec,
    opts: RunOptions,
}

impl Ledger {
    fn new(g: &Graph, horizon: usize, encoder: EncoderSpec, opts: RunOptions) -> Result<Self, SimError> {
        let global = KnowledgeView::new(DeliveryModel::for_graph(g, g.diameter().max(1))?)?;
        Ok(Self { global, transport: Transport::new(g, horizon)?, encoder, opts })
    }

    fn codec(&self, t: u64, g: &[f64]) -> Result<(Vec<bool>, Vec<f64>), SimError> {
        let mut rng = stream_rng(self.opts.master_seed, STREAM_ENCODER, t);
        let bits = encode(g, &self.encoder, &mut rng)?;
        let ghat = decode(&bits, &self.encoder)?;
        Ok((bits, ghat))
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        t: u64,
        node: NodeId,
        w: Vec<f64>,
        g: Vec<f64>,
        ghat: Vec<f64>,
        loss: f64,
        bits: &[bool],
    ) -> Result<RoundRow, SimError> {
        let traffic = self.transport.step_forwarding(t, node, t, bits.len())?;
        self.global.settle(t);
        let available =
            self.global.settled() + self.global.pending().filter(|&j| self.global.available(j, node, t)).count();
        let idx = self.global.push(t, node)?;
        let gamma = self.global.missing_at_issue(idx).iter().map(|&i| self.global.time(i)).collect();
        Ok(RoundRow {
            t,
            node,
            w,
            g,
            ghat,
            loss,
            payload: self.opts.keep_payloads.then(|| bits_to_hex(bits)),
            bits_round: traffic.bits,
            bits_total: self.transport.bits_total(),
            available,
            gamma,
        })
    }
}

fn check_scenario(g: &Graph, scenario: &Scenario, enc: &EncoderSpec) -> Result<(), SimError> {
    if scenario.dim != enc.dim {
        return Err(SimError::Mismatch(format!("scenario dimension {} vs encoder {}", scenario.dim, enc.dim)));
    }
    if scenario.grad_bound > enc.grad_bound {
        return Err(SimError::Mismatch(format!(
            "scenario gradient bound {} above encoder bound {}",
            scenario.grad_bound, enc.grad_bound
        )));
    }
    if let Some(&n) = scenario.activations.iter().find(|&&n| n >= g.len()) {
        return Err(SimError::Mismatch(format!("activation of node {n} outside the graph")));
    }
    Ok(())
}

/// Runs the partition learner over `q`. A single-subgraph collection holding
/// the whole graph is the plain full-graph learner.
pub fn run_partition(
    g: &Graph,
    scenario: &Scenario,
    q: QCollection,
    settings: &StackSettings,
    template: &EncoderSpec,
    opts: RunOptions,
) -> Result<Trace, SimError> {
    let horizon = q.d_q();
    let enc = encoder_for(template, opts.budget, horizon)?;
    check_scenario(g, scenario, &enc)?;
    let mut learner = PartitionLearner::with_limit_factor(g, q, settings, &enc, opts.limit_factor)?;
    let mut stacks: Vec<StackTrace> = learner
        .collection()
        .subgraphs()
        .iter()
        .enumerate()
        .map(|(i, sub)| StackTrace {
            subgraph: i,
            nodes: sub.nodes().to_vec(),
            diameter: sub.diameter(),
            tuning: learner.tunings()[i].clone(),
            a: learner.stack(i).scale().a(),
            rows: Vec::new(),
        })
        .collect();
    let meta = TraceMeta {
        learner: if learner.collection().len() == 1 { "single".into() } else { "partition".into() },
        rounds: scenario.len(),
        dim: enc.dim,
        grad_bound: scenario.grad_bound,
        budget: opts.budget,
        bits_per_gradient: enc.bits_per_gradient,
        horizon,
        graph_diameter: g.diameter(),
        collection_size: learner.collection().len(),
        encoder: enc.clone(),
        master_seed: opts.master_seed,
        nu_total: settings.nu_total,
    };
    let mut ledger = Ledger::new(g, horizon, enc, opts)?;
    let mut rounds = Vec::with_capacity(scenario.len());
    for t in 1..=scenario.len() as u64 {
        let node = scenario.active(t);
        let pred = learner.predict(t, node)?;
        let loss_fn = scenario.loss(t);
        let gt = loss_fn.subgradient(&pred.w);
        let loss = loss_fn.value(&pred.w);
        let (bits, ghat) = ledger.codec(t, &gt)?;
        let hhats = learner.record(t, node, &ghat)?;
        for ((i, p), (j, hhat)) in pred.parts.into_iter().zip(hhats) {
            debug_assert_eq!(i, j);
            let scale = learner.stack(i).scale();
            let gamma = scale.accumulator().view().missing_at_issue(scale.accumulator().len() - 1).to_vec();
            stacks[i].rows.push(StackRow {
                t,
                v: p.scale.v,
                h: dot(&p.z, &gt),
                z: p.z,
                w: p.w,
                l: p.scale.l,
                big_v: p.scale.big_v,
                hhat,
                potential: scale.potential()?,
                gamma,
            });
        }
        rounds.push(ledger.row(t, node, pred.w, gt, ghat, loss, &bits)?);
    }
    Ok(Trace { meta, rounds, stacks })
}

/// Full-graph learner: `Q = {G}`.
pub fn run_single(
    g: &Graph,
    scenario: &Scenario,
    settings: &StackSettings,
    template: &EncoderSpec,
    opts: RunOptions,
) -> Result<Trace, SimError> {
    run_partition(g, scenario, QCollection::single(g), settings, template, opts)
}

/// Unprojected OGD on the full graph with a fixed learning rate.
pub fn run_baseline(
    g: &Graph,
    scenario: &Scenario,
    eta: f64,
    template: &EncoderSpec,
    opts: RunOptions,
) -> Result<Trace, SimError> {
    let horizon = g.diameter().max(1);
    let enc = encoder_for(template, opts.budget, horizon)?;
    check_scenario(g, scenario, &enc)?;
    let mut ogd = Ogd::new(DeliveryModel::for_graph(g, horizon)?, enc.dim, eta)?;
    let meta = TraceMeta {
        learner: "ogd".into(),
        rounds: scenario.len(),
        dim: enc.dim,
        grad_bound: scenario.grad_bound,
        budget: opts.budget,
        bits_per_gradient: enc.bits_per_gradient,
        horizon,
        graph_diameter: g.diameter(),
        collection_size: 0,
        encoder: enc.clone(),
        master_seed: opts.master_seed,
        nu_total: 0.0,
    };
    let mut ledger = Ledger::new(g, horizon, enc, opts)?;
    let mut rounds = Vec::with_capacity(scenario.len());
    for t in 1..=scenario.len() as u64 {
        let node = scenario.active(t);
        let w = ogd.predict(t, node)?;
        let loss_fn = scenario.loss(t);
        let gt = loss_fn.subgradient(&w);
        let loss = loss_fn.value(&w);
        let (bits, ghat) = ledger.codec(t, &gt)?;
        ogd.record(t, node, &ghat)?;
        rounds.push(ledger.row(t, node, w, gt, ghat, loss, &bits)?);
    }
    Ok(Trace { meta, rounds, stacks: Vec::new() })
}
