//! Partition learning by iterate addition: one learner stack per subgraph in
//! a collection `Q`, and the active node plays the sum of the iterates of the
//! subgraphs that contain it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{EncoderKind, EncoderSpec};
use crate::graph::{Graph, NodeId, Subgraph};
use crate::learners::blackbox::{LearnerStack, StackPrediction};
use crate::learners::direction::LazyProjection;
use crate::learners::scale::{ScaleLearner, ScaleTuning};
use crate::learners::LearnerError;
use crate::transport::DeliveryModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("collection is empty")]
    EmptyCollection,
    #[error("node {0} belongs to no subgraph of the collection")]
    OrphanNode(NodeId),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone)]
pub struct QCollection {
    subgraphs: Vec<Subgraph>,
    d_q: usize,
    membership: Vec<Vec<usize>>,
}

impl QCollection {
    pub fn new(g: &Graph, subgraphs: Vec<Subgraph>) -> Result<Self, PartitionError> {
        if subgraphs.is_empty() {
            return Err(PartitionError::EmptyCollection);
        }
        let d_q = subgraphs.iter().map(Subgraph::diameter).max().unwrap_or(0).max(1);
        let mut membership = vec![Vec::new(); g.len()];
        for (i, sub) in subgraphs.iter().enumerate() {
            for &n in sub.nodes() {
                membership[n].push(i);
            }
        }
        Ok(Self { subgraphs, d_q, membership })
    }

    pub fn single(g: &Graph) -> Self {
        Self::new(g, vec![Subgraph::full(g)]).expect("one subgraph")
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    /// `D_Q = max(max_F D(F), 1)`.
    pub fn d_q(&self) -> usize {
        self.d_q
    }

    pub fn subgraph(&self, i: usize) -> &Subgraph {
        &self.subgraphs[i]
    }

    pub fn subgraphs(&self) -> &[Subgraph] {
        &self.subgraphs
    }

    /// Indices of the subgraphs containing `node`, in collection order.
    pub fn containing(&self, node: NodeId) -> &[usize] {
        self.membership.get(node).map_or(&[], Vec::as_slice)
    }
}

/// `k = ⌊b / max(D, 1)⌋`.
pub fn bits_per_gradient(budget: usize, horizon: usize) -> usize {
    budget / horizon.max(1)
}

/// Learner knobs shared by every subgraph stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSettings {
    /// Total prior mass, split evenly over `Q`.
    pub nu_total: f64,
    /// Direction step scale `c`.
    pub direction_c: f64,
    pub eps_override: Option<f64>,
    pub grad_bound_override: Option<f64>,
}

impl Default for StackSettings {
    fn default() -> Self {
        Self { nu_total: 1.0, direction_c: 1.0, eps_override: None, grad_bound_override: None }
    }
}

impl StackSettings {
    /// `(ε, Ĝ)` for an encoder: `(error bound, G + ε)` for the grid and
    /// `(0, 2dG)` for the stochastic codec, unless overridden.
    pub fn eps_and_bound(&self, enc: &EncoderSpec) -> (f64, f64) {
        let (eps, bound) = match enc.kind {
            EncoderKind::DeterministicGrid => (enc.error_bound(), enc.decoded_norm_bound()),
            EncoderKind::SparsifiedQuantization => (0.0, enc.decoded_norm_bound()),
        };
        (self.eps_override.unwrap_or(eps), self.grad_bound_override.unwrap_or(bound))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPrediction {
    pub w: Vec<f64>,
    pub parts: Vec<(usize, StackPrediction)>,
}

#[derive(Debug)]
pub struct PartitionLearner {
    q: QCollection,
    stacks: Vec<LearnerStack>,
    tunings: Vec<ScaleTuning>,
    dim: usize,
}

impl PartitionLearner {
    /// One stack per subgraph, each seeing only its subgraph under the
    /// induced metric with discard horizon `D_Q`; the scale learner of `F`
    /// is tuned with `D = D(F)`.
    pub fn new(g: &Graph, q: QCollection, settings: &StackSettings, enc: &EncoderSpec) -> Result<Self, PartitionError> {
        Self::with_limit_factor(g, q, settings, enc, 1.0)
    }

    /// As [`new`](Self::new) with every integration limit multiplied by `factor`.
    pub fn with_limit_factor(
        g: &Graph,
        q: QCollection,
        settings: &StackSettings,
        enc: &EncoderSpec,
        factor: f64,
    ) -> Result<Self, PartitionError> {
        let (eps, bound) = settings.eps_and_bound(enc);
        let nu = settings.nu_total / q.len() as f64;
        let mut stacks = Vec::with_capacity(q.len());
        let mut tunings = Vec::with_capacity(q.len());
        for sub in q.subgraphs() {
            let model = DeliveryModel::for_subgraph(g, sub, q.d_q()).map_err(LearnerError::from)?;
            let tuning = ScaleTuning { nu, eps, grad_bound: bound, delay_bound: sub.diameter() };
            let a = tuning.upper_limit()? * factor;
            let scale = ScaleLearner::with_upper_limit(tuning.clone(), model.clone(), a)?;
            let direction = LazyProjection::new(model, enc.dim, settings.direction_c)?;
            stacks.push(LearnerStack::new(scale, Box::new(direction)));
            tunings.push(tuning);
        }
        Ok(Self { q, stacks, tunings, dim: enc.dim })
    }

    pub fn collection(&self) -> &QCollection {
        &self.q
    }

    pub fn tunings(&self) -> &[ScaleTuning] {
        &self.tunings
    }

    pub fn stack(&self, i: usize) -> &LearnerStack {
        &self.stacks[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&mut self, t: u64, node: NodeId) -> Result<PartitionPrediction, PartitionError> {
        let members = self.q.containing(node).to_vec();
        if members.is_empty() {
            return Err(PartitionError::OrphanNode(node));
        }
        let mut w = vec![0.0; self.dim];
        let mut parts = Vec::with_capacity(members.len());
        for i in members {
            let p = self.stacks[i].predict_full(t, node)?;
            for (acc, x) in w.iter_mut().zip(&p.w) {
                *acc += x;
            }
            parts.push((i, p));
        }
        Ok(PartitionPrediction { w, parts })
    }

    /// Feeds `ĝ_t` to every stack containing `origin`; returns `(stack, ĥ)`.
    pub fn record(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<Vec<(usize, f64)>, PartitionError> {
        let members = self.q.containing(origin).to_vec();
        if members.is_empty() {
            return Err(PartitionError::OrphanNode(origin));
        }
        members.into_iter().map(|i| Ok((i, self.stacks[i].record_gradient(t, origin, ghat)?))).collect()
    }
}

/// Checks that `cells` (indices into `q`) are pairwise disjoint and cover
/// every node in `active`.
pub fn validate_partition(q: &QCollection, cells: &[usize], active: &[NodeId]) -> Result<(), PartitionError> {
    let mut owner: Vec<Option<usize>> = Vec::new();
    for &c in cells {
        if c >= q.len() {
            return Err(PartitionError::InvalidPartition(format!("cell {c} is not in the collection")));
        }
        for &n in q.subgraph(c).nodes() {
            if owner.len() <= n {
                owner.resize(n + 1, None);
            }
            if let Some(prev) = owner[n] {
                return Err(PartitionError::InvalidPartition(format!("node {n} lies in cells {prev} and {c}")));
            }
            owner[n] = Some(c);
        }
    }
    for &n in active {
        if owner.get(n).copied().flatten().is_none() {
            return Err(PartitionError::InvalidPartition(format!("active node {n} is not covered")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncoderSpec;
    use crate::graph::two_cluster_graph;

    fn clusters() -> (Graph, QCollection) {
        let (g, layout) = two_cluster_graph(2, 3).unwrap();
        let subs = vec![
            Subgraph::induced(&g, &layout.cluster(0)).unwrap(),
            Subgraph::induced(&g, &layout.cluster(1)).unwrap(),
            Subgraph::full(&g),
        ];
        let q = QCollection::new(&g, subs).unwrap();
        (g, q)
    }

    #[test]
    fn collection_metadata() {
        let (g, q) = clusters();
        assert_eq!(q.d_q(), g.diameter());
        assert_eq!(q.containing(0), &[0, 2]);
        assert_eq!(q.containing(g.len() - 1), &[2]);
        assert_eq!(bits_per_gradient(100, 7), 14);
        assert_eq!(bits_per_gradient(100, 0), 100);
    }

    #[test]
    fn orphan_nodes_are_rejected() {
        let (g, layout) = two_cluster_graph(2, 3).unwrap();
        let q = QCollection::new(&g, vec![Subgraph::induced(&g, &layout.cluster(0)).unwrap()]).unwrap();
        let enc = EncoderSpec::deterministic(2, 1.0, 16).unwrap();
        let mut p = PartitionLearner::new(&g, q, &StackSettings::default(), &enc).unwrap();
        assert!(p.predict(1, 0).is_ok());
        assert_eq!(p.predict(2, layout.hubs[1]), Err(PartitionError::OrphanNode(layout.hubs[1])));
    }

    #[test]
    fn partitions_must_be_disjoint_covers() {
        let (_, q) = clusters();
        assert!(validate_partition(&q, &[0, 1], &[0, 3]).is_ok());
        assert!(validate_partition(&q, &[0, 2], &[0]).is_err());
        assert!(validate_partition(&q, &[0], &[3]).is_err());
        assert!(validate_partition(&q, &[5], &[]).is_err());
    }
}
