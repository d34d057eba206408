//! Standard-forwarding message model.
//!
//! Every node relays each unseen gradient to all neighbours in the round it
//! arrives, so a gradient issued at node `o` in round `s` is available at `n`
//! from round `s + max(dist(o, n), 1)` on. Availability is therefore computed
//! from distances; an explicit flooding simulation lives in the tests.
//! Gradients farther than `horizon` hops from a node never reach it.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Subgraph, UNREACHABLE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("node {node} would forward {count} payloads in round {round}, above the horizon {horizon}")]
    BudgetExceeded { node: NodeId, round: u64, count: usize, horizon: usize },
    #[error("gradient for round {0} recorded twice")]
    DuplicateGradient(u64),
    #[error("gradient for round {got} arrived after round {last}")]
    OutOfOrder { got: u64, last: u64 },
    #[error("node {0} is not part of this view")]
    NotMember(NodeId),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("horizon {horizon} is below the diameter {diameter} of the view")]
    HorizonBelowDiameter { horizon: usize, diameter: usize },
    #[error("record issued at round {issued} presented in round {round}")]
    IssueMismatch { issued: u64, round: u64 },
}

/// Hop metric and discard horizon for one learner's view of the network.
#[derive(Debug, Clone)]
pub struct DeliveryModel {
    n: usize,
    member: Arc<Vec<bool>>,
    dist: Arc<Vec<usize>>,
    horizon: usize,
    diameter: usize,
}

impl DeliveryModel {
    pub fn for_graph(g: &Graph, horizon: usize) -> Result<Self, TransportError> {
        Self::for_subgraph(g, &Subgraph::full(g), horizon)
    }

    /// Induced-metric view of `sub`: only member nodes issue or receive.
    pub fn for_subgraph(parent: &Graph, sub: &Subgraph, horizon: usize) -> Result<Self, TransportError> {
        if horizon == 0 {
            return Err(TransportError::ZeroHorizon);
        }
        let n = parent.len();
        let mut dist = vec![UNREACHABLE; n * n];
        let mut member = vec![false; n];
        for &u in sub.nodes() {
            member[u] = true;
            for &v in sub.nodes() {
                dist[u * n + v] = sub.dist(u, v);
            }
        }
        Ok(Self { n, member: Arc::new(member), dist: Arc::new(dist), horizon, diameter: sub.diameter() })
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.member.get(u).copied().unwrap_or(false)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    pub fn dist(&self, u: NodeId, v: NodeId) -> usize {
        self.dist[u * self.n + v]
    }

    /// Rounds between issue and availability, or `None` if never delivered.
    pub fn delay(&self, origin: NodeId, node: NodeId) -> Option<usize> {
        let d = self.dist(origin, node);
        (d != UNREACHABLE && d <= self.horizon).then(|| d.max(1))
    }

    /// Whether the gradient issued at `origin` in round `issued` is in `S_node(t)`.
    pub fn available(&self, origin: NodeId, issued: u64, node: NodeId, t: u64) -> bool {
        match self.delay(origin, node) {
            Some(d) => issued + d as u64 <= t,
            None => false,
        }
    }
}

/// Availability bookkeeping for the gradients one learner consumes.
///
/// Gradients issued at least `window = max(D, 1)` rounds ago are available at
/// every member node and are called settled; only the recent window needs
/// per-node queries.
#[derive(Debug, Clone)]
pub struct KnowledgeView {
    model: DeliveryModel,
    window: u64,
    times: Vec<u64>,
    origins: Vec<NodeId>,
    gammas: Vec<Vec<usize>>,
    settled: usize,
}

impl KnowledgeView {
    pub fn new(model: DeliveryModel) -> Result<Self, TransportError> {
        if model.horizon < model.diameter {
            return Err(TransportError::HorizonBelowDiameter { horizon: model.horizon, diameter: model.diameter });
        }
        let window = model.diameter.max(1) as u64;
        Ok(Self { model, window, times: Vec::new(), origins: Vec::new(), gammas: Vec::new(), settled: 0 })
    }

    pub fn model(&self) -> &DeliveryModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, idx: usize) -> u64 {
        self.times[idx]
    }

    pub fn origin(&self, idx: usize) -> NodeId {
        self.origins[idx]
    }

    /// `gamma(s)` for the record at `idx`, as record indices.
    pub fn missing_at_issue(&self, idx: usize) -> &[usize] {
        &self.gammas[idx]
    }

    /// Records that were issued inside the window before round `t`.
    fn window_start(&self, t: u64) -> usize {
        self.times.partition_point(|&s| s + self.window <= t)
    }

    /// Appends the gradient issued in round `t` by `origin` and computes its
    /// missing set from the earlier records.
    pub fn push(&mut self, t: u64, origin: NodeId) -> Result<usize, TransportError> {
        if let Some(&last) = self.times.last() {
            if t == last {
                return Err(TransportError::DuplicateGradient(t));
            }
            if t < last {
                return Err(TransportError::OutOfOrder { got: t, last });
            }
        }
        if !self.model.contains(origin) {
            return Err(TransportError::NotMember(origin));
        }
        let start = self.window_start(t);
        let gamma: Vec<usize> = (start..self.times.len())
            .filter(|&j| !self.model.available(self.origins[j], self.times[j], origin, t))
            .collect();
        self.times.push(t);
        self.origins.push(origin);
        self.gammas.push(gamma);
        Ok(self.times.len() - 1)
    }

    /// Advances the settled frontier to round `t`, returning the newly
    /// settled record indices. Rounds must be non-decreasing across calls.
    pub fn settle(&mut self, t: u64) -> std::ops::Range<usize> {
        let old = self.settled;
        while self.settled < self.times.len() && self.times[self.settled] + self.window <= t {
            self.settled += 1;
        }
        old..self.settled
    }

    pub fn settled(&self) -> usize {
        self.settled
    }

    /// Unsettled records (call [`settle`](Self::settle) first).
    pub fn pending(&self) -> std::ops::Range<usize> {
        self.settled..self.times.len()
    }

    pub fn available(&self, idx: usize, node: NodeId, t: u64) -> bool {
        self.model.available(self.origins[idx], self.times[idx], node, t)
    }

    /// `S_node(t)` as record indices, by direct evaluation.
    pub fn available_set(&self, node: NodeId, t: u64) -> Vec<usize> {
        (0..self.times.len()).filter(|&j| self.times[j] < t && self.available(j, node, t)).collect()
    }
}

/// Wire-level accounting for standard forwarding on the physical graph.
///
/// A node sends its own fresh gradient in the issuing round and relays a
/// received gradient once, in the round it arrives, provided some neighbour
/// is farther from the origin and still within the horizon. Relays of a
/// payload older than `horizon` rounds are dropped.
#[derive(Debug, Clone)]
pub struct Transport {
    horizon: usize,
    /// `relays[o][d]`: nodes at distance `d` from `o` that relay its gradient.
    relays: Vec<Vec<u32>>,
    recent: VecDeque<(u64, NodeId, usize)>,
    bits_total: u64,
    last_round: Option<u64>,
}

/// Per-round summary emitted by [`Transport::step_forwarding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub messages: u64,
    pub bits: u64,
}

impl Transport {
    pub fn new(g: &Graph, horizon: usize) -> Result<Self, TransportError> {
        if horizon == 0 {
            return Err(TransportError::ZeroHorizon);
        }
        let relays = g
            .nodes()
            .map(|o| {
                let mut counts = vec![0u32; horizon.min(g.eccentricity(o)) + 1];
                for n in g.nodes() {
                    let d = g.dist(o, n);
                    if d < counts.len() && d < horizon && relays_onward(g, o, n) {
                        counts[d] += 1;
                    }
                }
                counts
            })
            .collect();
        Ok(Self { horizon, relays, recent: VecDeque::new(), bits_total: 0, last_round: None })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn bits_total(&self) -> u64 {
        self.bits_total
    }

    /// Registers the payload issued in `round` at `origin` and accounts the
    /// traffic of that round.
    pub fn step_forwarding(
        &mut self,
        round: u64,
        origin: NodeId,
        issued: u64,
        payload_bits: usize,
    ) -> Result<RoundTraffic, TransportError> {
        if issued != round {
            return Err(TransportError::IssueMismatch { issued, round });
        }
        if let Some(last) = self.last_round {
            if round <= last {
                return Err(TransportError::OutOfOrder { got: round, last });
            }
        }
        self.last_round = Some(round);
        self.recent.push_back((round, origin, payload_bits));
        while let Some(&(s, _, _)) = self.recent.front() {
            if s + (self.horizon as u64) < round {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let mut traffic = RoundTraffic { messages: 0, bits: 0 };
        for &(s, o, len) in &self.recent {
            let d = (round - s) as usize;
            if let Some(&c) = self.relays[o].get(d) {
                traffic.messages += c as u64;
                traffic.bits += c as u64 * len as u64;
            }
        }
        self.bits_total += traffic.bits;
        Ok(traffic)
    }
}

fn relays_onward(g: &Graph, origin: NodeId, n: NodeId) -> bool {
    let d = g.dist(origin, n);
    g.neighbors(n).iter().any(|&m| g.dist(origin, m) == d + 1)
}

/// Per-node, per-round send counts for an activation sequence (round `t`
/// activates `activations[t-1]`).
#[derive(Debug, Clone)]
pub struct ForwardingProfile {
    /// `relayed[r-1][n]`: payloads node `n` relays in round `r` (own fresh gradient excluded).
    pub relayed: Vec<Vec<usize>>,
    /// `sent[r-1][n]`: relayed plus the node's own fresh gradient.
    pub sent: Vec<Vec<usize>>,
}

impl ForwardingProfile {
    pub fn compute(g: &Graph, activations: &[NodeId], horizon: usize) -> Self {
        let n = g.len();
        let rounds = activations.len();
        let mut relayed = vec![vec![0usize; n]; rounds];
        let mut sent = vec![vec![0usize; n]; rounds];
        for (i, &o) in activations.iter().enumerate() {
            for v in g.nodes() {
                let d = g.dist(o, v);
                if d >= horizon || !relays_onward(g, o, v) {
                    continue;
                }
                let r = i + d;
                if r < rounds {
                    sent[r][v] += 1;
                    if d > 0 {
                        relayed[r][v] += 1;
                    }
                }
            }
        }
        Self { relayed, sent }
    }

    /// Maximum number of distinct payloads relayed by one node in one round.
    pub fn max_in_flight(&self) -> usize {
        self.relayed.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Checks every node against the horizon-slot budget.
    pub fn check_budget(&self, horizon: usize) -> Result<(), TransportError> {
        for (r, row) in self.sent.iter().enumerate() {
            for (node, &count) in row.iter().enumerate() {
                if count > horizon {
                    return Err(TransportError::BudgetExceeded { node, round: r as u64 + 1, count, horizon });
                }
            }
        }
        Ok(())
    }
}

/// One row of the transport trace export.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransportRow {
    pub t: u64,
    pub active_node: NodeId,
    pub available: usize,
    pub missing: usize,
    pub bits_sent_total: u64,
}

/// Freshest available gradient age at the active node for every round, or
/// `None` when nothing is available yet.
pub fn staleness(model: &DeliveryModel, activations: &[NodeId]) -> Vec<Option<u64>> {
    (1..=activations.len() as u64)
        .map(|t| {
            let node = activations[t as usize - 1];
            (1..t).rev().find(|&s| model.available(activations[s as usize - 1], s, node, t)).map(|s| t - s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_hops_on_a_path() {
        let g = Graph::path(3).unwrap();
        let m = DeliveryModel::for_graph(&g, 2).unwrap();
        assert!(!m.available(0, 1, 2, 2));
        assert!(m.available(0, 1, 2, 3));
        assert!(!m.available(1, 4, 1, 4));
        assert!(m.available(1, 4, 1, 5));
    }

    #[test]
    fn view_tracks_gamma_and_settles() {
        let g = Graph::path(3).unwrap();
        let mut v = KnowledgeView::new(DeliveryModel::for_graph(&g, 2).unwrap()).unwrap();
        v.push(1, 0).unwrap();
        v.push(2, 2).unwrap();
        v.push(3, 2).unwrap();
        assert_eq!(v.missing_at_issue(0), &[] as &[usize]);
        assert_eq!(v.missing_at_issue(1), &[0]);
        assert_eq!(v.missing_at_issue(2), &[] as &[usize]);
        assert_eq!(v.settle(3), 0..1);
        assert_eq!(v.push(3, 1), Err(TransportError::DuplicateGradient(3)));
        assert_eq!(v.push(2, 1), Err(TransportError::OutOfOrder { got: 2, last: 3 }));
    }

    #[test]
    fn adjacent_walk_in_flight() {
        for d in 2..8 {
            let g = Graph::path(d + 1).unwrap();
            let walk: Vec<_> = (0..=d).collect();
            let p = ForwardingProfile::compute(&g, &walk, d);
            assert_eq!(p.max_in_flight(), d - 1);
            assert_eq!(p.relayed[d - 1][d - 1], d - 1);
            p.check_budget(d).unwrap();
        }
        let g = Graph::path(4).unwrap();
        assert_eq!(ForwardingProfile::compute(&g, &[], 3).max_in_flight(), 0);
    }

    #[test]
    fn star_single_active() {
        let g = Graph::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let p = ForwardingProfile::compute(&g, &[1; 20], 2);
        assert!(p.max_in_flight() <= 2);
        assert_eq!(p.max_in_flight(), 1);
    }

    #[test]
    fn traffic_counts_relays() {
        let g = Graph::path(3).unwrap();
        let mut tr = Transport::new(&g, 2).unwrap();
        // round 1 at node 0: node 0 sends; round 2: node 1 relays to node 2.
        assert_eq!(tr.step_forwarding(1, 0, 1, 4).unwrap(), RoundTraffic { messages: 1, bits: 4 });
        assert_eq!(tr.step_forwarding(2, 2, 2, 4).unwrap(), RoundTraffic { messages: 2, bits: 8 });
        assert_eq!(tr.bits_total(), 12);
        assert!(tr.step_forwarding(3, 0, 2, 4).is_err());
    }
}
