//! Undirected graphs with cached hop distances, plus induced subgraphs and
//! ball collections used for partition learning.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Sentinel for "unreachable" in distance tables.
pub const UNREACHABLE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph is disconnected: node {to} unreachable from node {from}")]
    DisconnectedGraph { from: NodeId, to: NodeId },
    #[error("self loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge endpoint {endpoint} out of range for {nodes} nodes")]
    InvalidEndpoint { endpoint: NodeId, nodes: usize },
    #[error("graph must have at least one node")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Connected undirected graph on nodes `0..n`.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
    adj: Vec<Vec<NodeId>>,
    dist: Vec<usize>,
    ecc: Vec<usize>,
    diameter: usize,
}

impl Graph {
    /// Builds a graph on `n` nodes. Duplicate edges are merged.
    pub fn new(n: usize, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            for e in [u, v] {
                if e >= n {
                    return Err(GraphError::InvalidEndpoint { endpoint: e, nodes: n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &set {
            adj[u].push(v);
            adj[v].push(u);
        }
        let dist = all_pairs_bfs(&adj);
        for from in 0..n {
            for to in 0..n {
                if dist[from * n + to] == UNREACHABLE {
                    return Err(GraphError::DisconnectedGraph { from, to });
                }
            }
        }
        let ecc: Vec<usize> = (0..n).map(|u| (0..n).map(|v| dist[u * n + v]).max().unwrap_or(0)).collect();
        let diameter = ecc.iter().copied().max().unwrap_or(0);
        Ok(Self { n, edges: set, adj, dist, ecc, diameter })
    }

    /// Builds a graph from an edge list, inferring `n` as one past the
    /// largest endpoint (a single node when the list is empty).
    pub fn from_edges(edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(1);
        Self::new(n, edges)
    }

    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nodes(&self) -> std::ops::Range<NodeId> {
        0..self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }

    pub fn dist(&self, u: NodeId, v: NodeId) -> usize {
        self.dist[u * self.n + v]
    }

    pub fn eccentricity(&self, u: NodeId) -> usize {
        self.ecc[u]
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    /// A shortest path realizing the diameter, as a node sequence.
    pub fn diameter_path(&self) -> Vec<NodeId> {
        let (mut src, mut dst) = (0, 0);
        for u in 0..self.n {
            for v in 0..self.n {
                if self.dist(u, v) > self.dist(src, dst) {
                    src = u;
                    dst = v;
                }
            }
        }
        let mut path = vec![src];
        let mut cur = src;
        while cur != dst {
            cur = *self.adj[cur]
                .iter()
                .find(|&&m| self.dist(m, dst) + 1 == self.dist(cur, dst))
                .expect("shortest path step exists in a connected graph");
            path.push(cur);
        }
        path
    }
}

fn all_pairs_bfs(adj: &[Vec<NodeId>]) -> Vec<usize> {
    let n = adj.len();
    let mut dist = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == UNREACHABLE {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Node numbering of [`two_cluster_graph`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TwoClusterLayout {
    pub hubs: [NodeId; 2],
    pub leaves: [Vec<NodeId>; 2],
    pub connector: Vec<NodeId>,
}

impl TwoClusterLayout {
    /// Hub plus leaves of cluster `c`.
    pub fn cluster(&self, c: usize) -> Vec<NodeId> {
        let mut v = vec![self.hubs[c]];
        v.extend(&self.leaves[c]);
        v
    }
}

/// Two stars joined hub-to-hub by a path with `connector_length` interior nodes.
///
/// Numbering: hub 0 is node 0 and its leaves are `1..=L`; hub 1 is node
/// `L+1` and its leaves follow; connector nodes come last, ordered from
/// hub 0 towards hub 1.
pub fn two_cluster_graph(
    cluster_leaves: usize,
    connector_length: usize,
) -> Result<(Graph, TwoClusterLayout), GraphError> {
    if cluster_leaves == 0 || connector_length == 0 {
        return Err(GraphError::InvalidParameter("cluster_leaves and connector_length must both be at least 1".into()));
    }
    let l = cluster_leaves;
    let hubs = [0, l + 1];
    let leaves = [(1..=l).collect::<Vec<_>>(), (l + 2..2 * l + 2).collect::<Vec<_>>()];
    let connector: Vec<_> = (2 * l + 2..2 * l + 2 + connector_length).collect();
    let mut edges = Vec::new();
    for c in 0..2 {
        for &leaf in &leaves[c] {
            edges.push((hubs[c], leaf));
        }
    }
    let mut prev = hubs[0];
    for &m in &connector {
        edges.push((prev, m));
        prev = m;
    }
    edges.push((prev, hubs[1]));
    let g = Graph::new(2 * l + 2 + connector_length, &edges)?;
    Ok((g, TwoClusterLayout { hubs, leaves, connector }))
}

/// Node subset of a parent graph with distances of the induced subgraph.
#[derive(Debug, Clone)]
pub struct Subgraph {
    nodes: Vec<NodeId>,
    member: Vec<bool>,
    local: Graph,
    local_index: Vec<usize>,
}

impl Subgraph {
    /// Induced subgraph on `nodes`; fails if it is disconnected.
    pub fn induced(parent: &Graph, nodes: &[NodeId]) -> Result<Self, GraphError> {
        let set: BTreeSet<NodeId> = nodes.iter().copied().collect();
        if set.is_empty() {
            return Err(GraphError::Empty);
        }
        let nodes: Vec<NodeId> = set.into_iter().collect();
        let mut member = vec![false; parent.len()];
        let mut local_index = vec![usize::MAX; parent.len()];
        for (i, &u) in nodes.iter().enumerate() {
            if u >= parent.len() {
                return Err(GraphError::InvalidEndpoint { endpoint: u, nodes: parent.len() });
            }
            member[u] = true;
            local_index[u] = i;
        }
        let edges: Vec<_> = parent
            .edges()
            .filter(|&(u, v)| member[u] && member[v])
            .map(|(u, v)| (local_index[u], local_index[v]))
            .collect();
        let local = Graph::new(nodes.len(), &edges).map_err(|e| match e {
            GraphError::DisconnectedGraph { from, to } => {
                GraphError::DisconnectedGraph { from: nodes[from], to: nodes[to] }
            }
            other => other,
        })?;
        Ok(Self { nodes, member, local, local_index })
    }

    pub fn full(parent: &Graph) -> Self {
        let all: Vec<_> = parent.nodes().collect();
        Self::induced(parent, &all).expect("a connected graph induces itself")
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.member.get(u).copied().unwrap_or(false)
    }

    /// Induced distance between two member nodes (parent ids).
    pub fn dist(&self, u: NodeId, v: NodeId) -> usize {
        self.local.dist(self.local_index[u], self.local_index[v])
    }

    pub fn diameter(&self) -> usize {
        self.local.diameter()
    }

    pub fn eccentricity(&self, u: NodeId) -> usize {
        self.local.eccentricity(self.local_index[u])
    }

    /// The induced subgraph as a standalone graph on local ids.
    pub fn local_graph(&self) -> &Graph {
        &self.local
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiiMode {
    All,
    Dyadic,
}

/// Radii used around a node of eccentricity `e`.
pub fn ball_radii(e: usize, mode: RadiiMode) -> Vec<usize> {
    match mode {
        RadiiMode::All => (0..=e).collect(),
        RadiiMode::Dyadic => {
            let mut r = vec![0];
            let mut p = 2;
            while p <= e {
                r.push(p);
                p *= 2;
            }
            r
        }
    }
}

/// Balls around every node, deduplicated by node set, in order of first
/// appearance (node-major, radius-minor).
pub fn ball_collection(g: &Graph, mode: RadiiMode) -> Vec<Subgraph> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in g.nodes() {
        for r in ball_radii(g.eccentricity(c), mode) {
            let ball: Vec<NodeId> = g.nodes().filter(|&v| g.dist(c, v) <= r).collect();
            if seen.insert(ball.clone()) {
                out.push(Subgraph::induced(g, &ball).expect("balls are connected"));
            }
        }
    }
    out
}

/// Number of balls before deduplication.
pub fn ball_collection_raw_len(g: &Graph, mode: RadiiMode) -> usize {
    g.nodes().map(|c| ball_radii(g.eccentricity(c), mode).len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_metric() {
        let g = Graph::path(5).unwrap();
        assert_eq!(g.diameter(), 4);
        assert_eq!(g.eccentricity(2), 2);
        assert_eq!(g.diameter_path(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_node() {
        let g = Graph::new(1, &[]).unwrap();
        assert_eq!(g.diameter(), 0);
        assert_eq!(ball_collection(&g, RadiiMode::All).len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Graph::new(2, &[(1, 1)]).unwrap_err(), GraphError::SelfLoop(1));
        assert!(matches!(Graph::new(3, &[(0, 1)]).unwrap_err(), GraphError::DisconnectedGraph { .. }));
        assert!(matches!(Graph::new(2, &[(0, 2)]).unwrap_err(), GraphError::InvalidEndpoint { .. }));
    }

    #[test]
    fn two_cluster_counts() {
        let (g, lay) = two_cluster_graph(8, 6).unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(lay.cluster(1).len(), 9);
        let (g, _) = two_cluster_graph(1, 1).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.diameter(), 4);
        let (g, lay) = two_cluster_graph(8, 100).unwrap();
        assert_eq!(g.dist(lay.leaves[0][0], lay.leaves[0][7]), 2);
        assert_eq!(g.diameter(), 103);
    }

    #[test]
    fn dyadic_radii() {
        assert_eq!(ball_radii(0, RadiiMode::Dyadic), vec![0]);
        assert_eq!(ball_radii(1, RadiiMode::Dyadic), vec![0]);
        assert_eq!(ball_radii(5, RadiiMode::Dyadic), vec![0, 2, 4]);
        assert_eq!(ball_radii(8, RadiiMode::Dyadic), vec![0, 2, 4, 8]);
    }

    #[test]
    fn induced_metric_can_exceed_parent() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert_eq!(g.diameter(), 2);
        let arc = Subgraph::induced(&g, &[3, 0, 1, 2]).unwrap();
        assert_eq!(arc.dist(0, 3), 3);
        assert_eq!(arc.diameter(), 3);
        assert!(Subgraph::induced(&g, &[0, 2]).is_err());
    }
}
