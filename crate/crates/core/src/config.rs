//! Experiment configuration: one JSON document describing graph, scenario,
//! encoder, learner, collection and comparators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    default_cluster_losses, encoding_attack_scenario, random_scenario, sign_sequence_scenario, two_cluster_scenario,
    worst_delay_scenario, LossSpec, Scenario, ScenarioError,
};
use crate::encoding::{index_bits, EncoderKind, EncoderSpec};
use crate::graph::{
    ball_collection, two_cluster_graph, Graph, GraphError, NodeId, RadiiMode, Subgraph, TwoClusterLayout,
};
use crate::metrics::MetricsError;
use crate::partition::{bits_per_gradient, PartitionError, QCollection, StackSettings};
use crate::sim::{run_baseline, run_partition, RunOptions, SimError, Trace};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
    #[error("config graph: {0}")]
    Graph(#[from] GraphError),
    #[error("config scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("config collection: {0}")]
    Partition(#[from] PartitionError),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Any failure while running a configured experiment.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl RunError {
    /// `config`, `numeric` or `protocol`.
    pub fn category(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Sim(e) => e.category(),
            RunError::Metrics(MetricsError::Mismatch(_)) => "protocol",
            RunError::Metrics(_) => "numeric",
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    TwoCluster {
        cluster_leaves: usize,
        connector_length: usize,
    },
    Path {
        nodes: usize,
    },
    /// Explicit edges; `text` holds one `u v` pair per line, `edges` an array.
    Edges {
        #[serde(default)]
        nodes: Option<usize>,
        #[serde(default)]
        edges: Vec<(NodeId, NodeId)>,
        #[serde(default)]
        text: Option<String>,
    },
}

impl GraphSpec {
    pub fn build(&self) -> Result<(Graph, Option<TwoClusterLayout>), ConfigError> {
        match self {
            GraphSpec::TwoCluster { cluster_leaves, connector_length } => {
                let (g, layout) = two_cluster_graph(*cluster_leaves, *connector_length)?;
                Ok((g, Some(layout)))
            }
            GraphSpec::Path { nodes } => Ok((Graph::path(*nodes)?, None)),
            GraphSpec::Edges { nodes, edges, text } => {
                let mut all = edges.clone();
                if let Some(text) = text {
                    all.extend(parse_edge_list(text)?);
                }
                let n = nodes.unwrap_or_else(|| all.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(1));
                Ok((Graph::new(n, &all)?, None))
            }
        }
    }
}

/// Parses `u v` pairs, one per line; blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(NodeId, NodeId)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parse =
            |s: &str| s.parse::<NodeId>().map_err(|_| invalid(format!("edge line {}: bad node id {s:?}", i + 1)));
        match parts.as_slice() {
            [u, v] => out.push((parse(u)?, parse(v)?)),
            _ => return Err(invalid(format!("edge line {} must hold exactly two node ids", i + 1))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    TwoCluster {
        #[serde(default)]
        losses: Option<[LossSpec; 2]>,
    },
    Random {
        loss: LossSpec,
        #[serde(default)]
        nodes: Option<Vec<NodeId>>,
    },
    WorstDelay {
        loss: LossSpec,
    },
    EncodingAttack {
        #[serde(default)]
        node: NodeId,
    },
    SignSequence {
        direction: Vec<f64>,
        #[serde(default)]
        node: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Magnitude bits for the stochastic codec; defaults to `ceil(log2 d)`.
    #[serde(default)]
    pub precision: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerConfig {
    Stack {
        #[serde(default = "one")]
        nu_total: f64,
        #[serde(default = "one")]
        direction_c: f64,
        #[serde(default)]
        eps_override: Option<f64>,
        #[serde(default)]
        grad_bound_override: Option<f64>,
        /// Multiplier on the tuned integration limit `a`.
        #[serde(default = "one")]
        limit_factor: f64,
    },
    Ogd {
        eta: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CollectionSpec {
    Single,
    Balls {
        mode: RadiiMode,
    },
    Explicit {
        sets: Vec<Vec<NodeId>>,
    },
    /// Both clusters of a two-cluster graph, plus the full graph if asked.
    Clusters {
        #[serde(default)]
        include_full: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub subgraph: usize,
    pub comparator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub scenario: ScenarioSpec,
    pub encoder: EncoderConfig,
    pub learner: LearnerConfig,
    #[serde(default = "single")]
    pub collection: CollectionSpec,
    pub dim: usize,
    pub grad_bound: f64,
    pub rounds: usize,
    /// Bits per node per round, `b`.
    pub budget: usize,
    #[serde(default)]
    pub comparators: Vec<Vec<f64>>,
    /// Partition cells for the per-cell report.
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default = "one_seed")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub keep_payloads: bool,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn single() -> CollectionSpec {
    CollectionSpec::Single
}

fn one_seed() -> usize {
    1
}

/// Everything needed to run one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub layout: Option<TwoClusterLayout>,
    pub collection: QCollection,
    pub template: EncoderSpec,
    pub horizon: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text)?;
        c.prepare()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Seed of run `i`.
    pub fn seed(&self, i: usize) -> u64 {
        self.master_seed.wrapping_add(i as u64)
    }

    pub fn settings(&self) -> Option<StackSettings> {
        match &self.learner {
            LearnerConfig::Stack { nu_total, direction_c, eps_override, grad_bound_override, .. } => {
                Some(StackSettings {
                    nu_total: *nu_total,
                    direction_c: *direction_c,
                    eps_override: *eps_override,
                    grad_bound_override: *grad_bound_override,
                })
            }
            LearnerConfig::Ogd { .. } => None,
        }
    }

    pub fn limit_factor(&self) -> f64 {
        match &self.learner {
            LearnerConfig::Stack { limit_factor, .. } => *limit_factor,
            LearnerConfig::Ogd { .. } => 1.0,
        }
    }

    fn collection(&self, g: &Graph, layout: Option<&TwoClusterLayout>) -> Result<QCollection, ConfigError> {
        let subs = match &self.collection {
            CollectionSpec::Single => vec![Subgraph::full(g)],
            CollectionSpec::Balls { mode } => ball_collection(g, *mode),
            CollectionSpec::Explicit { sets } => {
                sets.iter().map(|s| Subgraph::induced(g, s)).collect::<Result<Vec<_>, _>>()?
            }
            CollectionSpec::Clusters { include_full } => {
                let layout = layout.ok_or_else(|| invalid("collection `clusters` needs a two_cluster graph"))?;
                let mut subs =
                    vec![Subgraph::induced(g, &layout.cluster(0))?, Subgraph::induced(g, &layout.cluster(1))?];
                if *include_full {
                    subs.push(Subgraph::full(g));
                }
                subs
            }
        };
        Ok(QCollection::new(g, subs)?)
    }

    /// Validates the whole document and builds the static pieces.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        if self.dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if !(self.grad_bound > 0.0 && self.grad_bound.is_finite()) {
            return Err(invalid(format!("grad_bound must be positive, got {}", self.grad_bound)));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds must be at least 1"));
        }
        for (i, u) in self.comparators.iter().enumerate() {
            if u.len() != self.dim {
                return Err(invalid(format!("comparator {i} has {} entries, expected dim = {}", u.len(), self.dim)));
            }
        }
        let (graph, layout) = self.graph.build()?;
        let collection = match &self.learner {
            LearnerConfig::Stack { nu_total, direction_c, limit_factor, .. } => {
                if !(*nu_total > 0.0 && direction_c.is_finite() && *direction_c > 0.0) {
                    return Err(invalid("nu_total and direction_c must be positive"));
                }
                if !(*limit_factor > 0.0 && limit_factor.is_finite()) {
                    return Err(invalid("limit_factor must be positive"));
                }
                self.collection(&graph, layout.as_ref())?
            }
            LearnerConfig::Ogd { eta } => {
                if !(*eta > 0.0 && eta.is_finite()) {
                    return Err(invalid("ogd eta must be positive"));
                }
                if self.collection != CollectionSpec::Single {
                    return Err(invalid("the ogd baseline only runs on the full graph (collection `single`)"));
                }
                QCollection::single(&graph)
            }
        };
        let horizon = match self.learner {
            LearnerConfig::Stack { .. } => collection.d_q(),
            LearnerConfig::Ogd { .. } => graph.diameter().max(1),
        };
        let k = bits_per_gradient(self.budget, horizon);
        let precision = match self.encoder.kind {
            EncoderKind::DeterministicGrid => {
                if k < self.dim {
                    return Err(invalid(format!(
                        "deterministic encoder needs k >= d: budget {} over horizon {horizon} gives k = {k} < d = {}; raise budget to at least {}",
                        self.budget,
                        self.dim,
                        self.dim * horizon
                    )));
                }
                None
            }
            EncoderKind::SparsifiedQuantization => {
                let p = self.encoder.precision.unwrap_or_else(|| index_bits(self.dim));
                let need = index_bits(self.dim) + p + 2;
                if k < need {
                    return Err(invalid(format!(
                        "stochastic encoder needs k >= ceil(log2 d) + p + 2 = {need}, got k = {k}; raise budget to at least {}",
                        need * horizon
                    )));
                }
                Some(p)
            }
        };
        let template = EncoderSpec {
            kind: self.encoder.kind,
            dim: self.dim,
            grad_bound: self.grad_bound,
            bits_per_gradient: k,
            precision,
        };
        template.validate().map_err(|e| invalid(e.to_string()))?;
        if !self.cells.is_empty() {
            for c in &self.cells {
                if c.subgraph >= collection.len() || c.comparator >= self.comparators.len() {
                    return Err(invalid(format!(
                        "cell refers to subgraph {} / comparator {} outside the collection or comparator list",
                        c.subgraph, c.comparator
                    )));
                }
            }
        }
        match &self.scenario {
            ScenarioSpec::TwoCluster { losses } => {
                if layout.is_none() {
                    return Err(invalid("scenario `two_cluster` needs a two_cluster graph"));
                }
                if let Some(l) = losses {
                    self.build_check(|| {
                        two_cluster_scenario(layout.as_ref().unwrap(), 0, 0, self.dim, self.grad_bound, l)
                    })?;
                }
            }
            ScenarioSpec::EncodingAttack { node } | ScenarioSpec::SignSequence { node, .. } => {
                if *node >= graph.len() {
                    return Err(invalid(format!("scenario node {node} outside the graph")));
                }
            }
            ScenarioSpec::Random { nodes: Some(nodes), .. } => {
                if let Some(n) = nodes.iter().find(|&&n| n >= graph.len()) {
                    return Err(invalid(format!("scenario node {n} outside the graph")));
                }
            }
            _ => {}
        }
        Ok(Prepared { graph, layout, collection, template, horizon })
    }

    fn build_check(&self, f: impl FnOnce() -> Result<Scenario, ScenarioError>) -> Result<(), ConfigError> {
        f().map(|_| ()).map_err(ConfigError::from)
    }

    pub fn scenario(&self, prepared: &Prepared, seed: u64) -> Result<Scenario, ConfigError> {
        let (d, g, t) = (self.dim, self.grad_bound, self.rounds);
        let s = match &self.scenario {
            ScenarioSpec::TwoCluster { losses } => {
                let layout = prepared.layout.as_ref().ok_or_else(|| invalid("two_cluster scenario without layout"))?;
                let losses = losses.clone().unwrap_or_else(|| default_cluster_losses(d));
                two_cluster_scenario(layout, t, seed, d, g, &losses)?
            }
            ScenarioSpec::Random { loss, nodes } => {
                let all: Vec<NodeId> = prepared.graph.nodes().collect();
                random_scenario(nodes.as_deref().unwrap_or(&all), t, seed, d, g, loss)?
            }
            ScenarioSpec::WorstDelay { loss } => worst_delay_scenario(&prepared.graph, t, seed, d, g, loss)?,
            ScenarioSpec::EncodingAttack { node } => {
                if self.encoder.kind != EncoderKind::DeterministicGrid {
                    return Err(invalid("encoding_attack needs the deterministic_grid encoder"));
                }
                encoding_attack_scenario(&prepared.template, t, seed, *node)?
            }
            ScenarioSpec::SignSequence { direction, node } => {
                if direction.len() != d {
                    return Err(invalid("sign_sequence direction must have dim entries"));
                }
                sign_sequence_scenario(direction, t, seed, g, *node)?
            }
        };
        Ok(s)
    }

    /// Scenario and trace of run `index`.
    pub fn run_seed(&self, prepared: &Prepared, index: usize) -> Result<(Scenario, Trace), RunError> {
        let seed = self.seed(index);
        let scenario = self.scenario(prepared, seed)?;
        let opts = RunOptions {
            budget: self.budget,
            master_seed: seed,
            keep_payloads: self.keep_payloads,
            limit_factor: self.limit_factor(),
        };
        let trace = match &self.learner {
            LearnerConfig::Stack { .. } => {
                let settings = self.settings().expect("stack learner");
                run_partition(
                    &prepared.graph,
                    &scenario,
                    prepared.collection.clone(),
                    &settings,
                    &prepared.template,
                    opts,
                )?
            }
            LearnerConfig::Ogd { eta } => run_baseline(&prepared.graph, &scenario, *eta, &prepared.template, opts)?,
        };
        Ok((scenario, trace))
    }

    /// Applies `path=value` (dotted path into the JSON document, or a bare
    /// key that occurs exactly once).
    pub fn with_param(&self, path: &str, value: &str) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self)?;
        let parsed: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let slot = if path.contains('.') {
            path.split('.')
                .try_fold(&mut doc, |v, key| v.get_mut(key))
                .ok_or_else(|| invalid(format!("no field {path}")))?
        } else {
            let hits = find_keys(&doc, path);
            match hits.as_slice() {
                [one] => one.iter().try_fold(&mut doc, |v, key| v.get_mut(key.as_str())).expect("path exists"),
                [] => return Err(invalid(format!("no field named {path}"))),
                _ => return Err(invalid(format!("field {path} is ambiguous; use a dotted path"))),
            }
        };
        *slot = parsed;
        let c: Self = serde_json::from_value(doc)?;
        c.prepare()?;
        Ok(c)
    }
}

fn find_keys(v: &serde_json::Value, key: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    if let serde_json::Value::Object(map) = v {
        for (k, child) in map {
            if k == key {
                out.push(vec![k.clone()]);
            }
            for mut p in find_keys(child, key) {
                p.insert(0, k.clone());
                out.push(p);
            }
        }
    }
    out
}

/// Splits `name=v1,v2,...`.
pub fn parse_sweep(arg: &str) -> Result<(String, Vec<String>), ConfigError> {
    let (name, values) =
        arg.split_once('=').ok_or_else(|| invalid(format!("sweep {arg:?} must look like param=v1,v2")))?;
    let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if name.trim().is_empty() || values.is_empty() {
        return Err(invalid(format!("sweep {arg:?} must name a parameter and at least one value")));
    }
    Ok((name.trim().to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            graph: GraphSpec::TwoCluster { cluster_leaves: 2, connector_length: 3 },
            scenario: ScenarioSpec::TwoCluster { losses: None },
            encoder: EncoderConfig { kind: EncoderKind::DeterministicGrid, precision: None },
            learner: LearnerConfig::Stack {
                nu_total: 1.0,
                direction_c: 1.0,
                eps_override: None,
                grad_bound_override: None,
                limit_factor: 1.0,
            },
            collection: CollectionSpec::Clusters { include_full: true },
            dim: 2,
            grad_bound: 1.0,
            rounds: 10,
            budget: 64,
            comparators: vec![vec![0.0, 0.0]],
            cells: vec![],
            seeds: 2,
            master_seed: 5,
            keep_payloads: false,
            output_dir: None,
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn small_budget_is_rejected_with_advice() {
        let mut c = sample();
        c.budget = 5;
        let err = c.prepare().unwrap_err().to_string();
        assert!(err.contains("raise budget to at least 12"), "{err}");
    }

    #[test]
    fn sweep_parameters() {
        let c = sample().with_param("connector_length", "7").unwrap();
        assert_eq!(c.graph, GraphSpec::TwoCluster { cluster_leaves: 2, connector_length: 7 });
        assert!(sample().with_param("nope", "1").is_err());
        assert_eq!(parse_sweep("connector_length=2,20").unwrap().1, vec!["2", "20"]);
        assert!(parse_sweep("x").is_err());
    }

    #[test]
    fn edge_list_text() {
        assert_eq!(parse_edge_list("0 1\n# c\n1 2\n").unwrap(), vec![(0, 1), (1, 2)]);
        assert!(parse_edge_list("0 1 2").is_err());
    }
}
