//! Invariant suites run against fresh traces of a configured experiment.

use serde::{Deserialize, Serialize};

use crate::adversary::Scenario;
use crate::config::{ExperimentConfig, Prepared, RunError};
use crate::encoding::{norm, EncoderKind};
use crate::graph::Graph;
use crate::metrics::{
    decomposition_sides, partition_regret_report, potential_slacks, regret, regrets_from_csv, scale_bound,
    scale_regret, stack_lag_h, stack_linearized_regret, summarize, trace_lags, write_trace_csv,
};
use crate::sim::Trace;
use crate::transport::ForwardingProfile;

/// Relative tolerance of the potential-decrease check.
pub const POTENTIAL_TOL: f64 = 1e-9;
/// Tolerance of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-9;

const BOUND_COMPARATORS: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    /// Smallest slack seen; negative means violated. `None` when nothing was checked.
    pub worst_slack: Option<f64>,
    pub checks: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub results: Vec<InvariantResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }

    /// Records slacks for `name`; the invariant fails on any slack below `-tol`.
    fn add(&mut self, name: &str, detail: &str, tol: f64, slacks: impl IntoIterator<Item = f64>) {
        let idx = match self.results.iter().position(|r| r.name == name) {
            Some(i) => i,
            None => {
                self.results.push(InvariantResult {
                    name: name.to_string(),
                    passed: true,
                    worst_slack: None,
                    checks: 0,
                    detail: detail.to_string(),
                });
                self.results.len() - 1
            }
        };
        let r = &mut self.results[idx];
        for s in slacks {
            let s = s + 0.0;
            r.checks += 1;
            if !(s >= -tol) {
                r.passed = false;
            }
            r.worst_slack = Some(match r.worst_slack {
                Some(w) if !(s < w) => w,
                _ => s,
            });
        }
    }

    /// One line per invariant.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let slack = r.worst_slack.map_or("-".to_string(), |s| format!("{s:.3e}"));
            out.push_str(&format!(
                "{} {:<34} worst_slack={:<11} checks={:<8} {}\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                slack,
                r.checks,
                r.detail
            ));
        }
        out
    }
}

/// Runs every seed of `config` and checks all invariant suites.
pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport, RunError> {
    let prepared = config.prepare()?;
    let mut report = VerifyReport::default();
    check_graph(&mut report, &prepared);
    for i in 0..config.seeds {
        let (scenario, trace) = config.run_seed(&prepared, i)?;
        check_trace(&mut report, config, &prepared, &scenario, &trace)?;
    }
    Ok(report)
}

fn check_graph(report: &mut VerifyReport, prepared: &Prepared) {
    let g = &prepared.graph;
    report.add("graph.metric", "d(u,u)=0, symmetry, |d(u,x)-d(v,x)| <= 1 on edges", 0.0, metric_slacks(g));
    let diameter = g.nodes().map(|u| g.eccentricity(u)).max().unwrap_or(0);
    report.add("graph.diameter", "diameter equals max eccentricity", 0.0, [-(diameter.abs_diff(g.diameter()) as f64)]);
}

fn metric_slacks(g: &Graph) -> Vec<f64> {
    let mut out = Vec::new();
    for u in g.nodes() {
        out.push(-(g.dist(u, u) as f64));
        for v in g.nodes() {
            out.push(-(g.dist(u, v).abs_diff(g.dist(v, u)) as f64));
        }
    }
    for (u, v) in g.edges() {
        for x in g.nodes() {
            out.push(1.0 - g.dist(u, x).abs_diff(g.dist(v, x)) as f64);
        }
    }
    out
}

fn check_trace(
    report: &mut VerifyReport,
    config: &ExperimentConfig,
    prepared: &Prepared,
    scenario: &Scenario,
    trace: &Trace,
) -> Result<(), RunError> {
    let g = &prepared.graph;
    let enc = &trace.meta.encoder;
    let deterministic = enc.kind == EncoderKind::DeterministicGrid;

    let covered =
        trace.rounds.iter().map(|r| if prepared.collection.containing(r.node).is_empty() { -1.0 } else { 0.0 });
    report.add("graph.collection_cover", "every active node lies in some subgraph", 0.0, covered);

    let window = trace.meta.graph_diameter.max(1) as u64;
    report.add(
        "transport.staleness_window",
        "missing gradients are younger than max(D,1) rounds",
        0.0,
        trace.rounds.iter().flat_map(|r| r.gamma.iter().map(move |&s| (window - 1) as f64 - (r.t - s) as f64)),
    );
    report.add(
        "transport.availability_accounting",
        "available + missing = t - 1",
        0.0,
        trace.rounds.iter().map(|r| -((r.available + r.gamma.len()).abs_diff(r.t as usize - 1) as f64)),
    );
    let mut prev = 0;
    let bits: Vec<f64> = trace
        .rounds
        .iter()
        .map(|r| {
            let s = -(r.bits_total.abs_diff(prev + r.bits_round) as f64);
            prev = r.bits_total;
            s
        })
        .collect();
    report.add("transport.bit_accounting", "cumulative bits add up per round", 0.0, bits);
    let profile = ForwardingProfile::compute(g, &trace.activations(), trace.meta.horizon);
    let per_node = profile.sent.iter().flatten().copied().max().unwrap_or(0) * enc.payload_len();
    report.add(
        "transport.bit_budget",
        "bits sent per node per round <= b",
        0.0,
        (!trace.rounds.is_empty()).then_some(trace.meta.budget as f64 - per_node as f64),
    );

    let norm_bound = enc.decoded_norm_bound();
    report.add(
        "encoding.decoded_norm",
        "|ghat| <= decoded norm bound",
        0.0,
        trace.rounds.iter().map(|r| (norm_bound - norm(&r.ghat)) / norm_bound),
    );
    if deterministic {
        let eps = enc.error_bound();
        report.add(
            "encoding.deterministic_error",
            "|ghat - g| <= sqrt(d) 2^-floor(k/d) G",
            1e-12,
            trace.rounds.iter().map(|r| {
                let e: Vec<f64> = r.ghat.iter().zip(&r.g).map(|(a, b)| a - b).collect();
                (eps - norm(&e)) / eps.max(f64::MIN_POSITIVE)
            }),
        );
    }

    let mut comparators = config.comparators.clone();
    if comparators.is_empty() {
        let mut e1 = vec![0.0; trace.meta.dim];
        e1[0] = 1.0;
        comparators = vec![vec![0.0; trace.meta.dim], e1];
    }

    for s in &trace.stacks {
        report.add(
            "learners.feasible_outputs",
            "v_t >= 0 and |z_t| <= 1",
            1e-12,
            s.rows.iter().map(|r| r.v.min(1.0 - norm(&r.z))),
        );
        report.add(
            "learners.potential_decrease",
            "Phi_t <= Phi_{t-1} - v_t (hhat_t + eps), relative",
            POTENTIAL_TOL,
            potential_slacks(s, true)?,
        );
        let null: f64 = s.rows.iter().map(|r| r.v * (r.hhat + s.tuning.eps)).sum();
        report.add(
            "learners.null_comparator",
            "sum v_t (hhat_t + eps) <= nu",
            POTENTIAL_TOL,
            [(s.tuning.nu - null) / s.tuning.nu.max(f64::MIN_POSITIVE)],
        );
        if deterministic {
            let lambda_h = stack_lag_h(s);
            report.add(
                "learners.scale_bound",
                "scalar regret <= explicit scale-learner bound, u in {0, 0.1, 1, 10, 100}",
                0.0,
                BOUND_COMPARATORS.iter().map(|&u| {
                    let t = &s.tuning;
                    scale_bound(u, t.nu, t.eps, t.grad_bound, t.delay_bound, s.rows.len(), lambda_h)
                        - scale_regret(s, u)
                }),
            );
        }
        report.add(
            "learners.decomposition",
            "linearized regret = scale part + |u| direction part",
            0.0,
            comparators.iter().map(|u| {
                let (lhs, rhs) = decomposition_sides(s, trace, u);
                1.0 - (lhs - rhs).abs() / (IDENTITY_TOL * lhs.abs().max(1.0))
            }),
        );
        if deterministic {
            let zero = vec![0.0; trace.meta.dim];
            report.add(
                "partition.null_regret",
                "linearized regret of every subgraph at u = 0 <= nu",
                POTENTIAL_TOL,
                [(s.tuning.nu - stack_linearized_regret(s, trace, &zero)) / s.tuning.nu],
            );
        }
    }

    if !trace.stacks.is_empty() {
        let mut sums = vec![vec![0.0; trace.meta.dim]; trace.rounds.len()];
        let mut mags = vec![0.0; trace.rounds.len()];
        for s in &trace.stacks {
            for r in &s.rows {
                let i = r.t as usize - 1;
                for (a, x) in sums[i].iter_mut().zip(&r.w) {
                    *a += x;
                }
                mags[i] += norm(&r.w);
            }
        }
        report.add(
            "partition.iterate_addition",
            "w_t = sum of subgraph iterates containing the active node",
            0.0,
            trace.rounds.iter().zip(sums.iter().zip(&mags)).map(|(r, (sum, m))| {
                let diff: Vec<f64> = r.w.iter().zip(sum).map(|(a, b)| a - b).collect();
                1.0 - norm(&diff) / (IDENTITY_TOL * m.max(1.0))
            }),
        );
    }
    if !config.cells.is_empty() {
        let cells: Vec<(usize, Vec<f64>)> =
            config.cells.iter().map(|c| (c.subgraph, config.comparators[c.comparator].clone())).collect();
        let rep = partition_regret_report(trace, scenario, &prepared.collection, &cells)?;
        report.add(
            "partition.cell_identity",
            "total linearized regret = sum of per-cell linearized regrets",
            0.0,
            [1.0 - (rep.identity_lhs - rep.identity_rhs).abs() / (IDENTITY_TOL * rep.identity_lhs.abs().max(1.0))],
        );
    }

    let lags = trace_lags(trace);
    let g_max = trace.meta.grad_bound;
    let ceiling: f64 = trace.rounds.iter().map(|r| g_max * g_max * (1.0 + 2.0 * r.gamma.len() as f64)).sum();
    report.add(
        "metrics.lag_ceiling",
        "Lambda <= sum G^2 (1 + 2|gamma(t)|)",
        1e-12,
        (!trace.rounds.is_empty()).then(|| (ceiling - lags.lambda) / ceiling),
    );
    let mut buf = Vec::new();
    let written = write_trace_csv(&mut buf, trace, scenario, &comparators)?;
    let reread = regrets_from_csv(buf.as_slice())?;
    let mut slacks = Vec::new();
    for ((u, w), r) in comparators.iter().zip(&written).zip(&reread) {
        let direct = regret(trace, scenario, u)?.regret;
        let err = (w - r).abs().max((w - direct).abs());
        slacks.push(1.0 - err / (IDENTITY_TOL * direct.abs().max(1.0)));
    }
    report.add("metrics.csv_roundtrip", "regret columns reproduce the regret", 0.0, slacks);
    if deterministic && trace.stacks.len() == 1 && !config.comparators.is_empty() {
        let summary = summarize(trace, scenario, &config.comparators)?;
        report.add(
            "metrics.theorem_bound",
            "regret <= explicit deterministic-coding bound per comparator",
            0.0,
            summary.comparators.iter().filter_map(|c| c.bound.map(|b| b - c.regret)),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_aggregation() {
        let mut r = VerifyReport::default();
        r.add("x", "", 0.0, [1.0, 0.5]);
        r.add("x", "", 0.0, [2.0]);
        assert!(r.passed());
        assert_eq!(r.get("x").unwrap().worst_slack, Some(0.5));
        r.add("y", "", 0.1, [-0.05]);
        assert!(r.passed());
        r.add("y", "", 0.1, [f64::NAN]);
        assert!(!r.passed());
        r.add("z", "", 0.0, std::iter::empty());
        assert_eq!(r.get("z").unwrap().worst_slack, None);
        assert_eq!(r.failures().count(), 1);
    }
}
