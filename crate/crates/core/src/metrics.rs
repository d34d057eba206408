//! Regret, lag and bound evaluation over completed traces, plus CSV and
//! summary export.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::Scenario;
use crate::encoding::norm;
use crate::learners::blackbox::dot;
use crate::learners::integral::{ln_moments, ln_normalizer};
use crate::learners::LearnerError;
use crate::partition::{validate_partition, PartitionError, QCollection};
use crate::sim::{StackTrace, Trace};
use crate::special::ln_plus;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("missing metadata for the bound: {0}")]
    MissingMetadata(&'static str),
    #[error("trace and scenario disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// `Σ_t (n_t² + 2 n_t Σ_{i∈γ(t)} n_i)` with `γ(t)` given as indices.
pub fn lag(norms: &[f64], gammas: &[Vec<usize>]) -> f64 {
    norms.iter().zip(gammas).map(|(&n, gamma)| n * n + 2.0 * n * gamma.iter().map(|&i| norms[i]).sum::<f64>()).sum()
}

/// Running values of [`lag`] after every round.
pub fn cumulative_lag(norms: &[f64], gammas: &[Vec<usize>]) -> Vec<f64> {
    let mut acc = 0.0;
    norms
        .iter()
        .zip(gammas)
        .map(|(&n, gamma)| {
            acc += n * n + 2.0 * n * gamma.iter().map(|&i| norms[i]).sum::<f64>();
            acc
        })
        .collect()
}

fn round_gammas(trace: &Trace) -> Vec<Vec<usize>> {
    trace.rounds.iter().map(|r| r.gamma.iter().map(|&s| s as usize - 1).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lags {
    /// With the true subgradients.
    pub lambda: f64,
    /// With the decoded gradients.
    pub lambda_hat: f64,
}

/// Lags over the full graph's missing sets.
pub fn trace_lags(trace: &Trace) -> Lags {
    let gammas = round_gammas(trace);
    let g: Vec<f64> = trace.rounds.iter().map(|r| norm(&r.g)).collect();
    let gh: Vec<f64> = trace.rounds.iter().map(|r| norm(&r.ghat)).collect();
    Lags { lambda: lag(&g, &gammas), lambda_hat: lag(&gh, &gammas) }
}

/// `Λ^h` of one stack: its true scalars `h_t = ⟨z_t, g_t⟩` and its own missing sets.
pub fn stack_lag_h(stack: &StackTrace) -> f64 {
    let h: Vec<f64> = stack.rows.iter().map(|r| r.h.abs()).collect();
    let gammas: Vec<Vec<usize>> = stack.rows.iter().map(|r| r.gamma.clone()).collect();
    lag(&h, &gammas)
}

/// Lag of one stack with the decoded or true gradients on its own missing sets.
pub fn stack_lag(stack: &StackTrace, trace: &Trace, decoded: bool) -> f64 {
    let norms: Vec<f64> = stack
        .rows
        .iter()
        .map(|r| {
            let row = &trace.rounds[r.t as usize - 1];
            norm(if decoded { &row.ghat } else { &row.g })
        })
        .collect();
    let gammas: Vec<Vec<usize>> = stack.rows.iter().map(|r| r.gamma.clone()).collect();
    lag(&norms, &gammas)
}

fn check_lengths(trace: &Trace, scenario: &Scenario) -> Result<(), MetricsError> {
    if trace.rounds.len() != scenario.len() {
        return Err(MetricsError::Mismatch(format!(
            "{} rows vs {} scenario rounds",
            trace.rounds.len(),
            scenario.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    /// `Σ (ℓ_t(w_t) - ℓ_t(u))`.
    pub regret: f64,
    /// `Σ ⟨w_t - u, g_t⟩`.
    pub linearized: f64,
}

/// Regret over the rounds selected by `keep`.
pub fn regret_where(
    trace: &Trace,
    scenario: &Scenario,
    u: &[f64],
    keep: impl Fn(usize) -> bool,
) -> Result<Regret, MetricsError> {
    check_lengths(trace, scenario)?;
    let mut out = Regret { regret: 0.0, linearized: 0.0 };
    for (i, row) in trace.rounds.iter().enumerate() {
        if !keep(row.node) {
            continue;
        }
        out.regret += row.loss - scenario.losses[i].value(u);
        out.linearized += dot(&row.w, &row.g) - dot(u, &row.g);
    }
    Ok(out)
}

pub fn regret(trace: &Trace, scenario: &Scenario, u: &[f64]) -> Result<Regret, MetricsError> {
    regret_where(trace, scenario, u, |_| true)
}

/// Regret after each of the first `rounds` rounds.
pub fn regret_prefix(trace: &Trace, scenario: &Scenario, u: &[f64], rounds: usize) -> Result<f64, MetricsError> {
    check_lengths(trace, scenario)?;
    Ok(trace.rounds[..rounds.min(trace.rounds.len())]
        .iter()
        .zip(&scenario.losses)
        .map(|(row, l)| row.loss - l.value(u))
        .sum())
}

/// Scalar regret of a stack's scale learner, `Σ (v_t - u) h_t`.
pub fn scale_regret(stack: &StackTrace, u: f64) -> f64 {
    stack.rows.iter().map(|r| (r.v - u) * r.h).sum()
}

/// Linearized regret `R̃_F(u) = Σ_{t: I_t ∈ F} ⟨w^F_t - u, g_t⟩` of one stack.
pub fn stack_linearized_regret(stack: &StackTrace, trace: &Trace, u: &[f64]) -> f64 {
    stack
        .rows
        .iter()
        .map(|r| {
            let g = &trace.rounds[r.t as usize - 1].g;
            dot(&r.w, g) - dot(u, g)
        })
        .sum()
}

/// Both sides of `Σ⟨w_t - u, g_t⟩ = Σ⟨z_t, g_t⟩(v_t - |u|) + |u| Σ⟨z_t - u/|u|, g_t⟩`.
pub fn decomposition_sides(stack: &StackTrace, trace: &Trace, u: &[f64]) -> (f64, f64) {
    let un = norm(u);
    let dir: Vec<f64> = if un > 0.0 { u.iter().map(|x| x / un).collect() } else { vec![0.0; u.len()] };
    let mut lhs = 0.0;
    let mut scale = 0.0;
    let mut direction = 0.0;
    for r in &stack.rows {
        let g = &trace.rounds[r.t as usize - 1].g;
        lhs += dot(&r.w, g) - dot(u, g);
        let zg = dot(&r.z, g);
        scale += zg * (r.v - un);
        direction += zg - dot(&dir, g);
    }
    (lhs, scale + un * direction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRegret {
    pub subgraph: usize,
    pub comparator: Vec<f64>,
    pub rounds: usize,
    pub regret: f64,
    pub linearized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub cells: Vec<CellRegret>,
    pub total: f64,
    pub total_linearized: f64,
    /// `R̃_F(0)` for every subgraph in the collection.
    pub null_regrets: Vec<f64>,
    /// `Σ_t ⟨w_t, g_t⟩ - Σ_j Σ_{t: I_t∈F_j} ⟨u_j, g_t⟩`.
    pub identity_lhs: f64,
    /// `Σ_{F∉P} R̃_F(0) + Σ_j R̃_{F_j}(u_j)`.
    pub identity_rhs: f64,
}

/// Per-cell regrets for a disjoint cover `cells` of the activated nodes.
pub fn partition_regret_report(
    trace: &Trace,
    scenario: &Scenario,
    q: &QCollection,
    cells: &[(usize, Vec<f64>)],
) -> Result<PartitionReport, MetricsError> {
    check_lengths(trace, scenario)?;
    let idx: Vec<usize> = cells.iter().map(|(c, _)| *c).collect();
    validate_partition(q, &idx, &trace.activations())?;
    if trace.stacks.len() != q.len() {
        return Err(MetricsError::Mismatch(format!("{} stacks for {} subgraphs", trace.stacks.len(), q.len())));
    }
    let mut out = PartitionReport {
        cells: Vec::new(),
        total: 0.0,
        total_linearized: 0.0,
        null_regrets: Vec::new(),
        identity_lhs: 0.0,
        identity_rhs: 0.0,
    };
    let zero = vec![0.0; trace.meta.dim];
    out.null_regrets = trace.stacks.iter().map(|s| stack_linearized_regret(s, trace, &zero)).collect();
    for (c, u) in cells {
        let sub = q.subgraph(*c);
        let r = regret_where(trace, scenario, u, |n| sub.contains(n))?;
        let rounds = trace.rounds.iter().filter(|row| sub.contains(row.node)).count();
        out.total += r.regret;
        out.total_linearized += r.linearized;
        out.identity_rhs += stack_linearized_regret(&trace.stacks[*c], trace, u);
        out.cells.push(CellRegret {
            subgraph: *c,
            comparator: u.clone(),
            rounds,
            regret: r.regret,
            linearized: r.linearized,
        });
    }
    for (i, nr) in out.null_regrets.iter().enumerate() {
        if !idx.contains(&i) {
            out.identity_rhs += nr;
        }
    }
    for row in &trace.rounds {
        out.identity_lhs += dot(&row.w, &row.g);
        if let Some((_, u)) = cells.iter().find(|(c, _)| q.subgraph(*c).contains(row.node)) {
            out.identity_lhs -= dot(u, &row.g);
        }
    }
    Ok(out)
}

/// Scale-learner bound with explicit constants: `ν + 2uTε + u max{264 G τ ln₊(312 u G τ/ν), √(8(Λ^h + 24TGε + 1) ln₊(2036 u² T τ G²/ν²))}`,
/// with `τ` floored at 1.
pub fn scale_bound(u: f64, nu: f64, eps: f64, g: f64, delay: usize, rounds: usize, lambda_h: f64) -> f64 {
    if u == 0.0 {
        return nu;
    }
    let tau = delay.max(1) as f64;
    let t = rounds as f64;
    let first = 264.0 * g * tau * ln_plus(312.0 * u * g * tau / nu);
    let second =
        (8.0 * (lambda_h + 24.0 * t * g * eps + 1.0) * ln_plus(2036.0 * u * u * t * tau * g * g / (nu * nu))).sqrt();
    nu + 2.0 * u * t * eps + u * first.max(second)
}

/// `B(T)` for deterministic coding:
/// `4εT + √(8(Λ + 24εGDT + 1) ln₊(2036|u|²DG²T/ν²)) + 4√(Λ + 9εGDT) + 276GD ln₊(312|u|GD/ν)`.
pub fn deterministic_b(u_norm: f64, nu: f64, eps: f64, g: f64, d: usize, rounds: usize, lambda: f64) -> f64 {
    let dd = d as f64;
    let t = rounds as f64;
    4.0 * eps * t
        + (8.0
            * (lambda + 24.0 * eps * g * dd * t + 1.0)
            * ln_plus(2036.0 * u_norm * u_norm * dd * g * g * t / (nu * nu)))
        .sqrt()
        + 4.0 * (lambda + 9.0 * eps * g * dd * t).sqrt()
        + 276.0 * g * dd * ln_plus(312.0 * u_norm * g * dd / nu)
}

/// `B̂(T)` for stochastic coding:
/// `√(47(Λ̂ + 1) ln₊(8144|u|²Td²G²/ν²)) + 552 d G D ln₊(624|u| d G D/ν)`.
pub fn stochastic_b(u_norm: f64, nu: f64, dim: usize, g: f64, d: usize, rounds: usize, lambda_hat: f64) -> f64 {
    let dm = dim as f64;
    let dd = d as f64;
    let t = rounds as f64;
    (47.0 * (lambda_hat + 1.0) * ln_plus(8144.0 * u_norm * u_norm * t * dm * dm * g * g / (nu * nu))).sqrt()
        + 552.0 * dm * g * dd * ln_plus(624.0 * u_norm * dm * g * dd / nu)
}

/// `T 2^{-b/(dD)} G`.
pub fn deterministic_coding_term(rounds: usize, budget: usize, dim: usize, d: usize, g: f64) -> f64 {
    rounds as f64 * 2f64.powf(-(budget as f64) / (dim as f64 * d.max(1) as f64)) * g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Scale learner, explicit constants.
    T2,
    /// Deterministic coding, explicit constants.
    T3,
    /// Stochastic coding, explicit constants, in expectation.
    T5,
    /// Partition learning, order-level.
    T6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub u_norm: f64,
    pub lambda: f64,
    pub diameter: usize,
    pub rounds: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub grad_bound: Option<f64>,
    pub delay: Option<usize>,
    pub rounds: Option<usize>,
    pub dim: Option<usize>,
    pub budget: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_hat: Option<f64>,
    pub lambda_h: Option<f64>,
    pub collection_size: Option<usize>,
    pub cells: Option<Vec<CellParams>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// Set when the theorem is only stated up to constants; the value then
    /// uses constant 1.
    pub order_level: bool,
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T, MetricsError> {
    v.ok_or(MetricsError::MissingMetadata(name))
}

/// Right-hand side of a theorem for comparator norm `u_norm` (ignored by
/// `T6`, which reads the per-cell norms).
pub fn bound_evaluator(theorem: Theorem, p: &BoundParams, u_norm: f64) -> Result<BoundValue, MetricsError> {
    let value = match theorem {
        Theorem::T2 => scale_bound(
            u_norm,
            need(p.nu, "nu")?,
            need(p.eps, "eps")?,
            need(p.grad_bound, "grad_bound")?,
            need(p.delay, "delay")?,
            need(p.rounds, "rounds")?,
            need(p.lambda_h, "lambda_h")?,
        ),
        Theorem::T3 => {
            let nu = need(p.nu, "nu")?;
            nu + u_norm
                * deterministic_b(
                    u_norm,
                    nu,
                    need(p.eps, "eps")?,
                    need(p.grad_bound, "grad_bound")?,
                    need(p.delay, "delay")?,
                    need(p.rounds, "rounds")?,
                    need(p.lambda, "lambda")?,
                )
        }
        Theorem::T5 => {
            let nu = need(p.nu, "nu")?;
            nu + u_norm
                * stochastic_b(
                    u_norm,
                    nu,
                    need(p.dim, "dim")?,
                    need(p.grad_bound, "grad_bound")?,
                    need(p.delay, "delay")?,
                    need(p.rounds, "rounds")?,
                    need(p.lambda_hat, "lambda_hat")?,
                )
        }
        Theorem::T6 => {
            let q = need(p.collection_size, "collection_size")? as f64;
            let g = need(p.grad_bound, "grad_bound")?;
            let dim = need(p.dim, "dim")?;
            let budget = need(p.budget, "budget")?;
            let d_q = need(p.delay, "delay")?;
            let cells = p.cells.as_ref().ok_or(MetricsError::MissingMetadata("cells"))?;
            cells
                .iter()
                .map(|c| {
                    let tj = c.rounds as f64;
                    let log = (1.0 + q * c.diameter as f64 * c.u_norm * tj * g).ln();
                    c.u_norm * ((c.lambda * log).sqrt() + deterministic_coding_term(c.rounds, budget, dim, d_q, g))
                })
                .sum()
        }
    };
    Ok(BoundValue { value, order_level: theorem == Theorem::T6 })
}

/// Bound parameters of one stack in a trace.
pub fn stack_bound_params(stack: &StackTrace) -> BoundParams {
    BoundParams {
        nu: Some(stack.tuning.nu),
        eps: Some(stack.tuning.eps),
        grad_bound: Some(stack.tuning.grad_bound),
        delay: Some(stack.tuning.delay_bound),
        rounds: Some(stack.rows.len()),
        lambda_h: Some(stack_lag_h(stack)),
        ..BoundParams::default()
    }
}

/// `Φ_t` after every row of a stack, rebuilt from the recorded `ĥ` and `γ`
/// with the integration limit the tuning prescribes (not the one the
/// learner ran with).
pub fn reference_potentials(stack: &StackTrace) -> Result<Vec<f64>, MetricsError> {
    let a = stack.tuning.upper_limit()?;
    let ln_z = ln_normalizer(a);
    let eps = stack.tuning.eps;
    let xs: Vec<f64> = stack.rows.iter().map(|r| r.hhat + eps).collect();
    let (mut l, mut v) = (0.0, 1.0);
    let mut out = Vec::with_capacity(xs.len());
    for (r, x) in stack.rows.iter().zip(&xs) {
        let missing: f64 = r.gamma.iter().map(|&i| xs[i].abs()).sum();
        l += x;
        v += x * x + 2.0 * x.abs() * missing;
        out.push(stack.tuning.nu * (ln_moments(l, v, a)?.ln_j0 - ln_z).exp());
    }
    Ok(out)
}

/// Potential-decrease slack per round of a stack: `Φ_{t-1} - v_t x_t - Φ_t`
/// over [`reference_potentials`], with `x_t` the true `h_t` (or `ĥ_t + ε`
/// when `decoded`), relative to `|Φ_{t-1}| + |v_t x_t|`. Negative values are
/// violations.
pub fn potential_slacks(stack: &StackTrace, decoded: bool) -> Result<Vec<f64>, MetricsError> {
    let mut prev = stack.tuning.nu;
    Ok(stack
        .rows
        .iter()
        .zip(reference_potentials(stack)?)
        .map(|(r, phi)| {
            let x = if decoded { r.hhat + stack.tuning.eps } else { r.h };
            let scale = prev.abs() + (r.v * x).abs();
            let slack = (prev - r.v * x - phi) / if scale > 0.0 { scale } else { 1.0 };
            prev = phi;
            slack
        })
        .collect())
}

/// Names of the CSV columns for `comparators`.
pub fn csv_header(dim: usize, comparators: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "active_node", "v_t", "h_t"].iter().map(|s| s.to_string()).collect();
    h.extend((0..comparators).map(|i| format!("regret_u{i}")));
    h.extend(["lambda_cum", "bits_cum", "loss"].iter().map(|s| s.to_string()));
    h.extend((0..comparators).map(|i| format!("loss_u{i}")));
    for prefix in ["w", "g", "ghat"] {
        h.extend((0..dim).map(|j| format!("{prefix}_{j}")));
    }
    h.push("payload".into());
    h
}

/// Per-round `(v_t, h_t)`: sums over the stacks containing the active node,
/// or `(|w_t|, ⟨w_t, g_t⟩/|w_t|)` for a trace without stacks.
fn round_scale(trace: &Trace) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = if trace.stacks.is_empty() {
        trace
            .rounds
            .iter()
            .map(|r| {
                let n = norm(&r.w);
                (n, if n > 0.0 { dot(&r.w, &r.g) / n } else { 0.0 })
            })
            .collect()
    } else {
        vec![(0.0, 0.0); trace.rounds.len()]
    };
    for s in &trace.stacks {
        for r in &s.rows {
            let e = &mut out[r.t as usize - 1];
            e.0 += r.v;
            e.1 += r.h;
        }
    }
    out
}

/// Writes the per-round trace CSV; returns the final regret per comparator.
pub fn write_trace_csv<W: Write>(
    out: W,
    trace: &Trace,
    scenario: &Scenario,
    comparators: &[Vec<f64>],
) -> Result<Vec<f64>, MetricsError> {
    check_lengths(trace, scenario)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(trace.meta.dim, comparators.len()))?;
    let norms: Vec<f64> = trace.rounds.iter().map(|r| norm(&r.g)).collect();
    let lam = cumulative_lag(&norms, &round_gammas(trace));
    let scale = round_scale(trace);
    let mut regrets = vec![0.0; comparators.len()];
    for (i, row) in trace.rounds.iter().enumerate() {
        let cl: Vec<f64> = comparators.iter().map(|u| scenario.losses[i].value(u)).collect();
        for (r, l) in regrets.iter_mut().zip(&cl) {
            *r += row.loss - l;
        }
        let mut rec: Vec<String> =
            vec![row.t.to_string(), row.node.to_string(), scale[i].0.to_string(), scale[i].1.to_string()];
        rec.extend(regrets.iter().map(f64::to_string));
        rec.push(lam[i].to_string());
        rec.push(row.bits_total.to_string());
        rec.push(row.loss.to_string());
        rec.extend(cl.iter().map(f64::to_string));
        for v in [&row.w, &row.g, &row.ghat] {
            rec.extend(v.iter().map(f64::to_string));
        }
        rec.push(row.payload.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(regrets)
}

/// Recomputes the cumulative regrets from the `loss` and `loss_u*` columns.
pub fn regrets_from_csv<R: Read>(input: R) -> Result<Vec<f64>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let loss_col =
        header.iter().position(|h| h == "loss").ok_or_else(|| MetricsError::Malformed("no loss column".into()))?;
    let cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.starts_with("loss_u")).map(|(i, _)| i).collect();
    let mut regrets = vec![0.0; cols.len()];
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64, MetricsError> {
            rec[i].parse::<f64>().map_err(|e| MetricsError::Malformed(format!("{e} in column {i}")))
        };
        let loss = parse(loss_col)?;
        for (acc, &c) in regrets.iter_mut().zip(&cols) {
            *acc += loss - parse(c)?;
        }
    }
    Ok(regrets)
}

/// Per-stack rows: `t, subgraph, v_t, z_norm, h_t, hhat_t, potential, w_*`.
pub fn write_stack_csv<W: Write>(out: W, trace: &Trace) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["t", "subgraph", "v_t", "z_norm", "h_t", "hhat_t", "potential"].iter().map(|s| s.to_string()).collect();
    header.extend((0..trace.meta.dim).map(|j| format!("w_{j}")));
    w.write_record(&header)?;
    for s in &trace.stacks {
        for r in &s.rows {
            let mut rec = vec![
                r.t.to_string(),
                s.subgraph.to_string(),
                r.v.to_string(),
                norm(&r.z).to_string(),
                r.h.to_string(),
                r.hhat.to_string(),
                r.potential.to_string(),
            ];
            rec.extend(r.w.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-cell rows of a partition report.
pub fn write_partition_csv<W: Write>(out: W, report: &PartitionReport) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subgraph", "rounds", "regret", "linearized", "comparator"])?;
    for c in &report.cells {
        let comp: Vec<String> = c.comparator.iter().map(f64::to_string).collect();
        w.write_record([
            c.subgraph.to_string(),
            c.rounds.to_string(),
            c.regret.to_string(),
            c.linearized.to_string(),
            comp.join(" "),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSummary {
    pub comparator: Vec<f64>,
    pub regret: f64,
    pub linearized: f64,
    /// Deterministic-coding bound of a single-stack run, if applicable.
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: crate::adversary::ScenarioDescriptor,
    pub meta: crate::sim::TraceMeta,
    pub lags: Lags,
    pub comparators: Vec<ComparatorSummary>,
    pub scale_bound_ok: bool,
    pub null_regret_ok: bool,
}

/// Final regrets, lags and bound checks of one run.
pub fn summarize(trace: &Trace, scenario: &Scenario, comparators: &[Vec<f64>]) -> Result<RunSummary, MetricsError> {
    let lags = trace_lags(trace);
    let single = trace.stacks.len() == 1;
    let mut out = Vec::new();
    for u in comparators {
        let r = regret(trace, scenario, u)?;
        let bound = if single {
            let s = &trace.stacks[0];
            let p = BoundParams {
                nu: Some(s.tuning.nu),
                eps: Some(s.tuning.eps),
                grad_bound: Some(s.tuning.grad_bound),
                delay: Some(s.tuning.delay_bound.max(1)),
                rounds: Some(trace.rounds.len()),
                lambda: Some(lags.lambda),
                dim: Some(trace.meta.dim),
                lambda_hat: Some(lags.lambda_hat),
                ..BoundParams::default()
            };
            let th = match trace.meta.encoder.kind {
                crate::encoding::EncoderKind::DeterministicGrid => Theorem::T3,
                crate::encoding::EncoderKind::SparsifiedQuantization => Theorem::T5,
            };
            Some(bound_evaluator(th, &p, norm(u))?.value)
        } else {
            None
        };
        out.push(ComparatorSummary {
            comparator: u.clone(),
            regret: r.regret,
            linearized: r.linearized,
            bound,
            within_bound: bound.map(|b| r.regret <= b),
        });
    }
    let scale_bound_ok = trace.stacks.iter().all(|s| {
        let p = stack_bound_params(s);
        [0.0, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .all(|&u| bound_evaluator(Theorem::T2, &p, u).is_ok_and(|b| scale_regret(s, u) <= b.value))
    });
    let zero = vec![0.0; trace.meta.dim];
    let null_regret_ok = trace.stacks.iter().all(|s| stack_linearized_regret(s, trace, &zero) <= s.tuning.nu);
    Ok(RunSummary {
        scenario: scenario.descriptor.clone(),
        meta: trace.meta.clone(),
        lags,
        comparators: out,
        scale_bound_ok,
        null_regret_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_example() {
        assert_eq!(lag(&[1.0, 2.0], &[vec![], vec![0]]), 9.0);
        assert_eq!(lag(&[1.0, 2.0], &[vec![], vec![]]), 5.0);
        assert_eq!(cumulative_lag(&[1.0, 2.0], &[vec![], vec![0]]), vec![1.0, 9.0]);
    }

    #[test]
    fn null_comparator_bound_is_nu() {
        assert_eq!(scale_bound(0.0, 0.25, 0.01, 1.0, 4, 1000, 50.0), 0.25);
    }

    #[test]
    fn coding_term_is_order_one_at_log_budget() {
        let (d, dd, t) = (4usize, 3usize, 1024usize);
        let b = d * dd * 10;
        assert!((deterministic_coding_term(t, b, d, dd, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_metadata_is_reported() {
        let p = BoundParams { nu: Some(1.0), ..BoundParams::default() };
        assert!(matches!(bound_evaluator(Theorem::T2, &p, 1.0), Err(MetricsError::MissingMetadata("eps"))));
        assert!(matches!(bound_evaluator(Theorem::T6, &p, 1.0), Err(MetricsError::MissingMetadata("collection_size"))));
    }
}
