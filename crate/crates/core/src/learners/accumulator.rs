//! Sums over the gradients available at a node.
//!
//! For a query `(t, n)` the accumulator returns `Σ_{s∈S_n(t)} x_s` and the
//! available-lag `Σ_{s∈S_n(t)} (w_s² + 2 w_s Σ_{i∈γ(s)∩S_n(t)} w_i)`, where
//! `x_s` is a stored vector and `w_s ≥ 0` its weight. Settled records are
//! folded into running totals, so a query only walks the delay window.

use super::LearnerError;
use crate::graph::NodeId;
use crate::transport::{DeliveryModel, KnowledgeView, TransportError};

#[derive(Debug, Clone, PartialEq)]
pub struct AvailableSums {
    pub sum: Vec<f64>,
    pub lag: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct LagAccumulator {
    view: KnowledgeView,
    dim: usize,
    values: Vec<f64>,
    weights: Vec<f64>,
    settled_sum: Vec<f64>,
    settled_lag: f64,
    flags: Vec<bool>,
}

impl LagAccumulator {
    pub fn new(model: DeliveryModel, dim: usize) -> Result<Self, LearnerError> {
        Ok(Self {
            view: KnowledgeView::new(model)?,
            dim,
            values: Vec::new(),
            weights: Vec::new(),
            settled_sum: vec![0.0; dim],
            settled_lag: 0.0,
            flags: Vec::new(),
        })
    }

    pub fn view(&self) -> &KnowledgeView {
        &self.view
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn value(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    pub fn push(&mut self, t: u64, origin: NodeId, value: &[f64], weight: f64) -> Result<usize, LearnerError> {
        if value.len() != self.dim {
            return Err(LearnerError::Dimension { expected: self.dim, got: value.len() });
        }
        let idx = self.view.push(t, origin)?;
        self.values.extend_from_slice(value);
        self.weights.push(weight);
        Ok(idx)
    }

    fn own_lag(&self, j: usize, avail: impl Fn(usize) -> bool) -> f64 {
        let w = self.weights[j];
        let missing: f64 = self.view.missing_at_issue(j).iter().filter(|&&i| avail(i)).map(|&i| self.weights[i]).sum();
        w * w + 2.0 * w * missing
    }

    pub fn query(&mut self, t: u64, node: NodeId) -> Result<AvailableSums, LearnerError> {
        if !self.view.model().contains(node) {
            return Err(TransportError::NotMember(node).into());
        }
        for j in self.view.settle(t) {
            let lag = self.own_lag(j, |_| true);
            self.settled_lag += lag;
            for (acc, x) in self.settled_sum.iter_mut().zip(&self.values[j * self.dim..(j + 1) * self.dim]) {
                *acc += x;
            }
        }
        let settled = self.view.settled();
        let pending = self.view.pending();
        self.flags.clear();
        self.flags.extend(pending.clone().map(|j| self.view.time(j) < t && self.view.available(j, node, t)));
        let mut out = AvailableSums { sum: self.settled_sum.clone(), lag: self.settled_lag, count: settled };
        let flags = &self.flags;
        let avail = |i: usize| i < settled || flags[i - settled];
        for j in pending {
            if !flags[j - settled] {
                continue;
            }
            out.count += 1;
            out.lag += self.own_lag(j, avail);
            for (acc, x) in out.sum.iter_mut().zip(self.value(j)) {
                *acc += x;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn matches_direct_sums_on_a_path() {
        let g = Graph::path(4).unwrap();
        let model = DeliveryModel::for_graph(&g, 3).unwrap();
        let mut acc = LagAccumulator::new(model, 1).unwrap();
        let origins = [0, 3, 3, 1, 0, 2, 3, 0];
        let xs = [0.5, -1.0, 0.25, 2.0, -0.75, 1.5, 0.1, -0.3];
        for (i, (&o, &x)) in origins.iter().zip(&xs).enumerate() {
            let t = i as u64 + 1;
            let node = o;
            let got = acc.query(t, node).unwrap();
            let set = acc.view().available_set(node, t);
            let sum: f64 = set.iter().map(|&s| xs[s]).sum();
            let lag: f64 = set
                .iter()
                .map(|&s| {
                    let m: f64 =
                        acc.view().missing_at_issue(s).iter().filter(|i| set.contains(i)).map(|&i| xs[i].abs()).sum();
                    xs[s] * xs[s] + 2.0 * xs[s].abs() * m
                })
                .sum();
            assert_eq!(got.count, set.len(), "round {t}");
            assert!((got.sum[0] - sum).abs() < 1e-12);
            assert!((got.lag - lag).abs() < 1e-12);
            acc.push(t, o, &[x], x.abs()).unwrap();
        }
    }
}
