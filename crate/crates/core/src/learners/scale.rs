//! One-dimensional comparator-adaptive betting on `v ≥ 0` under delays.
//!
//! The prediction is `v_t = (ν/Z) ∫_0^a η exp(-η² - Lη - (V-1)η²) dη`, where
//! `L = Σ_{s∈S}(ĥ_s+ε)` and `V = 1 + Σ_{s∈S}((ĥ_s+ε)² + 2 ζ̂(s))` run over the
//! gradients available at the active node and
//! `ζ̂(s) = |ĥ_s+ε| Σ_{i∈γ(s)∩S} |ĥ_i+ε|`.

use serde::{Deserialize, Serialize};

use super::accumulator::LagAccumulator;
use super::integral::{ln_moments, ln_normalizer, quadrature_ln_moment};
use super::LearnerError;
use crate::graph::NodeId;
use crate::transport::DeliveryModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTuning {
    /// Prior mass `ν`.
    pub nu: f64,
    /// Bound `ε` on `|ĥ_t - h_t|`.
    pub eps: f64,
    /// Bound `Ĝ` on `|ĥ_t|`.
    pub grad_bound: f64,
    /// Delay bound `D` used in the integration limit.
    pub delay_bound: usize,
}

impl ScaleTuning {
    /// `a = 1 / ((Ĝ+ε) · 20 · (1+2D))`.
    pub fn upper_limit(&self) -> Result<f64, LearnerError> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(LearnerError::DegenerateTuning(format!("prior mass {} must be finite and >= 0", self.nu)));
        }
        if !(self.eps >= 0.0 && self.grad_bound > 0.0) {
            return Err(LearnerError::DegenerateTuning(format!(
                "need eps >= 0 and a positive gradient bound, got eps={} G={}",
                self.eps, self.grad_bound
            )));
        }
        let denom = (self.grad_bound + self.eps) * 20.0 * (1.0 + 2.0 * self.delay_bound as f64);
        let a = 1.0 / denom;
        if !denom.is_finite() || !(a > f64::EPSILON) {
            return Err(LearnerError::DegenerateTuning(format!("integration limit {a} underflows")));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleState {
    pub v: f64,
    pub l: f64,
    pub big_v: f64,
    pub available: usize,
}

#[derive(Debug, Clone)]
pub struct ScaleLearner {
    tuning: ScaleTuning,
    a: f64,
    ln_z: f64,
    acc: LagAccumulator,
    cross_check: Option<f64>,
    global_l: f64,
    global_v: f64,
}

impl ScaleLearner {
    pub fn new(tuning: ScaleTuning, model: DeliveryModel) -> Result<Self, LearnerError> {
        let a = tuning.upper_limit()?;
        Self::with_upper_limit(tuning, model, a)
    }

    /// Uses an explicit `a` instead of the tuned one.
    pub fn with_upper_limit(tuning: ScaleTuning, model: DeliveryModel, a: f64) -> Result<Self, LearnerError> {
        tuning.upper_limit()?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(LearnerError::DegenerateTuning(format!("integration limit {a}")));
        }
        Ok(Self {
            tuning,
            a,
            ln_z: ln_normalizer(a),
            acc: LagAccumulator::new(model, 1)?,
            cross_check: None,
            global_l: 0.0,
            global_v: 1.0,
        })
    }

    /// Compares every closed-form prediction against adaptive quadrature.
    pub fn with_cross_check(mut self, rel_tol: f64) -> Self {
        self.cross_check = Some(rel_tol);
        self
    }

    pub fn tuning(&self) -> &ScaleTuning {
        &self.tuning
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn accumulator(&self) -> &LagAccumulator {
        &self.acc
    }

    /// `ν E_ρ[η exp(-Lη - (V-1)η²)]`.
    pub fn mean_for(&self, l: f64, big_v: f64) -> Result<f64, LearnerError> {
        if self.tuning.nu == 0.0 {
            return Ok(0.0);
        }
        let m = ln_moments(l, big_v, self.a)?;
        if let Some(tol) = self.cross_check {
            let q = quadrature_ln_moment(l, big_v, self.a, 1, tol * 1e-3);
            if (q - m.ln_j1).abs() > tol {
                return Err(LearnerError::NumericalInstability(format!(
                    "closed form and quadrature disagree at L={l}, V={big_v}: {} vs {q}",
                    m.ln_j1
                )));
            }
        }
        finite(self.tuning.nu * (m.ln_j1 - self.ln_z).exp(), "prediction")
    }

    /// `ν E_ρ[exp(-Lη - (V-1)η²)]`.
    pub fn potential_for(&self, l: f64, big_v: f64) -> Result<f64, LearnerError> {
        if self.tuning.nu == 0.0 {
            return Ok(0.0);
        }
        let m = ln_moments(l, big_v, self.a)?;
        finite(self.tuning.nu * (m.ln_j0 - self.ln_z).exp(), "potential")
    }

    pub fn predict(&mut self, t: u64, node: NodeId) -> Result<ScaleState, LearnerError> {
        let sums = self.acc.query(t, node)?;
        let l = sums.sum[0];
        let big_v = 1.0 + sums.lag;
        Ok(ScaleState { v: self.mean_for(l, big_v)?, l, big_v, available: sums.count })
    }

    /// Stores `ĥ_t` issued at `origin` in round `t`.
    pub fn record(&mut self, t: u64, origin: NodeId, hhat: f64) -> Result<(), LearnerError> {
        let x = hhat + self.tuning.eps;
        let idx = self.acc.push(t, origin, &[x], x.abs())?;
        let missing: f64 = self.acc.view().missing_at_issue(idx).iter().map(|&i| self.acc.weight(i)).sum();
        self.global_l += x;
        self.global_v += x * x + 2.0 * x.abs() * missing;
        Ok(())
    }

    /// Full-information potential `Φ_t` over every recorded gradient.
    pub fn potential(&self) -> Result<f64, LearnerError> {
        self.potential_for(self.global_l, self.global_v)
    }

    pub fn global_sums(&self) -> (f64, f64) {
        (self.global_l, self.global_v)
    }
}

fn finite(x: f64, what: &str) -> Result<f64, LearnerError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(LearnerError::NumericalInstability(format!("{what} is not finite")))
    }
}
