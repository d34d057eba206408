//! Delay-tolerant learners on the unit ball.

use super::accumulator::LagAccumulator;
use super::LearnerError;
use crate::encoding::norm;
use crate::graph::NodeId;
use crate::transport::DeliveryModel;

pub trait DirectionLearner: std::fmt::Debug + Send {
    fn dim(&self) -> usize;
    /// Unit-ball prediction for `node` in round `t`.
    fn predict(&mut self, t: u64, node: NodeId) -> Result<Vec<f64>, LearnerError>;
    fn record(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<(), LearnerError>;
}

/// Lazy projection: `z = Π_B(-η Θ)` with `Θ = Σ_{s∈S} ĝ_s`,
/// `η = c / sqrt(1 + Λ̂)` and `Λ̂` the available lag of the `ĝ_s`.
#[derive(Debug, Clone)]
pub struct LazyProjection {
    c: f64,
    acc: LagAccumulator,
}

impl LazyProjection {
    pub fn new(model: DeliveryModel, dim: usize, c: f64) -> Result<Self, LearnerError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(LearnerError::DegenerateTuning(format!("step scale {c} must be positive")));
        }
        Ok(Self { c, acc: LagAccumulator::new(model, dim)? })
    }

    /// Step size and accumulated gradient for a query.
    pub fn state(&mut self, t: u64, node: NodeId) -> Result<(f64, Vec<f64>, f64), LearnerError> {
        let sums = self.acc.query(t, node)?;
        Ok((self.c / (1.0 + sums.lag).sqrt(), sums.sum, sums.lag))
    }
}

/// Euclidean projection onto the unit ball.
pub fn project_unit_ball(mut x: Vec<f64>) -> Vec<f64> {
    let n = norm(&x);
    if n > 1.0 {
        for v in &mut x {
            *v /= n;
        }
    }
    x
}

impl DirectionLearner for LazyProjection {
    fn dim(&self) -> usize {
        self.acc.dim()
    }

    fn predict(&mut self, t: u64, node: NodeId) -> Result<Vec<f64>, LearnerError> {
        let (eta, theta, _) = self.state(t, node)?;
        Ok(project_unit_ball(theta.iter().map(|x| -eta * x).collect()))
    }

    fn record(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<(), LearnerError> {
        self.acc.push(t, origin, ghat, norm(ghat))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn single() -> LazyProjection {
        let g = Graph::path(1).unwrap();
        LazyProjection::new(DeliveryModel::for_graph(&g, 1).unwrap(), 2, 1.0).unwrap()
    }

    #[test]
    fn zero_sum_gives_origin() {
        let mut d = single();
        assert_eq!(d.predict(1, 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn large_sum_is_projected() {
        let mut d = single();
        d.record(1, 0, &[10.0, 0.0]).unwrap();
        d.record(2, 0, &[10.0, 0.0]).unwrap();
        // η = 1/sqrt(201), so |ηΘ| ≈ 1.41.
        let z = d.predict(3, 0).unwrap();
        assert_eq!(z, vec![-1.0, 0.0]);
    }

    #[test]
    fn unprojected_step() {
        let mut d = single();
        d.record(1, 0, &[0.3, -0.4]).unwrap();
        let z = d.predict(2, 0).unwrap();
        let eta = 1.0 / 1.25f64.sqrt();
        assert!((z[0] + eta * 0.3).abs() < 1e-15 && (z[1] - eta * 0.4).abs() < 1e-15);
    }
}
