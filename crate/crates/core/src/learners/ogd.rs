//! Unprojected online gradient descent on the available gradients.

use super::accumulator::LagAccumulator;
use super::{LearnerError, OnlineLearner};
use crate::encoding::norm;
use crate::graph::NodeId;
use crate::transport::DeliveryModel;

/// `w_t = -η Σ_{s∈S_{I_t}(t)} ĝ_s` with a fixed learning rate.
#[derive(Debug, Clone)]
pub struct Ogd {
    eta: f64,
    acc: LagAccumulator,
}

impl Ogd {
    pub fn new(model: DeliveryModel, dim: usize, eta: f64) -> Result<Self, LearnerError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(LearnerError::DegenerateTuning(format!("learning rate {eta} must be positive")));
        }
        Ok(Self { eta, acc: LagAccumulator::new(model, dim)? })
    }
}

impl OnlineLearner for Ogd {
    fn dim(&self) -> usize {
        self.acc.dim()
    }

    fn predict(&mut self, t: u64, node: NodeId) -> Result<Vec<f64>, LearnerError> {
        let sums = self.acc.query(t, node)?;
        Ok(sums.sum.iter().map(|x| -self.eta * x).collect())
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

    #[test]
    fn steps_against_the_sum() {
        let g = Graph::path(1).unwrap();
        let mut o = Ogd::new(DeliveryModel::for_graph(&g, 1).unwrap(), 1, 0.1).unwrap();
        assert_eq!(o.predict(1, 0).unwrap(), vec![0.0]);
        o.record(1, 0, &[1.0]).unwrap();
        o.predict(2, 0).unwrap();
        o.record(2, 0, &[2.0]).unwrap();
        let w = o.predict(3, 0).unwrap();
        assert!((w[0] + 0.3).abs() < 1e-15);
    }
}
