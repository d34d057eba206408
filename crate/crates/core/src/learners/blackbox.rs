//! Scale times direction: `w_t = v_t z_t`, with `ĝ_t` fed to the direction
//! learner and `ĥ_t = ⟨z_t, ĝ_t⟩` fed to the scale learner.

use super::direction::DirectionLearner;
use super::scale::{ScaleLearner, ScaleState};
use super::{LearnerError, OnlineLearner};
use crate::graph::NodeId;

pub fn combine(v: f64, z: &[f64]) -> Vec<f64> {
    z.iter().map(|x| v * x).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackPrediction {
    pub scale: ScaleState,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug)]
pub struct LearnerStack {
    scale: ScaleLearner,
    direction: Box<dyn DirectionLearner>,
    last: Option<(u64, Vec<f64>)>,
}

impl LearnerStack {
    pub fn new(scale: ScaleLearner, direction: Box<dyn DirectionLearner>) -> Self {
        Self { scale, direction, last: None }
    }

    pub fn scale(&self) -> &ScaleLearner {
        &self.scale
    }

    pub fn predict_full(&mut self, t: u64, node: NodeId) -> Result<StackPrediction, LearnerError> {
        let z = self.direction.predict(t, node)?;
        let scale = self.scale.predict(t, node)?;
        let w = combine(scale.v, &z);
        self.last = Some((t, z.clone()));
        Ok(StackPrediction { scale, z, w })
    }

    /// Feeds the decoded gradient of round `t` and returns `ĥ_t`.
    pub fn record_gradient(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<f64, LearnerError> {
        let z = match self.last.take() {
            Some((round, z)) if round == t => z,
            other => return Err(LearnerError::RecordWithoutPrediction { got: t, expected: other.map(|(r, _)| r) }),
        };
        if ghat.len() != z.len() {
            return Err(LearnerError::Dimension { expected: z.len(), got: ghat.len() });
        }
        let hhat = dot(&z, ghat);
        self.direction.record(t, origin, ghat)?;
        self.scale.record(t, origin, hhat)?;
        Ok(hhat)
    }
}

impl OnlineLearner for LearnerStack {
    fn dim(&self) -> usize {
        self.direction.dim()
    }

    fn predict(&mut self, t: u64, node: NodeId) -> Result<Vec<f64>, LearnerError> {
        Ok(self.predict_full(t, node)?.w)
    }

    fn record(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<(), LearnerError> {
        self.record_gradient(t, origin, ghat).map(|_| ())
    }
}
