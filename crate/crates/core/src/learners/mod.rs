//! Comparator-adaptive learners that tolerate delayed, approximate gradients.
//!
//! [`scale::ScaleLearner`] bets on a non-negative scalar, the direction
//! learners in [`direction`] play in the unit ball, and
//! [`blackbox::LearnerStack`] multiplies the two.

pub mod accumulator;
pub mod blackbox;
pub mod direction;
pub mod inequalities;
pub mod integral;
pub mod ogd;
pub mod scale;

use thiserror::Error;

use crate::graph::NodeId;
use crate::transport::TransportError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("numerical instability: {0}")]
    NumericalInstability(String),
    #[error("degenerate tuning: {0}")]
    DegenerateTuning(String),
    #[error("{0} is outside the valid domain")]
    DomainViolation(String),
    #[error("record for round {got} does not match the last prediction (round {expected:?})")]
    RecordWithoutPrediction { got: u64, expected: Option<u64> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// A learner driven round by round: `predict` for the active node, then
/// `record` with the decoded gradient of the same round.
pub trait OnlineLearner {
    fn dim(&self) -> usize;
    fn predict(&mut self, t: u64, node: NodeId) -> Result<Vec<f64>, LearnerError>;
    fn record(&mut self, t: u64, origin: NodeId, ghat: &[f64]) -> Result<(), LearnerError>;
}
