//! Black-box classifiers that map a graph or graph series to a probability
//! vector.
//!
//! Built-in rule oracles live in [`oracles`]; [`external`] speaks the JSON
//! Lines wire protocol defined in [`protocol`] to a model running in another
//! process.

pub mod external;
pub mod oracles;
pub mod protocol;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError};
use crate::graph::Target;

pub use external::{Endpoint, ExternalModel};
pub use oracles::{BridgeOracle, BridgeRule, HubOracle, HubRule, PatternOracle, SeriesChunkOracle};

/// Tolerance on the probability-simplex check.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Graph,
    Series,
}

impl InputKind {
    pub fn name(self) -> &'static str {
        match self {
            InputKind::Graph => "graph",
            InputKind::Series => "series",
        }
    }

    pub fn of(target: &Target<'_>) -> Self {
        match target {
            Target::Graph(_) => InputKind::Graph,
            Target::Series(_) => InputKind::Series,
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "graph" => Ok(InputKind::Graph),
            "series" => Ok(InputKind::Series),
            _ => Err(Error::InvalidArgument(format!("unknown input kind `{s}`"))),
        }
    }
}

/// The function being explained. Implementations must be deterministic.
pub trait BlackBoxModel: Send + Sync {
    fn n_classes(&self) -> usize;

    fn accepts(&self) -> InputKind;

    /// Raw class probabilities; validated by [`predict`].
    fn evaluate(&self, input: Target<'_>) -> Result<Vec<f64>, ModelError>;
}

impl<M: BlackBoxModel + ?Sized> BlackBoxModel for Box<M> {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn accepts(&self) -> InputKind {
        (**self).accepts()
    }

    fn evaluate(&self, input: Target<'_>) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(input)
    }
}

impl<M: BlackBoxModel + ?Sized> BlackBoxModel for std::sync::Arc<M> {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn accepts(&self) -> InputKind {
        (**self).accepts()
    }

    fn evaluate(&self, input: Target<'_>) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(input)
    }
}

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PredictionVector(Vec<f64>);

impl PredictionVector {
    pub fn new(probs: Vec<f64>, n_classes: usize) -> Result<Self, ModelError> {
        if probs.len() != n_classes {
            return Err(ModelError::ClassMismatch {
                expected: n_classes,
                actual: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ModelError::NonSimplex(probs));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Index of the most probable class (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Evaluates `model` on `input`, checking the input kind and the simplex
/// constraint on the output.
pub fn predict<M: BlackBoxModel + ?Sized>(model: &M, input: Target<'_>) -> Result<PredictionVector, ModelError> {
    let kind = InputKind::of(&input);
    if kind != model.accepts() {
        return Err(ModelError::InputKind {
            expected: model.accepts().name(),
            actual: kind.name(),
        });
    }
    PredictionVector::new(model.evaluate(input)?, model.n_classes())
}
