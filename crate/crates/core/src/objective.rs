//! The black-box interface every optimizer talks to.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::SearchSpace;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ObjectiveError(pub String);

impl ObjectiveError {
    pub fn new(msg: impl Into<String>) -> Self {
        ObjectiveError(msg.into())
    }
}

/// Affine map applied to observations before they reach a learned policy:
/// the policy sees `(y − shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationScale {
    pub shift: f64,
    pub scale: f64,
}

impl Default for ObservationScale {
    fn default() -> Self {
        ObservationScale { shift: 0.0, scale: 1.0 }
    }
}

impl ObservationScale {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    /// Mean and standard deviation of `ys`; falls back to unit scale when the
    /// sample is constant.
    pub fn standardizing(ys: &[f64]) -> Self {
        if ys.is_empty() {
            return Self::default();
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        ObservationScale { shift: mean, scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 } }
    }
}

/// A function minimized through point evaluations only.
pub trait Objective {
    fn space(&self) -> &SearchSpace;

    /// Evaluates at a point in the native coordinates of [`Objective::space`],
    /// already rounded on integer dimensions.
    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError>;

    fn observation_scale(&self) -> ObservationScale {
        ObservationScale::default()
    }

    fn name(&self) -> String {
        "objective".into()
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    space: SearchSpace,
    scale: ObservationScale,
    f: F,
}

impl<F: FnMut(&[f64]) -> f64> FnObjective<F> {
    pub fn new(space: SearchSpace, f: F) -> Self {
        FnObjective { space, scale: ObservationScale::default(), f }
    }

    pub fn with_scale(mut self, scale: ObservationScale) -> Self {
        self.scale = scale;
        self
    }
}

impl<F: FnMut(&[f64]) -> f64> Objective for FnObjective<F> {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&mut self, x: &[f64]) -> Result<f64, ObjectiveError> {
        let y = (self.f)(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(ObjectiveError(format!("non-finite value {y} at {x:?}")))
        }
    }

    fn observation_scale(&self) -> ObservationScale {
        self.scale
    }

    fn name(&self) -> String {
        "closure".into()
    }
}
