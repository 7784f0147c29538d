//! Normalized-MSE loss, first-order optimizers and the mini-batch training loop.

mod linear;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Param};
use crate::numerics::{Matrix, Scaler};

pub use linear::{fit_linear, RIDGE_LAMBDA};
pub use model::{ModelSeeds, TrainedModel, MODEL_FORMAT_VERSION};
pub use train::{train, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rho: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rho: 0.9,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Rmsprop, learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(params: &[Param]) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.values.len()]).collect();
        Self {
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Applies one update to `params` in place.
pub fn step(
    state: &mut OptimizerState,
    params: &mut [Param],
    grads: &Gradients,
    config: &OptimizerConfig,
) -> Result<()> {
    let shapes_ok = grads.values.len() == params.len()
        && state.first.len() == params.len()
        && params.iter().enumerate().all(|(i, p)| {
            grads.values[i].len() == p.values.len() && state.first[i].len() == p.values.len()
        });
    if !shapes_ok {
        return Err(Error::StateShapeMismatch);
    }
    state.steps += 1;
    let lr = config.learning_rate;
    match config.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(&grads.values) {
                for (w, gv) in p.values.iter_mut().zip(g) {
                    *w -= lr * gv;
                }
            }
        }
        OptimizerKind::Adam => {
            let t = state.steps as i32;
            let c1 = 1.0 - config.beta1.powi(t);
            let c2 = 1.0 - config.beta2.powi(t);
            for (i, (p, g)) in params.iter_mut().zip(&grads.values).enumerate() {
                let (m, v) = (&mut state.first[i], &mut state.second[i]);
                for (j, (w, &gv)) in p.values.iter_mut().zip(g).enumerate() {
                    m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gv;
                    v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gv * gv;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            }
        }
        OptimizerKind::Rmsprop => {
            for (i, (p, g)) in params.iter_mut().zip(&grads.values).enumerate() {
                let v = &mut state.second[i];
                for (j, (w, &gv)) in p.values.iter_mut().zip(g).enumerate() {
                    v[j] = config.rho * v[j] + (1.0 - config.rho) * gv * gv;
                    *w -= lr * gv / (v[j].sqrt() + config.epsilon);
                }
            }
        }
    }
    Ok(())
}

/// Mean squared error over all entries, measured in the scaler's standardized space.
pub fn loss_normalized_mse(pred: &Matrix, truth: &Matrix, scaler: &Scaler) -> Result<f64> {
    if pred.shape() != truth.shape() || truth.cols() != scaler.dim() {
        return Err(Error::ShapeMismatch(format!(
            "pred {:?}, truth {:?}, scaler width {}",
            pred.shape(),
            truth.shape(),
            scaler.dim()
        )));
    }
    let n = pred.rows() * pred.cols();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for (p, t) in pred.row_iter().zip(truth.row_iter()) {
        for (j, (a, b)) in p.iter().zip(t).enumerate() {
            let d = (a - b) / scaler.scale(j);
            total += d * d;
        }
    }
    Ok(total / n as f64)
}
