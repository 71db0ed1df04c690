//! Logistic regression and Elman RNN + static MLP classifiers with
//! hand-written backpropagation.

pub mod checkpoint;
pub mod gradcheck;
pub mod logistic;
pub mod rnn;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use logistic::LogisticModel;
pub use rnn::{RnnModel, MLP_DEPTH, MLP_WIDTH};
pub use train::{class_weights, init_model, train, EpochStats, TrainError, TrainOutcome};

use crate::features::ModelInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Rnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "rnn" => Ok(ModelKind::Rnn),
            other => Err(format!("unknown model kind {other:?} (expected logistic or rnn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
    pub hidden_size: usize,
    pub optimizer: Optimizer,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Inverse-frequency sample weights in the loss.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            l2: 1e-4,
            hidden_size: 64,
            optimizer: Optimizer::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size as f64),
            ("max_epochs", self.max_epochs as f64),
            ("patience", self.patience as f64),
            ("hidden_size", self.hidden_size as f64),
            ("adam_eps", self.adam_eps),
            ("bn_eps", self.bn_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(format!("l2 must be non-negative, got {}", self.l2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("input has {got_features} hourly features and {got_static} statics, model expects {want_features} and {want_static}")]
pub struct DimError {
    pub want_features: usize,
    pub want_static: usize,
    pub got_features: usize,
    pub got_static: usize,
}

/// A trained classifier of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Logistic(LogisticModel),
    Rnn(RnnModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Logistic(_) => ModelKind::Logistic,
            Model::Rnn(_) => ModelKind::Rnn,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Model::Logistic(m) => (m.n_features, m.n_static),
            Model::Rnn(m) => (m.n_features, m.n_static),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Logistic(m) => &m.params,
            Model::Rnn(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Logistic(m) => &mut m.params,
            Model::Rnn(m) => &mut m.params,
        }
    }

    pub fn check_dims(&self, x: &ModelInput) -> Result<(), DimError> {
        let (f, s) = self.dims();
        if x.n_features == f && x.static_values.len() == s {
            Ok(())
        } else {
            Err(DimError {
                want_features: f,
                want_static: s,
                got_features: x.n_features,
                got_static: x.static_values.len(),
            })
        }
    }

    /// Probability of the positive class, inference mode.
    pub fn predict(&self, x: &ModelInput) -> Result<f64, DimError> {
        self.check_dims(x)?;
        Ok(match self {
            Model::Logistic(m) => m.predict(x),
            Model::Rnn(m) => m.predict(x),
        })
    }

    pub fn predict_many(&self, xs: &[ModelInput]) -> Result<Vec<f64>, DimError> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Weighted mean BCE plus L2 over weight matrices; BN uses batch
    /// statistics. Writes the gradient into `grad` when given.
    pub fn loss(&self, batch: &[&ModelInput], weights: &[f64], l2: f64, grad: Option<&mut [f64]>) -> f64 {
        match self {
            Model::Logistic(m) => m.loss(batch, weights, l2, grad),
            Model::Rnn(m) => m.loss(batch, weights, l2, grad).0,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, stable for large |z|.
pub(crate) fn bce_with_logit(z: f64, y: bool) -> f64 {
    let y = y as u8 as f64;
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Xavier/Glorot uniform draw.
pub(crate) fn xavier<R: rand::Rng>(rng: &mut R, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-limit..=limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_loss() {
        assert!((bce_with_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logit(800.0, true) < 1e-300);
        assert!((bce_with_logit(-800.0, true) - 800.0).abs() < 1e-9);
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let toml_cfg: TrainConfig = toml::from_str("learning_rate = 0.01\noptimizer = \"sgd\"").unwrap();
        assert_eq!(toml_cfg.optimizer, Optimizer::Sgd);
        assert_eq!(toml_cfg.hidden_size, 64);
    }
}
