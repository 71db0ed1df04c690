use rand::seq::SliceRandom;
use serde::Serialize;

use super::{DimError, LogisticModel, Model, ModelKind, Optimizer, RnnModel, TrainConfig};
use crate::eval::auc;
use crate::features::ModelInput;
use crate::rng::{self, tags};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation AUC.
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("validation split needs both classes to compute AUC")]
    SingleClassValidation,
    #[error("training split has only one class")]
    SingleClassTraining,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Dims(#[from] DimError),
}

/// Per-class loss weights `(negative, positive)` that give both classes
/// equal total weight while keeping the mean weight at 1.
pub fn class_weights(labels: &[bool], enabled: bool) -> (f64, f64) {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n - pos;
    if !enabled || pos == 0.0 || neg == 0.0 {
        return (1.0, 1.0);
    }
    (n / (2.0 * neg), n / (2.0 * pos))
}

/// Index batches for one epoch. A trailing batch of one is folded into
/// the previous batch so batch-norm always sees at least two samples.
fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tags::BATCH_ORDER, epoch as i64));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
}

pub fn init_model(kind: ModelKind, n_features: usize, n_static: usize, cfg: &TrainConfig) -> Model {
    let mut r = rng::stream(cfg.seed, tags::MODEL_INIT, 0);
    match kind {
        ModelKind::Logistic => Model::Logistic(LogisticModel::init(n_features, n_static, &mut r)),
        ModelKind::Rnn => Model::Rnn(RnnModel::init(
            n_features,
            n_static,
            cfg.hidden_size,
            cfg.bn_momentum,
            cfg.bn_eps,
            &mut r,
        )),
    }
}

/// Mini-batch training with early stopping on validation AUC.
pub fn train(
    kind: ModelKind,
    train_set: &[ModelInput],
    val_set: &[ModelInput],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    let first = train_set.first().ok_or(TrainError::EmptySplit("training"))?;
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let val_labels: Vec<bool> = val_set.iter().map(|x| x.label).collect();
    if val_labels.iter().all(|&l| l) || val_labels.iter().all(|&l| !l) {
        return Err(TrainError::SingleClassValidation);
    }
    let train_labels: Vec<bool> = train_set.iter().map(|x| x.label).collect();
    if train_labels.iter().all(|&l| l) || train_labels.iter().all(|&l| !l) {
        return Err(TrainError::SingleClassTraining);
    }

    let mut model = init_model(kind, first.n_features, first.static_values.len(), cfg);
    for x in train_set.iter().chain(val_set) {
        model.check_dims(x)?;
    }
    let (w_neg, w_pos) = class_weights(&train_labels, cfg.class_weighting);
    let n_params = model.params().len();
    let mut opt = OptimizerState::new(n_params);
    let mut grad = vec![0.0; n_params];

    let mut history = Vec::new();
    let mut best: Option<(Model, usize, f64)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for (bi, idx) in epoch_batches(train_set.len(), cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let batch: Vec<&ModelInput> = idx.iter().map(|&i| &train_set[i]).collect();
            let weights: Vec<f64> = batch.iter().map(|x| if x.label { w_pos } else { w_neg }).collect();
            let loss = match &mut model {
                Model::Logistic(m) => m.loss(&batch, &weights, cfg.l2, Some(&mut grad)),
                Model::Rnn(m) => {
                    let (loss, stats) = m.loss(&batch, &weights, cfg.l2, Some(&mut grad));
                    m.update_running_stats(&stats);
                    loss
                }
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(model.params_mut(), &grad, cfg);
        }
        let scores = model.predict_many(val_set)?;
        let val_auc = auc(&scores, &val_labels).map_err(|_| TrainError::SingleClassValidation)?;
        history.push(EpochStats {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            val_auc,
        });
        if best.as_ref().is_none_or(|(_, _, b)| val_auc > *b) {
            best = Some((model.clone(), epoch, val_auc));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (model, best_epoch, best_val_auc) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_auc,
    })
}
