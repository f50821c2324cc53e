use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bce, MlpArchitecture, MlpModel};
use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::par;
use crate::param::ParamVector;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSelection {
    BestValAccuracy,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub checkpoint_selection: CheckpointSelection,
}

impl Default for TrainConfig {
    /// The tabular setup: Adam at 1e-4, batch 256, 100 epochs, best
    /// validation accuracy checkpoint.
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-4,
            optimizer: Optimizer::Adam,
            seed: 0,
            checkpoint_selection: CheckpointSelection::BestValAccuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were returned.
    pub selected_epoch: usize,
}

pub fn train_erm(train: &TabularDataset, val: &TabularDataset, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<MlpModel> {
    train_erm_logged(train, val, arch, cfg).map(|(m, _)| m)
}

/// Minibatch ERM on mean binary cross-entropy.
///
/// The initial parameters and every epoch's shuffle come from one ChaCha
/// stream seeded with `cfg.seed`. Batch gradients are reduced in the fixed
/// block order of [`par::block_sum`], so the result does not depend on the
/// number of threads.
pub fn train_erm_logged(
    train: &TabularDataset,
    val: &TabularDataset,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    arch.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::input("training and validation sets must be non-empty"));
    }
    if train.n_features() != arch.input_dim || val.n_features() != arch.input_dim {
        return Err(Error::input(format!(
            "architecture expects {} features; train has {}, val has {}",
            arch.input_dim,
            train.n_features(),
            val.n_features()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::init_with(arch.clone(), &mut rng)?;
    let dim = model.dim();
    let mut opt = OptimizerState::new(cfg, dim);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut log = TrainLog {
        epochs: Vec::with_capacity(cfg.epochs),
        selected_epoch: 0,
    };
    let mut best: Option<(f64, ParamVector)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (grad, loss) = batch_gradient(&model, train, batch);
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(&mut model.params, &grad);
            if !model.params.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: b });
            }
        }
        let val_accuracy = model.accuracy(val)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy,
        });
        let improved = best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc);
        if cfg.checkpoint_selection == CheckpointSelection::BestValAccuracy && improved {
            best = Some((val_accuracy, model.params.clone()));
            log.selected_epoch = epoch;
        }
    }

    if let (CheckpointSelection::BestValAccuracy, Some((_, params))) = (cfg.checkpoint_selection, best) {
        model.params = params;
    } else {
        log.selected_epoch = cfg.epochs;
    }
    Ok((model, log))
}

/// Mean loss gradient and mean loss over the rows listed in `batch`.
fn batch_gradient(model: &MlpModel, data: &TabularDataset, batch: &[usize]) -> (ParamVector, f64) {
    // slot 0 of the accumulator carries the loss so one reduction covers both
    let dim = model.dim();
    let sum = par::block_sum(batch.len(), dim + 1, |range, acc| {
        let mut scratch = model.scratch();
        let (loss, grad) = acc.split_first_mut().expect("accumulator has a loss slot");
        for &n in &batch[range] {
            let y = data.label(n);
            let p = model.add_loss_grad(data.row(n), y, 1.0, grad, &mut scratch);
            *loss += bce(p, y);
        }
    });
    let inv = 1.0 / batch.len() as f64;
    let loss = sum[0] * inv;
    let mut grad = ParamVector::from_vec(sum[1..].to_vec());
    grad.scale(inv);
    (grad, loss)
}

enum OptimizerState {
    Sgd { lr: f64 },
    Adam { lr: f64, t: i32, m: Vec<f64>, v: Vec<f64> },
}

impl OptimizerState {
    fn new(cfg: &TrainConfig, dim: usize) -> Self {
        match cfg.optimizer {
            Optimizer::Sgd => OptimizerState::Sgd { lr: cfg.learning_rate },
            Optimizer::Adam => OptimizerState::Adam {
                lr: cfg.learning_rate,
                t: 0,
                m: vec![0.0; dim],
                v: vec![0.0; dim],
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            OptimizerState::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            OptimizerState::Adam { lr, t, m, v } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t);
                let c2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    params[i] -= *lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
