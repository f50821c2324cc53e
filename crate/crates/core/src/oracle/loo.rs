use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::fairness::{surrogate, FairnessMetricKind};
use crate::model::{sigmoid, MlpArchitecture, MlpModel};
use crate::par;
use crate::param::{self, ParamVector};

pub const MAX_TRAIN: usize = 1000;
pub const MAX_INDICES: usize = 200;

const ARMIJO_C: f64 = 1e-4;

/// Full-batch gradient descent on
/// `(1/N) sum_n w_n l_n(theta) + (l2 / 2) |theta|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTrainConfig {
    pub l2: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OracleTrainConfig {
    fn default() -> Self {
        OracleTrainConfig {
            l2: 1e-3,
            grad_tol: 1e-8,
            max_iters: 200_000,
            seed: 0,
        }
    }
}

/// Numerically stable `log(1 + e^z) - y z`.
fn logistic_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Objective value and gradient at `params`.
fn value_grad(model: &MlpModel, data: &TabularDataset, weights: &[f64], l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let sum = par::block_sum(data.len(), params.len() + 1, |range, acc| {
        let mut scratch = model.scratch();
        let (loss, grad) = acc.split_first_mut().expect("loss slot");
        for n in range {
            let w = weights[n];
            if w == 0.0 {
                continue;
            }
            let y = f64::from(data.label(n));
            let z = model.backprop_with(params, data.row(n), grad, &mut scratch, |z| w * (sigmoid(z) - y));
            *loss += w * logistic_loss(z, y);
        }
    });
    let inv = 1.0 / data.len() as f64;
    let value = sum[0] * inv + 0.5 * l2 * param::dot(params, params);
    let grad = sum[1..].iter().zip(params).map(|(g, p)| g * inv + l2 * p).collect();
    (value, grad)
}

/// Minimizes the weighted objective from `start`. Steps are Barzilai-Borwein
/// proposals safeguarded by Armijo backtracking. Returns the fitted model
/// and the number of iterations.
pub fn fit_full_batch(
    start: &MlpModel,
    data: &TabularDataset,
    weights: &[f64],
    cfg: &OracleTrainConfig,
) -> Result<(MlpModel, usize)> {
    if weights.len() != data.len() {
        return Err(Error::input("weight vector length does not match the dataset"));
    }
    start.check_width(data)?;
    let mut theta = start.params.to_vec();
    let (mut f, mut g) = value_grad(start, data, weights, cfg.l2, &theta);
    let mut step = 1.0;
    for it in 0..cfg.max_iters {
        let gnorm2 = param::dot(&g, &g);
        if !gnorm2.is_finite() || !f.is_finite() {
            return Err(Error::TrainingDiverged { epoch: it, batch: 0 });
        }
        if gnorm2.sqrt() <= cfg.grad_tol {
            return Ok((start.with_params(ParamVector::from_vec(theta))?, it));
        }
        let mut t = step;
        let (next, f_next, g_next) = loop {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(p, d)| p - t * d).collect();
            let (ft, gt) = value_grad(start, data, weights, cfg.l2, &trial);
            let armijo = ft <= f - ARMIJO_C * t * gnorm2;
            // near the optimum the decrease drops below rounding in f
            let flat = ft <= f + 1e-14 * f.abs() && param::dot(&gt, &gt) < gnorm2;
            if armijo || flat {
                break (trial, ft, gt);
            }
            t *= 0.5;
            if t < 1e-30 {
                return Err(Error::NotConverged {
                    iterations: it,
                    grad_norm: gnorm2.sqrt(),
                });
            }
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = param::dot(&s, &yv);
        step = if sy > 0.0 { (param::dot(&s, &s) / sy).clamp(1e-10, 1e10) } else { t * 2.0 };
        theta = next;
        f = f_next;
        g = g_next;
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        grad_norm: param::dot(&g, &g).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooEntry {
    pub index: usize,
    /// `M(retrained) - M(original)` for the fairness surrogate on val.
    pub surrogate_delta: Option<f64>,
    /// The same for the mean validation loss.
    pub loss_delta: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub base: MlpModel,
    pub base_surrogate: f64,
    pub base_val_loss: f64,
    pub entries: Vec<LooEntry>,
}

/// Exact leave-one-out changes of the validation surrogate and loss.
///
/// The base model is fitted from the seeded initialization; each
/// leave-one-out fit drops one instance (weight 0) and restarts from the
/// base optimum, which the strictly convex objective makes equivalent to
/// a cold start up to the gradient tolerance.
pub fn loo_retrain_influence(
    train: &TabularDataset,
    val: &TabularDataset,
    arch: &MlpArchitecture,
    cfg: &OracleTrainConfig,
    kind: FairnessMetricKind,
    indices: &[usize],
) -> Result<LooResult> {
    if train.len() > MAX_TRAIN {
        return Err(Error::input(format!("leave-one-out oracle is capped at {MAX_TRAIN} training rows")));
    }
    if indices.len() > MAX_INDICES {
        return Err(Error::input(format!("leave-one-out oracle is capped at {MAX_INDICES} indices")));
    }
    if let Some(&bad) = indices.iter().find(|&&n| n >= train.len()) {
        return Err(Error::input(format!("index {bad} out of range")));
    }
    let init = MlpModel::init(arch.clone(), cfg.seed)?;
    let ones = vec![1.0; train.len()];
    let (base, _) = fit_full_batch(&init, train, &ones, cfg)?;
    let base_surrogate = surrogate(&base, val, kind)?;
    let base_val_loss = base.mean_loss(val)?;

    let entries = par::map_range(indices.len(), |i| {
        let index = indices[i];
        let mut w = ones.clone();
        w[index] = 0.0;
        let outcome = fit_full_batch(&base, train, &w, cfg).and_then(|(m, _)| {
            Ok((surrogate(&m, val, kind)? - base_surrogate, m.mean_loss(val)? - base_val_loss))
        });
        match outcome {
            Ok((ds, dl)) => LooEntry {
                index,
                surrogate_delta: Some(ds),
                loss_delta: Some(dl),
                error: None,
            },
            Err(e) => LooEntry {
                index,
                surrogate_delta: None,
                loss_delta: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(LooResult {
        base,
        base_surrogate,
        base_val_loss,
        entries,
    })
}
