//! Ground truth for the approximations: finite-difference gradients,
//! synthetic quadratic objectives with known Hessians, leave-one-out
//! retraining, and the score-comparison statistics.

mod loo;
mod stats;

pub use loo::{fit_full_batch, loo_retrain_influence, LooEntry, LooResult, OracleTrainConfig};
pub use stats::{mad, median, r_squared, rescale_to_mean, spearman};

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::fairness::FairnessMetricKind;
use crate::ihvp::{IhvpConfig, Objective};
use crate::influence::fairness_influence;
use crate::model::MlpModel;

/// Max relative error of `grad` against central differences of `f` at
/// `point`, with step `1e-5 (1 + |x_i|)` and denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check(f: impl Fn(&[f64]) -> f64, grad: &[f64], point: &[f64]) -> f64 {
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let h = 1e-5 * (1.0 + point[i].abs());
        x[i] = point[i] + h;
        let up = f(&x);
        x[i] = point[i] - h;
        let down = f(&x);
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

/// `l_n(theta) = 1/2 (theta - c_n)' A (theta - c_n)` with symmetric `A`, so
/// the mean-loss Hessian is exactly `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    hessian: Vec<Vec<f64>>,
    centres: Vec<Vec<f64>>,
    params: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(hessian: Vec<Vec<f64>>, centres: Vec<Vec<f64>>, params: Vec<f64>) -> Result<Self> {
        let d = params.len();
        if d == 0 || centres.is_empty() {
            return Err(Error::input("quadratic objective needs parameters and instances"));
        }
        if hessian.len() != d || hessian.iter().any(|r| r.len() != d) || centres.iter().any(|c| c.len() != d) {
            return Err(Error::input("quadratic objective shapes disagree"));
        }
        if (0..d).any(|i| (0..i).any(|j| hessian[i][j] != hessian[j][i])) {
            return Err(Error::input("quadratic Hessian must be symmetric"));
        }
        Ok(QuadraticObjective { hessian, centres, params })
    }

    pub fn diagonal(diag: &[f64], centres: Vec<Vec<f64>>, params: Vec<f64>) -> Result<Self> {
        let d = diag.len();
        let hessian = (0..d)
            .map(|i| (0..d).map(|j| if i == j { diag[i] } else { 0.0 }).collect())
            .collect();
        Self::new(hessian, centres, params)
    }

    /// The same objective taken at `params`.
    pub fn at(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.hessian.clone(), self.centres.clone(), params)
    }

    pub fn hessian(&self) -> &[Vec<f64>] {
        &self.hessian
    }

    /// Minimizer of the mean loss: the mean centre.
    pub fn optimum(&self) -> Vec<f64> {
        let n = self.centres.len() as f64;
        let mut m = vec![0.0; self.params.len()];
        for c in &self.centres {
            for (a, b) in m.iter_mut().zip(c) {
                *a += b / n;
            }
        }
        m
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.hessian) {
            *o += crate::param::dot(row, x);
        }
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn len(&self) -> usize {
        self.centres.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn add_instance_grad(&self, n: usize, out: &mut [f64]) {
        let diff: Vec<f64> = self.params.iter().zip(&self.centres[n]).map(|(t, c)| t - c).collect();
        self.apply(&diff, out);
    }

    fn mean_grad_at(&self, params: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = params.iter().zip(self.optimum()).map(|(t, c)| t - c).collect();
        let mut out = vec![0.0; params.len()];
        self.apply(&diff, &mut out);
        out
    }
}

/// Influence scores of two IHVP configurations, compared after rescaling
/// the first to the mean of the second (the reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhvpComparison {
    pub method_a: String,
    pub method_b: String,
    /// Rescaled scores of configuration `a`.
    pub scores_a: Vec<f64>,
    /// Scores of the reference configuration `b`.
    pub scores_b: Vec<f64>,
    pub rescale_a: f64,
    pub rescale_b: f64,
    /// Median absolute deviation of `scores_a - scores_b`.
    pub mad: f64,
    /// Coefficient of determination of `scores_a` as a predictor of `scores_b`.
    pub r_squared: f64,
}

impl IhvpComparison {
    pub fn from_scores(method_a: &str, method_b: &str, a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::input("compared score arrays must be non-empty and of equal length"));
        }
        let (scores_a, rescale_a) = rescale_to_mean(a, b);
        let diff: Vec<f64> = scores_a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(IhvpComparison {
            method_a: method_a.into(),
            method_b: method_b.into(),
            mad: mad(&diff),
            r_squared: r_squared(&scores_a, b),
            scores_a,
            scores_b: b.to_vec(),
            rescale_a,
            rescale_b: 1.0,
        })
    }
}

/// Fairness influence under `cfg_a` and `cfg_b`, compared with `b` as the
/// reference.
pub fn compare_ihvp(
    model: &MlpModel,
    train: &TabularDataset,
    val: &TabularDataset,
    kind: FairnessMetricKind,
    cfg_a: &IhvpConfig,
    cfg_b: &IhvpConfig,
) -> Result<IhvpComparison> {
    let a = fairness_influence(model, train, Some(val), kind, cfg_a)?;
    let b = fairness_influence(model, train, Some(val), kind, cfg_b)?;
    IhvpComparison::from_scores(cfg_a.method.name(), cfg_b.method.name(), &a.scores, &b.scores)
}
