//! Inverse-Hessian-vector products `H^{-1} v` for the mean training loss.
//!
//! Three engines share one [`Objective`] abstraction: a damped dense solve,
//! a Neumann series, and the WoodFisher coupled recurrence over a stream of
//! per-instance gradients.

mod exact;
mod neumann;
mod woodfisher;

pub use exact::{exact, ExactSolver};
pub use neumann::neumann;
pub use woodfisher::{woodfisher, woodfisher_many, GradientStream};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::par;
use crate::param::{self, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IhvpMethod {
    Woodfisher,
    Neumann,
    Exact,
}

impl IhvpMethod {
    pub fn name(self) -> &'static str {
        match self {
            IhvpMethod::Woodfisher => "woodfisher",
            IhvpMethod::Neumann => "neumann",
            IhvpMethod::Exact => "exact",
        }
    }
}

impl fmt::Display for IhvpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IhvpMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "woodfisher" => Ok(IhvpMethod::Woodfisher),
            "neumann" => Ok(IhvpMethod::Neumann),
            "exact" => Ok(IhvpMethod::Exact),
            other => Err(Error::Config(format!(
                "unknown IHVP method '{other}' (expected woodfisher, neumann or exact)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IhvpConfig {
    pub method: IhvpMethod,
    /// Recurrence updates (WoodFisher, capped at N) or Neumann steps.
    pub iterations: usize,
    /// `lambda`, added to the Hessian (exact, Neumann) or used as the initial
    /// inverse `I / lambda` (WoodFisher).
    pub damping: f64,
    pub neumann_scale: f64,
    /// Multiplies the WoodFisher result.
    pub wf_scale: f64,
    pub instance_order_seed: u64,
    /// Largest parameter count the dense engine accepts.
    pub exact_cap: usize,
}

impl Default for IhvpConfig {
    fn default() -> Self {
        IhvpConfig {
            method: IhvpMethod::Woodfisher,
            iterations: 1000,
            damping: 1.0,
            neumann_scale: 25.0,
            wf_scale: 1.0,
            instance_order_seed: 0,
            exact_cap: 2000,
        }
    }
}

impl IhvpConfig {
    pub fn with_method(method: IhvpMethod) -> Self {
        IhvpConfig {
            method,
            ..IhvpConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("ihvp.iterations must be at least 1".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.method == IhvpMethod::Woodfisher && !positive(self.damping) {
            return Err(Error::Config("ihvp.damping must be positive for woodfisher".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::Config("ihvp.damping must be non-negative".into()));
        }
        if !positive(self.neumann_scale) || !positive(self.wf_scale) {
            return Err(Error::Config("ihvp scales must be positive".into()));
        }
        Ok(())
    }
}

/// A sum-decomposable training loss `L(theta) = (1/N) sum_n l_n(theta)`
/// evaluated around fixed parameters.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// The point the Hessian is taken at.
    fn params(&self) -> &[f64];
    /// Adds `grad l_n(params)` into `out`.
    fn add_instance_grad(&self, n: usize, out: &mut [f64]);
    /// `grad L` at arbitrary parameters.
    fn mean_grad_at(&self, params: &[f64]) -> Vec<f64>;

    fn instance_grad(&self, n: usize) -> ParamVector {
        let mut g = ParamVector::zeros(self.dim());
        self.add_instance_grad(n, &mut g);
        g
    }
}

/// The mean BCE of an [`MlpModel`] on a training set.
pub struct MlpObjective<'a> {
    model: &'a MlpModel,
    data: &'a TabularDataset,
}

impl<'a> MlpObjective<'a> {
    pub fn new(model: &'a MlpModel, data: &'a TabularDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("objective over an empty dataset"));
        }
        model.check_width(data)?;
        Ok(MlpObjective { model, data })
    }
}

impl Objective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn params(&self) -> &[f64] {
        &self.model.params
    }

    fn add_instance_grad(&self, n: usize, out: &mut [f64]) {
        let mut scratch = self.model.scratch();
        self.model
            .add_loss_grad(self.data.row(n), self.data.label(n), 1.0, out, &mut scratch);
    }

    fn mean_grad_at(&self, params: &[f64]) -> Vec<f64> {
        let model = self.model;
        let data = self.data;
        let mut sum = par::block_sum(data.len(), model.dim(), |range, acc| {
            let mut scratch = model.scratch();
            for n in range {
                let y = f64::from(data.label(n));
                model.backprop_with(params, data.row(n), acc, &mut scratch, |z| crate::model::sigmoid(z) - y);
            }
        });
        let inv = 1.0 / data.len() as f64;
        sum.iter_mut().for_each(|v| *v *= inv);
        sum
    }
}

/// Hessian-vector product of the mean loss by fourth-order central
/// differences of its gradient, with step `1e-4 (1 + |theta|) / |u|`.
pub fn hvp<O: Objective + ?Sized>(obj: &O, u: &[f64]) -> Vec<f64> {
    let nu = param::dot(u, u).sqrt();
    if nu == 0.0 {
        return vec![0.0; u.len()];
    }
    let theta = obj.params();
    let eps = 1e-4 * (1.0 + param::dot(theta, theta).sqrt()) / nu;
    let grad_at = |t: f64| -> Vec<f64> {
        let shifted: Vec<f64> = theta.iter().zip(u).map(|(p, x)| p + t * eps * x).collect();
        obj.mean_grad_at(&shifted)
    };
    let (p1, m1, p2, m2) = (grad_at(1.0), grad_at(-1.0), grad_at(2.0), grad_at(-2.0));
    (0..u.len())
        .map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * eps))
        .collect()
}

fn check_rhs<O: Objective + ?Sized>(obj: &O, v: &[f64]) -> Result<()> {
    if v.len() != obj.dim() {
        return Err(Error::input(format!(
            "vector has length {}, parameters have {}",
            v.len(),
            obj.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("vector has non-finite entries"));
    }
    Ok(())
}

/// `H^{-1} v` with the configured engine.
pub fn solve<O: Objective + ?Sized>(obj: &O, v: &[f64], cfg: &IhvpConfig) -> Result<ParamVector> {
    let mut out = solve_many(obj, &[v], cfg)?;
    Ok(out.pop().expect("one right-hand side"))
}

/// `H^{-1} v` for several right-hand sides, sharing the work that does not
/// depend on `v` (the factorization, or the WoodFisher pass over the stream).
pub fn solve_many<O: Objective + ?Sized>(obj: &O, vs: &[&[f64]], cfg: &IhvpConfig) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    for v in vs {
        check_rhs(obj, v)?;
    }
    match cfg.method {
        IhvpMethod::Exact => {
            let solver = ExactSolver::factor(obj, cfg)?;
            vs.iter().map(|v| solver.solve(v)).collect()
        }
        IhvpMethod::Neumann => vs.iter().map(|v| neumann(obj, v, cfg)).collect(),
        IhvpMethod::Woodfisher => {
            let stream = GradientStream::new(obj, cfg.instance_order_seed)?;
            woodfisher_many(&stream, vs, cfg)
        }
    }
}
