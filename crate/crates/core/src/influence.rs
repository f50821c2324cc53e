//! Per-training-instance influence on a validation functional `M`:
//! `I_n = -grad M' H^{-1} g_n`, computed with one IHVP `r = H^{-1} grad M`
//! followed by `N` dot products.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::fairness::{surrogate_grad, FairnessMetricKind};
use crate::ihvp::{self, IhvpConfig, MlpObjective, Objective};
use crate::model::{mean_grad, MlpModel};
use crate::par;
use crate::param::{self, ParamVector};
use crate::report::{self, Cell};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub metric: FairnessMetricKind,
    /// Influence of each training instance on the fairness surrogate.
    pub scores: Vec<f64>,
    /// Influence on the mean validation loss, when requested.
    pub loss_scores: Option<Vec<f64>>,
    /// `H^{-1} grad M` for the fairness surrogate.
    pub ihvp_vector: ParamVector,
    pub ihvp: IhvpConfig,
    /// `"val"`, or `"train"` when no validation set was given.
    pub evaluated_on: String,
    pub surrogate: f64,
    /// A surrogate term had zero group difference (zero subgradient used).
    pub degenerate: bool,
}

impl InfluenceReport {
    pub fn positive_count(&self) -> usize {
        self.scores.iter().filter(|&&s| s > 0.0).count()
    }

    /// Indices sorted by descending score, ties by ascending index.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// `-g_n' r` for every instance of `obj`.
pub fn scores_from_ihvp<O: Objective + ?Sized>(obj: &O, r: &[f64]) -> Vec<f64> {
    let blocks = par::map_range(obj.len().div_ceil(par::SUM_BLOCK), |b| {
        let start = b * par::SUM_BLOCK;
        let end = (start + par::SUM_BLOCK).min(obj.len());
        let mut g = vec![0.0; obj.dim()];
        (start..end)
            .map(|n| {
                g.iter_mut().for_each(|x| *x = 0.0);
                obj.add_instance_grad(n, &mut g);
                -param::dot(&g, r)
            })
            .collect::<Vec<f64>>()
    });
    blocks.concat()
}

/// Influence of every training instance on the validation surrogate and,
/// if `with_loss`, on the mean validation loss. Both IHVPs share one solve
/// pass. Without `val` the functionals are evaluated on `train`.
pub fn influence_report(
    model: &MlpModel,
    train: &TabularDataset,
    val: Option<&TabularDataset>,
    kind: FairnessMetricKind,
    cfg: &IhvpConfig,
    with_loss: bool,
) -> Result<InfluenceReport> {
    cfg.validate()?;
    let target = val.unwrap_or(train);
    let obj = MlpObjective::new(model, train)?;
    let fair = surrogate_grad(model, target, kind)?;
    let mut rhs = vec![fair.grad.clone()];
    if with_loss {
        rhs.push(mean_grad(model, target)?);
    }
    let refs: Vec<&[f64]> = rhs.iter().map(|v| v.as_slice()).collect();
    let mut solved = solve_nonzero(&obj, &refs, cfg)?;
    let loss_r = if with_loss { solved.pop() } else { None };
    let r = solved.pop().expect("fairness right-hand side");

    Ok(InfluenceReport {
        metric: kind,
        scores: scores_from_ihvp(&obj, &r),
        loss_scores: loss_r.map(|lr| scores_from_ihvp(&obj, &lr)),
        ihvp_vector: r,
        ihvp: cfg.clone(),
        evaluated_on: if val.is_some() { "val" } else { "train" }.into(),
        surrogate: fair.value,
        degenerate: fair.degenerate,
    })
}

/// Solves for every non-zero right-hand side; zero vectors map to zero.
fn solve_nonzero<O: Objective + ?Sized>(obj: &O, vs: &[&[f64]], cfg: &IhvpConfig) -> Result<Vec<ParamVector>> {
    let live: Vec<usize> = (0..vs.len()).filter(|&i| vs[i].iter().any(|&x| x != 0.0)).collect();
    let mut out: Vec<ParamVector> = vs.iter().map(|v| ParamVector::zeros(v.len())).collect();
    if live.is_empty() {
        return Ok(out);
    }
    let subset: Vec<&[f64]> = live.iter().map(|&i| vs[i]).collect();
    for (i, r) in live.into_iter().zip(ihvp::solve_many(obj, &subset, cfg)?) {
        out[i] = r;
    }
    Ok(out)
}

pub fn fairness_influence(
    model: &MlpModel,
    train: &TabularDataset,
    val: Option<&TabularDataset>,
    kind: FairnessMetricKind,
    cfg: &IhvpConfig,
) -> Result<InfluenceReport> {
    influence_report(model, train, val, kind, cfg, false)
}

/// Influence of every training instance on the mean validation loss.
pub fn loss_influence(model: &MlpModel, train: &TabularDataset, val: &TabularDataset, cfg: &IhvpConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let obj = MlpObjective::new(model, train)?;
    let u = mean_grad(model, val)?;
    let r = solve_nonzero(&obj, &[u.as_slice()], cfg)?.pop().expect("one right-hand side");
    Ok(scores_from_ihvp(&obj, &r))
}

/// Scores by one IHVP per instance, `-grad M' H^{-1} g_n`. Quadratic in
/// cost; kept as a reference for the one-pass route.
pub fn slow_scores<O: Objective + ?Sized>(obj: &O, grad_m: &[f64], cfg: &IhvpConfig) -> Result<Vec<f64>> {
    let grads: Vec<ParamVector> = (0..obj.len()).map(|n| obj.instance_grad(n)).collect();
    let refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    let solved = ihvp::solve_many(obj, &refs, cfg)?;
    Ok(solved.iter().map(|r| -param::dot(grad_m, r)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopK {
    pub indices: Vec<usize>,
    /// `k` exceeded the number of positive scores and was clipped.
    pub clipped: bool,
}

/// The `k` largest strictly positive scores, descending, ties by index.
pub fn top_positive(scores: &[f64], k: usize) -> TopK {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&n| scores[n] > 0.0).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let clipped = k > idx.len();
    idx.truncate(k);
    TopK { indices: idx, clipped }
}

/// Influence CSV: `index,score[,loss_score],label,sensitive`, one row per
/// training instance, in index order or sorted by descending score.
pub fn write_influence_csv(path: &Path, report: &InfluenceReport, train: &TabularDataset, sorted: bool) -> Result<()> {
    if report.scores.len() != train.len() {
        return Err(Error::input("influence report does not match the training set"));
    }
    let mut header = vec!["index", "score"];
    if report.loss_scores.is_some() {
        header.push("loss_score");
    }
    header.extend(["label", "sensitive"]);
    let order: Vec<usize> = if sorted {
        report.sorted_indices()
    } else {
        (0..train.len()).collect()
    };
    let rows: Vec<Vec<Cell>> = order
        .into_iter()
        .map(|n| {
            let mut row = vec![Cell::from(n), Cell::from(report.scores[n])];
            if let Some(ls) = &report.loss_scores {
                row.push(Cell::from(ls[n]));
            }
            row.push(Cell::from(train.label(n)));
            row.push(Cell::from(train.sensitive_of(n)));
            row
        })
        .collect();
    report::write_csv(path, &header, &rows)
}
