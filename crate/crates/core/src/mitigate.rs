//! Fair-IJ: drop the training instances that push the fairness surrogate
//! up, to first order, by editing the fitted parameters
//! `theta_fair = theta + s * H^{-1} sum_{m in dropped} g_m / N`.

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::fairness::{FairnessMetricKind, MetricReport};
use crate::ihvp::{self, IhvpConfig, MlpObjective, Objective};
use crate::influence::{influence_report, top_positive, InfluenceReport};
use crate::model::MlpModel;
use crate::param::ParamVector;

pub const DEFAULT_SCALES: [f64; 7] = [0.01, 0.1, 1.0, 2.0, 3.0, 5.0, 10.0];
pub const DEFAULT_K_MAX: usize = 2000;
pub const DEFAULT_K_POINTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Instances with positive fairness influence.
    FairnessOnly,
    /// Instances with positive influence on both fairness and validation loss.
    LossAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Search {
    /// Every (scale, k) pair of the grids.
    Grid,
    /// Per scale, walk k upwards and stop at the first non-improvement.
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub metric: FairnessMetricKind,
    pub selection: Selection,
    /// `None`: 40 values spread evenly over `0..=min(2000, K)`.
    pub k_grid: Option<Vec<usize>>,
    pub scale_grid: Vec<f64>,
    pub search: Search,
    pub ihvp: IhvpConfig,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            metric: FairnessMetricKind::Dp,
            selection: Selection::FairnessOnly,
            k_grid: None,
            scale_grid: DEFAULT_SCALES.to_vec(),
            search: Search::Grid,
            ihvp: IhvpConfig::default(),
        }
    }
}

impl MitigationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale_grid.is_empty() {
            return Err(Error::Config("mitigate.scale_grid must not be empty".into()));
        }
        if self.scale_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("mitigate.scale_grid values must be positive".into()));
        }
        if self.k_grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::Config("mitigate.k_grid must not be empty".into()));
        }
        self.ihvp.validate()
    }
}

/// `points` values spread evenly over `0..=k_max`, rounded and deduplicated.
pub fn default_k_grid(k_max: usize, points: usize) -> Vec<usize> {
    if k_max == 0 || points < 2 {
        return vec![0];
    }
    let mut ks: Vec<usize> = (0..points)
        .map(|i| (i as f64 * k_max as f64 / (points - 1) as f64).round() as usize)
        .collect();
    ks.dedup();
    ks
}

/// The drop set: `{n : I_b > 0}`, or with `LossAware` also `I_l > 0`.
pub fn select_dminus(scores: &[f64], loss_scores: Option<&[f64]>, selection: Selection) -> Result<Vec<usize>> {
    match selection {
        Selection::FairnessOnly => Ok((0..scores.len()).filter(|&n| scores[n] > 0.0).collect()),
        Selection::LossAware => {
            let ls = loss_scores.ok_or_else(|| Error::Config("loss-aware selection needs loss influence scores".into()))?;
            if ls.len() != scores.len() {
                return Err(Error::input("loss scores and fairness scores differ in length"));
            }
            Ok((0..scores.len()).filter(|&n| scores[n] > 0.0 && ls[n] > 0.0).collect())
        }
    }
}

/// `sum_n I_n (w_n - 1)`: the first-order change in the surrogate when
/// instance `n` gets weight `w_n`.
pub fn linearized_delta(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if weights.len() != scores.len() {
        return Err(Error::input("weight mask length does not match the scores"));
    }
    Ok(scores.iter().zip(weights).map(|(s, w)| s * (w - 1.0)).sum())
}

/// Sum of the training gradients of `dropped`, in the given order.
fn gradient_sum<O: Objective + ?Sized>(obj: &O, dropped: &[usize]) -> ParamVector {
    let mut g = ParamVector::zeros(obj.dim());
    for &m in dropped {
        obj.add_instance_grad(m, &mut g);
    }
    g
}

/// `theta + H^{-1} sum_{m in dropped} g_m / N` with the configured engine.
///
/// `H` is the Hessian of the mean training loss, so removing instance `m`
/// moves the optimum by `H^{-1} g_m / N` to first order.
pub fn edit_params(model: &MlpModel, train: &TabularDataset, dropped: &[usize], cfg: &IhvpConfig) -> Result<ParamVector> {
    cfg.validate()?;
    if let Some(&bad) = dropped.iter().find(|&&m| m >= train.len()) {
        return Err(Error::input(format!("dropped index {bad} out of range")));
    }
    if dropped.is_empty() {
        return Ok(model.params.clone());
    }
    let obj = MlpObjective::new(model, train)?;
    edit_objective(&obj, dropped, cfg)
}

/// [`edit_params`] for any objective.
pub fn edit_objective<O: Objective + ?Sized>(obj: &O, dropped: &[usize], cfg: &IhvpConfig) -> Result<ParamVector> {
    let theta = ParamVector::from_vec(obj.params().to_vec());
    if dropped.is_empty() {
        return Ok(theta);
    }
    let r = ihvp::solve(obj, &gradient_sum(obj, dropped), cfg)?;
    Ok(theta.add(&r.scaled(1.0 / obj.len() as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hard: f64,
    pub surrogate: f64,
    pub accuracy: f64,
}

impl Metrics {
    pub fn evaluate(model: &MlpModel, data: &TabularDataset, kind: FairnessMetricKind) -> Result<Self> {
        let probs = model.predict_proba(data)?;
        let r = MetricReport::from_probs(&probs, data, kind, 0.5)?;
        let hits = probs
            .iter()
            .zip(data.labels())
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        Ok(Metrics {
            hard: r.hard,
            surrogate: r.surrogate,
            accuracy: hits as f64 / data.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub val: Metrics,
    pub test: Option<Metrics>,
}

/// One evaluated (scale, k) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub scale: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationResult {
    pub theta_fair: ParamVector,
    pub dropped: Vec<usize>,
    pub chosen_k: usize,
    pub chosen_scale: f64,
    pub before: SplitMetrics,
    pub after: SplitMetrics,
    /// `sum_n I_n (w_n - 1)` for the chosen drop set, unscaled.
    pub linearized_metric_delta: f64,
    /// Size of the candidate drop set.
    pub positive_count: usize,
    pub k_grid: Vec<usize>,
    pub candidates: Vec<Candidate>,
    pub no_op: bool,
    pub influence_degenerate: bool,
    pub config: MitigationConfig,
}

/// Candidate ordering: lower validation hard metric, then smaller k, then
/// smaller scale.
fn better(a: &Candidate, b: &Candidate) -> bool {
    a.val
        .hard
        .total_cmp(&b.val.hard)
        .then(a.k.cmp(&b.k))
        .then(a.scale.total_cmp(&b.scale))
        .is_lt()
}

/// Runs Fair-IJ: one influence report, one IHVP pass over the gradient
/// prefix sums of the k grid, then a search over (scale, k) scored by the
/// validation hard metric. Candidates whose validation surrogate exceeds
/// the unedited one are discarded; k = 0 is always available.
pub fn fair_ij(
    model: &MlpModel,
    train: &TabularDataset,
    val: &TabularDataset,
    test: Option<&TabularDataset>,
    cfg: &MitigationConfig,
) -> Result<MitigationResult> {
    cfg.validate()?;
    let kind = cfg.metric;
    let with_loss = cfg.selection == Selection::LossAware;
    let report = influence_report(model, train, Some(val), kind, &cfg.ihvp, with_loss)?;
    fair_ij_with_report(model, train, val, test, cfg, &report)
}

/// [`fair_ij`] from an existing influence report.
pub fn fair_ij_with_report(
    model: &MlpModel,
    train: &TabularDataset,
    val: &TabularDataset,
    test: Option<&TabularDataset>,
    cfg: &MitigationConfig,
    report: &InfluenceReport,
) -> Result<MitigationResult> {
    cfg.validate()?;
    let kind = cfg.metric;
    if report.scores.len() != train.len() {
        return Err(Error::input("influence report does not match the training set"));
    }

    let pool = select_dminus(&report.scores, report.loss_scores.as_deref(), cfg.selection)?;
    let ordered: Vec<usize> = top_positive(&report.scores, report.scores.len())
        .indices
        .into_iter()
        .filter(|n| pool.binary_search(n).is_ok())
        .collect();
    let k_pos = ordered.len();

    let mut k_grid: Vec<usize> = match &cfg.k_grid {
        Some(ks) => ks.iter().map(|&k| k.min(k_pos)).collect(),
        None => default_k_grid(DEFAULT_K_MAX.min(k_pos), DEFAULT_K_POINTS),
    };
    k_grid.push(0);
    k_grid.sort_unstable();
    k_grid.dedup();

    let evaluate_on = |params: &ParamVector, data: &TabularDataset| -> Result<Metrics> {
        Metrics::evaluate(&model.with_params(params.clone())?, data, kind)
    };
    let before = SplitMetrics {
        val: Metrics::evaluate(model, val, kind)?,
        test: test.map(|t| Metrics::evaluate(model, t, kind)).transpose()?,
    };

    // unscaled edit directions for every k > 0 in one solve pass
    let live: Vec<usize> = k_grid.iter().copied().filter(|&k| k > 0).collect();
    let directions: Vec<ParamVector> = if live.is_empty() {
        Vec::new()
    } else {
        let obj = MlpObjective::new(model, train)?;
        let mut sums = Vec::with_capacity(live.len());
        let mut running = ParamVector::zeros(obj.dim());
        let mut taken = 0;
        for &k in &live {
            for &m in &ordered[taken..k] {
                obj.add_instance_grad(m, &mut running);
            }
            taken = k;
            sums.push(running.clone());
        }
        let refs: Vec<&[f64]> = sums.iter().map(|v| v.as_slice()).collect();
        let inv_n = 1.0 / obj.len() as f64;
        ihvp::solve_many(&obj, &refs, &cfg.ihvp)?
            .into_iter()
            .map(|r| r.scaled(inv_n))
            .collect()
    };
    let direction = |k: usize| &directions[live.iter().position(|&x| x == k).expect("k in grid")];

    let mut scales = cfg.scale_grid.clone();
    scales.sort_by(f64::total_cmp);
    scales.dedup();

    let base = |scale: f64| Candidate {
        k: 0,
        scale,
        val: before.val.clone(),
    };
    let evaluate = |scale: f64, k: usize| -> Result<Option<Candidate>> {
        let mut theta = model.params.clone();
        theta.axpy(scale, direction(k));
        if !theta.is_finite() {
            return Ok(None);
        }
        Ok(Some(Candidate {
            k,
            scale,
            val: evaluate_on(&theta, val)?,
        }))
    };
    let admissible = |c: &Candidate| c.val.surrogate <= before.val.surrogate;

    let mut candidates = Vec::new();
    let mut best = base(scales[0]);
    for &scale in &scales {
        candidates.push(base(scale));
        let mut walk_best = base(scale);
        for &k in &live {
            let Some(c) = evaluate(scale, k)? else {
                if cfg.search == Search::EarlyStop {
                    break;
                }
                continue;
            };
            candidates.push(c.clone());
            if cfg.search == Search::EarlyStop {
                if !(admissible(&c) && c.val.hard < walk_best.val.hard) {
                    break;
                }
                walk_best = c.clone();
            }
            if admissible(&c) && better(&c, &best) {
                best = c;
            }
        }
    }

    let (theta_fair, dropped) = if best.k == 0 {
        (model.params.clone(), Vec::new())
    } else {
        let mut theta = model.params.clone();
        theta.axpy(best.scale, direction(best.k));
        (theta, ordered[..best.k].to_vec())
    };
    let after = if best.k == 0 {
        before.clone()
    } else {
        SplitMetrics {
            val: evaluate_on(&theta_fair, val)?,
            test: test.map(|t| evaluate_on(&theta_fair, t)).transpose()?,
        }
    };
    let mut weights = vec![1.0; train.len()];
    for &m in &dropped {
        weights[m] = 0.0;
    }

    Ok(MitigationResult {
        theta_fair,
        linearized_metric_delta: linearized_delta(&report.scores, &weights)?,
        no_op: best.k == 0,
        chosen_k: best.k,
        chosen_scale: best.scale,
        dropped,
        before,
        after,
        positive_count: k_pos,
        k_grid,
        candidates,
        influence_degenerate: report.degenerate,
        config: cfg.clone(),
    })
}
