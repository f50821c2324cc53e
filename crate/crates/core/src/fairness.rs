//! Group-fairness gaps between the two sensitive groups: hard metrics on
//! thresholded predictions, smooth surrogates on probabilities, and the
//! surrogate gradients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::model::MlpModel;
use crate::par;
use crate::param::ParamVector;

/// Smallest group-mean difference treated as non-zero by the gradient.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FairnessMetricKind {
    /// Demographic parity.
    Dp,
    /// Equalized odds.
    Eo,
    /// Equality of opportunity (the y = 1 term of equalized odds).
    Eqopp,
}

impl FairnessMetricKind {
    pub fn name(self) -> &'static str {
        match self {
            FairnessMetricKind::Dp => "dp",
            FairnessMetricKind::Eo => "eo",
            FairnessMetricKind::Eqopp => "eqopp",
        }
    }

    /// Label each absolute-difference term conditions on (`None` = all rows).
    fn terms(self) -> &'static [Option<u8>] {
        match self {
            FairnessMetricKind::Dp => &[None],
            FairnessMetricKind::Eo => &[Some(0), Some(1)],
            FairnessMetricKind::Eqopp => &[Some(1)],
        }
    }
}

impl fmt::Display for FairnessMetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FairnessMetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(FairnessMetricKind::Dp),
            "eo" => Ok(FairnessMetricKind::Eo),
            "eqopp" => Ok(FairnessMetricKind::Eqopp),
            other => Err(Error::Config(format!("unknown fairness metric '{other}' (expected dp, eo or eqopp)"))),
        }
    }
}

/// Count and means of one group (`y = None`) or one (s, y) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub s: u8,
    pub y: Option<u8>,
    pub count: usize,
    pub mean_prob: f64,
    pub mean_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// Groups s = 0, 1 followed by cells (s, y) in order (0,0), (0,1), (1,0), (1,1).
    pub cells: Vec<CellStats>,
}

impl GroupStats {
    pub fn from_probs(probs: &[f64], data: &TabularDataset, threshold: f64) -> Self {
        let mut count = [[0usize; 3]; 2];
        let mut prob = [[0.0f64; 3]; 2];
        let mut pred = [[0.0f64; 3]; 2];
        for (n, &p) in probs.iter().enumerate() {
            let s = data.sensitive_of(n) as usize;
            let hard = if p >= threshold { 1.0 } else { 0.0 };
            for slot in [2, data.label(n) as usize] {
                count[s][slot] += 1;
                prob[s][slot] += p;
                pred[s][slot] += hard;
            }
        }
        let mut cells = Vec::with_capacity(6);
        for (slot, y) in [(2, None), (0, Some(0)), (1, Some(1))] {
            for s in 0..2 {
                let c = count[s][slot];
                let mean = |total: f64| if c == 0 { 0.0 } else { total / c as f64 };
                cells.push(CellStats {
                    s: s as u8,
                    y,
                    count: c,
                    mean_prob: mean(prob[s][slot]),
                    mean_pred: mean(pred[s][slot]),
                });
            }
        }
        cells.sort_by_key(|c| (c.y.is_some(), c.s, c.y));
        GroupStats { cells }
    }

    pub fn cell(&self, s: u8, y: Option<u8>) -> &CellStats {
        self.cells
            .iter()
            .find(|c| c.s == s && c.y == y)
            .expect("every group and cell is present")
    }

    fn check(&self, kind: FairnessMetricKind) -> Result<()> {
        for &y in kind.terms() {
            for s in 0..2 {
                if self.cell(s, y).count == 0 {
                    let name = match y {
                        None => format!("group s={s}"),
                        Some(y) => format!("cell s={s},y={y}"),
                    };
                    return Err(Error::Evaluation(format!("{name} is empty; {kind} is undefined")));
                }
            }
        }
        Ok(())
    }

    /// Signed differences (s = 1 minus s = 0) of each term.
    fn differences(&self, kind: FairnessMetricKind, hard: bool) -> Vec<f64> {
        let mean = |c: &CellStats| if hard { c.mean_pred } else { c.mean_prob };
        kind.terms()
            .iter()
            .map(|&y| mean(self.cell(1, y)) - mean(self.cell(0, y)))
            .collect()
    }
}

/// Hard and surrogate values of one metric on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: FairnessMetricKind,
    pub hard: f64,
    pub surrogate: f64,
    pub group_cells: GroupStats,
    pub degenerate: bool,
}

impl MetricReport {
    pub fn from_probs(probs: &[f64], data: &TabularDataset, kind: FairnessMetricKind, threshold: f64) -> Result<Self> {
        let stats = GroupStats::from_probs(probs, data, threshold);
        stats.check(kind)?;
        let soft = stats.differences(kind, false);
        Ok(MetricReport {
            kind,
            hard: stats.differences(kind, true).iter().map(|d| d.abs()).sum(),
            surrogate: soft.iter().map(|d| d.abs()).sum(),
            degenerate: soft.iter().any(|d| d.abs() < DEGENERACY_TOL),
            group_cells: stats,
        })
    }

    pub fn evaluate(model: &MlpModel, data: &TabularDataset, kind: FairnessMetricKind, threshold: f64) -> Result<Self> {
        let probs = model.predict_proba(data)?;
        Self::from_probs(&probs, data, kind, threshold)
    }
}

/// Hard gap of thresholded predictions `1{p >= threshold}`.
pub fn hard_metric(model: &MlpModel, data: &TabularDataset, kind: FairnessMetricKind, threshold: f64) -> Result<f64> {
    MetricReport::evaluate(model, data, kind, threshold).map(|r| r.hard)
}

/// Smooth gap computed from predicted probabilities.
pub fn surrogate(model: &MlpModel, data: &TabularDataset, kind: FairnessMetricKind) -> Result<f64> {
    MetricReport::evaluate(model, data, kind, 0.5).map(|r| r.surrogate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGrad {
    pub grad: ParamVector,
    pub value: f64,
    /// Some term had a group-mean difference below [`DEGENERACY_TOL`]; its
    /// subgradient was taken as zero.
    pub degenerate: bool,
}

/// Gradient of [`surrogate`] with respect to the model parameters.
///
/// Each term `|mean_1 h - mean_0 h|` contributes
/// `sign(d) (mean_1 grad h - mean_0 grad h)`.
pub fn surrogate_grad(model: &MlpModel, data: &TabularDataset, kind: FairnessMetricKind) -> Result<SurrogateGrad> {
    let report = MetricReport::evaluate(model, data, kind, 0.5)?;
    let stats = &report.group_cells;
    let diffs = stats.differences(kind, false);

    // per-row coefficient of grad h in the total
    let mut coef = vec![0.0; data.len()];
    for (&y, &d) in kind.terms().iter().zip(&diffs) {
        if d.abs() < DEGENERACY_TOL {
            continue;
        }
        let sign = d.signum();
        let w1 = sign / stats.cell(1, y).count as f64;
        let w0 = -sign / stats.cell(0, y).count as f64;
        for (n, c) in coef.iter_mut().enumerate() {
            if y.is_none_or(|y| data.label(n) == y) {
                *c += if data.sensitive_of(n) == 1 { w1 } else { w0 };
            }
        }
    }

    let sum = par::block_sum(data.len(), model.dim(), |range, acc| {
        let mut scratch = model.scratch();
        for n in range {
            if coef[n] != 0.0 {
                model.add_prob_grad(data.row(n), coef[n], acc, &mut scratch);
            }
        }
    });
    Ok(SurrogateGrad {
        grad: ParamVector::from_vec(sum),
        value: report.surrogate,
        degenerate: report.degenerate,
    })
}
