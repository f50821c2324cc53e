//! Data preparation and the per-trial train, influence and edit pipeline.

use std::path::Path;

use fairij::data::{biased_mixture, holdout, load_csv, split, standardize, two_moons, BiasedMixture, LoadReport};
use fairij::fairness::MetricReport;
use fairij::mitigate::{fair_ij, MitigationResult};
use fairij::model::{train_erm_logged, TrainLog};
use fairij::{Error, FairnessMetricKind, MlpModel, Result, TabularDataset};
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, RunConfig};

/// The full dataset named by the `data` section, generated with `cfg.seed`.
pub fn load_source(cfg: &RunConfig) -> Result<(TabularDataset, Option<LoadReport>)> {
    let d = &cfg.data;
    match d.source {
        DataSource::Csv => {
            let path = d.path.as_deref().ok_or_else(|| Error::Config("data.path is required when data.source=csv".into()))?;
            let (data, report) = load_csv(Path::new(path), &cfg.schema)?;
            Ok((data, Some(report)))
        }
        DataSource::Moons => Ok((two_moons(d.n, d.noise, d.separation, cfg.seed)?, None)),
        DataSource::Mixture => Ok((biased_mixture(d.n, &BiasedMixture::default(), cfg.seed)?, None)),
    }
}

/// Standardized train, validation and test sets.
pub struct Splits {
    pub train: TabularDataset,
    pub val: TabularDataset,
    pub test: TabularDataset,
}

/// Splits `all` with `cfg.seed`.
///
/// Rows tagged `train` / `test` keep that split and validation is held out
/// from the train rows; untagged data is cut three ways. Statistics for
/// standardization come from the train part only.
pub fn make_splits(all: &TabularDataset, cfg: &RunConfig) -> Result<Splits> {
    let d = &cfg.data;
    let tagged = all.tags().is_some_and(|t| t.iter().any(|x| x == "train") && t.iter().any(|x| x == "test"));
    let (train, val, test) = if tagged {
        let (train, val) = holdout(&all.with_tag("train")?, d.val_fraction, cfg.seed)?;
        (train, val, all.with_tag("test")?)
    } else {
        let ft = 1.0 - d.val_fraction - d.test_fraction;
        split(all, (ft, d.val_fraction, d.test_fraction), cfg.seed)?
    };
    let (train, mut rest) = standardize(&train, &[&val, &test])?;
    let test = rest.pop().expect("two companions");
    let val = rest.pop().expect("two companions");
    Ok(Splits { train, val, test })
}

pub fn prepare(cfg: &RunConfig) -> Result<Splits> {
    let (all, _) = load_source(cfg)?;
    make_splits(&all, cfg)
}

pub fn train(splits: &Splits, cfg: &RunConfig) -> Result<(MlpModel, TrainLog)> {
    let arch = cfg.architecture(splits.train.n_features())?;
    train_erm_logged(&splits.train, &splits.val, &arch, &cfg.train)
}

/// Hard and surrogate values of every fairness metric plus accuracy. A
/// metric is absent when one of its (group, label) cells is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rows: usize,
    pub accuracy: f64,
    pub dp: Option<MetricReport>,
    pub eo: Option<MetricReport>,
    pub eqopp: Option<MetricReport>,
}

pub fn evaluate(model: &MlpModel, data: &TabularDataset) -> Result<Evaluation> {
    let probs = model.predict_proba(data)?;
    let report = |kind| match MetricReport::from_probs(&probs, data, kind, 0.5) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Evaluation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(Evaluation {
        rows: data.len(),
        accuracy: model.accuracy(data)?,
        dp: report(FairnessMetricKind::Dp)?,
        eo: report(FairnessMetricKind::Eo)?,
        eqopp: report(FairnessMetricKind::Eqopp)?,
    })
}

/// One sweep trial: split, train, edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub train_seed: u64,
    pub instance_order_seed: u64,
    pub selected_epoch: usize,
    pub result: MitigationResult,
}

pub fn run_trial(all: &TabularDataset, base: &RunConfig, trial: usize) -> Result<TrialOutcome> {
    let cfg = base.for_trial(trial);
    let splits = make_splits(all, &cfg)?;
    let (model, log) = train(&splits, &cfg)?;
    let result = fair_ij(&model, &splits.train, &splits.val, Some(&splits.test), &cfg.mitigation())?;
    Ok(TrialOutcome {
        trial,
        seed: cfg.seed,
        train_seed: cfg.train.seed,
        instance_order_seed: cfg.ihvp.instance_order_seed,
        selected_epoch: log.selected_epoch,
        result,
    })
}
