use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// Below this the feature is only centred.
const MIN_STD: f64 = 1e-12;

/// Per-feature affine map `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub fitted_on: String,
}

impl Standardization {
    /// Population mean and standard deviation of every feature.
    pub fn fit(data: &TabularDataset, tag: impl Into<String>) -> Self {
        let p = data.n_features();
        let n = data.len() as f64;
        let mut mean = vec![0.0; p];
        for i in 0..data.len() {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for i in 0..data.len() {
            for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Standardization {
            mean,
            scale,
            fitted_on: tag.into(),
        }
    }

    pub fn apply(&self, data: &TabularDataset) -> Result<TabularDataset> {
        if data.n_features() != self.mean.len() {
            return Err(Error::input(format!(
                "standardization fitted on {} features, dataset has {}",
                self.mean.len(),
                data.n_features()
            )));
        }
        Ok(data.map_features(|j, x| (x - self.mean[j]) / self.scale[j], Some(self.clone())))
    }
}

/// Fits on `train` and applies the same map to `train` and every dataset in
/// `others`.
pub fn standardize(train: &TabularDataset, others: &[&TabularDataset]) -> Result<(TabularDataset, Vec<TabularDataset>)> {
    let st = Standardization::fit(train, "train");
    let rest = others.iter().map(|d| st.apply(d)).collect::<Result<Vec<_>>>()?;
    Ok((st.apply(train)?, rest))
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::input(format!("split fraction {f} must be in (0, 1]")));
    }
    Ok(())
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn floor_count(n: usize, f: f64) -> usize {
    (n as f64 * f + 1e-9).floor() as usize
}

/// Index sets of a seeded train/val/test partition.
///
/// Val and test get `floor(N·f)` rows. When the fractions sum to one the
/// remainder goes to train; otherwise train gets `floor(N·f)` as well and the
/// leftover rows are unused.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let (ft, fv, fs) = fractions;
    for f in [ft, fv, fs] {
        check_fraction(f)?;
    }
    let total = ft + fv + fs;
    if total > 1.0 + 1e-9 {
        return Err(Error::input(format!("split fractions sum to {total} > 1")));
    }
    let n_val = floor_count(n, fv);
    let n_test = floor_count(n, fs);
    let n_train = if (total - 1.0).abs() <= 1e-9 {
        n - n_val - n_test
    } else {
        floor_count(n, ft)
    };
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::input(format!(
            "split of {n} rows leaves an empty part ({n_train}/{n_val}/{n_test})"
        )));
    }
    let idx = shuffled(n, seed);
    Ok([
        idx[..n_train].to_vec(),
        idx[n_train..n_train + n_val].to_vec(),
        idx[n_train + n_val..n_train + n_val + n_test].to_vec(),
    ])
}

pub fn split(data: &TabularDataset, fractions: (f64, f64, f64), seed: u64) -> Result<(TabularDataset, TabularDataset, TabularDataset)> {
    let [a, b, c] = split_indices(data.len(), fractions, seed)?;
    Ok((data.subset(&a)?, data.subset(&b)?, data.subset(&c)?))
}

/// Seeded cut of `floor(N·fraction)` held-out rows; the rest is returned first.
pub fn holdout(data: &TabularDataset, fraction: f64, seed: u64) -> Result<(TabularDataset, TabularDataset)> {
    check_fraction(fraction)?;
    let n_held = floor_count(data.len(), fraction);
    if n_held == 0 || n_held == data.len() {
        return Err(Error::input(format!(
            "holdout fraction {fraction} of {} rows leaves an empty part",
            data.len()
        )));
    }
    let idx = shuffled(data.len(), seed);
    let (held, rest) = idx.split_at(n_held);
    Ok((data.subset(rest)?, data.subset(held)?))
}
