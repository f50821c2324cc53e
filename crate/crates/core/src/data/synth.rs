use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};

/// Two interleaved half circles; label = moon id, sensitive = label.
///
/// The outer moon (label 0) is shifted up by `separation / 2` and the inner
/// moon (label 1) down by the same amount, so without noise a horizontal
/// line separates them once `separation > 0.5`.
pub fn two_moons(n: usize, noise: f64, separation: f64, seed: u64) -> Result<TabularDataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::input(format!("two_moons needs an even n >= 2, got {n}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) || !separation.is_finite() {
        return Err(Error::input("two_moons noise must be >= 0 and separation finite"));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = if half > 1 { PI / (half - 1) as f64 } else { 0.0 };
    let mut points: Vec<([f64; 2], u8)> = Vec::with_capacity(n);
    for i in 0..half {
        let t = i as f64 * step;
        points.push(([t.cos(), t.sin() + separation / 2.0], 0));
    }
    for i in 0..half {
        let t = i as f64 * step;
        points.push(([1.0 - t.cos(), 0.5 - t.sin() - separation / 2.0], 1));
    }
    for (p, _) in &mut points {
        for v in p.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += noise * z;
        }
    }
    points.shuffle(&mut rng);
    let rows: Vec<Vec<f64>> = points.iter().map(|(p, _)| p.to_vec()).collect();
    let labels: Vec<u8> = points.iter().map(|(_, y)| *y).collect();
    TabularDataset::from_rows(&rows, labels.clone(), labels)
}

/// A two-feature population whose labels are biased against one group.
///
/// `x1` carries the true label signal, `x2` is a noisy copy of the sensitive
/// attribute, and a fraction of negatives in the privileged group (s = 1)
/// is relabelled positive. A model trained on it learns to use `x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedMixture {
    pub signal: f64,
    pub proxy_noise: f64,
    pub flip_fraction: f64,
}

impl Default for BiasedMixture {
    fn default() -> Self {
        BiasedMixture {
            signal: 1.5,
            proxy_noise: 0.3,
            flip_fraction: 0.5,
        }
    }
}

pub fn biased_mixture(n: usize, cfg: &BiasedMixture, seed: u64) -> Result<TabularDataset> {
    if n < 2 {
        return Err(Error::input("biased_mixture needs at least 2 rows"));
    }
    if !(0.0..=1.0).contains(&cfg.flip_fraction) {
        return Err(Error::input("flip_fraction must be in [0, 1]"));
    }
    let proxy = Normal::new(0.0, cfg.proxy_noise).map_err(|e| Error::input(format!("proxy_noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut sens = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let s = u8::from(rng.random_bool(0.5));
        let y_true = u8::from(rng.random_bool(0.5));
        let z: f64 = StandardNormal.sample(&mut rng);
        let x1 = (2.0 * f64::from(y_true) - 1.0) * cfg.signal + z;
        let x2 = f64::from(s) + proxy.sample(&mut rng);
        let flip = rng.random_bool(cfg.flip_fraction);
        let y = if s == 1 && y_true == 0 && flip { 1 } else { y_true };
        rows.push(vec![x1, x2]);
        sens.push(s);
        labels.push(y);
    }
    TabularDataset::from_rows(&rows, sens, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_counts_and_errors() {
        let d = two_moons(4, 0.0, 1.0, 0).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.labels().iter().filter(|&&y| y == 1).count(), 2);
        assert_eq!(d.labels(), d.sensitive());
        assert!(two_moons(5, 0.0, 1.0, 0).is_err());
        assert_eq!(two_moons(100, 0.1, 1.0, 3).unwrap(), two_moons(100, 0.1, 1.0, 3).unwrap());
    }

    #[test]
    fn noiseless_moons_split_horizontally() {
        let d = two_moons(200, 0.0, 1.0, 0).unwrap();
        for i in 0..d.len() {
            let above = d.row(i)[1] > 0.0;
            assert_eq!(above, d.label(i) == 0);
        }
    }

    #[test]
    fn mixture_is_biased() {
        let d = biased_mixture(4000, &BiasedMixture::default(), 1).unwrap();
        let rate = |g: u8| {
            let idx: Vec<usize> = (0..d.len()).filter(|&i| d.sensitive_of(i) == g).collect();
            idx.iter().filter(|&&i| d.label(i) == 1).count() as f64 / idx.len() as f64
        };
        assert!(rate(1) - rate(0) > 0.15);
    }
}
