#![allow(dead_code)]

use fairij::data::TabularDataset;
use fairij::{Activation, MlpArchitecture, MlpModel, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random smooth network with at most `max_dim` parameters.
pub fn random_model(rng: &mut ChaCha8Rng, max_dim: usize) -> MlpModel {
    loop {
        let input = rng.random_range(1..=4);
        let hidden: Vec<usize> = match rng.random_range(0..3) {
            0 => vec![],
            1 => vec![rng.random_range(1..=5)],
            _ => vec![rng.random_range(1..=3), rng.random_range(1..=3)],
        };
        let activation = if hidden.is_empty() || rng.random_bool(0.5) {
            Activation::Identity
        } else {
            Activation::Selu
        };
        let arch = MlpArchitecture::new(input, hidden, activation).unwrap();
        if arch.param_count() > max_dim {
            continue;
        }
        let params = (0..arch.param_count()).map(|_| rng.random_range(-1.5..1.5)).collect();
        return MlpModel::new(arch, ParamVector::from_vec(params)).unwrap();
    }
}

/// `n` rows with every (s, y) cell populated; features uniform in (-2, 2),
/// shifted by the group so the groups differ.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, width: usize) -> TabularDataset {
    assert!(n >= 4);
    let mut rows = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (si, yi) = if i < 4 { ((i / 2) as u8, (i % 2) as u8) } else { (rng.random_range(0..2), rng.random_range(0..2)) };
        rows.push((0..width).map(|_| rng.random_range(-2.0..2.0) + 0.7 * f64::from(si)).collect());
        s.push(si);
        y.push(yi);
    }
    TabularDataset::from_rows(&rows, s, y).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    num / den
}
