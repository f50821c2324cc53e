//! The classifier family: fully connected networks with a single sigmoid
//! output, binary cross-entropy loss and hand-derived reverse-mode gradients.

mod checkpoint;
mod train;

pub use checkpoint::Checkpoint;
pub use train::{train_erm, train_erm_logged, CheckpointSelection, EpochStats, Optimizer, TrainConfig, TrainLog};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::par;
use crate::param::{axpy, dot, ParamVector};

/// Predicted probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-12;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA * z
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Selu => {
                if z > 0.0 {
                    SELU_LAMBDA
                } else {
                    SELU_LAMBDA * SELU_ALPHA * z.exp()
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Selu => "selu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "selu" => Ok(Activation::Selu),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Network shape. An empty `hidden_widths` is logistic regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

/// Where one dense layer lives inside the flat parameter vector.
/// Weights are row-major `(out_dim, in_dim)`, followed by the biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: usize,
    pub biases: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = MlpArchitecture {
            input_dim,
            hidden_widths,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn logistic(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, Vec::new(), Activation::Identity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut offset = 0;
        let mut in_dim = self.input_dim;
        for &out_dim in self.hidden_widths.iter().chain(std::iter::once(&1)) {
            let weights = offset;
            let biases = weights + in_dim * out_dim;
            offset = biases + out_dim;
            shapes.push(LayerShape {
                in_dim,
                out_dim,
                weights,
                biases,
            });
            in_dim = out_dim;
        }
        shapes
    }

    /// Parameter count D.
    pub fn param_count(&self) -> usize {
        self.layers().last().map_or(0, |l| l.biases + l.out_dim)
    }
}

/// Reusable per-thread buffers for forward and backward passes.
#[derive(Debug, Default)]
pub struct Scratch {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Scratch {
    pub fn new(arch: &MlpArchitecture) -> Self {
        Scratch {
            pre: arch.hidden_widths.iter().map(|&w| vec![0.0; w]).collect(),
            post: arch.hidden_widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    fn ensure(&mut self, arch: &MlpArchitecture) {
        let fits = self.pre.len() == arch.hidden_widths.len()
            && self.pre.iter().zip(&arch.hidden_widths).all(|(v, &w)| v.len() == w);
        if !fits {
            *self = Scratch::new(arch);
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy of a (clamped) probability.
#[inline]
pub fn bce(p: f64, y: u8) -> f64 {
    let p = clamp_prob(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub arch: MlpArchitecture,
    pub params: ParamVector,
}

impl MlpModel {
    pub fn new(arch: MlpArchitecture, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        let d = arch.param_count();
        if params.len() != d {
            return Err(Error::input(format!(
                "parameter vector has length {}, architecture needs {d}",
                params.len()
            )));
        }
        if !params.is_finite() {
            return Err(Error::input("parameter vector has non-finite entries"));
        }
        Ok(MlpModel { arch, params })
    }

    pub fn zeros(arch: MlpArchitecture) -> Result<Self> {
        let d = arch.param_count();
        Self::new(arch, ParamVector::zeros(d))
    }

    /// Seeded uniform fan-in initialization: every weight and bias of a layer
    /// is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(arch: MlpArchitecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(arch, &mut rng)
    }

    pub fn init_with(arch: MlpArchitecture, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let mut params = vec![0.0; arch.param_count()];
        for layer in arch.layers() {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            let end = layer.biases + layer.out_dim;
            for p in &mut params[layer.weights..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Self::new(arch, ParamVector::from_vec(params))
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        Self::new(self.arch.clone(), params)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn scratch(&self) -> Scratch {
        Scratch::new(&self.arch)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::input(format!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature vector has non-finite entries"));
        }
        Ok(())
    }

    /// Logit for unchecked input, filling the scratch activations.
    pub fn logit_with(&self, params: &[f64], x: &[f64], scratch: &mut Scratch) -> f64 {
        scratch.ensure(&self.arch);
        let act = self.arch.activation;
        let layers = self.arch.layers();
        let hidden = layers.len() - 1;
        for (l, layer) in layers[..hidden].iter().enumerate() {
            let (done, rest) = scratch.post.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            let pre = &mut scratch.pre[l];
            let post = &mut rest[0];
            for j in 0..layer.out_dim {
                let row = &params[layer.weights + j * layer.in_dim..][..layer.in_dim];
                let z = dot(row, input) + params[layer.biases + j];
                pre[j] = z;
                post[j] = act.apply(z);
            }
        }
        let out = &layers[hidden];
        let input: &[f64] = if hidden == 0 { x } else { &scratch.post[hidden - 1] };
        dot(&params[out.weights..][..out.in_dim], input) + params[out.biases]
    }

    /// Adds `upstream(logit) * d logit / d theta` into `out` and returns the
    /// logit. `upstream` sees the logit before the backward pass starts.
    pub fn backprop_with(
        &self,
        params: &[f64],
        x: &[f64],
        out: &mut [f64],
        scratch: &mut Scratch,
        upstream: impl FnOnce(f64) -> f64,
    ) -> f64 {
        let logit = self.logit_with(params, x, scratch);
        let scale = upstream(logit);
        if scale == 0.0 {
            return logit;
        }
        let act = self.arch.activation;
        let layers = self.arch.layers();
        scratch.delta.clear();
        scratch.delta.push(scale);
        for l in (0..layers.len()).rev() {
            let layer = layers[l];
            let input: &[f64] = if l == 0 { x } else { &scratch.post[l - 1] };
            for j in 0..layer.out_dim {
                let d = scratch.delta[j];
                if d == 0.0 {
                    continue;
                }
                axpy(d, input, &mut out[layer.weights + j * layer.in_dim..][..layer.in_dim]);
                out[layer.biases + j] += d;
            }
            if l == 0 {
                break;
            }
            scratch.delta_prev.clear();
            scratch.delta_prev.resize(layer.in_dim, 0.0);
            for j in 0..layer.out_dim {
                let d = scratch.delta[j];
                if d == 0.0 {
                    continue;
                }
                axpy(d, &params[layer.weights + j * layer.in_dim..][..layer.in_dim], &mut scratch.delta_prev);
            }
            for (dp, &z) in scratch.delta_prev.iter_mut().zip(&scratch.pre[l - 1]) {
                *dp *= act.derivative(z);
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
        }
        logit
    }

    /// Predicted probability `h_theta(x)`, clamped away from 0 and 1.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(clamp_prob(sigmoid(self.logit_with(&self.params, x, &mut self.scratch()))))
    }

    pub(crate) fn prob_unchecked(&self, x: &[f64], scratch: &mut Scratch) -> f64 {
        clamp_prob(sigmoid(self.logit_with(&self.params, x, scratch)))
    }

    pub fn loss_instance(&self, x: &[f64], y: u8) -> Result<f64> {
        check_label(y)?;
        Ok(bce(self.forward(x)?, y))
    }

    /// Exact gradient of [`MlpModel::loss_instance`] with respect to all parameters.
    pub fn grad_instance(&self, x: &[f64], y: u8) -> Result<ParamVector> {
        check_label(y)?;
        self.check_input(x)?;
        let mut g = ParamVector::zeros(self.dim());
        self.add_loss_grad(x, y, 1.0, &mut g, &mut self.scratch());
        Ok(g)
    }

    /// Adds `weight * grad loss(x, y)` into `out`; returns the probability.
    pub(crate) fn add_loss_grad(&self, x: &[f64], y: u8, weight: f64, out: &mut [f64], scratch: &mut Scratch) -> f64 {
        let mut p = 0.0;
        self.backprop_with(&self.params, x, out, scratch, |z| {
            p = sigmoid(z);
            weight * (p - f64::from(y))
        });
        clamp_prob(p)
    }

    /// Gradient of the predicted probability `h_theta(x)`.
    pub fn prob_grad(&self, x: &[f64]) -> Result<ParamVector> {
        self.check_input(x)?;
        let mut g = ParamVector::zeros(self.dim());
        self.add_prob_grad(x, 1.0, &mut g, &mut self.scratch());
        Ok(g)
    }

    pub(crate) fn add_prob_grad(&self, x: &[f64], weight: f64, out: &mut [f64], scratch: &mut Scratch) -> f64 {
        let mut p = 0.0;
        self.backprop_with(&self.params, x, out, scratch, |z| {
            p = sigmoid(z);
            weight * p * (1.0 - p)
        });
        clamp_prob(p)
    }

    /// Probabilities for every row of `data`.
    pub fn predict_proba(&self, data: &TabularDataset) -> Result<Vec<f64>> {
        self.check_width(data)?;
        Ok(par::map_range(data.len(), |n| {
            PROBS_SCRATCH.with(|s| self.prob_unchecked(data.row(n), &mut s.borrow_mut()))
        }))
    }

    /// Hard accuracy at the 0.5 threshold.
    pub fn accuracy(&self, data: &TabularDataset) -> Result<f64> {
        let probs = self.predict_proba(data)?;
        let hits = probs
            .iter()
            .zip(data.labels())
            .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
            .count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    /// Mean binary cross-entropy over `data`.
    pub fn mean_loss(&self, data: &TabularDataset) -> Result<f64> {
        let probs = self.predict_proba(data)?;
        let total = probs.iter().zip(data.labels()).fold(0.0, |acc, (&p, &y)| acc + bce(p, y));
        Ok(total / data.len().max(1) as f64)
    }

    pub(crate) fn check_width(&self, data: &TabularDataset) -> Result<()> {
        if data.n_features() != self.arch.input_dim {
            return Err(Error::input(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }
}

thread_local! {
    static PROBS_SCRATCH: std::cell::RefCell<Scratch> = std::cell::RefCell::new(Scratch::default());
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::input(format!("label {y} is not in {{0, 1}}")));
    }
    Ok(())
}

/// `sum_n weight(n) * grad loss_n` over the rows of `data`, in the fixed
/// block order of [`par::block_sum`].
pub fn weighted_loss_grad_sum(model: &MlpModel, data: &TabularDataset, weight: impl Fn(usize) -> f64 + Sync + Send) -> ParamVector {
    let sum = par::block_sum(data.len(), model.dim(), |range, acc| {
        let mut scratch = model.scratch();
        for n in range {
            let w = weight(n);
            if w != 0.0 {
                model.add_loss_grad(data.row(n), data.label(n), w, acc, &mut scratch);
            }
        }
    });
    ParamVector::from_vec(sum)
}

/// Mean per-instance loss gradient `(1/N) sum_n g_n`.
pub fn mean_grad(model: &MlpModel, data: &TabularDataset) -> Result<ParamVector> {
    if data.is_empty() {
        return Err(Error::input("mean gradient of an empty dataset"));
    }
    model.check_width(data)?;
    let mut g = weighted_loss_grad_sum(model, data, |_| 1.0);
    g.scale(1.0 / data.len() as f64);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_check;

    fn logistic_with(w: f64, b: f64) -> MlpModel {
        let arch = MlpArchitecture::logistic(1).unwrap();
        MlpModel::new(arch, ParamVector::from_vec(vec![w, b])).unwrap()
    }

    #[test]
    fn param_count_and_layout() {
        let arch = MlpArchitecture::new(3, vec![4, 2], Activation::Relu).unwrap();
        assert_eq!(arch.param_count(), 3 * 4 + 4 + 4 * 2 + 2 + 2 + 1);
        let layers = arch.layers();
        assert_eq!(layers[0].biases, 12);
        assert_eq!(layers[1].weights, 16);
        assert_eq!(layers[2].in_dim, 2);
        assert_eq!(MlpArchitecture::logistic(5).unwrap().param_count(), 6);
    }

    #[test]
    fn invalid_architectures() {
        assert!(MlpArchitecture::new(0, vec![], Activation::Selu).is_err());
        assert!(MlpArchitecture::new(2, vec![3, 0], Activation::Selu).is_err());
    }

    #[test]
    fn zero_logistic_predicts_half() {
        let m = MlpModel::zeros(MlpArchitecture::logistic(3).unwrap()).unwrap();
        assert_eq!(m.forward(&[1.0, -7.0, 3.5]).unwrap(), 0.5);
    }

    #[test]
    fn zero_relu_net_predicts_half() {
        let arch = MlpArchitecture::new(2, vec![8], Activation::Relu).unwrap();
        let m = MlpModel::zeros(arch).unwrap();
        assert_eq!(m.forward(&[4.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn logistic_forward_value() {
        let m = logistic_with(2.0, -1.0);
        let p = m.forward(&[1.0]).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn forward_input_errors() {
        let m = logistic_with(1.0, 0.0);
        assert!(m.forward(&[1.0, 2.0]).is_err());
        assert!(m.forward(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn loss_values() {
        let zero = logistic_with(0.0, 0.0);
        assert!((zero.loss_instance(&[1.0], 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let m = logistic_with(2.0, -1.0);
        assert!((m.loss_instance(&[1.0], 1).unwrap() - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!((m.loss_instance(&[1.0], 0).unwrap() - 1.313_261_687_518_222_8).abs() < 1e-12);
        assert!(m.loss_instance(&[1.0], 2).is_err());
    }

    #[test]
    fn probabilities_are_clamped() {
        let m = logistic_with(1e4, 0.0);
        let hi = m.forward(&[1.0]).unwrap();
        let lo = m.forward(&[-1.0]).unwrap();
        assert!(hi < 1.0 && lo > 0.0);
        assert!(m.loss_instance(&[1.0], 0).unwrap().is_finite());
        assert!(m.loss_instance(&[-1.0], 1).unwrap().is_finite());
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let m = logistic_with(0.0, 0.0);
        let g = m.grad_instance(&[1.0], 1).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, -0.5]);
    }

    #[test]
    fn gradients_are_deterministic() {
        let arch = MlpArchitecture::new(3, vec![5, 4], Activation::Selu).unwrap();
        let m = MlpModel::init(arch, 3).unwrap();
        let a = m.grad_instance(&[0.3, -1.2, 0.8], 1).unwrap();
        let b = m.grad_instance(&[0.3, -1.2, 0.8], 1).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn prob_gradient_matches_finite_differences() {
        let arch = MlpArchitecture::new(3, vec![4], Activation::Selu).unwrap();
        let m = MlpModel::init(arch, 11).unwrap();
        let x = [0.5, -0.25, 1.5];
        let g = m.prob_grad(&x).unwrap();
        let f = |theta: &[f64]| {
            let mm = m.with_params(ParamVector::from_vec(theta.to_vec())).unwrap();
            mm.forward(&x).unwrap()
        };
        assert!(finite_diff_check(f, &g, &m.params) < 1e-5);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = MlpArchitecture::new(4, vec![16], Activation::Selu).unwrap();
        let a = MlpModel::init(arch.clone(), 9).unwrap();
        let b = MlpModel::init(arch.clone(), 9).unwrap();
        let c = MlpModel::init(arch, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.params[..64].iter().all(|w| w.abs() <= 0.5));
    }
}
