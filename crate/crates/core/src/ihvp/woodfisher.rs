use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_rhs, IhvpConfig, Objective};
use crate::error::{Error, Result};
use crate::par;
use crate::param::{self, ParamVector};

/// Gradients produced per parallel batch while streaming.
const STREAM_CHUNK: usize = 128;

/// Denominators closer to zero than this abort the recurrence.
const BREAKDOWN_TOL: f64 = 1e-12;

/// Per-instance gradients in a seeded order.
pub struct GradientStream<'a, O: Objective + ?Sized> {
    obj: &'a O,
    order: Vec<usize>,
}

impl<'a, O: Objective + ?Sized> GradientStream<'a, O> {
    pub fn new(obj: &'a O, seed: u64) -> Result<Self> {
        if obj.is_empty() {
            return Err(Error::input("gradient stream over an empty training set"));
        }
        let mut order: Vec<usize> = (0..obj.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(GradientStream { obj, order })
    }

    /// A stream in the given instance order.
    pub fn with_order(obj: &'a O, order: Vec<usize>) -> Result<Self> {
        if order.is_empty() || order.iter().any(|&n| n >= obj.len()) {
            return Err(Error::input("stream order must be a non-empty list of valid indices"));
        }
        Ok(GradientStream { obj, order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Calls `f(i, g)` for the first `count` gradients in stream order.
    /// Gradients are computed in parallel chunks and delivered in order.
    pub fn for_each(&self, count: usize, mut f: impl FnMut(usize, &[f64]) -> Result<()>) -> Result<()> {
        let count = count.min(self.order.len());
        let mut start = 0;
        while start < count {
            let end = (start + STREAM_CHUNK).min(count);
            let chunk = &self.order[start..end];
            let grads = par::map_range(chunk.len(), |i| self.obj.instance_grad(chunk[i]));
            for (i, g) in grads.iter().enumerate() {
                f(start + i, g)?;
            }
            start = end;
        }
        Ok(())
    }
}

/// WoodFisher IHVP for one vector; see [`woodfisher_many`].
pub fn woodfisher<O: Objective + ?Sized>(stream: &GradientStream<'_, O>, v: &[f64], cfg: &IhvpConfig) -> Result<ParamVector> {
    let mut out = woodfisher_many(stream, &[v], cfg)?;
    Ok(out.pop().expect("one right-hand side"))
}

/// Runs the coupled recurrence
///
/// ```text
/// o_{n+1} = o_n - o_n (g_{n+1}' o_n) / (N + g_{n+1}' o_n)
/// k_{n+1} = k_n - o_n (g_{n+1}' k_n) / (N + g_{n+1}' o_n)
/// ```
///
/// from `o_1 = g_1 / lambda`, `k_1 = v / lambda` for `B - 1` updates, where
/// `B = min(iterations, N)` and `N` is the full training-set size, and
/// returns `wf_scale * k_B` for every `v`. All right-hand sides share the
/// `o` sequence, so one pass over the stream serves them all.
pub fn woodfisher_many<O: Objective + ?Sized>(
    stream: &GradientStream<'_, O>,
    vs: &[&[f64]],
    cfg: &IhvpConfig,
) -> Result<Vec<ParamVector>> {
    cfg.validate()?;
    for v in vs {
        check_rhs(stream.obj, v)?;
    }
    let n_total = stream.obj.len() as f64;
    let lambda = cfg.damping;
    let steps = cfg.iterations.min(stream.len());

    let mut o: Vec<f64> = Vec::new();
    let mut ks: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().map(|x| x / lambda).collect()).collect();
    stream.for_each(steps, |i, g| {
        if i == 0 {
            o = g.iter().map(|x| x / lambda).collect();
            return Ok(());
        }
        let t = param::dot(g, &o);
        let den = n_total + t;
        if den.is_nan() || den.abs() < BREAKDOWN_TOL {
            return Err(Error::NumericalBreakdown { step: i, denominator: den });
        }
        for k in &mut ks {
            let c = param::dot(g, k) / den;
            param::axpy(-c, &o, k);
        }
        let c = t / den;
        for x in &mut o {
            *x -= *x * c;
        }
        Ok(())
    })?;

    Ok(ks
        .into_iter()
        .map(|k| {
            let mut k = ParamVector::from_vec(k);
            k.scale(cfg.wf_scale);
            k
        })
        .collect())
}
