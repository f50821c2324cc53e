use super::{check_rhs, hvp, IhvpConfig, Objective};
use crate::error::{Error, Result};
use crate::param::{self, ParamVector};

/// Iterate norms above this multiple of `|v|` count as divergence.
const DIVERGENCE_FACTOR: f64 = 1e8;

/// Truncated Neumann series for `(H + lambda I)^{-1} v`:
/// `u <- v + (I - (H + lambda I) / s) u` for `iterations` steps, then `u / s`.
///
/// Converges when the damped spectrum lies inside `(0, 2 s)`.
pub fn neumann<O: Objective + ?Sized>(obj: &O, v: &[f64], cfg: &IhvpConfig) -> Result<ParamVector> {
    cfg.validate()?;
    check_rhs(obj, v)?;
    let s = cfg.neumann_scale;
    let v_norm = param::dot(v, v).sqrt();
    if v_norm == 0.0 {
        return Ok(ParamVector::zeros(v.len()));
    }
    let mut u = v.to_vec();
    for it in 1..=cfg.iterations {
        let hu = hvp(obj, &u);
        for i in 0..u.len() {
            u[i] = v[i] + u[i] - (hu[i] + cfg.damping * u[i]) / s;
        }
        let norm = param::dot(&u, &u).sqrt();
        if norm.is_nan() || norm > DIVERGENCE_FACTOR * v_norm {
            return Err(Error::Divergence { iteration: it, norm });
        }
    }
    let mut out = ParamVector::from_vec(u);
    out.scale(1.0 / s);
    Ok(out)
}
