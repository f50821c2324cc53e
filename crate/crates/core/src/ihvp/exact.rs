use nalgebra::{DMatrix, DVector};

use super::{check_rhs, hvp, IhvpConfig, Objective};
use crate::error::{Error, Result};
use crate::par;
use crate::param::ParamVector;

/// LU factorization of the damped, symmetrized finite-difference Hessian.
pub struct ExactSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
}

impl ExactSolver {
    pub fn factor<O: Objective + ?Sized>(obj: &O, cfg: &IhvpConfig) -> Result<Self> {
        let d = obj.dim();
        if d > cfg.exact_cap {
            return Err(Error::Capacity { dim: d, cap: cfg.exact_cap });
        }
        let columns = par::map_range(d, |j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            hvp(obj, &e)
        });
        let h = DMatrix::from_fn(d, d, |i, j| 0.5 * (columns[j][i] + columns[i][j]) + if i == j { cfg.damping } else { 0.0 });
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solve("Hessian has non-finite entries".into()));
        }
        let lu = h.lu();
        if !lu.is_invertible() {
            return Err(Error::Solve(format!("damped Hessian (lambda = {}) is singular", cfg.damping)));
        }
        Ok(ExactSolver { lu, dim: d })
    }

    pub fn solve(&self, v: &[f64]) -> Result<ParamVector> {
        if v.len() != self.dim {
            return Err(Error::input("right-hand side length does not match the Hessian"));
        }
        let x = self
            .lu
            .solve(&DVector::from_column_slice(v))
            .ok_or_else(|| Error::Solve("LU solve failed".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solve("solution has non-finite entries".into()));
        }
        Ok(ParamVector::from_vec(x.as_slice().to_vec()))
    }
}

/// `(H + lambda I)^{-1} v` by a dense solve.
pub fn exact<O: Objective + ?Sized>(obj: &O, v: &[f64], cfg: &IhvpConfig) -> Result<ParamVector> {
    cfg.validate()?;
    check_rhs(obj, v)?;
    ExactSolver::factor(obj, cfg)?.solve(v)
}
