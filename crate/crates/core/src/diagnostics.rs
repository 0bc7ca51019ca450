//! Effective model complexity of the regularized estimate.

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::covariance::ToeplitzCovariance;
use crate::error::{Error, Result};
use crate::kernels::{scaled_inverse_r, Hyperparameters, KernelFamily};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub df: f64,
    pub n_plus_1: usize,
    /// `1 - df / (n + 1)`.
    pub effective_shrinkage: f64,
}

impl DiagnosticsReport {
    pub fn new(df: f64, n_plus_1: usize) -> Self {
        Self {
            df,
            n_plus_1,
            effective_shrinkage: 1.0 - df / n_plus_1 as f64,
        }
    }
}

/// `df = tr[(Sigma + R)^{-1} Sigma]` with `R = ((N - n) lambda K)^{-1}`.
pub fn degrees_of_freedom(
    cov: &ToeplitzCovariance,
    family: KernelFamily,
    eta: &Hyperparameters,
    sample_len: usize,
) -> Result<f64> {
    degrees_of_freedom_for(cov.matrix(), family, eta, sample_len)
}

/// Same as [`degrees_of_freedom`] for an arbitrary symmetric `Sigma`, e.g. a
/// jittered covariance.
pub fn degrees_of_freedom_for(
    sigma: &DMatrix<f64>,
    family: KernelFamily,
    eta: &Hyperparameters,
    sample_len: usize,
) -> Result<f64> {
    let spec = eta.kernel(family, sigma.nrows())?;
    let r = scaled_inverse_r(&spec, eta.lambda(), sample_len)?;
    let chol = Cholesky::new(sigma + r).ok_or(Error::NotPositiveDefinite { max_jitter: 0.0 })?;
    Ok(chol.solve(sigma).trace())
}

pub fn report(
    cov: &ToeplitzCovariance,
    family: KernelFamily,
    eta: &Hyperparameters,
    sample_len: usize,
) -> Result<DiagnosticsReport> {
    let df = degrees_of_freedom(cov, family, eta, sample_len)?;
    Ok(DiagnosticsReport::new(df, cov.size()))
}

/// Plain ME spends one degree of freedom per coefficient.
pub fn me_degrees_of_freedom(chosen_n: usize) -> f64 {
    (chosen_n + 1) as f64
}
