//! Sample covariance lags, the Toeplitz matrix they define, and its
//! (optionally jittered) Cholesky factor.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite real sample `y_1 .. y_N` with `N >= 2` and finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidData(format!(
                "a time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "sample {} is not finite ({})",
                i + 1,
                samples[i]
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Biased covariance estimates `r_k = (1/N) sum_{t=1}^{N-k} y_t y_{t+k}` for
/// `k = 0..=order`.
pub fn estimate_lags(y: &TimeSeries, order: usize) -> Result<Vec<f64>> {
    let samples = y.samples();
    let len = samples.len();
    if order >= len {
        return Err(Error::InvalidOrder { order, len });
    }
    let scale = 1.0 / len as f64;
    Ok((0..=order)
        .map(|k| {
            samples[..len - k]
                .iter()
                .zip(&samples[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * scale
        })
        .collect())
}

/// Covariance lags `r_0..r_n` together with the symmetric Toeplitz matrix
/// `S[i][j] = r_{|i-j|}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzCovariance {
    lags: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl ToeplitzCovariance {
    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    /// Model order `n`; the matrix is `(n+1) x (n+1)`.
    pub fn order(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn size(&self) -> usize {
        self.lags.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

pub fn build_toeplitz(lags: &[f64]) -> Result<ToeplitzCovariance> {
    if lags.is_empty() {
        return Err(Error::InvalidData("empty lag sequence".into()));
    }
    if lags.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidData("non-finite covariance lag".into()));
    }
    let size = lags.len();
    let matrix = DMatrix::from_fn(size, size, |i, j| lags[i.abs_diff(j)]);
    Ok(ToeplitzCovariance {
        lags: lags.to_vec(),
        matrix,
    })
}

/// What to do when the Toeplitz matrix fails to factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JitterPolicy {
    /// Fail with `NotPositiveDefinite`.
    Forbid,
    /// Add `eps * I` with `eps = initial * r_0`, multiplying `eps` by
    /// `factor` up to `max_escalations` more times.
    Escalate {
        initial: f64,
        factor: f64,
        max_escalations: u32,
    },
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy::Escalate {
            initial: 1e-8,
            factor: 10.0,
            max_escalations: 4,
        }
    }
}

/// Lower-triangular `L` with positive diagonal and `L L^T = S + jitter * I`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Diagonal loading that was needed; `0.0` when the matrix factored as is.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn size(&self) -> usize {
        self.l.nrows()
    }
}

pub fn cholesky(cov: &ToeplitzCovariance, policy: JitterPolicy) -> Result<CholeskyFactor> {
    let matrix = cov.matrix();
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(CholeskyFactor {
            l: chol.unpack(),
            jitter: 0.0,
        });
    }
    let JitterPolicy::Escalate {
        initial,
        factor,
        max_escalations,
    } = policy
    else {
        return Err(Error::NotPositiveDefinite { max_jitter: 0.0 });
    };

    let r0 = cov.lags()[0].abs();
    let mut eps = initial * r0;
    let mut tried = 0.0;
    for _ in 0..=max_escalations {
        if eps > 0.0 {
            let mut loaded = matrix.clone();
            for i in 0..loaded.nrows() {
                loaded[(i, i)] += eps;
            }
            tried = eps;
            if let Some(chol) = Cholesky::new(loaded) {
                return Ok(CholeskyFactor {
                    l: chol.unpack(),
                    jitter: eps,
                });
            }
        }
        eps *= factor;
    }
    Err(Error::NotPositiveDefinite { max_jitter: tried })
}
