//! Diagonal (DI) and tuned-correlated (TC) kernels.
//!
//! Kernel entries are defined with 1-based indices `t, s = 1..=n+1`; storage
//! is 0-based, so entry `(i, j)` holds the value at `t = i + 1`, `s = j + 1`.
//!
//! Everything downstream works with the precision `K^{-1}` in structured
//! form (diagonal for DI, `F diag(d) F^T` for TC). `K_TC` is badly
//! conditioned for `beta` close to one, so it is never inverted numerically.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "DI")]
    Diagonal,
    #[serde(rename = "TC")]
    TunedCorrelated,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Diagonal => "DI",
            KernelFamily::TunedCorrelated => "TC",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "di" | "diagonal" => Ok(KernelFamily::Diagonal),
            "tc" | "tuned-correlated" => Ok(KernelFamily::TunedCorrelated),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "beta must lie in (0, 1), got {beta}"
        )))
    }
}

/// Kernel family, decay rate and matrix size `n + 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    beta: f64,
    size: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, beta: f64, size: usize) -> Result<Self> {
        check_beta(beta)?;
        if size == 0 {
            return Err(Error::InvalidHyperparameter("kernel size must be >= 1".into()));
        }
        Ok(Self { family, beta, size })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `log det K`, from the closed-form determinant of the structured
    /// precision.
    pub fn log_det(&self) -> f64 {
        let lb = self.beta.ln();
        let m = self.size as f64;
        match self.family {
            // sum_{k=1}^{m} k log beta
            KernelFamily::Diagonal => lb * m * (m + 1.0) / 2.0,
            // det F = 1, D_k = beta^{-(k-1)} / (beta - beta^2)
            KernelFamily::TunedCorrelated => {
                m * (self.beta - self.beta * self.beta).ln() + lb * m * (m - 1.0) / 2.0
            }
        }
    }

    /// Diagonal of `D` in `K^{-1} = F diag(D) F^T` (TC), or of `K^{-1}` itself
    /// (DI).
    fn precision_weights(&self) -> DVector<f64> {
        match self.family {
            KernelFamily::Diagonal => {
                DVector::from_fn(self.size, |i, _| self.beta.powi(-(i as i32 + 1)))
            }
            KernelFamily::TunedCorrelated => {
                let c = 1.0 / (self.beta - self.beta * self.beta);
                DVector::from_fn(self.size, |i, _| c * self.beta.powi(-(i as i32)))
            }
        }
    }

    /// `K^{-1}` assembled from its structured form.
    pub fn precision(&self) -> DMatrix<f64> {
        let w = self.precision_weights();
        match self.family {
            KernelFamily::Diagonal => DMatrix::from_diagonal(&w),
            KernelFamily::TunedCorrelated => bidiagonal_congruence(&w),
        }
    }

    /// `A^T K A` without forming `K`.
    ///
    /// For TC, `K = F^{-T} D^{-1} F^{-1}` and `F^{-1}` is the cumulative-sum
    /// operator, so `A^T K A = C^T D^{-1} C` with `C` the running row sums of
    /// `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != self.size {
            return Err(Error::DimensionMismatch {
                expected: self.size,
                got: a.nrows(),
            });
        }
        let w = self.precision_weights();
        let mut c = a.clone();
        if self.family == KernelFamily::TunedCorrelated {
            for i in 1..c.nrows() {
                for j in 0..c.ncols() {
                    c[(i, j)] += c[(i - 1, j)];
                }
            }
        }
        for i in 0..c.nrows() {
            let s = w[i].recip().sqrt();
            c.row_mut(i).scale_mut(s);
        }
        Ok(c.tr_mul(&c))
    }
}

/// `F diag(w) F^T` with `F` unit lower-bidiagonal (`-1` on the subdiagonal).
fn bidiagonal_congruence(w: &DVector<f64>) -> DMatrix<f64> {
    let m = w.len();
    let mut r = DMatrix::zeros(m, m);
    for k in 0..m {
        // column k of F is e_k - e_{k+1}
        r[(k, k)] += w[k];
        if k + 1 < m {
            r[(k + 1, k + 1)] += w[k];
            r[(k, k + 1)] -= w[k];
            r[(k + 1, k)] -= w[k];
        }
    }
    r
}

/// Scale factor `lambda > 0` and decay rate `beta in (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hyperparameters {
    lambda: f64,
    beta: f64,
}

impl Hyperparameters {
    pub fn new(lambda: f64, beta: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_beta(beta)?;
        Ok(Self { lambda, beta })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kernel(&self, family: KernelFamily, size: usize) -> Result<KernelSpec> {
        KernelSpec::new(family, self.beta, size)
    }
}

/// Dense kernel matrix.
///
/// DI: `diag(beta, beta^2, .., beta^{n+1})`.
/// TC: `beta^{max(t,s)} - beta^{n+2}`.
pub fn kernel_matrix(spec: &KernelSpec) -> DMatrix<f64> {
    let m = spec.size;
    let beta = spec.beta;
    match spec.family {
        KernelFamily::Diagonal => {
            DMatrix::from_fn(m, m, |i, j| if i == j { beta.powi(i as i32 + 1) } else { 0.0 })
        }
        KernelFamily::TunedCorrelated => {
            let tail = beta.powi(m as i32 + 1);
            DMatrix::from_fn(m, m, |i, j| beta.powi(i.max(j) as i32 + 1) - tail)
        }
    }
}

/// Which kernel a [`KernelFactorization`] describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorizationVariant {
    TcInverse,
    DiInverse,
}

/// `K^{-1} = F diag(d) F^T`. For DI, `F` is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelFactorization {
    pub f: DMatrix<f64>,
    pub d: DVector<f64>,
    pub variant: FactorizationVariant,
}

impl KernelFactorization {
    pub fn new(spec: &KernelSpec) -> Self {
        let m = spec.size;
        let d = spec.precision_weights();
        match spec.family {
            KernelFamily::Diagonal => Self {
                f: DMatrix::identity(m, m),
                d,
                variant: FactorizationVariant::DiInverse,
            },
            KernelFamily::TunedCorrelated => Self {
                f: DMatrix::from_fn(m, m, |i, j| {
                    if i == j {
                        1.0
                    } else if i == j + 1 {
                        -1.0
                    } else {
                        0.0
                    }
                }),
                d,
                variant: FactorizationVariant::TcInverse,
            },
        }
    }

    /// `F diag(d) F^T` as a dense matrix.
    pub fn precision(&self) -> DMatrix<f64> {
        &self.f * DMatrix::from_diagonal(&self.d) * self.f.transpose()
    }
}

/// `R = ((N - n) lambda K)^{-1}` in structured form, where `n + 1` is the
/// kernel size and `N` the sample length.
///
/// DI: `r_k = ((N-n) lambda beta^k)^{-1}`, `k = 1..=n+1`.
/// TC: `F diag(d) F^T` with `d_k = ((N-n) lambda beta^{k-1} (beta - beta^2))^{-1}`.
pub fn scaled_inverse_r(spec: &KernelSpec, lambda: f64, sample_len: usize) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let n = spec.size - 1;
    if sample_len <= n {
        return Err(Error::InvalidOrder {
            order: n,
            len: sample_len,
        });
    }
    let scale = 1.0 / ((sample_len - n) as f64 * lambda);
    Ok(spec.precision() * scale)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "lambda must be positive and finite, got {lambda}"
        )))
    }
}
