//! Kernel-regularized prediction-error baseline: ridge regression of `y_t`
//! on its `n` past values with a DI/TC penalty on the predictor coefficients.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::PredictorPolynomial;
use crate::covariance::TimeSeries;
use crate::error::{Error, Result};
use crate::kernels::{Hyperparameters, KernelFamily, KernelSpec};

/// Lagged regression `target = X a + e` with `X[t, k] = y_{t-k}`,
/// `t = n+1..=N`, `k = 1..=n`.
#[derive(Clone, Debug)]
pub struct PemDesign {
    x: DMatrix<f64>,
    target: DVector<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    order: usize,
}

/// Fitted predictor with the quantities the hyperparameter search needs.
#[derive(Clone, Debug)]
pub struct PemFit {
    pub predictor: DVector<f64>,
    pub residual_ss: f64,
    pub penalty: f64,
    pub b: PredictorPolynomial,
    pub df: f64,
    /// `log det(I + lambda X K X^T)`.
    pub log_det: f64,
}

impl PemDesign {
    pub fn new(y: &TimeSeries, order: usize) -> Result<Self> {
        let len = y.len();
        if order == 0 || len <= 2 * order {
            return Err(Error::InvalidOrder { order, len });
        }
        let s = y.samples();
        let rows = len - order;
        let x = DMatrix::from_fn(rows, order, |r, k| s[order + r - (k + 1)]);
        let target = DVector::from_column_slice(&s[order..]);
        let gram = x.tr_mul(&x);
        let xty = x.tr_mul(&target);
        Ok(Self {
            x,
            target,
            gram,
            xty,
            order,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }

    /// Prior covariance of the predictor: the trailing `n x n` block of the
    /// size-`n+1` kernel, which equals `beta` times the size-`n` kernel.
    fn prior(&self, family: KernelFamily, beta: f64) -> Result<KernelSpec> {
        KernelSpec::new(family, beta, self.order)
    }

    /// `sum (y_t - a^T x_t)^2 + lambda^{-1} a^T K^{-1} a`.
    pub fn penalized_objective(
        &self,
        a: &DVector<f64>,
        family: KernelFamily,
        eta: &Hyperparameters,
    ) -> Result<f64> {
        if a.len() != self.order {
            return Err(Error::DimensionMismatch {
                expected: self.order,
                got: a.len(),
            });
        }
        let precision = self.prior(family, eta.beta())?.precision() / eta.beta();
        let rss = (&self.target - &self.x * a).norm_squared();
        Ok(rss + (a.transpose() * precision * a)[0] / eta.lambda())
    }

    pub fn fit(&self, family: KernelFamily, eta: &Hyperparameters) -> Result<PemFit> {
        let spec = self.prior(family, eta.beta())?;
        let penalty_matrix = spec.precision() / (eta.beta() * eta.lambda());
        let system = &self.gram + &penalty_matrix;
        let chol = Cholesky::new(system)
            .ok_or_else(|| Error::Internal("regularized normal equations are singular".into()))?;
        let a = chol.solve(&self.xty);
        let residual_ss = (&self.target - &self.x * &a).norm_squared();
        let penalty = (a.transpose() * &penalty_matrix * &a)[0];
        let sigma = (residual_ss / self.rows() as f64).sqrt();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidData("zero prediction error variance".into()));
        }
        let mut coeffs = Vec::with_capacity(self.order + 1);
        coeffs.push(1.0 / sigma);
        coeffs.extend(a.iter().map(|ak| -ak / sigma));

        let df = chol.solve(&self.gram).trace();
        let n = self.order as f64;
        let log_det_lk = n * (eta.lambda() * eta.beta()).ln() + spec.log_det();
        let log_det_a: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        Ok(PemFit {
            predictor: a,
            residual_ss,
            penalty,
            b: PredictorPolynomial::new(coeffs)?,
            df,
            log_det: log_det_lk + log_det_a,
        })
    }

    /// Negative log marginal likelihood of the regression with prior
    /// `a ~ N(0, sigma^2 lambda K)` and the noise variance profiled out:
    /// `m/2 log(S/m) + 1/2 log det(I + lambda X K X^T)`, where `S` is the
    /// minimal penalized objective.
    pub fn neg_log_marginal(&self, family: KernelFamily, eta: &Hyperparameters) -> Result<f64> {
        let fit = self.fit(family, eta)?;
        let m = self.rows() as f64;
        let s = fit.residual_ss + fit.penalty;
        Ok(0.5 * m * (s / m).ln() + 0.5 * fit.log_det)
    }
}

/// Kernel-PEM estimate `b(z) = (1 - sum_k a_k z^{-k}) / sigma`, where `a`
/// minimizes the penalized one-step prediction error and `sigma^2` is the
/// mean squared residual. Minimum phase is not guaranteed.
pub fn kernel_pem(
    y: &TimeSeries,
    order: usize,
    family: KernelFamily,
    eta: &Hyperparameters,
) -> Result<PredictorPolynomial> {
    Ok(PemDesign::new(y, order)?.fit(family, eta)?.b)
}
