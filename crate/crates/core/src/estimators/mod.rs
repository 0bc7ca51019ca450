//! Maximum-entropy (Yule-Walker) estimation, the kernel-regularized
//! generalization, and the kernel-PEM baseline.
//!
//! Every estimator returns the coefficients of `b(z) = sum_k b_k z^{-k}`,
//! the inverse of a spectral factor, so the spectrum is `1 / |b(e^{jt})|^2`.

mod pem;
mod roots;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::{
    build_toeplitz, cholesky, estimate_lags, CholeskyFactor, JitterPolicy, TimeSeries,
    ToeplitzCovariance,
};
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, scaled_inverse_r, Hyperparameters, KernelFamily};

pub use pem::{kernel_pem, PemDesign};
pub use roots::{check_min_phase, polynomial_roots};

/// Coefficients `[b_0, .., b_n]` of `b(z) = sum_k b_k z^{-k}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PredictorPolynomial {
    coeffs: Vec<f64>,
}

impl PredictorPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidData("empty polynomial".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidData("non-finite polynomial coefficient".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn is_null(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coeffs)
    }

    fn from_vector(v: DVector<f64>) -> Result<Self> {
        Self::new(v.as_slice().to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum MethodTag {
    #[serde(rename = "ME")]
    Me,
    #[serde(rename = "ME_DI")]
    MeDi,
    #[serde(rename = "ME_TC")]
    MeTc,
    #[serde(rename = "PEM_DI")]
    PemDi,
    #[serde(rename = "PEM_TC")]
    PemTc,
}

impl MethodTag {
    pub const ALL: [MethodTag; 5] = [
        MethodTag::Me,
        MethodTag::MeDi,
        MethodTag::MeTc,
        MethodTag::PemDi,
        MethodTag::PemTc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Me => "ME",
            MethodTag::MeDi => "ME_DI",
            MethodTag::MeTc => "ME_TC",
            MethodTag::PemDi => "PEM_DI",
            MethodTag::PemTc => "PEM_TC",
        }
    }

    /// Kernel used by the method, `None` for plain ME.
    pub fn kernel(&self) -> Option<KernelFamily> {
        match self {
            MethodTag::Me => None,
            MethodTag::MeDi | MethodTag::PemDi => Some(KernelFamily::Diagonal),
            MethodTag::MeTc | MethodTag::PemTc => Some(KernelFamily::TunedCorrelated),
        }
    }

    pub fn is_pem(&self) -> bool {
        matches!(self, MethodTag::PemDi | MethodTag::PemTc)
    }
}

impl TryFrom<String> for MethodTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    /// Accepts both the CLI spelling (`me-di`) and the tag (`ME_DI`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "me" => Ok(MethodTag::Me),
            "me-di" => Ok(MethodTag::MeDi),
            "me-tc" => Ok(MethodTag::MeTc),
            "pem-di" => Ok(MethodTag::PemDi),
            "pem-tc" => Ok(MethodTag::PemTc),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Output of any estimator, with the runtime minimum-phase verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub method: MethodTag,
    pub b_hat: PredictorPolynomial,
    pub eta_hat: Option<Hyperparameters>,
    pub df: f64,
    pub min_phase_verified: bool,
    pub max_root_modulus: f64,
    pub jitter_used: f64,
    pub chosen_n: Option<usize>,
    pub objective_value: Option<f64>,
    pub evaluations: Option<usize>,
}

/// A Yule-Walker solve together with `a_0 = (Sigma^{-1})_{00}`.
#[derive(Clone, Debug, PartialEq)]
pub struct YuleWalkerFit {
    pub b: PredictorPolynomial,
    /// Inverse one-step prediction error variance.
    pub a0: f64,
    pub jitter: f64,
}

fn unit_vector(size: usize) -> DVector<f64> {
    let mut v = DVector::zeros(size);
    v[0] = 1.0;
    v
}

/// Solves `Sigma a = v` through the given factor and returns `b = a / sqrt(a_0)`.
pub fn yule_walker_from_factor(factor: &CholeskyFactor) -> Result<YuleWalkerFit> {
    let l = factor.l();
    let size = l.nrows();
    let w = l
        .solve_lower_triangular(&unit_vector(size))
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let a = l
        .tr_solve_lower_triangular(&w)
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let a0 = w.norm_squared();
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            max_jitter: factor.jitter(),
        });
    }
    Ok(YuleWalkerFit {
        b: PredictorPolynomial::from_vector(a / a0.sqrt())?,
        a0,
        jitter: factor.jitter(),
    })
}

pub fn yule_walker_fit(cov: &ToeplitzCovariance, policy: JitterPolicy) -> Result<YuleWalkerFit> {
    yule_walker_from_factor(&cholesky(cov, policy)?)
}

/// Yule-Walker estimate `b = a / sqrt(a_0)`, `a = Sigma^{-1} v`; the matrix
/// must factor without jitter.
pub fn yule_walker(cov: &ToeplitzCovariance) -> Result<PredictorPolynomial> {
    Ok(yule_walker_fit(cov, JitterPolicy::Forbid)?.b)
}

/// Order-selected maximum-entropy fit.
#[derive(Clone, Debug, PartialEq)]
pub struct BicFit {
    pub b: PredictorPolynomial,
    pub chosen_n: usize,
    /// `bic[i]` is the criterion at order `i + 1`.
    pub bic: Vec<f64>,
    pub jitter: f64,
}

/// Fits Yule-Walker at every order `1..=n_max` and keeps the one minimizing
/// `N log(1 / a_0(n)) + n log N` (first minimum wins ties).
pub fn me_bic(y: &TimeSeries, n_max: usize, policy: JitterPolicy) -> Result<BicFit> {
    if n_max == 0 {
        return Err(Error::InvalidOrder {
            order: 0,
            len: y.len(),
        });
    }
    let lags = estimate_lags(y, n_max)?;
    let len = y.len() as f64;
    let mut best: Option<(f64, usize, YuleWalkerFit)> = None;
    let mut bic = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let fit = yule_walker_fit(&build_toeplitz(&lags[..=n])?, policy)?;
        let value = len * (1.0 / fit.a0).ln() + n as f64 * len.ln();
        bic.push(value);
        if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, n, fit));
        }
    }
    let (_, chosen_n, fit) = best.expect("at least one order");
    Ok(BicFit {
        b: fit.b,
        chosen_n,
        bic,
        jitter: fit.jitter,
    })
}

/// `b0 = sqrt(a_0)` from a Yule-Walker fit of order `low_order`, i.e. the
/// inverse innovation standard deviation of a short AR model.
pub fn preliminary_b0(y: &TimeSeries, low_order: usize, policy: JitterPolicy) -> Result<f64> {
    let cov = build_toeplitz(&estimate_lags(y, low_order)?)?;
    Ok(yule_walker_fit(&cov, policy)?.a0.sqrt())
}

/// Data term of the regularized least-squares form:
/// `v~ = sqrt(N-n) / b0 * L^{-1} v`, `Phi = sqrt(N-n) L^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct WhittleDesign {
    pub v_tilde: DVector<f64>,
    pub phi_data: DMatrix<f64>,
    pub b0_prelim: f64,
    pub sample_len: usize,
    pub order: usize,
    /// Jitter carried over from the factor; `L L^T = Sigma + jitter I`.
    pub jitter: f64,
}

impl WhittleDesign {
    pub fn effective_len(&self) -> usize {
        self.sample_len - self.order
    }
}

pub fn build_whittle_design(
    factor: &CholeskyFactor,
    b0_prelim: f64,
    sample_len: usize,
) -> Result<WhittleDesign> {
    let size = factor.size();
    let order = size - 1;
    if sample_len <= order {
        return Err(Error::InvalidOrder {
            order,
            len: sample_len,
        });
    }
    if !(b0_prelim > 0.0 && b0_prelim.is_finite()) {
        return Err(Error::InvalidData(format!(
            "preliminary b0 must be positive, got {b0_prelim}"
        )));
    }
    let root = ((sample_len - order) as f64).sqrt();
    let l = factor.l();
    let w = l
        .solve_lower_triangular(&unit_vector(size))
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    Ok(WhittleDesign {
        v_tilde: w * (root / b0_prelim),
        phi_data: l.transpose() * root,
        b0_prelim,
        sample_len,
        order,
        jitter: factor.jitter(),
    })
}

fn loaded(cov: &ToeplitzCovariance, jitter: f64) -> DMatrix<f64> {
    let mut m = cov.matrix().clone();
    if jitter > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
    }
    m
}

/// Kernel-regularized ME estimate, `b = b0^{-1} (Sigma + R)^{-1} v` with
/// `R = ((N-n) lambda K)^{-1}`.
///
/// This is the minimizer of `|v~ - Phi b|^2 + lambda^{-1} |b|^2_{K^{-1}}`.
/// The scaling uses the preliminary `b0` carried by the design.
pub fn kernel_me(
    design: &WhittleDesign,
    cov: &ToeplitzCovariance,
    family: KernelFamily,
    eta: &Hyperparameters,
) -> Result<PredictorPolynomial> {
    let size = design.order + 1;
    if cov.size() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: cov.size(),
        });
    }
    let spec = eta.kernel(family, size)?;
    let system = loaded(cov, design.jitter) + scaled_inverse_r(&spec, eta.lambda(), design.sample_len)?;
    let chol = Cholesky::new(system)
        .ok_or_else(|| Error::Internal("Sigma + R is not positive definite".into()))?;
    let b = chol.solve(&unit_vector(size)) / design.b0_prelim;
    PredictorPolynomial::from_vector(b)
}

/// The same estimate through `lambda K Phi^T (lambda Phi K Phi^T + I)^{-1} v~`.
///
/// Independent of `R`; kept as the cross-check for [`kernel_me`].
pub fn kernel_me_regularized_ls(
    design: &WhittleDesign,
    family: KernelFamily,
    eta: &Hyperparameters,
) -> Result<PredictorPolynomial> {
    let size = design.order + 1;
    let spec = eta.kernel(family, size)?;
    let phi_t = design.phi_data.transpose();
    let mut m = spec.congruence(&phi_t)? * eta.lambda();
    for i in 0..size {
        m[(i, i)] += 1.0;
    }
    let x = Cholesky::new(m)
        .ok_or_else(|| Error::Internal("lambda Phi K Phi^T + I is not positive definite".into()))?
        .solve(&design.v_tilde);
    let b = kernel_matrix(&spec) * (phi_t * x) * eta.lambda();
    PredictorPolynomial::from_vector(b)
}
