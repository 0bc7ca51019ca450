//! Kernel-regularized maximum-entropy spectral estimation.
//!
//! A high-order AR model `b(z) y_t = e_t` is fitted by a generalized
//! Yule-Walker system `(Sigma + R) b = v / b0`, where `R` is the scaled
//! inverse of a DI or TC kernel. The kernel hyperparameters are chosen by
//! maximizing the marginal likelihood. The resulting `b(z)` always has its
//! zeros inside the unit circle, so `1 / |b(e^{jt})|^2` is a valid spectrum.
//!
//! Modules:
//! * [`covariance`]: lag estimates, Toeplitz matrix, Cholesky with jitter.
//! * [`kernels`]: DI/TC kernels and their structured inverses.
//! * [`estimators`]: Yule-Walker, BIC order selection, kernel ME, kernel PEM.
//! * [`hyperopt`]: marginal likelihood, grid + Nelder-Mead, pipelines.
//! * [`diagnostics`]: degrees of freedom.
//! * [`simulate`]: ARMA generation, spectra, reconstruction error.
//! * [`harness`]: experiment runner and result files.

pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod hyperopt;
pub mod kernels;
pub mod simulate;

pub use covariance::{
    build_toeplitz, cholesky, estimate_lags, CholeskyFactor, JitterPolicy, TimeSeries, ToeplitzCovariance,
};
pub use diagnostics::{degrees_of_freedom, DiagnosticsReport};
pub use error::{Error, PipelineStep, Result};
pub use estimators::{
    build_whittle_design, check_min_phase, kernel_me, kernel_me_regularized_ls, kernel_pem, me_bic, preliminary_b0,
    yule_walker, EstimateResult, MethodTag, PredictorPolynomial, WhittleDesign,
};
pub use harness::{ExperimentConfig, ExperimentKind, TrialRecord};
pub use hyperopt::{
    estimate, optimize_hyperparameters, run_pipeline, HyperoptConfig, HyperoptResult, MarginalObjective,
    PipelineConfig,
};
pub use kernels::{kernel_matrix, scaled_inverse_r, Hyperparameters, KernelFamily, KernelSpec};
pub use simulate::{eval_spectrum, generate, random_arma, reconstruction_error, ArmaModel, SpectrumModel};
