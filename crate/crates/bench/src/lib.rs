//! Shared fixtures for the criterion benchmarks.

use kmespec_core::{
    build_toeplitz, build_whittle_design, cholesky, estimate_lags, generate, preliminary_b0, ArmaModel,
    JitterPolicy, TimeSeries, ToeplitzCovariance, WhittleDesign,
};

/// `len` samples of the reference process.
pub fn reference_series(len: usize, seed: u64) -> TimeSeries {
    generate(&ArmaModel::reference(), len, seed, 2000).expect("reference model is valid")
}

/// Covariance and Whittle design at `order` for `y`.
pub fn design(y: &TimeSeries, order: usize) -> (ToeplitzCovariance, WhittleDesign) {
    let policy = JitterPolicy::default();
    let cov = build_toeplitz(&estimate_lags(y, order).expect("order < len")).expect("valid lags");
    let factor = cholesky(&cov, policy).expect("positive definite");
    let b0 = preliminary_b0(y, 4, policy).expect("positive definite");
    let design = build_whittle_design(&factor, b0, y.len()).expect("order < len");
    (cov, design)
}
