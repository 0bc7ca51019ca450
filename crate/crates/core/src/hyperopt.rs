//! Empirical-Bayes tuning of `(lambda, beta)` and the end-to-end estimation
//! pipelines.
//!
//! The search is a fixed grid followed by Nelder-Mead in
//! `(ln lambda, logit beta)`, which keeps the iterates inside the open box
//! `lambda > 0`, `0 < beta < 1` without clipping.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::covariance::{build_toeplitz, cholesky, estimate_lags, JitterPolicy, TimeSeries, ToeplitzCovariance};
use crate::diagnostics::{degrees_of_freedom_for, me_degrees_of_freedom};
use crate::error::{Error, PipelineStep, Result};
use crate::estimators::{
    build_whittle_design, check_min_phase, kernel_me, me_bic, preliminary_b0, EstimateResult, MethodTag,
    PemDesign, WhittleDesign,
};
use crate::kernels::{Hyperparameters, KernelFamily};

/// Anything the search can minimize. Invalid or failing points should map to
/// `f64::INFINITY`.
pub trait HyperObjective {
    fn value(&self, eta: &Hyperparameters) -> f64;
}

impl<F: Fn(&Hyperparameters) -> f64> HyperObjective for F {
    fn value(&self, eta: &Hyperparameters) -> f64 {
        self(eta)
    }
}

/// Negative log marginal likelihood of the kernel-ME model.
#[derive(Clone, Debug)]
pub struct MarginalObjective {
    design: WhittleDesign,
    family: KernelFamily,
    phi_t: DMatrix<f64>,
}

impl MarginalObjective {
    pub fn new(design: WhittleDesign, family: KernelFamily) -> Self {
        let phi_t = design.phi_data.transpose();
        Self { design, family, phi_t }
    }

    pub fn design(&self) -> &WhittleDesign {
        &self.design
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// `1/2 log det M + 1/2 v~^T M^{-1} v~` with `M = lambda Phi K Phi^T + I`;
    /// additive constants are dropped.
    pub fn neg_log_marginal(&self, eta: &Hyperparameters) -> Result<f64> {
        let size = self.design.order + 1;
        let spec = eta.kernel(self.family, size)?;
        let mut m = spec.congruence(&self.phi_t)? * eta.lambda();
        for i in 0..size {
            m[(i, i)] += 1.0;
        }
        let chol = Cholesky::new(m).ok_or_else(|| Error::Internal("M is not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let w = chol
            .l()
            .solve_lower_triangular(&self.design.v_tilde)
            .ok_or_else(|| Error::Internal("singular factor of M".into()))?;
        Ok(0.5 * log_det + 0.5 * w.norm_squared())
    }
}

impl HyperObjective for MarginalObjective {
    fn value(&self, eta: &Hyperparameters) -> f64 {
        self.neg_log_marginal(eta).unwrap_or(f64::INFINITY)
    }
}

/// Profiled marginal likelihood of the kernel-PEM regression.
pub struct PemObjective<'a> {
    pub design: &'a PemDesign,
    pub family: KernelFamily,
}

impl HyperObjective for PemObjective<'_> {
    fn value(&self, eta: &Hyperparameters) -> f64 {
        self.design
            .neg_log_marginal(self.family, eta)
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    }
}

/// Stage-one grid: `log10 lambda` and `beta` on inclusive uniform ladders.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub log10_lambda_min: f64,
    pub log10_lambda_max: f64,
    pub log10_lambda_step: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            log10_lambda_min: -4.0,
            log10_lambda_max: 4.0,
            log10_lambda_step: 0.5,
            beta_min: 0.05,
            beta_max: 0.95,
            beta_step: 0.05,
        }
    }
}

fn ladder(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && max >= min) {
        return Err(Error::Config(format!("invalid grid range [{min}, {max}]")));
    }
    if max == min {
        return Ok(vec![min]);
    }
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + step * i as f64).collect())
}

impl GridSpec {
    /// A single grid point.
    pub fn point(lambda: f64, beta: f64) -> Self {
        let l = lambda.log10();
        Self {
            log10_lambda_min: l,
            log10_lambda_max: l,
            log10_lambda_step: 1.0,
            beta_min: beta,
            beta_max: beta,
            beta_step: 1.0,
        }
    }

    pub fn lambdas(&self) -> Result<Vec<f64>> {
        Ok(ladder(self.log10_lambda_min, self.log10_lambda_max, self.log10_lambda_step)?
            .into_iter()
            .map(|e| 10f64.powf(e))
            .collect())
    }

    pub fn betas(&self) -> Result<Vec<f64>> {
        let b = ladder(self.beta_min, self.beta_max, self.beta_step)?;
        if b.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::Config("grid betas must lie in (0, 1)".into()));
        }
        Ok(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperoptConfig {
    pub grid: GridSpec,
    pub refine: bool,
    pub max_evaluations: usize,
    /// Simplex diameter, in transformed coordinates, at which refinement stops.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for HyperoptConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            refine: true,
            max_evaluations: 500,
            tolerance: 1e-6,
            initial_step: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub lambda: f64,
    pub beta: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperoptResult {
    pub eta_hat: Hyperparameters,
    pub objective_value: f64,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Recorder<'a, O: ?Sized> {
    objective: &'a O,
    trace: Vec<TracePoint>,
}

impl<O: HyperObjective + ?Sized> Recorder<'_, O> {
    fn eval(&mut self, lambda: f64, beta: f64) -> f64 {
        let value = match Hyperparameters::new(lambda, beta) {
            Ok(eta) => self.objective.value(&eta),
            Err(_) => f64::INFINITY,
        };
        let value = if value.is_nan() { f64::INFINITY } else { value };
        self.trace.push(TracePoint { lambda, beta, value });
        value
    }

    fn eval_transformed(&mut self, x: [f64; 2]) -> f64 {
        self.eval(x[0].exp(), logistic(x[1]))
    }
}

fn diameter(simplex: &[[f64; 2]; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            let dx = simplex[i][0] - simplex[j][0];
            let dy = simplex[i][1] - simplex[j][1];
            d = d.max((dx * dx + dy * dy).sqrt());
        }
    }
    d
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2) on a 2-D problem.
fn nelder_mead<O: HyperObjective + ?Sized>(rec: &mut Recorder<'_, O>, start: [f64; 2], cfg: &HyperoptConfig) {
    let h = cfg.initial_step;
    let mut simplex = [start, [start[0] + h, start[1]], [start[0], start[1] + h]];
    let mut values = [0.0; 3];
    for (v, x) in values.iter_mut().zip(&simplex) {
        *v = rec.eval_transformed(*x);
    }
    let mut used = 3;
    let combine = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    while used < cfg.max_evaluations && diameter(&simplex) >= cfg.tolerance {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let centroid = combine(simplex[0], simplex[1], 0.5);
        let reflected = combine(centroid, simplex[2], -1.0);
        let fr = rec.eval_transformed(reflected);
        used += 1;
        if fr < values[0] {
            let expanded = combine(centroid, simplex[2], -2.0);
            let fe = rec.eval_transformed(expanded);
            used += 1;
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[2] {
            let c = combine(centroid, reflected, 0.5);
            (c, rec.eval_transformed(c))
        } else {
            let c = combine(centroid, simplex[2], 0.5);
            (c, rec.eval_transformed(c))
        };
        used += 1;
        if fc < values[2].min(fr) {
            simplex[2] = contracted;
            values[2] = fc;
            continue;
        }
        for i in 1..3 {
            if used >= cfg.max_evaluations {
                break;
            }
            simplex[i] = combine(simplex[0], simplex[i], 0.5);
            values[i] = rec.eval_transformed(simplex[i]);
            used += 1;
        }
    }
}

/// Grid search followed by optional Nelder-Mead refinement from the best grid
/// point. The returned point is the best one evaluated overall.
pub fn optimize_hyperparameters<O: HyperObjective + ?Sized>(
    objective: &O,
    cfg: &HyperoptConfig,
) -> Result<HyperoptResult> {
    let lambdas = cfg.grid.lambdas()?;
    let betas = cfg.grid.betas()?;
    let mut rec = Recorder {
        objective,
        trace: Vec::with_capacity(lambdas.len() * betas.len() + cfg.max_evaluations),
    };
    let mut best = (f64::INFINITY, lambdas[0], betas[0]);
    for &beta in &betas {
        for &lambda in &lambdas {
            let v = rec.eval(lambda, beta);
            if v < best.0 {
                best = (v, lambda, beta);
            }
        }
    }
    if cfg.refine && best.0.is_finite() {
        nelder_mead(&mut rec, [best.1.ln(), logit(best.2)], cfg);
    }
    let winner = rec
        .trace
        .iter()
        .filter(|p| Hyperparameters::new(p.lambda, p.beta).is_ok())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .copied()
        .unwrap_or(TracePoint {
            lambda: best.1,
            beta: best.2,
            value: best.0,
        });
    Ok(HyperoptResult {
        eta_hat: Hyperparameters::new(winner.lambda, winner.beta)?,
        objective_value: winner.value,
        evaluations: rec.trace.len(),
        trace: rec.trace,
    })
}

/// Settings shared by all estimation pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// AR order of the kernel methods, and the largest order BIC considers.
    pub order: usize,
    /// AR order of the preliminary `b0` fit.
    pub low_order: usize,
    pub hyperopt: HyperoptConfig,
    pub jitter: JitterPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            order: 50,
            low_order: 4,
            hyperopt: HyperoptConfig::default(),
            jitter: JitterPolicy::default(),
        }
    }
}

/// Everything the kernel-ME pipeline computes along the way.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub result: EstimateResult,
    pub covariance: ToeplitzCovariance,
    pub hyperopt: HyperoptResult,
}

fn kernel_me_tag(family: KernelFamily) -> MethodTag {
    match family {
        KernelFamily::Diagonal => MethodTag::MeDi,
        KernelFamily::TunedCorrelated => MethodTag::MeTc,
    }
}

fn pem_tag(family: KernelFamily) -> MethodTag {
    match family {
        KernelFamily::Diagonal => MethodTag::PemDi,
        KernelFamily::TunedCorrelated => MethodTag::PemTc,
    }
}

/// Kernel-ME estimation: preliminary `b0`, Toeplitz covariance, Cholesky,
/// Whittle design, marginal-likelihood tuning, regularized estimate.
pub fn run_pipeline_detailed(
    y: &TimeSeries,
    order: usize,
    family: KernelFamily,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let b0 = preliminary_b0(y, cfg.low_order, cfg.jitter).map_err(Error::at(PipelineStep::PreliminaryB0))?;
    if order >= y.len() {
        return Err(Error::at(PipelineStep::Order)(Error::InvalidOrder { order, len: y.len() }));
    }
    let cov = estimate_lags(y, order)
        .and_then(|lags| build_toeplitz(&lags))
        .map_err(Error::at(PipelineStep::Covariance))?;
    let factor = cholesky(&cov, cfg.jitter).map_err(Error::at(PipelineStep::Factorization))?;
    let design = build_whittle_design(&factor, b0, y.len()).map_err(Error::at(PipelineStep::Design))?;
    let objective = MarginalObjective::new(design, family);
    let hyper =
        optimize_hyperparameters(&objective, &cfg.hyperopt).map_err(Error::at(PipelineStep::Hyperparameters))?;
    let eta = hyper.eta_hat;
    let design = objective.design;
    let b = kernel_me(&design, &cov, family, &eta).map_err(Error::at(PipelineStep::Estimate))?;

    let mut sigma = cov.matrix().clone();
    for i in 0..sigma.nrows() {
        sigma[(i, i)] += design.jitter;
    }
    let df = degrees_of_freedom_for(&sigma, family, &eta, y.len()).map_err(Error::at(PipelineStep::Diagnostics))?;
    let (min_phase, max_modulus) = check_min_phase(&b).map_err(Error::at(PipelineStep::Diagnostics))?;
    Ok(PipelineOutput {
        result: EstimateResult {
            method: kernel_me_tag(family),
            b_hat: b,
            eta_hat: Some(eta),
            df,
            min_phase_verified: min_phase,
            max_root_modulus: max_modulus,
            jitter_used: design.jitter,
            chosen_n: None,
            objective_value: Some(hyper.objective_value),
            evaluations: Some(hyper.evaluations),
        },
        covariance: cov,
        hyperopt: hyper,
    })
}

pub fn run_pipeline(y: &TimeSeries, order: usize, family: KernelFamily, cfg: &PipelineConfig) -> Result<EstimateResult> {
    Ok(run_pipeline_detailed(y, order, family, cfg)?.result)
}

/// Plain ME with the order chosen by BIC over `1..=n_max`.
pub fn run_me(y: &TimeSeries, n_max: usize, cfg: &PipelineConfig) -> Result<EstimateResult> {
    let fit = me_bic(y, n_max, cfg.jitter)?;
    let (min_phase, max_modulus) = check_min_phase(&fit.b)?;
    Ok(EstimateResult {
        method: MethodTag::Me,
        b_hat: fit.b,
        eta_hat: None,
        df: me_degrees_of_freedom(fit.chosen_n),
        min_phase_verified: min_phase,
        max_root_modulus: max_modulus,
        jitter_used: fit.jitter,
        chosen_n: Some(fit.chosen_n),
        objective_value: None,
        evaluations: None,
    })
}

/// Kernel-PEM baseline with `(lambda, beta)` tuned on the regression's own
/// marginal likelihood.
pub fn run_pem(y: &TimeSeries, order: usize, family: KernelFamily, cfg: &PipelineConfig) -> Result<EstimateResult> {
    let design = PemDesign::new(y, order)?;
    let hyper = optimize_hyperparameters(&PemObjective { design: &design, family }, &cfg.hyperopt)?;
    if !hyper.objective_value.is_finite() {
        return Err(Error::Internal("no finite marginal likelihood on the grid".into()));
    }
    let fit = design.fit(family, &hyper.eta_hat)?;
    let (min_phase, max_modulus) = check_min_phase(&fit.b)?;
    Ok(EstimateResult {
        method: pem_tag(family),
        b_hat: fit.b,
        eta_hat: Some(hyper.eta_hat),
        df: fit.df,
        min_phase_verified: min_phase,
        max_root_modulus: max_modulus,
        jitter_used: 0.0,
        chosen_n: None,
        objective_value: Some(hyper.objective_value),
        evaluations: Some(hyper.evaluations),
    })
}

/// Runs one method with the configured order.
pub fn estimate(method: MethodTag, y: &TimeSeries, cfg: &PipelineConfig) -> Result<EstimateResult> {
    match method {
        MethodTag::Me => run_me(y, cfg.order, cfg),
        MethodTag::MeDi => run_pipeline(y, cfg.order, KernelFamily::Diagonal, cfg),
        MethodTag::MeTc => run_pipeline(y, cfg.order, KernelFamily::TunedCorrelated, cfg),
        MethodTag::PemDi => run_pem(y, cfg.order, KernelFamily::Diagonal, cfg),
        MethodTag::PemTc => run_pem(y, cfg.order, KernelFamily::TunedCorrelated, cfg),
    }
}
