//! Experiment runner: the fixed-model single trial, the randomized Monte
//! Carlo study, and estimation on user-supplied series.
//!
//! Output files (all written into the output directory):
//!
//! * `spectra.csv`: `theta,truth,<METHOD>...` (no `truth` column for
//!   `estimate`). One row per grid point, `theta_k = -pi + 2 pi k / G`.
//! * `records.csv`: `run,method,status,reconstruction_error,df,lambda,beta,`
//!   `min_phase_verified,max_root_modulus,chosen_n,jitter_used`. Rows are
//!   ordered by run, then by method in `ME, ME_DI, ME_TC, PEM_DI, PEM_TC`
//!   order. Fields that do not apply are left empty.
//! * `summary.json`: per-method boxplot statistics of the reconstruction
//!   error (Monte Carlo only).
//! * `estimates.json`: full estimates (`estimate` only).
//! * `timing.csv`: `run,method,wall_time_ms`, only when timing is enabled,
//!   since wall-clock times differ between otherwise identical runs.
//!
//! Floats are printed with Rust's shortest round-trip formatting.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{JitterPolicy, TimeSeries};
use crate::error::{Error, Result};
use crate::estimators::{EstimateResult, MethodTag};
use crate::hyperopt::{estimate, GridSpec, HyperoptConfig, PipelineConfig};
use crate::simulate::{
    eval_spectrum, frequency_grid, generate, random_arma, reconstruction_error_values, ArmaModel,
    RandomArmaConfig, SpectrumModel, DEFAULT_BURN_IN, DEFAULT_GRID_SIZE,
};

/// Fraction of failed Monte Carlo records above which the run is reported as
/// failed.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleTrial,
    MonteCarlo,
    EstimateFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional in config files; the CLI subcommand must agree with it.
    pub experiment: Option<ExperimentKind>,
    pub methods: Vec<MethodTag>,
    #[serde(alias = "N")]
    pub samples: usize,
    #[serde(alias = "n")]
    pub order: usize,
    pub runs: usize,
    #[serde(alias = "seed")]
    pub master_seed: u64,
    pub pole_modulus: f64,
    pub zero_modulus: f64,
    pub max_phase_gap: f64,
    pub pairs: usize,
    pub grid_size: usize,
    pub burn_in: usize,
    pub low_order: usize,
    pub hyperopt_grid: GridSpec,
    pub refine: bool,
    pub max_evaluations: usize,
    pub jitter: JitterPolicy,
    pub output_path: PathBuf,
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let arma = RandomArmaConfig::default();
        let hyper = HyperoptConfig::default();
        Self {
            experiment: None,
            methods: MethodTag::ALL.to_vec(),
            samples: 500,
            order: 50,
            runs: 100,
            master_seed: 0,
            pole_modulus: arma.pole_modulus,
            zero_modulus: arma.zero_modulus,
            max_phase_gap: arma.max_phase_gap,
            pairs: arma.pairs,
            grid_size: DEFAULT_GRID_SIZE,
            burn_in: DEFAULT_BURN_IN,
            low_order: 4,
            hyperopt_grid: hyper.grid,
            refine: hyper.refine,
            max_evaluations: hyper.max_evaluations,
            jitter: JitterPolicy::default(),
            output_path: PathBuf::from("results"),
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Methods deduplicated and in canonical order.
    pub fn canonical_methods(&self) -> Vec<MethodTag> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            order: self.order,
            low_order: self.low_order,
            hyperopt: HyperoptConfig {
                grid: self.hyperopt_grid,
                refine: self.refine,
                max_evaluations: self.max_evaluations,
                ..HyperoptConfig::default()
            },
            jitter: self.jitter,
        }
    }

    pub fn random_arma(&self) -> RandomArmaConfig {
        RandomArmaConfig {
            pole_modulus: self.pole_modulus,
            zero_modulus: self.zero_modulus,
            pairs: self.pairs,
            max_phase_gap: self.max_phase_gap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.order == 0 {
            return Err(Error::Config("order n must be at least 1".into()));
        }
        if self.order >= self.samples {
            return Err(Error::InvalidOrder {
                order: self.order,
                len: self.samples,
            });
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid size must be at least 2".into()));
        }
        self.hyperopt_grid.lambdas()?;
        self.hyperopt_grid.betas()?;
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(a) ^ b)`: independent streams per `(seed, index)`,
/// stable under any execution order.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b)
}

pub fn trial_seed(master_seed: u64, run_index: usize) -> u64 {
    mix_seed(master_seed, run_index as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub run: usize,
    pub method: MethodTag,
    /// `ok`, or the error tag.
    pub status: String,
    pub error: Option<String>,
    pub reconstruction_error: Option<f64>,
    pub df: Option<f64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub min_phase_verified: Option<bool>,
    pub max_root_modulus: Option<f64>,
    pub chosen_n: Option<usize>,
    pub jitter_used: Option<f64>,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl TrialRecord {
    fn failed(run: usize, method: MethodTag, err: &Error, wall_time_ms: f64) -> Self {
        Self {
            run,
            method,
            status: err.tag().to_string(),
            error: Some(err.to_string()),
            reconstruction_error: None,
            df: None,
            lambda: None,
            beta: None,
            min_phase_verified: None,
            max_root_modulus: None,
            chosen_n: None,
            jitter_used: None,
            wall_time_ms,
        }
    }

    fn from_estimate(run: usize, est: &EstimateResult, error: f64, wall_time_ms: f64) -> Self {
        Self {
            run,
            method: est.method,
            status: "ok".into(),
            error: None,
            reconstruction_error: Some(error),
            df: Some(est.df),
            lambda: est.eta_hat.map(|e| e.lambda()),
            beta: est.eta_hat.map(|e| e.beta()),
            min_phase_verified: Some(est.min_phase_verified),
            max_root_modulus: Some(est.max_root_modulus),
            chosen_n: est.chosen_n,
            jitter_used: Some(est.jitter_used),
            wall_time_ms,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One column of a spectra table.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectraTable {
    pub theta: Vec<f64>,
    pub columns: Vec<SpectrumColumn>,
}

impl SpectraTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["theta".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)?;
        for (i, theta) in self.theta.iter().enumerate() {
            let mut row = vec![theta.to_string()];
            row.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub const RECORD_HEADER: [&str; 11] = [
    "run",
    "method",
    "status",
    "reconstruction_error",
    "df",
    "lambda",
    "beta",
    "min_phase_verified",
    "max_root_modulus",
    "chosen_n",
    "jitter_used",
];

pub fn write_records_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.run.to_string(),
            r.method.to_string(),
            r.status.clone(),
            opt(&r.reconstruction_error),
            opt(&r.df),
            opt(&r.lambda),
            opt(&r.beta),
            opt(&r.min_phase_verified),
            opt(&r.max_root_modulus),
            opt(&r.chosen_n),
            opt(&r.jitter_used),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run", "method", "wall_time_ms"])?;
    for r in records {
        w.write_record([r.run.to_string(), r.method.to_string(), r.wall_time_ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs every method on `y` and scores it against `truth`.
fn score_methods(
    run: usize,
    y: &TimeSeries,
    truth: &[f64],
    methods: &[MethodTag],
    cfg: &ExperimentConfig,
) -> (Vec<TrialRecord>, Vec<Option<EstimateResult>>) {
    let pipeline = cfg.pipeline();
    let mut records = Vec::with_capacity(methods.len());
    let mut estimates = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let outcome = estimate(method, y, &pipeline).and_then(|est| {
            let values = eval_spectrum(SpectrumModel::Estimate(&est.b_hat), cfg.grid_size)?;
            let e = reconstruction_error_values(&values.values, truth)?;
            Ok((est, values.values, e))
        });
        match outcome {
            Ok((est, _, e)) => {
                records.push(TrialRecord::from_estimate(run, &est, e, elapsed_ms(start)));
                estimates.push(Some(est));
            }
            Err(err) => {
                records.push(TrialRecord::failed(run, method, &err, elapsed_ms(start)));
                estimates.push(None);
            }
        }
    }
    (records, estimates)
}

#[derive(Clone, Debug)]
pub struct SingleTrialOutput {
    pub records: Vec<TrialRecord>,
    pub estimates: Vec<Option<EstimateResult>>,
    pub spectra: SpectraTable,
}

impl SingleTrialOutput {
    pub fn write(&self, dir: &Path, timing: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.spectra.write_csv(&dir.join("spectra.csv"))?;
        write_records_csv(&self.records, &dir.join("records.csv"))?;
        if timing {
            write_timing_csv(&self.records, &dir.join("timing.csv"))?;
        }
        Ok(())
    }
}

/// One dataset from the fixed reference model, seeded directly by
/// `master_seed`, estimated by every requested method.
pub fn run_single_trial(cfg: &ExperimentConfig) -> Result<SingleTrialOutput> {
    cfg.validate()?;
    let model = ArmaModel::reference();
    let y = generate(&model, cfg.samples, cfg.master_seed, cfg.burn_in)?;
    run_single_on_series(cfg, &model, &y)
}

pub fn run_single_on_series(cfg: &ExperimentConfig, model: &ArmaModel, y: &TimeSeries) -> Result<SingleTrialOutput> {
    let truth = eval_spectrum(SpectrumModel::Truth(model), cfg.grid_size)?.values;
    let methods = cfg.canonical_methods();
    let (records, estimates) = score_methods(1, y, &truth, &methods, cfg);
    let mut columns = vec![SpectrumColumn {
        name: "truth".into(),
        values: truth,
    }];
    for est in estimates.iter().flatten() {
        columns.push(SpectrumColumn {
            name: est.method.to_string(),
            values: eval_spectrum(SpectrumModel::Estimate(&est.b_hat), cfg.grid_size)?.values,
        });
    }
    Ok(SingleTrialOutput {
        records,
        estimates,
        spectra: SpectraTable {
            theta: frequency_grid(cfg.grid_size),
            columns,
        },
    })
}

/// Boxplot statistics of the reconstruction error for one method. Quartiles
/// interpolate linearly between order statistics; outliers fall outside
/// `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: MethodTag,
    pub ok: usize,
    pub failed: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub outliers: usize,
    pub non_min_phase: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub records: usize,
    pub failed: usize,
    pub methods: Vec<MethodSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(records: &[TrialRecord], methods: &[MethodTag], runs: usize) -> Summary {
    let per_method = methods
        .iter()
        .map(|&method| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.method == method).collect();
            let mut errors: Vec<f64> = mine.iter().filter_map(|r| r.reconstruction_error).collect();
            errors.sort_by(f64::total_cmp);
            let ok = errors.len();
            let non_min_phase = mine.iter().filter(|r| r.min_phase_verified == Some(false)).count();
            if errors.is_empty() {
                return MethodSummary {
                    method,
                    ok,
                    failed: mine.len() - ok,
                    min: None,
                    q1: None,
                    median: None,
                    q3: None,
                    max: None,
                    outliers: 0,
                    non_min_phase,
                };
            }
            let q1 = quantile(&errors, 0.25);
            let q3 = quantile(&errors, 0.75);
            let iqr = q3 - q1;
            let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
            MethodSummary {
                method,
                ok,
                failed: mine.len() - ok,
                min: Some(errors[0]),
                q1: Some(q1),
                median: Some(quantile(&errors, 0.5)),
                q3: Some(q3),
                max: Some(errors[ok - 1]),
                outliers: errors.iter().filter(|&&e| e < lo || e > hi).count(),
                non_min_phase,
            }
        })
        .collect();
    Summary {
        runs,
        records: records.len(),
        failed: records.iter().filter(|r| !r.is_ok()).count(),
        methods: per_method,
    }
}

#[derive(Clone, Debug)]
pub struct MonteCarloOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

impl MonteCarloOutput {
    pub fn failure_fraction(&self) -> f64 {
        self.summary.failed as f64 / self.summary.records.max(1) as f64
    }

    pub fn excessive_failures(&self) -> bool {
        self.failure_fraction() > MAX_FAILURE_FRACTION
    }

    pub fn write(&self, dir: &Path, timing: bool) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_records_csv(&self.records, &dir.join("records.csv"))?;
        write_json(&self.summary, &dir.join("summary.json"))?;
        if timing {
            write_timing_csv(&self.records, &dir.join("timing.csv"))?;
        }
        Ok(())
    }
}

/// One Monte Carlo run: a random model and dataset derived from
/// `trial_seed(master_seed, run)`.
pub fn run_trial(cfg: &ExperimentConfig, run: usize, methods: &[MethodTag]) -> Vec<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, run);
    let data = random_arma(mix_seed(seed, 1), &cfg.random_arma()).and_then(|model| {
        let y = generate(&model, cfg.samples, mix_seed(seed, 2), cfg.burn_in)?;
        let truth = eval_spectrum(SpectrumModel::Truth(&model), cfg.grid_size)?.values;
        Ok((y, truth))
    });
    match data {
        Ok((y, truth)) => score_methods(run, &y, &truth, methods, cfg).0,
        Err(err) => methods.iter().map(|&m| TrialRecord::failed(run, m, &err, 0.0)).collect(),
    }
}

/// Runs `1..=runs` in parallel; records come back ordered by `(run, method)`.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloOutput> {
    cfg.validate()?;
    cfg.random_arma_check()?;
    let methods = cfg.canonical_methods();
    let records: Vec<TrialRecord> = (1..=cfg.runs)
        .into_par_iter()
        .map(|run| run_trial(cfg, run, &methods))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(&records, &methods, cfg.runs);
    Ok(MonteCarloOutput { records, summary })
}

impl ExperimentConfig {
    fn random_arma_check(&self) -> Result<()> {
        random_arma(0, &self.random_arma()).map(|_| ())
    }
}

/// Reads a one-column CSV of samples. A leading `y` header is allowed.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_series_csv(&text)
}

pub fn parse_series_csv(text: &str) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut samples = Vec::new();
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected one column, found {}", rec.len()),
            });
        }
        let field = &rec[0];
        if first && field.eq_ignore_ascii_case("y") {
            first = false;
            continue;
        }
        first = false;
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            line,
            message: format!("row {line}: `{field}` is not a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("row {line}: `{field}` is not finite"),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no samples in input".into(),
        });
    }
    TimeSeries::new(samples)
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodEstimate {
    pub method: MethodTag,
    pub status: String,
    pub error: Option<String>,
    #[serde(rename = "result")]
    pub estimate: Option<EstimateResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateFileOutput {
    pub samples: usize,
    pub order: usize,
    pub estimates: Vec<MethodEstimate>,
    #[serde(skip)]
    pub spectra: SpectraTable,
}

impl EstimateFileOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_json(self, &dir.join("estimates.json"))?;
        self.spectra.write_csv(&dir.join("spectra.csv"))?;
        Ok(())
    }
}

pub fn estimate_series(cfg: &ExperimentConfig, y: &TimeSeries) -> Result<EstimateFileOutput> {
    if cfg.order >= y.len() {
        return Err(Error::InvalidOrder {
            order: cfg.order,
            len: y.len(),
        });
    }
    let pipeline = cfg.pipeline();
    let mut estimates = Vec::new();
    let mut columns = Vec::new();
    for method in cfg.canonical_methods() {
        match estimate(method, y, &pipeline) {
            Ok(est) => {
                columns.push(SpectrumColumn {
                    name: method.to_string(),
                    values: eval_spectrum(SpectrumModel::Estimate(&est.b_hat), cfg.grid_size)?.values,
                });
                estimates.push(MethodEstimate {
                    method,
                    status: "ok".into(),
                    error: None,
                    estimate: Some(est),
                });
            }
            Err(err) => estimates.push(MethodEstimate {
                method,
                status: err.tag().into(),
                error: Some(err.to_string()),
                estimate: None,
            }),
        }
    }
    Ok(EstimateFileOutput {
        samples: y.len(),
        order: cfg.order,
        estimates,
        spectra: SpectraTable {
            theta: frequency_grid(cfg.grid_size),
            columns,
        },
    })
}

pub fn estimate_file(cfg: &ExperimentConfig, input: &Path) -> Result<EstimateFileOutput> {
    let mut checked = cfg.clone();
    checked.samples = usize::MAX;
    checked.validate()?;
    let y = read_series_csv(input)?;
    estimate_series(cfg, &y)
}
