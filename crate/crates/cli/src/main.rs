//! `kmespec`: kernel-regularized maximum-entropy spectral estimation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 excessive trial
//! failures in a Monte Carlo run.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kmespec_core::harness::{
    estimate_file, run_monte_carlo, run_single_trial, ExperimentConfig, ExperimentKind, MAX_FAILURE_FRACTION,
};
use kmespec_core::{Error, MethodTag};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_FAILURES: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "kmespec", version, about = "Kernel-regularized maximum-entropy spectral estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One dataset from the fixed reference ARMA model.
    Single(Common),
    /// Randomized Monte Carlo study.
    Montecarlo(Common),
    /// Estimate spectra of a user-supplied one-column CSV series.
    Estimate {
        /// Input CSV (one column, optional `y` header).
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (the data seed for `single`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods: me, me-di, me-tc, pem-di, pem-tc.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodTag>>,
    /// Number of samples N.
    #[arg(long = "samples", short = 'N')]
    samples: Option<usize>,
    /// Model order n.
    #[arg(long, short = 'n')]
    order: Option<usize>,
    /// Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    pole_modulus: Option<f64>,
    #[arg(long)]
    zero_modulus: Option<f64>,
    #[arg(long)]
    max_phase_gap: Option<f64>,
    /// Conjugate pole/zero pairs of the random models.
    #[arg(long)]
    pairs: Option<usize>,
    /// Frequency grid size.
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// AR order of the preliminary b0 fit.
    #[arg(long)]
    low_order: Option<usize>,
    /// Skip Nelder-Mead refinement after the grid search.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    max_evaluations: Option<usize>,
    /// Also write timing.csv with per-record wall-clock times.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn resolve(&self, kind: ExperimentKind) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(file_kind) = cfg.experiment {
            if file_kind != kind {
                anyhow::bail!("config file is for {file_kind:?}, not {kind:?}");
            }
        }
        cfg.experiment = Some(kind);
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            seed => master_seed,
            out => output_path,
            methods => methods,
            samples => samples,
            order => order,
            runs => runs,
            pole_modulus => pole_modulus,
            zero_modulus => zero_modulus,
            max_phase_gap => max_phase_gap,
            pairs => pairs,
            grid_size => grid_size,
            burn_in => burn_in,
            low_order => low_order,
            max_evaluations => max_evaluations
        );
        if self.no_refine {
            cfg.refine = false;
        }
        if self.timing {
            cfg.record_timing = true;
        }
        Ok(cfg)
    }
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Single(common) => {
            let cfg = common.resolve(ExperimentKind::SingleTrial).map_err(usage)?;
            cfg.validate().map_err(usage)?;
            let out = run_single_trial(&cfg).map_err(data)?;
            out.write(&cfg.output_path, cfg.record_timing)
                .with_context(|| format!("writing {}", cfg.output_path.display()))
                .map_err(data)?;
            println!("method\tstatus\terror\tdf\tmin_phase");
            for r in &out.records {
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.method,
                    r.status,
                    fmt_opt(r.reconstruction_error),
                    fmt_opt(r.df),
                    r.min_phase_verified.map_or("-".into(), |b| b.to_string())
                );
            }
            Ok(0)
        }
        Command::Montecarlo(common) => {
            let cfg = common.resolve(ExperimentKind::MonteCarlo).map_err(usage)?;
            cfg.validate().map_err(usage)?;
            let out = run_monte_carlo(&cfg).map_err(data)?;
            out.write(&cfg.output_path, cfg.record_timing)
                .with_context(|| format!("writing {}", cfg.output_path.display()))
                .map_err(data)?;
            println!("method\tok\tfailed\tmedian\tnon_min_phase");
            for m in &out.summary.methods {
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    m.method,
                    m.ok,
                    m.failed,
                    fmt_opt(m.median),
                    m.non_min_phase
                );
            }
            if out.excessive_failures() {
                eprintln!(
                    "error: {:.1}% of records failed (limit {:.0}%)",
                    100.0 * out.failure_fraction(),
                    100.0 * MAX_FAILURE_FRACTION
                );
                return Ok(EXIT_FAILURES);
            }
            Ok(0)
        }
        Command::Estimate { input, common } => {
            let cfg = common.resolve(ExperimentKind::EstimateFile).map_err(usage)?;
            let out = estimate_file(&cfg, &input).map_err(|e| match e {
                Error::Config(_) | Error::InvalidHyperparameter(_) => usage(e),
                e => Failure::Data(anyhow::Error::new(e).context(format!("input {}", input.display()))),
            })?;
            out.write(&cfg.output_path)
                .with_context(|| format!("writing {}", cfg.output_path.display()))
                .map_err(data)?;
            println!("method\tstatus\tdf\tmax_root_modulus");
            for m in &out.estimates {
                let (df, rho) = m
                    .estimate
                    .as_ref()
                    .map_or((None, None), |e| (Some(e.df), Some(e.max_root_modulus)));
                println!("{}\t{}\t{}\t{}", m.method, m.status, fmt_opt(df), fmt_opt(rho));
            }
            Ok(0)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
