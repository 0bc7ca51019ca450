//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kmespec_core::estimators::yule_walker_fit;
use kmespec_core::harness::{run_monte_carlo, run_single_trial, ExperimentConfig};
use kmespec_core::kernels::KernelFactorization;
use kmespec_core::simulate::RandomArmaConfig;
use kmespec_core::{
    build_toeplitz, build_whittle_design, check_min_phase, cholesky, degrees_of_freedom, estimate_lags, generate,
    kernel_me, kernel_me_regularized_ls, preliminary_b0, random_arma, yule_walker, ArmaModel,
    Hyperparameters, JitterPolicy, KernelFamily, KernelSpec, MarginalObjective, MethodTag, TimeSeries,
    ToeplitzCovariance, WhittleDesign,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const FAMILIES: [KernelFamily; 2] = [KernelFamily::Diagonal, KernelFamily::TunedCorrelated];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// ---------------------------------------------------------------------------
// Oracles, written against plain row-major arrays.

/// Gaussian elimination with partial pivoting. Returns the solution and
/// `ln |det A|`.
fn ge_solve(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, f64) {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let mut log_det = 0.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        x.swap(k, p);
        let pivot = m[k][k];
        assert!(pivot != 0.0, "singular oracle system");
        log_det += pivot.abs().ln();
        for i in k + 1..n {
            let f = m[i][k] / pivot;
            if f != 0.0 {
                let (upper, lower) = m.split_at_mut(i);
                for (x, p) in lower[0][k..].iter_mut().zip(&upper[k][k..]) {
                    *x -= f * p;
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    (x, log_det)
}

fn ge_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| ge_solve(a, &(0..n).map(|i| f64::from(u8::from(i == j))).collect::<Vec<_>>()).0)
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

fn ge_log_det(a: &[Vec<f64>]) -> f64 {
    ge_solve(a, &vec![0.0; a.len()]).1
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn naive_lags(y: &[f64], n: usize) -> Vec<f64> {
    let len = y.len();
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for t in 0..len - k {
                s += y[t] * y[t + k];
            }
            s / len as f64
        })
        .collect()
}

/// Kernel entries from the 1-based definitions.
fn oracle_kernel(family: KernelFamily, beta: f64, size: usize) -> Vec<Vec<f64>> {
    let n = size - 1;
    (1..=size)
        .map(|t| {
            (1..=size)
                .map(|s| match family {
                    KernelFamily::Diagonal => {
                        if t == s {
                            beta.powi(t as i32)
                        } else {
                            0.0
                        }
                    }
                    KernelFamily::TunedCorrelated => beta.powi(t.max(s) as i32) - beta.powi(n as i32 + 2),
                })
                .collect()
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn unit(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    e
}

// ---------------------------------------------------------------------------
// Fixtures.

struct Fixture {
    y: TimeSeries,
    cov: ToeplitzCovariance,
    design: WhittleDesign,
}

fn fixture(y: TimeSeries, order: usize, policy: JitterPolicy) -> Fixture {
    let b0 = preliminary_b0(&y, 4, policy).unwrap();
    let cov = build_toeplitz(&estimate_lags(&y, order).unwrap()).unwrap();
    let factor = cholesky(&cov, policy).unwrap();
    let design = build_whittle_design(&factor, b0, y.len()).unwrap();
    Fixture { y, cov, design }
}

fn reference_fixture(seed: u64, order: usize) -> Fixture {
    fixture(generate(&ArmaModel::reference(), 500, seed, 2000).unwrap(), order, JitterPolicy::Forbid)
}

fn random_fixture(rng: &mut ChaCha20Rng, order: usize) -> Fixture {
    let cfg = RandomArmaConfig {
        pole_modulus: rng.gen_range(0.5..0.99),
        zero_modulus: rng.gen_range(0.1..0.95),
        ..RandomArmaConfig::default()
    };
    let model = random_arma(rng.gen(), &cfg).unwrap();
    fixture(generate(&model, 500, rng.gen(), 2000).unwrap(), order, JitterPolicy::default())
}

fn random_eta(rng: &mut ChaCha20Rng, log_lambda: (f64, f64), beta: (f64, f64)) -> Hyperparameters {
    Hyperparameters::new(10f64.powf(rng.gen_range(log_lambda.0..log_lambda.1)), rng.gen_range(beta.0..beta.1)).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria.

fn minimum_phase_invariant() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let (mut total, mut nonnull, mut bad) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..300 {
        let f = random_fixture(&mut rng, 50);
        for family in FAMILIES {
            let eta = random_eta(&mut rng, (-3.0, 3.0), (0.1, 0.95));
            let b = kernel_me(&f.design, &f.cov, family, &eta).map_err(|e| e.to_string())?;
            total += 1;
            if b.is_null() {
                continue;
            }
            nonnull += 1;
            let (ok, rho) = check_min_phase(&b).map_err(|e| e.to_string())?;
            worst = worst.max(rho);
            if !ok {
                bad += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "{nonnull}/{total} nonnull estimates, {bad} outside the unit circle, max root modulus {worst:.6}, {secs:.1}s"
    );
    if bad == 0 && total >= 500 && secs <= 300.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn lambda_limit_reduces_to_me() -> Outcome {
    let eta_beta = 0.9;
    let mut worst: f64 = 0.0;
    let mut worst_scaled: f64 = 0.0;
    let mut count = 0;
    for seed in 1..=10u64 {
        let f = reference_fixture(seed, 50);
        let size = f.cov.size();
        let (a, _) = ge_solve(&rows(f.cov.matrix()), &unit(size));
        let target: Vec<f64> = a.iter().map(|x| x / f.design.b0_prelim).collect();
        let yw = yule_walker(&f.cov).unwrap();
        for family in FAMILIES {
            let eta = Hyperparameters::new(1e12, eta_beta).unwrap();
            let b = kernel_me(&f.design, &f.cov, family, &eta).unwrap();
            worst = worst.max(rel(b.coeffs(), &target));
            // Rescaled so the leading coefficient matches sqrt(a0).
            let s = f.design.b0_prelim / a[0].sqrt();
            let scaled: Vec<f64> = b.coeffs().iter().map(|x| x * s).collect();
            worst_scaled = worst_scaled.max(rel(&scaled, yw.coeffs()));
            count += 1;
        }
    }
    let msg = format!(
        "{count} fixtures (n = 50, beta = {eta_beta}): max rel error vs a/b0 {worst:.2e}, rescaled vs YW {worst_scaled:.2e} (tol 1e-4)"
    );
    if count == 20 && worst <= 1e-4 && worst_scaled <= 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tc_factorization_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1usize, 5, 20, 50] {
        for beta in [0.05, 0.3, 0.6, 0.85, 0.95] {
            let spec = KernelSpec::new(KernelFamily::TunedCorrelated, beta, n + 1).unwrap();
            let inv = ge_inverse(&rows(&KernelFactorization::new(&spec).precision()));
            let k = oracle_kernel(KernelFamily::TunedCorrelated, beta, n + 1);
            let flat_inv: Vec<f64> = inv.concat();
            let flat_k: Vec<f64> = k.concat();
            worst = worst.max(rel(&flat_inv, &flat_k));
        }
    }
    let msg = format!("max relative Frobenius error {worst:.2e} over 20 (n, beta) pairs (tol 1e-9)");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn dual_forms_agree() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let order = rng.gen_range(2..=50);
        let f = random_fixture(&mut rng, order);
        let family = FAMILIES[i % 2];
        let eta = random_eta(&mut rng, (-3.0, 3.0), (0.1, 0.95));
        let a = kernel_me(&f.design, &f.cov, family, &eta).unwrap();
        let b = kernel_me_regularized_ls(&f.design, family, &eta).unwrap();
        worst = worst.max(rel(a.coeffs(), b.coeffs()));
    }
    let msg = format!("max relative difference {worst:.2e} over 100 instances (tol 1e-8)");
    if worst <= 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn degrees_of_freedom_properties() -> Outcome {
    let mut limit_err: f64 = 0.0;
    for seed in [1u64, 42] {
        for n in [10usize, 50] {
            let f = reference_fixture(seed, n);
            for family in FAMILIES {
                let eta = Hyperparameters::new(1e12, 0.9).unwrap();
                let df = degrees_of_freedom(&f.cov, family, &eta, 500).unwrap();
                limit_err = limit_err.max((df - (n + 1) as f64).abs());
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let (mut decreases, mut out_of_range) = (0, 0);
    let mut worst_drop: f64 = 0.0;
    let lambdas: Vec<f64> = (0..20).map(|k| 10f64.powf(-4.0 + 12.0 * k as f64 / 19.0)).collect();
    for i in 0..50 {
        let order = rng.gen_range(2..=50);
        let f = random_fixture(&mut rng, order);
        let family = FAMILIES[i % 2];
        let beta = rng.gen_range(0.1..0.95);
        let mut prev = f64::NEG_INFINITY;
        for &lambda in &lambdas {
            let eta = Hyperparameters::new(lambda, beta).unwrap();
            let df = degrees_of_freedom(&f.cov, family, &eta, f.y.len()).unwrap();
            if df < prev {
                decreases += 1;
                worst_drop = worst_drop.max(prev - df);
            }
            if !(0.0..=(order + 1) as f64).contains(&df) {
                out_of_range += 1;
            }
            prev = df;
        }
    }
    let msg = format!(
        "|df(1e12) - (n+1)| <= {limit_err:.2e} (tol 1e-4); {decreases} decreases (largest {worst_drop:.2e}) and {out_of_range} out-of-range values over 50 x 20 evaluations"
    );
    if limit_err <= 1e-4 && decreases == 0 && out_of_range == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn marginal_likelihood_correctness() -> Outcome {
    // (a) log-det identity on dense instances.
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut worst_a: f64 = 0.0;
    for i in 0..50 {
        let size = rng.gen_range(2..=10);
        let family = FAMILIES[i % 2];
        let eta = random_eta(&mut rng, (-2.0, 2.0), (0.3, 0.9));
        let phi = DMatrix::from_fn(size, size, |r, c| {
            if r == c {
                rng.gen_range(0.5..2.0)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let k = oracle_kernel(family, eta.beta(), size);
        let k_inv = ge_inverse(&k);
        let phi_rows = rows(&phi);
        let lhs_matrix: Vec<Vec<f64>> = (0..size)
            .map(|r| {
                (0..size)
                    .map(|c| (0..size).map(|t| phi_rows[t][r] * phi_rows[t][c]).sum::<f64>() + k_inv[r][c] / eta.lambda())
                    .collect()
            })
            .collect();
        let scaled_k: Vec<Vec<f64>> = k.iter().map(|row| row.iter().map(|x| x * eta.lambda()).collect()).collect();
        let lhs = 0.5 * ge_log_det(&lhs_matrix) + 0.5 * ge_log_det(&scaled_k);
        let design = WhittleDesign {
            v_tilde: DVector::zeros(size),
            phi_data: phi.clone(),
            b0_prelim: 1.0,
            sample_len: 100,
            order: size - 1,
            jitter: 0.0,
        };
        let rhs = MarginalObjective::new(design, family).neg_log_marginal(&eta).unwrap();
        worst_a = worst_a.max((lhs - rhs).abs());
    }

    // (b) Gaussian integral for n = 2 by tensor-grid quadrature.
    let ar1 = ArmaModel::new(
        vec![nalgebra::Complex::new(0.0, 0.0)],
        vec![nalgebra::Complex::new(0.5, 0.0)],
        1.0,
    )
    .unwrap();
    let mut worst_b: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    let mut literal_gap: f64 = 0.0;
    for (seed, family, lambda, beta) in [
        (11u64, KernelFamily::Diagonal, 1.0, 0.6),
        (12, KernelFamily::TunedCorrelated, 0.05, 0.8),
        (13, KernelFamily::TunedCorrelated, 3.0, 0.4),
    ] {
        let f = fixture(generate(&ar1, 500, seed, 2000).unwrap(), 2, JitterPolicy::Forbid);
        let eta = Hyperparameters::new(lambda, beta).unwrap();
        let phi = rows(&f.design.phi_data);
        let v: Vec<f64> = f.design.v_tilde.iter().copied().collect();
        let k = oracle_kernel(family, beta, 3);
        let k_inv = ge_inverse(&k);
        let scaled_k: Vec<Vec<f64>> = k.iter().map(|row| row.iter().map(|x| x * lambda).collect()).collect();
        let half_log_det_k = 0.5 * ge_log_det(&scaled_k);
        let ell = |b: &[f64; 3]| -> f64 {
            let mut fit = 0.0;
            for r in 0..3 {
                let pred: f64 = (0..3).map(|c| phi[r][c] * b[c]).sum();
                fit += (v[r] - pred).powi(2);
            }
            let mut pen = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    pen += b[r] * k_inv[r][c] * b[c];
                }
            }
            0.5 * fit + 0.5 * pen / lambda + half_log_det_k
        };
        // Hessian H = Phi^T Phi + (lambda K)^{-1} and minimizer H^{-1} Phi^T v.
        let h: Vec<Vec<f64>> = (0..3)
            .map(|r| (0..3).map(|c| (0..3).map(|t| phi[t][r] * phi[t][c]).sum::<f64>() + k_inv[r][c] / lambda).collect())
            .collect();
        let rhs: Vec<f64> = (0..3).map(|r| (0..3).map(|t| phi[t][r] * v[t]).sum()).collect();
        let (b_opt, log_det_h) = ge_solve(&h, &rhs);
        let b_opt = [b_opt[0], b_opt[1], b_opt[2]];
        let ell_opt = ell(&b_opt);
        let h_inv = ge_inverse(&h);
        let half_width: Vec<f64> = (0..3).map(|i| 10.0 * h_inv[i][i].sqrt()).collect();
        const POINTS: usize = 161;
        let step: Vec<f64> = half_width.iter().map(|w| 2.0 * w / (POINTS - 1) as f64).collect();
        let mut sum = 0.0;
        for i in 0..POINTS {
            for j in 0..POINTS {
                for l in 0..POINTS {
                    let b = [
                        b_opt[0] - half_width[0] + i as f64 * step[0],
                        b_opt[1] - half_width[1] + j as f64 * step[1],
                        b_opt[2] - half_width[2] + l as f64 * step[2],
                    ];
                    sum += (-(ell(&b) - ell_opt)).exp();
                }
            }
        }
        let neg_log_integral = ell_opt - (sum * step[0] * step[1] * step[2]).ln();
        let closed_form = ell_opt + 0.5 * log_det_h - 1.5 * (2.0 * PI).ln();
        let objective = MarginalObjective::new(f.design.clone(), family).neg_log_marginal(&eta).unwrap();
        worst_b = worst_b.max((neg_log_integral - closed_form).abs());
        worst_obj = worst_obj.max((neg_log_integral - (objective - 1.5 * (2.0 * PI).ln())).abs());
        let literal = ell_opt + 0.5 * (log_det_h + 3.0 * (2.0 * PI).ln());
        literal_gap = literal_gap.max((neg_log_integral - literal).abs());
    }
    let msg = format!(
        "(a) log-det forms max abs diff {worst_a:.2e} (tol 1e-8); (b) quadrature vs closed form {worst_b:.2e}, vs objective {worst_obj:.2e} (tol 1e-3; the det(2 pi H) constant would be off by {literal_gap:.3})"
    );
    if worst_a <= 1e-8 && worst_b <= 1e-3 && worst_obj <= 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn single_trial_reproduction() -> Outcome {
    const TRUE_PHASE: f64 = 0.482;
    let mut hits = [0usize; 2];
    let mut df_in_range = true;
    let mut non_integer = [0usize; 2];
    let mut me_df_ok = true;
    let mut all_min_phase = true;
    let mut dfs = [Vec::new(), Vec::new()];
    for seed in 1..=20u64 {
        let cfg = ExperimentConfig {
            methods: vec![MethodTag::Me, MethodTag::MeDi, MethodTag::MeTc],
            master_seed: seed,
            ..ExperimentConfig::default()
        };
        let out = run_single_trial(&cfg).map_err(|e| e.to_string())?;
        for (slot, tag) in [MethodTag::MeDi, MethodTag::MeTc].into_iter().enumerate() {
            let values = out.spectra.column(tag.as_str()).ok_or(format!("{tag} failed on seed {seed}"))?;
            let (peak, _) = out
                .spectra
                .theta
                .iter()
                .zip(values)
                .filter(|(t, _)| **t >= 0.0)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            if (peak - TRUE_PHASE).abs() <= 0.02 {
                hits[slot] += 1;
            }
        }
        for r in &out.records {
            let df = r.df.ok_or(format!("{} failed on seed {seed}", r.method))?;
            all_min_phase &= r.min_phase_verified == Some(true);
            match r.method {
                MethodTag::Me => me_df_ok &= r.chosen_n.map(|n| (n + 1) as f64) == Some(df),
                m => {
                    let slot = usize::from(m == MethodTag::MeTc);
                    df_in_range &= df > 0.0 && df < 51.0;
                    if (df - df.round()).abs() > 1e-6 {
                        non_integer[slot] += 1;
                    }
                    dfs[slot].push(df);
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let msg = format!(
        "peak within 0.02 rad of 0.482: ME-DI {}/20, ME-TC {}/20 (need 16); df in (0, 51): {df_in_range}; non-integer df: ME-DI {}/20, ME-TC {}/20; mean df ME-DI {:.3}, ME-TC {:.3}; df_ME = n+1: {me_df_ok}; all min phase: {all_min_phase}",
        hits[0], hits[1], non_integer[0], non_integer[1], mean(&dfs[0]), mean(&dfs[1])
    );
    if hits.iter().all(|&h| h >= 16) && df_in_range && non_integer.iter().all(|&c| c >= 18) && me_df_ok && all_min_phase {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn monte_carlo_ordering() -> Outcome {
    let start = Instant::now();
    let mut holds = 0;
    let mut lines = Vec::new();
    for master_seed in 1..=5u64 {
        let cfg = ExperimentConfig {
            methods: vec![MethodTag::Me, MethodTag::MeDi, MethodTag::MeTc],
            master_seed,
            ..ExperimentConfig::default()
        };
        let out = run_monte_carlo(&cfg).map_err(|e| e.to_string())?;
        let median = |tag: MethodTag| {
            out.summary
                .methods
                .iter()
                .find(|m| m.method == tag)
                .and_then(|m| m.median)
                .unwrap_or(f64::INFINITY)
        };
        let (me, di, tc) = (median(MethodTag::Me), median(MethodTag::MeDi), median(MethodTag::MeTc));
        if di <= me && tc <= me {
            holds += 1;
        }
        lines.push(format!("seed {master_seed}: ME {me:.4} ME-DI {di:.4} ME-TC {tc:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("ordering holds in {holds}/5 (need 4), {secs:.0}s; {}", lines.join("; "));
    if holds >= 4 && secs <= 900.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn pem_stress() -> Outcome {
    let cfg = ExperimentConfig {
        methods: vec![MethodTag::MeDi, MethodTag::MeTc, MethodTag::PemDi, MethodTag::PemTc],
        pole_modulus: 0.995,
        master_seed: 9,
        ..ExperimentConfig::default()
    };
    let out = run_monte_carlo(&cfg).map_err(|e| e.to_string())?;
    let me: Vec<_> = out.records.iter().filter(|r| !r.method.is_pem()).collect();
    let me_bad = me.iter().filter(|r| r.min_phase_verified != Some(true)).count();
    let pem_non_min = out
        .records
        .iter()
        .filter(|r| r.method.is_pem() && r.min_phase_verified == Some(false))
        .count();
    let pem_failed = out.records.iter().filter(|r| r.method.is_pem() && !r.is_ok()).count();
    let pem_max = out
        .records
        .iter()
        .filter(|r| r.method.is_pem())
        .filter_map(|r| r.max_root_modulus)
        .fold(0.0, f64::max);
    let msg = format!(
        "ME-DI/ME-TC: {} records, {me_bad} not minimum phase; PEM: {pem_non_min} non-minimum-phase records, {pem_failed} failures, max root modulus {pem_max:.6} (reported only)",
        me.len()
    );
    if me_bad == 0 && me.len() == 200 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut yw_err: f64 = 0.0;
    let mut lag_err: f64 = 0.0;
    let mut me_err: f64 = 0.0;
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut series: Vec<TimeSeries> = vec![generate(&ArmaModel::reference(), 500, 42, 2000).unwrap()];
    for _ in 0..4 {
        series.push(random_fixture(&mut rng, 2).y);
    }
    for y in &series {
        for n in [4usize, 10, 20, 50] {
            let lags = estimate_lags(y, n).unwrap();
            lag_err = lag_err.max(rel(&lags, &naive_lags(y.samples(), n)));
            let cov = build_toeplitz(&lags).unwrap();
            let fit = yule_walker_fit(&cov, JitterPolicy::Forbid).unwrap();
            let (a, _) = ge_solve(&rows(cov.matrix()), &unit(n + 1));
            let oracle: Vec<f64> = a.iter().map(|x| x / a[0].sqrt()).collect();
            yw_err = yw_err.max(rel(fit.b.coeffs(), &oracle));
        }
    }
    for n in [20usize, 50] {
        let f = reference_fixture(42, n);
        let size = n + 1;
        for family in FAMILIES {
            for beta in [0.5, 0.85] {
                if n == 50 && beta < 0.8 {
                    continue;
                }
                for lambda in [0.1, 1.0, 10.0] {
                    let eta = Hyperparameters::new(lambda, beta).unwrap();
                    let b = kernel_me(&f.design, &f.cov, family, &eta).unwrap();
                    let k_inv = ge_inverse(&oracle_kernel(family, beta, size));
                    let scale = 1.0 / ((500 - n) as f64 * lambda);
                    let sigma = rows(f.cov.matrix());
                    let system: Vec<Vec<f64>> = (0..size)
                        .map(|i| (0..size).map(|j| sigma[i][j] + scale * k_inv[i][j]).collect())
                        .collect();
                    let (x, _) = ge_solve(&system, &unit(size));
                    let oracle: Vec<f64> = x.iter().map(|v| v / f.design.b0_prelim).collect();
                    me_err = me_err.max(rel(b.coeffs(), &oracle));
                }
            }
        }
    }
    let msg = format!(
        "yule_walker {yw_err:.2e} (tol 1e-12), estimate_lags {lag_err:.2e} (tol 1e-12), kernel_me {me_err:.2e} (tol 1e-6)"
    );
    if yw_err <= 1e-12 && lag_err <= 1e-12 && me_err <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_kmespec"))
        .args(args)
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("kmespec {args:?} exited with {status}"))
    }
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("series.csv");
    let y = generate(&ArmaModel::reference(), 500, 7, 2000).unwrap();
    let mut text = String::from("y\n");
    for v in y.samples() {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(&input, text).map_err(|e| e.to_string())?;
    let input = input.to_string_lossy().into_owned();
    let runs: [(&str, Vec<&str>); 3] = [
        ("single", vec!["single", "--seed", "42"]),
        ("montecarlo", vec!["montecarlo", "--seed", "3", "--runs", "6"]),
        ("estimate", vec!["estimate", "--input", &input]),
    ];
    let mut compared = 0;
    for (name, args) in &runs {
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        run_cli(args, &a)?;
        run_cli(args, &b)?;
        let (fa, fb) = (dir_contents(&a), dir_contents(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("`{name}` outputs differ between identical runs"));
        }
        compared += fa.len();
    }
    Ok(format!("single, montecarlo and estimate: {compared} output files byte-identical across repeated runs"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("minimum-phase invariant", minimum_phase_invariant),
        ("lambda -> infinity reduces to ME", lambda_limit_reduces_to_me),
        ("TC factorization identity", tc_factorization_identity),
        ("dual-form agreement", dual_forms_agree),
        ("degrees of freedom", degrees_of_freedom_properties),
        ("marginal likelihood", marginal_likelihood_correctness),
        ("single-trial reproduction", single_trial_reproduction),
        ("Monte Carlo ordering", monte_carlo_ordering),
        ("PEM stress", pem_stress),
        ("oracle equivalence", oracle_equivalence),
        ("CLI determinism", cli_determinism),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}): {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
