//! ARMA test processes, their spectra, and the reconstruction error metric.
//!
//! Noise comes from `ChaCha20Rng` (seeded with `SeedableRng::seed_from_u64`)
//! pushed through `rand_distr::StandardNormal`, so a given seed yields the
//! same series on every run.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covariance::TimeSeries;
use crate::error::{Error, Result};
use crate::estimators::PredictorPolynomial;

pub type C64 = Complex<f64>;

pub const DEFAULT_BURN_IN: usize = 2000;
pub const DEFAULT_GRID_SIZE: usize = 2048;

const CONJUGATE_TOL: f64 = 1e-12;

/// Rational minimum-phase filter `w(z) = gain * prod(z - z_i) / prod(z - p_j)`
/// with real coefficients and equal numerator and denominator degree.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmaModel {
    zeros: Vec<C64>,
    poles: Vec<C64>,
    gain: f64,
}

fn conjugate_closed(roots: &[C64]) -> bool {
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let r = roots[i];
        let tol = CONJUGATE_TOL * r.norm().max(1.0);
        if r.im.abs() <= tol {
            used[i] = true;
            continue;
        }
        let partner = (0..roots.len()).find(|&j| j != i && !used[j] && (roots[j] - r.conj()).norm() <= tol);
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

impl ArmaModel {
    pub fn new(zeros: Vec<C64>, poles: Vec<C64>, gain: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidModel(format!("gain must be positive, got {gain}")));
        }
        if zeros.len() != poles.len() {
            return Err(Error::InvalidModel(format!(
                "{} zeros but {} poles; degrees must match",
                zeros.len(),
                poles.len()
            )));
        }
        for (what, roots) in [("zero", &zeros), ("pole", &poles)] {
            if let Some(r) = roots.iter().find(|r| r.norm().is_nan() || r.norm() >= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "{what} {r} is not strictly inside the unit circle"
                )));
            }
            if !conjugate_closed(roots) {
                return Err(Error::InvalidModel(format!(
                    "{what}s are not closed under conjugation"
                )));
            }
        }
        Ok(Self { zeros, poles, gain })
    }

    /// The fixed two-pole/two-zero process: gain `sqrt(2)`, zeros
    /// `0.85 e^{+-0.52j}`, poles `0.98 e^{+-0.482j}`.
    pub fn reference() -> Self {
        let z0 = C64::from_polar(0.85, 0.52);
        let p0 = C64::from_polar(0.98, 0.482);
        Self::new(vec![z0, z0.conj()], vec![p0, p0.conj()], 2f64.sqrt()).expect("valid reference model")
    }

    pub fn zeros(&self) -> &[C64] {
        &self.zeros
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// `|w(e^{j theta})|^2`.
    pub fn spectrum_at(&self, theta: f64) -> f64 {
        let z = C64::from_polar(1.0, theta);
        let num: f64 = self.zeros.iter().map(|r| (z - r).norm_sqr()).product();
        let den: f64 = self.poles.iter().map(|r| (z - r).norm_sqr()).product();
        self.gain * self.gain * num / den
    }

    /// Real coefficients of `prod (1 - r z^{-1})`, leading 1.
    fn monic(roots: &[C64]) -> Vec<f64> {
        let mut c = vec![C64::new(1.0, 0.0)];
        for r in roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (k, ck) in c.iter().enumerate() {
                next[k] += ck;
                next[k + 1] -= ck * r;
            }
            c = next;
        }
        c.iter().map(|z| z.re).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ArmaModelDoc {
    zeros: Vec<[f64; 2]>,
    poles: Vec<[f64; 2]>,
    gain: f64,
}

impl Serialize for ArmaModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pack = |v: &[C64]| v.iter().map(|z| [z.re, z.im]).collect();
        ArmaModelDoc {
            zeros: pack(&self.zeros),
            poles: pack(&self.poles),
            gain: self.gain,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ArmaModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ArmaModelDoc::deserialize(d)?;
        let unpack = |v: Vec<[f64; 2]>| v.into_iter().map(|[re, im]| C64::new(re, im)).collect();
        ArmaModel::new(unpack(doc.zeros), unpack(doc.poles), doc.gain).map_err(serde::de::Error::custom)
    }
}

/// Filters unit-variance Gaussian noise through `model`, discarding the first
/// `burn_in` outputs.
pub fn generate(model: &ArmaModel, len: usize, seed: u64, burn_in: usize) -> Result<TimeSeries> {
    let num: Vec<f64> = ArmaModel::monic(&model.zeros).iter().map(|c| c * model.gain).collect();
    let den = ArmaModel::monic(&model.poles);
    let order = den.len() - 1;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let total = burn_in + len;
    let mut e = vec![0.0; order + 1];
    let mut y = vec![0.0; order + 1];
    let mut out = Vec::with_capacity(len);
    for t in 0..total {
        e.rotate_right(1);
        y.rotate_right(1);
        e[0] = rng.sample(StandardNormal);
        let mut acc: f64 = num.iter().zip(&e).map(|(c, x)| c * x).sum();
        for k in 1..=order {
            acc -= den[k] * y[k];
        }
        y[0] = acc;
        if t >= burn_in {
            out.push(acc);
        }
    }
    TimeSeries::new(out)
}

/// Parameters of the randomized test systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomArmaConfig {
    pub pole_modulus: f64,
    pub zero_modulus: f64,
    pub pairs: usize,
    pub max_phase_gap: f64,
}

impl Default for RandomArmaConfig {
    fn default() -> Self {
        Self {
            pole_modulus: 0.98,
            zero_modulus: 0.85,
            pairs: 3,
            max_phase_gap: 0.06,
        }
    }
}

/// Draws `pairs` conjugate pole pairs with phases uniform on `[0, pi]`, and
/// one zero pair per pole pair with phase within `max_phase_gap` of it.
/// Gain is 1.
pub fn random_arma(seed: u64, cfg: &RandomArmaConfig) -> Result<ArmaModel> {
    for (what, m) in [("pole", cfg.pole_modulus), ("zero", cfg.zero_modulus)] {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidModel(format!("{what} modulus must lie in (0, 1), got {m}")));
        }
    }
    if !(cfg.max_phase_gap >= 0.0 && cfg.max_phase_gap.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "phase gap must be non-negative, got {}",
            cfg.max_phase_gap
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut zeros = Vec::with_capacity(2 * cfg.pairs);
    let mut poles = Vec::with_capacity(2 * cfg.pairs);
    for _ in 0..cfg.pairs {
        let pole_phase = rng.gen_range(0.0..=PI);
        let offset = if cfg.max_phase_gap > 0.0 {
            rng.gen_range(-cfg.max_phase_gap..=cfg.max_phase_gap)
        } else {
            0.0
        };
        let p = C64::from_polar(cfg.pole_modulus, pole_phase);
        let z = C64::from_polar(cfg.zero_modulus, pole_phase + offset);
        poles.extend([p, p.conj()]);
        zeros.extend([z, z.conj()]);
    }
    ArmaModel::new(zeros, poles, 1.0)
}

/// A spectrum that can be evaluated on the unit circle.
#[derive(Clone, Copy, Debug)]
pub enum SpectrumModel<'a> {
    /// `|w(e^{jt})|^2`.
    Truth(&'a ArmaModel),
    /// `1 / |b(e^{jt})|^2`.
    Estimate(&'a PredictorPolynomial),
}

/// Values on the grid plus a flag set when the defining polynomial nearly
/// vanishes at a grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumValues {
    pub values: Vec<f64>,
    pub near_singular: bool,
}

/// `theta_k = -pi + 2 pi k / grid_size`, `k = 0..grid_size`.
pub fn frequency_grid(grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|k| -PI + 2.0 * PI * k as f64 / grid_size as f64)
        .collect()
}

const SINGULAR_TOL: f64 = 1e-12;

pub fn eval_spectrum(s: SpectrumModel<'_>, grid_size: usize) -> Result<SpectrumValues> {
    if grid_size < 2 {
        return Err(Error::Config(format!("grid size must be >= 2, got {grid_size}")));
    }
    let grid = frequency_grid(grid_size);
    let mut near_singular = false;
    let values = match s {
        SpectrumModel::Truth(model) => grid
            .iter()
            .map(|&theta| {
                let z = C64::from_polar(1.0, theta);
                let closest = model
                    .zeros
                    .iter()
                    .chain(&model.poles)
                    .map(|r| (z - r).norm())
                    .fold(f64::INFINITY, f64::min);
                if closest < SINGULAR_TOL {
                    near_singular = true;
                }
                model.spectrum_at(theta)
            })
            .collect(),
        SpectrumModel::Estimate(b) => grid
            .iter()
            .map(|&theta| {
                let m = transfer_at(b.coeffs(), theta).norm_sqr();
                if m.sqrt() < SINGULAR_TOL {
                    near_singular = true;
                }
                1.0 / m
            })
            .collect(),
    };
    Ok(SpectrumValues {
        values,
        near_singular,
    })
}

/// `b(e^{j theta}) = sum_k b_k e^{-j k theta}` by Horner's rule in `e^{-j theta}`.
fn transfer_at(coeffs: &[f64], theta: f64) -> C64 {
    let w = C64::from_polar(1.0, -theta);
    coeffs
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * w + c)
}

/// `sum (est - truth)^2 / sum truth^2` over a uniform periodic grid, which is
/// the trapezoidal rule for the ratio of the two integrals.
pub fn reconstruction_error_values(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let num: f64 = estimate.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    Ok(num / den)
}

pub fn reconstruction_error(
    estimate: SpectrumModel<'_>,
    truth: SpectrumModel<'_>,
    grid_size: usize,
) -> Result<f64> {
    let est = eval_spectrum(estimate, grid_size)?;
    let tru = eval_spectrum(truth, grid_size)?;
    reconstruction_error_values(&est.values, &tru.values)
}
