use nalgebra::{Complex, DMatrix, Schur};

use super::PredictorPolynomial;
use crate::error::{Error, Result};

/// Roots of `b_0 z^n + b_1 z^{n-1} + .. + b_n` (equivalently the zeros of
/// `b(z) = sum_k b_k z^{-k}` away from the origin) as eigenvalues of the
/// balanced companion matrix.
pub fn polynomial_roots(b: &PredictorPolynomial) -> Result<Vec<Complex<f64>>> {
    let c = b.coeffs();
    let lead = c[0];
    if lead == 0.0 {
        return Err(Error::InvalidData(
            "leading coefficient b_0 is zero".into(),
        ));
    }
    // Trailing zero coefficients are exact roots at the origin.
    let at_origin = c.iter().rev().take_while(|&&x| x == 0.0).count();
    let c = &c[..c.len() - at_origin];
    let mut roots = vec![Complex::new(0.0, 0.0); at_origin];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(roots);
    }
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    balance(&mut companion);
    let schur = Schur::try_new(companion, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Internal("eigenvalue iteration did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Internal("eigenvalue iteration diverged".into()));
    }
    roots.extend(eig.iter().copied());
    Ok(roots)
}

/// Returns whether every root lies strictly inside the unit circle, and the
/// largest root modulus (`0.0` for a constant polynomial).
pub fn check_min_phase(b: &PredictorPolynomial) -> Result<(bool, f64)> {
    if b.is_null() {
        return Err(Error::InvalidData("zero polynomial".into()));
    }
    let roots = polynomial_roots(b)?;
    let max = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok((max < 1.0, max))
}

/// Diagonal similarity scaling by powers of two so row and column norms are
/// comparable.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let sq = RADIX * RADIX;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut g = r / RADIX;
            let mut f = 1.0;
            while c < g {
                f *= RADIX;
                c *= sq;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sq;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}
