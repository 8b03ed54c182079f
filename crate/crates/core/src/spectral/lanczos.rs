//! Lanczos iteration for the algebraic connectivity of a Laplacian.
//!
//! The Krylov space is built inside the complement of the constant vector:
//! every new Lanczos vector is projected against `1` and fully
//! reorthogonalized against the previous basis, so the null mode never
//! re-enters through rounding. The smallest Ritz value of the tridiagonal
//! projection then converges to `lambda_2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tridiag::tridiag_eigen;
use super::LaplacianMatrix;
use crate::error::{Error, Result};

/// Default absolute residual tolerance.
pub const DEFAULT_LANCZOS_TOL: f64 = 1e-10;

const START_SEED: u64 = 0x1a2c_2b4d;

/// Outcome of a converged run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosReport {
    pub lambda2: f64,
    /// `|beta_k * s_k|`, which bounds the distance from `lambda2` to the spectrum.
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Second-smallest eigenvalue of `l`, stopping once the Ritz residual is at
/// most `tol`.
pub fn lambda2_lanczos(l: &LaplacianMatrix, max_iter: usize, tol: f64) -> Result<LanczosReport> {
    let n = l.n();
    if n < 2 {
        return Err(Error::Domain(format!("lambda2 needs at least 2 nodes, got {n}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Domain("tolerance and iteration cap must be positive".into()));
    }
    let dim = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    remove_mean(&mut v);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best = (f64::NAN, f64::INFINITY);
    let breakdown = f64::EPSILON * l.max_abs_row_sum().max(f64::MIN_POSITIVE);

    for k in 0..max_iter.min(dim) {
        l.matvec(&v, &mut w);
        let a = dot(&w, &v);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= a * vi;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= b * pi;
            }
        }
        basis.push(std::mem::take(&mut v));
        alpha.push(a);
        for _ in 0..2 {
            remove_mean(&mut w);
            for q in &basis {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = dot(&w, &w).sqrt();

        let ritz = tridiag_eigen(&alpha, &beta).ok_or(Error::Convergence {
            estimate: best.0,
            residual: best.1,
            iterations: k + 1,
        })?;
        let (theta, s_last) = ritz[0];
        let residual = (b * s_last).abs();
        if residual < best.1 {
            best = (theta, residual);
        }
        let exhausted = k + 1 == dim || b <= breakdown;
        if residual <= tol || (exhausted && residual <= tol.max(breakdown)) {
            return Ok(LanczosReport { lambda2: theta, residual, iterations: k + 1 });
        }
        if exhausted {
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
    }
    Err(Error::Convergence { estimate: best.0, residual: best.1, iterations: alpha.len() })
}
