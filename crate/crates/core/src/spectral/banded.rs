//! Top eigenpair of `1/2 D2 + V` on a uniform three-point stencil by inverse iteration.

use crate::error::{Error, Result};
use crate::tridiag;

/// Eigenpair of the symmetric tridiagonal operator `1/2 D2 + V`.
#[derive(Debug, Clone)]
pub(crate) struct TopPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Diagonal of `1/2 D2 + V` for spacing `h`.
pub(crate) fn operator_diag(v: &[f64], h: f64) -> Vec<f64> {
    let c = 1.0 / (h * h);
    v.iter().map(|vj| vj - c).collect()
}

/// Off-diagonal of `1/2 D2`.
pub(crate) fn operator_off(h: f64) -> f64 {
    0.5 / (h * h)
}

fn apply(diag: &[f64], off: f64, u: &[f64], out: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let mut s = diag[i] * u[i];
        if i > 0 {
            s += off * u[i - 1];
        }
        if i + 1 < n {
            s += off * u[i + 1];
        }
        out[i] = s;
    }
}

fn rayleigh(diag: &[f64], off: f64, u: &[f64], work: &mut [f64]) -> f64 {
    apply(diag, off, u, work);
    let num: f64 = u.iter().zip(work.iter()).map(|(a, b)| a * b).sum();
    let den: f64 = u.iter().map(|a| a * a).sum();
    num / den
}

fn normalize(u: &mut [f64]) {
    let s = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    u.iter_mut().for_each(|a| *a /= s);
}

/// Largest eigenpair by inverse iteration with shift `sigma` above the spectrum.
///
/// Iterates until successive Rayleigh quotients differ by less than `tol`, then
/// performs a few sweeps with a shift just above the converged eigenvalue so that
/// the exponentially small tail entries converge componentwise. Since `sigma - A`
/// is a Stieltjes matrix, every solve uses positive arithmetic only.
pub(crate) fn top_pair(diag: &[f64], off: f64, sigma: f64, tol: f64, max_iter: usize) -> Result<TopPair> {
    let n = diag.len();
    let mut shifted: Vec<f64> = diag.iter().map(|d| sigma - d).collect();
    let mut u = vec![1.0; n];
    normalize(&mut u);
    let mut work = vec![0.0; n];
    let mut scratch = Vec::new();
    let mut lambda = rayleigh(diag, off, &u, &mut work);
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < max_iter {
        tridiag::solve_const_off(-off, &shifted, &mut u, &mut scratch);
        normalize(&mut u);
        let next = rayleigh(diag, off, &u, &mut work);
        change = (next - lambda).abs();
        lambda = next;
        iterations += 1;
        if change < tol {
            break;
        }
    }
    if change >= tol {
        return Err(Error::NonConvergence { what: "inverse iteration", iterations, residual: change });
    }
    // Tail refinement with a near-exact shift.
    let sigma2 = lambda + 1e-7 * lambda.abs().max(1.0);
    if sigma2 < sigma {
        shifted.iter_mut().zip(diag).for_each(|(s, d)| *s = sigma2 - d);
        for _ in 0..4 {
            tridiag::solve_const_off(-off, &shifted, &mut u, &mut scratch);
            normalize(&mut u);
        }
        lambda = rayleigh(diag, off, &u, &mut work);
    }
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|a| *a = -*a);
    }
    Ok(TopPair { lambda, vector: u, iterations })
}

/// Relative eigen-residual `||A u - lambda u|| / ||u||`.
pub(crate) fn residual(diag: &[f64], off: f64, lambda: f64, u: &[f64]) -> f64 {
    let mut w = vec![0.0; u.len()];
    apply(diag, off, u, &mut w);
    let r: f64 = w.iter().zip(u).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
    r / u.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Largest eigenvalue below the top one, if positive.
pub(crate) fn second_positive(diag: &[f64], off: f64, lambda0: f64) -> Option<f64> {
    if tridiag::count_above(diag, off, 0.0) < 2 {
        return None;
    }
    let l1 = tridiag::kth_largest(diag, off, 1, 0.0, lambda0, 1e-13 * lambda0.max(1.0));
    Some(l1)
}

/// Largest eigenvalue if positive (bisection only).
pub(crate) fn top_positive(diag: &[f64], off: f64) -> Option<f64> {
    if tridiag::count_above(diag, off, 0.0) == 0 {
        return None;
    }
    let (_, hi) = tridiag::gershgorin(diag, off);
    Some(tridiag::kth_largest(diag, off, 0, 0.0, hi, 1e-13 * hi.max(1.0)))
}
