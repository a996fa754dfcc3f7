//! Matrix-free inverse iteration for `1/2 Δ_h + V` on a square tensor grid.

use crate::error::{Error, Result};
use rayon::prelude::*;

pub(crate) struct PlaneOperator<'a> {
    pub n: usize,
    pub h: f64,
    pub v: &'a [f64],
}

impl PlaneOperator<'_> {
    /// `out = (shift - A) u` where `A = 1/2 Δ_h + V`.
    fn apply_shifted(&self, shift: f64, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let c = 0.5 / (self.h * self.h);
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for j in 0..n {
                let k = i * n + j;
                let mut lap = -4.0 * u[k];
                if i > 0 {
                    lap += u[k - n];
                }
                if i + 1 < n {
                    lap += u[k + n];
                }
                if j > 0 {
                    lap += u[k - 1];
                }
                if j + 1 < n {
                    lap += u[k + 1];
                }
                row[j] = shift * u[k] - c * lap - self.v[k] * u[k];
            }
        });
    }

    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        let mut w = vec![0.0; u.len()];
        self.apply_shifted(0.0, u, &mut w);
        -dot(u, &w) / dot(u, u)
    }

    pub fn residual(&self, lambda: f64, u: &[f64]) -> f64 {
        let mut w = vec![0.0; u.len()];
        self.apply_shifted(lambda, u, &mut w);
        dot(&w, &w).sqrt() / dot(u, u).sqrt()
    }

    /// Conjugate gradients for `(shift - A) x = b`, warm-started from `x`.
    fn cg(&self, shift: f64, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> Result<usize> {
        let len = b.len();
        let mut r = vec![0.0; len];
        self.apply_shifted(shift, x, &mut r);
        r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
        let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
        let mut p = r.clone();
        let mut ap = vec![0.0; len];
        let mut rr = dot(&r, &r);
        for it in 0..max_iter {
            if rr.sqrt() <= rel_tol * bnorm {
                return Ok(it);
            }
            self.apply_shifted(shift, &p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            x.par_iter_mut().zip(p.par_iter()).for_each(|(xi, pi)| *xi += alpha * pi);
            r.par_iter_mut().zip(ap.par_iter()).for_each(|(ri, api)| *ri -= alpha * api);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p.par_iter_mut().zip(r.par_iter()).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        }
        Err(Error::NonConvergence { what: "conjugate gradients", iterations: max_iter, residual: rr.sqrt() / bnorm })
    }

    /// Largest eigenpair orthogonal to `deflate` by shifted inverse iteration.
    pub fn top_pair(
        &self,
        sigma: f64,
        deflate: Option<&[f64]>,
        tol: f64,
        max_iter: usize,
    ) -> Result<(f64, Vec<f64>, usize)> {
        let len = self.n * self.n;
        let mut u: Vec<f64> = match deflate {
            // Start from an odd-in-x vector so that symmetric ground states are excluded quickly.
            Some(_) => (0..len).map(|k| ((k / self.n) as f64 - (self.n / 2) as f64).tanh() + 0.1).collect(),
            None => vec![1.0; len],
        };
        let project = |u: &mut Vec<f64>| {
            if let Some(q) = deflate {
                let c = dot(u, q) / dot(q, q);
                u.par_iter_mut().zip(q.par_iter()).for_each(|(a, b)| *a -= c * b);
            }
        };
        project(&mut u);
        scale(&mut u);
        let mut lambda = self.rayleigh(&u);
        let mut x = u.clone();
        // The eigenvalue converges quadratically in the vector error, so the far tail
        // of `u` also needs a small residual before it is accurate.
        let res_tol = 1e-9;
        let mut shift = sigma;
        let mut change = f64::INFINITY;
        let mut res = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            x.par_iter_mut().zip(u.par_iter()).for_each(|(xi, ui)| *xi = ui / (shift - lambda));
            self.cg(shift, &u, &mut x, 1e-13, 20 * self.n + 200)?;
            u.clone_from(&x);
            project(&mut u);
            scale(&mut u);
            let next = self.rayleigh(&u);
            change = (next - lambda).abs();
            lambda = next;
            iterations += 1;
            if change < tol {
                res = self.residual(lambda, &u);
                if res < res_tol {
                    break;
                }
            }
            // The Rayleigh quotient is below the top eigenvalue, so a shift just above
            // it keeps the system definite and speeds up contraction.
            if deflate.is_none() && change < 1e-6 {
                shift = shift.min(lambda + 0.25 * (sigma - lambda).min(1.0));
            }
        }
        if change >= tol || res >= res_tol {
            return Err(Error::NonConvergence { what: "inverse iteration (2D)", iterations, residual: change });
        }
        if u.iter().sum::<f64>() < 0.0 {
            u.iter_mut().for_each(|a| *a = -*a);
        }
        Ok((lambda, u, iterations))
    }
}

/// Dot product with a fixed chunking so the result does not depend on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

fn scale(u: &mut [f64]) {
    let s = dot(u, u).sqrt();
    u.par_iter_mut().for_each(|a| *a /= s);
}
