//! Feynman-Kac Monte Carlo for `p(t, x, y)` over Brownian bridges:
//! `p = p0(t, x - y) E[exp(∫_0^t v(b_s) ds)]` with `b` a bridge from `y` to `x`.

use crate::asymptotics::{classify, interior_formula, Region};
use crate::error::{Error, Result};
use crate::evolution::free_kernel;
use crate::potentials::{Potential, SourcePoint};
use crate::spectral::SpectralData;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Monte Carlo estimate of `p(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

/// `max(100, 20 t sup|v|)` midpoint steps.
pub fn default_steps(v: &Potential, t: f64) -> usize {
    (20.0 * t * v.sup_abs()).ceil().max(100.0) as usize
}

/// Walks one bridge from `y` at time 0 to `x` at time `t`, visiting its positions at
/// the midpoints `s_k = (k + 1/2) t / n_steps`.
fn walk(t: f64, x: &[f64], y: &[f64], n_steps: usize, rng: &mut ChaCha8Rng, mut visit: impl FnMut(&[f64])) {
    let ds = t / n_steps as f64;
    let mut b = y.to_vec();
    let mut s = 0.0;
    for k in 0..n_steps {
        let next = (k as f64 + 0.5) * ds;
        let dt = next - s;
        let rest = t - s;
        // Conditional law of the bridge at `next` given its value at `s`.
        let pull = dt / rest;
        let sd = (dt * (t - next) / rest).sqrt();
        for (bi, xi) in b.iter_mut().zip(x) {
            let z: f64 = StandardNormal.sample(rng);
            *bi += (xi - *bi) * pull + sd * z;
        }
        s = next;
        visit(&b);
    }
}

/// Weight `exp(Δs Σ v(b(s_k)))` of one bridge.
fn path_weight(v: &Potential, t: f64, x: &[f64], y: &[f64], n_steps: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut acc = 0.0;
    walk(t, x, y, n_steps, rng, |b| acc += v.evaluate(b));
    (acc * t / n_steps as f64).exp()
}

/// Brownian-bridge estimate of `p(t, x, y)` with `n_paths` independent bridges.
///
/// Path `i` draws from the ChaCha8 stream `i` of `seed`, so results do not depend on
/// the number of worker threads.
pub fn bridge_estimate(
    v: &Potential,
    t: f64,
    x: &[f64],
    y: &SourcePoint,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<BridgeEstimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be positive, got {t}")));
    }
    if n_steps < 100 {
        return Err(Error::invalid("n_steps", format!("need at least 100, got {n_steps}")));
    }
    if n_paths < 1000 {
        return Err(Error::invalid("n_paths", format!("need at least 1000, got {n_paths}")));
    }
    if x.len() != v.dim() || y.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: x.len() });
    }
    let yv = y.as_slice();
    let weights: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            path_weight(v, t, x, yv, n_steps, &mut rng)
        })
        .collect();
    // Every weight lies between e^{t inf v} and e^{t sup v}; the bounds are conservative.
    let (lo, hi) = (t * v.min_value().min(0.0), t * v.max_value().max(0.0));
    for w in &weights {
        let lw = w.ln();
        assert!(lw >= lo - 1e-9 * (1.0 + lo.abs()) && lw <= hi + 1e-9 * (1.0 + hi.abs()), "weight {w} outside [e^{lo}, e^{hi}]");
    }
    // Two passes on values shifted by the first weight, so equal weights give zero spread exactly.
    let w0 = weights[0];
    let n = n_paths as f64;
    let shift_mean = weights.iter().map(|w| w - w0).sum::<f64>() / n;
    let var = weights.iter().map(|w| (w - w0 - shift_mean).powi(2)).sum::<f64>() / (n - 1.0);
    let dx: Vec<f64> = x.iter().zip(yv).map(|(a, b)| a - b).collect();
    let p0 = free_kernel(t, &dx)?;
    Ok(BridgeEstimate {
        mean: p0 * (w0 + shift_mean),
        stderr: p0 * var.sqrt() / n.sqrt(),
        n_paths,
        n_steps,
        seed,
    })
}

/// Monte Carlo sample size and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub n_paths: usize,
    /// Defaults to [`default_steps`].
    pub n_steps: Option<usize>,
    pub seed: u64,
}

/// Ratio `p_mc / (e^{λ₀t} psi(x) psi(y))` with a 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub half_width: f64,
    pub estimate: BridgeEstimate,
}

/// Monte Carlo check of the interior formula at a point of the interior region of width `eps`.
pub fn interior_ratio_mc(
    v: &Potential,
    spectral: &SpectralData,
    t: f64,
    x: &[f64],
    y: &SourcePoint,
    eps: f64,
    budget: &McBudget,
) -> Result<RatioEstimate> {
    if v.is_zero() {
        return Err(Error::NoPositiveEigenvalue { lambda: 0.0 });
    }
    let c = classify(t, x, y, spectral.lambda0(), eps)?;
    if !matches!(c.region, Region::Interior { .. }) {
        return Err(Error::invalid("x", format!("(t, x) is {} for eps = {eps}, not interior", c.region.name())));
    }
    let n_steps = budget.n_steps.unwrap_or_else(|| default_steps(v, t));
    let est = bridge_estimate(v, t, x, y, budget.n_paths, n_steps, budget.seed)?;
    let denom = interior_formula(spectral, t, x, y)?;
    Ok(RatioEstimate { ratio: est.mean / denom, half_width: 1.96 * est.stderr / denom, estimate: est })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_case_is_exact() {
        let v = Potential::zero(1, 1.0).unwrap();
        let y = SourcePoint::origin(1);
        let e = bridge_estimate(&v, 2.0, &[1.5], &y, 1000, 100, 3).unwrap();
        assert_eq!(e.mean, free_kernel(2.0, &[1.5]).unwrap());
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn constant_potential_gives_deterministic_weight() {
        let v = Potential::uniform_unbounded(2, 0.3).unwrap();
        let y = SourcePoint::new(vec![0.0, 0.0], &v).unwrap();
        let e = bridge_estimate(&v, 1.5, &[1.0, -0.5], &y, 1000, 150, 9).unwrap();
        let exact = (0.3f64 * 1.5).exp() * free_kernel(1.5, &[1.0, -0.5]).unwrap();
        assert!((e.mean / exact - 1.0).abs() < 1e-13);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let v = Potential::square_well(1, 2.0, 1.0).unwrap();
        let y = SourcePoint::origin(1);
        assert!(bridge_estimate(&v, 0.0, &[1.0], &y, 1000, 100, 0).is_err());
        assert!(bridge_estimate(&v, 1.0, &[1.0], &y, 999, 100, 0).is_err());
        assert!(bridge_estimate(&v, 1.0, &[1.0], &y, 1000, 99, 0).is_err());
    }

    #[test]
    fn bridge_midpoint_law() {
        // At time t/2 a bridge from 0 to x has mean x/2 and variance t/4 under the 1/2 Δ generator.
        let (t, n, x) = (2.0, 100usize, 1.0);
        let m = 20000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..m {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            rng.set_stream(i);
            let mut k = 0;
            walk(t, &[x], &[0.0], n, &mut rng, |b| {
                if k == n / 2 {
                    s1 += b[0];
                    s2 += b[0] * b[0];
                }
                k += 1;
            });
        }
        let mean = s1 / m as f64;
        let var = s2 / m as f64 - mean * mean;
        let tau = (n as f64 / 2.0 + 0.5) * t / n as f64;
        assert!((mean - x * tau / t).abs() < 0.02);
        assert!((var / (tau * (t - tau) / t) - 1.0).abs() < 0.05, "var {var}");
    }
}
