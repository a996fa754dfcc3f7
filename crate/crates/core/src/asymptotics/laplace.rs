//! Phase-function substitution, the functions `g`, `sigma`, `h`, and the Laplace
//! integral `H(ω) = ∫_{-∞}^{l} h(τ) e^{-ω τ²} dτ` with its uniform asymptotics.

use crate::error::{Error, Result};
use crate::quadrature;
use std::f64::consts::PI;

/// Below this `|l|` (or `|g|`) the ratios `(h(0) - h(l)) / l` are evaluated from
/// their Taylor expansion; the direct form loses about eight digits there.
pub const REMOVABLE_THRESHOLD: f64 = 1e-4;

/// `g(θ) = (sqrt(2λ₀) - θ) / sqrt(2θ)`.
pub fn g_function(theta: f64, lambda0: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", format!("must be positive, got {theta}")));
    }
    Ok(((2.0 * lambda0).sqrt() - theta) / (2.0 * theta).sqrt())
}

/// `w = sqrt(σ)` and its first two derivatives in `τ`, from the positive root of
/// `κ w² - sqrt(2) τ w - 1 = 0`, written without cancellation on either side of zero.
fn sqrt_sigma(tau: f64, kappa: f64) -> (f64, f64, f64) {
    let s2 = std::f64::consts::SQRT_2;
    let d = (2.0 * tau * tau + 4.0 * kappa).sqrt();
    let (w, dw) = if tau >= 0.0 {
        ((s2 * tau + d) / (2.0 * kappa), (s2 + 2.0 * tau / d) / (2.0 * kappa))
    } else {
        let e = d - s2 * tau;
        (2.0 / e, 2.0 * s2 / (e * d))
    };
    (w, dw, 4.0 / (d * d * d))
}

/// The unique `σ > 0` with `τ = (sqrt(2λ₀) σ - 1) / sqrt(2σ)`; increasing in `τ`.
pub fn sigma_of_tau(tau: f64, lambda0: f64) -> f64 {
    let (w, _, _) = sqrt_sigma(tau, (2.0 * lambda0).sqrt());
    w * w
}

/// `dσ/dτ`.
pub fn sigma_prime(tau: f64, lambda0: f64) -> f64 {
    let (w, dw, _) = sqrt_sigma(tau, (2.0 * lambda0).sqrt());
    2.0 * w * dw
}

/// Inverse map `τ(σ) = (sqrt(2λ₀) σ - 1) / sqrt(2σ)`.
pub fn tau_of_sigma(sigma: f64, lambda0: f64) -> f64 {
    ((2.0 * lambda0).sqrt() * sigma - 1.0) / (2.0 * sigma).sqrt()
}

/// `h(τ) = σ'(τ) / σ(τ)^{d/2}`.
pub fn h_function(tau: f64, lambda0: f64, d: usize) -> f64 {
    let (w, dw, _) = sqrt_sigma(tau, (2.0 * lambda0).sqrt());
    2.0 * dw * w.powi(1 - d as i32)
}

/// `h'(τ)`, analytic.
pub fn h_prime(tau: f64, lambda0: f64, d: usize) -> f64 {
    let (w, dw, ddw) = sqrt_sigma(tau, (2.0 * lambda0).sqrt());
    let di = d as i32;
    2.0 * ddw * w.powi(1 - di) + 2.0 * (1 - di) as f64 * dw * dw * w.powi(-di)
}

/// `h(0) = sqrt(2) (2λ₀)^{(d-3)/4}`.
pub fn h_at_zero(lambda0: f64, d: usize) -> f64 {
    std::f64::consts::SQRT_2 * (2.0 * lambda0).powf(0.25 * (d as f64 - 3.0))
}

/// `(h(0) - h(l)) / l`, continued by `-h'(0) - l h''(0)/2` near `l = 0`.
/// Derivatives at zero come from `dh` when given, else symmetric differences.
fn removable_ratio(h: &dyn Fn(f64) -> f64, dh: Option<&dyn Fn(f64) -> f64>, l: f64) -> f64 {
    if l.abs() >= REMOVABLE_THRESHOLD {
        return (h(0.0) - h(l)) / l;
    }
    let delta = 1e-3;
    let (d1, d2) = match dh {
        Some(dh) => (dh(0.0), (dh(delta) - dh(-delta)) / (2.0 * delta)),
        None => (
            (h(delta) - h(-delta)) / (2.0 * delta),
            (h(delta) - 2.0 * h(0.0) + h(-delta)) / (delta * delta),
        ),
    };
    -d1 - 0.5 * l * d2
}

/// `q(θ) = (h(0) - h(g(θ))) / (2 g(θ))`, smooth through the cone `θ = sqrt(2λ₀)`.
pub fn q_ratio(theta: f64, lambda0: f64, d: usize) -> Result<f64> {
    let g = g_function(theta, lambda0)?;
    let h = |t: f64| h_function(t, lambda0, d);
    let dh = |t: f64| h_prime(t, lambda0, d);
    Ok(0.5 * removable_ratio(&h, Some(&dh), g))
}

/// Integrand data of a Laplace-type integral.
pub struct LaplaceProblem<'a> {
    pub h: &'a (dyn Fn(f64) -> f64 + Sync),
    /// Optional analytic derivative of `h`, used at the removable singularity.
    pub dh: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    pub l: f64,
    pub omega: f64,
    /// Constant of the growth guard `|h(τ)| < C e^{τ²}`.
    pub growth: f64,
}

/// Value of `H(ω)` with the analytic bound on the neglected left tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceValue {
    pub value: f64,
    pub quadrature_error: f64,
    pub tail_bound: f64,
}

/// `∫_{-∞}^{l} h(τ) e^{-ω τ²} dτ` by adaptive quadrature on `[-A, l]`,
/// `A = max(10, 10/sqrt(ω))`; the growth guard bounds the rest by
/// `C sqrt(π) erfc(A sqrt(ω - 1)) / (2 sqrt(ω - 1))`, which needs `ω > 2`.
pub fn laplace_h_numeric(p: &LaplaceProblem) -> Result<LaplaceValue> {
    if !(p.omega > 2.0) {
        return Err(Error::OmegaTooSmall { omega: p.omega });
    }
    let mut a = (10.0f64).max(10.0 / p.omega.sqrt());
    if -a > p.l - 1.0 {
        a = 1.0 - p.l;
    }
    let f = |t: f64| (p.h)(t) * (-p.omega * t * t).exp();
    // Split at 0 and +-a few widths so the peak is always resolved.
    let w = 1.0 / p.omega.sqrt();
    let mut breaks = vec![-a];
    for c in [-8.0 * w, -w, 0.0, w, 8.0 * w] {
        if c > -a && c < p.l {
            breaks.push(c);
        }
    }
    breaks.push(p.l);
    let r = quadrature::integrate_pieces(f, &breaks, 1e-300, 1e-11)?;
    let wm = (p.omega - 1.0).sqrt();
    let tail_bound = p.growth * PI.sqrt() * libm::erfc(a * wm) / (2.0 * wm);
    Ok(LaplaceValue { value: r.value, quadrature_error: r.error, tail_bound })
}

/// `(sqrt(π)/(2 sqrt(ω))) (1 + erf(l sqrt(ω))) h(0) + ((h(0) - h(l)) / (2ωl)) e^{-ω l²}`.
pub fn laplace_h_asymptotic(p: &LaplaceProblem) -> f64 {
    let h0 = (p.h)(0.0);
    let first = PI.sqrt() / (2.0 * p.omega.sqrt()) * libm::erfc(-p.l * p.omega.sqrt()) * h0;
    let dh = p.dh.map(|f| f as &dyn Fn(f64) -> f64);
    let ratio = removable_ratio(&|t| (p.h)(t), dh, p.l);
    first + ratio / (2.0 * p.omega) * (-p.omega * p.l * p.l).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_examples() {
        assert_eq!(g_function(1.0, 0.5).unwrap(), 0.0);
        assert!((g_function(2.0, 0.5).unwrap() + 0.5).abs() < 1e-15);
        assert!((g_function(0.5, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(g_function(0.0, 0.5).is_err());
    }

    #[test]
    fn sigma_examples() {
        for l0 in [0.5, 1.4696874658908625, 3.0] {
            let k = (2.0f64 * l0).sqrt();
            assert!((sigma_of_tau(0.0, l0) - 1.0 / k).abs() < 1e-15);
            assert!(sigma_of_tau(-1.0, l0) < sigma_of_tau(0.0, l0));
            assert!(sigma_of_tau(0.0, l0) < sigma_of_tau(1.0, l0));
        }
    }

    #[test]
    fn h_at_origin_matches_closed_form() {
        assert!((h_function(0.0, 0.5, 3) - 2f64.sqrt()).abs() < 1e-15);
        assert!((h_function(0.0, 0.5, 1) - 2f64.sqrt()).abs() < 1e-15);
        for d in 1..=3 {
            for l0 in [0.3, 1.47, 2.0] {
                assert!((h_function(0.0, l0, d) / h_at_zero(l0, d) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_moments() {
        let one = |_: f64| 1.0;
        let p = LaplaceProblem { h: &one, dh: None, l: 10.0, omega: 100.0, growth: 1.0 };
        assert!((laplace_h_numeric(&p).unwrap().value - (PI / 100.0).sqrt()).abs() < 1e-8);
        let p = LaplaceProblem { l: 0.0, ..p };
        assert!((laplace_h_numeric(&p).unwrap().value - 0.5 * (PI / 100.0).sqrt()).abs() < 1e-10);
        let sq = |t: f64| t * t;
        let p = LaplaceProblem { h: &sq, dh: None, l: 10.0, omega: 100.0, growth: 1.0 };
        assert!((laplace_h_numeric(&p).unwrap().value - PI.sqrt() / (2.0 * 100f64.powf(1.5))).abs() < 1e-6);
        let p = LaplaceProblem { omega: 2.0, ..p };
        assert!(matches!(laplace_h_numeric(&p), Err(Error::OmegaTooSmall { .. })));
    }

    #[test]
    fn asymptotic_form_is_exact_for_constants() {
        let one = |_: f64| 1.0;
        for l in [-2.0, -0.1, 0.0, 0.3, 2.0] {
            let p = LaplaceProblem { h: &one, dh: None, l, omega: 50.0, growth: 1.0 };
            let exact = laplace_h_numeric(&p).unwrap().value;
            assert!((laplace_h_asymptotic(&p) / exact - 1.0).abs() < 1e-9, "l={l} {exact}");
        }
    }
}
