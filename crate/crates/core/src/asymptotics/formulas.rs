//! Interior, exterior and global (erf-matched) formulas and their coefficients.

use super::coefficients::{a_beta, coefficient_a, tilted_moment, CoefficientEstimate, CoefficientOptions};
use super::cone::classify;
use super::laplace::{h_at_zero, q_ratio};
use crate::error::{Error, Result};
use crate::evolution::{free_kernel, KernelField};
use crate::potentials::{check_unit, dot, Potential, SourcePoint};
use crate::spectral::SpectralData;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The error function.
pub fn erf_eval(u: f64) -> f64 {
    libm::erf(u)
}

/// `1 + erf(u)`, computed as `erfc(-u)` so the left tail keeps full relative accuracy.
pub fn one_plus_erf(u: f64) -> f64 {
    libm::erfc(-u)
}

/// `ln(1 + erf(u))`, finite even where `1 + erf(u)` underflows.
pub fn ln_one_plus_erf(u: f64) -> f64 {
    let e = libm::erfc(-u);
    if e > 1e-300 {
        return e.ln();
    }
    // Asymptotic series of erfc(z), z = -u > 26.
    let z = -u;
    let z2 = z * z;
    -z2 - (z * PI.sqrt()).ln() + (1.0 - 0.5 / z2 + 0.75 / (z2 * z2) - 1.875 / (z2 * z2 * z2)).ln()
}

fn check_direction(spectral: &SpectralData, dir: &[f64]) -> Result<()> {
    if dir.len() != spectral.dim() {
        return Err(Error::DimensionMismatch { expected: spectral.dim(), got: dir.len() });
    }
    check_unit(dir)
}

/// The factor `b(θ, xhat, y, z)` inside `γ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BFactor {
    /// `b = 1`, for `θ ≤ sqrt(2λ₀)`.
    One,
    /// `b = e^{rate <xhat, z - y>}` with `rate = θ - sqrt(2λ₀)`.
    Exponential { rate: f64, xhat: Vec<f64>, y: Vec<f64> },
}

impl BFactor {
    pub fn new(spectral: &SpectralData, theta: f64, xhat: &[f64], y: &SourcePoint) -> Self {
        let k = spectral.kappa();
        if theta <= k {
            BFactor::One
        } else {
            BFactor::Exponential { rate: theta - k, xhat: xhat.to_vec(), y: y.as_slice().to_vec() }
        }
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        match self {
            BFactor::One => 1.0,
            BFactor::Exponential { rate, xhat, y } => {
                let dz: Vec<f64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
                (rate * dot(xhat, &dz)).exp()
            }
        }
    }
}

/// `γ₁ = (2π)^{(1-d)/2} 2^{-3/2} h(0) ∫ e^{sqrt(2λ₀)<xhat, z>} b v psi dz`.
pub fn gamma1(v: &Potential, spectral: &SpectralData, theta: f64, xhat: &[f64], y: &SourcePoint) -> Result<f64> {
    if v.dim() != spectral.dim() {
        return Err(Error::DimensionMismatch { expected: spectral.dim(), got: v.dim() });
    }
    check_direction(spectral, xhat)?;
    let d = spectral.dim();
    let k = spectral.kappa();
    // With b folded in the exponent is max(θ, κ) <xhat, z> - (θ - κ)^+ <xhat, y>.
    let rate = theta.max(k);
    let w: Vec<f64> = xhat.iter().map(|c| rate * c).collect();
    let shift = (rate - k) * dot(xhat, y.as_slice());
    let pre = (2.0 * PI).powf(0.5 * (1.0 - d as f64)) * 2f64.powf(-1.5) * h_at_zero(spectral.lambda0(), d);
    Ok(pre * (-shift).exp() * spectral.exp_moment(&w))
}

/// `γ₂ = psi(y) θ^{-d/2} q(θ) ∫ e^{-θ<α, y - z>} v psi dz`, `q = (h(0) - h(g)) / (2g)`.
pub fn gamma2(v: &Potential, spectral: &SpectralData, theta: f64, alpha: &[f64], y: &SourcePoint) -> Result<f64> {
    if v.dim() != spectral.dim() {
        return Err(Error::DimensionMismatch { expected: spectral.dim(), got: v.dim() });
    }
    check_direction(spectral, alpha)?;
    let d = spectral.dim();
    let q = q_ratio(theta, spectral.lambda0(), d)?;
    let psi_y = spectral.psi_extended(y.as_slice());
    Ok(psi_y * theta.powf(-0.5 * d as f64) * q * tilted_moment(spectral, theta, alpha, y))
}

/// `a₁ = 1/2` for `θ ≤ sqrt(2λ₀)` or undefined `xhat`, else `γ₁ / C(xhat)`.
pub fn a1_coefficient(v: &Potential, spectral: &SpectralData, theta: f64, xhat: Option<&[f64]>, y: &SourcePoint) -> Result<f64> {
    match xhat {
        Some(xh) if theta > spectral.kappa() => Ok(gamma1(v, spectral, theta, xh, y)? / spectral.cfar(xh)?),
        _ => Ok(0.5),
    }
}

/// Configuration of the global formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormulaOptions {
    /// Width `ε₀` of the window where `a_β` is evaluated; `θ ≤ 1/ε₀` is required.
    pub eps0: f64,
    pub coefficient: CoefficientOptions,
}

impl Default for FormulaOptions {
    fn default() -> Self {
        FormulaOptions { eps0: 0.05, coefficient: CoefficientOptions::default() }
    }
}

/// `θ* = sqrt(2(λ₀ - ϰ)) + ε₀`; below it `a₂` is frozen at its value there.
pub fn a2_freeze_point(spectral: &SpectralData, eps0: f64) -> Result<f64> {
    let gap = spectral.gap().ok_or_else(|| Error::Unsupported("a2 needs the spectral gap".into()))?;
    Ok((2.0 * (spectral.lambda0() - gap).max(0.0)).sqrt() + eps0)
}

/// `a₂ = 1 + γ₂ + a_β` with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2Value {
    pub value: f64,
    /// `max(θ, θ*)`, where the parts were evaluated.
    pub theta_used: f64,
    pub gamma2: f64,
    pub a_beta: CoefficientEstimate,
}

/// `a₂(θ, α, y)`, frozen below `θ*`.
pub fn a2_coefficient(
    v: &Potential,
    field: &KernelField,
    spectral: &SpectralData,
    theta: f64,
    alpha: &[f64],
    y: &SourcePoint,
    opts: &FormulaOptions,
) -> Result<A2Value> {
    let theta_used = theta.max(a2_freeze_point(spectral, opts.eps0)?);
    let g2 = gamma2(v, spectral, theta_used, alpha, y)?;
    let ab = a_beta(v, field, spectral, theta_used, alpha, y, &opts.coefficient)?;
    Ok(A2Value { value: 1.0 + g2 + ab.value, theta_used, gamma2: g2, a_beta: ab })
}

/// All coefficients at one `(θ, α, xhat, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    /// `a(θ, α, y)`, present for `θ > sqrt(2λ₀)`.
    pub a: Option<f64>,
    pub a1: f64,
    pub a2: f64,
    pub gamma1: Option<f64>,
    pub gamma2: f64,
    pub a_beta: f64,
    pub b: BFactor,
}

/// Evaluates [`CoefficientSet`]. `kernel` is a kernel field and `remainder` a field
/// accepted by [`a_beta`], both from the source `y`.
#[allow(clippy::too_many_arguments)]
pub fn coefficient_set(
    v: &Potential,
    kernel: &KernelField,
    remainder: &KernelField,
    spectral: &SpectralData,
    theta: f64,
    alpha: &[f64],
    xhat: Option<&[f64]>,
    y: &SourcePoint,
    opts: &FormulaOptions,
) -> Result<CoefficientSet> {
    let a = if theta > spectral.kappa() {
        Some(coefficient_a(v, kernel, spectral.lambda0(), theta, alpha, y, &opts.coefficient)?.value)
    } else {
        None
    };
    let a2 = a2_coefficient(v, remainder, spectral, theta, alpha, y, opts)?;
    let gamma1 = xhat.map(|xh| gamma1(v, spectral, theta, xh, y)).transpose()?;
    let b = match xhat {
        Some(xh) => BFactor::new(spectral, theta, xh, y),
        None => BFactor::One,
    };
    Ok(CoefficientSet {
        a,
        a1: a1_coefficient(v, spectral, theta, xhat, y)?,
        a2: a2.value,
        gamma1,
        gamma2: a2.gamma2,
        a_beta: a2.a_beta.value,
        b,
    })
}

/// `e^{λ₀ t} psi(x) psi(y)`.
pub fn interior_formula(spectral: &SpectralData, t: f64, x: &[f64], y: &SourcePoint) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("must be non-negative, got {t}")));
    }
    if x.len() != spectral.dim() {
        return Err(Error::DimensionMismatch { expected: spectral.dim(), got: x.len() });
    }
    Ok((spectral.lambda0() * t + spectral.ln_psi_extended(x) + spectral.ln_psi_extended(y.as_slice())).exp())
}

/// `p0(t, x - y) a(θ, α, y)`.
pub fn exterior_formula(
    v: &Potential,
    kernel: &KernelField,
    lambda0: f64,
    t: f64,
    x: &[f64],
    y: &SourcePoint,
    opts: &CoefficientOptions,
) -> Result<f64> {
    let c = classify(t, x, y, lambda0, 0.0)?;
    let dx: Vec<f64> = x.iter().zip(y.as_slice()).map(|(a, b)| a - b).collect();
    let p0 = free_kernel(t, &dx)?;
    let Some(alpha) = c.alpha else {
        return Err(Error::ThetaTooSmall { theta: 0.0, threshold: (2.0 * lambda0.max(0.0)).sqrt() });
    };
    Ok(p0 * coefficient_a(v, kernel, lambda0, c.theta, &alpha, y, opts)?.value)
}

/// Global formula value with its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalValue {
    pub value: f64,
    /// `e^{λ₀ t} psi(x) psi(y) (1 + erf(u)) a₁`.
    pub first: f64,
    /// `p0(t, x - y) a₂`.
    pub second: f64,
    pub theta: f64,
    pub a1: f64,
    pub a2: f64,
    /// `u = sqrt(t) (sqrt(2λ₀) - θ) / sqrt(2)`.
    pub erf_argument: f64,
}

/// `e^{λ₀t} psi(x) psi(y) (1 + erf(sqrt(t)(sqrt(2λ₀) - θ)/sqrt(2))) a₁ + p0(t, x - y) a₂`.
///
/// `field` is the `β` source accepted by [`a_beta`]. Requires `θ ≤ 1/ε₀`.
pub fn global_formula(
    v: &Potential,
    field: &KernelField,
    spectral: &SpectralData,
    t: f64,
    x: &[f64],
    y: &SourcePoint,
    opts: &FormulaOptions,
) -> Result<GlobalValue> {
    let c = classify(t, x, y, spectral.lambda0(), 0.0)?;
    if !(opts.eps0 > 0.0) {
        return Err(Error::invalid("eps0", "must be positive"));
    }
    if c.theta > 1.0 / opts.eps0 {
        return Err(Error::OutOfRange { what: "theta", value: c.theta, lo: 0.0, hi: 1.0 / opts.eps0 });
    }
    let a1 = a1_coefficient(v, spectral, c.theta, c.xhat.as_deref(), y)?;
    let alpha = c.alpha.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; x.len()];
        e[0] = 1.0;
        e
    });
    let a2 = a2_coefficient(v, field, spectral, c.theta, &alpha, y, opts)?.value;
    let u = t.sqrt() * (spectral.kappa() - c.theta) / std::f64::consts::SQRT_2;
    let ln_psi = spectral.ln_psi_extended(x) + spectral.ln_psi_extended(y.as_slice());
    let first = if a1 > 0.0 {
        (spectral.lambda0() * t + ln_psi + a1.ln() + ln_one_plus_erf(u)).exp()
    } else {
        (spectral.lambda0() * t + ln_psi).exp() * one_plus_erf(u) * a1
    };
    let dx: Vec<f64> = x.iter().zip(y.as_slice()).map(|(a, b)| a - b).collect();
    let second = free_kernel(t, &dx)? * a2;
    Ok(GlobalValue { value: first + second, first, second, theta: c.theta, a1, a2, erf_argument: u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn erf_against_defining_integral() {
        for k in 0..20 {
            let u = -4.0 + 0.4 * k as f64;
            let q = integrate(|s: f64| (-s * s).exp(), 0.0, u, 1e-16, 1e-15).unwrap().value;
            assert!((erf_eval(u) - 2.0 / PI.sqrt() * q).abs() < 1e-14, "u={u} {} {}", erf_eval(u), 2.0 / PI.sqrt() * q);
        }
        assert_eq!(erf_eval(0.0), 0.0);
        assert!((erf_eval(10.0) - 1.0).abs() < 1e-14);
        assert!((erf_eval(-10.0) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn erf_left_tail() {
        let u = -5.0f64;
        let approx = (-u * u).exp() / (PI.sqrt() * u.abs());
        assert!((one_plus_erf(u) / approx - 1.0).abs() < 0.05);
        for u in [-3.0, -10.0, -26.0] {
            assert!((ln_one_plus_erf(u) - one_plus_erf(u).ln()).abs() < 1e-12);
        }
        let z = 40.0f64;
        let series = -z * z - (z * PI.sqrt()).ln();
        assert!((ln_one_plus_erf(-z) - series).abs() < 1e-3);
    }
}
