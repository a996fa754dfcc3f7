//! The exterior coefficient `a(θ, α, y)` and the remainder coefficient `a_β`.
//!
//! Both are integrals `∫_0^∞ ∫ e^{-θ²s/2 + θ<α, z - y>} v(z) f(s, z) dz ds` with
//! `f = p` or `f = β`. The time axis is split at a switch time: below it `p` is replaced
//! by its short-time closure `p0(s, z - y) m(s, z)`, whose Gaussian factor combines with
//! the exponential into `p0(s, z - y - θ s α)` and is integrated by Gauss-Legendre in
//! `sqrt(s)`; above it the recorded field on the support is integrated by the trapezoid
//! rule. The upper limit comes from an exponential tail bound.

use crate::error::{Error, Result};
use crate::evolution::short_time::{window_nodes, BridgeRule};
use crate::evolution::{free_kernel_unchecked, FieldKind, KernelField, SupportRecord};
use crate::potentials::{check_unit, dot, Potential, SourcePoint};
use crate::quadrature::gauss_legendre;
use crate::spectral::SpectralData;
use serde::{Deserialize, Serialize};

/// Accuracy controls for [`coefficient_a`] and [`a_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientOptions {
    /// Target for the truncation bound and for the quadrature refinement.
    pub tol: f64,
    /// Time below which the short-time closure replaces the recorded field.
    pub switch_time: f64,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        CoefficientOptions { tol: 1e-6, switch_time: 0.1 }
    }
}

/// Value of a coefficient integral with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub value: f64,
    /// Truncation time of the `s` integral.
    pub s_max: f64,
    /// Bound on the neglected `∫_{s_max}^∞`.
    pub tail_bound: f64,
    /// Recorded step time where the short-time closure hands over to the field.
    pub switch_time: f64,
    pub short_part: f64,
    pub grid_part: f64,
    /// Change of the short-time part under the last quadrature refinement.
    pub refinement_change: f64,
}

impl CoefficientEstimate {
    /// Truncation bound plus refinement change.
    pub fn error_budget(&self) -> f64 {
        self.tail_bound + self.refinement_change
    }
}

/// Geometry shared by the integrals.
struct Tilt<'a> {
    v: &'a Potential,
    y: &'a [f64],
    theta: f64,
    alpha: &'a [f64],
}

/// Number of dyadic panels in `sqrt(s)`; the smallest covers `s < 4^{-20} s_end`.
const DYADIC_PANELS: i32 = 20;

impl Tilt<'_> {
    /// `∫ p0(s, z - y - θ s α) m(s, z) v(z) dz`.
    fn short_inner(&self, rule: &BridgeRule, s: f64) -> f64 {
        let d = self.y.len();
        let c: Vec<f64> = self.y.iter().zip(self.alpha).map(|(y, a)| y + self.theta * s * a).collect();
        let per_axis = if d == 1 { 12 } else { 8 };
        window_nodes(self.v, &c, 8.0 * s.sqrt(), per_axis)
            .iter()
            .map(|(z, wv)| {
                let dz: Vec<f64> = z.iter().zip(&c).map(|(a, b)| a - b).collect();
                wv * free_kernel_unchecked(s, &dz) * rule.log_multiplier(self.v, self.y, z, s).exp()
            })
            .sum()
    }

    /// `∫_0^{s_end}` of [`Tilt::short_inner`] with `n` Gauss points per dyadic panel in `sqrt(s)`.
    fn short_part(&self, rule: &BridgeRule, s_end: f64, n: usize) -> f64 {
        if s_end <= 0.0 {
            return 0.0;
        }
        let (gx, gw) = gauss_legendre(n);
        let u_end = s_end.sqrt();
        let mut edges: Vec<f64> = (0..=DYADIC_PANELS).map(|k| u_end * 0.5f64.powi(k)).collect();
        edges.push(0.0);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (hi, lo) = (w[0], w[1]);
            let (c, hw) = (0.5 * (hi + lo), 0.5 * (hi - lo));
            for (t, wt) in gx.iter().zip(&gw) {
                let u = c + hw * t;
                total += hw * wt * 2.0 * u * self.short_inner(rule, u * u);
            }
        }
        total
    }

    /// Short-time part refined by raising the Gauss order until the change is below `tol`.
    fn short_refined(&self, s_end: f64, tol: f64) -> (f64, f64) {
        let rule = BridgeRule::new(self.y.len());
        let mut prev = self.short_part(&rule, s_end, 6);
        let mut change = f64::INFINITY;
        for n in [9, 13, 20] {
            let cur = self.short_part(&rule, s_end, n);
            change = (cur - prev).abs();
            prev = cur;
            if change < 0.1 * tol {
                break;
            }
        }
        (prev, change)
    }

    /// `θ <α, z_j - y>` for every support node.
    fn phases(&self, rec: &SupportRecord) -> Vec<f64> {
        rec.nodes
            .iter()
            .map(|z| {
                let dz: Vec<f64> = z.iter().zip(self.y).map(|(a, b)| a - b).collect();
                self.theta * dot(self.alpha, &dz)
            })
            .collect()
    }
}

/// Pointwise subtraction `e^{λ₀ s} psi(z) psi(y)` applied to kernel values.
struct GroundSubtraction {
    lambda0: f64,
    psi_y: f64,
    psi_nodes: Vec<f64>,
}

/// Trapezoid integral over recorded steps `k_from..=k_to` of
/// `Σ_j cell V_j e^{-θ² s/2 + phase_j} f_j(s)`.
fn grid_part(rec: &SupportRecord, phases: &[f64], theta: f64, k_from: usize, k_to: usize, sub: Option<&GroundSubtraction>) -> f64 {
    let f = |k: usize| -> f64 {
        let st = &rec.steps[k];
        let base = -0.5 * theta * theta * st.t;
        let mut acc = 0.0;
        for (j, (vj, pj)) in rec.v.iter().zip(&st.values).enumerate() {
            let mut term = pj * (base + phases[j] + st.log_scale).exp();
            if let Some(g) = sub {
                term -= g.psi_nodes[j] * g.psi_y * (base + phases[j] + g.lambda0 * st.t).exp();
            }
            acc += vj * term;
        }
        acc * rec.cell_volume
    };
    let mut total = 0.0;
    let mut prev = f(k_from);
    for k in k_from + 1..=k_to {
        let cur = f(k);
        total += 0.5 * (rec.steps[k].t - rec.steps[k - 1].t) * (prev + cur);
        prev = cur;
    }
    total
}

/// `max_k ∫_supp |f(t_k)| e^{-λ̃ t_k}` over the recorded steps.
fn growth_constant(rec: &SupportRecord, lambda_tilde: f64, sub: Option<&GroundSubtraction>) -> f64 {
    rec.steps
        .iter()
        .map(|st| {
            let mut mass: f64 = st.values.iter().map(|p| p.abs()).sum::<f64>() * (st.log_scale - lambda_tilde * st.t).exp();
            if let Some(g) = sub {
                mass += g.psi_nodes.iter().map(|p| p.abs()).sum::<f64>() * g.psi_y.abs() * ((g.lambda0 - lambda_tilde) * st.t).exp();
            }
            mass * rec.cell_volume
        })
        .fold(0.0, f64::max)
}

/// Truncation time where `sup|v| e^{2Rθ} C e^{(λ̃ - θ²/2) S} / (θ²/2 - λ̃)` falls to `tol`.
fn truncation_time(sup_v: f64, radius: f64, theta: f64, c: f64, lambda_tilde: f64, tol: f64) -> (f64, f64) {
    let rate = 0.5 * theta * theta - lambda_tilde;
    let pre = sup_v * (2.0 * radius * theta).exp() * c / rate;
    let s_max = ((pre / tol).ln() / rate).max(0.0);
    (s_max, pre * (-rate * s_max).exp())
}

fn check_inputs(v: &Potential, field: &KernelField, theta: f64, alpha: &[f64], y: &SourcePoint) -> Result<()> {
    v.require_compact()?;
    if alpha.len() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: alpha.len() });
    }
    check_unit(alpha)?;
    if y.dim() != v.dim() || field.y().dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: y.dim() });
    }
    if field.y().as_slice().iter().zip(y.as_slice()).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::invalid("y", "source point differs from the kernel field source"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid("theta", format!("must be positive and finite, got {theta}")));
    }
    Ok(())
}

/// Common driver: `base_rate` is the growth exponent of `f` (λ₀ for `p`, λ₀ - ϰ for `β`).
fn tilted_integral(
    v: &Potential,
    field: &KernelField,
    theta: f64,
    alpha: &[f64],
    y: &SourcePoint,
    base_rate: f64,
    sub: Option<&GroundSubtraction>,
    opts: &CoefficientOptions,
) -> Result<(CoefficientEstimate, f64)> {
    let rec = field.support().ok_or_else(|| Error::Unsupported("field has no support record".into()))?;
    let tilt = Tilt { v, y: y.as_slice(), theta, alpha };
    let lambda_tilde = base_rate + (theta - (2.0 * base_rate.max(0.0)).sqrt()).powi(2) / 8.0;
    let c = growth_constant(rec, lambda_tilde, sub).max(1.0);
    let (s_max, tail_bound) = truncation_time(v.sup_abs(), v.support_radius(), theta, c, lambda_tilde, opts.tol);
    let steps = &rec.steps;
    let covered = steps.last().map_or(0.0, |s| s.t);
    let k_sw = steps.partition_point(|s| s.t < opts.switch_time.max(field.t0()));
    if k_sw >= steps.len() || s_max > covered {
        return Err(Error::KernelTooShort { covered, needed: s_max.max(opts.switch_time) });
    }
    let s_sw = steps[k_sw].t;
    let short_end = s_sw.min(s_max);
    let (short, change) = tilt.short_refined(short_end, opts.tol);
    let grid = if s_max > s_sw {
        let k_end = steps.partition_point(|s| s.t < s_max).min(steps.len() - 1);
        grid_part(rec, &tilt.phases(rec), theta, k_sw, k_end, sub)
    } else {
        0.0
    };
    let est = CoefficientEstimate {
        value: short + grid,
        s_max,
        tail_bound,
        switch_time: short_end,
        short_part: short,
        grid_part: grid,
        refinement_change: change,
    };
    Ok((est, short_end))
}

/// `a(θ, α, y) = 1 + ∫_0^∞ ∫ e^{-θ²s/2 - θ<α, y - z>} v(z) p(s, z, y) dz ds`.
///
/// `lambda0` is the principal eigenvalue (zero when there is none); the integral
/// converges for `θ > sqrt(2 λ₀)`.
pub fn coefficient_a(
    v: &Potential,
    kernel: &KernelField,
    lambda0: f64,
    theta: f64,
    alpha: &[f64],
    y: &SourcePoint,
    opts: &CoefficientOptions,
) -> Result<CoefficientEstimate> {
    check_inputs(v, kernel, theta, alpha, y)?;
    if kernel.kind() != FieldKind::Kernel {
        return Err(Error::Unsupported("coefficient a needs a kernel field".into()));
    }
    let threshold = (2.0 * lambda0.max(0.0)).sqrt();
    if theta <= threshold {
        return Err(Error::ThetaTooSmall { theta, threshold });
    }
    if v.is_zero() {
        let zero = CoefficientEstimate {
            value: 1.0,
            s_max: 0.0,
            tail_bound: 0.0,
            switch_time: 0.0,
            short_part: 0.0,
            grid_part: 0.0,
            refinement_change: 0.0,
        };
        return Ok(zero);
    }
    let (mut est, _) = tilted_integral(v, kernel, theta, alpha, y, lambda0.max(0.0), None, opts)?;
    est.value += 1.0;
    Ok(est)
}

/// `1 + (1/θ) ∫_0^∞ v(y + r α) dr`, the large-`θ` form of `a`.
pub fn coefficient_a_large_theta(v: &Potential, theta: f64, alpha: &[f64], y: &SourcePoint) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", format!("must be positive, got {theta}")));
    }
    Ok(1.0 + v.line_integral(y, alpha, 1e-12)? / theta)
}

/// `∫ e^{θ<α, z - y>} v(z) psi(z) dz`.
pub fn tilted_moment(spectral: &SpectralData, theta: f64, alpha: &[f64], y: &SourcePoint) -> f64 {
    let w: Vec<f64> = alpha.iter().map(|a| theta * a).collect();
    (-theta * dot(alpha, y.as_slice())).exp() * spectral.exp_moment(&w)
}

/// `∫_0^s e^{-r u} du`, stable as `r → 0`.
fn exp_integral(r: f64, s: f64) -> f64 {
    if (r * s).abs() < 1e-12 {
        s
    } else {
        -(-r * s).exp_m1() / r
    }
}

/// `a_β(θ, α, y) = ∫_0^∞ ∫ e^{-θ²s/2 - θ<α, y - z>} v(z) β(s, z, y) dz ds` with
/// `β = p - e^{λ₀ s} psi psi(y)`.
///
/// `field` is either a remainder field from `evolve_remainder`, used as is, or a
/// kernel field from which `e^{λ₀ s} psi(z) psi(y)` is subtracted node by node.
/// Converges for `θ² / 2 > λ₀ - ϰ`; the spectral gap must be present.
pub fn a_beta(
    v: &Potential,
    field: &KernelField,
    spectral: &SpectralData,
    theta: f64,
    alpha: &[f64],
    y: &SourcePoint,
    opts: &CoefficientOptions,
) -> Result<CoefficientEstimate> {
    check_inputs(v, field, theta, alpha, y)?;
    let gap = spectral.gap().ok_or_else(|| Error::Unsupported("a_beta needs the spectral gap".into()))?;
    let lambda0 = spectral.lambda0();
    let base = (lambda0 - gap).max(0.0);
    let threshold = (2.0 * base).sqrt();
    if 0.5 * theta * theta - base <= 1e-9 {
        return Err(Error::ThetaTooSmall { theta, threshold });
    }
    let psi_y = spectral.psi_extended(y.as_slice());
    let sub = match field.kind() {
        FieldKind::Remainder { .. } => None,
        FieldKind::Kernel => {
            let rec = field.support().ok_or_else(|| Error::Unsupported("field has no support record".into()))?;
            let psi_nodes = rec.nodes.iter().map(|z| spectral.psi_extended(z)).collect();
            Some(GroundSubtraction { lambda0, psi_y, psi_nodes })
        }
    };
    let (mut est, short_end) = tilted_integral(v, field, theta, alpha, y, base, sub.as_ref(), opts)?;
    // Remove the ground-state component from the short-time part analytically.
    let ground = psi_y * tilted_moment(spectral, theta, alpha, y) * exp_integral(0.5 * theta * theta - lambda0, short_end);
    est.short_part -= ground;
    est.value -= ground;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_integral_limits() {
        assert!((exp_integral(0.0, 2.0) - 2.0).abs() < 1e-15);
        assert!((exp_integral(1.0, 50.0) - 1.0).abs() < 1e-15);
        assert!((exp_integral(-0.5, 2.0) - ((1f64).exp() - 1.0) / 0.5).abs() < 1e-13);
    }

    #[test]
    fn truncation_bound_meets_tolerance() {
        let (s, b) = truncation_time(2.0, 1.0, 3.0, 1.5, 1.5, 1e-6);
        assert!(s > 0.0);
        assert!((b / 1e-6 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn large_theta_form() {
        let v = Potential::square_well(1, 2.0, 1.0).unwrap();
        let y = SourcePoint::origin(1);
        assert!((coefficient_a_large_theta(&v, 20.0, &[1.0], &y).unwrap() - 1.1).abs() < 1e-12);
        assert!(coefficient_a_large_theta(&v, 0.0, &[1.0], &y).is_err());
    }
}
