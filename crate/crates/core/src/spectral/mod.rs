//! Principal eigenpair of `L = 1/2 Δ + v`, spectral gap and far-field constant.

mod banded;
mod plane;

use crate::error::{Error, Result};
use crate::grid::{Discretization, Grid1D, Grid2D};
use crate::potentials::{check_unit, dot, norm, Potential};
use crate::quadrature::gauss_legendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Solver settings. Defaults depend on the dimension, see [`SpectralOptions::for_dim`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralOptions {
    /// Grid spacing.
    pub h: f64,
    /// Initial domain radius; `None` picks `max(4R, 25 / sqrt(2 sup v))`.
    pub radius: Option<f64>,
    /// Stop when successive eigenvalue iterates differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Enlarge the domain until the eigenvalue moves by less than `enlarge_tol`.
    pub auto_enlarge: bool,
    pub enlarge_tol: f64,
    /// Largest admissible `|psi|` on the outermost node relative to `max psi`.
    pub tail_tol: f64,
    /// Minimum number of points per dimension (d = 1).
    pub min_points: usize,
    /// Relative disagreement allowed between grid and far-field branches.
    pub handover_tol: f64,
}

impl SpectralOptions {
    pub fn for_dim(d: usize) -> Self {
        let h = match d {
            2 => 0.1,
            _ => 0.01,
        };
        SpectralOptions {
            h,
            radius: None,
            tol: 1e-10,
            max_iter: 10_000,
            auto_enlarge: true,
            enlarge_tol: 1e-8,
            tail_tol: 1e-6,
            min_points: 512,
            handover_tol: 0.01,
        }
    }
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self::for_dim(1)
    }
}

/// Quadrature node for integrals `∫ f(z) v(z) psi(z) dz` over the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MomentNode {
    z: Vec<f64>,
    weight: f64,
}

/// Ground state data. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    dim: usize,
    lambda0: f64,
    psi: Vec<f64>,
    grid: Discretization,
    gap: Option<f64>,
    /// `psi(0)` for the radial discretization (the origin is not a node).
    psi_origin: f64,
    moments: Vec<MomentNode>,
    residual: f64,
    iterations: usize,
}

/// Runs [`ground_state`] followed by [`spectral_gap`].
pub fn spectrum(v: &Potential, opts: &SpectralOptions) -> Result<SpectralData> {
    let sd = ground_state(v, opts)?;
    let gap = spectral_gap(v, &sd)?;
    Ok(sd.with_gap(gap))
}

/// Largest eigenvalue and normalized positive ground state of the finite-difference
/// discretization of `1/2 Δ + v` with Dirichlet boundary.
pub fn ground_state(v: &Potential, opts: &SpectralOptions) -> Result<SpectralData> {
    v.require_compact()?;
    if !(opts.h > 0.0) {
        return Err(Error::invalid("h", "grid spacing must be positive"));
    }
    if v.max_value() <= 0.0 {
        // The discrete operator is negative definite.
        return Err(Error::NoPositiveEigenvalue { lambda: v.max_value() });
    }
    let guess = v.max_value();
    let mut radius = opts
        .radius
        .unwrap_or_else(|| (4.0 * v.support_radius()).max(25.0 / (2.0 * guess).sqrt()));
    let mut current = solve_at(v, radius, opts)?;
    let mut last_change = f64::INFINITY;
    if opts.auto_enlarge {
        let mut accepted = false;
        for _ in 0..12 {
            let next_radius = radius * 1.25;
            let next = solve_at(v, next_radius, opts)?;
            last_change = (next.lambda0 - current.lambda0).abs();
            let tail_ok = current.tail_ratio() <= opts.tail_tol;
            if last_change < opts.enlarge_tol && tail_ok {
                accepted = true;
                break;
            }
            radius = next_radius;
            current = next;
        }
        if !accepted {
            return Err(Error::NonConvergence { what: "domain enlargement", iterations: 12, residual: last_change });
        }
    }
    current.check_handover(opts.handover_tol)?;
    Ok(current)
}

fn solve_at(v: &Potential, radius: f64, opts: &SpectralOptions) -> Result<SpectralData> {
    match v.dim() {
        1 => {
            let g = Grid1D::new(radius, opts.h)?;
            if g.len() < opts.min_points {
                return Err(Error::invalid(
                    "h",
                    format!("{} grid points; at least {} are required", g.len(), opts.min_points),
                ));
            }
            line_ground_state(v, g, opts.tol, opts.max_iter)
        }
        2 => plane_ground_state(v, Grid2D::new(radius, opts.h)?, opts.tol, opts.max_iter),
        3 => radial_ground_state(v, radius, opts.h, opts.tol, opts.max_iter),
        d => Err(Error::Unsupported(format!("spectral solve in dimension {d}"))),
    }
}

/// Ground state on a prescribed 1D grid, without domain enlargement or handover checks.
pub fn line_ground_state(v: &Potential, g: Grid1D, tol: f64, max_iter: usize) -> Result<SpectralData> {
    let vc = g.cell_averages(v);
    let diag = banded::operator_diag(&vc, g.h);
    let off = banded::operator_off(g.h);
    if crate::tridiag::count_above(&diag, off, 1e-6) == 0 {
        let top = banded::top_positive(&diag, off).unwrap_or(0.0);
        return Err(Error::NoPositiveEigenvalue { lambda: top });
    }
    let sigma = v.max_value() + 1.0;
    let pair = banded::top_pair(&diag, off, sigma, tol, max_iter)?;
    let residual = banded::residual(&diag, off, pair.lambda, &pair.vector);
    let s = g.h.sqrt();
    let psi: Vec<f64> = pair.vector.iter().map(|u| u / s).collect();
    let moments = (0..g.len())
        .filter(|&j| vc[j] != 0.0)
        .map(|j| MomentNode { z: vec![g.x(j)], weight: g.h * vc[j] * psi[j] })
        .collect();
    Ok(SpectralData {
        dim: 1,
        lambda0: pair.lambda,
        psi,
        grid: Discretization::Line(g),
        gap: None,
        psi_origin: f64::NAN,
        moments,
        residual,
        iterations: pair.iterations,
    })
}

/// Ground state on a prescribed 2D grid, without domain enlargement or handover checks.
pub(crate) fn plane_ground_state_on(v: &Potential, g: Grid2D, tol: f64, max_iter: usize) -> Result<SpectralData> {
    plane_ground_state(v, g, tol, max_iter)
}

fn plane_ground_state(v: &Potential, g: Grid2D, tol: f64, max_iter: usize) -> Result<SpectralData> {
    let vc = g.cell_averages(v);
    let op = plane::PlaneOperator { n: g.n(), h: g.h(), v: &vc };
    let (lambda, u, iterations) = op.top_pair(v.max_value() + 1.0, None, tol, max_iter)?;
    if lambda <= 1e-6 {
        return Err(Error::NoPositiveEigenvalue { lambda });
    }
    let residual = op.residual(lambda, &u);
    let h = g.h();
    let psi: Vec<f64> = u.iter().map(|a| a / h).collect();
    let moments = (0..g.len())
        .filter(|&k| vc[k] != 0.0)
        .map(|k| MomentNode { z: g.point(k).to_vec(), weight: h * h * vc[k] * psi[k] })
        .collect();
    Ok(SpectralData {
        dim: 2,
        lambda0: lambda,
        psi,
        grid: Discretization::Plane(g),
        gap: None,
        psi_origin: f64::NAN,
        moments,
        residual,
        iterations,
    })
}

/// Cell averages of the radial profile on `r_j = j h`, split at the jumps of `v`.
fn radial_cell_averages(v: &Potential, h: f64, n: usize) -> Vec<f64> {
    let (gx, gw) = gauss_legendre(8);
    let breaks = v.radial_breaks();
    (1..=n)
        .map(|j| {
            let r = j as f64 * h;
            if r - 0.5 * h > v.support_radius() {
                return 0.0;
            }
            let (a, b) = (r - 0.5 * h, r + 0.5 * h);
            let mut cuts = vec![a];
            cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
            cuts.push(b);
            let mut s = 0.0;
            for w in cuts.windows(2) {
                let (c, hw) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (t, wt) in gx.iter().zip(&gw) {
                    s += wt * hw * v.radial(c + hw * t);
                }
            }
            s / h
        })
        .collect()
}

/// Effective diagonal for angular momentum `l` in the reduced radial problem.
fn radial_diag(vc: &[f64], h: f64, l: usize) -> Vec<f64> {
    let ll = (l * (l + 1)) as f64;
    let mut d = banded::operator_diag(vc, h);
    for (j, dj) in d.iter_mut().enumerate() {
        let r = (j + 1) as f64 * h;
        *dj -= 0.5 * ll / (r * r);
    }
    d
}

fn radial_ground_state(v: &Potential, radius: f64, h: f64, tol: f64, max_iter: usize) -> Result<SpectralData> {
    let n = (radius / h).ceil() as usize;
    if n < 8 {
        return Err(Error::invalid("radius", "radial grid needs at least 8 points"));
    }
    let vc = radial_cell_averages(v, h, n);
    let diag = radial_diag(&vc, h, 0);
    let off = banded::operator_off(h);
    if crate::tridiag::count_above(&diag, off, 1e-6) == 0 {
        let top = banded::top_positive(&diag, off).unwrap_or(0.0);
        return Err(Error::NoPositiveEigenvalue { lambda: top });
    }
    let pair = banded::top_pair(&diag, off, v.max_value() + 1.0, tol, max_iter)?;
    let residual = banded::residual(&diag, off, pair.lambda, &pair.vector);
    // u = r psi with 4 pi ∫ u^2 dr = 1.
    let s = (4.0 * PI * h).sqrt();
    let psi: Vec<f64> = pair
        .vector
        .iter()
        .enumerate()
        .map(|(j, u)| u / s / ((j + 1) as f64 * h))
        .collect();
    let psi_origin = (4.0 * psi[0] - psi[1]) / 3.0;
    let moments = (0..n)
        .filter(|&j| vc[j] != 0.0)
        .map(|j| {
            let r = (j + 1) as f64 * h;
            MomentNode { z: vec![r], weight: 4.0 * PI * r * r * h * vc[j] * psi[j] }
        })
        .collect();
    Ok(SpectralData {
        dim: 3,
        lambda0: pair.lambda,
        psi,
        grid: Discretization::Radial { h, n },
        gap: None,
        psi_origin,
        moments,
        residual,
        iterations: pair.iterations,
    })
}

/// Distance from `lambda0` to the rest of the discrete spectrum, or `lambda0`
/// when no other positive eigenvalue exists.
pub fn spectral_gap(v: &Potential, sd: &SpectralData) -> Result<f64> {
    let l0 = sd.lambda0;
    let l1 = match sd.grid {
        Discretization::Line(g) => {
            let vc = g.cell_averages(v);
            banded::second_positive(&banded::operator_diag(&vc, g.h), banded::operator_off(g.h), l0)
        }
        Discretization::Radial { h, n } => {
            let vc = radial_cell_averages(v, h, n);
            let off = banded::operator_off(h);
            let s_wave = banded::second_positive(&radial_diag(&vc, h, 0), off, l0);
            let p_wave = banded::top_positive(&radial_diag(&vc, h, 1), off);
            match (s_wave, p_wave) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            }
        }
        Discretization::Plane(g) => {
            let vc = g.cell_averages(v);
            let op = plane::PlaneOperator { n: g.n(), h: g.h(), v: &vc };
            let (l1, _, _) = op.top_pair(v.max_value() + 1.0, Some(&sd.psi), 1e-9, 20_000)?;
            (l1 > 0.0).then_some(l1)
        }
    };
    Ok(match l1 {
        Some(l1) if l1 > 0.0 => (l0 - l1).min(l0),
        _ => l0,
    })
}

/// `(2π)^{(1-d)/2} (2λ₀)^{(d-3)/4} ∫ e^{sqrt(2λ₀)<xhat, z>} v psi dz`.
pub fn farfield_constant(v: &Potential, sd: &SpectralData, xhat: &[f64]) -> Result<f64> {
    if v.dim() != sd.dim {
        return Err(Error::DimensionMismatch { expected: sd.dim, got: v.dim() });
    }
    sd.cfar(xhat)
}

/// Ground state with the far-field closure outside `0.8 * radius`.
pub fn psi_extended(sd: &SpectralData, x: &[f64]) -> f64 {
    sd.psi_extended(x)
}

impl SpectralData {
    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = Some(gap);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// `sqrt(2 λ₀)`, the cone slope and decay rate of `psi`.
    pub fn kappa(&self) -> f64 {
        (2.0 * self.lambda0).sqrt()
    }

    pub fn gap(&self) -> Option<f64> {
        self.gap
    }

    /// Nodal values of `psi` on the discretization.
    pub fn psi_values(&self) -> &[f64] {
        &self.psi
    }

    pub fn grid(&self) -> &Discretization {
        &self.grid
    }

    /// `||(1/2 Δ_h + v - λ₀) psi|| / ||psi||` at construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `∫ e^{<w, z>} v(z) psi(z) dz` by grid quadrature over the support.
    pub fn exp_moment(&self, w: &[f64]) -> f64 {
        match self.grid {
            Discretization::Radial { .. } => {
                let k = norm(w);
                self.moments
                    .iter()
                    .map(|m| {
                        let kr = k * m.z[0];
                        let sinhc = if kr < 1e-8 { 1.0 } else { kr.sinh() / kr };
                        m.weight * sinhc
                    })
                    .sum()
            }
            _ => self.moments.iter().map(|m| m.weight * dot(w, &m.z).exp()).sum(),
        }
    }

    /// Far-field constant `C(xhat)`.
    pub fn cfar(&self, xhat: &[f64]) -> Result<f64> {
        check_unit(xhat)?;
        if xhat.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: xhat.len() });
        }
        let d = self.dim as f64;
        let k = self.kappa();
        let w: Vec<f64> = xhat.iter().map(|c| k * c).collect();
        let c = (2.0 * PI).powf(0.5 * (1.0 - d)) * (2.0 * self.lambda0).powf(0.25 * (d - 3.0)) * self.exp_moment(&w);
        if c > 0.0 {
            Ok(c)
        } else {
            Err(Error::NonPositiveConstant { direction: xhat.to_vec(), value: c })
        }
    }

    /// Interpolated grid value of `psi`, or `None` outside the grid.
    pub fn psi_grid(&self, x: &[f64]) -> Option<f64> {
        match self.grid {
            Discretization::Line(g) => g.interpolate(&self.psi, x[0]),
            Discretization::Plane(g) => g.interpolate(&self.psi, x),
            Discretization::Radial { h, n } => {
                let r = norm(x);
                let s = r / h;
                if s > (n + 1) as f64 {
                    return None;
                }
                let j = s.floor() as usize;
                let f = s - j as f64;
                let at = |k: usize| -> f64 {
                    if k == 0 {
                        self.psi_origin
                    } else if k > n {
                        0.0
                    } else {
                        self.psi[k - 1]
                    }
                };
                Some((1.0 - f) * at(j) + f * at(j + 1))
            }
        }
    }

    /// Far-field branch `C(xhat) |x|^{(1-d)/2} e^{-sqrt(2λ₀)|x|}`.
    pub fn psi_far(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::invalid("x", "far-field branch is undefined at the origin"));
        }
        let xhat: Vec<f64> = x.iter().map(|c| c / r).collect();
        let d = self.dim as f64;
        Ok(self.cfar(&xhat)? * r.powf(0.5 * (1.0 - d)) * (-self.kappa() * r).exp())
    }

    /// Radius inside which the grid branch of `psi_extended` is used.
    pub fn handover_radius(&self) -> f64 {
        0.8 * self.grid.radius()
    }

    /// `psi` on all of space: grid interpolation inside the handover radius,
    /// far-field asymptotics outside.
    pub fn psi_extended(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r <= self.handover_radius() {
            if let Some(p) = self.psi_grid(x) {
                return p;
            }
        }
        self.psi_far(x).unwrap_or(0.0)
    }

    /// `ln psi_extended(x)`, with the far branch evaluated in log form so that it
    /// does not underflow at large `|x|`.
    pub fn ln_psi_extended(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r <= self.handover_radius() {
            if let Some(p) = self.psi_grid(x) {
                return p.ln();
            }
        }
        let xhat: Vec<f64> = x.iter().map(|c| c / r).collect();
        match self.cfar(&xhat) {
            Ok(c) => c.ln() + 0.5 * (1.0 - self.dim as f64) * r.ln() - self.kappa() * r,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn tail_ratio(&self) -> f64 {
        let max = self.psi.iter().cloned().fold(0.0, f64::max);
        let edge = match self.grid {
            Discretization::Line(_) => self.psi[0].abs().max(self.psi[self.psi.len() - 1].abs()),
            Discretization::Radial { .. } => self.psi[self.psi.len() - 1].abs(),
            Discretization::Plane(g) => {
                let n = g.n();
                (0..n)
                    .flat_map(|i| [self.psi[i], self.psi[(n - 1) * n + i], self.psi[i * n], self.psi[i * n + n - 1]])
                    .fold(0.0, |a: f64, b| a.max(b.abs()))
            }
        };
        edge / max
    }

    fn handover_directions(&self) -> Vec<Vec<f64>> {
        match self.dim {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..8)
                .map(|k| {
                    let a = k as f64 * PI / 4.0;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            _ => vec![vec![0.0, 0.0, 1.0]],
        }
    }

    fn check_handover(&self, tol: f64) -> Result<()> {
        let r = self.handover_radius();
        let mut worst: f64 = 0.0;
        for dir in self.handover_directions() {
            let x: Vec<f64> = dir.iter().map(|c| c * r).collect();
            let grid = self.psi_grid(&x).unwrap_or(0.0);
            let far = self.psi_far(&x)?;
            worst = worst.max((grid / far - 1.0).abs());
        }
        if worst > tol {
            return Err(Error::HandoverMismatch { mismatch: worst });
        }
        Ok(())
    }

    /// `∫ psi^2` under the grid quadrature.
    pub fn norm_squared(&self) -> f64 {
        match self.grid {
            Discretization::Line(g) => self.psi.iter().map(|p| p * p).sum::<f64>() * g.h,
            Discretization::Plane(g) => self.psi.iter().map(|p| p * p).sum::<f64>() * g.h() * g.h(),
            Discretization::Radial { h, .. } => {
                self.psi
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let r = (j + 1) as f64 * h;
                        4.0 * PI * r * r * p * p
                    })
                    .sum::<f64>()
                    * h
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well() -> Potential {
        Potential::square_well(1, 2.0, 1.0).unwrap()
    }

    #[test]
    fn well_ground_state_is_normalized_positive_and_decaying() {
        let sd = ground_state(&well(), &SpectralOptions::default()).unwrap();
        assert!(sd.lambda0() > 0.0);
        assert!((sd.norm_squared() - 1.0).abs() < 1e-8);
        assert!(sd.psi_values().iter().all(|p| *p > 0.0));
        let Discretization::Line(g) = *sd.grid() else { panic!() };
        for j in g.m..g.len() - 1 {
            assert!(sd.psi_values()[j] > sd.psi_values()[j + 1]);
        }
        assert!(sd.residual() < 1e-6);
    }

    #[test]
    fn killing_bump_has_no_positive_eigenvalue() {
        let v = Potential::bump(1, -1.0, 1.0).unwrap();
        assert!(matches!(ground_state(&v, &SpectralOptions::default()), Err(Error::NoPositiveEigenvalue { .. })));
    }

    #[test]
    fn symmetric_well_far_field_constant_is_even() {
        let sd = ground_state(&well(), &SpectralOptions::default()).unwrap();
        let cp = sd.cfar(&[1.0]).unwrap();
        let cm = sd.cfar(&[-1.0]).unwrap();
        assert!((cp - cm).abs() < 1e-12 * cp);
    }

    #[test]
    fn far_branch_is_used_beyond_handover() {
        let sd = ground_state(&well(), &SpectralOptions::default()).unwrap();
        let x = 2.0 * sd.grid().radius();
        let expect = sd.cfar(&[1.0]).unwrap() * (-sd.kappa() * x).exp();
        assert!((sd.psi_extended(&[x]) / expect - 1.0).abs() < 1e-14);
        let Discretization::Line(g) = *sd.grid() else { panic!() };
        let j = g.m + 17;
        assert_eq!(sd.psi_extended(&[g.x(j)]), sd.psi_values()[j]);
    }
}
