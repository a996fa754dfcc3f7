//! Uniform finite-difference grids with homogeneous Dirichlet boundaries.

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::quadrature::gauss_legendre;
use serde::{Deserialize, Serialize};

/// Symmetric 1D grid: interior nodes `x_j = (j - m) h`, `j = 0..=2m`, with
/// zero boundary values at `±(m + 1) h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub h: f64,
    pub m: usize,
}

impl Grid1D {
    /// Smallest symmetric grid with spacing `h` whose boundary lies at or beyond `radius`.
    pub fn new(radius: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("h", format!("grid spacing must be positive, got {h}")));
        }
        if !(radius > h && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("radius {radius} must exceed spacing {h}")));
        }
        let m = ((radius / h).ceil() as usize).saturating_sub(1).max(1);
        Ok(Grid1D { h, m })
    }

    pub fn len(&self) -> usize {
        2 * self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of the Dirichlet boundary.
    pub fn radius(&self) -> f64 {
        (self.m + 1) as f64 * self.h
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.m as f64) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }

    /// Index range of nodes with `|x - c| <= w`, clipped to the grid.
    pub fn window(&self, c: f64, w: f64) -> std::ops::Range<usize> {
        let lo = ((c - w) / self.h + self.m as f64).ceil().max(0.0) as usize;
        let hi = (((c + w) / self.h + self.m as f64).floor() as i64 + 1).clamp(0, self.len() as i64) as usize;
        lo.min(hi)..hi
    }

    /// Linear interpolation of nodal values `u` (zero at the boundary) at `x`.
    pub fn interpolate(&self, u: &[f64], x: f64) -> Option<f64> {
        let s = x / self.h + self.m as f64;
        if !(s >= -1.0 && s <= self.len() as f64) {
            return None;
        }
        let j = s.floor();
        let f = s - j;
        let j = j as i64;
        let at = |k: i64| -> f64 {
            if k < 0 || k >= self.len() as i64 {
                0.0
            } else {
                u[k as usize]
            }
        };
        Some((1.0 - f) * at(j) + f * at(j + 1))
    }

    /// Cell averages `(1/h) int_{x_j - h/2}^{x_j + h/2} v`, split at the jumps of `v`.
    pub fn cell_averages(&self, v: &Potential) -> Vec<f64> {
        let (gx, gw) = gauss_legendre(8);
        let mut breaks: Vec<f64> = Vec::new();
        for b in v.radial_breaks() {
            breaks.push(-b);
            breaks.push(b);
        }
        let reach = v.support_radius() + self.h;
        (0..self.len())
            .map(|j| {
                let x = self.x(j);
                if v.has_compact_support() && x.abs() > reach {
                    return 0.0;
                }
                let (a, b) = (x - 0.5 * self.h, x + 0.5 * self.h);
                let mut cuts = vec![a];
                cuts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
                cuts.push(b);
                let mut s = 0.0;
                for w in cuts.windows(2) {
                    let (c, hw) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                    for (t, wt) in gx.iter().zip(&gw) {
                        s += wt * hw * v.evaluate(&[c + hw * t]);
                    }
                }
                s / self.h
            })
            .collect()
    }
}

/// Tensor-product 2D grid built from one 1D grid per axis, row-major `(i, j) -> i * n + j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub axis: Grid1D,
}

impl Grid2D {
    pub fn new(radius: f64, h: f64) -> Result<Self> {
        Ok(Grid2D { axis: Grid1D::new(radius, h)? })
    }

    pub fn n(&self) -> usize {
        self.axis.len()
    }

    pub fn len(&self) -> usize {
        self.n() * self.n()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.axis.h
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        [self.axis.x(k / self.n()), self.axis.x(k % self.n())]
    }

    /// Bilinear interpolation at `(x0, x1)`.
    pub fn interpolate(&self, u: &[f64], p: &[f64]) -> Option<f64> {
        let n = self.n() as i64;
        let m = self.axis.m as f64;
        let s0 = p[0] / self.h() + m;
        let s1 = p[1] / self.h() + m;
        let lim = self.n() as f64;
        if !(s0 >= -1.0 && s0 <= lim && s1 >= -1.0 && s1 <= lim) {
            return None;
        }
        let (i, j) = (s0.floor(), s1.floor());
        let (fi, fj) = (s0 - i, s1 - j);
        let (i, j) = (i as i64, j as i64);
        let at = |a: i64, b: i64| -> f64 {
            if a < 0 || b < 0 || a >= n || b >= n {
                0.0
            } else {
                u[(a * n + b) as usize]
            }
        };
        Some(
            (1.0 - fi) * ((1.0 - fj) * at(i, j) + fj * at(i, j + 1))
                + fi * ((1.0 - fj) * at(i + 1, j) + fj * at(i + 1, j + 1)),
        )
    }

    /// Cell averages of `v` by a 6x6 Gauss-Legendre rule per cell.
    pub fn cell_averages(&self, v: &Potential) -> Vec<f64> {
        let (gx, gw) = gauss_legendre(6);
        let h = self.h();
        let reach = v.support_radius() + h * std::f64::consts::SQRT_2;
        (0..self.len())
            .map(|k| {
                let [x0, x1] = self.point(k);
                if v.has_compact_support() && (x0 * x0 + x1 * x1).sqrt() > reach {
                    return 0.0;
                }
                let mut s = 0.0;
                for (ta, wa) in gx.iter().zip(&gw) {
                    for (tb, wb) in gx.iter().zip(&gw) {
                        s += wa * wb * v.evaluate(&[x0 + 0.5 * h * ta, x1 + 0.5 * h * tb]);
                    }
                }
                s / 4.0
            })
            .collect()
    }
}

/// Spatial discretization used by the spectral and evolution solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Discretization {
    /// Full line.
    Line(Grid1D),
    /// Square tensor grid in the plane.
    Plane(Grid2D),
    /// Radial half-line `r_j = j h`, `j = 1..=n`, for radially symmetric problems in d = 3.
    Radial { h: f64, n: usize },
}

impl Discretization {
    pub fn spacing(&self) -> f64 {
        match self {
            Discretization::Line(g) => g.h,
            Discretization::Plane(g) => g.h(),
            Discretization::Radial { h, .. } => *h,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Discretization::Line(g) => g.radius(),
            Discretization::Plane(g) => g.axis.radius(),
            Discretization::Radial { h, n } => (*n + 1) as f64 * h,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Discretization::Line(g) => g.len(),
            Discretization::Plane(g) => g.len(),
            Discretization::Radial { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
