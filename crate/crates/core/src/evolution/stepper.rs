//! Strang-split steppers: `e^{dt v/2} D(dt) e^{dt v/2}` with a Crank-Nicolson diffusion
//! step `D`, or TR-BDF2 for steps too long for Crank-Nicolson to damp grid-scale modes.

use crate::grid::{Grid1D, Grid2D};
use crate::tridiag;
use rayon::prelude::*;

/// One spatial discretization with its cell-averaged potential.
pub(crate) enum Stepper {
    Line { g: Grid1D, v: Vec<f64>, active: Vec<usize>, cn_limit: f64 },
    Plane { g: Grid2D, v: Vec<f64>, active: Vec<usize>, cn_limit: f64 },
}

/// Longest step kept on Crank-Nicolson. Its amplification of the highest grid mode is
/// about `1 - 2h^2/dt` against `e^{dt sup v}` from the potential, so growth needs
/// `dt > h sqrt(2 / sup v)`; half of that leaves a margin.
fn cn_limit(h: f64, v: &[f64]) -> f64 {
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    if vmax > 0.0 {
        0.5 * h * (2.0 / vmax).sqrt()
    } else {
        f64::INFINITY
    }
}

pub(crate) struct Workspace {
    half: Vec<f64>,
    half_dt: f64,
    diag: Vec<f64>,
    scratch: Vec<f64>,
    rhs: Vec<f64>,
    start: Vec<f64>,
    transposed: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace {
            half: Vec::new(),
            half_dt: f64::NAN,
            diag: Vec::new(),
            scratch: Vec::new(),
            rhs: Vec::new(),
            start: Vec::new(),
            transposed: Vec::new(),
        }
    }
}

/// `(I - a D2) u_new = (I + a D2) u_old` along one line, `a = dt / (4 h^2)`.
fn cn_line(u: &mut [f64], a: f64, diag: &mut Vec<f64>, rhs: &mut Vec<f64>, scratch: &mut Vec<f64>) {
    let n = u.len();
    rhs.clear();
    rhs.extend((0..n).map(|i| {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        (1.0 - 2.0 * a) * u[i] + a * (left + right)
    }));
    diag.clear();
    diag.resize(n, 1.0 + 2.0 * a);
    tridiag::solve_const_off(-a, diag, rhs, scratch);
    u.copy_from_slice(rhs);
}

/// TR-BDF2 step of `u' = (1/2) D2 u / h^2` along one line, `a = dt / (4 h^2)`:
/// Crank-Nicolson to `γ dt`, then BDF2 to `dt`, with `γ = 2 - sqrt(2)`.
fn trbdf2_line(u: &mut [f64], a: f64, diag: &mut Vec<f64>, rhs: &mut Vec<f64>, scratch: &mut Vec<f64>, start: &mut Vec<f64>) {
    let gamma = 2.0 - std::f64::consts::SQRT_2;
    start.clear();
    start.extend_from_slice(u);
    cn_line(u, gamma * a, diag, rhs, scratch);
    let w = (1.0 - gamma) / (2.0 - gamma);
    let c1 = 1.0 / (gamma * (2.0 - gamma));
    let c2 = (1.0 - gamma) * (1.0 - gamma) / (gamma * (2.0 - gamma));
    let b = 2.0 * w * a;
    let n = u.len();
    rhs.clear();
    rhs.extend((0..n).map(|i| c1 * u[i] - c2 * start[i]));
    diag.clear();
    diag.resize(n, 1.0 + 2.0 * b);
    tridiag::solve_const_off(-b, diag, rhs, scratch);
    u.copy_from_slice(rhs);
}

/// One diffusion step along a line with the scheme chosen by `damped`.
fn diffuse_line(u: &mut [f64], a: f64, damped: bool, bufs: &mut (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)) {
    let (d, r, s, st) = bufs;
    if damped {
        trbdf2_line(u, a, d, r, s, st);
    } else {
        cn_line(u, a, d, r, s);
    }
}

fn transpose(src: &[f64], dst: &mut [f64], n: usize) {
    dst.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, r) in row.iter_mut().enumerate() {
            *r = src[i * n + j];
        }
    });
}

impl Stepper {
    pub fn line(g: Grid1D, v: Vec<f64>) -> Self {
        let active = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
        let cn_limit = cn_limit(g.h, &v);
        Stepper::Line { g, v, active, cn_limit }
    }

    pub fn plane(g: Grid2D, v: Vec<f64>) -> Self {
        let active = (0..v.len()).filter(|&k| v[k] != 0.0).collect();
        let cn_limit = cn_limit(g.h(), &v);
        Stepper::Plane { g, v, active, cn_limit }
    }

    pub fn potential(&self) -> &[f64] {
        match self {
            Stepper::Line { v, .. } | Stepper::Plane { v, .. } => v,
        }
    }

    fn active(&self) -> &[usize] {
        match self {
            Stepper::Line { active, .. } | Stepper::Plane { active, .. } => active,
        }
    }

    /// Advances `u` by one Strang step of length `dt`.
    pub fn step(&self, u: &mut [f64], dt: f64, ws: &mut Workspace) {
        if ws.half_dt != dt {
            let v = self.potential();
            ws.half = self.active().iter().map(|&k| (0.5 * dt * v[k]).exp()).collect();
            ws.half_dt = dt;
        }
        self.apply_half(u, &ws.half);
        match self {
            Stepper::Line { g, cn_limit, .. } => {
                let a = dt / (4.0 * g.h * g.h);
                let mut bufs = (std::mem::take(&mut ws.diag), std::mem::take(&mut ws.rhs), std::mem::take(&mut ws.scratch), std::mem::take(&mut ws.start));
                diffuse_line(u, a, dt > *cn_limit, &mut bufs);
                (ws.diag, ws.rhs, ws.scratch, ws.start) = bufs;
            }
            Stepper::Plane { g, cn_limit, .. } => {
                let n = g.n();
                let a = dt / (4.0 * g.h() * g.h());
                let damped = dt > *cn_limit;
                // The two axis operators commute, so one sweep per axis is second order.
                let sweep = |data: &mut [f64]| {
                    data.par_chunks_mut(n).for_each_init(
                        || (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
                        |bufs, row| diffuse_line(row, a, damped, bufs),
                    );
                };
                sweep(u);
                ws.transposed.resize(n * n, 0.0);
                transpose(u, &mut ws.transposed, n);
                sweep(&mut ws.transposed);
                transpose(&ws.transposed, u, n);
            }
        }
        self.apply_half(u, &ws.half);
    }

    fn apply_half(&self, u: &mut [f64], half: &[f64]) {
        for (k, e) in self.active().iter().zip(half) {
            u[*k] *= e;
        }
    }

    /// Values on the outermost ring of nodes.
    pub fn boundary_max(&self, u: &[f64]) -> f64 {
        match self {
            Stepper::Line { .. } => u[0].abs().max(u[u.len() - 1].abs()),
            Stepper::Plane { g, .. } => {
                let n = g.n();
                (0..n)
                    .flat_map(|i| [u[i], u[(n - 1) * n + i], u[i * n], u[i * n + n - 1]])
                    .fold(0.0, |a: f64, b| a.max(b.abs()))
            }
        }
    }

    pub fn cell_volume(&self) -> f64 {
        match self {
            Stepper::Line { g, .. } => g.h,
            Stepper::Plane { g, .. } => g.h() * g.h(),
        }
    }
}
