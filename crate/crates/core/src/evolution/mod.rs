//! Deterministic oracle for `p(t, x, y)`: Strang-split Crank-Nicolson time stepping
//! from a mollified delta, plus the free kernel and diagnostics.

pub(crate) mod short_time;
mod stepper;

use crate::error::{Error, Result};
use crate::grid::{Discretization, Grid1D, Grid2D};
use crate::potentials::{norm, Potential, SourcePoint};
use crate::quadrature::gauss_legendre_on;
use crate::spectral;
use serde::{Deserialize, Serialize};
use short_time::{window_nodes, BridgeRule};
use std::f64::consts::PI;
use stepper::{Stepper, Workspace};

/// `(2 π t)^{-d/2} exp(-|x|^2 / (2t))`.
pub fn free_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("time must be positive, got {t}")));
    }
    Ok(free_kernel_unchecked(t, x))
}

#[inline]
pub(crate) fn free_kernel_unchecked(t: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|c| c * c).sum();
    (2.0 * PI * t).powf(-0.5 * x.len() as f64) * (-r2 / (2.0 * t)).exp()
}

/// Stateless evaluator of the free kernel in dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeKernel {
    pub dim: usize,
}

impl FreeKernel {
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        free_kernel(t, x)
    }
}

/// Time-stepping settings. `None` fields take defaults derived from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    /// Grid spacing (default 0.01 in d = 1, 0.05 in d = 2).
    pub h: Option<f64>,
    /// Grid radius (default `|y| + 3 sqrt(2 t_max ln(1/tol)) + R`).
    pub radius: Option<f64>,
    /// Largest time step (default `1e-2 min(1, 1/sup|v|)`).
    pub dt_max: Option<f64>,
    /// First step after `t0` (default `t0 / 10`); steps then grow geometrically.
    pub dt_initial: Option<f64>,
    pub growth: f64,
    /// Mollification time: the run starts from the short-time kernel at `t0`.
    pub t0: f64,
    /// Relative boundary tolerance for the grid-size guard.
    pub tol: f64,
    /// Times at which full snapshots are stored (the final time always is).
    pub snapshot_times: Vec<f64>,
    /// Additional linear snapshot ladder with this spacing.
    pub snapshot_interval: Option<f64>,
    /// Past this time the step cap grows linearly in `t`, up to `coarsen_limit * dt_max`.
    pub coarsen_after: Option<f64>,
    pub coarsen_limit: f64,
    /// Multiply the initial Gaussian by the short-time bridge factor of `v`.
    pub mollifier_correction: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            h: None,
            radius: None,
            dt_max: None,
            dt_initial: None,
            growth: 1.05,
            t0: 1e-3,
            tol: 1e-10,
            snapshot_times: Vec::new(),
            snapshot_interval: None,
            coarsen_after: None,
            coarsen_limit: 20.0,
            mollifier_correction: true,
        }
    }
}

impl EvolveOptions {
    pub fn default_dt_max(v: &Potential) -> f64 {
        1e-2 * (1.0f64).min(1.0 / v.sup_abs().max(1e-300))
    }

    pub fn default_radius(v: &Potential, y: &SourcePoint, t_max: f64, tol: f64) -> f64 {
        let r = if v.has_compact_support() { v.support_radius() } else { 0.0 };
        norm(y.as_slice()) + 3.0 * (2.0 * t_max * (1.0 / tol).ln()).sqrt() + r
    }
}

/// What a field represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldKind {
    /// The kernel `p(t, ., y)`.
    Kernel,
    /// `beta = p - e^{λ t} psi psi(y)`, evolved with the ground-state component removed.
    /// `lambda` is the discrete eigenvalue on the field grid and `weight` approximates
    /// `psi(y)`, the coefficient of the removed component at `t = 0`.
    Remainder { lambda: f64, weight: f64 },
}

/// Field values on the support of `v` at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportStep {
    pub t: f64,
    /// Stored values are multiplied by `exp(log_scale)`.
    pub log_scale: f64,
    pub values: Vec<f64>,
}

/// Per-step record of the field on the support, used by time integrals over `supp(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRecord {
    /// Node positions.
    pub nodes: Vec<Vec<f64>>,
    /// Cell-averaged potential at the nodes.
    pub v: Vec<f64>,
    /// Volume of one grid cell.
    pub cell_volume: f64,
    pub steps: Vec<SupportStep>,
}

/// Sampled `p(t_i, x_j, y)` (or its remainder) for a fixed source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    y: SourcePoint,
    grid: Discretization,
    t0: f64,
    kind: FieldKind,
    times: Vec<f64>,
    log_scales: Vec<f64>,
    values: Vec<Vec<f64>>,
    support: Option<SupportRecord>,
}

/// Builds the mollified initial datum at `t0`.
fn initial_datum(v: &Potential, y: &[f64], nodes: &dyn Fn(usize) -> Vec<f64>, len: usize, t0: f64, correct: bool) -> Vec<f64> {
    let rule = BridgeRule::new(y.len());
    let reach = 40.0 * t0.sqrt();
    (0..len)
        .map(|k| {
            let x = nodes(k);
            let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let p0 = free_kernel_unchecked(t0, &dx);
            if !correct || p0 == 0.0 || norm(&dx) > reach {
                return p0;
            }
            p0 * rule.log_multiplier(v, y, &x, t0).exp()
        })
        .collect()
}

fn check_times(t_max: f64, opts: &EvolveOptions) -> Result<()> {
    if !(opts.t0 > 0.0) {
        return Err(Error::invalid("t0", "mollification time must be positive"));
    }
    if !(t_max > opts.t0) {
        return Err(Error::invalid("t_max", format!("t_max = {t_max} must exceed t0 = {}", opts.t0)));
    }
    if !(opts.growth >= 1.0) {
        return Err(Error::invalid("growth", "step growth factor must be at least 1"));
    }
    Ok(())
}

struct Run {
    stepper: Stepper,
    grid: Discretization,
    nodes: Vec<Vec<f64>>,
}

fn setup(v: &Potential, y: &SourcePoint, t_max: f64, opts: &EvolveOptions) -> Result<Run> {
    if y.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: y.dim() });
    }
    let radius = opts.radius.unwrap_or_else(|| EvolveOptions::default_radius(v, y, t_max, opts.tol));
    match v.dim() {
        1 => {
            let g = Grid1D::new(radius, opts.h.unwrap_or(0.01))?;
            let vc = g.cell_averages(v);
            let nodes = g.nodes().into_iter().map(|x| vec![x]).collect();
            Ok(Run { stepper: Stepper::line(g, vc), grid: Discretization::Line(g), nodes })
        }
        2 => {
            let g = Grid2D::new(radius, opts.h.unwrap_or(0.05))?;
            let vc = g.cell_averages(v);
            let nodes = (0..g.len()).map(|k| g.point(k).to_vec()).collect();
            Ok(Run { stepper: Stepper::plane(g, vc), grid: Discretization::Plane(g), nodes })
        }
        d => Err(Error::Unsupported(format!("deterministic evolution in dimension {d}"))),
    }
}

/// Removes the component along the unit vector `psi` (in the grid inner product).
fn project_out(u: &mut [f64], psi: &[f64], cell: f64) -> f64 {
    let c: f64 = u.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() * cell;
    u.iter_mut().zip(psi).for_each(|(a, b)| *a -= c * b);
    c
}

fn march(
    run: Run,
    v: &Potential,
    y: &SourcePoint,
    t_max: f64,
    opts: &EvolveOptions,
    mut u: Vec<f64>,
    kind: FieldKind,
    deflate: Option<&[f64]>,
) -> Result<KernelField> {
    let Run { stepper, grid, nodes } = run;
    let cell = stepper.cell_volume();
    let dt_max = opts.dt_max.unwrap_or_else(|| EvolveOptions::default_dt_max(v));
    if !(dt_max > 0.0) {
        return Err(Error::invalid("dt_max", "time step must be positive"));
    }
    let mut targets: Vec<f64> = opts.snapshot_times.iter().copied().filter(|&t| t > opts.t0 && t < t_max).collect();
    if let Some(dt_snap) = opts.snapshot_interval {
        if !(dt_snap > 0.0) {
            return Err(Error::invalid("snapshot_interval", "must be positive"));
        }
        let mut k = 1;
        while (k as f64) * dt_snap < t_max {
            let t = k as f64 * dt_snap;
            if t > opts.t0 {
                targets.push(t);
            }
            k += 1;
        }
    }
    targets.push(t_max);
    targets.sort_by(f64::total_cmp);
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let support_idx: Vec<usize> = if v.has_compact_support() {
        (0..stepper.potential().len()).filter(|&k| stepper.potential()[k] != 0.0).collect()
    } else {
        Vec::new()
    };
    let mut support = v.has_compact_support().then(|| SupportRecord {
        nodes: support_idx.iter().map(|&k| nodes[k].clone()).collect(),
        v: support_idx.iter().map(|&k| stepper.potential()[k]).collect(),
        cell_volume: cell,
        steps: Vec::new(),
    });

    let mut t = opts.t0;
    let mut log_scale = 0.0;
    let mut field = KernelField {
        y: y.clone(),
        grid,
        t0: opts.t0,
        kind,
        times: vec![t],
        log_scales: vec![0.0],
        values: vec![u.clone()],
        support: None,
    };
    let record = |s: &mut Option<SupportRecord>, u: &[f64], t: f64, ls: f64| {
        if let Some(rec) = s {
            rec.steps.push(SupportStep { t, log_scale: ls, values: support_idx.iter().map(|&k| u[k]).collect() });
        }
    };
    record(&mut support, &u, t, log_scale);

    let mut ws = Workspace::new();
    let mut dt = opts.dt_initial.unwrap_or(opts.t0 / 10.0).min(dt_max);
    let mut first = true;
    for &target in &targets {
        while t < target {
            let cap = match opts.coarsen_after {
                Some(tc) if t > tc => (dt_max * t / tc).min(opts.coarsen_limit * dt_max),
                _ => dt_max,
            };
            if !first {
                dt = (dt * opts.growth).min(cap);
            }
            first = false;
            let remaining = target - t;
            let this_dt = if remaining <= dt * 1.05 { remaining } else { dt };
            stepper.step(&mut u, this_dt, &mut ws);
            if let Some(psi) = deflate {
                project_out(&mut u, psi, cell);
            }
            t = if this_dt == remaining { target } else { t + this_dt };
            let max = u.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
            if !max.is_finite() {
                return Err(Error::NumericalFailure(format!("non-finite field at t = {t}")));
            }
            let edge = stepper.boundary_max(&u);
            if edge > opts.tol * max {
                return Err(Error::GridTooSmall { time: t, boundary: edge / max, limit: opts.tol });
            }
            if max > 1e100 || (max < 1e-100 && max > 0.0) {
                u.iter_mut().for_each(|a| *a /= max);
                log_scale += max.ln();
            }
            record(&mut support, &u, t, log_scale);
        }
        field.times.push(t);
        field.log_scales.push(log_scale);
        field.values.push(u.clone());
    }
    field.support = support;
    Ok(field)
}

/// Evolves `p(t, ., y)` from `t0` to `t_max`.
///
/// The run starts from `p0(t0, x - y)` (times the short-time bridge factor when
/// `mollifier_correction` is set) and advances by `e^{dt v/2}`, a Crank-Nicolson
/// diffusion step and `e^{dt v/2}`. Steps land exactly on snapshot times.
pub fn evolve(v: &Potential, y: &SourcePoint, t_max: f64, opts: &EvolveOptions) -> Result<KernelField> {
    check_times(t_max, opts)?;
    let run = setup(v, y, t_max, opts)?;
    let len = run.nodes.len();
    let nodes = &run.nodes;
    let u = initial_datum(v, y.as_slice(), &|k| nodes[k].clone(), len, opts.t0, opts.mollifier_correction);
    march(run, v, y, t_max, opts, u, FieldKind::Kernel, None)
}

/// Evolves the remainder `beta = p - e^{λ₀ t} psi psi(y)` directly.
///
/// The ground state of the same discrete operator is projected out of the initial
/// datum and after every step, which avoids subtracting two exponentially large
/// quantities at late times.
pub fn evolve_remainder(v: &Potential, y: &SourcePoint, t_max: f64, opts: &EvolveOptions) -> Result<KernelField> {
    check_times(t_max, opts)?;
    v.require_compact()?;
    let run = setup(v, y, t_max, opts)?;
    let sd = match run.grid {
        Discretization::Line(g) => spectral::line_ground_state(v, g, 1e-12, 100_000)?,
        Discretization::Plane(g) => spectral::plane_ground_state_on(v, g, 1e-11, 100_000)?,
        Discretization::Radial { .. } => unreachable!("evolution grids are Cartesian"),
    };
    let cell = run.stepper.cell_volume();
    let psi: Vec<f64> = sd.psi_values().to_vec();
    let len = run.nodes.len();
    let nodes = &run.nodes;
    let mut u = initial_datum(v, y.as_slice(), &|k| nodes[k].clone(), len, opts.t0, opts.mollifier_correction);
    let c0 = project_out(&mut u, &psi, cell);
    let lambda = sd.lambda0();
    let kind = FieldKind::Remainder { lambda, weight: c0 * (-lambda * opts.t0).exp() };
    march(run, v, y, t_max, opts, u, kind, Some(&psi))
}

impl KernelField {
    pub fn y(&self) -> &SourcePoint {
        &self.y
    }

    pub fn grid(&self) -> &Discretization {
        &self.grid
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Snapshot times, starting at `t0`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("field has snapshots")
    }

    /// Snapshot `i` with the scale factor applied.
    pub fn snapshot(&self, i: usize) -> Vec<f64> {
        let s = self.log_scales[i].exp();
        self.values[i].iter().map(|a| a * s).collect()
    }

    pub fn support(&self) -> Option<&SupportRecord> {
        self.support.as_ref()
    }

    /// Grid node positions, in storage order.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        match self.grid {
            Discretization::Line(g) => g.nodes().into_iter().map(|x| vec![x]).collect(),
            Discretization::Plane(g) => (0..g.len()).map(|k| g.point(k).to_vec()).collect(),
            Discretization::Radial { .. } => unreachable!("evolution grids are Cartesian"),
        }
    }

    fn spatial(&self, i: usize, x: &[f64]) -> Option<f64> {
        let raw = match self.grid {
            Discretization::Line(g) => g.interpolate(&self.values[i], x[0]),
            Discretization::Plane(g) => g.interpolate(&self.values[i], x),
            Discretization::Radial { .. } => None,
        }?;
        Some(raw * self.log_scales[i].exp())
    }

    /// Field value at `(t, x)`; see [`evaluate`].
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<f64> {
        evaluate(self, t, x)
    }
}

/// Interpolated field value: linear (d = 1) or bilinear (d = 2) in space, and linear
/// in `log p` between bracketing snapshots.
pub fn evaluate(field: &KernelField, t: f64, x: &[f64]) -> Result<f64> {
    let (lo, hi) = (field.times[0], field.t_max());
    let slack = 1e-12 * hi.max(1.0);
    if !(t >= lo - slack && t <= hi + slack) {
        return Err(Error::OutOfRange { what: "time", value: t, lo, hi });
    }
    if x.len() != field.y.dim() {
        return Err(Error::DimensionMismatch { expected: field.y.dim(), got: x.len() });
    }
    let r = field.grid.radius();
    let out = |c: f64| Error::OutOfRange { what: "position", value: c, lo: -r, hi: r };
    let i = field.times.partition_point(|&s| s <= t + slack).saturating_sub(1);
    let at_i = field.spatial(i, x).ok_or_else(|| out(norm(x)))?;
    if (field.times[i] - t).abs() <= slack || i + 1 >= field.times.len() {
        return Ok(at_i);
    }
    let at_j = field.spatial(i + 1, x).ok_or_else(|| out(norm(x)))?;
    let w = (t - field.times[i]) / (field.times[i + 1] - field.times[i]);
    if at_i > 0.0 && at_j > 0.0 {
        Ok((at_i.ln() * (1.0 - w) + at_j.ln() * w).exp())
    } else {
        Ok(at_i * (1.0 - w) + at_j * w)
    }
}

/// `∫_cell p0(tau, x - z) dz` for the grid cell centred at `z`.
fn cell_kernel(tau: f64, x: &[f64], z: &[f64], h: f64) -> f64 {
    let mut out = 1.0;
    for k in 0..x.len() {
        let d = x[k] - z[k];
        out *= if tau <= 0.0 {
            if d.abs() < 0.5 * h {
                1.0
            } else if d.abs() == 0.5 * h {
                0.5
            } else {
                0.0
            }
        } else {
            let s = (2.0 * tau).sqrt();
            0.5 * (libm::erf((d + 0.5 * h) / s) - libm::erf((d - 0.5 * h) / s))
        };
    }
    out
}

/// `p(t, x, y) - p0(t, x - y) - ∫_0^t ∫ p0(t - s, x - z) v(z) p(s, z, y) dz ds`.
///
/// The time integral uses the trapezoid rule over the recorded steps on `[t0, t]` and
/// Gauss-Legendre with the short-time kernel on `[0, t0]`. The spatial integral treats
/// `v p` as constant on each grid cell and integrates the Gaussian over the cell exactly.
/// `t` must be a snapshot time of a kernel field.
pub fn duhamel_residual(field: &KernelField, v: &Potential, t: f64, x: &[f64]) -> Result<f64> {
    if field.kind != FieldKind::Kernel {
        return Err(Error::Unsupported("Duhamel residual of a remainder field".into()));
    }
    let rec = field.support.as_ref().ok_or_else(|| Error::Unsupported("field has no support record".into()))?;
    let k_end = rec
        .steps
        .iter()
        .position(|s| (s.t - t).abs() <= 1e-12 * t.max(1.0))
        .ok_or(Error::OutOfRange { what: "time (must be a stored step)", value: t, lo: field.times[0], hi: field.t_max() })?;
    let h = rec.cell_volume.powf(1.0 / x.len() as f64);
    let y = field.y.as_slice();
    let p = evaluate(field, t, x)?;
    let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let p0 = free_kernel(t, &dx)?;

    let f = |k: usize| -> f64 {
        let st = &rec.steps[k];
        let scale = st.log_scale.exp();
        rec.nodes
            .iter()
            .zip(&rec.v)
            .zip(&st.values)
            .map(|((z, vz), pz)| cell_kernel(t - st.t, x, z, h) * vz * pz * scale)
            .sum::<f64>()
    };
    let mut integral = 0.0;
    let mut prev = f(0);
    for k in 1..=k_end {
        let cur = f(k);
        integral += 0.5 * (rec.steps[k].t - rec.steps[k - 1].t) * (prev + cur);
        prev = cur;
    }
    // Initial layer [0, t0] with the short-time kernel.
    let rule = BridgeRule::new(x.len());
    let (ss, ws) = gauss_legendre_on(8, 0.0, field.t0);
    for (s, w) in ss.iter().zip(&ws) {
        let nodes = window_nodes(v, y, 10.0 * s.sqrt(), 16);
        let inner: f64 = nodes
            .iter()
            .map(|(z, wv)| {
                let a: Vec<f64> = x.iter().zip(z).map(|(p, q)| p - q).collect();
                let b: Vec<f64> = z.iter().zip(y).map(|(p, q)| p - q).collect();
                wv * free_kernel_unchecked(t - s, &a)
                    * free_kernel_unchecked(*s, &b)
                    * rule.log_multiplier(v, y, z, *s).exp()
            })
            .sum();
        integral += w * inner;
    }
    Ok(p - p0 - integral)
}
