//! Short-time closure of the kernel: `p(s, z, y) ~ p0(s, z - y) m(s, z)` with the
//! bridge multiplier `m = exp(s ∫_0^1 E v(y + u (z - y) + sqrt(s u (1 - u)) xi) du)`.
//!
//! This is the first cumulant of the Feynman-Kac weight along the Brownian bridge
//! from `y` to `z`, so the relative error is `O(s^2 sup|v|^2)`.

use crate::potentials::Potential;
use crate::quadrature::{gauss_hermite_normal, gauss_legendre, gauss_legendre_on};

/// Tensor rules for the bridge average.
#[derive(Debug, Clone)]
pub(crate) struct BridgeRule {
    u: Vec<f64>,
    wu: Vec<f64>,
    xi: Vec<Vec<f64>>,
    wxi: Vec<f64>,
}

impl BridgeRule {
    pub fn new(dim: usize) -> Self {
        let (nu, nx) = match dim {
            1 => (8, 8),
            2 => (6, 5),
            _ => (4, 4),
        };
        let (u, wu) = gauss_legendre_on(nu, 0.0, 1.0);
        let (x1, w1) = gauss_hermite_normal(nx);
        let mut xi = vec![vec![]];
        let mut wxi = vec![1.0];
        for _ in 0..dim {
            let mut nxi = Vec::new();
            let mut nw = Vec::new();
            for (p, w) in xi.iter().zip(&wxi) {
                for (a, b) in x1.iter().zip(&w1) {
                    let mut q = p.clone();
                    q.push(*a);
                    nxi.push(q);
                    nw.push(w * b);
                }
            }
            xi = nxi;
            wxi = nw;
        }
        BridgeRule { u, wu, xi, wxi }
    }

    /// `log m(s, z)` for the bridge from `y` at time 0 to `z` at time `s`.
    pub fn log_multiplier(&self, v: &Potential, y: &[f64], z: &[f64], s: f64) -> f64 {
        let d = y.len();
        let mut p = vec![0.0; d];
        let mut acc = 0.0;
        for (u, wu) in self.u.iter().zip(&self.wu) {
            let sd = (s * u * (1.0 - u)).sqrt();
            let mut e = 0.0;
            for (xi, wx) in self.xi.iter().zip(&self.wxi) {
                for k in 0..d {
                    p[k] = y[k] + u * (z[k] - y[k]) + sd * xi[k];
                }
                e += wx * v.evaluate(&p);
            }
            acc += wu * e;
        }
        s * acc
    }
}

/// Quadrature nodes `(z, w v(z))` for `∫ f(z) v(z) dz` over the box of half-width
/// `half` around `c`, restricted to the support of `v`.
pub(crate) fn window_nodes(v: &Potential, c: &[f64], half: f64, per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    let r = v.support_radius();
    let d = c.len();
    // One composite rule per axis.
    let mut axes: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(d);
    for &ck in c.iter().take(d) {
        let lo = (ck - half).max(-r);
        let hi = (ck + half).min(r);
        if hi <= lo {
            return Vec::new();
        }
        let mut cuts = vec![lo];
        if d == 1 {
            for b in v.radial_breaks() {
                for e in [-b, b] {
                    if e > lo && e < hi {
                        cuts.push(e);
                    }
                }
            }
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        // Panels no wider than a quarter of the half-width keep the Gaussian factor resolved.
        let (gx, gw) = gauss_legendre(per_axis);
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for w in cuts.windows(2) {
            let panels = (((w[1] - w[0]) / (0.25 * half)).ceil() as usize).max(1);
            let ph = (w[1] - w[0]) / panels as f64;
            for k in 0..panels {
                let a = w[0] + k as f64 * ph;
                for (t, wt) in gx.iter().zip(&gw) {
                    xs.push(a + 0.5 * ph * (t + 1.0));
                    ws.push(0.5 * ph * wt);
                }
            }
        }
        axes.push((xs, ws));
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let z: Vec<f64> = (0..d).map(|k| axes[k].0[idx[k]]).collect();
        let vz = v.evaluate(&z);
        if vz != 0.0 {
            let w: f64 = (0..d).map(|k| axes[k].1[idx[k]]).product();
            out.push((z, w * vz));
        }
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] < axes[k].0.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
