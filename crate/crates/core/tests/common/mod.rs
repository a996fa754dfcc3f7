//! Independent reference solvers shared by the integration tests.
#![allow(dead_code)]

use heatcone_core::Potential;

/// Thomas algorithm for `-a u[i-1] + b u[i] - a u[i+1] = r[i]` with zero ends.
fn thomas(a: f64, b: f64, r: &mut [f64], c: &mut Vec<f64>) {
    let n = r.len();
    c.clear();
    c.resize(n, 0.0);
    let mut denom = b;
    c[0] = -a / denom;
    r[0] /= denom;
    for i in 1..n {
        denom = b + a * c[i - 1];
        c[i] = -a / denom;
        r[i] = (r[i] + a * r[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        r[i] -= c[i] * r[i + 1];
    }
}

/// Cell average of `v(shift + .)` over `[x - h/2, x + h/2]` by a 32-point midpoint rule.
fn cell_average(v: &Potential, x: f64, h: f64) -> f64 {
    const SUB: usize = 32;
    (0..SUB)
        .map(|k| v.evaluate(&[x - 0.5 * h + (k as f64 + 0.5) * h / SUB as f64]))
        .sum::<f64>()
        / SUB as f64
}

/// `a(θ, α, y) - 1` for d = 1 from the tilted equation `∂q = 1/2 q'' - θα q' + v q`,
/// `q(0) = δ_y`, as `∫_0^S ∫ v q dz ds`.
///
/// The equation is solved in the frame moving with the drift, where it becomes plain
/// diffusion with the moving potential `v(ξ + y + θ α s)`; the start at `s0` uses
/// `q(s0) = p0(s0, ξ) e^{s0 v(y)}`, and `[0, s0]` contributes `s0 v(y)`.
pub fn tilted_oracle_1d(v: &Potential, y: f64, theta: f64, alpha: f64, h: f64, dt: f64, s_max: f64) -> f64 {
    let r = v.support_radius();
    let s0 = 1e-4;
    // The support sits at ξ ∈ [-r - y - θαs, r - y - θαs]; cover it for all s plus margins.
    let reach = theta * s_max;
    let pad = 10.0 * s_max.sqrt().max(0.3);
    let (lo, hi) = if alpha > 0.0 { (-r - y.abs() - reach - pad, r + y.abs() + pad) } else { (-r - y.abs() - pad, r + y.abs() + reach + pad) };
    let n = ((hi - lo) / h).round() as usize + 1;
    let xi: Vec<f64> = (0..n).map(|j| lo + j as f64 * h).collect();
    let vy = v.evaluate(&[y]);
    let mut u: Vec<f64> = xi
        .iter()
        .map(|x| (-(x * x) / (2.0 * s0)).exp() / (2.0 * std::f64::consts::PI * s0).sqrt() * (s0 * vy).exp())
        .collect();
    let pot = |s: f64| -> Vec<(usize, f64)> {
        let c = y + theta * alpha * s;
        xi.iter()
            .enumerate()
            .filter(|(_, x)| (*x + c).abs() <= r + h)
            .map(|(j, x)| (j, cell_average(v, x + c, h)))
            .filter(|(_, w)| *w != 0.0)
            .collect()
    };
    let moment = |u: &[f64], vs: &[(usize, f64)]| -> f64 { vs.iter().map(|(j, w)| w * u[*j]).sum::<f64>() * h };
    let a = dt / (4.0 * h * h);
    let mut scratch = Vec::new();
    let mut rhs = vec![0.0; n];
    let mut s = s0;
    let mut vs = pot(s);
    let mut total = s0 * vy;
    let mut prev = moment(&u, &vs);
    while s < s_max - 1e-12 {
        let step = dt.min(s_max - s);
        let a_step = a * step / dt;
        for (j, w) in &vs {
            u[*j] *= (0.5 * step * w).exp();
        }
        for i in 0..n {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let rr = if i + 1 < n { u[i + 1] } else { 0.0 };
            rhs[i] = (1.0 - 2.0 * a_step) * u[i] + a_step * (l + rr);
        }
        thomas(a_step, 1.0 + 2.0 * a_step, &mut rhs, &mut scratch);
        u.copy_from_slice(&rhs);
        s += step;
        vs = pot(s);
        for (j, w) in &vs {
            u[*j] *= (0.5 * step * w).exp();
        }
        let cur = moment(&u, &vs);
        total += 0.5 * step * (prev + cur);
        prev = cur;
    }
    total
}
