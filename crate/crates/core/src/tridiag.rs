//! Tridiagonal solves and Sturm counts for the finite-difference operators.

/// Solves the tridiagonal system `lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1] = rhs[i]`
/// in place (Thomas algorithm). `lower[0]` and `upper[n-1]` are ignored.
///
/// Stable without pivoting for the diagonally dominant matrices used here.
pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Solves `(diag[i]) u[i] + off (u[i-1] + u[i+1]) = rhs[i]` with a constant off-diagonal.
pub fn solve_const_off(off: f64, diag: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = off / beta;
        beta = diag[i] - off * c[i - 1];
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Number of eigenvalues strictly greater than `x` of the symmetric tridiagonal
/// matrix with diagonal `diag` and constant off-diagonal `off`.
pub fn count_above(diag: &[f64], off: f64, x: f64) -> usize {
    // Sturm sequence of (x I - A): each negative pivot is an eigenvalue above x.
    let off2 = off * off;
    let mut count = 0;
    let mut q = x - diag[0];
    for i in 0..diag.len() {
        if i > 0 {
            let prev = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
            q = (x - diag[i]) - off2 / prev;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th largest eigenvalue (k = 0 is the largest) of the symmetric tridiagonal
/// matrix by bisection on the Sturm count, bracketed in `[lo, hi]`.
pub fn kth_largest(diag: &[f64], off: f64, k: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_above(diag, off, mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Gershgorin interval for the symmetric tridiagonal matrix.
pub fn gershgorin(diag: &[f64], off: f64) -> (f64, f64) {
    let r = 2.0 * off.abs();
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min) - r;
    let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + r;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn thomas_matches_direct_multiplication() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + i as f64).collect();
        let u: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = diag[i] * u[i];
                if i > 0 {
                    s += lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    s += upper[i] * u[i + 1];
                }
                s
            })
            .collect();
        let mut scratch = Vec::new();
        solve(&lower, &diag, &upper, &mut rhs, &mut scratch);
        for i in 0..n {
            assert!((rhs[i] - u[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn sturm_count_recovers_discrete_laplacian_spectrum() {
        // -u'' on n interior points has eigenvalues 2 - 2 cos(k pi / (n+1)).
        let n = 50;
        let diag = vec![2.0; n];
        let exact: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos())
            .collect();
        let (lo, hi) = gershgorin(&diag, -1.0);
        for k in 0..5 {
            let ev = kth_largest(&diag, -1.0, k, lo, hi, 1e-13);
            assert!((ev - exact[n - 1 - k]).abs() < 1e-11);
        }
        assert_eq!(count_above(&diag, -1.0, 2.0), n / 2);
    }
}
