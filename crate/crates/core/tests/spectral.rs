use heatcone_core::grid::Grid1D;
use heatcone_core::spectral::{farfield_constant, ground_state, line_ground_state, psi_extended, spectral_gap, spectrum};
use heatcone_core::{Discretization, Error, Potential, SpectralData, SpectralOptions};

fn well(v0: f64) -> Potential {
    Potential::square_well(1, v0, 1.0).unwrap()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Ground state of the well `v0` on `[-r, r]`: `k tan(k r) = sqrt(2λ)` with `k = sqrt(2(v0 - λ))`.
fn even_root(v0: f64, r: f64) -> f64 {
    let lo = (v0 - (std::f64::consts::FRAC_PI_2 / r).powi(2) / 2.0).max(0.0);
    bisect(lo + 1e-14, v0 - 1e-14, |l| {
        let k = (2.0 * (v0 - l)).sqrt();
        k * (k * r).sin() - (2.0 * l).sqrt() * (k * r).cos()
    })
}

/// First odd state: `k cot(k r) = -sqrt(2λ)` with `k r` in `(π/2, π)`, if it is bound.
fn odd_root(v0: f64, r: f64) -> Option<f64> {
    use std::f64::consts::PI;
    let hi = v0 - (PI / (2.0 * r)).powi(2) / 2.0;
    if hi <= 0.0 {
        return None;
    }
    let lo = (v0 - (PI / r).powi(2) / 2.0).max(0.0);
    let f = |l: f64| {
        let k = (2.0 * (v0 - l)).sqrt();
        k * (k * r).cos() + (2.0 * l).sqrt() * (k * r).sin()
    };
    (f(lo + 1e-14) * f(hi - 1e-14) < 0.0).then(|| bisect(lo + 1e-14, hi - 1e-14, f))
}

fn line_solve(v: &Potential, radius: f64, h: f64) -> SpectralData {
    line_ground_state(v, Grid1D::new(radius, h).unwrap(), 1e-13, 100_000).unwrap()
}

fn line_grid(sd: &SpectralData) -> Grid1D {
    match sd.grid() {
        Discretization::Line(g) => *g,
        other => panic!("expected a line grid, got {other:?}"),
    }
}

#[test]
fn well_eigenvalue_matches_matching_condition() {
    let v = well(2.0);
    let exact = even_root(2.0, 1.0);
    let coarse = line_solve(&v, 15.0, 0.02).lambda0();
    let fine = line_solve(&v, 15.0, 0.01).lambda0();
    let extrapolated = (4.0 * fine - coarse) / 3.0;
    assert!((extrapolated - exact).abs() < 1e-4, "{extrapolated} vs {exact}");
    let sd = ground_state(&v, &SpectralOptions::default()).unwrap();
    assert!((sd.lambda0() - exact).abs() < 1e-3);
}

#[test]
fn grid_refinement_is_second_order() {
    let v = well(2.0);
    let l: Vec<f64> = [0.04, 0.02, 0.01, 0.005].iter().map(|&h| line_solve(&v, 15.0, h).lambda0()).collect();
    let diffs: Vec<f64> = l.windows(2).map(|w| w[0] - w[1]).collect();
    for w in diffs.windows(2) {
        let factor = w[0] / w[1];
        assert!((3.0..5.0).contains(&factor), "refinement factor {factor} from {l:?}");
    }
}

#[test]
fn discrete_eigen_residual_and_rayleigh_quotient() {
    let v = well(2.0);
    let sd = ground_state(&v, &SpectralOptions::default()).unwrap();
    let g = line_grid(&sd);
    let psi = sd.psi_values();
    let vc = g.cell_averages(&v);
    let n = psi.len();
    let at = |j: isize| if j < 0 || j >= n as isize { 0.0 } else { psi[j as usize] };
    let apply: Vec<f64> = (0..n)
        .map(|j| {
            let j = j as isize;
            0.5 * (at(j - 1) - 2.0 * at(j) + at(j + 1)) / (g.h * g.h) + vc[j as usize] * at(j)
        })
        .collect();
    let nn: f64 = psi.iter().map(|p| p * p).sum();
    let res: f64 = apply.iter().zip(psi).map(|(a, p)| (a - sd.lambda0() * p).powi(2)).sum();
    assert!((res / nn).sqrt() < 1e-6, "residual {}", (res / nn).sqrt());
    let rq = apply.iter().zip(psi).map(|(a, p)| a * p).sum::<f64>() / nn;
    assert!((rq - sd.lambda0()).abs() < 1e-8, "Rayleigh quotient {rq} vs {}", sd.lambda0());
    assert!(sd.residual() < 1e-6);
}

#[test]
fn ground_state_is_normalized_positive_and_monotone() {
    let sd = ground_state(&well(2.0), &SpectralOptions::default()).unwrap();
    assert!((sd.norm_squared() - 1.0).abs() < 1e-8);
    let g = line_grid(&sd);
    let psi = sd.psi_values();
    assert!(psi.iter().all(|&p| p > 0.0));
    for j in g.m..psi.len() - 1 {
        assert!(psi[j] > psi[j + 1], "not decreasing at x = {}", g.x(j));
    }
    for j in 1..=g.m {
        assert!(psi[j - 1] < psi[j]);
    }
}

#[test]
fn gap_of_the_standard_well_comes_from_its_odd_state() {
    let v = well(2.0);
    let sd = spectrum(&v, &SpectralOptions::default()).unwrap();
    let gap = sd.gap().unwrap();
    let l1 = odd_root(2.0, 1.0).expect("the well binds an odd state");
    assert!((gap - (even_root(2.0, 1.0) - l1)).abs() < 1e-3, "gap {gap}, λ₁ {l1}");
    assert!(gap <= sd.lambda0());
}

#[test]
fn gap_of_a_deep_well() {
    let v = well(20.0);
    let opts = SpectralOptions { h: 0.0025, min_points: 512, ..SpectralOptions::default() };
    let sd = spectrum(&v, &opts).unwrap();
    let expected = even_root(20.0, 1.0) - odd_root(20.0, 1.0).unwrap();
    assert!((sd.gap().unwrap() - expected).abs() < 1e-3, "{} vs {expected}", sd.gap().unwrap());
}

#[test]
fn shallow_well_has_a_single_eigenvalue() {
    // sqrt(2 v0) r < π/2 binds no odd state.
    let v = well(1.0);
    assert!(odd_root(1.0, 1.0).is_none());
    let sd = ground_state(&v, &SpectralOptions::default()).unwrap();
    assert_eq!(spectral_gap(&v, &sd).unwrap(), sd.lambda0());
}

#[test]
fn killing_potential_has_no_positive_eigenvalue() {
    let v = Potential::bump(1, -1.0, 1.0).unwrap();
    assert!(matches!(ground_state(&v, &SpectralOptions::default()), Err(Error::NoPositiveEigenvalue { .. })));
}

#[test]
fn farfield_constant_is_even_and_matches_the_tail() {
    let v = well(2.0);
    let sd = line_solve(&v, 30.0, 0.005);
    let (cp, cm) = (farfield_constant(&v, &sd, &[1.0]).unwrap(), farfield_constant(&v, &sd, &[-1.0]).unwrap());
    assert!(cp > 0.0 && (cp - cm).abs() < 1e-10 * cp);
    // Least-squares constant fit of psi(x) e^{κx} on [R + 5, R + 10].
    let g = line_grid(&sd);
    let k = sd.kappa();
    let logs: Vec<f64> = (0..g.len())
        .filter(|&j| (6.0..=11.0).contains(&g.x(j)))
        .map(|j| sd.psi_values()[j].ln() + k * g.x(j))
        .collect();
    let fit = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    assert!((fit / cp - 1.0).abs() < 0.02, "fit {fit} vs C {cp}");
}

#[test]
fn farfield_law_on_the_tail() {
    let v = well(2.0);
    let sd = line_solve(&v, 50.0, 0.01);
    let g = line_grid(&sd);
    let k = sd.kappa();
    let at = |x: f64| sd.psi_grid(&[x]).unwrap().ln() + k * x;
    let reference = at(40.0);
    let c = (0..=20).map(|i| 20.0 + i as f64).map(|x| (at(x) - reference).abs() * x).fold(0.0, f64::max);
    assert!(c < 0.1, "fitted c = {c} on a grid of radius {}", g.radius());
}

#[test]
fn psi_extended_branches() {
    let v = well(2.0);
    let sd = line_solve(&v, 40.0, 0.01);
    let g = line_grid(&sd);
    for j in [g.m, g.m + 37, g.m - 250] {
        assert_eq!(psi_extended(&sd, &[g.x(j)]), sd.psi_values()[j]);
    }
    let far = 2.0 * g.radius();
    let expected = sd.cfar(&[1.0]).unwrap() * (-sd.kappa() * far).exp();
    assert!((psi_extended(&sd, &[far]) / expected - 1.0).abs() < 1e-12);
    let ratio = sd.psi_grid(&[30.0]).unwrap() / sd.psi_far(&[30.0]).unwrap();
    assert!((ratio - 1.0).abs() < 0.03, "ratio {ratio}");
}

#[test]
fn radial_bump_in_three_dimensions_is_isotropic() {
    let v = Potential::bump(3, 10.0, 1.0).unwrap();
    let sd = ground_state(&v, &SpectralOptions::for_dim(3)).unwrap();
    assert!(sd.lambda0() > 0.0);
    let s = 1.0 / 3f64.sqrt();
    let dirs = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [s, -s, s], [0.6, 0.8, 0.0]];
    let c: Vec<f64> = dirs.iter().map(|d| farfield_constant(&v, &sd, d).unwrap()).collect();
    for ci in &c {
        assert!(*ci > 0.0 && (ci / c[0] - 1.0).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn planar_well_far_field_is_positive_and_symmetric() {
    let v = Potential::square_well(2, 2.0, 1.0).unwrap();
    let sd = ground_state(&v, &SpectralOptions::for_dim(2)).unwrap();
    assert!(sd.lambda0() > 0.0 && sd.lambda0() < 2.0);
    assert!((sd.norm_squared() - 1.0).abs() < 1e-8);
    let c: Vec<f64> = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
        .iter()
        .map(|d| farfield_constant(&v, &sd, d).unwrap())
        .collect();
    for ci in &c {
        assert!(*ci > 0.0 && (ci / c[0] - 1.0).abs() < 1e-6, "{c:?}");
    }
}
