use heatcone_core::evolution::{evolve, EvolveOptions};
use heatcone_core::spectral::{ground_state, SpectralOptions};
use heatcone_core::stochastic::{bridge_estimate, default_steps, interior_ratio_mc, McBudget};
use heatcone_core::{Error, Potential, SourcePoint};

fn well() -> Potential {
    Potential::square_well(1, 2.0, 1.0).unwrap()
}

#[test]
fn same_seed_same_bits() {
    let v = well();
    let y = SourcePoint::origin(1);
    let a = bridge_estimate(&v, 2.0, &[0.5], &y, 4000, 100, 42).unwrap();
    let b = bridge_estimate(&v, 2.0, &[0.5], &y, 4000, 100, 42).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    let c = bridge_estimate(&v, 2.0, &[0.5], &y, 4000, 100, 43).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn result_does_not_depend_on_the_thread_count() {
    let v = well();
    let y = SourcePoint::origin(1);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bridge_estimate(&v, 1.0, &[1.5], &y, 3000, 100, 7).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn stderr_shrinks_like_inverse_square_root() {
    let v = well();
    let y = SourcePoint::origin(1);
    let small = bridge_estimate(&v, 2.0, &[1.0], &y, 5000, 100, 1).unwrap();
    let large = bridge_estimate(&v, 2.0, &[1.0], &y, 20000, 100, 2).unwrap();
    let ratio = small.stderr / large.stderr;
    assert!(ratio > 1.0 && ratio < 4.0, "stderr ratio {ratio} for 4x paths");
}

#[test]
fn relative_spread_is_controlled() {
    let v = well();
    let y = SourcePoint::origin(1);
    let e = bridge_estimate(&v, 4.0, &[2.0], &y, 10_000, default_steps(&v, 4.0), 5).unwrap();
    assert!(e.mean > 0.0 && e.stderr / e.mean < 1.0);
}

#[test]
fn agrees_with_the_pde_away_from_the_cone() {
    let v = well();
    let y = SourcePoint::origin(1);
    let (t, x) = (1.5, 2.0);
    let field = evolve(&v, &y, t, &EvolveOptions::default()).unwrap();
    let p = field.evaluate(t, &[x]).unwrap();
    let e = bridge_estimate(&v, t, &[x], &y, 40_000, default_steps(&v, t), 9).unwrap();
    // 3 standard errors plus a 1% allowance for the grid and midpoint-rule errors.
    assert!((e.mean - p).abs() < 3.0 * e.stderr + 0.01 * p, "mc {} ± {} vs pde {p}", e.mean, e.stderr);
}

#[test]
fn interior_ratio_is_one_and_even() {
    let v = well();
    let y = SourcePoint::origin(1);
    let sd = ground_state(&v, &SpectralOptions::default()).unwrap();
    let budget = McBudget { n_paths: 20_000, n_steps: None, seed: 3 };
    let plus = interior_ratio_mc(&v, &sd, 10.0, &[1.0], &y, 0.3, &budget).unwrap();
    let minus = interior_ratio_mc(&v, &sd, 10.0, &[-1.0], &y, 0.3, &McBudget { seed: 4, ..budget }).unwrap();
    assert!((plus.ratio - 1.0).abs() < plus.half_width + 0.02, "{plus:?}");
    let joint = (plus.half_width.powi(2) + minus.half_width.powi(2)).sqrt();
    assert!((plus.ratio - minus.ratio).abs() < joint, "{} vs {}", plus.ratio, minus.ratio);
}

#[test]
fn interior_ratio_needs_a_positive_eigenvalue_and_an_interior_point() {
    let v = well();
    let y = SourcePoint::origin(1);
    let sd = ground_state(&v, &SpectralOptions::default()).unwrap();
    let budget = McBudget { n_paths: 1000, n_steps: None, seed: 0 };
    let zero = Potential::zero(1, 1.0).unwrap();
    assert!(matches!(
        interior_ratio_mc(&zero, &sd, 10.0, &[1.0], &y, 0.3, &budget),
        Err(Error::NoPositiveEigenvalue { .. })
    ));
    assert!(interior_ratio_mc(&v, &sd, 1.0, &[5.0], &y, 0.3, &budget).is_err());
}
