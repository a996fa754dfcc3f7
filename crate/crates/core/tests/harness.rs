use heatcone_core::evolution::{evolve, EvolveOptions, FreeKernel};
use heatcone_core::harness::{positivity_audit, run_experiment, sweep_csv, ExperimentConfig, Regime};
use heatcone_core::{Error, Potential, SourcePoint};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

const FREE: &str = r#"
schema_version = 1
dim = 1
[potential]
kind = "zero"
[evolve]
h = 0.005
[[sweep]]
regime = "interior"
times = [2.0]
[[sweep]]
regime = "exterior"
times = [1.0, 2.0]
thetas = [0.5, 1.5, 3.0]
"#;

#[test]
fn free_case_ratios_are_one_and_interior_is_skipped() {
    let e = run_experiment(&config(FREE)).unwrap();
    let r = &e.report;
    let interior = r.checks.iter().find(|c| c.id == "interior_ratio").unwrap();
    assert_eq!(interior.skipped.as_deref(), Some("NoPositiveEigenvalue"));
    let exterior = r.checks.iter().find(|c| c.id == "exterior_ratio").unwrap();
    assert!(exterior.pass && exterior.worst_deviation.unwrap() < 1e-3, "{exterior:?}");
    assert_eq!(e.tables.len(), 1);
    for row in &e.tables[0].rows {
        assert_eq!(row.region, "undefined");
        assert!(row.f_interior.is_none() && row.f_global.is_none());
    }
    assert!(r.provenance.lambda0.is_none());
}

const SMALL: &str = r#"
schema_version = 1
dim = 1
seed = 17
[potential]
kind = "square_well"
v0 = 2.0
r = 1.0
[mc]
n_paths = 2000
[[sweep]]
regime = "exterior"
times = [1.5]
probes = 3
mc = true
global = false
[positivity]
enabled = true
"#;

#[test]
fn rerun_gives_identical_artifacts() {
    let cfg = config(SMALL);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_experiment(&cfg).unwrap().write(d.path()).unwrap();
    }
    for name in ["report.json", "exterior.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
    let csv = std::fs::read_to_string(dirs[0].path().join("exterior.csv")).unwrap();
    assert!(csv.starts_with("t,x,theta,region,p_pde,p_mc,mc_stderr,f_interior,f_exterior,f_global,ratio\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn report_has_provenance_and_one_id_per_check() {
    let e = run_experiment(&config(SMALL)).unwrap();
    let text = e.report.to_json();
    let at = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(at("pass") < at("checks") && at("checks") < at("provenance"));
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let prov = &json["provenance"];
    for k in ["config_hash", "seed", "lambda0", "gap", "far_field", "version"] {
        assert!(!prov[k].is_null(), "missing {k}");
    }
    assert_eq!(prov["seed"], 17);
    let mut ids: Vec<&str> = e.report.checks.iter().map(|c| c.id.as_str()).collect();
    let n = ids.len();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), n);
    assert!(ids.contains(&"exterior_dual_oracle") && ids.contains(&"positivity"));
    let dual = e.report.checks.iter().find(|c| c.id == "exterior_dual_oracle").unwrap();
    assert!(dual.pass, "{dual:?}");
    // Row tags match a fresh classification.
    let csv = sweep_csv(&e.tables[0].rows);
    assert!(csv.lines().skip(1).all(|l| l.contains(",exterior,")));
}

#[test]
fn sweep_point_outside_its_regime_is_a_config_error() {
    let text = r#"
schema_version = 1
dim = 1
[potential]
kind = "square_well"
v0 = 2.0
r = 1.0
[[sweep]]
regime = "interior"
times = [4.0]
thetas = [0.5, 3.0]
"#;
    let err = run_experiment(&config(text)).unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("exterior")), "{err}");
}

#[test]
fn solver_errors_carry_the_sweep_point() {
    let text = r#"
schema_version = 1
dim = 1
[potential]
kind = "square_well"
v0 = 2.0
r = 1.0
[evolve]
radius = 12.0
[[sweep]]
regime = "exterior"
times = [1.0]
thetas = [4.0, 20.0]
global = false
"#;
    match run_experiment(&config(text)) {
        Err(Error::AtPoint { regime, t, x, .. }) => {
            assert_eq!(regime, "exterior");
            assert_eq!(t, 1.0);
            assert_eq!(x, [20.0]);
        }
        other => panic!("expected a located error, got {other:?}"),
    }
}

#[test]
fn default_config_has_the_standard_sweeps() {
    let c = ExperimentConfig::default_well();
    let regimes: Vec<Regime> = c.sweeps.iter().map(|s| s.regime).collect();
    assert_eq!(regimes, [Regime::Interior, Regime::Exterior, Regime::NearCone]);
    assert_eq!(c.sweeps[0].times, [6.0, 8.0, 10.0]);
    assert_eq!(c.sweeps[2].probes, 20);
}

fn audit(v: &Potential, t_max: f64) -> f64 {
    let y = SourcePoint::origin(1);
    let opts = EvolveOptions { snapshot_times: vec![1.0, 2.0, 3.0], ..EvolveOptions::default() };
    let k = evolve(v, &y, t_max, &opts).unwrap();
    positivity_audit(&k, &FreeKernel { dim: 1 }, v.support_radius(), &[1.0, 2.0, 3.0]).unwrap().c
}

#[test]
fn positivity_bound_for_nonnegative_well_is_at_least_one() {
    let c = audit(&Potential::square_well(1, 2.0, 1.0).unwrap(), 3.0);
    assert!(c >= 1.0, "c = {c}");
}

#[test]
fn positivity_bound_for_zero_potential_is_one() {
    let c = audit(&Potential::zero(1, 1.0).unwrap(), 3.0);
    assert!((c - 1.0).abs() < 1e-3, "c = {c}");
}

#[test]
fn positivity_bound_with_killing_core_is_below_one() {
    let v = Potential::sum(&[Potential::square_well(1, 0.5, 2.0).unwrap(), Potential::bump(1, -3.0, 1.0).unwrap()]).unwrap();
    let c = audit(&v, 3.0);
    assert!(c > 0.0 && c < 1.0, "c = {c}");
}

#[test]
fn positivity_audit_rejects_probe_radius_beyond_grid() {
    let v = Potential::square_well(1, 2.0, 1.0).unwrap();
    let y = SourcePoint::origin(1);
    let opts = EvolveOptions { radius: Some(10.0), ..EvolveOptions::default() };
    let k = evolve(&v, &y, 1.0, &opts).unwrap();
    assert!(matches!(
        positivity_audit(&k, &FreeKernel { dim: 1 }, 6.0, &[1.0]),
        Err(Error::OutOfRange { .. })
    ));
}
