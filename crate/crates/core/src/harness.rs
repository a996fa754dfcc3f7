//! End-to-end experiments: configuration, regime sweeps comparing the PDE oracle with
//! the asymptotic formulas, ratio tables, the positivity audit and the verdict report.

use crate::asymptotics::{
    classify, exterior_formula, global_formula, interior_formula, CoefficientOptions, FormulaOptions, Region,
};
use crate::error::{Error, Result};
use crate::evolution::{evolve, evolve_remainder, EvolveOptions, FreeKernel, KernelField};
use crate::potentials::{norm, Potential, PotentialSpec, SourcePoint};
use crate::spectral::{spectrum, SpectralData, SpectralOptions};
use crate::stochastic::{bridge_estimate, default_steps};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Version string recorded in reports.
pub const VERSION: &str = concat!("heatcone-core v", env!("CARGO_PKG_VERSION"));

/// Region swept by a [`SweepSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Interior,
    Exterior,
    NearCone,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Interior => "interior",
            Regime::Exterior => "exterior",
            Regime::NearCone => "near_cone",
        }
    }

    fn default_width(&self) -> f64 {
        match self {
            Regime::Interior => 0.3,
            Regime::Exterior | Regime::NearCone => 1.0,
        }
    }
}

/// One sweep over `(t, x = y + θ t α)` with `α` the first coordinate axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub regime: Regime,
    /// Interior and exterior: distance of the ladder from the cone, in units of
    /// `sqrt(2λ₀)`. Near-cone: half-width of the band `sqrt(t) |θ - sqrt(2λ₀)|`.
    #[serde(default)]
    pub width: Option<f64>,
    pub times: Vec<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Explicit θ ladder replacing the generated one.
    #[serde(default)]
    pub thetas: Vec<f64>,
    /// Length of the generated exterior ladder, in units of `sqrt(2λ₀)`.
    #[serde(default = "default_span")]
    pub span: f64,
    /// Also run the Monte Carlo oracle at every point.
    #[serde(default)]
    pub mc: bool,
    /// Evaluate the global formula at every point.
    #[serde(default = "default_true")]
    pub global: bool,
}

fn default_probes() -> usize {
    10
}

fn default_span() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

/// Spectral solver overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub h: Option<f64>,
    pub radius: Option<f64>,
    pub tol: Option<f64>,
}

/// Time-stepping overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    /// Run at least to this time.
    pub t_max: Option<f64>,
    pub h: Option<f64>,
    pub radius: Option<f64>,
    pub dt_max: Option<f64>,
    pub coarsen_after: Option<f64>,
    pub tol: Option<f64>,
    /// Probe points for the `evolve` command.
    pub points: Vec<ProbePoint>,
    /// Write every stored snapshot as its own CSV.
    pub dump_snapshots: bool,
}

/// A query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: Option<usize>,
    /// Falls back to the top-level seed.
    pub seed: Option<u64>,
    pub points: Vec<ProbePoint>,
}

impl Default for McSection {
    fn default() -> Self {
        McSection { n_paths: 100_000, n_steps: None, seed: None, points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientSection {
    pub tol: f64,
    pub switch_time: f64,
    pub eps0: f64,
    /// θ values for the `coeff-a` command.
    pub thetas: Vec<f64>,
    /// Defaults to the first coordinate axis.
    pub alpha: Option<Vec<f64>>,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        let c = CoefficientOptions::default();
        CoefficientSection {
            tol: c.tol,
            switch_time: c.switch_time,
            eps0: FormulaOptions::default().eps0,
            thetas: Vec::new(),
            alpha: None,
        }
    }
}

impl CoefficientSection {
    pub fn options(&self) -> CoefficientOptions {
        CoefficientOptions { tol: self.tol, switch_time: self.switch_time }
    }

    pub fn formula_options(&self) -> FormulaOptions {
        FormulaOptions { eps0: self.eps0, coefficient: self.options() }
    }
}

/// Formula evaluated by the `formula` command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaKind {
    Interior,
    Exterior,
    #[default]
    Global,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormulaSection {
    pub kind: FormulaKind,
    pub points: Vec<ProbePoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivitySection {
    pub enabled: bool,
    /// Probe radius `R`; defaults to the support radius plus `|y|`.
    pub radius: Option<f64>,
    /// Defaults to the union of the sweep times.
    pub times: Vec<f64>,
}

/// Check tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub interior: f64,
    pub exterior: f64,
    pub near_cone: f64,
    pub mc_sigma: f64,
    pub mc_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { interior: 0.02, exterior: 0.05, near_cone: 0.05, mc_sigma: 3.0, mc_relative: 0.01 }
    }
}

impl Tolerances {
    fn ratio(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Interior => self.interior,
            Regime::Exterior => self.exterior,
            Regime::NearCone => self.near_cone,
        }
    }
}

/// Experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dim: usize,
    pub potential: PotentialSpec,
    /// Source point `y`; the origin when absent.
    #[serde(default)]
    pub source: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub formula: FormulaSection,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<SweepSpec>,
    #[serde(default)]
    pub positivity: PositivitySection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    /// Square well `v0 = 2, r = 1` in one dimension with the standard sweeps.
    pub fn default_well() -> Self {
        let sweep = |regime, times: &[f64], probes| SweepSpec {
            regime,
            width: None,
            times: times.to_vec(),
            probes,
            thetas: Vec::new(),
            span: default_span(),
            mc: false,
            global: true,
        };
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            dim: 1,
            potential: PotentialSpec::SquareWell { v0: 2.0, r: 1.0 },
            source: None,
            seed: 0,
            out_dir: None,
            spectral: SpectralSection::default(),
            evolve: EvolveSection::default(),
            mc: McSection::default(),
            coefficients: CoefficientSection::default(),
            formula: FormulaSection::default(),
            sweeps: vec![
                sweep(Regime::Interior, &[6.0, 8.0, 10.0], 8),
                sweep(Regime::Exterior, &[2.0, 4.0], 6),
                sweep(Regime::NearCone, &[9.0], 20),
            ],
            positivity: PositivitySection { enabled: true, radius: None, times: Vec::new() },
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks everything that can be checked before the spectrum is known.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("`dim` must be at least 1".into()));
        }
        let v = Potential::from_spec(self.dim, &self.potential).map_err(|e| Error::Config(e.to_string()))?;
        self.source_point(&v).map_err(|e| Error::Config(e.to_string()))?;
        for s in &self.sweeps {
            if s.times.is_empty() {
                return Err(Error::Config(format!("{} sweep has no times", s.regime.name())));
            }
            for &t in &s.times {
                positive("sweep.times", t)?;
            }
            if s.thetas.is_empty() && s.probes < 2 {
                return Err(Error::Config(format!("{} sweep needs at least 2 probes", s.regime.name())));
            }
            for &th in &s.thetas {
                positive("sweep.thetas", th)?;
            }
            if let Some(w) = s.width {
                positive("sweep.width", w)?;
            }
            if s.regime == Regime::Exterior {
                positive("sweep.span", s.span)?;
            }
        }
        for p in self.mc.points.iter().chain(&self.formula.points).chain(&self.evolve.points) {
            positive("t", p.t)?;
            if p.x.len() != self.dim {
                return Err(Error::Config(format!("point {:?} has dimension {}, expected {}", p.x, p.x.len(), self.dim)));
            }
        }
        if self.mc.n_paths < 1000 {
            return Err(Error::Config(format!("mc.n_paths must be at least 1000, got {}", self.mc.n_paths)));
        }
        positive("coefficients.tol", self.coefficients.tol)?;
        positive("coefficients.switch_time", self.coefficients.switch_time)?;
        positive("coefficients.eps0", self.coefficients.eps0)?;
        for &th in &self.coefficients.thetas {
            positive("coefficients.thetas", th)?;
        }
        let t = &self.tolerances;
        for (name, x) in [
            ("tolerances.interior", t.interior),
            ("tolerances.exterior", t.exterior),
            ("tolerances.near_cone", t.near_cone),
            ("tolerances.mc_sigma", t.mc_sigma),
            ("tolerances.mc_relative", t.mc_relative),
        ] {
            positive(name, x)?;
        }
        Ok(())
    }

    fn source_point(&self, v: &Potential) -> Result<SourcePoint> {
        match &self.source {
            Some(y) => SourcePoint::new(y.clone(), v),
            None => Ok(SourcePoint::origin(self.dim)),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Direction used by sweeps and by `coeff-a` when no `alpha` is given.
    pub fn alpha(&self) -> Vec<f64> {
        self.coefficients.alpha.clone().unwrap_or_else(|| axis(self.dim, 0))
    }

    fn evolve_options(&self) -> EvolveOptions {
        let e = &self.evolve;
        let mut o = EvolveOptions { h: e.h, radius: e.radius, dt_max: e.dt_max, coarsen_after: e.coarsen_after, ..EvolveOptions::default() };
        if let Some(tol) = e.tol {
            o.tol = tol;
        }
        o
    }
}

fn axis(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

/// Potential, source and (when it exists) the ground state of a configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ExperimentConfig,
    pub v: Potential,
    pub y: SourcePoint,
    pub spectral: Option<SpectralData>,
}

impl Problem {
    /// Builds the potential and computes the spectrum. A potential without a positive
    /// eigenvalue leaves `spectral` empty.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut p = Self::unsolved(config)?;
        let v = &p.v;
        p.spectral = if v.max_value() <= 0.0 {
            None
        } else {
            let mut opts = SpectralOptions::for_dim(config.dim);
            let s = &config.spectral;
            if let Some(h) = s.h {
                opts.h = h;
            }
            if s.radius.is_some() {
                opts.radius = s.radius;
            }
            if let Some(tol) = s.tol {
                opts.tol = tol;
            }
            match spectrum(v, &opts) {
                Ok(sd) => Some(sd),
                Err(Error::NoPositiveEigenvalue { .. }) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(p)
    }

    /// Potential and source only, for commands that do not need the spectrum.
    pub fn unsolved(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let v = Potential::from_spec(config.dim, &config.potential)?;
        let y = config.source_point(&v)?;
        Ok(Problem { config: config.clone(), v, y, spectral: None })
    }

    /// `λ₀`, or zero without a positive eigenvalue.
    pub fn lambda0(&self) -> f64 {
        self.spectral.as_ref().map_or(0.0, |s| s.lambda0())
    }

    pub fn kappa(&self) -> f64 {
        (2.0 * self.lambda0()).sqrt()
    }

    pub fn spectral(&self) -> Result<&SpectralData> {
        self.spectral.as_ref().ok_or(Error::NoPositiveEigenvalue { lambda: self.v.max_value() })
    }

    /// Kernel field up to `t_max` with exact snapshots at `snapshots`.
    pub fn kernel(&self, t_max: f64, snapshots: &[f64]) -> Result<KernelField> {
        let mut opts = self.config.evolve_options();
        opts.snapshot_times = snapshots.to_vec();
        let t = t_max.max(self.config.evolve.t_max.unwrap_or(0.0));
        evolve(&self.v, &self.y, t, &opts)
    }

    /// Remainder field up to `t_max`, on a grid just wide enough for the support
    /// integrals and with steps coarsened at late times.
    pub fn remainder(&self, t_max: f64) -> Result<KernelField> {
        let mut opts = self.config.evolve_options();
        if opts.radius.is_none() {
            let reach = norm(self.y.as_slice()) + self.v.support_radius();
            let full = EvolveOptions::default_radius(&self.v, &self.y, t_max, opts.tol);
            opts.radius = Some(full.min(reach + (t_max * (1.0 / opts.tol).ln()).sqrt() + 10.0));
        }
        if opts.coarsen_after.is_none() {
            opts.coarsen_after = Some(4.0);
        }
        evolve_remainder(&self.v, &self.y, t_max, &opts)
    }
}

/// Kernel and remainder fields, re-evolved further whenever a coefficient needs more time.
pub struct Fields<'a> {
    problem: &'a Problem,
    snapshots: Vec<f64>,
    pub kernel: KernelField,
    pub remainder: Option<KernelField>,
}

impl<'a> Fields<'a> {
    pub fn new(problem: &'a Problem, t_max: f64, snapshots: &[f64], with_remainder: bool) -> Result<Self> {
        let kernel = problem.kernel(t_max, snapshots)?;
        let remainder = if with_remainder && problem.spectral.is_some() {
            Some(problem.remainder(t_max.max(20.0))?)
        } else {
            None
        };
        Ok(Fields { problem, snapshots: snapshots.to_vec(), kernel, remainder })
    }

    pub fn remainder(&self) -> Result<&KernelField> {
        self.remainder.as_ref().ok_or(Error::NoPositiveEigenvalue { lambda: self.problem.v.max_value() })
    }

    /// Extends whichever field stops at `covered` to past `needed`.
    fn extend(&mut self, covered: f64, needed: f64) -> Result<()> {
        let target = 1.1 * needed + 1.0;
        let near = |f: &KernelField| (f.t_max() - covered).abs() <= 1e-9 * covered.max(1.0);
        let mut done = false;
        if let Some(r) = &self.remainder {
            if near(r) {
                self.remainder = Some(self.problem.remainder(target)?);
                done = true;
            }
        }
        if near(&self.kernel) || !done {
            self.kernel = self.problem.kernel(target, &self.snapshots)?;
        }
        Ok(())
    }

    /// Runs `f`, extending the fields and retrying while it reports `KernelTooShort`.
    pub fn covering<T>(&mut self, mut f: impl FnMut(&Fields) -> Result<T>) -> Result<T> {
        for _ in 0..4 {
            match f(self) {
                Err(e) => match short_of(&e) {
                    Some((covered, needed)) if needed.is_finite() => self.extend(covered, needed)?,
                    _ => return Err(e),
                },
                ok => return ok,
            }
        }
        f(self)
    }
}

fn short_of(e: &Error) -> Option<(f64, f64)> {
    match e {
        Error::KernelTooShort { covered, needed } => Some((*covered, *needed)),
        Error::AtPoint { source, .. } => short_of(source),
        _ => None,
    }
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub theta: f64,
    pub region: String,
    pub p_pde: f64,
    pub p_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub f_interior: Option<f64>,
    pub f_exterior: Option<f64>,
    pub f_global: Option<f64>,
    /// `p_pde` over the formula of the sweep's regime.
    pub ratio: Option<f64>,
}

/// Rows of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub name: String,
    pub regime: Regime,
    pub rows: Vec<SweepRow>,
}

/// One pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub regime: String,
    pub points: usize,
    pub worst_deviation: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub skipped: Option<String>,
}

impl CheckRecord {
    fn skipped(id: String, regime: &str, reason: String) -> Self {
        CheckRecord { id, regime: regime.into(), points: 0, worst_deviation: None, tolerance: None, pass: true, skipped: Some(reason) }
    }

    fn bound(id: String, regime: &str, points: usize, worst: f64, tolerance: f64) -> Self {
        CheckRecord {
            id,
            regime: regime.into(),
            points,
            worst_deviation: Some(worst),
            tolerance: Some(tolerance),
            pass: worst <= tolerance,
            skipped: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub direction: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub lambda0: Option<f64>,
    pub gap: Option<f64>,
    pub far_field: Vec<FarField>,
    pub version: String,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub pass: bool,
    pub checks: Vec<CheckRecord>,
    pub provenance: Provenance,
}

impl VerdictReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Report plus the sweep tables behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub report: VerdictReport,
    pub tables: Vec<SweepTable>,
}

impl Experiment {
    /// Writes `report.json` and one `<sweep>.csv` per sweep into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        for t in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", t.name)), sweep_csv(&t.rows))?;
        }
        Ok(())
    }
}

/// Formats a number with 17 significant digits; missing values are empty.
pub fn fmt_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// CSV for sweep rows, one coordinate column per dimension.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let d = rows.first().map_or(1, |r| r.x.len());
    let xcols: Vec<String> = if d == 1 { vec!["x".into()] } else { (1..=d).map(|i| format!("x_{i}")).collect() };
    let mut out = format!(
        "t,{},theta,region,p_pde,p_mc,mc_stderr,f_interior,f_exterior,f_global,ratio\n",
        xcols.join(",")
    );
    for r in rows {
        let xs: Vec<String> = r.x.iter().map(|c| fmt_num(Some(*c))).collect();
        let fields = [
            fmt_num(Some(r.t)),
            xs.join(","),
            fmt_num(Some(r.theta)),
            r.region.clone(),
            fmt_num(Some(r.p_pde)),
            fmt_num(r.p_mc),
            fmt_num(r.mc_stderr),
            fmt_num(r.f_interior),
            fmt_num(r.f_exterior),
            fmt_num(r.f_global),
            fmt_num(r.ratio),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Sweep points `(t, θ)` and the classification width at each.
fn sweep_points(spec: &SweepSpec, kappa: Option<f64>) -> Option<Vec<(f64, f64, f64)>> {
    let width = spec.width.unwrap_or(spec.regime.default_width());
    let n = spec.probes;
    let frac = |k: usize| k as f64 / (n - 1) as f64;
    let mut pts = Vec::new();
    for &t in &spec.times {
        let eps = match (spec.regime, kappa) {
            (Regime::NearCone, Some(_)) => width / t.sqrt(),
            (_, Some(k)) => width * k,
            (_, None) => 0.0,
        };
        let thetas: Vec<f64> = if !spec.thetas.is_empty() {
            spec.thetas.clone()
        } else {
            let k = kappa?;
            match spec.regime {
                Regime::Interior => (0..n).map(|i| (k - eps) * frac(i)).collect(),
                Regime::Exterior => (0..n).map(|i| k + eps + spec.span * k * frac(i)).collect(),
                Regime::NearCone => (0..n).map(|i| k + eps * (2.0 * frac(i) - 1.0)).filter(|th| *th >= 0.0).collect(),
            }
        };
        // The band is closed, the near-cone test is strict: widen by a rounding margin.
        let tag = if spec.regime == Regime::NearCone { eps * (1.0 + 1e-9) } else { eps };
        pts.extend(thetas.into_iter().map(|th| (t, th, tag)));
    }
    Some(pts)
}

fn regime_matches(regime: Regime, region: &Region) -> bool {
    matches!(
        (regime, region),
        (Regime::Interior, Region::Interior { .. })
            | (Regime::Exterior, Region::Exterior { .. })
            | (Regime::NearCone, Region::NearCone)
            | (Regime::Exterior, Region::Undefined)
    )
}

fn at_point(regime: Regime, t: f64, x: &[f64]) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::AtPoint { regime: regime.name().into(), t, x: x.to_vec(), source: Box::new(e) }
}

fn evaluate_row(problem: &Problem, fields: &Fields, spec: &SweepSpec, t: f64, x: &[f64], eps: f64, seed: u64) -> Result<SweepRow> {
    let cfg = &problem.config;
    let (v, y) = (&problem.v, &problem.y);
    let wrap = at_point(spec.regime, t, x);
    let c = classify(t, x, y, problem.lambda0(), eps).map_err(&wrap)?;
    if !regime_matches(spec.regime, &c.region) {
        return Err(wrap(Error::Config(format!("point is {} rather than {}", c.region.name(), spec.regime.name()))));
    }
    let p_pde = fields.kernel.evaluate(t, x).map_err(&wrap)?;
    let (p_mc, mc_stderr) = if spec.mc {
        let steps = cfg.mc.n_steps.unwrap_or_else(|| default_steps(v, t));
        let e = bridge_estimate(v, t, x, y, cfg.mc.n_paths, steps, seed).map_err(&wrap)?;
        (Some(e.mean), Some(e.stderr))
    } else {
        (None, None)
    };
    let sd = problem.spectral.as_ref();
    let f_interior = sd.map(|s| interior_formula(s, t, x, y)).transpose().map_err(&wrap)?;
    // Inside the band the coefficient's tail bound would need the kernel far past t.
    let f_exterior = if matches!(c.region, Region::Exterior { .. } | Region::Undefined) {
        Some(exterior_formula(v, &fields.kernel, problem.lambda0(), t, x, y, &cfg.coefficients.options()).map_err(&wrap)?)
    } else {
        None
    };
    let fopts = cfg.coefficients.formula_options();
    let f_global = match sd {
        Some(s) if spec.global && c.theta <= 1.0 / fopts.eps0 => {
            Some(global_formula(v, fields.remainder().map_err(&wrap)?, s, t, x, y, &fopts).map_err(&wrap)?.value)
        }
        _ => None,
    };
    let reference = match spec.regime {
        Regime::Interior => f_interior,
        Regime::Exterior => f_exterior,
        Regime::NearCone => f_global,
    };
    Ok(SweepRow {
        t,
        x: x.to_vec(),
        theta: c.theta,
        region: c.region.name().into(),
        p_pde,
        p_mc,
        mc_stderr,
        f_interior,
        f_exterior,
        f_global,
        ratio: reference.map(|f| p_pde / f),
    })
}

fn run_sweep(problem: &Problem, fields: &Fields, spec: &SweepSpec, points: &[(f64, f64, f64)], seed: u64) -> Result<Vec<SweepRow>> {
    let alpha = axis(problem.config.dim, 0);
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(t, theta, eps))| {
            let x: Vec<f64> = problem.y.as_slice().iter().zip(&alpha).map(|(yi, a)| yi + theta * t * a).collect();
            evaluate_row(problem, fields, spec, t, &x, eps, seed.wrapping_add(i as u64))
        })
        .collect()
}

fn deviation(ratio: Option<f64>) -> f64 {
    ratio.map_or(f64::INFINITY, |r| (r - 1.0).abs())
}

fn sweep_checks(spec: &SweepSpec, name: &str, rows: &[SweepRow], tol: &Tolerances) -> Vec<CheckRecord> {
    let regime = spec.regime.name();
    let mut checks = Vec::new();
    let worst_at = |t: f64| rows.iter().filter(|r| r.t == t).map(|r| deviation(r.ratio)).fold(0.0, f64::max);
    let last = spec.times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = spec.times.iter().cloned().fold(f64::INFINITY, f64::min);
    if spec.regime == Regime::Interior {
        // The interior ratio is judged at the latest time, where it is closest to one.
        let n = rows.iter().filter(|r| r.t == last).count();
        checks.push(CheckRecord::bound(format!("{name}_ratio"), regime, n, worst_at(last), tol.interior));
        if last > first {
            let mut c = CheckRecord::bound(format!("{name}_trend"), regime, rows.len(), worst_at(last), worst_at(first));
            c.pass = worst_at(last) < worst_at(first);
            checks.push(c);
        }
    } else {
        let worst = rows.iter().map(|r| deviation(r.ratio)).fold(0.0, f64::max);
        checks.push(CheckRecord::bound(format!("{name}_ratio"), regime, rows.len(), worst, tol.ratio(spec.regime)));
    }
    if spec.mc {
        // |p_pde - p_mc| measured in units of the allowed band sigma*stderr + rel*p_pde.
        let worst = rows
            .iter()
            .map(|r| match (r.p_mc, r.mc_stderr) {
                (Some(m), Some(se)) => (r.p_pde - m).abs() / (tol.mc_sigma * se + tol.mc_relative * r.p_pde.abs()),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        checks.push(CheckRecord::bound(format!("{name}_dual_oracle"), regime, rows.len(), worst, 1.0));
    }
    checks
}

/// Runs spectrum, evolution and every configured sweep, and assembles the verdict.
///
/// Sweep points are checked against their regime under the computed `λ₀` before any
/// formula is evaluated.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    let problem = Problem::new(config)?;
    let kappa = problem.spectral.as_ref().map(|s| s.kappa());
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut names: Vec<String> = Vec::new();

    let mut planned = Vec::new();
    for spec in &config.sweeps {
        let base = spec.regime.name();
        let count = names.iter().filter(|n| n.starts_with(base)).count();
        let name = if count == 0 { base.to_string() } else { format!("{base}_{}", count + 1) };
        names.push(name.clone());
        match sweep_points(spec, kappa) {
            Some(pts) if kappa.is_some() || spec.regime == Regime::Exterior => {
                for &(t, th, eps) in &pts {
                    let x: Vec<f64> = problem.y.as_slice().iter().zip(axis(config.dim, 0)).map(|(yi, a)| yi + th * t * a).collect();
                    let c = classify(t, &x, &problem.y, problem.lambda0(), eps)?;
                    if !regime_matches(spec.regime, &c.region) {
                        return Err(Error::Config(format!(
                            "{name} sweep point t = {t}, theta = {th} is {} under lambda0 = {}",
                            c.region.name(),
                            problem.lambda0()
                        )));
                    }
                }
                planned.push((spec, name, pts));
            }
            _ => checks.push(CheckRecord::skipped(
                format!("{name}_ratio"),
                base,
                "NoPositiveEigenvalue".into(),
            )),
        }
    }

    let mut times: Vec<f64> = planned.iter().flat_map(|(s, _, _)| s.times.iter().cloned()).collect();
    times.extend(config.positivity.times.iter().cloned());
    times.sort_by(f64::total_cmp);
    times.dedup();
    let positivity = config.positivity.enabled && !times.is_empty();
    if !planned.is_empty() || positivity {
        let t_max = times.last().cloned().unwrap_or(1.0);
        let needs_remainder = planned.iter().any(|(s, _, _)| s.global);
        let mut fields = Fields::new(&problem, t_max, &times, needs_remainder)?;
        for (spec, name, pts) in &planned {
            let rows = fields.covering(|f| run_sweep(&problem, f, spec, pts, config.seed))?;
            checks.extend(sweep_checks(spec, name, &rows, &config.tolerances));
            tables.push(SweepTable { name: name.clone(), regime: spec.regime, rows });
        }
        if positivity {
            let ptimes = if config.positivity.times.is_empty() { times.clone() } else { config.positivity.times.clone() };
            let radius = config.positivity.radius.unwrap_or(problem.v.support_radius() + norm(problem.y.as_slice()));
            let free = FreeKernel { dim: config.dim };
            let check = match positivity_audit(&fields.kernel, &free, radius, &ptimes) {
                Ok(b) => {
                    let mut c = CheckRecord::bound("positivity".into(), "all", b.probes, b.c, 0.0);
                    c.pass = b.c > 0.0;
                    c
                }
                Err(Error::NonPositive { value, .. }) => {
                    let mut c = CheckRecord::bound("positivity".into(), "all", 0, value, 0.0);
                    c.pass = false;
                    c
                }
                Err(e) => return Err(e),
            };
            checks.push(check);
        }
    }

    let far_field = match &problem.spectral {
        Some(sd) => (0..config.dim)
            .flat_map(|i| {
                let e = axis(config.dim, i);
                let m: Vec<f64> = e.iter().map(|c| -c).collect();
                [e, m]
            })
            .map(|dir| Ok(FarField { value: sd.cfar(&dir)?, direction: dir }))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let provenance = Provenance {
        config_hash: config.hash(),
        seed: config.seed,
        lambda0: problem.spectral.as_ref().map(|s| s.lambda0()),
        gap: problem.spectral.as_ref().and_then(|s| s.gap()),
        far_field,
        version: VERSION.into(),
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(Experiment { report: VerdictReport { pass, checks, provenance }, tables })
}

/// Per-point comparison of oracle and formula values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub index: usize,
    pub oracle: f64,
    pub formula: f64,
    pub ratio: f64,
    pub deviation: f64,
    /// Deviation above the tolerance.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub regime: String,
    pub tolerance: f64,
    pub rows: Vec<RatioRow>,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

impl RatioTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("regime,index,oracle,formula,ratio,deviation,flagged\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.regime,
                r.index,
                fmt_num(Some(r.oracle)),
                fmt_num(Some(r.formula)),
                fmt_num(Some(r.ratio)),
                fmt_num(Some(r.deviation)),
                r.flagged
            );
        }
        out
    }
}

/// Ratios `oracle / formula` with their deviations from one.
pub fn ratio_table(regime: &str, oracle: &[f64], formula: &[f64], tolerance: f64) -> Result<RatioTable> {
    if oracle.len() != formula.len() {
        return Err(Error::LengthMismatch { left: oracle.len(), right: formula.len() });
    }
    let rows: Vec<RatioRow> = oracle
        .iter()
        .zip(formula)
        .enumerate()
        .map(|(index, (&o, &f))| {
            let ratio = o / f;
            let deviation = (ratio - 1.0).abs();
            RatioRow { index, oracle: o, formula: f, ratio, deviation, flagged: !(deviation <= tolerance) }
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let mean_deviation = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.deviation).sum::<f64>() / rows.len() as f64 };
    Ok(RatioTable { regime: regime.into(), tolerance, rows, max_deviation, mean_deviation })
}

/// Smallest observed `p / p0` and where it occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityBound {
    pub c: f64,
    pub t: f64,
    pub x: Vec<f64>,
    pub probes: usize,
}

/// Minimum of `p(t, x, y) / p0(t, x - y)` over `|x| ≥ radius` and the given times.
///
/// Probes lie on the coordinate half-axes, from `radius` out to where `p0` falls
/// to `1e-8` of its peak (capped at half the grid radius, away from the boundary).
pub fn positivity_audit(kernel: &KernelField, free: &FreeKernel, radius: f64, times: &[f64]) -> Result<PositivityBound> {
    let y = kernel.y().as_slice();
    let d = y.len();
    if free.dim != d {
        return Err(Error::DimensionMismatch { expected: d, got: free.dim });
    }
    if !(radius > 0.0) || norm(y) > radius {
        return Err(Error::invalid("radius", format!("need |y| <= radius with radius > 0, got {radius}")));
    }
    if times.is_empty() {
        return Err(Error::invalid("times", "no probe times"));
    }
    let edge = kernel.grid().radius();
    if radius >= 0.5 * edge {
        return Err(Error::OutOfRange { what: "probe radius", value: radius, lo: 0.0, hi: 0.5 * edge });
    }
    const PER_RAY: usize = 16;
    let mut best: Option<PositivityBound> = None;
    let mut probes = 0;
    for &t in times {
        let reach = (norm(y) + (2.0 * t * 1e8f64.ln()).sqrt()).min(0.5 * edge).max(radius);
        for axis_i in 0..d {
            for sign in [1.0, -1.0] {
                for k in 0..PER_RAY {
                    let r = radius + (reach - radius) * k as f64 / (PER_RAY - 1) as f64;
                    let mut x = vec![0.0; d];
                    x[axis_i] = sign * r;
                    let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                    let p = kernel.evaluate(t, &x)?;
                    if !(p > 0.0) {
                        return Err(Error::NonPositive { probe: format!("t = {t}, x = {x:?}"), value: p });
                    }
                    let p0 = free.evaluate(t, &dx)?;
                    probes += 1;
                    let c = p / p0;
                    if best.as_ref().is_none_or(|b| c < b.c) {
                        best = Some(PositivityBound { c, t, x, probes: 0 });
                    }
                }
            }
        }
    }
    let mut b = best.expect("at least one probe");
    b.probes = probes;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_table_identical_inputs() {
        let v = [1.0, 2.0, 3e-5];
        let t = ratio_table("interior", &v, &v, 0.01).unwrap();
        assert!(t.rows.iter().all(|r| r.ratio == 1.0 && !r.flagged));
        assert_eq!(t.max_deviation, 0.0);
    }

    #[test]
    fn ratio_table_flags_outlier() {
        let f = [1.0, 2.0, 3.0];
        let o = [1.0, 4.0, 3.0];
        let t = ratio_table("exterior", &o, &f, 0.05).unwrap();
        assert!(t.rows[1].flagged && !t.rows[0].flagged && !t.rows[2].flagged);
        assert_eq!(t.max_deviation, 1.0);
        assert!((t.mean_deviation - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ratio_table("x", &o, &f[..2], 0.1).unwrap_err(), Error::LengthMismatch { left: 3, right: 2 });
    }

    #[test]
    fn number_format_has_seventeen_digits() {
        assert_eq!(fmt_num(Some(0.1)), "1.0000000000000001e-1");
        assert_eq!(fmt_num(None), "");
    }

    #[test]
    fn config_rejects_bad_schema() {
        let bad = "schema_version = 2\ndim = 1\n[potential]\nkind = \"square_well\"\nv0 = 2.0\nr = 1.0\n";
        assert!(matches!(ExperimentConfig::from_toml_str(bad), Err(Error::Config(_))));
        let unknown = "schema_version = 1\ndim = 1\ncolour = 3\n[potential]\nkind = \"bump\"\nv0 = 2.0\nr = 1.0\n";
        assert!(matches!(ExperimentConfig::from_toml_str(unknown), Err(Error::Config(_))));
        let ok = "schema_version = 1\ndim = 1\n[potential]\nkind = \"bump\"\nv0 = 2.0\nr = 1.0\n";
        assert!(ExperimentConfig::from_toml_str(ok).is_ok());
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default_well();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        assert_eq!(c.hash().len(), 64);
    }
}
