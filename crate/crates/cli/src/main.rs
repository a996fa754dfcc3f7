//! `heatcone`: runs the spectral, evolution, Monte Carlo and asymptotic tools from a
//! TOML configuration and writes CSV and JSON artifacts.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use heatcone_core::asymptotics::{
    a2_coefficient, classify, coefficient_a, global_formula, interior_formula, CoefficientEstimate,
};
use heatcone_core::evolution::free_kernel;
use heatcone_core::harness::{fmt_num, run_experiment, FarField, FormulaKind, Fields, Problem, VerdictReport};
use heatcone_core::stochastic::{bridge_estimate, default_steps};
use heatcone_core::{Discretization, ExperimentConfig, KernelField, SpectralData};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatcone", version, about = "Heat kernels with a compactly supported potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground state: writes spectrum.json and psi.csv.
    Spectrum(Args),
    /// Kernel at the `evolve.points` probes: writes evolve.csv (and snapshots/ on request).
    Evolve(Args),
    /// Brownian-bridge estimates at `mc.points`: writes mc.json.
    Mc(Args),
    /// Exterior coefficient at `coefficients.thetas`: writes coeff_a.json and coeff_a.csv.
    CoeffA(Args),
    /// Asymptotic formula at `formula.points` against the PDE: writes formula.json and formula.csv.
    Formula(Args),
    /// Runs the configured checks; exits 1 when any fails.
    Verify(Args),
    /// Runs the configured checks and prints the report without judging it.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

struct Run {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Args {
    fn load(&self) -> Result<Run> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
            config.mc.seed = Some(seed);
        }
        let out = self
            .out
            .clone()
            .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Run { config, out })
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(dir, name, &s)
}

fn num(x: f64) -> String {
    fmt_num(Some(x))
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|&c| num(c)).collect::<Vec<_>>().join(",")
}

fn x_header(d: usize) -> String {
    if d == 1 {
        "x".into()
    } else {
        (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
    }
}

fn axes(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .flat_map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let m = e.iter().map(|c| -c).collect();
            [e, m]
        })
        .collect()
}

fn spectrum_cmd(run: &Run) -> Result<bool> {
    let problem = Problem::new(&run.config)?;
    let sd = problem.spectral()?;
    let c_far = axes(run.config.dim)
        .into_iter()
        .map(|dir| Ok(FarField { value: sd.cfar(&dir)?, direction: dir }))
        .collect::<heatcone_core::Result<Vec<_>>>()?;
    let record = json!({
        "lambda0": sd.lambda0(),
        "kappa": sd.kappa(),
        "gap": sd.gap(),
        "c_far": c_far,
        "grid": sd.grid(),
        "residual": sd.residual(),
    });
    write_json(&run.out, "spectrum.json", &record)?;
    write(&run.out, "psi.csv", &psi_csv(sd))?;
    println!("lambda0 = {}", num(sd.lambda0()));
    Ok(true)
}

fn psi_csv(sd: &SpectralData) -> String {
    let psi = sd.psi_values();
    let mut out = String::new();
    match sd.grid() {
        Discretization::Line(g) => {
            out.push_str("x,psi\n");
            for (j, p) in psi.iter().enumerate() {
                let _ = writeln!(out, "{},{}", num(g.x(j)), num(*p));
            }
        }
        Discretization::Plane(g) => {
            out.push_str("x1,x2,psi\n");
            for (k, p) in psi.iter().enumerate() {
                let _ = writeln!(out, "{},{}", coords(&g.point(k)), num(*p));
            }
        }
        Discretization::Radial { h, .. } => {
            out.push_str("r,psi\n");
            for (j, p) in psi.iter().enumerate() {
                let _ = writeln!(out, "{},{}", num((j + 1) as f64 * h), num(*p));
            }
        }
    }
    out
}

fn evolve_cmd(run: &Run) -> Result<bool> {
    let cfg = &run.config;
    let points = &cfg.evolve.points;
    if points.is_empty() && !cfg.evolve.dump_snapshots {
        bail!(heatcone_core::Error::Config("evolve needs `evolve.points` or `evolve.dump_snapshots`".into()));
    }
    let problem = Problem::unsolved(cfg)?;
    let times: Vec<f64> = points.iter().map(|p| p.t).collect();
    let t_max = times.iter().cloned().fold(cfg.evolve.t_max.unwrap_or(0.0), f64::max);
    if t_max <= 0.0 {
        bail!(heatcone_core::Error::Config("evolve needs a positive `evolve.t_max` or probe time".into()));
    }
    let kernel = problem.kernel(t_max, &times)?;
    let mut csv = format!("t,{},p\n", x_header(cfg.dim));
    for p in points {
        let _ = writeln!(csv, "{},{},{}", num(p.t), coords(&p.x), num(kernel.evaluate(p.t, &p.x)?));
    }
    write(&run.out, "evolve.csv", &csv)?;
    if cfg.evolve.dump_snapshots {
        dump_snapshots(&run.out.join("snapshots"), &kernel, cfg.dim)?;
    }
    println!("{} probes to t = {}", points.len(), num(kernel.t_max()));
    Ok(true)
}

fn dump_snapshots(dir: &Path, kernel: &KernelField, d: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let nodes = kernel.nodes();
    for (i, &t) in kernel.times().iter().enumerate() {
        let mut csv = format!("t,{},p\n", x_header(d));
        for (x, p) in nodes.iter().zip(kernel.snapshot(i)) {
            let _ = writeln!(csv, "{},{},{}", num(t), coords(x), num(p));
        }
        write(dir, &format!("snapshot_{i:05}.csv"), &csv)?;
    }
    Ok(())
}

fn mc_cmd(run: &Run) -> Result<bool> {
    let cfg = &run.config;
    if cfg.mc.points.is_empty() {
        bail!(heatcone_core::Error::Config("mc needs `mc.points`".into()));
    }
    let problem = Problem::unsolved(cfg)?;
    let seed = cfg.mc.seed.unwrap_or(cfg.seed);
    let mut records = Vec::new();
    for p in &cfg.mc.points {
        let steps = cfg.mc.n_steps.unwrap_or_else(|| default_steps(&problem.v, p.t));
        let e = bridge_estimate(&problem.v, p.t, &p.x, &problem.y, cfg.mc.n_paths, steps, seed)?;
        println!("t = {}, x = {:?}: {} ± {}", p.t, p.x, num(e.mean), num(e.stderr));
        records.push(json!({
            "t": p.t,
            "x": p.x,
            "mean": e.mean,
            "stderr": e.stderr,
            "n_paths": e.n_paths,
            "n_steps": e.n_steps,
            "seed": e.seed,
        }));
    }
    write_json(&run.out, "mc.json", &Value::Array(records))?;
    Ok(true)
}

fn coeff_a_cmd(run: &Run) -> Result<bool> {
    let cfg = &run.config;
    let thetas = &cfg.coefficients.thetas;
    if thetas.is_empty() {
        bail!(heatcone_core::Error::Config("coeff-a needs `coefficients.thetas`".into()));
    }
    let alpha = cfg.alpha();
    let problem = Problem::new(cfg)?;
    let lambda0 = problem.lambda0();
    let opts = cfg.coefficients.options();
    let mut fields = Fields::new(&problem, 10.0, &[], false)?;
    let mut records = Vec::new();
    let mut csv = String::from("theta,value,error_budget,s_max,tail_bound,regime\n");
    for &theta in thetas {
        let est: CoefficientEstimate =
            fields.covering(|f| coefficient_a(&problem.v, &f.kernel, lambda0, theta, &alpha, &problem.y, &opts))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},exterior",
            num(theta),
            num(est.value),
            num(est.error_budget()),
            num(est.s_max),
            num(est.tail_bound)
        );
        records.push(json!({
            "inputs": { "theta": theta, "alpha": alpha, "y": problem.y.as_slice(), "lambda0": lambda0 },
            "value": est.value,
            "error_budget": est.error_budget(),
            "regime": "exterior",
        }));
        println!("a({theta}) = {}", num(est.value));
    }
    write_json(&run.out, "coeff_a.json", &Value::Array(records))?;
    write(&run.out, "coeff_a.csv", &csv)?;
    Ok(true)
}

fn formula_cmd(run: &Run) -> Result<bool> {
    let cfg = &run.config;
    let points = &cfg.formula.points;
    if points.is_empty() {
        bail!(heatcone_core::Error::Config("formula needs `formula.points`".into()));
    }
    let problem = Problem::new(cfg)?;
    let sd = problem.spectral()?;
    let kind = cfg.formula.kind;
    let fopts = cfg.coefficients.formula_options();
    let times: Vec<f64> = points.iter().map(|p| p.t).collect();
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let mut fields = Fields::new(&problem, t_max, &times, kind == FormulaKind::Global)?;
    let (v, y) = (&problem.v, &problem.y);
    let kind_name = match kind {
        FormulaKind::Interior => "interior",
        FormulaKind::Exterior => "exterior",
        FormulaKind::Global => "global",
    };
    let mut records = Vec::new();
    let mut csv = format!("t,{},theta,regime,p_oracle,p_formula,ratio\n", x_header(cfg.dim));
    for p in points {
        let c = classify(p.t, &p.x, y, sd.lambda0(), 0.0)?;
        let p0 = free_kernel(p.t, &p.x.iter().zip(y.as_slice()).map(|(a, b)| a - b).collect::<Vec<_>>())?;
        let (value, budget) = match kind {
            FormulaKind::Interior => (interior_formula(sd, p.t, &p.x, y)?, None),
            FormulaKind::Exterior => {
                let Some(alpha) = c.alpha.clone() else {
                    bail!(heatcone_core::Error::ThetaTooSmall { theta: 0.0, threshold: sd.kappa() });
                };
                let est = fields.covering(|f| coefficient_a(v, &f.kernel, sd.lambda0(), c.theta, &alpha, y, &fopts.coefficient))?;
                (p0 * est.value, Some(p0 * est.error_budget()))
            }
            FormulaKind::Global => {
                let g = fields.covering(|f| global_formula(v, f.remainder()?, sd, p.t, &p.x, y, &fopts))?;
                let alpha = c.alpha.clone().unwrap_or_else(|| axes(cfg.dim).swap_remove(0));
                let a2 = fields.covering(|f| a2_coefficient(v, f.remainder()?, sd, c.theta, &alpha, y, &fopts))?;
                (g.value, Some(p0 * a2.a_beta.error_budget()))
            }
        };
        let oracle = fields.kernel.evaluate(p.t, &p.x)?;
        let ratio = oracle / value;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            num(p.t),
            coords(&p.x),
            num(c.theta),
            c.region.name(),
            num(oracle),
            num(value),
            num(ratio)
        );
        records.push(json!({
            "inputs": { "t": p.t, "x": p.x, "y": y.as_slice(), "kind": kind_name },
            "value": value,
            "error_budget": budget,
            "regime": c.region.name(),
        }));
        println!("t = {}, x = {:?}: {kind_name} {} (pde ratio {})", p.t, p.x, num(value), num(ratio));
    }
    write_json(&run.out, "formula.json", &Value::Array(records))?;
    write(&run.out, "formula.csv", &csv)?;
    Ok(true)
}

fn print_checks(report: &VerdictReport) {
    for c in &report.checks {
        let status = match (&c.skipped, c.pass) {
            (Some(_), _) => "SKIP",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        let detail = match (c.worst_deviation, c.tolerance) {
            (Some(w), Some(t)) => format!(" worst {} tol {}", num(w), num(t)),
            _ => c.skipped.clone().map(|r| format!(" ({r})")).unwrap_or_default(),
        };
        println!("{status} {}{detail}", c.id);
    }
}

fn verify_cmd(run: &Run, judge: bool) -> Result<bool> {
    let experiment = run_experiment(&run.config)?;
    experiment.write(&run.out)?;
    let report = &experiment.report;
    if judge {
        print_checks(report);
        println!("{}", if report.pass { "PASS" } else { "FAIL" });
        Ok(report.pass)
    } else {
        print!("{}", report.to_json());
        Ok(true)
    }
}

fn dispatch(command: &Command) -> Result<bool> {
    match command {
        Command::Spectrum(a) => spectrum_cmd(&a.load()?),
        Command::Evolve(a) => evolve_cmd(&a.load()?),
        Command::Mc(a) => mc_cmd(&a.load()?),
        Command::CoeffA(a) => coeff_a_cmd(&a.load()?),
        Command::Formula(a) => formula_cmd(&a.load()?),
        Command::Verify(a) => verify_cmd(&a.load()?, true),
        Command::Report(a) => verify_cmd(&a.load()?, false),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
