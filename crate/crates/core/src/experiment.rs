//! Experiment configuration, the subcommand runners behind the binary, and
//! the learning-rate-decay arithmetic.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{run_ensemble, Method};
use crate::error::{Error, Result};
use crate::gibbs::{epsilon_of_s, gaussian_density, gibbs_on_grid, uniform_density};
use crate::grid::{GridPolicy, GridSpec, Resolution};
use crate::morse::analyze;
use crate::objective::catalog;
use crate::pde::{decay_fit, write_snapshots_csv, FpOptions, FpSolver, TimeScheme};
use crate::spectral::{assemble_witten, decay_constant, exp_law_fit, ground_state_check, smallest_eigs};
use crate::verify::{run_criterion, Suite, CRITERIA};

/// a·s + b·e^{−λ_s t} with λ_s = e^{−c/s}.
pub fn idealized_risk(a: f64, b: f64, c: f64, s: f64, t: f64) -> f64 {
    a * s + b * (-(-c / s).exp() * t).exp()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// First t with b·e^{−λ_s t} ≤ fraction·a·s.
pub fn idealized_stationarity_time(a: f64, b: f64, c: f64, s: f64, fraction: f64) -> Result<f64> {
    for (n, v) in [("a", a), ("b", b), ("c", c), ("s", s), ("fraction", fraction)] {
        positive(n, v)?;
    }
    let lambda = (-c / s).exp();
    Ok(((b / (fraction * a * s)).ln() / lambda).max(0.0))
}

/// Iterations k = t/s to rough stationarity of the idealized risk.
pub fn idealized_iterations(a: f64, b: f64, c: f64, s: f64, fraction: f64) -> Result<f64> {
    Ok(idealized_stationarity_time(a, b, c, s, fraction)? / s)
}

/// λ_{s1}/λ_{s2} under λ_s ∝ e^{−2H/s}.
pub fn lambda_ratio_check(barrier: f64, s1: f64, s2: f64) -> f64 {
    crate::spectral::lambda_ratio(barrier, s1, s2)
}

/// (1/λ_s)·log(2C·rho_gap/ε), the time to excess risk ε, zero when already there.
pub fn required_time(s: f64, a: f64, c: f64, rho_gap: f64, epsilon: f64, lambda_s: f64) -> Result<f64> {
    for (n, v) in [("s", s), ("A", a), ("C", c), ("rho_gap", rho_gap), ("epsilon", epsilon), ("lambda_s", lambda_s)] {
        positive(n, v)?;
    }
    let s_max = epsilon / (2.0 * a);
    if s > s_max {
        return Err(Error::Domain(format!("s = {s} exceeds ε/(2A) = {s_max}")));
    }
    Ok(((2.0 * c * rho_gap / epsilon).ln() / lambda_s).max(0.0))
}

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Spectrum,
    Morse,
    Fp,
    DecayStudy,
    Verify,
}

impl std::str::FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "spectrum" => Command::Spectrum,
            "morse" => Command::Morse,
            "fp" => Command::Fp,
            "decay-study" => Command::DecayStudy,
            "verify" => Command::Verify,
            other => return Err(Error::Config(format!("unknown command `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis; ignored when `spacing` is set.
    pub nodes: usize,
    pub spacing: Option<f64>,
    /// Fixed half width per axis instead of a certified box.
    pub half_width: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nodes: 2000, spacing: None, half_width: None }
    }
}

impl GridConfig {
    fn resolution(&self) -> Resolution {
        self.spacing.map_or(Resolution::Nodes(self.nodes), Resolution::Spacing)
    }

    fn fixed(&self, dim: usize) -> Result<Option<GridSpec>> {
        let Some(l) = self.half_width else { return Ok(None) };
        let h = self.spacing.unwrap_or(2.0 * l / (self.nodes as f64 - 1.0));
        Ok(Some(GridSpec::symmetric(&vec![l; dim], h)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub method: Method,
    pub k_max: usize,
    pub n_replicas: usize,
    pub x0: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { method: Method::Sgd, k_max: 200, n_replicas: 1000, x0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDensity {
    Uniform,
    Gaussian,
    /// μ at temperature `warm_s`.
    Gibbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpConfig {
    pub dt: f64,
    pub horizon: f64,
    pub snapshots: usize,
    pub initial: InitialDensity,
    pub mean: Option<Vec<f64>>,
    pub variance: f64,
    pub warm_s: Option<f64>,
    pub scheme: TimeScheme,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 10.0,
            snapshots: 50,
            initial: InitialDensity::Gaussian,
            mean: None,
            variance: 0.05,
            warm_s: None,
            scheme: TimeScheme::Implicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayStudyConfig {
    pub a: f64,
    /// b = b_offset − s.
    pub b_offset: f64,
    pub c: f64,
    pub fraction: f64,
}

impl Default for DecayStudyConfig {
    fn default() -> Self {
        Self { a: 1.0, b_offset: 100.0, c: 0.1, fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suite: Suite,
    /// Criterion ids to run; empty means all.
    pub only: Vec<u32>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { suite: Suite::Fast, only: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub command: Command,
    #[serde(default = "default_field")]
    pub field: String,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub fp: FpConfig,
    #[serde(default)]
    pub decay_study: DecayStudyConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_field() -> String {
    "double_well_tilted".into()
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            version: CONFIG_VERSION,
            command,
            field: default_field(),
            s: Vec::new(),
            seed: 0,
            out: None,
            grid: GridConfig::default(),
            simulate: SimulateConfig::default(),
            fp: FpConfig::default(),
            decay_study: DecayStudyConfig::default(),
            verify: VerifyConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        if self.s.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("every s must be positive".into()));
        }
        Ok(())
    }

    fn s_values(&self, default: &[f64]) -> Vec<f64> {
        if self.s.is_empty() {
            default.to_vec()
        } else {
            self.s.clone()
        }
    }
}

/// One checked invariant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub invariant: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub results: Value,
    pub assertions: Vec<Assertion>,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// Wall-clock seconds per step, kept apart from the report so reports stay reproducible.
pub type Timing = Vec<(String, f64)>;

fn fmt_s(s: f64) -> String {
    format!("{s}")
}

/// Run the configured command, writing artifacts under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path, mut progress: impl FnMut(&str)) -> Result<(RunReport, Timing)> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let mut timing = Timing::new();
    let mut artifacts = Vec::new();
    let mut assertions = Vec::new();
    let clock = std::time::Instant::now();
    let results = match cfg.command {
        Command::Simulate => simulate(cfg, out, &mut artifacts, &mut assertions)?,
        Command::Spectrum => spectrum(cfg, out, &mut artifacts, &mut assertions)?,
        Command::Morse => morse(cfg, out, &mut artifacts, &mut assertions)?,
        Command::Fp => fp(cfg, out, &mut artifacts, &mut assertions)?,
        Command::DecayStudy => decay_study(cfg, out, &mut artifacts, &mut assertions)?,
        Command::Verify => {
            let ids: Vec<u32> =
                if cfg.verify.only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { cfg.verify.only.clone() };
            let mut rows = Vec::new();
            for id in ids {
                let t = std::time::Instant::now();
                let r = run_criterion(id, cfg.verify.suite, cfg.seed);
                timing.push((format!("criterion_{id}"), t.elapsed().as_secs_f64()));
                progress(&r.line());
                assertions.push(Assertion {
                    name: format!("criterion {id}: {}", r.name),
                    invariant: r.invariant.clone(),
                    passed: r.passed,
                    detail: json!({"seed": r.seed, "error": r.error}),
                });
                rows.push(r);
            }
            serde_json::to_value(rows)?
        }
    };
    timing.push(("total".into(), clock.elapsed().as_secs_f64()));
    Ok((RunReport { config: cfg.clone(), results, assertions, artifacts }, timing))
}

fn simulate(cfg: &ExperimentConfig, out: &Path, artifacts: &mut Vec<String>, assertions: &mut Vec<Assertion>) -> Result<Value> {
    let f = catalog(&cfg.field)?;
    let x0 = cfg.simulate.x0.clone().unwrap_or_else(|| vec![1.0; f.dim()]);
    let mut rows = Vec::new();
    for s in cfg.s_values(&[0.1]) {
        let stats = run_ensemble(cfg.simulate.method, &f, s, cfg.simulate.k_max, &x0, cfg.simulate.n_replicas, cfg.seed)?;
        let name = format!("ensemble_s{}.csv", fmt_s(s));
        stats.write_csv(&out.join(&name))?;
        artifacts.push(name);
        let last = *stats.mean_excess_risk.last().unwrap();
        let eps = GridPolicy::gibbs(Resolution::Nodes(cfg.grid.nodes.min(801)))
            .build(&f, s)
            .and_then(|g| epsilon_of_s(&f, s, &g))
            .ok();
        assertions.push(Assertion {
            name: format!("finite excess risk at s = {s}"),
            invariant: "dynamics: ensemble statistics are finite".into(),
            passed: stats.mean_excess_risk.iter().all(|v| v.is_finite()),
            detail: json!({"final_mean_excess_risk": last}),
        });
        rows.push(json!({"s": s, "final_mean_excess_risk": last, "final_std_err": stats.std_err.last(), "epsilon": eps}));
    }
    Ok(json!({ "ensembles": rows, "method": cfg.simulate.method, "x0": x0 }))
}

fn spectrum(cfg: &ExperimentConfig, out: &Path, artifacts: &mut Vec<String>, assertions: &mut Vec<Assertion>) -> Result<Value> {
    let f = catalog(&cfg.field)?;
    let s_values = cfg.s_values(&[0.25, 0.2, 0.15, 0.12, 0.1]);
    let policy = GridPolicy::ground_state(cfg.grid.resolution());
    let mut rows = Vec::new();
    for &s in &s_values {
        let grid = match cfg.grid.fixed(f.dim())? {
            Some(g) => g,
            None => policy.build(&f, s)?,
        };
        let op = assemble_witten(&f, s, &grid)?;
        let spec = smallest_eigs(&op, 3)?;
        let residual = ground_state_check(&op, &spec).ok();
        let name = format!("spectrum_s{}.json", fmt_s(s));
        spec.write_json(&out.join(&name))?;
        artifacts.push(name);
        assertions.push(Assertion {
            name: format!("ground state near zero at s = {s}"),
            invariant: "spectral: the Witten operator has a near-zero ground state".into(),
            passed: residual.is_some(),
            detail: json!({"delta_0": spec.eigenvalues[0], "residual": residual}),
        });
        rows.push(json!({"s": s, "delta": spec.eigenvalues, "lambda_s": spec.lambda_s, "method": spec.method}));
    }
    let mut fit = Value::Null;
    if s_values.len() >= 4 && cfg.grid.half_width.is_none() {
        match exp_law_fit(&f, &s_values, &policy) {
            Ok(law) => {
                std::fs::write(out.join("exp_law_fit.json"), serde_json::to_string_pretty(&law)?)?;
                artifacts.push("exp_law_fit.json".into());
                fit = serde_json::to_value(&law)?;
            }
            Err(e) => fit = json!({ "error": e.to_string() }),
        }
    }
    Ok(json!({ "spectra": rows, "exp_law_fit": fit }))
}

fn morse_grid(cfg: &ExperimentConfig, dim: usize) -> Result<GridSpec> {
    if let Some(g) = cfg.grid.fixed(dim)? {
        return Ok(g);
    }
    let l = if dim == 1 { 3.0 } else { 2.0 };
    let n = if dim == 1 { cfg.grid.nodes.max(601) } else { 161 };
    GridSpec::new((0..dim).map(|_| crate::grid::Axis::new(-l, l, n)).collect())
}

fn morse(cfg: &ExperimentConfig, out: &Path, artifacts: &mut Vec<String>, assertions: &mut Vec<Assertion>) -> Result<Value> {
    let f = catalog(&cfg.field)?;
    let grid = morse_grid(cfg, f.dim())?;
    let report = analyze(&f, &grid)?;
    report.write_json(&out.join("morse.json"))?;
    artifacts.push("morse.json".into());
    let n_finite = report.finite_pairings().count();
    assertions.push(Assertion {
        name: "pairings cover every minimum".into(),
        invariant: "morse: n_saddle = n_min - 1".into(),
        passed: n_finite + 1 == report.minima.len(),
        detail: json!({"minima": report.minima.len(), "finite_pairings": n_finite, "separating_saddles": report.separating_saddles.len()}),
    });
    let barriers: Vec<f64> = report.finite_pairings().filter_map(|p| p.barrier.finite()).collect();
    assertions.push(Assertion {
        name: "barriers nonincreasing".into(),
        invariant: "morse: ordered pairing barriers are nonincreasing".into(),
        passed: barriers.windows(2).all(|w| w[0] >= w[1]),
        detail: json!({ "barriers": barriers }),
    });
    Ok(serde_json::to_value(&report)?)
}

fn initial_density(cfg: &ExperimentConfig, field: &crate::objective::ScalarField, grid: &GridSpec) -> Result<Vec<f64>> {
    match cfg.fp.initial {
        InitialDensity::Uniform => Ok(uniform_density(grid)),
        InitialDensity::Gaussian => {
            let mean = cfg.fp.mean.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
            gaussian_density(grid, &mean, cfg.fp.variance)
        }
        InitialDensity::Gibbs => {
            let warm = cfg.fp.warm_s.ok_or_else(|| Error::Config("fp.initial = \"gibbs\" needs fp.warm_s".into()))?;
            Ok(gibbs_on_grid(field, warm, grid)?.density())
        }
    }
}

fn fp(cfg: &ExperimentConfig, out: &Path, artifacts: &mut Vec<String>, assertions: &mut Vec<Assertion>) -> Result<Value> {
    let f = catalog(&cfg.field)?;
    let s = cfg.s_values(&[0.2])[0];
    let grid_s = cfg.fp.warm_s.map_or(s, |w| w.max(s));
    let grid = match cfg.grid.fixed(f.dim())? {
        Some(g) => g,
        None => GridPolicy::gibbs(cfg.grid.resolution()).build(&f, grid_s)?,
    };
    let rho0 = initial_density(cfg, &f, &grid)?;
    let opts = FpOptions { scheme: cfg.fp.scheme, ..FpOptions::uniform(cfg.fp.dt, cfg.fp.horizon, cfg.fp.snapshots) };
    let solver = FpSolver::new(&f, s, &grid, opts.dt, opts.scheme)?;
    let snaps = solver.evolve(&rho0, &opts.snapshot_times)?;
    write_snapshots_csv(&out.join("fp_snapshots.csv"), &snaps)?;
    artifacts.push("fp_snapshots.csv".into());
    let drift = snaps.iter().map(|sn| (sn.mass - 1.0).abs()).fold(0.0, f64::max);
    assertions.push(Assertion {
        name: "mass conserved".into(),
        invariant: "pde: total mass is conserved to 1e-6 per unit time".into(),
        passed: drift <= 1e-6 * cfg.fp.horizon.max(1.0),
        detail: json!({ "max_mass_drift": drift }),
    });
    let lambda = decay_constant(&f, s, &GridPolicy::ground_state(Resolution::Nodes(2000.min(cfg.grid.nodes.max(200)))))
        .map(|sp| sp.lambda_s)
        .ok();
    let fit = match lambda {
        Some(l) => {
            let fit = decay_fit(&f, s, &rho0, &grid, &opts, l)?;
            fit.write_json(&out.join("decay_fit.json"))?;
            artifacts.push("decay_fit.json".into());
            serde_json::to_value(json!({
                "fitted_rate": fit.fitted_rate, "reference_rate": fit.reference_rate, "r2": fit.fit_r2,
                "inconclusive": fit.inconclusive, "epsilon": fit.epsilon, "risk_prefactor": fit.risk_prefactor, "c_of_s": fit.c_of_s,
            }))?
        }
        None => Value::Null,
    };
    Ok(json!({"s": s, "nodes": grid.len(), "snapshots": snaps.len(), "max_mass_drift": drift, "decay_fit": fit}))
}

fn decay_study(cfg: &ExperimentConfig, out: &Path, artifacts: &mut Vec<String>, assertions: &mut Vec<Assertion>) -> Result<Value> {
    let d = &cfg.decay_study;
    let s_values = cfg.s_values(&[0.1, 0.01, 0.001]);
    let mut w = csv::Writer::from_path(out.join("decay_study.csv"))?;
    w.write_record(["s", "lambda_s", "time", "iterations"])?;
    let mut rows = Vec::new();
    for &s in &s_values {
        let t = idealized_stationarity_time(d.a, d.b_offset - s, d.c, s, d.fraction)?;
        let k = t / s;
        w.write_record([fmt_s(s), format!("{:.10e}", (-d.c / s).exp()), format!("{t:.10e}"), format!("{k:.10e}")])?;
        rows.push(json!({"s": s, "time": t, "iterations": k}));
    }
    w.flush()?;
    artifacts.push("decay_study.csv".into());
    let ks: Vec<f64> = rows.iter().map(|r| r["iterations"].as_f64().unwrap()).collect();
    let ordered: Vec<(f64, f64)> = {
        let mut v: Vec<(f64, f64)> = s_values.iter().copied().zip(ks.iter().copied()).collect();
        v.sort_by(|a, b| b.0.total_cmp(&a.0));
        v
    };
    assertions.push(Assertion {
        name: "iterations grow as s shrinks".into(),
        invariant: "experiment: smaller learning rates need more iterations under lambda_s = exp(-c/s)".into(),
        passed: ordered.windows(2).all(|p| p[1].1 > p[0].1),
        detail: json!({ "iterations": ks }),
    });
    Ok(json!({"a": d.a, "b_offset": d.b_offset, "c": d.c, "fraction": d.fraction, "rows": rows}))
}

/// Write `report.json` and `timing.json` under `out`.
pub fn write_outputs(out: &Path, report: &RunReport, timing: &Timing) -> Result<()> {
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    let t: serde_json::Map<String, Value> = timing.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    std::fs::write(out.join("timing.json"), serde_json::to_string_pretty(&t)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idealized_iteration_counts() {
        let k = |s: f64| idealized_iterations(1.0, 100.0 - s, 0.1, s, 0.1).unwrap();
        // t = e^{c/s}·log(b/(0.1 a s)) evaluated by hand at s = 0.1
        let t = 1f64.exp() * (99.9f64 / 0.01).ln();
        assert!((k(0.1) - t / 0.1).abs() < 1e-9);
        assert!((k(0.1) - 250.0).abs() < 0.05 * 250.0);
        assert!((k(0.001) / 2.5e47).log10().abs() < 0.5);
        assert!((k(0.001) / k(0.1) / 1e45).log10().abs() < 0.5);
        assert!(idealized_risk(1.0, 99.9, 0.1, 0.1, t) <= 0.1 * 0.1 * (1.0 + 1e-9) + 0.1);
    }

    #[test]
    fn constant_rate_comparison_is_about_a_hundred() {
        // λ_s = μ fixed: k_s = log(b/(0.1 a s))/(μ s)
        let k = |s: f64| ((100.0 - s) / (0.1 * s)).ln() / s;
        let ratio = k(0.001) / k(0.1);
        assert!((ratio / 1e2).log10().abs() < 0.5, "{ratio}");
    }

    #[test]
    fn required_time_algebra() {
        let lambda = 0.3;
        let t1 = required_time(0.01, 1.0, 2.0, 1.0, 0.1, lambda).unwrap();
        let t2 = required_time(0.01, 1.0, 2.0, 1.0, 0.2, lambda).unwrap();
        assert!((t1 - t2 - 2f64.ln() / lambda).abs() < 1e-12);
        assert_eq!(required_time(0.01, 1.0, 2.0, 0.1 / 4.0, 0.1, lambda).unwrap(), 0.0);
        assert!(matches!(required_time(0.2, 1.0, 2.0, 1.0, 0.1, lambda), Err(Error::Domain(_))));
        let h = 0.05;
        let ta = required_time(0.1, 1.0, 1.0, 1.0, 0.2, (-2.0 * h / 0.1f64).exp()).unwrap();
        let tb = required_time(0.001, 1.0, 1.0, 1.0, 0.2, (-2.0 * h / 0.001f64).exp()).unwrap();
        assert!((tb / ta / 99f64.exp() - 1.0).abs() < 1e-9);
        assert!((99f64.exp() / 9.889e42 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn config_round_trip_and_strictness() {
        let mut cfg = ExperimentConfig::new(Command::Fp);
        cfg.s = vec![0.2, 0.1];
        cfg.seed = 42;
        cfg.fp.initial = InitialDensity::Gibbs;
        cfg.fp.warm_s = Some(0.3);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let bad = format!("{text}\nunknown_key = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let wrong = text.replace("version = 1", "version = 9");
        assert!(matches!(ExperimentConfig::from_toml(&wrong), Err(Error::Config(_))));
        let minimal = "version = 1\ncommand = \"decay-study\"\n";
        assert_eq!(ExperimentConfig::from_toml(minimal).unwrap().command, Command::DecayStudy);
        let partial = ExperimentConfig::from_toml("version = 1\ncommand = \"verify\"\n[verify]\nonly = [3]\n").unwrap();
        assert_eq!((partial.verify.suite, partial.verify.only), (Suite::Fast, vec![3]));
    }

    #[test]
    fn commands_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(Command::Simulate);
        cfg.field = "quadratic_1d".into();
        cfg.simulate.k_max = 20;
        cfg.simulate.n_replicas = 300;
        cfg.seed = 5;
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        for p in [&a, &b] {
            let (rep, t) = run(&cfg, p, |_| {}).unwrap();
            write_outputs(p, &rep, &t).unwrap();
        }
        for f in ["report.json", "ensemble_s0.1.csv"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn decay_study_and_morse_commands() {
        let dir = tempfile::tempdir().unwrap();
        let (rep, _) = run(&ExperimentConfig::new(Command::DecayStudy), dir.path(), |_| {}).unwrap();
        assert!(rep.all_passed());
        let mut cfg = ExperimentConfig::new(Command::Morse);
        cfg.field = "multiwell_1d_generic".into();
        let (rep, _) = run(&cfg, dir.path(), |_| {}).unwrap();
        assert!(rep.all_passed());
        assert!(dir.path().join("morse.json").exists());
    }
}
