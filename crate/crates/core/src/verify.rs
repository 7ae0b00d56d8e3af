//! The acceptance suite: thirteen numerical criteria, each reported as
//! pass/fail with the figures it compared.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::{
    coupled_deviation, hitting_time_mc, kramers_time, ou_hitting_time, weak_error_study, HittingOptions,
    WeakErrorConfig,
};
use crate::error::{Error, Result};
use crate::experiment::{idealized_iterations, lambda_ratio_check, required_time};
use crate::gibbs::{epsilon_derivative, epsilon_of_s, gibbs_on_grid, normalize, uniform_density};
use crate::grid::{GridPolicy, GridSpec, Resolution};
use crate::morse::{analyze, barrier, SaddleRef};
use crate::noise::{derive_seed, NoiseModel, Sampler};
use crate::objective::{catalog, double_well_tilted, quadratic_1d, quadratic_2d_paper, symmetric_double_well, MULTIWELL};
use crate::pde::{
    csiszar_kullback_check, decay_fit, fp_evolve, gamma_calculus_check, key_inequality_check, log_sobolev_check,
    ou_closed_form, poincare_check, random_perturbed_density, time_to_stationarity, FpOptions, TestFunction,
    TimeScheme,
};
use crate::spectral::{assemble_witten, decay_constant, exp_law_fit, smallest_eigs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Fast,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(Error::Config(format!("unknown suite `{other}` (fast, full)"))),
        }
    }
}

impl Suite {
    /// Monte Carlo sample sizes are multiplied by this.
    fn scale(&self) -> usize {
        match self {
            Suite::Fast => 1,
            Suite::Full => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    /// Module invariant the criterion exercises.
    pub invariant: String,
    pub passed: bool,
    pub seed: Option<u64>,
    pub details: Value,
    /// Set when the criterion could not be evaluated at all.
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!("criterion {:>2} {:<28} {}", self.id, self.name, if self.passed { "PASS" } else { "FAIL" })
    }
}

pub const CRITERIA: [(u32, &str, &str); 13] = [
    (1, "strongly convex gap", "spectral: lambda_s equals the strong convexity constant"),
    (2, "eyring-kramers law", "spectral/morse: log lambda_s linear in 1/s with slope -2 H_f"),
    (3, "lambda ratio arithmetic", "spectral: lambda ratio under the exponential law"),
    (4, "hitting times", "dynamics: Monte Carlo first passage against closed forms"),
    (5, "fokker-planck oracle", "pde: evolution matches the OU closed form, second order in h"),
    (6, "decay consistency", "pde/spectral: L2(1/mu) decay rate equals 2 lambda_s"),
    (7, "weak error order", "dynamics: SGD is a weak order-1 approximation of the SDE"),
    (8, "epsilon laws", "gibbs: epsilon(s) increasing, closed forms, epsilon <= A s"),
    (9, "morse structure", "morse: minima count, n_saddle = n_min - 1, ordering, degeneracy"),
    (10, "functional inequalities", "pde: Bakry-Emery, Poincare, key, log-Sobolev, Csiszar-Kullback"),
    (11, "coupling bounds", "dynamics: Gronwall bound and sqrt(s) deviation scaling"),
    (12, "decay-study arithmetic", "experiment: idealized risk iteration counts, warm start"),
    (13, "reproducibility", "all: identical output for identical seeds"),
];

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

/// Run one criterion; failures to evaluate are reported, not propagated.
pub fn run_criterion(id: u32, suite: Suite, seed: u64) -> CriterionResult {
    let (_, name, invariant) = CRITERIA.iter().copied().find(|c| c.0 == id).unwrap_or((id, "unknown", ""));
    let child = derive_seed(seed, id as u64);
    let outcome = match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(suite, child),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(suite, child),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(child),
        11 => criterion_11(suite, child),
        12 => criterion_12(),
        13 => criterion_13(child),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    };
    let uses_seed = matches!(id, 4 | 7 | 10 | 11 | 13);
    let (passed, details, error) = match outcome {
        Ok((p, d)) => (p, d, None),
        Err(e) => (false, Value::Null, Some(e.to_string())),
    };
    CriterionResult {
        id,
        name: name.to_string(),
        invariant: invariant.to_string(),
        passed,
        seed: uses_seed.then_some(child),
        details,
        error,
    }
}

type Outcome = Result<(bool, Value)>;

fn criterion_1() -> Outcome {
    let f = quadratic_1d(1.0);
    let grid = GridSpec::line(-8.0, 8.0, 2000)?;
    let mut rows = Vec::new();
    let mut ok = true;
    for s in [0.05, 0.1, 0.2] {
        let spec = smallest_eigs(&assemble_witten(&f, s, &grid)?, 3)?;
        let pass = within(spec.lambda_s, 1.0, 0.02);
        ok &= pass;
        rows.push(json!({"field": "quadratic_1d", "s": s, "lambda_s": spec.lambda_s, "target": 1.0, "pass": pass}));
    }
    let f2 = quadratic_2d_paper();
    for s in [0.05, 0.1] {
        let spec = decay_constant(&f2, s, &GridPolicy::ground_state(Resolution::Spacing(0.1)))?;
        let pass = within(spec.lambda_s, 0.05, 0.03);
        ok &= pass;
        rows.push(json!({"field": "quadratic_2d_paper", "s": s, "lambda_s": spec.lambda_s, "target": 0.05, "pass": pass}));
    }
    Ok((ok, json!({ "rows": rows })))
}

fn criterion_2() -> Outcome {
    let f = double_well_tilted();
    let s_values = [0.25, 0.2, 0.15, 0.12, 0.1];
    let fit = exp_law_fit(&f, &s_values, &GridPolicy::ground_state(Resolution::Nodes(2000)))?;
    let report = analyze(&f, &GridSpec::line(-3.0, 3.0, 1201)?)?;
    let h = barrier(&report)?;
    let gamma = report.pairings[1].gamma.ok_or_else(|| Error::Domain("missing prefactor".into()))?;
    let slope_target = -2.0 * h;
    let slope_ok = within(fit.slope, slope_target, 0.05);
    let intercept_target = (gamma / 2.0).ln();
    let prefactor_ratio = (fit.intercept - intercept_target).exp();
    let intercept_ok = (prefactor_ratio - 1.0).abs() <= 0.2;
    Ok((
        slope_ok && intercept_ok,
        json!({
            "s_values": s_values,
            "lambda_values": fit.lambda_values,
            "slope": fit.slope,
            "slope_target": slope_target,
            "barrier": h,
            "intercept": fit.intercept,
            "intercept_target": intercept_target,
            "prefactor_ratio": prefactor_ratio,
            "gamma": gamma,
            "r2": fit.r2,
            "slope_pass": slope_ok,
            "intercept_pass": intercept_ok,
        }),
    ))
}

fn criterion_3() -> Outcome {
    let ratio = lambda_ratio_check(0.05, 0.1, 0.001);
    let target = 9.889e42;
    let pass = within(ratio, target, 1e-3);
    Ok((pass, json!({"ratio": ratio, "target": target})))
}

fn criterion_4(suite: Suite, seed: u64) -> Outcome {
    let n = 10_000 * suite.scale();
    let ou = quadratic_1d(1.0);
    let opts = HittingOptions { n_replicas: n, dt: 1e-3, seed, max_time: 1e3, bridge: true };
    let mc = hitting_time_mc(&ou, 0.5, 0.0, 1.0, &opts)?;
    let exact = ou_hitting_time(1.0, 1.0, 0.5);
    let ou_ok = !mc.inconclusive && within(mc.mean, exact, 0.15);

    let dw = double_well_tilted();
    let report = analyze(&dw, &GridSpec::line(-3.0, 3.0, 1201)?)?;
    let pair = &report.pairings[1];
    let SaddleRef::Point(saddle) = &pair.saddle else {
        return Err(Error::Domain("double well lost its saddle".into()));
    };
    let (xb, xc) = (pair.minimum.location[0], saddle.location[0]);
    let kramers = kramers_time(&dw, xb, xc, 0.2)?;
    let opts = HittingOptions { seed: derive_seed(seed, 1), ..opts };
    let esc = hitting_time_mc(&dw, 0.2, xb, xc, &opts)?;
    let dw_ok = !esc.inconclusive && within(esc.mean, kramers, 0.2);
    Ok((
        ou_ok && dw_ok,
        json!({
            "ou": {"mc_mean": mc.mean, "std_err": mc.std_err, "closed_form": exact, "censored": mc.censored, "pass": ou_ok},
            "double_well": {"mc_mean": esc.mean, "std_err": esc.std_err, "kramers_time": kramers, "x_min": xb, "x_saddle": xc, "censored": esc.censored, "pass": dw_ok},
            "n_paths": n,
        }),
    ))
}

/// sup-norm error of the evolution against the closed form on `nodes` points at `times`.
fn ou_errors(nodes: usize, times: &[f64]) -> Result<Vec<f64>> {
    let (theta, s, x0, t0) = (1.0, 0.5, 1.0, 0.25);
    let f = quadratic_1d(theta);
    let grid = GridSpec::line(-8.0, 8.0, nodes)?;
    let mut rho0 = ou_closed_form(theta, s, x0, t0, &grid)?.density;
    normalize(&grid, &mut rho0)?;
    let opts = FpOptions { dt: 1e-3, snapshot_times: times.to_vec(), scheme: TimeScheme::Implicit };
    let snaps = fp_evolve(&f, s, &rho0, &grid, &opts)?;
    snaps
        .iter()
        .map(|sn| {
            let exact = ou_closed_form(theta, s, x0, t0 + sn.time, &grid)?;
            Ok(sn.density.iter().zip(&exact.density).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let times = [0.5, 1.0, 2.0];
    let fine = ou_errors(2000, &times)?;
    let sup_ok = fine.iter().all(|e| *e <= 1e-3);
    let coarse = ou_errors(1000, &[1.0])?[0];
    let finer = ou_errors(1999, &[1.0])?[0];
    let ratio = coarse / finer;
    let ratio_ok = (3.0..=5.0).contains(&ratio);
    Ok((
        sup_ok && ratio_ok,
        json!({"times": times, "sup_errors": fine, "refinement_ratio": ratio, "errors_h_and_h_over_2": [coarse, finer]}),
    ))
}

fn criterion_6() -> Outcome {
    let f = double_well_tilted();
    let s = 0.2;
    let spec = decay_constant(&f, s, &GridPolicy::ground_state(Resolution::Nodes(2000)))?;
    let grid = GridPolicy::gibbs(Resolution::Nodes(2000)).build(&f, s)?;
    let rho0 = crate::gibbs::gaussian_density(&grid, &[0.8], 0.05)?;
    let fit = decay_fit(&f, s, &rho0, &grid, &FpOptions::uniform(0.01, 40.0, 200), spec.lambda_s)?;
    let pass = !fit.inconclusive && within(fit.fitted_rate, 2.0 * spec.lambda_s, 0.1);
    Ok((
        pass,
        json!({"fitted_rate": fit.fitted_rate, "reference_rate": fit.reference_rate, "r2": fit.fit_r2, "window": [fit.window.0, fit.window.1], "c_of_s": fit.c_of_s, "risk_prefactor": fit.risk_prefactor}),
    ))
}

fn criterion_7(suite: Suite, seed: u64) -> Outcome {
    let f = quadratic_1d(1.0);
    let cfg = WeakErrorConfig {
        s_values: vec![0.2, 0.1, 0.05, 0.025],
        horizon: 2.0,
        n_replicas: 100_000 * suite.scale(),
        dt_ref: 0.025 / 20.0,
        x0: vec![1.0],
        seed,
        zero_noise: false,
    };
    let study = weak_error_study(&f, &cfg)?;
    let pass = !study.inconclusive && (0.8..=1.2).contains(&study.order);
    Ok((pass, serde_json::to_value(&study)?))
}

fn criterion_8() -> Outcome {
    let s_values = [0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5];
    let mut ok = true;
    let mut rows = Vec::new();
    let confining = ["quadratic_1d", "quadratic_2d_paper"].iter().chain(MULTIWELL.iter()).chain(["ring_1saddle"].iter());
    for name in confining {
        let f = catalog(name)?;
        let s_max = *s_values.last().unwrap();
        let policy = if f.dim() == 1 { GridPolicy::gibbs(Resolution::Nodes(4001)) } else { GridPolicy::gibbs(Resolution::Nodes(301)) };
        let grid = policy.build(&f, s_max)?;
        let eps: Vec<f64> = s_values.iter().map(|&s| epsilon_of_s(&f, s, &grid)).collect::<Result<_>>()?;
        let increasing = eps.windows(2).all(|w| w[1] > w[0]);
        // ε(s) ≤ A s with A the largest ε′ on a fine sweep of (0, S]
        let sweep: Vec<f64> = (1..=40).map(|k| s_max * k as f64 / 40.0).collect();
        let a = sweep.iter().map(|&s| epsilon_derivative(&f, s, &grid)).collect::<Result<Vec<f64>>>()?;
        let a = a.into_iter().fold(0.0, f64::max);
        let linear = s_values.iter().zip(&eps).all(|(s, e)| *e <= a * s * (1.0 + 1e-9));
        let closed = match *name {
            "quadratic_1d" => Some(s_values.iter().zip(&eps).all(|(s, e)| (e - s / 4.0).abs() <= 1e-4)),
            "quadratic_2d_paper" => Some(s_values.iter().zip(&eps).all(|(s, e)| (e - s / 2.0).abs() <= 1e-4)),
            _ => None,
        };
        let pass = increasing && linear && closed.unwrap_or(true);
        ok &= pass;
        rows.push(json!({"field": name, "epsilon": eps, "a": a, "increasing": increasing, "below_a_s": linear, "closed_form": closed, "pass": pass}));
    }
    Ok((ok, json!({"s_values": s_values, "fields": rows})))
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut rows = Vec::new();
    for name in MULTIWELL {
        let f = catalog(name)?;
        let grid = if f.dim() == 1 {
            GridSpec::line(-3.0, 3.0, 1201)?
        } else {
            GridSpec::rect((-2.0, 2.0, 161), (-2.0, 2.0, 161))?
        };
        let rep = analyze(&f, &grid)?;
        let finite: Vec<f64> = rep.finite_pairings().filter_map(|p| p.barrier.finite()).collect();
        let count_ok = finite.len() + 1 == rep.minima.len();
        let ordered = finite.windows(2).all(|w| w[0] >= w[1]);
        let mut pass = count_ok && ordered;
        let mut extra = json!(null);
        if *name == "nonconvex_2d_paper" {
            let g = &rep.pairings[0].minimum.location;
            let quadrant = g[0] > 0.0 && g[1] < 0.0;
            pass &= rep.minima.len() == 4 && quadrant;
            extra = json!({"global_minimum": g, "bottom_right": quadrant});
        }
        ok &= pass;
        rows.push(json!({
            "field": name,
            "minima": rep.minima.len(),
            "separating_saddles": rep.separating_saddles.len(),
            "finite_pairings": finite.len(),
            "barriers": finite,
            "generic": rep.generic,
            "extra": extra,
            "pass": pass,
        }));
    }
    let sym = analyze(&symmetric_double_well(), &GridSpec::line(-3.0, 3.0, 1201)?)?;
    let degenerate = !sym.generic && sym.pairings.iter().skip(1).all(|p| p.barrier_interval.is_some());
    ok &= degenerate;
    Ok((ok, json!({"fields": rows, "symmetric_double_well_degenerate": degenerate})))
}

fn criterion_10(seed: u64) -> Outcome {
    let mut sampler = Sampler::new(seed);
    // Bakry–Émery on the quadratics
    let g1 = GridSpec::line(-4.0, 4.0, 401)?;
    let g2 = GridSpec::rect((-4.0, 4.0, 41), (-4.0, 4.0, 41))?;
    let mut be_min = f64::INFINITY;
    let mut be_ok = true;
    for (f, g) in [(quadratic_1d(1.0), &g1), (quadratic_2d_paper(), &g2)] {
        let d = f.dim();
        let lo = vec![-2.0; d];
        let hi = vec![2.0; d];
        let fns: Vec<TestFunction> = (0..20)
            .map(|k| if k % 2 == 0 { TestFunction::random_quadratic(d, &mut sampler) } else { TestFunction::random_bumps(&lo, &hi, &mut sampler) })
            .collect();
        for r in gamma_calculus_check(&f, 0.1, &fns, g) {
            be_min = be_min.min(r.min_margin);
            be_ok &= r.curvature_holds == Some(true);
        }
    }

    let dw = double_well_tilted();
    let s = 0.2;
    let lambda = decay_constant(&dw, s, &GridPolicy::ground_state(Resolution::Nodes(2000)))?.lambda_s;
    let grid = GridPolicy::gibbs(Resolution::Nodes(4001)).build(&dw, s)?;
    let fns: Vec<TestFunction> = (0..20).map(|_| TestFunction::random_bumps(&[-2.0], &[2.0], &mut sampler)).collect();
    let poincare = poincare_check(&dw, s, lambda, &fns, &grid)?;
    let poincare_ok = poincare.iter().all(|m| m.margin >= -1e-6 * m.rhs);
    let key = key_inequality_check(&dw, s, &fns, &grid)?;
    let key_ok = key.iter().all(|m| m.margin >= -1e-6 * m.rhs.abs().max(1e-300));

    let mu_dw = gibbs_on_grid(&dw, s, &grid)?;
    let mut ck_ok = true;
    let mut ck_min = f64::INFINITY;
    for _ in 0..20 {
        let rho = random_perturbed_density(&mu_dw, &mut sampler)?;
        let m = csiszar_kullback_check(&rho, &mu_dw)?;
        ck_min = ck_min.min(m.margin);
        ck_ok &= m.margin >= 0.0;
    }

    let ou = quadratic_1d(1.0);
    let ou_grid = GridSpec::line(-5.0, 5.0, 2001)?;
    let mu_ou = gibbs_on_grid(&ou, s, &ou_grid)?;
    let mut lsi_ok = true;
    let mut lsi_min_rel = f64::INFINITY;
    for _ in 0..20 {
        let rho = random_perturbed_density(&mu_ou, &mut sampler)?;
        let m = log_sobolev_check(&rho, &mu_ou, 1.0)?;
        lsi_min_rel = lsi_min_rel.min(m.margin / m.rhs);
        lsi_ok &= m.margin >= -crate::pde::ENTROPY_TOLERANCE * m.rhs;
    }

    let eq = poincare_check(&ou, s, 1.0, &[TestFunction::Linear(vec![1.0])], &ou_grid)?[0];
    let eq_ok = eq.margin.abs() <= 1e-4 * eq.rhs;
    let pass = be_ok && poincare_ok && key_ok && ck_ok && lsi_ok && eq_ok;
    Ok((
        pass,
        json!({
            "bakry_emery": {"min_margin": be_min, "pass": be_ok},
            "poincare": {"lambda_s": lambda, "min_margin": poincare.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min), "pass": poincare_ok},
            "key_inequality": {"min_margin": key.iter().map(|m| m.margin).fold(f64::INFINITY, f64::min), "pass": key_ok},
            "csiszar_kullback": {"min_margin": ck_min, "pass": ck_ok},
            "log_sobolev": {"min_relative_margin": lsi_min_rel, "pass": lsi_ok},
            "poincare_equality_ou": {"lhs": eq.lhs, "rhs": eq.rhs, "pass": eq_ok},
        }),
    ))
}

fn criterion_11(suite: Suite, seed: u64) -> Outcome {
    let f = quadratic_1d(1.0);
    let n = 100 * suite.scale();
    let dt = 0.0025;
    let horizon = 2.0;
    let mut holds = 0usize;
    let mut mean_dev = std::collections::BTreeMap::new();
    for s in [0.2, 0.1, 0.025] {
        let mut sum = 0.0;
        for r in 0..n as u64 {
            let rep = coupled_deviation(&f, s, horizon, dt, &NoiseModel::new(seed, r))?;
            holds += rep.bound_satisfied as usize;
            sum += rep.sup_deviation;
        }
        mean_dev.insert(format!("{s}"), sum / n as f64);
    }
    let ratio = mean_dev["0.1"] / mean_dev["0.025"];
    let bound_ok = holds == 3 * n;
    let ratio_ok = (1.5..=2.7).contains(&ratio);
    Ok((
        bound_ok && ratio_ok,
        json!({"runs": 3 * n, "bound_held": holds, "mean_sup_deviation": mean_dev, "ratio_0.1_over_0.025": ratio}),
    ))
}

fn criterion_12() -> Outcome {
    let k = |s: f64| idealized_iterations(1.0, 100.0 - s, 0.1, s, 0.1);
    let (k1, k3) = (k(0.1)?, k(0.001)?);
    let ratio = k3 / k1;
    let k1_ok = within(k1, 250.0, 0.05);
    let k3_ok = (k3 / 2.5e47).log10().abs() <= 0.5;
    let ratio_ok = (ratio / 1e45).log10().abs() <= 0.5;
    let t_ratio = required_time(0.1, 1.0, 1.0, 1.0, 0.2, (-2.0 * 0.05 / 0.1f64).exp())?
        / required_time(0.001, 1.0, 1.0, 1.0, 0.2, (-2.0 * 0.05 / 0.001f64).exp())?;
    let e99 = 1.0 / t_ratio;
    let e99_ok = within(e99, 9.889e42, 1e-3);

    let dw = double_well_tilted();
    let grid = GridPolicy::gibbs(Resolution::Nodes(2000)).build(&dw, 0.2)?;
    let warm = gibbs_on_grid(&dw, 0.2, &grid)?.density();
    let cold = uniform_density(&grid);
    let (delta, dt, horizon) = (0.1, 0.01, 400.0);
    let tw = time_to_stationarity(&dw, 0.1, &warm, &grid, delta, dt, horizon)?;
    let tc = time_to_stationarity(&dw, 0.1, &cold, &grid, delta, dt, horizon)?;
    let warm_ok = match (tw.time, tc.time) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    Ok((
        k1_ok && k3_ok && ratio_ok && e99_ok && warm_ok,
        json!({
            "k_0.1": k1, "k_0.001": k3, "ratio": ratio,
            "time_ratio_e99": e99,
            "warm_start_time": tw.time, "cold_start_time": tc.time, "cold_censored": tc.censored,
            "pass": {"k_0.1": k1_ok, "k_0.001": k3_ok, "ratio": ratio_ok, "e99": e99_ok, "warm_start": warm_ok},
        }),
    ))
}

fn criterion_13(seed: u64) -> Outcome {
    let run = || -> Result<String> {
        let ou = quadratic_1d(1.0);
        let opts = HittingOptions { n_replicas: 500, dt: 1e-3, seed, max_time: 1e3, bridge: true };
        let hit = hitting_time_mc(&ou, 0.5, 0.0, 1.0, &opts)?;
        let weak = weak_error_study(
            &ou,
            &WeakErrorConfig { s_values: vec![0.2, 0.1], horizon: 1.0, n_replicas: 2000, dt_ref: 0.005, x0: vec![1.0], seed, zero_noise: false },
        )?;
        let ens = crate::dynamics::run_ensemble(crate::dynamics::Method::Sgd, &ou, 0.1, 50, &[1.0], 1000, seed)?;
        let coupling = coupled_deviation(&ou, 0.1, 2.0, 0.01, &NoiseModel::new(seed, 3))?;
        Ok(serde_json::to_string(&json!({"hit": hit, "weak": weak, "ensemble": ens, "coupling": coupling}))?)
    };
    let a = run()?;
    let b = run()?;
    let same = a == b;
    Ok((same, json!({"bytes": a.len(), "identical": same})))
}

/// All criteria in order.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| run_criterion(c.0, suite, seed)).collect()
}
