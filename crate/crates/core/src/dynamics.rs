//! Discrete optimizers, Euler–Maruyama for dX = −∇f dt + √s dW, coupling
//! bounds, weak-error studies and first-passage Monte Carlo.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::noise::{stream, NoiseModel};
use crate::objective::ScalarField;

/// Iterates with a norm above this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Replicas per parallel work unit; partial sums are combined in chunk order.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gd,
    Sgd,
    Sgld,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Method::Gd),
            "sgd" => Ok(Method::Sgd),
            "sgld" => Ok(Method::Sgld),
            other => Err(Error::Config(format!("unknown method `{other}` (gd, sgd, sgld)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub objective_values: Vec<f64>,
}

impl Trajectory {
    fn start(x0: &[f64], f0: f64) -> Self {
        Self { times: vec![0.0], states: vec![x0.to_vec()], objective_values: vec![f0] }
    }

    fn push(&mut self, t: f64, x: &[f64], f: f64) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.objective_values.push(f);
    }
}

fn check_state(x: &[f64], last: &[f64], step: usize, replica: Option<u64>) -> Result<()> {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    if !n2.is_finite() || n2.sqrt() > DIVERGENCE_NORM {
        return Err(Error::Divergence { step, replica, last_finite: last.to_vec() });
    }
    Ok(())
}

fn check_dim(field: &ScalarField, x0: &[f64]) -> Result<()> {
    if x0.len() != field.dim() {
        return Err(Error::Config(format!("x0 has {} coordinates, field is {}D", x0.len(), field.dim())));
    }
    Ok(())
}

/// One step of the chosen recursion, in place. `xi` is the step's noise vector.
#[inline]
fn discrete_step(method: Method, s: f64, x: &mut [f64], g: &[f64], xi: &[f64]) {
    let rs = s.sqrt();
    for i in 0..x.len() {
        x[i] = match method {
            Method::Gd => x[i] - s * g[i],
            Method::Sgd => x[i] - s * g[i] - s * xi[i],
            Method::Sgld => x[i] - s * g[i] + rs * xi[i],
        };
    }
}

/// x_{k+1} = x_k − s∇f(x_k) − sξ_k (sgd), without noise (gd), or + √s ξ_k (sgld).
pub fn run_discrete(
    method: Method,
    field: &ScalarField,
    s: f64,
    k_max: usize,
    x0: &[f64],
    noise: &NoiseModel,
) -> Result<Trajectory> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("learning rate must be positive, got {s}")));
    }
    check_dim(field, x0)?;
    let d = field.dim();
    let mut x = x0.to_vec();
    let mut last = x.clone();
    let mut g = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut traj = Trajectory::start(&x, field.value(&x));
    for k in 0..k_max {
        field.gradient_into(&x, &mut g);
        noise.fill(k as u64, &mut xi);
        discrete_step(method, s, &mut x, &g, &xi);
        check_state(&x, &last, k + 1, Some(noise.replica))?;
        last.copy_from_slice(&x);
        traj.push((k + 1) as f64 * s, &x, field.value(&x));
    }
    Ok(traj)
}

fn check_sde_step(s: f64, dt: f64) -> Result<()> {
    if s < 0.0 || !(dt > 0.0) {
        return Err(Error::Config(format!("need s ≥ 0 and dt > 0, got s = {s}, dt = {dt}")));
    }
    if s > 0.0 && dt > s / 10.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("dt = {dt} must not exceed s/10 = {}", s / 10.0)));
    }
    Ok(())
}

/// X_{t+dt} = X_t − ∇f(X_t)dt + √s ΔW with ΔW ~ N(0, dt I).
pub fn euler_maruyama(
    field: &ScalarField,
    s: f64,
    dt: f64,
    horizon: f64,
    x0: &[f64],
    noise: &NoiseModel,
) -> Result<Trajectory> {
    check_sde_step(s, dt)?;
    check_dim(field, x0)?;
    let d = field.dim();
    let steps = (horizon / dt).round() as usize;
    let amp = (s * dt).sqrt();
    let mut x = x0.to_vec();
    let mut last = x.clone();
    let mut g = vec![0.0; d];
    let mut traj = Trajectory::start(&x, field.value(&x));
    for j in 0..steps {
        field.gradient_into(&x, &mut g);
        for i in 0..d {
            x[i] += -g[i] * dt + amp * noise.normal(j as u64, i as u64);
        }
        check_state(&x, &last, j + 1, Some(noise.replica))?;
        last.copy_from_slice(&x);
        traj.push((j + 1) as f64 * dt, &x, field.value(&x));
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub s: f64,
    pub times: Vec<f64>,
    pub mean_excess_risk: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_replicas: usize,
}

impl EnsembleStats {
    /// Columns `k, t, mean_excess_risk, std_err`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "t", "mean_excess_risk", "std_err"])?;
        for k in 0..self.times.len() {
            w.write_record([
                k.to_string(),
                format!("{:.10e}", self.times[k]),
                format!("{:.10e}", self.mean_excess_risk[k]),
                format!("{:.10e}", self.std_err[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum and sum of squares per index, combined in a fixed order.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { sum: vec![0.0; n], sq: vec![0.0; n] }
    }

    #[inline]
    fn add(&mut self, k: usize, v: f64) {
        self.sum[k] += v;
        self.sq[k] += v * v;
    }

    fn merge(mut self, other: &Moments) -> Self {
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sq[k] += other.sq[k];
        }
        self
    }

    /// Mean and standard error of the mean.
    fn finish(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let nf = n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let se = self
            .sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = ((q - nf * m * m) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            })
            .collect();
        (mean, se)
    }
}

/// Run `n` replicas in fixed-size chunks and reduce their partial results in chunk order.
fn chunked<T, F>(n: usize, init: impl Fn() -> T + Sync, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut T, u64) -> Result<()> + Sync,
{
    let chunks: Vec<(usize, usize)> = (0..n).step_by(CHUNK).map(|a| (a, (a + CHUNK).min(n))).collect();
    chunks
        .par_iter()
        .map(|&(a, b)| {
            let mut acc = init();
            for r in a..b {
                body(&mut acc, r as u64)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Mean excess risk f(x_k) − f* over `n_replicas` replicas seeded `(base_seed, r)`.
pub fn run_ensemble(
    method: Method,
    field: &ScalarField,
    s: f64,
    k_max: usize,
    x0: &[f64],
    n_replicas: usize,
    base_seed: u64,
) -> Result<EnsembleStats> {
    if n_replicas < 2 {
        return Err(Error::Config("an ensemble needs at least 2 replicas".into()));
    }
    if !(s > 0.0) {
        return Err(Error::Domain(format!("learning rate must be positive, got {s}")));
    }
    check_dim(field, x0)?;
    let fstar = field
        .minimum_value()
        .ok_or_else(|| Error::Config(format!("{} declares no minimizer; f* unknown", field.name())))?;
    let d = field.dim();
    let parts = chunked(
        n_replicas,
        || Moments::new(k_max + 1),
        |acc, r| {
            let noise = NoiseModel::new(base_seed, r);
            let mut x = x0.to_vec();
            let mut last = x.clone();
            let mut g = vec![0.0; d];
            let mut xi = vec![0.0; d];
            acc.add(0, field.value(&x) - fstar);
            for k in 0..k_max {
                field.gradient_into(&x, &mut g);
                noise.fill(k as u64, &mut xi);
                discrete_step(method, s, &mut x, &g, &xi);
                check_state(&x, &last, k + 1, Some(r))?;
                last.copy_from_slice(&x);
                acc.add(k + 1, field.value(&x) - fstar);
            }
            Ok(())
        },
    )?;
    let total = parts.iter().skip(1).fold(parts[0].clone(), |a, b| a.merge(b));
    let (mean, se) = total.finish(n_replicas);
    Ok(EnsembleStats {
        s,
        times: (0..=k_max).map(|k| k as f64 * s).collect(),
        mean_excess_risk: mean,
        std_err: se,
        n_replicas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorConfig {
    pub s_values: Vec<f64>,
    pub horizon: f64,
    pub n_replicas: usize,
    pub dt_ref: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    /// Drop the noise from both SGD and the SDE.
    #[serde(default)]
    pub zero_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorStudy {
    pub s_values: Vec<f64>,
    /// max_k |Ê f(x_k) − Ê f(X(ks))|.
    pub errors: Vec<f64>,
    /// Monte Carlo standard error at the maximising k.
    pub std_errs: Vec<f64>,
    pub order: f64,
    /// Some error does not exceed three standard errors.
    pub inconclusive: bool,
}

/// Weak error of SGD against the SDE with common random numbers.
///
/// For each `s` the SDE dX = −∇f dt + √s dW runs on the fine grid `dt_ref`
/// and SGD uses ξ_k = −(W((k+1)s) − W(ks))/√s built from the same increments.
pub fn weak_error_study(field: &ScalarField, cfg: &WeakErrorConfig) -> Result<WeakErrorStudy> {
    check_dim(field, &cfg.x0)?;
    if cfg.s_values.len() < 2 || cfg.n_replicas < 2 {
        return Err(Error::Config("weak_error_study needs ≥ 2 step sizes and ≥ 2 replicas".into()));
    }
    let s_min = cfg.s_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if cfg.dt_ref > s_min / 20.0 * (1.0 + 1e-12) {
        return Err(Error::Config(format!("dt_ref = {} exceeds min(s)/20", cfg.dt_ref)));
    }
    let mut blocks = Vec::with_capacity(cfg.s_values.len());
    for &s in &cfg.s_values {
        if let Some(l) = field.lipschitz() {
            if s > 1.0 / l {
                return Err(Error::Config(format!("s = {s} exceeds 1/L = {}", 1.0 / l)));
            }
        }
        let m = s / cfg.dt_ref;
        if (m - m.round()).abs() > 1e-9 * m {
            return Err(Error::Config(format!("s = {s} is not a multiple of dt_ref = {}", cfg.dt_ref)));
        }
        blocks.push(m.round() as usize);
    }
    let d = field.dim();
    let n_s = cfg.s_values.len();
    let n_fine = (cfg.horizon / cfg.dt_ref).round() as usize;
    let k_max: Vec<usize> = blocks.iter().map(|m| n_fine / m).collect();
    let amp = cfg.dt_ref.sqrt();
    let parts = chunked(
        cfg.n_replicas,
        || k_max.iter().map(|k| Moments::new(k + 1)).collect::<Vec<_>>(),
        |acc, r| {
            let noise = if cfg.zero_noise { NoiseModel::zero() } else { NoiseModel::new(cfg.seed, r) };
            let mut sde: Vec<Vec<f64>> = vec![cfg.x0.clone(); n_s];
            let mut sgd: Vec<Vec<f64>> = vec![cfg.x0.clone(); n_s];
            let mut wsum: Vec<Vec<f64>> = vec![vec![0.0; d]; n_s];
            let mut g = vec![0.0; d];
            let mut dw = vec![0.0; d];
            for j in 0..n_fine {
                for (i, v) in dw.iter_mut().enumerate() {
                    *v = amp * noise.normal(j as u64, i as u64);
                }
                let step = j + 1;
                for b in 0..n_s {
                    let s = cfg.s_values[b];
                    let rs = s.sqrt();
                    let x = &mut sde[b];
                    field.gradient_into(x, &mut g);
                    for i in 0..d {
                        x[i] += -g[i] * cfg.dt_ref + rs * dw[i];
                        wsum[b][i] += dw[i];
                    }
                    if step % blocks[b] != 0 {
                        continue;
                    }
                    let y = &mut sgd[b];
                    field.gradient_into(y, &mut g);
                    for i in 0..d {
                        // −sξ_k = √s ΔW
                        y[i] += -s * g[i] + rs * wsum[b][i];
                        wsum[b][i] = 0.0;
                    }
                    check_state(y, &cfg.x0, step / blocks[b], Some(r))?;
                    check_state(&sde[b], &cfg.x0, step, Some(r))?;
                    acc[b].add(step / blocks[b], field.value(&sgd[b]) - field.value(&sde[b]));
                }
            }
            Ok(())
        },
    )?;
    let mut errors = Vec::with_capacity(n_s);
    let mut std_errs = Vec::with_capacity(n_s);
    let mut inconclusive = false;
    for b in 0..n_s {
        let total = parts.iter().skip(1).fold(parts[0][b].clone(), |a, p| a.merge(&p[b]));
        let (mean, se) = total.finish(cfg.n_replicas);
        let (kbest, err) = mean
            .iter()
            .enumerate()
            .map(|(k, m)| (k, m.abs()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !cfg.zero_noise && err <= 3.0 * se[kbest] {
            inconclusive = true;
        }
        errors.push(err);
        std_errs.push(se[kbest]);
    }
    let lx: Vec<f64> = cfg.s_values.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let order = linear_fit(&lx, &ly).slope;
    Ok(WeakErrorStudy { s_values: cfg.s_values.clone(), errors, std_errs, order, inconclusive })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingOptions {
    pub n_replicas: usize,
    pub dt: f64,
    pub seed: u64,
    /// Paths still running at this time are censored.
    pub max_time: f64,
    /// Also detect crossings between grid times with the Brownian-bridge probability.
    pub bridge: bool,
}

impl Default for HittingOptions {
    fn default() -> Self {
        Self { n_replicas: 10_000, dt: 1e-3, seed: 0, max_time: 1e3, bridge: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub mean: f64,
    pub std_err: f64,
    pub completed: usize,
    pub censored: usize,
    /// More than half the paths were censored.
    pub inconclusive: bool,
}

/// First-passage time of a 1D Euler–Maruyama path from `x_start` to `x_target`.
///
/// A crossing between grid times is located by linear interpolation; with
/// `bridge` on, a step whose endpoints both stay short of the target still
/// counts as crossing with probability exp(−2 a b/(s dt)), a and b being the
/// endpoint distances to the target.
pub fn hitting_time_mc(
    field: &ScalarField,
    s: f64,
    x_start: f64,
    x_target: f64,
    opts: &HittingOptions,
) -> Result<HittingReport> {
    if field.dim() != 1 {
        return Err(Error::Config("hitting_time_mc needs a 1D field".into()));
    }
    if x_start == x_target {
        return Err(Error::Domain("start and target coincide".into()));
    }
    if !(s > 0.0) || !(opts.dt > 0.0) || opts.n_replicas < 2 {
        return Err(Error::Config("need s > 0, dt > 0 and at least 2 replicas".into()));
    }
    let dir = (x_target - x_start).signum();
    let amp = (s * opts.dt).sqrt();
    let max_steps = (opts.max_time / opts.dt).ceil() as u64;
    let parts = chunked(
        opts.n_replicas,
        || (0.0f64, 0.0f64, 0usize, 0usize),
        |acc, r| {
            let noise = NoiseModel::new(opts.seed, r);
            let mut x = x_start;
            let mut g = [0.0];
            let mut hit = None;
            for j in 0..max_steps {
                field.gradient_into(&[x], &mut g);
                let y = x - g[0] * opts.dt + amp * noise.normal(j, 0);
                if !y.is_finite() || y.abs() > DIVERGENCE_NORM {
                    return Err(Error::Divergence { step: j as usize + 1, replica: Some(r), last_finite: vec![x] });
                }
                let a = dir * (x_target - x);
                let b = dir * (x_target - y);
                if b <= 0.0 {
                    hit = Some((j as f64 + a / (a - b)) * opts.dt);
                    break;
                }
                if opts.bridge {
                    let p = (-2.0 * a * b / (s * opts.dt)).exp();
                    if noise.uniform_on(stream::BRIDGE, j, 0) < p {
                        hit = Some((j as f64 + 0.5) * opts.dt);
                        break;
                    }
                }
                x = y;
            }
            match hit {
                Some(t) => {
                    acc.0 += t;
                    acc.1 += t * t;
                    acc.2 += 1;
                }
                None => acc.3 += 1,
            }
            Ok(())
        },
    )?;
    let (sum, sq, completed, censored) = parts
        .iter()
        .fold((0.0, 0.0, 0, 0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2, a.3 + p.3));
    let n = completed as f64;
    let mean = if completed > 0 { sum / n } else { f64::NAN };
    let std_err = if completed > 1 { (((sq - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt() } else { f64::NAN };
    Ok(HittingReport { mean, std_err, completed, censored, inconclusive: 2 * censored > opts.n_replicas })
}

/// π/√(−f″(x•) f″(x°)) · e^{2(f(x°) − f(x•))/s}.
pub fn kramers_time(field: &ScalarField, x_bullet: f64, x_circ: f64, s: f64) -> Result<f64> {
    if field.dim() != 1 {
        return Err(Error::Config("kramers_time needs a 1D field".into()));
    }
    let a = field.hessian(&[x_bullet])[0];
    let b = field.hessian(&[x_circ])[0];
    if !(a > 0.0) || !(b < 0.0) {
        return Err(Error::Domain(format!("need f''(x•) > 0 and f''(x°) < 0, got {a} and {b}")));
    }
    let barrier = field.value(&[x_circ]) - field.value(&[x_bullet]);
    Ok(kramers_time_from(a, b, barrier, s))
}

/// The Kramers formula from curvatures and barrier height.
pub fn kramers_time_from(curv_min: f64, curv_saddle: f64, barrier: f64, s: f64) -> f64 {
    std::f64::consts::PI / (-curv_min * curv_saddle).sqrt() * (2.0 * barrier / s).exp()
}

/// Mean hitting time of f = θx²/2 from its minimizer to distance `dist`:
/// √(πs)/(dist θ√θ) · e^{θ dist²/s}.
pub fn ou_hitting_time(theta: f64, dist: f64, s: f64) -> f64 {
    (std::f64::consts::PI * s).sqrt() / (dist * theta * theta.sqrt()) * (theta * dist * dist / s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub s: f64,
    pub horizon_t: f64,
    pub sup_deviation: f64,
    /// sup‖W(t)‖ or sup‖ξ_k‖.
    pub noise_sup: f64,
    pub bound_value: f64,
    pub bound_satisfied: bool,
    /// Discrete case only: s sup‖ξ‖ ((1+Ls)^k − 1)/(Ls) summed through the recursion.
    pub accumulated_bound: Option<f64>,
    pub accumulated_bound_satisfied: Option<bool>,
}

fn lipschitz_of(field: &ScalarField) -> Result<f64> {
    field
        .lipschitz()
        .ok_or_else(|| Error::Config(format!("{} declares no Lipschitz constant L", field.name())))
}

/// sup_t ‖X_s − X_0‖ for noisy and noiseless Euler paths on a shared grid,
/// against √s · sup‖W‖ · e^{LT}.
pub fn coupled_deviation(field: &ScalarField, s: f64, horizon: f64, dt: f64, noise: &NoiseModel) -> Result<CouplingReport> {
    let l = lipschitz_of(field)?;
    check_sde_step(s, dt)?;
    let d = field.dim();
    let x0 = field.minimizer().map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; d]);
    coupled_deviation_from(field, s, horizon, dt, noise, &x0, l)
}

/// As [`coupled_deviation`] from a given start point.
pub fn coupled_deviation_from(
    field: &ScalarField,
    s: f64,
    horizon: f64,
    dt: f64,
    noise: &NoiseModel,
    x0: &[f64],
    l: f64,
) -> Result<CouplingReport> {
    check_dim(field, x0)?;
    let d = field.dim();
    let steps = (horizon / dt).round() as usize;
    let (mut xs, mut x0p) = (x0.to_vec(), x0.to_vec());
    let mut w = vec![0.0; d];
    let (mut gs, mut g0) = (vec![0.0; d], vec![0.0; d]);
    let rs = s.sqrt();
    let (mut sup_dev, mut sup_w) = (0.0f64, 0.0f64);
    for j in 0..steps {
        field.gradient_into(&xs, &mut gs);
        field.gradient_into(&x0p, &mut g0);
        for i in 0..d {
            let dw = dt.sqrt() * noise.normal(j as u64, i as u64);
            w[i] += dw;
            xs[i] += -gs[i] * dt + rs * dw;
            x0p[i] += -g0[i] * dt;
        }
        check_state(&xs, x0, j + 1, Some(noise.replica))?;
        let dev = xs.iter().zip(&x0p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        sup_dev = sup_dev.max(dev);
        sup_w = sup_w.max(w.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let bound = rs * sup_w * (l * horizon).exp();
    Ok(CouplingReport {
        s,
        horizon_t: horizon,
        sup_deviation: sup_dev,
        noise_sup: sup_w,
        bound_value: bound,
        bound_satisfied: sup_dev <= bound,
        accumulated_bound: None,
        accumulated_bound_satisfied: None,
    })
}

/// SGD and GD with shared ξ_k up to k = T/s.
///
/// Records the stated bound s (1+Ls)^{T/s} sup‖ξ‖ and the bound obtained by
/// summing the recursion, s sup‖ξ‖ ((1+Ls)^k − 1)/(Ls).
pub fn discrete_coupled_deviation(field: &ScalarField, s: f64, horizon: f64, noise: &NoiseModel) -> Result<CouplingReport> {
    let l = lipschitz_of(field)?;
    if !(s > 0.0) {
        return Err(Error::Domain(format!("learning rate must be positive, got {s}")));
    }
    let d = field.dim();
    let x0 = field.minimizer().map(|m| m.to_vec()).unwrap_or_else(|| vec![0.0; d]);
    let k_max = (horizon / s).round() as usize;
    let (mut xs, mut xg) = (x0.clone(), x0.clone());
    let (mut gs, mut gg, mut xi) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut sup_dev, mut sup_xi) = (0.0f64, 0.0f64);
    for k in 0..k_max {
        noise.fill(k as u64, &mut xi);
        field.gradient_into(&xs, &mut gs);
        field.gradient_into(&xg, &mut gg);
        discrete_step(Method::Sgd, s, &mut xs, &gs, &xi);
        discrete_step(Method::Gd, s, &mut xg, &gg, &xi);
        check_state(&xs, &x0, k + 1, Some(noise.replica))?;
        sup_xi = sup_xi.max(xi.iter().map(|v| v * v).sum::<f64>().sqrt());
        sup_dev = sup_dev.max(xs.iter().zip(&xg).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
    let growth = (1.0 + l * s).powi(k_max as i32);
    let stated = s * growth * sup_xi;
    let accumulated = if l > 0.0 { s * sup_xi * (growth - 1.0) / (l * s) } else { s * sup_xi * k_max as f64 };
    Ok(CouplingReport {
        s,
        horizon_t: horizon,
        sup_deviation: sup_dev,
        noise_sup: sup_xi,
        bound_value: stated,
        bound_satisfied: sup_dev <= stated,
        accumulated_bound: Some(accumulated),
        accumulated_bound_satisfied: Some(sup_dev <= accumulated),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormTail {
    /// P(‖X‖ ≥ x) for X ~ N(0, I_d).
    pub probability: f64,
    /// 4 x^{d−2} e^{−x²/2} / (2^{d/2} Γ(d/2)).
    pub bound: f64,
}

pub fn gaussian_norm_tail(d: usize, x: f64) -> Result<NormTail> {
    if d == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    let a = d as f64 / 2.0;
    let probability = gamma_ur(a, x * x / 2.0);
    let bound = 4.0 * x.powf(d as f64 - 2.0) * (-x * x / 2.0).exp() / (2f64.powf(a) * gamma(a));
    Ok(NormTail { probability, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{double_well_tilted, quadratic_1d, quadratic_2d_paper};

    #[test]
    fn gd_on_quadratic_is_geometric() {
        let f = quadratic_1d(1.0);
        let t = run_discrete(Method::Gd, &f, 0.1, 50, &[1.0], &NoiseModel::new(0, 0)).unwrap();
        for (k, x) in t.states.iter().enumerate() {
            assert!((x[0] - 0.9f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_noise_sgd_is_gd_bitwise() {
        let f = quadratic_2d_paper();
        let a = run_discrete(Method::Sgd, &f, 0.5, 100, &[8.0, 8.0], &NoiseModel::zero()).unwrap();
        let b = run_discrete(Method::Gd, &f, 0.5, 100, &[8.0, 8.0], &NoiseModel::new(3, 3)).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
            assert_eq!(x[1].to_bits(), y[1].to_bits());
        }
    }

    #[test]
    fn sgd_and_sgld_agree_at_unit_rate() {
        // at s = 1 the two updates differ only in the sign of the symmetric noise
        let f = quadratic_2d_paper();
        let noise = NoiseModel::new(11, 0);
        let a = run_discrete(Method::Sgd, &f, 1.0, 1, &[8.0, 8.0], &noise).unwrap();
        let b = run_discrete(Method::Sgld, &f, 1.0, 1, &[8.0, 8.0], &noise).unwrap();
        let g = f.gradient(&[8.0, 8.0]);
        for i in 0..2 {
            assert!(((a.states[1][i] + b.states[1][i]) / 2.0 - (8.0 - g[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let f = quadratic_1d(1.0);
        match run_discrete(Method::Gd, &f, 3.0, 100, &[1.0], &NoiseModel::zero()) {
            Err(Error::Divergence { step, last_finite, .. }) => {
                assert!(step > 1);
                assert!(last_finite[0].is_finite());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn em_requires_fine_step() {
        let f = quadratic_1d(1.0);
        assert!(matches!(
            euler_maruyama(&f, 0.1, 0.05, 1.0, &[0.0], &NoiseModel::new(0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn em_noiseless_matches_exponential() {
        let f = quadratic_1d(1.0);
        let t = euler_maruyama(&f, 0.0, 1e-4, 1.0, &[1.0], &NoiseModel::new(0, 0)).unwrap();
        let x = t.states.last().unwrap()[0];
        assert!((x - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn em_ou_variance() {
        let (s, t_end) = (0.2, 1.0);
        let f = quadratic_1d(1.0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|r| {
                let t = euler_maruyama(&f, s, s / 20.0, t_end, &[0.0], &NoiseModel::new(5, r)).unwrap();
                t.states.last().unwrap()[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = s / 2.0 * (1.0 - (-2.0 * t_end).exp());
        // relative SE of a sample variance is √(2/n)
        assert!((var - exact).abs() < 3.0 * exact * (2.0 / n as f64).sqrt() + 0.02 * exact, "{var} vs {exact}");
    }

    #[test]
    fn em_mean_path_on_2d_quadratic() {
        let f = quadratic_2d_paper();
        let (s, t_end, n) = (0.1, 5.0, 2000);
        let mut mean = [0.0; 2];
        for r in 0..n {
            let t = euler_maruyama(&f, s, 0.005, t_end, &[8.0, 8.0], &NoiseModel::new(1, r)).unwrap();
            let x = t.states.last().unwrap();
            mean[0] += x[0] / n as f64;
            mean[1] += x[1] / n as f64;
        }
        // e^{−Ht} x0 with H = diag(0.1, 0.05); stationary sd √(s/(2h)) bounds the MC error
        let exact = [8.0 * (-0.5f64).exp(), 8.0 * (-0.25f64).exp()];
        let sd = [(s / 0.2f64).sqrt(), (s / 0.1f64).sqrt()];
        for i in 0..2 {
            assert!((mean[i] - exact[i]).abs() < 4.0 * sd[i] / (n as f64).sqrt() + 0.01, "{i}: {}", mean[i]);
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_gd_has_no_spread() {
        let f = quadratic_1d(1.0);
        let a = run_ensemble(Method::Sgd, &f, 0.1, 200, &[1.0], 600, 9).unwrap();
        let b = run_ensemble(Method::Sgd, &f, 0.1, 200, &[1.0], 600, 9).unwrap();
        assert_eq!(a, b);
        let gd = run_ensemble(Method::Gd, &f, 0.1, 50, &[1.0], 4, 9).unwrap();
        assert!(gd.std_err.iter().all(|v| *v == 0.0));
        assert!(a.mean_excess_risk.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ensemble_plateau_is_quarter_s() {
        // SGD's own stationary variance is s/(2θ − sθ²), so E[θx²/2] = s/(4 − 2sθ)
        let (s, n) = (0.05, 4000);
        let f = quadratic_1d(1.0);
        let e = run_ensemble(Method::Sgd, &f, s, 600, &[0.0], n, 1).unwrap();
        let tail: Vec<f64> = e.mean_excess_risk[400..].to_vec();
        let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
        let exact = s / (4.0 - 2.0 * s);
        assert!((plateau - exact).abs() < 0.05 * exact, "{plateau} vs {exact}");
        assert!((plateau - s / 4.0).abs() < 0.1 * s / 4.0);
    }

    #[test]
    fn ensemble_csv_columns() {
        let f = quadratic_1d(1.0);
        let e = run_ensemble(Method::Sgd, &f, 0.1, 10, &[1.0], 4, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        e.write_csv(&p).unwrap();
        let mut rdr = csv::Reader::from_path(&p).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["k", "t", "mean_excess_risk", "std_err"]);
        assert_eq!(rdr.records().count(), 11);
    }

    #[test]
    fn zero_noise_weak_error_is_euler_error() {
        let f = quadratic_1d(1.0);
        let cfg = WeakErrorConfig {
            s_values: vec![0.2, 0.1, 0.05],
            horizon: 2.0,
            n_replicas: 2,
            dt_ref: 0.0025,
            x0: vec![1.0],
            seed: 0,
            zero_noise: true,
        };
        let study = weak_error_study(&f, &cfg).unwrap();
        assert!((study.order - 1.0).abs() < 0.15, "{:?}", study);
        assert!(study.errors.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn weak_error_rejects_coarse_reference() {
        let f = quadratic_1d(1.0);
        let cfg = WeakErrorConfig {
            s_values: vec![0.2, 0.1],
            horizon: 1.0,
            n_replicas: 2,
            dt_ref: 0.01,
            x0: vec![1.0],
            seed: 0,
            zero_noise: false,
        };
        assert!(matches!(weak_error_study(&f, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn kramers_formula_values() {
        assert!((kramers_time_from(2.0, -1.0, 0.25, 0.2) - 27.06).abs() < 0.01);
        assert!((kramers_time_from(2.0, -1.0, 0.0, 0.2) - std::f64::consts::PI / 2f64.sqrt()).abs() < 1e-12);
        let ratio = kramers_time_from(2.0, -1.0, 0.1, 0.05) / kramers_time_from(2.0, -1.0, 0.1, 0.1);
        assert!((ratio - (2.0f64 * 0.1 / 0.1).exp()).abs() < 1e-9);
        let f = double_well_tilted();
        assert!(matches!(kramers_time(&f, 0.3389, 0.7865, 0.2), Err(Error::Domain(_))));
        assert!((ou_hitting_time(1.0, 1.0, 0.5) - 9.26).abs() < 0.01);
    }

    #[test]
    fn large_noise_hits_quickly() {
        let opts = HittingOptions { n_replicas: 500, dt: 1e-3, seed: 2, max_time: 50.0, bridge: true };
        let r = hitting_time_mc(&quadratic_1d(1.0), 10.0, 0.0, 1.0, &opts).unwrap();
        assert!(r.mean < 1.0 && r.censored == 0);
    }

    #[test]
    fn censoring_flags_inconclusive() {
        let opts = HittingOptions { n_replicas: 20, dt: 1e-3, seed: 2, max_time: 0.01, bridge: false };
        let r = hitting_time_mc(&quadratic_1d(1.0), 0.1, 0.0, 1.0, &opts).unwrap();
        assert!(r.inconclusive);
    }

    #[test]
    fn coupling_bounds() {
        let f = quadratic_1d(1.0);
        let r = coupled_deviation(&f, 0.0, 2.0, 0.01, &NoiseModel::new(0, 0)).unwrap();
        assert_eq!(r.sup_deviation, 0.0);
        assert!(r.bound_satisfied);
        let r = discrete_coupled_deviation(&f, 0.1, 2.0, &NoiseModel::zero()).unwrap();
        assert_eq!(r.sup_deviation, 0.0);
        for seed in 0..20 {
            let r = coupled_deviation(&f, 0.1, 2.0, 0.005, &NoiseModel::new(seed, 0)).unwrap();
            assert!(r.bound_satisfied);
            let r = discrete_coupled_deviation(&f, 0.1, 2.0, &NoiseModel::new(seed, 0)).unwrap();
            assert_eq!(r.accumulated_bound_satisfied, Some(true));
        }
        let no_l = double_well_tilted();
        assert!(matches!(coupled_deviation(&no_l, 0.1, 1.0, 0.01, &NoiseModel::new(0, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn gaussian_tail_values() {
        let t = gaussian_norm_tail(2, 2.0).unwrap();
        assert!((t.probability - (-2.0f64).exp()).abs() < 1e-14);
        // two-sided normal tail by midpoint quadrature of the density on [0, 1.96]
        let n = 200_000;
        let h = 1.96 / n as f64;
        let inner: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                2.0 * (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * h
            })
            .sum();
        let t = gaussian_norm_tail(1, 1.96).unwrap();
        assert!((t.probability - (1.0 - inner)).abs() < 1e-9);
        let t = gaussian_norm_tail(5, 6.0).unwrap();
        assert!(t.bound >= t.probability);
        assert!(gaussian_norm_tail(0, 1.0).is_err());
    }

    /// Mean first-passage time from x0 down to a < x0 with a reflecting far end:
    /// (2/s)∫_a^{x0} e^{2f(y)/s} ∫_y^∞ e^{−2f(z)/s} dz dy, midpoint rule.
    fn mfpt_quadrature(f: impl Fn(f64) -> f64, s: f64, a: f64, x0: f64, far: f64) -> f64 {
        let n = 4000;
        let hy = (x0 - a) / n as f64;
        (0..n)
            .map(|i| {
                let y = a + (i as f64 + 0.5) * hy;
                let hz = (far - y) / n as f64;
                let inner: f64 =
                    (0..n).map(|j| (-2.0 * (f(y + (j as f64 + 0.5) * hz) - f(y)) / s).exp() * hz).sum();
                inner * hy
            })
            .sum::<f64>()
            * 2.0
            / s
    }

    #[test]
    fn double_well_escape_matches_first_passage_quadrature() {
        let f = double_well_tilted();
        let (xm, xs) = (0.786_482_541_161_627_2, 0.338_936_241_595_193_9);
        assert!(f.gradient(&[xm])[0].abs() < 1e-12 && f.gradient(&[xs])[0].abs() < 1e-12);
        let exact = mfpt_quadrature(|x| f.value(&[x]), 0.2, xs, xm, 6.0);
        let opts = HittingOptions { n_replicas: 4000, seed: 11, ..Default::default() };
        let mc = hitting_time_mc(&f, 0.2, xm, xs, &opts).unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_err + 0.02 * exact, "{} vs {exact}", mc.mean);
    }
}
