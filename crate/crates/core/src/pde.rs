//! Fokker–Planck evolution ∂ρ = ∇·(ρ∇f) + (s/2)Δρ, decay fits and
//! functional-inequality diagnostics.
//!
//! The generator is the square-root approximation on the grid: mass hops
//! between neighbours i → j at rate (s/2h²)·e^{−(f_j − f_i)/s}. Column sums
//! vanish, so mass is conserved to rounding, and μ_s ∝ e^{−2f/s} is an exact
//! fixed point by detailed balance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::gibbs::{epsilon, gibbs_on_grid, l1_distance, relative_entropy, GridMeasure};
use crate::grid::{sample, GridSpec};
use crate::linalg::solve_tridiagonal;
use crate::noise::Sampler;
use crate::objective::ScalarField;

/// Snapshots more negative than this abort the evolution.
pub const NEGATIVITY_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub time: f64,
    pub density: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// TR-BDF2, Strang-split by axis in 2D. The first steps, and any step
    /// that would go negative, are taken as backward-Euler half steps.
    Implicit,
    /// Forward Euler; refuses steps above the positivity limit.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub scheme: TimeScheme,
}

impl FpOptions {
    /// `n` snapshots evenly spaced on [0, horizon].
    pub fn uniform(dt: f64, horizon: f64, n: usize) -> Self {
        let snapshot_times = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        Self { dt, snapshot_times, scheme: TimeScheme::Implicit }
    }
}

/// Per-axis neighbour hopping rates.
struct Generator {
    grid: GridSpec,
    /// fwd[a][i]: rate from i to its +1 neighbour along a; bwd[a][i]: reverse.
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
}

impl Generator {
    fn new(grid: &GridSpec, values: &[f64], s: f64) -> Self {
        let d = grid.dim();
        let mut fwd = vec![vec![0.0; grid.len()]; d];
        let mut bwd = vec![vec![0.0; grid.len()]; d];
        for a in 0..d {
            let c = s / (2.0 * grid.spacing(a).powi(2));
            for i in 0..grid.len() {
                if let Some(j) = grid.neighbor(i, a, 1) {
                    let df = values[j] - values[i];
                    fwd[a][i] = c * (-df / s).exp();
                    bwd[a][i] = c * (df / s).exp();
                }
            }
        }
        Self { grid: grid.clone(), fwd, bwd }
    }

    /// Total outflow rate of each node.
    fn max_outflow(&self) -> f64 {
        let g = &self.grid;
        (0..g.len())
            .map(|i| {
                (0..g.dim())
                    .map(|a| {
                        let up = self.fwd[a][i];
                        let down = g.neighbor(i, a, -1).map_or(0.0, |j| self.bwd[a][j]);
                        up + down
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Lines along axis `a` as (start, stride, len).
    fn lines(&self, a: usize) -> Vec<(usize, usize, usize)> {
        let g = &self.grid;
        let stride = g.stride(a);
        let len = g.axes[a].points;
        if g.dim() == 1 {
            return vec![(0, 1, len)];
        }
        let other = g.axes[1 - a].points;
        (0..other)
            .map(|k| if a == 0 { (k, stride, len) } else { (k * g.axes[1].points, stride, len) })
            .collect()
    }

    /// Tridiagonal coefficients of Q_a restricted to one line.
    fn line_coeffs(&self, a: usize, line: (usize, usize, usize), lo: &mut [f64], di: &mut [f64], up: &mut [f64]) {
        let (start, stride, len) = line;
        for m in 0..len {
            let i = start + m * stride;
            let out_up = if m + 1 < len { self.fwd[a][i] } else { 0.0 };
            let out_down = if m > 0 { self.bwd[a][i - stride] } else { 0.0 };
            di[m] = -(out_up + out_down);
            lo[m] = if m > 0 { self.fwd[a][i - stride] } else { 0.0 };
            up[m] = if m + 1 < len { self.bwd[a][i] } else { 0.0 };
        }
    }

    /// ρ ← (I + c Q_a) ρ.
    fn apply(&self, a: usize, c: f64, rho: &mut [f64], buf: &mut Buffers) {
        for line in self.lines(a) {
            let (start, stride, len) = line;
            buf.resize(len);
            self.line_coeffs(a, line, &mut buf.lo, &mut buf.di, &mut buf.up);
            for m in 0..len {
                buf.x[m] = rho[start + m * stride];
            }
            for m in 0..len {
                let mut q = buf.di[m] * buf.x[m];
                if m > 0 {
                    q += buf.lo[m] * buf.x[m - 1];
                }
                if m + 1 < len {
                    q += buf.up[m] * buf.x[m + 1];
                }
                rho[start + m * stride] = buf.x[m] + c * q;
            }
        }
    }

    /// ρ ← (I − c Q_a)⁻¹ ρ.
    fn solve(&self, a: usize, c: f64, rho: &mut [f64], buf: &mut Buffers) {
        for line in self.lines(a) {
            let (start, stride, len) = line;
            buf.resize(len);
            self.line_coeffs(a, line, &mut buf.lo, &mut buf.di, &mut buf.up);
            for m in 0..len {
                buf.lo[m] *= -c;
                buf.up[m] *= -c;
                buf.di[m] = 1.0 - c * buf.di[m];
                buf.x[m] = rho[start + m * stride];
            }
            solve_tridiagonal(&buf.lo, &buf.di, &buf.up, &mut buf.x, &mut buf.scratch);
            for m in 0..len {
                rho[start + m * stride] = buf.x[m];
            }
        }
    }

    fn explicit_step(&self, dt: f64, rho: &mut Vec<f64>, buf: &mut Buffers) {
        let before = rho.clone();
        let mut acc = rho.clone();
        for a in 0..self.grid.dim() {
            let mut part = before.clone();
            self.apply(a, dt, &mut part, buf);
            for i in 0..acc.len() {
                acc[i] += part[i] - before[i];
            }
        }
        *rho = acc;
    }

    fn backward_euler_half_steps(&self, dt: f64, rho: &mut [f64], buf: &mut Buffers) {
        for _ in 0..2 {
            for a in 0..self.grid.dim() {
                self.solve(a, dt / 2.0, rho, buf);
            }
        }
    }

    /// TR-BDF2 along one axis: trapezoid to t + γτ, then BDF2 to t + τ.
    fn tr_bdf2(&self, a: usize, tau: f64, rho: &mut [f64], buf: &mut Buffers) {
        let gamma = 2.0 - std::f64::consts::SQRT_2;
        let start = rho.to_vec();
        self.apply(a, gamma * tau / 2.0, rho, buf);
        self.solve(a, gamma * tau / 2.0, rho, buf);
        let c1 = 1.0 / (gamma * (2.0 - gamma));
        let c2 = (1.0 - gamma).powi(2) / (gamma * (2.0 - gamma));
        for (r, u) in rho.iter_mut().zip(&start) {
            *r = c1 * *r - c2 * u;
        }
        self.solve(a, (1.0 - gamma) / (2.0 - gamma) * tau, rho, buf);
    }

    fn implicit_step(&self, dt: f64, rho: &mut [f64], buf: &mut Buffers) {
        match self.grid.dim() {
            1 => self.tr_bdf2(0, dt, rho, buf),
            _ => {
                self.tr_bdf2(0, dt / 2.0, rho, buf);
                self.tr_bdf2(1, dt, rho, buf);
                self.tr_bdf2(0, dt / 2.0, rho, buf);
            }
        }
    }
}

#[derive(Default)]
struct Buffers {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    scratch: Vec<f64>,
}

impl Buffers {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.lo, &mut self.di, &mut self.up, &mut self.x] {
            v.resize(n, 0.0);
        }
    }
}

/// Number of leading implicit steps replaced by backward-Euler half steps.
const STARTUP_STEPS: usize = 2;

fn trapezoid_mass(weights: &[f64], rho: &[f64]) -> f64 {
    weights.iter().zip(rho).map(|(w, r)| w * r).sum()
}

/// Time stepper holding the generator of one (field, s, grid).
pub struct FpSolver {
    generator: Generator,
    pub measure: GridMeasure,
    scheme: TimeScheme,
    dt: f64,
    weights: Vec<f64>,
}

impl FpSolver {
    pub fn new(field: &ScalarField, s: f64, grid: &GridSpec, dt: f64, scheme: TimeScheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let measure = gibbs_on_grid(field, s, grid)?;
        let values = sample(field, grid)?;
        let generator = Generator::new(grid, &values, s);
        if scheme == TimeScheme::Explicit {
            let max_dt = 1.0 / generator.max_outflow();
            if dt > max_dt {
                return Err(Error::Config(format!("explicit step dt = {dt:e} exceeds the stable limit {max_dt:e}")));
            }
        }
        let weights = grid.trapezoid_weights();
        Ok(Self { generator, measure, scheme, dt, weights })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.generator.grid
    }

    pub fn mass(&self, rho: &[f64]) -> f64 {
        trapezoid_mass(&self.weights, rho)
    }

    fn validate_start(&self, rho0: &[f64]) -> Result<()> {
        if rho0.len() != self.grid().len() {
            return Err(Error::Config("initial density does not match the grid".into()));
        }
        if rho0.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("initial density must be finite and nonnegative".into()));
        }
        let m = self.mass(rho0);
        if (m - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("initial density has mass {m}, expected 1")));
        }
        Ok(())
    }

    /// Advance `rho` by one step; `step` is the index of the step being taken.
    pub fn step(&self, rho: &mut Vec<f64>, step: usize, buf_reuse: &mut StepBuffers) -> Result<()> {
        let buf = &mut buf_reuse.0;
        match self.scheme {
            TimeScheme::Explicit => self.generator.explicit_step(self.dt, rho, buf),
            TimeScheme::Implicit if step < STARTUP_STEPS => {
                self.generator.backward_euler_half_steps(self.dt, rho, buf)
            }
            TimeScheme::Implicit => {
                let start = rho.clone();
                self.generator.implicit_step(self.dt, rho, buf);
                if rho.iter().any(|v| *v < NEGATIVITY_TOLERANCE) {
                    rho.copy_from_slice(&start);
                    self.generator.backward_euler_half_steps(self.dt, rho, buf);
                }
            }
        }
        let (imin, vmin) = rho
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (i, v)| if *v < b.1 { (i, *v) } else { b });
        if vmin < NEGATIVITY_TOLERANCE || !vmin.is_finite() {
            return Err(Error::Scheme(format!(
                "density {vmin:e} at node {:?} after step {}",
                self.grid().node(imin),
                step + 1
            )));
        }
        Ok(())
    }

    /// Snapshots of the evolution at the requested times (rounded to whole steps).
    pub fn evolve(&self, rho0: &[f64], times: &[f64]) -> Result<Vec<DensitySnapshot>> {
        self.validate_start(rho0)?;
        let mut targets: Vec<usize> = times.iter().map(|t| (t / self.dt).round() as usize).collect();
        targets.sort_unstable();
        targets.dedup();
        let mut rho = rho0.to_vec();
        let mut out = Vec::with_capacity(targets.len());
        let mut buf = StepBuffers::default();
        let mut k = 0;
        for &n in &targets {
            while k < n {
                self.step(&mut rho, k, &mut buf)?;
                k += 1;
            }
            out.push(DensitySnapshot { time: n as f64 * self.dt, density: rho.clone(), mass: self.mass(&rho) });
        }
        Ok(out)
    }
}

/// Reusable scratch space for [`FpSolver::step`].
#[derive(Default)]
pub struct StepBuffers(Buffers);

/// Evolve `rho0` under the Fokker–Planck equation at temperature `s`.
pub fn fp_evolve(field: &ScalarField, s: f64, rho0: &[f64], grid: &GridSpec, opts: &FpOptions) -> Result<Vec<DensitySnapshot>> {
    FpSolver::new(field, s, grid, opts.dt, opts.scheme)?.evolve(rho0, &opts.snapshot_times)
}

/// Write `time, node, density` rows.
pub fn write_snapshots_csv(path: &Path, snapshots: &[DensitySnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "node", "density"])?;
    for snap in snapshots {
        for (i, v) in snap.density.iter().enumerate() {
            w.write_record([format!("{:.10e}", snap.time), i.to_string(), format!("{v:.10e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Density of X_t for dX = −θX dt + √s dW started at x0.
pub fn ou_closed_form(theta: f64, s: f64, x0: f64, t: f64, grid: &GridSpec) -> Result<DensitySnapshot> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let decay = 1.0 - (-2.0 * theta * t).exp();
    let mean = x0 * (-theta * t).exp();
    let norm = (theta / (std::f64::consts::PI * s * decay)).sqrt();
    let density: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.node(i)[0];
            norm * (-(theta / s) * (x - mean).powi(2) / decay).exp()
        })
        .collect();
    let mass = trapezoid_mass(&grid.trapezoid_weights(), &density);
    Ok(DensitySnapshot { time: t, density, mass })
}

/// ‖ρ − μ‖²_{μ⁻¹} per snapshot, computed from the log density.
fn squared_norms(snaps: &[DensitySnapshot], mu: &GridMeasure) -> Vec<f64> {
    snaps
        .iter()
        .map(|sn| {
            sn.density
                .iter()
                .zip(&mu.log_density)
                .zip(&mu.weights)
                .map(|((r, l), w)| {
                    let m = l.exp();
                    w * (r - m).powi(2) / m
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub s: f64,
    pub times: Vec<f64>,
    /// Squared weighted norms ‖ρ_t − μ_s‖²_{μ⁻¹}.
    pub norms: Vec<f64>,
    pub fitted_rate: f64,
    #[serde(rename = "r2")]
    pub fit_r2: f64,
    /// 2λ_s.
    pub reference_rate: f64,
    pub window: (f64, f64),
    pub inconclusive: bool,
    /// Excess risk E f(X_t) − f* per snapshot.
    pub excess_risk: Vec<f64>,
    /// ε(s).
    pub epsilon: f64,
    /// Least-squares D in ε(s) + D e^{−λ_s t} over the window.
    pub risk_prefactor: f64,
    /// C(s) = (∫(f − f*)² dμ_s)^{1/2}.
    pub c_of_s: f64,
}

impl DecayFit {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let v = serde_json::json!({
            "s": self.s,
            "fitted_rate": self.fitted_rate,
            "reference_rate": self.reference_rate,
            "r2": self.fit_r2,
            "window": [self.window.0, self.window.1],
        });
        std::fs::write(path, serde_json::to_string_pretty(&v)?)?;
        Ok(())
    }
}

/// Squared norms at or below this are treated as converged.
pub const NORM_FLOOR: f64 = 1e-24;

/// Fit the late-time exponential decay of ‖ρ_t − μ_s‖²_{μ⁻¹} over the second
/// half of the snapshot times.
pub fn decay_fit(
    field: &ScalarField,
    s: f64,
    rho0: &[f64],
    grid: &GridSpec,
    opts: &FpOptions,
    lambda_ref: f64,
) -> Result<DecayFit> {
    let solver = FpSolver::new(field, s, grid, opts.dt, opts.scheme)?;
    let snaps = solver.evolve(rho0, &opts.snapshot_times)?;
    let mu = &solver.measure;
    let norms = squared_norms(&snaps, mu);
    let times: Vec<f64> = snaps.iter().map(|s| s.time).collect();
    let values = sample(field, grid)?;
    let excess_risk: Vec<f64> = snaps
        .iter()
        .map(|sn| {
            sn.density
                .iter()
                .zip(&values)
                .zip(&mu.weights)
                .map(|((r, f), w)| w * r * (f - mu.f_star))
                .sum()
        })
        .collect();
    let eps = epsilon(mu);
    let t_end = times.last().copied().unwrap_or(0.0);
    let window: Vec<usize> = (0..norms.len())
        .filter(|&i| times[i] >= 0.5 * t_end && norms[i] > NORM_FLOOR && norms[i].is_finite())
        .collect();
    let inconclusive = window.len() < 5;
    let (fitted_rate, fit_r2, win) = if inconclusive {
        (f64::NAN, f64::NAN, (f64::NAN, f64::NAN))
    } else {
        let x: Vec<f64> = window.iter().map(|&i| times[i]).collect();
        let y: Vec<f64> = window.iter().map(|&i| norms[i].ln()).collect();
        let fit = linear_fit(&x, &y);
        (-fit.slope, fit.r2, (x[0], *x.last().unwrap()))
    };
    let (num, den) = window.iter().fold((0.0, 0.0), |acc, &i| {
        let e = (-lambda_ref * times[i]).exp();
        (acc.0 + e * (excess_risk[i] - eps), acc.1 + e * e)
    });
    let risk_prefactor = if den > 0.0 { num / den } else { f64::NAN };
    Ok(DecayFit {
        s,
        times,
        norms,
        fitted_rate,
        fit_r2,
        reference_rate: 2.0 * lambda_ref,
        window: win,
        inconclusive,
        excess_risk,
        epsilon: eps,
        risk_prefactor,
        c_of_s: crate::gibbs::risk_l2_constant(mu),
    })
}

/// Relative mismatch between d/dt‖ρ_t − μ‖²_{μ⁻¹} (central difference of the
/// snapshots) and −s∫‖∇h_t‖² dμ with h_t = ρ_t/μ, at each interior snapshot.
pub fn dissipation_identity_check(solver: &FpSolver, snaps: &[DensitySnapshot]) -> Vec<f64> {
    let mu = &solver.measure;
    let norms = squared_norms(snaps, mu);
    let grid = solver.grid();
    (1..snaps.len().saturating_sub(1))
        .map(|k| {
            let lhs = (norms[k + 1] - norms[k - 1]) / (snaps[k + 1].time - snaps[k - 1].time);
            let h: Vec<f64> = snaps[k]
                .density
                .iter()
                .zip(&mu.log_density)
                .map(|(r, l)| r / l.exp())
                .collect();
            let rhs = -mu.s * dirichlet_form_fd(grid, mu, &h);
            (lhs - rhs).abs() / rhs.abs()
        })
        .collect()
}

/// ∫‖∇h‖² dμ using one-sided differences on grid edges, weighted by the edge mean of μ.
fn dirichlet_form_fd(grid: &GridSpec, mu: &GridMeasure, h: &[f64]) -> f64 {
    let cell = grid.cell_volume();
    let mut acc = 0.0;
    for a in 0..grid.dim() {
        let dx = grid.spacing(a);
        for i in 0..grid.len() {
            if let Some(j) = grid.neighbor(i, a, 1) {
                let m = (0.5 * (mu.log_density[i] + mu.log_density[j])).exp();
                acc += cell * m * ((h[j] - h[i]) / dx).powi(2);
            }
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityTime {
    /// First time with |E f(X_t) − E f(X_∞)| ≤ δ ε(s), if reached.
    pub time: Option<f64>,
    pub censored: bool,
    pub horizon: f64,
}

/// First time the expected objective is within δ·ε(s) of its stationary value.
pub fn time_to_stationarity(
    field: &ScalarField,
    s: f64,
    rho0: &[f64],
    grid: &GridSpec,
    delta: f64,
    dt: f64,
    horizon: f64,
) -> Result<StationarityTime> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("δ must lie in (0, 1), got {delta}")));
    }
    let solver = FpSolver::new(field, s, grid, dt, TimeScheme::Implicit)?;
    solver.validate_start(rho0)?;
    let mu = &solver.measure;
    let eps = epsilon(mu);
    if !(eps > 0.0) {
        return Err(Error::Domain("ε(s) must be positive".into()));
    }
    let values = sample(field, grid)?;
    let risk = |rho: &[f64]| -> f64 { rho.iter().zip(&values).zip(&mu.weights).map(|((r, f), w)| w * r * f).sum() };
    let target: f64 = mu.expectation(&values);
    let mut rho = rho0.to_vec();
    if (risk(&rho) - target).abs() <= delta * eps {
        return Ok(StationarityTime { time: Some(0.0), censored: false, horizon });
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut buf = StepBuffers::default();
    for k in 0..steps {
        solver.step(&mut rho, k, &mut buf)?;
        if (risk(&rho) - target).abs() <= delta * eps {
            return Ok(StationarityTime { time: Some((k + 1) as f64 * dt), censored: false, horizon });
        }
    }
    Ok(StationarityTime { time: None, censored: true, horizon })
}

/// Smooth test functions for the inequality checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    Constant(f64),
    /// h(x) = a·x.
    Linear(Vec<f64>),
    /// h(x) = ½ xᵀAx + b·x with A row-major.
    Quadratic { a: Vec<f64>, b: Vec<f64> },
    /// Sum of amp·exp(−‖x − c‖²/(2w²)).
    Bumps(Vec<Bump>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amp: f64,
}

impl TestFunction {
    /// Random combination of 1–4 Gaussian bumps centred in `[lo, hi]` per axis.
    pub fn random_bumps(lo: &[f64], hi: &[f64], sampler: &mut Sampler) -> Self {
        let n = 1 + (sampler.uniform() * 4.0) as usize;
        let bumps = (0..n)
            .map(|_| {
                let center = lo.iter().zip(hi).map(|(a, b)| sampler.uniform_in(*a, *b)).collect();
                let span = lo.iter().zip(hi).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
                Bump { center, width: sampler.uniform_in(0.05, 0.3) * span, amp: sampler.uniform_in(-1.0, 1.0) }
            })
            .collect();
        TestFunction::Bumps(bumps)
    }

    /// Random quadratic with entries in [−1, 1].
    pub fn random_quadratic(d: usize, sampler: &mut Sampler) -> Self {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = sampler.uniform_in(-1.0, 1.0);
                a[i * d + j] = v;
                a[j * d + i] = v;
            }
        }
        let b = (0..d).map(|_| sampler.uniform_in(-1.0, 1.0)).collect();
        TestFunction::Quadratic { a, b }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Linear(a) => a.iter().zip(x).map(|(p, q)| p * q).sum(),
            TestFunction::Quadratic { a, b } => {
                let d = x.len();
                let mut v = 0.0;
                for i in 0..d {
                    v += b[i] * x[i];
                    for j in 0..d {
                        v += 0.5 * a[i * d + j] * x[i] * x[j];
                    }
                }
                v
            }
            TestFunction::Bumps(bs) => bs.iter().map(|b| b.amp * b.kernel(x)).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            TestFunction::Constant(_) => vec![0.0; d],
            TestFunction::Linear(a) => a.clone(),
            TestFunction::Quadratic { a, b } => {
                (0..d).map(|i| b[i] + (0..d).map(|j| a[i * d + j] * x[j]).sum::<f64>()).collect()
            }
            TestFunction::Bumps(bs) => {
                let mut g = vec![0.0; d];
                for b in bs {
                    let k = b.amp * b.kernel(x);
                    for i in 0..d {
                        g[i] -= k * (x[i] - b.center[i]) / (b.width * b.width);
                    }
                }
                g
            }
        }
    }

    /// Row-major Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            TestFunction::Constant(_) | TestFunction::Linear(_) => vec![0.0; d * d],
            TestFunction::Quadratic { a, .. } => a.clone(),
            TestFunction::Bumps(bs) => {
                let mut h = vec![0.0; d * d];
                for b in bs {
                    let k = b.amp * b.kernel(x);
                    let w2 = b.width * b.width;
                    for i in 0..d {
                        for j in 0..d {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            h[i * d + j] += k * ((x[i] - b.center[i]) * (x[j] - b.center[j]) / (w2 * w2) - delta / w2);
                        }
                    }
                }
                h
            }
        }
    }
}

impl Bump {
    fn kernel(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Slack of one inequality: right side minus left side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl Margin {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, margin: rhs - lhs }
    }
}

fn tabulate(grid: &GridSpec, h: &TestFunction) -> (Vec<f64>, Vec<f64>) {
    let mut vals = Vec::with_capacity(grid.len());
    let mut grad_sq = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.node(i);
        vals.push(h.value(&x));
        grad_sq.push(h.gradient(&x).iter().map(|g| g * g).sum());
    }
    (vals, grad_sq)
}

/// ∫ V_s h² dμ ≤ s ∫‖∇h‖² dμ for mean-centred h.
pub fn key_inequality_check(field: &ScalarField, s: f64, test_fns: &[TestFunction], grid: &GridSpec) -> Result<Vec<Margin>> {
    let mu = gibbs_on_grid(field, s, grid)?;
    let v: Vec<f64> = (0..grid.len())
        .map(|i| crate::spectral::schrodinger_potential(field, s, &grid.node(i)))
        .collect();
    Ok(test_fns
        .iter()
        .map(|h| {
            let (vals, grad_sq) = tabulate(grid, h);
            let mean = mu.expectation(&vals);
            let lhs_vals: Vec<f64> = vals.iter().zip(&v).map(|(h, v)| v * (h - mean).powi(2)).collect();
            Margin::new(mu.expectation(&lhs_vals), s * mu.expectation(&grad_sq))
        })
        .collect())
}

/// Var_μ(h) ≤ (s/2λ_s) ∫‖∇h‖² dμ.
pub fn poincare_check(
    field: &ScalarField,
    s: f64,
    lambda_s: f64,
    test_fns: &[TestFunction],
    grid: &GridSpec,
) -> Result<Vec<Margin>> {
    let mu = gibbs_on_grid(field, s, grid)?;
    Ok(test_fns
        .iter()
        .map(|h| {
            let (vals, grad_sq) = tabulate(grid, h);
            let mean = mu.expectation(&vals);
            let centred: Vec<f64> = vals.iter().map(|v| (v - mean).powi(2)).collect();
            Margin::new(mu.expectation(&centred), s / (2.0 * lambda_s) * mu.expectation(&grad_sq))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    /// min over nodes of Γ₂(g,g) − μΓ(g,g) (μ = 0 when undeclared).
    pub min_margin: f64,
    pub max_gamma: f64,
    pub max_gamma2: f64,
    /// Some(holds) when the field declares μ.
    pub curvature_holds: Option<bool>,
}

/// Tolerance of the nodewise Bakry–Émery assertion.
pub const GAMMA_TOLERANCE: f64 = 1e-10;

/// Γ(g,g) = (s/2)‖∇g‖², Γ₂(g,g) = (s/2)∇gᵀ∇²f∇g + (s²/4)‖∇²g‖²_F, nodewise.
pub fn gamma_calculus_check(field: &ScalarField, s: f64, g_fns: &[TestFunction], grid: &GridSpec) -> Vec<GammaReport> {
    let d = grid.dim();
    let mu = field.strong_convexity();
    g_fns
        .iter()
        .map(|g| {
            let mut min_margin = f64::INFINITY;
            let (mut max_g, mut max_g2) = (0.0f64, 0.0f64);
            for i in 0..grid.len() {
                let x = grid.node(i);
                let dg = g.gradient(&x);
                let hg = g.hessian(&x);
                let hf = field.hessian(&x);
                let gamma = 0.5 * s * dg.iter().map(|v| v * v).sum::<f64>();
                let mut curv = 0.0;
                for p in 0..d {
                    for q in 0..d {
                        curv += dg[p] * hf[p * d + q] * dg[q];
                    }
                }
                let frob: f64 = hg.iter().map(|v| v * v).sum();
                let gamma2 = 0.5 * s * curv + 0.25 * s * s * frob;
                max_g = max_g.max(gamma);
                max_g2 = max_g2.max(gamma2);
                min_margin = min_margin.min(gamma2 - mu.unwrap_or(0.0) * gamma);
            }
            GammaReport {
                min_margin,
                max_gamma: max_g,
                max_gamma2: max_g2,
                curvature_holds: mu.map(|_| min_margin >= -GAMMA_TOLERANCE),
            }
        })
        .collect()
}

/// Ent_μ[h²] ≤ (s/μ) ∫‖∇h‖² dμ for h = √(ρ/μ), with μ the strong-convexity constant.
pub fn log_sobolev_check(rho: &[f64], measure: &GridMeasure, convexity: f64) -> Result<Margin> {
    let h: Vec<f64> = rho
        .iter()
        .zip(&measure.log_density)
        .map(|(r, l)| (r.max(0.0) / l.exp()).sqrt())
        .collect();
    let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
    let z = measure.expectation(&h2);
    let ent_terms: Vec<f64> = h2.iter().map(|v| if *v > 0.0 { v * v.ln() } else { 0.0 }).collect();
    let ent = measure.expectation(&ent_terms) - if z > 0.0 { z * z.ln() } else { 0.0 };
    let dirichlet = dirichlet_form_fd(&measure.grid, measure, &h);
    Ok(Margin::new(ent, measure.s / convexity * dirichlet))
}

/// ‖ρ − μ‖₁² ≤ 2 H(ρ | μ).
pub fn csiszar_kullback_check(rho: &[f64], measure: &GridMeasure) -> Result<Margin> {
    let l1 = l1_distance(&measure.grid, rho, &measure.density());
    Ok(Margin::new(l1 * l1, 2.0 * relative_entropy(rho, measure)?))
}

/// μ·(1 + perturbation) renormalised; the perturbation is a random bump sum scaled to keep positivity.
pub fn random_perturbed_density(measure: &GridMeasure, sampler: &mut Sampler) -> Result<Vec<f64>> {
    let grid = &measure.grid;
    let lo: Vec<f64> = grid.axes.iter().map(|a| a.lower / 2.0).collect();
    let hi: Vec<f64> = grid.axes.iter().map(|a| a.upper / 2.0).collect();
    let h = TestFunction::random_bumps(&lo, &hi, sampler);
    let vals: Vec<f64> = (0..grid.len()).map(|i| h.value(&grid.node(i))).collect();
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let scale = sampler.uniform_in(0.1, 0.9) / peak;
    let mut rho: Vec<f64> = measure
        .log_density
        .iter()
        .zip(&vals)
        .map(|(l, v)| l.exp() * (1.0 + scale * v))
        .collect();
    crate::gibbs::normalize(grid, &mut rho)?;
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySnapshot {
    pub time: f64,
    pub entropy: f64,
    pub csiszar_kullback: Margin,
    /// e^{−2μt} H(ρ₀|μ) − H(ρ_t|μ).
    pub decay: Margin,
    pub log_sobolev: Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecayReport {
    pub snapshots: Vec<EntropySnapshot>,
    /// −slope of log H(ρ_t|μ) against t.
    pub fitted_rate: f64,
    /// Relative slack allowed on the two bounds that are equalities for Gaussians.
    pub relative_tolerance: f64,
    pub all_hold: bool,
}

/// Relative slack for the entropy-decay and log-Sobolev comparisons.
pub const ENTROPY_TOLERANCE: f64 = 1e-3;

/// Csiszár–Kullback, exponential entropy decay and log-Sobolev along an evolution.
pub fn entropy_decay_check(
    field: &ScalarField,
    s: f64,
    rho0: &[f64],
    grid: &GridSpec,
    opts: &FpOptions,
) -> Result<EntropyDecayReport> {
    let convexity = field
        .strong_convexity()
        .ok_or_else(|| Error::Config(format!("{} declares no strong convexity", field.name())))?;
    let solver = FpSolver::new(field, s, grid, opts.dt, opts.scheme)?;
    let snaps = solver.evolve(rho0, &opts.snapshot_times)?;
    let mu = &solver.measure;
    let h0 = relative_entropy(&snaps[0].density, mu)?;
    let mut out = Vec::with_capacity(snaps.len());
    let mut all_hold = true;
    for sn in &snaps {
        let h = relative_entropy(&sn.density, mu)?;
        let ck = csiszar_kullback_check(&sn.density, mu)?;
        let decay = Margin::new(h, (-2.0 * convexity * sn.time).exp() * h0);
        let lsi = log_sobolev_check(&sn.density, mu, convexity)?;
        let floor = 1e-12;
        all_hold &= ck.margin >= -floor;
        all_hold &= decay.margin >= -ENTROPY_TOLERANCE * decay.rhs - floor;
        all_hold &= lsi.margin >= -ENTROPY_TOLERANCE * lsi.rhs - floor;
        out.push(EntropySnapshot { time: sn.time, entropy: h, csiszar_kullback: ck, decay, log_sobolev: lsi });
    }
    let pts: Vec<(f64, f64)> = out.iter().filter(|e| e.entropy > 1e-14).map(|e| (e.time, e.entropy.ln())).collect();
    let fitted_rate = if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        -linear_fit(&x, &y).slope
    } else {
        f64::NAN
    };
    Ok(EntropyDecayReport { snapshots: out, fitted_rate, relative_tolerance: ENTROPY_TOLERANCE, all_hold })
}
