//! Analytic test objectives and numerical probes of the regularity conditions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::Sampler;

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A smooth objective with exact gradient and Hessian closures.
///
/// Hessians are written row-major into a `d * d` buffer.
#[derive(Clone)]
pub struct ScalarField {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<VectorFn>,
    hessian: Arc<VectorFn>,
    lipschitz: Option<f64>,
    strong_convexity: Option<f64>,
    minimizer: Option<Vec<f64>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("strong_convexity", &self.strong_convexity)
            .field("minimizer", &self.minimizer)
            .finish()
    }
}

impl ScalarField {
    pub fn new<V, G, H>(name: impl Into<String>, dim: usize, value: V, gradient: G, hessian: H) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim > 0, "dimension must be positive");
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            lipschitz: None,
            strong_convexity: None,
            minimizer: None,
        }
    }

    /// Builds a one-dimensional field from scalar closures for f, f' and f''.
    pub fn from_1d<V, G, H>(name: impl Into<String>, value: V, derivative: G, second: H) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            name,
            1,
            move |x| value(x[0]),
            move |x, g| g[0] = derivative(x[0]),
            move |x, h| h[0] = second(x[0]),
        )
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_strong_convexity(mut self, mu: f64) -> Self {
        self.strong_convexity = Some(mu);
        self
    }

    /// Records the global minimizer; the minimum value is derived from it.
    pub fn with_minimizer(mut self, x: Vec<f64>) -> Self {
        assert_eq!(x.len(), self.dim);
        self.minimizer = Some(x);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    /// f* when the global minimizer is declared.
    pub fn minimum_value(&self) -> Option<f64> {
        self.minimizer.as_ref().map(|x| self.value(x))
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    #[inline]
    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hessian_into(x, &mut h);
        h
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let h = self.hessian(x);
        (0..self.dim).map(|i| h[i * self.dim + i]).sum()
    }

    pub fn gradient_norm_sq(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum()
    }

    /// Hessian eigenvalues sorted in decreasing order.
    pub fn hessian_eigenvalues(&self, x: &[f64]) -> Vec<f64> {
        let h = DMatrix::from_row_slice(self.dim, self.dim, &self.hessian(x));
        let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        eig
    }

    /// The field `factor * f`, with metadata rescaled accordingly.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        let (v, g, h) = (self.value.clone(), self.gradient.clone(), self.hessian.clone());
        Self {
            name: format!("{}*{}", factor, self.name),
            dim: self.dim,
            value: Arc::new(move |x| factor * v(x)),
            gradient: Arc::new(move |x, out| {
                g(x, out);
                out.iter_mut().for_each(|o| *o *= factor);
            }),
            hessian: Arc::new(move |x, out| {
                h(x, out);
                out.iter_mut().for_each(|o| *o *= factor);
            }),
            lipschitz: self.lipschitz.map(|l| l * factor),
            strong_convexity: self.strong_convexity.map(|m| m * factor),
            minimizer: self.minimizer.clone(),
        }
    }

    /// Replaces the gradient closure, keeping value and Hessian.
    ///
    /// Used for fault injection: the derivative checks must flag the result.
    pub fn with_gradient<G>(&self, gradient: G) -> Self
    where
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let mut out = self.clone();
        out.gradient = Arc::new(gradient);
        out
    }

    pub(crate) fn checked_value(&self, x: &[f64]) -> Result<f64> {
        let v = self.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { location: x.to_vec() })
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog

/// Stable catalog names referenced from experiment configs.
pub const CATALOG: &[&str] = &[
    "quadratic_1d",
    "quadratic_2d_paper",
    "nonconvex_2d_paper",
    "double_well_tilted",
    "multiwell_1d_generic",
    "multiwell_1d_degenerate",
    "symmetric_double_well",
    "double_well_2d",
    "ring_1saddle",
    "constant_1d",
    "linear_1d",
];

/// Catalog entries with at least two local minima.
pub const MULTIWELL: &[&str] = &[
    "nonconvex_2d_paper",
    "double_well_tilted",
    "multiwell_1d_generic",
    "multiwell_1d_degenerate",
    "symmetric_double_well",
    "double_well_2d",
];

/// Looks up a catalog entry. `quadratic_1d` accepts an optional curvature,
/// e.g. `quadratic_1d(2.5)`; the bare name means θ = 1.
pub fn catalog(name: &str) -> Result<ScalarField> {
    let name = name.trim();
    if let Some(theta) = parse_param(name, "quadratic_1d") {
        let theta = theta?;
        return Ok(quadratic_1d(theta));
    }
    let field = match name {
        "quadratic_2d_paper" => quadratic_2d_paper(),
        "nonconvex_2d_paper" => nonconvex_2d_paper(),
        "double_well_tilted" => double_well_tilted(),
        "multiwell_1d_generic" => multiwell_1d_generic(),
        "multiwell_1d_degenerate" => multiwell_1d_degenerate(),
        "symmetric_double_well" => symmetric_double_well(),
        "double_well_2d" => double_well_2d(),
        "ring_1saddle" => ring_1saddle(),
        "constant_1d" => constant_1d(),
        "linear_1d" => linear_1d(),
        _ => {
            return Err(Error::Catalog {
                name: name.to_string(),
                available: CATALOG.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    Ok(field)
}

fn parse_param(name: &str, base: &str) -> Option<Result<f64>> {
    let rest = name.strip_prefix(base)?;
    if rest.is_empty() {
        return Some(Ok(1.0));
    }
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(
        inner
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0 && t.is_finite())
            .ok_or_else(|| Error::Config(format!("invalid curvature in `{name}`"))),
    )
}

/// f(x) = θx²/2.
pub fn quadratic_1d(theta: f64) -> ScalarField {
    assert!(theta > 0.0);
    ScalarField::from_1d(
        if theta == 1.0 {
            "quadratic_1d".to_string()
        } else {
            format!("quadratic_1d({theta})")
        },
        move |x| 0.5 * theta * x * x,
        move |x| theta * x,
        move |_| theta,
    )
    .with_lipschitz(theta)
    .with_strong_convexity(theta)
    .with_minimizer(vec![0.0])
}

/// f(x) = 5e-2 x₁² + 2.5e-2 x₂².
pub fn quadratic_2d_paper() -> ScalarField {
    const A: f64 = 5e-2;
    const B: f64 = 2.5e-2;
    ScalarField::new(
        "quadratic_2d_paper",
        2,
        |x| A * x[0] * x[0] + B * x[1] * x[1],
        |x, g| {
            g[0] = 2.0 * A * x[0];
            g[1] = 2.0 * B * x[1];
        },
        |_, h| {
            h[0] = 2.0 * A;
            h[1] = 0.0;
            h[2] = 0.0;
            h[3] = 2.0 * B;
        },
    )
    .with_lipschitz(2.0 * A)
    .with_strong_convexity(2.0 * B)
    .with_minimizer(vec![0.0, 0.0])
}

/// f = [(x₁+0.7)²+0.1](x₁−0.7)² + (x₂+0.7)²[(x₂−0.7)²+0.1], evaluated in product form.
pub fn nonconvex_2d_paper() -> ScalarField {
    // first factor: a(x) = (x+0.7)^2 + 0.1, b(x) = (x-0.7)^2
    fn first(x: f64) -> (f64, f64, f64) {
        let a = (x + 0.7) * (x + 0.7) + 0.1;
        let da = 2.0 * (x + 0.7);
        let b = (x - 0.7) * (x - 0.7);
        let db = 2.0 * (x - 0.7);
        (a * b, da * b + a * db, 2.0 * b + 2.0 * da * db + 2.0 * a)
    }
    // second factor: c(x) = (x+0.7)^2, e(x) = (x-0.7)^2 + 0.1
    fn second(x: f64) -> (f64, f64, f64) {
        let c = (x + 0.7) * (x + 0.7);
        let dc = 2.0 * (x + 0.7);
        let e = (x - 0.7) * (x - 0.7) + 0.1;
        let de = 2.0 * (x - 0.7);
        (c * e, dc * e + c * de, 2.0 * e + 2.0 * dc * de + 2.0 * c)
    }
    ScalarField::new(
        "nonconvex_2d_paper",
        2,
        |x| first(x[0]).0 + second(x[1]).0,
        |x, g| {
            g[0] = first(x[0]).1;
            g[1] = second(x[1]).1;
        },
        |x, h| {
            h[0] = first(x[0]).2;
            h[1] = 0.0;
            h[2] = 0.0;
            h[3] = second(x[1]).2;
        },
    )
    .with_minimizer(vec![0.7, -0.7])
}

/// f(x) = x⁴/4 − x²/2 + 0.3x.
pub fn double_well_tilted() -> ScalarField {
    let field = ScalarField::from_1d(
        "double_well_tilted",
        |x| 0.25 * x.powi(4) - 0.5 * x * x + 0.3 * x,
        |x| x * x * x - x + 0.3,
        |x| 3.0 * x * x - 1.0,
    );
    let xstar = newton(&field, &[-1.1], 1e-14, 50).expect("tilted well minimizer");
    field.with_minimizer(xstar)
}

/// Dense polynomial in ascending coefficient order.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn from_roots(roots: &[f64]) -> Self {
        let mut c = vec![1.0];
        for &r in roots {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i + 1] += ci;
                next[i] -= r * ci;
            }
            c = next;
        }
        Poly(c)
    }

    fn integral(&self) -> Self {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(i, a)| a / (i + 1) as f64));
        Poly(c)
    }

    fn derivative(&self) -> Self {
        Poly(self.0.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect())
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }
}

fn polynomial_field(name: &str, derivative_roots: &[f64], minimizer: f64) -> ScalarField {
    let d1 = Poly::from_roots(derivative_roots);
    let f = d1.integral();
    let d2 = d1.derivative();
    ScalarField::from_1d(name, move |x| f.eval(x), move |x| d1.eval(x), move |x| d2.eval(x))
        .with_minimizer(vec![minimizer])
}

/// Roots of f′ at the critical points of [`multiwell_1d_generic`].
pub const GENERIC_CRITICAL_POINTS: [f64; 5] = [-1.7, -0.9, 0.1, 1.0, 1.8];

/// Sextic with minima at −1.7, 0.1, 1.8 and maxima at −0.9, 1.0; all critical
/// values and barriers distinct.
pub fn multiwell_1d_generic() -> ScalarField {
    polynomial_field("multiwell_1d_generic", &GENERIC_CRITICAL_POINTS, 1.8)
}

/// f = x⁶/6 − 5x⁴/4 + 2x²: minima at 0 and ±2 (the outer pair tied), maxima at ±1 (tied).
pub fn multiwell_1d_degenerate() -> ScalarField {
    polynomial_field("multiwell_1d_degenerate", &[-2.0, -1.0, 0.0, 1.0, 2.0], 2.0)
}

/// f = (x² − 1)²/4.
pub fn symmetric_double_well() -> ScalarField {
    ScalarField::from_1d(
        "symmetric_double_well",
        |x| 0.25 * (x * x - 1.0).powi(2),
        |x| x * (x * x - 1.0),
        |x| 3.0 * x * x - 1.0,
    )
    .with_minimizer(vec![1.0])
}

/// f = x⁴ − x² + y²: two symmetric wells joined by an index-1 saddle at the origin.
pub fn double_well_2d() -> ScalarField {
    ScalarField::new(
        "double_well_2d",
        2,
        |x| x[0].powi(4) - x[0] * x[0] + x[1] * x[1],
        |x, g| {
            g[0] = 4.0 * x[0].powi(3) - 2.0 * x[0];
            g[1] = 2.0 * x[1];
        },
        |x, h| {
            h[0] = 12.0 * x[0] * x[0] - 2.0;
            h[1] = 0.0;
            h[2] = 0.0;
            h[3] = 2.0;
        },
    )
    .with_minimizer(vec![std::f64::consts::FRAC_1_SQRT_2, 0.0])
}

/// f = (x² + y² − 1)² + x/4: a ring valley whose single index-1 saddle does not separate.
pub fn ring_1saddle() -> ScalarField {
    let field = ScalarField::new(
        "ring_1saddle",
        2,
        |x| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            (r2 - 1.0).powi(2) + 0.25 * x[0]
        },
        |x, g| {
            let r2m = x[0] * x[0] + x[1] * x[1] - 1.0;
            g[0] = 4.0 * r2m * x[0] + 0.25;
            g[1] = 4.0 * r2m * x[1];
        },
        |x, h| {
            let r2m = x[0] * x[0] + x[1] * x[1] - 1.0;
            h[0] = 4.0 * r2m + 8.0 * x[0] * x[0];
            h[1] = 8.0 * x[0] * x[1];
            h[2] = h[1];
            h[3] = 4.0 * r2m + 8.0 * x[1] * x[1];
        },
    );
    let xstar = newton(&field, &[-1.03, 0.0], 1e-12, 50).expect("ring minimizer");
    field.with_minimizer(xstar)
}

/// f ≡ 0; fails every growth condition.
pub fn constant_1d() -> ScalarField {
    ScalarField::from_1d("constant_1d", |_| 0.0, |_| 0.0, |_| 0.0).with_minimizer(vec![0.0])
}

/// f(x) = x; e^{−2f/s} is not integrable.
pub fn linear_1d() -> ScalarField {
    ScalarField::from_1d("linear_1d", |x| x, |_| 1.0, |_| 0.0)
}

// ---------------------------------------------------------------------------
// Newton on the gradient

/// Newton iteration on ∇f = 0 from `x0`. Returns `None` when the Hessian is
/// singular, the iterate leaves a sane range, or the tolerance is not met.
pub(crate) fn newton(field: &ScalarField, x0: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let d = field.dim();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    for _ in 0..max_iter {
        field.gradient_into(&x, &mut g);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !gnorm.is_finite() {
            return None;
        }
        if gnorm <= tol {
            return Some(x);
        }
        field.hessian_into(&x, &mut h);
        let step = DMatrix::from_row_slice(d, d, &h)
            .lu()
            .solve(&DVector::from_column_slice(&g))?;
        for i in 0..d {
            x[i] -= step[i];
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return None;
        }
    }
    field.gradient_into(&x, &mut g);
    (g.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol).then_some(x)
}

// ---------------------------------------------------------------------------
// Derivative verification

/// Worst relative discrepancy between analytic and finite-difference derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub gradient_rel_error: f64,
    pub hessian_rel_error: f64,
    pub hessian_asymmetry: f64,
    pub probes: usize,
}

impl DerivativeCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.gradient_rel_error <= tol && self.hessian_rel_error <= tol && self.hessian_asymmetry <= tol
    }
}

/// Central-difference step: cube root of machine epsilon scaled by max(1, ‖x‖).
pub fn fd_step(x: &[f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    f64::EPSILON.cbrt() * norm.max(1.0)
}

/// Compares analytic gradient/Hessian against central differences at random
/// probes drawn uniformly from `[-half_width, half_width]^d`.
pub fn check_derivatives(field: &ScalarField, probes: usize, half_width: f64, seed: u64) -> DerivativeCheck {
    let d = field.dim();
    let mut sampler = Sampler::new(seed);
    let (mut gerr, mut herr, mut asym) = (0.0f64, 0.0f64, 0.0f64);
    let mut xp = vec![0.0; d];
    let mut xm = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    for _ in 0..probes {
        let x: Vec<f64> = (0..d).map(|_| sampler.uniform_in(-half_width, half_width)).collect();
        let h = fd_step(&x);
        let g = field.gradient(&x);
        let hess = field.hessian(&x);
        let gscale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let hscale = hess.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            xp.copy_from_slice(&x);
            xm.copy_from_slice(&x);
            xp[i] += h;
            xm[i] -= h;
            let fd = (field.value(&xp) - field.value(&xm)) / (2.0 * h);
            gerr = gerr.max((fd - g[i]).abs() / gscale);
            field.gradient_into(&xp, &mut gp);
            field.gradient_into(&xm, &mut gm);
            for j in 0..d {
                let fd = (gp[j] - gm[j]) / (2.0 * h);
                herr = herr.max((fd - hess[j * d + i]).abs() / hscale);
                asym = asym.max((hess[i * d + j] - hess[j * d + i]).abs() / hscale);
            }
        }
    }
    DerivativeCheck {
        gradient_rel_error: gerr,
        hessian_rel_error: herr,
        hessian_asymmetry: asym,
        probes,
    }
}

// ---------------------------------------------------------------------------
// Conditions at infinity

/// Outcome of probing the confining and Villani conditions on finite shells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub confining_ok: bool,
    pub villani_ok: bool,
    pub probe_radii: Vec<f64>,
    pub min_potential_on_shells: Vec<f64>,
    /// Relative Gibbs mass outside the largest probe ball.
    pub integrability_tail: f64,
}

/// Tail mass below which e^{−2f/s} counts as integrable.
pub const TAIL_THRESHOLD: f64 = 1e-10;

const ANGULAR_SAMPLES: usize = 2048;

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::Config("at least three probe radii are required".into()));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("probe radii must be positive and strictly increasing".into()));
    }
    Ok(())
}

fn shell_points(dim: usize, r: f64, samples: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![-r], vec![r]],
        2 => (0..samples)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / samples as f64;
                vec![r * a.cos(), r * a.sin()]
            })
            .collect(),
        _ => panic!("shell probes are implemented for d <= 2"),
    }
}

fn shell_min(field: &ScalarField, r: f64, eval: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let mut best = f64::INFINITY;
    for p in shell_points(field.dim(), r, ANGULAR_SAMPLES) {
        let v = eval(&p);
        if !v.is_finite() {
            return Err(Error::Evaluation { location: p });
        }
        best = best.min(v);
    }
    Ok(best)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Relative mass of e^{−2f/s} outside the ball of radius `r` (log-domain radial quadrature).
fn tail_mass(field: &ScalarField, s: f64, r: f64) -> Result<f64> {
    let dim = field.dim();
    let samples = if dim == 1 { 2 } else { 256 };
    let nr_inner = 4000usize;
    let dr = r / nr_inner as f64;
    // log of the shell-integrated weight at radius rho (without the dr factor)
    let shell_log = |rho: f64| -> Result<Vec<f64>> {
        let pts = shell_points(dim, rho, samples);
        let jac = if dim == 1 { 1.0 } else { rho * std::f64::consts::TAU / samples as f64 };
        pts.iter()
            .map(|p| {
                let v = field.checked_value(p)?;
                Ok(-2.0 * v / s + jac.max(f64::MIN_POSITIVE).ln())
            })
            .collect()
    };
    let mut inner = Vec::new();
    for i in 0..nr_inner {
        let rho = (i as f64 + 0.5) * dr;
        inner.extend(shell_log(rho)?);
    }
    // march outward until the integrand has decayed far below the running maximum
    let mut outer = Vec::new();
    let mut i = 0usize;
    let reference = log_sum_exp(&inner);
    loop {
        let rho = r + (i as f64 + 0.5) * dr;
        let shell = shell_log(rho)?;
        let peak = shell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        outer.extend(shell);
        i += 1;
        if peak < reference - 60.0 && i > 10 {
            break;
        }
        if peak > reference + 50.0 {
            return Ok(f64::INFINITY);
        }
        if rho > 1e3 * r.max(1.0) || !peak.is_finite() {
            return Ok(f64::INFINITY);
        }
    }
    let log_in = log_sum_exp(&inner);
    let log_out = log_sum_exp(&outer);
    let ratio = (log_out - log_in).exp();
    Ok(ratio / (1.0 + ratio))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Probes the confining condition: f must grow across shells and the Gibbs
/// tail beyond the largest radius must be negligible.
pub fn check_confining(field: &ScalarField, s: f64, radii: &[f64]) -> Result<ConditionReport> {
    validate_radii(radii)?;
    if s <= 0.0 {
        return Err(Error::Config("s must be positive".into()));
    }
    let minima = radii
        .iter()
        .map(|&r| shell_min(field, r, |x| field.value(x)))
        .collect::<Result<Vec<_>>>()?;
    let tail = tail_mass(field, s, *radii.last().unwrap())?;
    let villani = villani_minima(field, s, radii)?;
    Ok(ConditionReport {
        confining_ok: strictly_increasing(&minima) && tail < TAIL_THRESHOLD,
        villani_ok: villani_holds(&villani),
        probe_radii: radii.to_vec(),
        min_potential_on_shells: villani,
        integrability_tail: tail,
    })
}

fn villani_minima(field: &ScalarField, s: f64, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| shell_min(field, r, |x| field.gradient_norm_sq(x) / s - field.laplacian(x)))
        .collect()
}

fn villani_holds(minima: &[f64]) -> bool {
    strictly_increasing(minima) && minima.last().is_some_and(|v| *v > 0.0)
}

/// Probes the Villani condition on V_s = ‖∇f‖²/s − Δf.
pub fn check_villani(field: &ScalarField, s: f64, radii: &[f64]) -> Result<ConditionReport> {
    check_confining(field, s, radii)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lookup_and_errors() {
        for name in CATALOG {
            let f = catalog(name).unwrap();
            assert!(f.dim() == 1 || f.dim() == 2);
        }
        let q = catalog("quadratic_1d(2.5)").unwrap();
        assert_eq!(q.value(&[2.0]), 5.0);
        match catalog("rosenbrock") {
            Err(Error::Catalog { available, .. }) => assert!(available.contains(&"double_well_tilted".to_string())),
            other => panic!("expected catalog error, got {other:?}"),
        }
        assert!(matches!(catalog("quadratic_1d(-1)"), Err(Error::Config(_))));
    }

    #[test]
    fn quadratic_2d_coefficients() {
        let f = quadratic_2d_paper();
        assert_eq!(f.value(&[1.0, 0.0]), 5e-2);
        assert_eq!(f.value(&[0.0, 1.0]), 2.5e-2);
        assert_eq!(f.strong_convexity(), Some(0.05));
        assert_eq!(f.lipschitz(), Some(0.1));
    }

    #[test]
    fn nonconvex_2d_product_form() {
        let f = nonconvex_2d_paper();
        let (x1, x2) = (0.3f64, -1.2f64);
        let expect = ((x1 + 0.7).powi(2) + 0.1) * (x1 - 0.7).powi(2)
            + (x2 + 0.7).powi(2) * ((x2 - 0.7).powi(2) + 0.1);
        assert_eq!(f.value(&[x1, x2]), expect);
        assert_eq!(f.minimum_value(), Some(0.0));
    }

    #[test]
    fn polynomial_from_roots() {
        let p = Poly::from_roots(&[1.0, -2.0]);
        assert_eq!(p.0, vec![-2.0, 1.0, 1.0]);
        assert_eq!(p.integral().eval(1.0), -2.0 + 0.5 + 1.0 / 3.0);
        let f = multiwell_1d_generic();
        for r in GENERIC_CRITICAL_POINTS {
            assert!(f.gradient(&[r])[0].abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_checks_for_every_entry() {
        for name in CATALOG {
            let f = catalog(name).unwrap();
            let report = check_derivatives(&f, 100, 3.0, 11);
            assert!(report.passes(1e-6), "{name}: {report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let f = double_well_tilted();
        let bad = f.with_gradient(|x, g| g[0] = x[0].powi(3) - x[0] + 0.31);
        assert!(!check_derivatives(&bad, 20, 3.0, 1).passes(1e-6));
    }

    #[test]
    fn strongly_convex_entries_respect_mu() {
        let mut sampler = Sampler::new(5);
        for f in [quadratic_1d(1.0), quadratic_1d(3.0), quadratic_2d_paper()] {
            let mu = f.strong_convexity().unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..f.dim()).map(|_| sampler.uniform_in(-3.0, 3.0)).collect();
                let eig = f.hessian_eigenvalues(&x);
                assert!(*eig.last().unwrap() >= mu - 1e-15);
            }
        }
    }

    #[test]
    fn newton_finds_tilted_minimum() {
        let f = double_well_tilted();
        let x = f.minimizer().unwrap()[0];
        assert!((x + 1.125_418_78).abs() < 1e-7);
        assert!(newton(&f, &[0.3], 1e-12, 50).is_some());
    }

    #[test]
    fn radii_validation() {
        let f = quadratic_1d(1.0);
        assert!(matches!(check_confining(&f, 0.1, &[1.0, 2.0]), Err(Error::Config(_))));
        assert!(matches!(check_villani(&f, 0.1, &[1.0, 3.0, 2.0]), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_probe_reports_location() {
        let f = ScalarField::from_1d("log", |x: f64| -x.ln(), |x| -1.0 / x, |x| 1.0 / (x * x));
        match check_confining(&f, 0.1, &[1.0, 2.0, 3.0]) {
            Err(Error::Evaluation { location }) => assert_eq!(location, vec![-1.0]),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn confining_examples() {
        let q = quadratic_2d_paper();
        assert!(check_confining(&q, 0.1, &[2.0, 4.0, 8.0, 16.0]).unwrap().confining_ok);
        let lin = linear_1d();
        assert!(!check_confining(&lin, 0.1, &[2.0, 4.0, 8.0]).unwrap().confining_ok);
        let dw = double_well_tilted();
        let report = check_confining(&dw, 0.2, &[2.0, 4.0, 8.0]).unwrap();
        assert!(report.confining_ok, "{report:?}");
    }

    #[test]
    fn villani_examples() {
        for s in [0.01, 0.1, 1.0] {
            assert!(check_villani(&quadratic_1d(1.0), s, &[2.0, 4.0, 8.0]).unwrap().villani_ok);
            assert!(check_villani(&quadratic_2d_paper(), s, &[2.0, 4.0, 8.0]).unwrap().villani_ok);
        }
        assert!(!check_villani(&constant_1d(), 0.1, &[2.0, 4.0, 8.0]).unwrap().villani_ok);
        let r = check_villani(&nonconvex_2d_paper(), 0.1, &[2.0, 4.0, 8.0]).unwrap();
        assert!(r.villani_ok, "{r:?}");
        // closed form V_s = θ²x²/s − θ for θ = 1
        let r = check_villani(&quadratic_1d(1.0), 0.1, &[2.0, 4.0, 8.0]).unwrap();
        for (rad, v) in r.probe_radii.iter().zip(&r.min_potential_on_shells) {
            assert!((v - (rad * rad / 0.1 - 1.0)).abs() < 1e-9);
        }
    }
}
