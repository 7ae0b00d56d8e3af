//! Gibbs measures μ_s ∝ e^{−2f/s} on truncated grids, and distances to them.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{certify_box, sample, BoxCriterion, GridSpec};
use crate::objective::{log_sum_exp, ScalarField};

/// Normalised Gibbs density on a grid.
///
/// Densities are stored in log form so that tiny values far from the minimum
/// keep their relative precision.
#[derive(Debug, Clone, Serialize)]
pub struct GridMeasure {
    pub grid: GridSpec,
    pub s: f64,
    /// Grid-refined global minimum value f*.
    pub f_star: f64,
    /// log Z with Z = ∫ e^{−2(f − f*)/s}.
    pub log_partition: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub log_density: Vec<f64>,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

impl GridMeasure {
    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|l| l.exp()).collect()
    }

    /// Z_s = ∫ e^{−2f/s} over the grid box.
    pub fn partition(&self) -> f64 {
        (self.log_partition - 2.0 * self.f_star / self.s).exp()
    }

    /// ∫ g dμ for nodal values `g`.
    pub fn expectation(&self, g: &[f64]) -> f64 {
        self.log_density
            .iter()
            .zip(&self.weights)
            .zip(g)
            .map(|((l, w), v)| w * l.exp() * v)
            .sum()
    }

    /// ∫ μ, which is one up to rounding.
    pub fn mass(&self) -> f64 {
        self.log_density.iter().zip(&self.weights).map(|(l, w)| w * l.exp()).sum()
    }

    /// Write `x…, density` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.grid.dim()).map(|a| format!("x{a}")).collect();
        header.push("density".into());
        w.write_record(&header)?;
        for idx in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.node(idx).iter().map(|v| format!("{v:.10e}")).collect();
            row.push(format!("{:.10e}", self.log_density[idx].exp()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_temperature(s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("temperature s must be positive, got {s}")));
    }
    Ok(())
}

/// Gibbs density on `grid`; fails if e^{−2(f−f*)/s} ≥ 1e-12 anywhere on the boundary.
pub fn gibbs_on_grid(field: &ScalarField, s: f64, grid: &GridSpec) -> Result<GridMeasure> {
    check_temperature(s)?;
    if grid.dim() != field.dim() {
        return Err(Error::Config(format!("grid is {}D but field is {}D", grid.dim(), field.dim())));
    }
    let values = sample(field, grid)?;
    let f_star = certify_box(field, grid, &values, s, BoxCriterion::Gibbs)?;
    let weights = grid.trapezoid_weights();
    let unnorm: Vec<f64> = values.iter().map(|f| -2.0 * (f - f_star) / s).collect();
    let terms: Vec<f64> = unnorm.iter().zip(&weights).map(|(l, w)| l + w.ln()).collect();
    let log_partition = log_sum_exp(&terms);
    let log_density = unnorm.iter().map(|l| l - log_partition).collect();
    Ok(GridMeasure { grid: grid.clone(), s, f_star, log_partition, values, log_density, weights })
}

/// Excess risk of the stationary law, ε(s) = ∫ (f − f*) dμ_s.
pub fn epsilon_of_s(field: &ScalarField, s: f64, grid: &GridSpec) -> Result<f64> {
    let mu = gibbs_on_grid(field, s, grid)?;
    Ok(epsilon(&mu))
}

pub fn epsilon(mu: &GridMeasure) -> f64 {
    let excess: Vec<f64> = mu.values.iter().map(|f| f - mu.f_star).collect();
    mu.expectation(&excess)
}

/// dε/ds = 2 Var_μ(f) / s².
pub fn epsilon_derivative(field: &ScalarField, s: f64, grid: &GridSpec) -> Result<f64> {
    let mu = gibbs_on_grid(field, s, grid)?;
    Ok(2.0 * variance_of_f(&mu) / (s * s))
}

pub fn variance_of_f(mu: &GridMeasure) -> f64 {
    let eps = epsilon(mu);
    let dev: Vec<f64> = mu.values.iter().map(|f| (f - mu.f_star - eps).powi(2)).collect();
    mu.expectation(&dev)
}

/// (∫ (f − f*)² dμ)^{1/2}, the constant bounding the transient excess risk.
pub fn risk_l2_constant(mu: &GridMeasure) -> f64 {
    let sq: Vec<f64> = mu.values.iter().map(|f| (f - mu.f_star).powi(2)).collect();
    mu.expectation(&sq).sqrt()
}

/// ‖ρ − μ‖_{μ⁻¹} = (∫ (ρ − μ)²/μ)^{1/2} for a nodal density `rho`.
pub fn weighted_l2_distance(rho: &[f64], mu: &GridMeasure) -> Result<f64> {
    if rho.len() != mu.grid.len() {
        return Err(Error::Config("density length does not match grid".into()));
    }
    let mut acc = 0.0;
    for ((r, l), w) in rho.iter().zip(&mu.log_density).zip(&mu.weights) {
        let m = l.exp();
        let term = if m > 0.0 {
            (r - m).powi(2) / m
        } else {
            // (r/m − 1)² m without dividing by an underflowed m
            let ratio_log = r.ln() - l;
            (2.0 * ratio_log + l).exp()
        };
        if !term.is_finite() {
            return Err(Error::WeightedNormOverflow(format!("(ρ − μ)²/μ is not finite (ρ = {r:e})")));
        }
        acc += w * term;
    }
    Ok(acc.sqrt())
}

/// ‖μ_{s1} − μ_{s2}‖_{μ_{s2}⁻¹} for s1 ≥ s2.
///
/// The integrand μ₁²/μ₂ ∝ e^{−(4/s1 − 2/s2) f}; when that exponent is not
/// positive the norm is infinite on ℝᵈ and the grid value is meaningless.
pub fn cross_norm(field: &ScalarField, s1: f64, s2: f64, grid: &GridSpec) -> Result<f64> {
    check_temperature(s1)?;
    check_temperature(s2)?;
    if s1 < s2 {
        return Err(Error::Domain(format!("cross_norm needs s1 ≥ s2, got {s1} < {s2}")));
    }
    let k = 4.0 / s1 - 2.0 / s2;
    if k <= 0.0 {
        return Err(Error::WeightedNormOverflow(format!(
            "μ_{s1}²/μ_{s2} ∝ exp(-({k:.4}) f) does not decay; the norm diverges for s1 ≥ 2 s2"
        )));
    }
    let mu1 = gibbs_on_grid(field, s1, grid)?;
    let mu2 = gibbs_on_grid(field, s2, grid)?;
    let log_int: Vec<f64> = mu1.log_density.iter().zip(&mu2.log_density).map(|(a, b)| 2.0 * a - b).collect();
    let peak = log_int.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let edge = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| log_int[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if edge - peak > -(1e12f64.ln()) {
        return Err(Error::Truncation(format!(
            "cross-norm integrand at the boundary is exp({:.2}) of its peak",
            edge - peak
        )));
    }
    let terms: Vec<f64> = log_int.iter().zip(&mu1.weights).map(|(l, w)| l + w.ln()).collect();
    let chi2 = (log_sum_exp(&terms).exp() - 1.0).max(0.0);
    Ok(chi2.sqrt())
}

/// KL(ρ ‖ μ) = ∫ ρ log(ρ/μ), with 0 log 0 = 0.
pub fn relative_entropy(rho: &[f64], mu: &GridMeasure) -> Result<f64> {
    relative_entropy_log(rho, &mu.log_density, &mu.weights)
}

/// KL divergence against a density given by its logarithm on the same nodes.
pub fn relative_entropy_log(rho: &[f64], log_mu: &[f64], weights: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for ((r, l), w) in rho.iter().zip(log_mu).zip(weights) {
        if *r < 0.0 {
            return Err(Error::Domain(format!("negative density value {r:e}")));
        }
        if *r == 0.0 {
            continue;
        }
        if *l == f64::NEG_INFINITY {
            return Err(Error::Domain("ρ is not absolutely continuous with respect to μ".into()));
        }
        acc += w * r * (r.ln() - l);
    }
    Ok(acc)
}

/// max over interior nodes of |∇·(μ∇f) + (s/2)Δμ|, by central differences.
pub fn stationarity_residual(field: &ScalarField, mu: &GridMeasure) -> f64 {
    let grid = &mu.grid;
    let dens = mu.density();
    let s = mu.s;
    let mut worst = 0.0f64;
    let mut g = vec![0.0; grid.dim()];
    for idx in 0..grid.len() {
        if !grid.is_interior(idx, 1) {
            continue;
        }
        let mut r = 0.0;
        for a in 0..grid.dim() {
            let h = grid.spacing(a);
            let ip = grid.neighbor(idx, a, 1).unwrap();
            let im = grid.neighbor(idx, a, -1).unwrap();
            field.gradient_into(&grid.node(ip), &mut g);
            let fp = dens[ip] * g[a];
            field.gradient_into(&grid.node(im), &mut g);
            let fm = dens[im] * g[a];
            r += (fp - fm) / (2.0 * h);
            r += 0.5 * s * (dens[ip] - 2.0 * dens[idx] + dens[im]) / (h * h);
        }
        worst = worst.max(r.abs());
    }
    worst
}

/// Rescale nodal values to unit trapezoid mass.
pub fn normalize(grid: &GridSpec, values: &mut [f64]) -> Result<()> {
    let w = grid.trapezoid_weights();
    let m: f64 = values.iter().zip(&w).map(|(v, w)| v * w).sum();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("density has non-positive mass {m}")));
    }
    values.iter_mut().for_each(|v| *v /= m);
    Ok(())
}

/// Uniform density on the grid box.
pub fn uniform_density(grid: &GridSpec) -> Vec<f64> {
    let vol: f64 = grid.axes.iter().map(|a| a.upper - a.lower).product();
    vec![1.0 / vol; grid.len()]
}

/// Isotropic Gaussian density with the given mean and variance, renormalised on the grid.
pub fn gaussian_density(grid: &GridSpec, mean: &[f64], var: f64) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
            (-r2 / (2.0 * var)).exp()
        })
        .collect();
    normalize(grid, &mut v)?;
    Ok(v)
}

/// ∫ |ρ − σ| on the grid.
pub fn l1_distance(grid: &GridSpec, rho: &[f64], sigma: &[f64]) -> f64 {
    grid.trapezoid_weights()
        .iter()
        .zip(rho.iter().zip(sigma))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridPolicy, Resolution};
    use crate::objective::{catalog, double_well_tilted, quadratic_1d, quadratic_2d_paper};
    use std::f64::consts::PI;

    fn ou_grid(s: f64, theta: f64) -> GridSpec {
        GridPolicy::gibbs(Resolution::Spacing(0.005)).build(&quadratic_1d(theta), s).unwrap()
    }

    #[test]
    fn ou_measure_is_gaussian() {
        let (s, theta) = (0.2, 1.5);
        let mu = gibbs_on_grid(&quadratic_1d(theta), s, &ou_grid(s, theta)).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-12);
        // Z = √(π s/θ)
        assert!((mu.log_partition - (PI * s / theta).sqrt().ln()).abs() < 1e-8);
        assert!((mu.partition() - (PI * s / theta).sqrt()).abs() < 1e-8);
        let var = s / (2.0 * theta);
        let x2: Vec<f64> = (0..mu.grid.len()).map(|i| mu.grid.node(i)[0].powi(2)).collect();
        assert!((mu.expectation(&x2) - var).abs() < 1e-7);
    }

    #[test]
    fn epsilon_matches_quadratic_closed_form() {
        // ε = s d / 4 for any positive-definite quadratic
        let f = quadratic_2d_paper();
        for s in [0.05, 0.1] {
            let g = GridPolicy::gibbs(Resolution::Nodes(301)).build(&f, s).unwrap();
            let e = epsilon_of_s(&f, s, &g).unwrap();
            assert!((e - s / 2.0).abs() < 1e-6 * s, "s={s} e={e}");
            let de = epsilon_derivative(&f, s, &g).unwrap();
            assert!((de - 0.5).abs() < 1e-4, "dε/ds = {de}");
        }
    }

    #[test]
    fn epsilon_derivative_matches_finite_difference() {
        let f = double_well_tilted();
        let g = GridSpec::line(-4.0, 4.0, 8001).unwrap();
        let s = 0.2;
        let ds = 1e-4;
        let fd = (epsilon_of_s(&f, s + ds, &g).unwrap() - epsilon_of_s(&f, s - ds, &g).unwrap()) / (2.0 * ds);
        let an = epsilon_derivative(&f, s, &g).unwrap();
        assert!((fd - an).abs() < 1e-5 * an.abs(), "{fd} vs {an}");
    }

    #[test]
    fn epsilon_increases_in_s() {
        let f = catalog("multiwell_1d_generic").unwrap();
        let g = GridSpec::line(-4.0, 4.0, 4001).unwrap();
        let mut prev = 0.0;
        for s in [0.02, 0.05, 0.1, 0.2, 0.3] {
            let e = epsilon_of_s(&f, s, &g).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn weighted_distance_is_zero_at_mu_and_matches_gaussian_chi2() {
        let (s, theta) = (0.2, 1.0);
        let g = ou_grid(s, theta);
        let mu = gibbs_on_grid(&quadratic_1d(theta), s, &g).unwrap();
        assert!(weighted_l2_distance(&mu.density(), &mu).unwrap() < 1e-12);
        // χ²(N(0,v1) ‖ N(0,v2)) + 1 = v2 / √(v1 (2 v2 − v1))
        let v2 = s / (2.0 * theta);
        let v1 = 0.6 * v2;
        let rho = gaussian_density(&g, &[0.0], v1).unwrap();
        let exact = (v2 / (v1 * (2.0 * v2 - v1)).sqrt() - 1.0).sqrt();
        let got = weighted_l2_distance(&rho, &mu).unwrap();
        assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
    }

    #[test]
    fn cross_norm_matches_gaussian_and_detects_divergence() {
        let theta = 1.0;
        let f = quadratic_1d(theta);
        let (s1, s2) = (0.1, 0.06);
        let g = GridSpec::line(-3.0, 3.0, 6001).unwrap();
        let v1 = s1 / (2.0 * theta);
        let v2 = s2 / (2.0 * theta);
        let exact = (v2 / (v1 * (2.0 * v2 - v1)).sqrt() - 1.0).sqrt();
        let got = cross_norm(&f, s1, s2, &g).unwrap();
        assert!((got - exact).abs() < 1e-8, "{got} vs {exact}");
        assert_eq!(cross_norm(&f, 0.1, 0.1, &g).unwrap(), 0.0);
        assert!(matches!(cross_norm(&f, 0.1, 0.05, &g), Err(Error::WeightedNormOverflow(_))));
        assert!(matches!(cross_norm(&f, 0.05, 0.1, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_of_gaussians() {
        let (s, theta) = (0.2, 1.0);
        let g = ou_grid(s, theta);
        let mu = gibbs_on_grid(&quadratic_1d(theta), s, &g).unwrap();
        let v = s / (2.0 * theta);
        let m = 0.3;
        let rho = gaussian_density(&g, &[m], v).unwrap();
        let kl = relative_entropy(&rho, &mu).unwrap();
        assert!((kl - m * m / (2.0 * v)).abs() < 1e-8);
        assert!(relative_entropy(&mu.density(), &mu).unwrap().abs() < 1e-12);
        let mut neg = rho.clone();
        neg[0] = -1.0;
        assert!(relative_entropy(&neg, &mu).is_err());
        assert!(relative_entropy_log(&[1.0], &[f64::NEG_INFINITY], &[1.0]).is_err());
    }

    #[test]
    fn stationarity_residual_is_small() {
        let f = double_well_tilted();
        let s = 0.2;
        let g = GridSpec::line(-4.0, 4.0, 16001).unwrap();
        let mu = gibbs_on_grid(&f, s, &g).unwrap();
        let peak = mu.density().iter().cloned().fold(0.0, f64::max);
        assert!(stationarity_residual(&f, &mu) < 1e-4 * peak);
    }

    #[test]
    fn truncated_box_is_rejected() {
        let f = double_well_tilted();
        let g = GridSpec::line(-1.5, 1.5, 301).unwrap();
        assert!(matches!(gibbs_on_grid(&f, 0.2, &g), Err(Error::Truncation(_))));
        assert!(matches!(gibbs_on_grid(&f, -0.1, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_export_round_trips() {
        let f = quadratic_1d(1.0);
        let g = GridSpec::line(-2.0, 2.0, 41).unwrap();
        let mu = gibbs_on_grid(&f, 0.1, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mu.csv");
        mu.write_csv(&path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rdr.records().count(), 41);
    }
}
