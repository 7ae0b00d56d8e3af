//! Finite-difference Witten operator and its low spectrum.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::grid::{certify_box, sample, BoxCriterion, GridPolicy, GridSpec};
use crate::linalg::{
    dense_smallest, norm, shift_invert_lanczos, tridiagonal_eigenvector, tridiagonal_smallest, CsrMatrix,
};
use crate::noise::Sampler;
use crate::objective::ScalarField;

/// Largest node count solved densely.
pub const DENSE_LIMIT: usize = 2000;

/// Smallest positive eigenvalue the solver will report.
pub const DELTA_FLOOR: f64 = 1e-250;

/// V_s(x) = ‖∇f(x)‖²/s − Δf(x).
pub fn schrodinger_potential(field: &ScalarField, s: f64, x: &[f64]) -> f64 {
    field.gradient_norm_sq(x) / s - field.laplacian(x)
}

/// −s²Δ_h + diag(‖∇f‖² − sΔf) with homogeneous Dirichlet data outside the grid.
#[derive(Debug, Clone)]
pub struct WittenOperator {
    pub grid: GridSpec,
    pub s: f64,
    pub matrix: CsrMatrix,
    pub potential_values: Vec<f64>,
    /// Grid-refined minimum value of f.
    pub f_min: f64,
    values: Vec<f64>,
}

impl WittenOperator {
    /// Sampled e^{−(f − f_min)/s}, normalised in the Euclidean norm.
    pub fn ground_state_guess(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.values.iter().map(|f| (-(f - self.f_min) / self.s).exp()).collect();
        let n = norm(&g);
        g.iter_mut().for_each(|v| *v /= n);
        g
    }
}

pub fn assemble_witten(field: &ScalarField, s: f64, grid: &GridSpec) -> Result<WittenOperator> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("temperature s must be positive, got {s}")));
    }
    if grid.dim() != field.dim() {
        return Err(Error::Config(format!("grid is {}D but field is {}D", grid.dim(), field.dim())));
    }
    let values = sample(field, grid)?;
    let f_min = certify_box(field, grid, &values, s, BoxCriterion::GroundState)?;
    let n = grid.len();
    let d = grid.dim();
    let inv_h2: Vec<f64> = (0..d).map(|a| 1.0 / grid.spacing(a).powi(2)).collect();
    let mut potential_values = Vec::with_capacity(n);
    let mut triplets = Vec::with_capacity(n * (2 * d + 1));
    for idx in 0..n {
        let x = grid.node(idx);
        let v = schrodinger_potential(field, s, &x);
        potential_values.push(v);
        let mut diag = s * v;
        for a in 0..d {
            diag += 2.0 * s * s * inv_h2[a];
            for dir in [-1isize, 1] {
                if let Some(j) = grid.neighbor(idx, a, dir) {
                    triplets.push((idx, j, -s * s * inv_h2[a]));
                }
            }
        }
        triplets.push((idx, idx, diag));
    }
    let matrix = CsrMatrix::from_triplets(n, triplets);
    Ok(WittenOperator { grid: grid.clone(), s, matrix, potential_values, f_min, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense (or tridiagonal bisection) up to [`DENSE_LIMIT`] nodes, shift-invert above.
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub method: EigenMethod,
    pub vectors: bool,
    pub tol: f64,
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { method: EigenMethod::Auto, vectors: true, tol: 1e-10, max_dim: 400, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub s: f64,
    /// δ_{s,0} ≤ δ_{s,1} ≤ …
    #[serde(rename = "delta")]
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    pub lambda_s: f64,
    pub zeta: Vec<f64>,
    pub method: String,
    pub grid: GridSpec,
}

impl Spectrum {
    fn new(s: f64, eigenvalues: Vec<f64>, eigenvectors: Option<Vec<Vec<f64>>>, method: &str, grid: &GridSpec) -> Self {
        let lambda_s = eigenvalues[1] / (2.0 * s);
        let zeta = eigenvalues.iter().map(|d| d / s).collect();
        Self { s, eigenvalues, eigenvectors, lambda_s, zeta, method: method.into(), grid: grid.clone() }
    }

    /// Number of eigenvalues strictly below `threshold`.
    pub fn count_below(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&d| d < threshold).count()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// The `k` smallest eigenpairs with default options.
pub fn smallest_eigs(op: &WittenOperator, k: usize) -> Result<Spectrum> {
    smallest_eigs_with(op, k, &EigenOptions::default())
}

pub fn smallest_eigs_with(op: &WittenOperator, k: usize, opts: &EigenOptions) -> Result<Spectrum> {
    let n = op.grid.len();
    if k < 2 || 4 * k > n {
        return Err(Error::Config(format!("need 2 ≤ k ≪ node count, got k = {k}, n = {n}")));
    }
    let dense = match opts.method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::ShiftInvert => false,
    };
    let mut sampler = Sampler::new(opts.seed);
    let start: Vec<f64> = (0..n).map(|_| sampler.normal()).collect();
    let (vals, vecs, method) = if dense {
        if let Some((d, e)) = op.matrix.tridiagonal() {
            let vals = tridiagonal_smallest(&d, &e, k);
            let vecs = opts
                .vectors
                .then(|| vals.iter().map(|&l| tridiagonal_eigenvector(&d, &e, l, &start)).collect());
            (vals, vecs, "tridiagonal_bisection")
        } else {
            if n > 4 * DENSE_LIMIT {
                return Err(Error::Config(format!("dense eigensolve refused for {n} nodes")));
            }
            let (vals, vecs) = dense_smallest(&op.matrix.to_dense(), k);
            (vals, opts.vectors.then_some(vecs), "dense_symmetric")
        }
    } else {
        let scale = op.matrix.norm_inf();
        let mut c = 1e-9 * scale;
        let result = loop {
            match shift_invert_lanczos(&op.matrix, k, -c, &start, opts.tol, opts.max_dim) {
                Err(Error::Scheme(_)) if c < scale => c *= 10.0,
                other => break other?,
            }
        };
        (result.eigenvalues, opts.vectors.then_some(result.eigenvectors), "shift_invert_lanczos")
    };
    if vals[1] < DELTA_FLOOR {
        return Err(Error::Precision(format!(
            "δ_1 = {:e} is below {DELTA_FLOOR:e}; raise s",
            vals[1]
        )));
    }
    Ok(Spectrum::new(op.s, vals, vecs, method, &op.grid))
}

/// 1 − |⟨φ₀, e^{−f/s}/‖e^{−f/s}‖⟩|.
pub fn ground_state_check(op: &WittenOperator, spectrum: &Spectrum) -> Result<f64> {
    let phi0 = spectrum
        .eigenvectors
        .as_ref()
        .map(|v| &v[0])
        .ok_or_else(|| Error::Config("ground_state_check needs eigenvectors".into()))?;
    let g = op.ground_state_guess();
    let overlap: f64 = phi0.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / norm(phi0);
    Ok(1.0 - overlap.abs())
}

/// Spectral λ_s of `field` at temperature `s` on a certified grid.
pub fn decay_constant(field: &ScalarField, s: f64, policy: &GridPolicy) -> Result<Spectrum> {
    let policy = GridPolicy { criterion: BoxCriterion::GroundState, ..*policy };
    let grid = policy.build(field, s)?;
    let op = assemble_witten(field, s, &grid)?;
    smallest_eigs_with(&op, 3, &EigenOptions { vectors: false, ..Default::default() })
}

/// Regression of log λ_s against 1/s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpLawFit {
    pub s_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// −slope/2.
    pub barrier_estimate: f64,
    /// e^{intercept}.
    pub prefactor_estimate: f64,
}

pub fn exp_law_fit(field: &ScalarField, s_values: &[f64], policy: &GridPolicy) -> Result<ExpLawFit> {
    if s_values.len() < 4 {
        return Err(Error::Config("exp_law_fit needs at least 4 values of s".into()));
    }
    let comparison = field
        .minimizer()
        .map(|x| field.hessian_eigenvalues(x).into_iter().fold(f64::INFINITY, f64::min));
    let mut lambda_values = Vec::with_capacity(s_values.len());
    for &s in s_values {
        let spec = decay_constant(field, s, policy)?;
        if spec.eigenvalues[1] < 1e-14 * spec.eigenvalues[2] {
            return Err(Error::Precision(format!(
                "δ_1/δ_2 = {:e} at s = {s}; raise s or use extended precision",
                spec.eigenvalues[1] / spec.eigenvalues[2]
            )));
        }
        if let Some(mu) = comparison {
            if spec.lambda_s >= 0.5 * mu {
                return Err(Error::Config(format!(
                    "s = {s} is outside the small-s regime (λ_s = {:.4} ≥ half the curvature {mu:.4} at the minimizer)",
                    spec.lambda_s
                )));
            }
        }
        lambda_values.push(spec.lambda_s);
    }
    let x: Vec<f64> = s_values.iter().map(|s| 1.0 / s).collect();
    let y: Vec<f64> = lambda_values.iter().map(|l| l.ln()).collect();
    let fit = linear_fit(&x, &y);
    Ok(ExpLawFit {
        s_values: s_values.to_vec(),
        lambda_values,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        barrier_estimate: -fit.slope / 2.0,
        prefactor_estimate: fit.intercept.exp(),
    })
}

/// λ_{s1}/λ_{s2} under λ_s = α e^{−2H/s}.
pub fn lambda_ratio(barrier: f64, s1: f64, s2: f64) -> f64 {
    (2.0 * barrier * (1.0 / s2 - 1.0 / s1)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Resolution;
    use crate::objective::{double_well_tilted, quadratic_1d, quadratic_2d_paper};

    #[test]
    fn potential_closed_forms() {
        let theta = 1.7;
        let f = quadratic_1d(theta);
        for x in [-1.0, 0.0, 0.4, 2.0] {
            let v = schrodinger_potential(&f, 0.2, &[x]);
            assert!((v - (theta * theta * x * x / 0.2 - theta)).abs() < 1e-12);
        }
        let g = double_well_tilted();
        let xm = g.minimizer().unwrap().to_vec();
        assert!((schrodinger_potential(&g, 0.1, &xm) + g.laplacian(&xm)).abs() < 1e-10);
    }

    #[test]
    fn potential_matches_fd_laplacian() {
        let f = double_well_tilted();
        let (x, s, h) = (2.0, 0.2, 1e-4);
        let lap = (f.value(&[x + h]) - 2.0 * f.value(&[x]) + f.value(&[x - h])) / (h * h);
        let grad = (f.value(&[x + h]) - f.value(&[x - h])) / (2.0 * h);
        let oracle = grad * grad / s - lap;
        assert!((schrodinger_potential(&f, s, &[x]) - oracle).abs() < 1e-6 * oracle.abs().max(1.0));
    }

    #[test]
    fn operator_structure() {
        let f = quadratic_1d(1.0);
        let g = GridSpec::line(-8.0, 8.0, 801).unwrap();
        let op = assemble_witten(&f, 0.1, &g).unwrap();
        assert_eq!(op.matrix.bandwidth(), 1);
        assert!(op.matrix.max_asymmetry() <= 1e-12 * op.matrix.max_abs());
        let mut s = Sampler::new(5);
        for _ in 0..100 {
            let u: Vec<f64> = (0..g.len()).map(|_| s.normal()).collect();
            assert!(op.matrix.quadratic_form(&u) >= -1e-8);
        }
    }

    #[test]
    fn ground_state_is_near_null_vector() {
        let f = double_well_tilted();
        let s = 0.2;
        let mut worst = Vec::new();
        for n in [801, 1601] {
            let g = GridSpec::line(-4.0, 4.0, n).unwrap();
            let op = assemble_witten(&f, s, &g).unwrap();
            let phi = op.ground_state_guess();
            let mut r = vec![0.0; n];
            op.matrix.matvec(&phi, &mut r);
            let interior = (1..n - 1).map(|i| r[i].abs()).fold(0.0, f64::max);
            worst.push(interior);
        }
        // second-order consistency
        assert!(worst[0] / worst[1] > 3.5, "{worst:?}");
    }

    #[test]
    fn harmonic_oscillator_ladder() {
        let (theta, s) = (1.0, 0.1);
        let g = GridSpec::line(-8.0, 8.0, 2000).unwrap();
        let op = assemble_witten(&quadratic_1d(theta), s, &g).unwrap();
        let spec = smallest_eigs(&op, 4).unwrap();
        for (n, d) in spec.eigenvalues.iter().enumerate() {
            let exact = 2.0 * n as f64 * s * theta;
            assert!((d - exact).abs() < 2e-3 * s * theta, "n={n}: {d} vs {exact}");
        }
        assert!((spec.lambda_s - 1.0).abs() < 0.02);
        assert!(spec.eigenvalues[0] / spec.eigenvalues[1] <= 1e-3);
        for (d, z) in spec.eigenvalues.iter().zip(&spec.zeta) {
            assert_eq!(*d, s * z);
        }
        assert!(ground_state_check(&op, &spec).unwrap() <= 1e-6);
    }

    #[test]
    fn shift_invert_matches_tridiagonal_oracle() {
        let f = double_well_tilted();
        let g = GridSpec::line(-4.0, 4.0, 1200).unwrap();
        let op = assemble_witten(&f, 0.2, &g).unwrap();
        let dense = smallest_eigs_with(&op, 4, &EigenOptions { method: EigenMethod::Dense, ..Default::default() }).unwrap();
        let lanczos =
            smallest_eigs_with(&op, 4, &EigenOptions { method: EigenMethod::ShiftInvert, ..Default::default() }).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(&lanczos.eigenvalues).skip(1) {
            assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
        }
        assert!(ground_state_check(&op, &dense).unwrap() <= 1e-4);
        assert!(ground_state_check(&op, &lanczos).unwrap() <= 1e-4);
    }

    #[test]
    fn shift_invert_matches_dense_in_2d() {
        let f = quadratic_2d_paper();
        let g = GridSpec::rect((-8.0, 8.0, 41), (-16.0, 16.0, 45)).unwrap();
        let op = assemble_witten(&f, 0.1, &g).unwrap();
        let dense = smallest_eigs_with(&op, 4, &EigenOptions { method: EigenMethod::Dense, ..Default::default() }).unwrap();
        let lanczos =
            smallest_eigs_with(&op, 4, &EigenOptions { method: EigenMethod::ShiftInvert, ..Default::default() }).unwrap();
        assert_eq!(dense.method, "dense_symmetric");
        for (a, b) in dense.eigenvalues.iter().zip(&lanczos.eigenvalues).skip(1) {
            assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn ground_state_defect_shrinks_under_refinement() {
        let f = double_well_tilted();
        let defects: Vec<f64> = [401, 801]
            .iter()
            .map(|&n| {
                let g = GridSpec::line(-4.0, 4.0, n).unwrap();
                let op = assemble_witten(&f, 0.2, &g).unwrap();
                ground_state_check(&op, &smallest_eigs(&op, 2).unwrap()).unwrap()
            })
            .collect();
        assert!(defects[1] < defects[0], "{defects:?}");
    }

    #[test]
    fn truncation_is_detected() {
        let g = GridSpec::line(-1.0, 1.0, 201).unwrap();
        assert!(matches!(assemble_witten(&quadratic_1d(1.0), 0.1, &g), Err(Error::Truncation(_))));
    }

    #[test]
    fn exp_law_arithmetic() {
        let r = lambda_ratio(0.05, 0.1, 0.001);
        assert!((r / 9.889e42 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn spectrum_json_has_expected_keys() {
        let g = GridSpec::line(-8.0, 8.0, 400).unwrap();
        let op = assemble_witten(&quadratic_1d(1.0), 0.2, &g).unwrap();
        let spec = smallest_eigs(&op, 3).unwrap();
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        for key in ["s", "delta", "lambda_s", "grid"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn decay_constant_uses_ground_state_box() {
        let spec = decay_constant(&quadratic_1d(1.0), 0.2, &GridPolicy::ground_state(Resolution::Spacing(0.01))).unwrap();
        assert!((spec.lambda_s - 1.0).abs() < 0.01);
    }
}
