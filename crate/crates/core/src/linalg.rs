//! Sparse symmetric matrices, banded Cholesky, tridiagonal eigensolvers and
//! shift-invert Lanczos.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[i] = acc;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.data[self.indptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max |A_ij − A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                worst = worst.max((self.data[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[self.indptr[i]..self.indptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn bandwidth(&self) -> usize {
        let mut b = 0;
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                b = b.max(self.indices[p].abs_diff(i));
            }
        }
        b
    }

    /// Diagonal and off-diagonal of a symmetric tridiagonal matrix.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.bandwidth() > 1 {
            return None;
        }
        let d = self.diagonal();
        let e = (0..self.n.saturating_sub(1)).map(|i| self.get(i, i + 1)).collect();
        Some((d, e))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.indptr[i]..self.indptr[i + 1] {
                m[(i, self.indices[p])] = self.data[p];
            }
        }
        m
    }

    /// x·Ax.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        dot(x, &y)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cholesky factor of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    b: usize,
    /// Row i holds L[i][i−b..=i] at offsets 0..=b.
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factor `A + shift·I`. Returns `None` if it is not positive definite.
    pub fn factor(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.n;
        let b = a.bandwidth();
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for p in a.indptr[i]..a.indptr[i + 1] {
                let j = a.indices[p];
                if j <= i {
                    l[i * w + (j + b - i)] = a.data[p];
                }
            }
            l[i * w + b] += shift;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(b));
                let ri = &l[i * w + (k0 + b - i)..i * w + (j + b - i)];
                let rj = &l[j * w + (k0 + b - j)..j * w + b];
                let s = l[i * w + (j + b - i)] - dot(ri, rj);
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * w + b] = s.sqrt();
                } else {
                    l[i * w + (j + b - i)] = s / l[j * w + b];
                }
            }
        }
        Some(Self { n, b, l })
    }

    pub fn solve(&self, x: &mut [f64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            let s = dot(&self.l[i * w + (j0 + b - i)..i * w + b], &x[j0..i]);
            x[i] = (x[i] - s) / self.l[i * w + b];
        }
        for i in (0..n).rev() {
            x[i] /= self.l[i * w + b];
            let xi = x[i];
            let j0 = i.saturating_sub(b);
            for j in j0..i {
                x[j] -= self.l[i * w + (j + b - i)] * xi;
            }
        }
    }
}

/// Thomas algorithm for `lower[i] x[i−1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n−1]` are ignored. Intended for diagonally dominant systems.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut Vec<f64>) {
    let n = diag.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    c[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) strictly below x.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = d[0] - x;
    for i in 0..d.len() {
        if i > 0 {
            q = d[i] - x - e[i - 1] * e[i - 1] / q;
        }
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k` smallest eigenvalues of a symmetric tridiagonal matrix, by bisection.
pub fn tridiagonal_smallest(d: &[f64], e: &[f64], k: usize) -> Vec<f64> {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs());
    (0..k.min(n))
        .map(|j| {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if sturm_count(d, e, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a <= 2.0 * f64::EPSILON * (a.abs().max(b.abs())).max(1e-300 * scale) {
                    break;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Eigenvector of a symmetric tridiagonal matrix for eigenvalue `lambda`, by inverse iteration.
pub fn tridiagonal_eigenvector(d: &[f64], e: &[f64], lambda: f64, start: &[f64]) -> Vec<f64> {
    let scale = d.iter().chain(e).fold(0.0f64, |m, v| m.max(v.abs()));
    let shift = lambda - 1e3 * f64::EPSILON * scale.max(lambda.abs());
    let mut x = start.to_vec();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    for _ in 0..3 {
        x = tridiagonal_shifted_solve(d, e, shift, &x);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
    }
    x
}

/// Solve (T − shift·I) x = rhs by Gaussian elimination with partial pivoting.
fn tridiagonal_shifted_solve(d: &[f64], e: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        return vec![rhs[0] / (d[0] - shift)];
    }
    // upper factor rows: diagonal, first and second superdiagonal
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    let tiny = f64::EPSILON * d.iter().chain(e).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    // current row i has entries (a_ii, a_i,i+1, 0)
    let mut cur = (d[0] - shift, e[0], 0.0);
    for i in 0..n - 1 {
        let sub = e[i];
        let next = (d[i + 1] - shift, if i + 2 < n { e[i + 1] } else { 0.0 });
        if cur.0.abs() >= sub.abs() {
            let m = if cur.0 != 0.0 { sub / cur.0 } else { 0.0 };
            u0[i] = cur.0;
            u1[i] = cur.1;
            u2[i] = cur.2;
            b[i + 1] -= m * b[i];
            cur = (next.0 - m * cur.1, next.1 - m * cur.2, 0.0);
        } else {
            let m = cur.0 / sub;
            u0[i] = sub;
            u1[i] = next.0;
            u2[i] = next.1;
            b.swap(i, i + 1);
            b[i + 1] -= m * b[i];
            cur = (cur.1 - m * next.0, cur.2 - m * next.1, 0.0);
        }
    }
    u0[n - 1] = if cur.0.abs() < tiny { tiny } else { cur.0 };
    for i in 0..n - 1 {
        if u0[i].abs() < tiny {
            u0[i] = tiny;
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}

/// Eigenpairs of a small dense symmetric matrix, ascending.
pub fn dense_smallest(a: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let k = k.min(order.len());
    let vals = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..k].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    (vals, vecs)
}

/// Result of a shift-invert Lanczos run.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// ‖A x − δ x‖ for each returned pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// `k` eigenvalues of symmetric `a` nearest to `sigma` from below, for `sigma` below the spectrum.
///
/// Runs Lanczos with full reorthogonalisation on (A − σI)⁻¹, factoring A − σI
/// by banded Cholesky. Returns a solver error carrying the residual norms if
/// the `k` Ritz pairs do not converge within `max_dim` steps.
pub fn shift_invert_lanczos(
    a: &CsrMatrix,
    k: usize,
    sigma: f64,
    start: &[f64],
    tol: f64,
    max_dim: usize,
) -> Result<LanczosResult> {
    let n = a.n;
    let chol = BandCholesky::factor(a, -sigma)
        .ok_or_else(|| Error::Scheme(format!("A − ({sigma})·I is not positive definite")))?;
    let max_dim = max_dim.min(n);
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = start.to_vec();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    q.push(v);
    let anorm = a.norm_inf();
    let mut j = 0;
    loop {
        let mut w = q[j].clone();
        chol.solve(&mut w);
        let aj = dot(&w, &q[j]);
        alpha.push(aj);
        for _ in 0..2 {
            for qi in &q {
                let c = dot(&w, qi);
                w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bj = norm(&w);
        let m = j + 1;
        let check = m >= k + 4 && (m % 8 == 0 || m == max_dim || bj < 1e-14 * aj.abs());
        if check {
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = &order[..k.min(m)];
            let res_b: Vec<f64> = top.iter().map(|&i| (bj * eig.eigenvectors[(m - 1, i)]).abs()).collect();
            let thetas: Vec<f64> = top.iter().map(|&i| eig.eigenvalues[i]).collect();
            let converged = res_b.iter().zip(&thetas).all(|(r, th)| *r <= tol * th.abs());
            if converged || m == max_dim || bj < 1e-14 * aj.abs() {
                let mut vals = Vec::with_capacity(k);
                let mut vecs = Vec::with_capacity(k);
                let mut residuals = Vec::with_capacity(k);
                for &i in top {
                    let mut x = vec![0.0; n];
                    for (r, qr) in q.iter().enumerate().take(m) {
                        let c = eig.eigenvectors[(r, i)];
                        x.iter_mut().zip(qr).for_each(|(xv, qv)| *xv += c * qv);
                    }
                    let nx = norm(&x);
                    x.iter_mut().for_each(|v| *v /= nx);
                    let delta = 1.0 / eig.eigenvalues[i] + sigma;
                    let mut ax = vec![0.0; n];
                    a.matvec(&x, &mut ax);
                    let r = ax.iter().zip(&x).map(|(p, xv)| (p - delta * xv).powi(2)).sum::<f64>().sqrt();
                    vals.push(delta);
                    vecs.push(x);
                    residuals.push(r);
                }
                let mut idx: Vec<usize> = (0..vals.len()).collect();
                idx.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
                let result = LanczosResult {
                    eigenvalues: idx.iter().map(|&i| vals[i]).collect(),
                    eigenvectors: idx.iter().map(|&i| vecs[i].clone()).collect(),
                    residuals: idx.iter().map(|&i| residuals[i]).collect(),
                    iterations: m,
                };
                if converged {
                    return Ok(result);
                }
                let floor = 1e3 * f64::EPSILON * anorm;
                if bj < 1e-14 * aj.abs() && result.residuals.iter().all(|r| *r <= floor.max(tol * anorm)) {
                    return Ok(result);
                }
                return Err(Error::Solver { iterations: m, residuals: result.residuals });
            }
        }
        beta.push(bj);
        w.iter_mut().for_each(|x| *x /= bj);
        q.push(w);
        j += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Sampler;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    fn laplacian_2d(n0: usize, n1: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n0 {
            for j in 0..n1 {
                let p = i * n1 + j;
                t.push((p, p, 4.0));
                if i + 1 < n0 {
                    t.push((p, p + n1, -1.0));
                    t.push((p + n1, p, -1.0));
                }
                if j + 1 < n1 {
                    t.push((p, p + 1, -1.0));
                    t.push((p + 1, p, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n0 * n1, t)
    }

    /// Eigenvalues 2 − 2cos(jπ/(n+1)).
    fn exact_1d(n: usize, j: usize) -> f64 {
        2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (n + 1) as f64).cos()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 5.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.max_asymmetry(), 5.0);
    }

    #[test]
    fn band_cholesky_solves() {
        let a = laplacian_2d(6, 7);
        let chol = BandCholesky::factor(&a, 0.3).unwrap();
        let mut s = Sampler::new(1);
        let x: Vec<f64> = (0..a.n).map(|_| s.normal()).collect();
        let mut b = vec![0.0; a.n];
        a.matvec(&x, &mut b);
        b.iter_mut().zip(&x).for_each(|(bv, xv)| *bv += 0.3 * xv);
        chol.solve(&mut b);
        let err = b.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!(BandCholesky::factor(&a, -1.0).is_none());
    }

    #[test]
    fn thomas_solves() {
        let n = 50;
        let lower = vec![-1.0; n];
        let diag = vec![3.0; n];
        let upper = vec![-1.0; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                3.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        let mut scratch = Vec::new();
        solve_tridiagonal(&lower, &diag, &upper, &mut b, &mut scratch);
        assert!(b.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-13));
    }

    #[test]
    fn bisection_matches_closed_form() {
        let n = 300;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let vals = tridiagonal_smallest(&d, &e, 4);
        for (j, v) in vals.iter().enumerate() {
            assert!((v - exact_1d(n, j + 1)).abs() < 1e-14, "{j}: {v}");
        }
        let mut s = Sampler::new(3);
        let start: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let v = tridiagonal_eigenvector(&d, &e, vals[1], &start);
        let a = laplacian_1d(n);
        let mut av = vec![0.0; n];
        a.matvec(&v, &mut av);
        let r = av.iter().zip(&v).map(|(p, q)| (p - vals[1] * q).powi(2)).sum::<f64>().sqrt();
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let a = laplacian_2d(20, 23);
        let (dense, _) = dense_smallest(&a.to_dense(), 5);
        let mut s = Sampler::new(9);
        let start: Vec<f64> = (0..a.n).map(|_| s.normal()).collect();
        let res = shift_invert_lanczos(&a, 5, -1e-3, &start, 1e-12, 200).unwrap();
        for (x, y) in res.eigenvalues.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-10 * y.abs(), "{x} vs {y}");
        }
        assert!(res.residuals.iter().all(|r| *r < 1e-8));
    }

    #[test]
    fn lanczos_reports_non_convergence() {
        let a = laplacian_1d(400);
        let start = vec![1.0; 400];
        match shift_invert_lanczos(&a, 6, -1e-3, &start, 1e-14, 12) {
            Err(Error::Solver { iterations, residuals }) => {
                assert_eq!(iterations, 12);
                assert_eq!(residuals.len(), 6);
            }
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
