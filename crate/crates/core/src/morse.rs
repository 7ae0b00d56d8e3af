//! Critical points, separating saddles, the labeling of minima by saddles,
//! Morse saddle barriers and Eyring–Kramers prefactors.

use std::path::Path;

use nalgebra::DMatrix;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, GridSpec};
use crate::objective::{newton, ScalarField};

/// Hessian eigenvalues closer to zero than this are rejected.
pub const NONDEGENERACY_TOLERANCE: f64 = 1e-8;
/// Critical values closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Relative offset below a saddle value at which sublevel sets are sampled.
pub const LEVEL_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    pub index: usize,
    /// Sorted in decreasing order.
    pub hessian_eigs: Vec<f64>,
    pub converged: bool,
}

impl CriticalPoint {
    /// Classify `x`, assumed to be a critical point of `field`.
    pub fn at(field: &ScalarField, x: &[f64]) -> Result<Self> {
        let eigs = field.hessian_eigenvalues(x);
        if eigs.iter().any(|e| e.abs() < NONDEGENERACY_TOLERANCE) {
            return Err(Error::Nondegeneracy { location: x.to_vec(), eigenvalues: eigs });
        }
        Ok(Self {
            location: x.to_vec(),
            value: field.value(x),
            index: eigs.iter().filter(|e| **e < 0.0).count(),
            hessian_eigs: eigs,
            converged: true,
        })
    }

    fn determinant(&self) -> f64 {
        self.hessian_eigs.iter().product()
    }
}

/// Unit eigenvector of the most negative Hessian eigenvalue.
fn descent_direction(field: &ScalarField, x: &[f64]) -> Vec<f64> {
    let d = field.dim();
    let eig = DMatrix::from_row_slice(d, d, &field.hessian(x)).symmetric_eigen();
    let k = eig.eigenvalues.imin();
    eig.eigenvectors.column(k).iter().copied().collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn inside(grid: &GridSpec, x: &[f64]) -> bool {
    grid.axes.iter().zip(x).all(|(a, v)| *v >= a.lower && *v <= a.upper)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Newton on ∇f = 0 from every grid-local minimum of ‖∇f‖² and from midpoints
/// between the minima found, deduplicated within `dedupe_radius`.
pub fn find_critical_points(
    field: &ScalarField,
    grid: &GridSpec,
    newton_tol: f64,
    dedupe_radius: f64,
) -> Result<Vec<CriticalPoint>> {
    let norms: Vec<f64> = (0..grid.len()).map(|i| field.gradient_norm_sq(&grid.node(i))).collect();
    let seeds: Vec<Vec<f64>> = (0..grid.len())
        .filter(|&i| {
            (0..grid.dim()).all(|a| {
                [-1, 1].iter().all(|&dir| grid.neighbor(i, a, dir).map_or(true, |j| norms[i] <= norms[j]))
            })
        })
        .map(|i| grid.node(i))
        .collect();
    let mut found = converge(field, grid, &seeds, newton_tol, dedupe_radius)?;
    let minima: Vec<Vec<f64>> = found.iter().filter(|c| c.index == 0).map(|c| c.location.clone()).collect();
    let mut midpoints = Vec::new();
    for i in 0..minima.len() {
        for j in i + 1..minima.len() {
            midpoints.push(minima[i].iter().zip(&minima[j]).map(|(a, b)| 0.5 * (a + b)).collect());
        }
    }
    found.extend(converge(field, grid, &midpoints, newton_tol, dedupe_radius)?);
    Ok(dedupe(found, dedupe_radius))
}

fn converge(
    field: &ScalarField,
    grid: &GridSpec,
    seeds: &[Vec<f64>],
    tol: f64,
    radius: f64,
) -> Result<Vec<CriticalPoint>> {
    let points: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|x0| newton(field, x0, tol, 100))
        .filter(|x| inside(grid, x))
        .collect();
    let points = dedupe_locations(points, radius);
    points.iter().map(|x| CriticalPoint::at(field, x)).collect()
}

fn dedupe_locations(mut points: Vec<Vec<f64>>, radius: f64) -> Vec<Vec<f64>> {
    points.sort_by(|a, b| lexicographic(a, b));
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if out.iter().all(|q| distance(&p, q) > radius) {
            out.push(p);
        }
    }
    out
}

fn dedupe(mut points: Vec<CriticalPoint>, radius: f64) -> Vec<CriticalPoint> {
    points.sort_by(|a, b| lexicographic(&a.location, &b.location));
    let mut out: Vec<CriticalPoint> = Vec::new();
    for p in points {
        if out.iter().all(|q| distance(&p.location, &q.location) > radius) {
            out.push(p);
        }
    }
    out
}

/// Largest value of `field` on the segment [a, b].
///
/// Interior maxima are bracketed by sign changes of the directional derivative
/// on a coarse sampling and then located by bisection.
fn segment_max(field: &ScalarField, a: &[f64], b: &[f64]) -> f64 {
    const SAMPLES: usize = 8;
    let dir: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let point = |t: f64| -> Vec<f64> { a.iter().zip(&dir).map(|(p, d)| p + t * d).collect() };
    let slope = |t: f64| -> f64 { field.gradient(&point(t)).iter().zip(&dir).map(|(g, d)| g * d).sum() };
    let mut best = field.value(a).max(field.value(b));
    let mut prev = slope(0.0);
    for k in 1..=SAMPLES {
        let t1 = k as f64 / SAMPLES as f64;
        let cur = slope(t1);
        if prev > 0.0 && cur <= 0.0 {
            let (mut lo, mut hi) = ((k - 1) as f64 / SAMPLES as f64, t1);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.max(field.value(&point(0.5 * (lo + hi))));
        }
        prev = cur;
    }
    best
}

/// Connected components of {f < level} on the grid.
///
/// Two neighbouring nodes are joined only when the whole segment between them
/// stays below the level.
struct Sublevel {
    level: f64,
    root: Vec<Option<usize>>,
}

impl Sublevel {
    fn new(field: &ScalarField, grid: &GridSpec, values: &[f64], level: f64) -> Self {
        let mut uf = UnionFind::<usize>::new(grid.len());
        let edges: Vec<(usize, usize)> = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut out = Vec::new();
                if values[i] < level {
                    for a in 0..grid.dim() {
                        if let Some(j) = grid.neighbor(i, a, 1) {
                            if values[j] < level && segment_max(field, &grid.node(i), &grid.node(j)) < level {
                                out.push((i, j));
                            }
                        }
                    }
                }
                out
            })
            .collect();
        for (i, j) in edges {
            uf.union(i, j);
        }
        let root = (0..grid.len()).map(|i| (values[i] < level).then(|| uf.find(i))).collect();
        Self { level, root }
    }

    /// Component of the grid node reached from `x` without leaving the sublevel set.
    fn component_of(&self, field: &ScalarField, grid: &GridSpec, x: &[f64]) -> Option<usize> {
        let n = grid.nearest(x);
        let r = self.root[n]?;
        (segment_max(field, x, &grid.node(n)) < self.level).then_some(r)
    }
}

/// Points on either side of a saddle, just inside {f < level}, reached along
/// the negative-curvature direction.
fn saddle_sides(field: &ScalarField, grid: &GridSpec, saddle: &CriticalPoint, sub: &Sublevel) -> Result<[usize; 2]> {
    let v = descent_direction(field, &saddle.location);
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let mut out = [0usize; 2];
    for (k, sign) in [1.0, -1.0].iter().enumerate() {
        let mut hit = None;
        for step in 1..=400 {
            let r = sign * step as f64 * h / 4.0;
            let p: Vec<f64> = saddle.location.iter().zip(&v).map(|(x, d)| x + r * d).collect();
            if !inside(grid, &p) {
                break;
            }
            if field.value(&p) < sub.level {
                if let Some(c) = sub.component_of(field, grid, &p) {
                    hit = Some(c);
                    break;
                }
            }
        }
        out[k] = hit.ok_or_else(|| {
            Error::Resolution(format!(
                "cannot resolve the descent sides of the saddle at {:?}; refine the grid",
                saddle.location
            ))
        })?;
    }
    Ok(out)
}

/// Whether an index-1 saddle separates: its two descent sides lie in
/// different components of {f < f(saddle) − level_offset}.
pub fn separating_test(field: &ScalarField, saddle: &CriticalPoint, grid: &GridSpec, level_offset: f64) -> Result<bool> {
    if saddle.index != 1 {
        return Err(Error::Domain(format!("separating test needs an index-1 saddle, got index {}", saddle.index)));
    }
    let values = sample(field, grid)?;
    let sub = Sublevel::new(field, grid, &values, saddle.value - level_offset);
    let [a, b] = saddle_sides(field, grid, saddle, &sub)?;
    Ok(a != b)
}

/// Saddle of a pairing: a critical point or the fictive saddle at infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleRef {
    Infinity,
    Point(CriticalPoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Barrier {
    Infinite,
    Finite(f64),
}

impl Barrier {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Barrier::Finite(h) => Some(*h),
            Barrier::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePairing {
    pub saddle: SaddleRef,
    pub minimum: CriticalPoint,
    pub barrier: Barrier,
    pub gamma: Option<f64>,
    /// [f(x°) − f(x•), f(x°₁) − f(x*)] when the landscape is not generic.
    pub barrier_interval: Option<(f64, f64)>,
    /// Other locations sharing the paired values when ties occur.
    pub alternative_minima: Vec<Vec<f64>>,
    pub alternative_saddles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseReport {
    pub minima: Vec<CriticalPoint>,
    pub saddles_index1: Vec<CriticalPoint>,
    pub separating_saddles: Vec<CriticalPoint>,
    pub pairings: Vec<SaddlePairing>,
    #[serde(rename = "H_f")]
    pub h_f: Barrier,
    pub generic: bool,
    pub convex_like: bool,
    pub degenerate_notes: Vec<String>,
}

impl MorseReport {
    /// Pairings with a finite saddle, in labeling order.
    pub fn finite_pairings(&self) -> impl Iterator<Item = &SaddlePairing> {
        self.pairings.iter().filter(|p| matches!(p.saddle, SaddleRef::Point(_)))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE
}

/// Label the minima by the separating saddles, highest level first.
pub fn labeling(field: &ScalarField, criticals: &[CriticalPoint], grid: &GridSpec) -> Result<MorseReport> {
    if let Some(bad) = criticals.iter().find(|c| !c.converged) {
        return Err(Error::Domain(format!("critical point at {:?} did not converge", bad.location)));
    }
    let mut minima: Vec<CriticalPoint> = criticals.iter().filter(|c| c.index == 0).cloned().collect();
    if minima.is_empty() {
        return Err(Error::Domain("no local minimum among the critical points".into()));
    }
    minima.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| lexicographic(&a.location, &b.location)));
    let saddles: Vec<CriticalPoint> = criticals.iter().filter(|c| c.index == 1).cloned().collect();
    let values = sample(field, grid)?;
    let scale = criticals.iter().map(|c| c.value.abs()).fold(1.0, f64::max);
    let offset = LEVEL_OFFSET * scale;

    let mut separating = Vec::new();
    for s in &saddles {
        let sub = Sublevel::new(field, grid, &values, s.value - offset);
        let [a, b] = saddle_sides(field, grid, s, &sub)?;
        if a != b {
            separating.push(s.clone());
        }
    }

    let mut notes = Vec::new();
    for i in 0..minima.len() {
        for j in i + 1..minima.len() {
            if tied(minima[i].value, minima[j].value) {
                notes.push(format!(
                    "minima at {:?} and {:?} share the value {:.12}",
                    minima[i].location, minima[j].location, minima[i].value
                ));
            }
        }
    }

    let global = minima[0].clone();
    let global_alts: Vec<Vec<f64>> =
        minima[1..].iter().filter(|m| tied(m.value, global.value)).map(|m| m.location.clone()).collect();
    let mut pairings = vec![SaddlePairing {
        saddle: SaddleRef::Infinity,
        minimum: global.clone(),
        barrier: Barrier::Infinite,
        gamma: None,
        barrier_interval: None,
        alternative_minima: global_alts,
        alternative_saddles: Vec::new(),
    }];
    let mut labeled = vec![false; minima.len()];
    labeled[0] = true;

    let mut levels: Vec<f64> = Vec::new();
    let mut by_value = separating.clone();
    by_value.sort_by(|a, b| b.value.total_cmp(&a.value));
    for s in &by_value {
        if levels.last().map_or(true, |l| !tied(*l, s.value)) {
            levels.push(s.value);
        }
    }

    for &nu in &levels {
        let sub = Sublevel::new(field, grid, &values, nu - offset);
        let at_level: Vec<&CriticalPoint> = separating.iter().filter(|s| tied(s.value, nu)).collect();
        let mut sides = Vec::with_capacity(at_level.len());
        for s in &at_level {
            sides.push(saddle_sides(field, grid, s, &sub)?);
        }
        let mut comp_of_min = Vec::with_capacity(minima.len());
        for m in &minima {
            if m.value >= sub.level {
                comp_of_min.push(None);
                continue;
            }
            let c = sub.component_of(field, grid, &m.location).ok_or_else(|| {
                Error::Resolution(format!("minimum at {:?} is not resolved below level {nu}; refine the grid", m.location))
            })?;
            comp_of_min.push(Some(c));
        }
        let mut comps: Vec<usize> = comp_of_min.iter().flatten().copied().collect();
        comps.sort_unstable();
        comps.dedup();
        for c in comps {
            let members: Vec<usize> = (0..minima.len()).filter(|&i| comp_of_min[i] == Some(c)).collect();
            if members.iter().any(|&i| labeled[i]) {
                continue;
            }
            // minima are sorted by value, so the first member is the argmin
            let lead = members[0];
            let alts: Vec<Vec<f64>> = members[1..]
                .iter()
                .filter(|&&i| tied(minima[i].value, minima[lead].value))
                .map(|&i| minima[i].location.clone())
                .collect();
            let adjacent: Vec<&CriticalPoint> =
                at_level.iter().zip(&sides).filter(|(_, sd)| sd.contains(&c)).map(|(s, _)| *s).collect();
            let Some(first) = adjacent.first() else {
                return Err(Error::Resolution(format!(
                    "component of the minimum at {:?} has no saddle at level {nu}; refine the grid",
                    minima[lead].location
                )));
            };
            if adjacent.len() > 1 {
                notes.push(format!(
                    "component of the minimum at {:?} is bounded by {} separating saddles at level {:.12}",
                    minima[lead].location,
                    adjacent.len(),
                    nu
                ));
            }
            for &i in &members {
                labeled[i] = true;
            }
            let pairing_min = minima[lead].clone();
            let saddle = (*first).clone();
            pairings.push(SaddlePairing {
                barrier: Barrier::Finite(saddle.value - pairing_min.value),
                gamma: prefactor_of(&saddle, &pairing_min).ok(),
                saddle: SaddleRef::Point(saddle),
                minimum: pairing_min,
                barrier_interval: None,
                alternative_minima: alts,
                alternative_saddles: adjacent[1..].iter().map(|s| s.location.clone()).collect(),
            });
        }
    }
    if labeled.iter().any(|l| !l) {
        notes.push("some minima were never separated from a labeled minimum".into());
    }

    let generic = notes.is_empty();
    let mut finite: Vec<SaddlePairing> = pairings.split_off(1);
    finite.sort_by(|a, b| {
        let (x, y) = (a.barrier.finite().unwrap(), b.barrier.finite().unwrap());
        y.total_cmp(&x)
    });
    if !generic {
        if let Some(top) = levels.first() {
            let upper = top - global.value;
            for p in &mut finite {
                p.barrier_interval = Some((p.barrier.finite().unwrap(), upper));
            }
        }
    }
    pairings.extend(finite);
    let h_f = pairings.get(1).map_or(Barrier::Infinite, |p| p.barrier);
    Ok(MorseReport {
        convex_like: minima.len() == 1,
        minima,
        saddles_index1: saddles,
        separating_saddles: separating,
        pairings,
        h_f,
        generic,
        degenerate_notes: notes,
    })
}

/// Critical points and labeling with default tolerances.
pub fn analyze(field: &ScalarField, grid: &GridSpec) -> Result<MorseReport> {
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min);
    let crit = find_critical_points(field, grid, 1e-10, h)?;
    labeling(field, &crit, grid)
}

/// H_f: the largest finite barrier.
pub fn barrier(report: &MorseReport) -> Result<f64> {
    report.h_f.finite().ok_or(Error::NoBarrier)
}

fn prefactor_of(saddle: &CriticalPoint, minimum: &CriticalPoint) -> Result<f64> {
    if saddle.index != 1 || minimum.index != 0 {
        return Err(Error::Domain(format!(
            "prefactor needs an index-1 saddle and a minimum, got indices {} and {}",
            saddle.index, minimum.index
        )));
    }
    let det_min = minimum.determinant();
    let det_saddle = saddle.determinant();
    if !(det_min > 0.0 && det_saddle < 0.0) {
        return Err(Error::Domain(format!(
            "Hessian determinants {det_min:e} (minimum) and {det_saddle:e} (saddle) have inconsistent signs"
        )));
    }
    let eta = saddle.hessian_eigs.last().copied().unwrap_or(f64::NAN).abs();
    Ok(eta / std::f64::consts::PI * (det_min / -det_saddle).sqrt())
}

/// γ = (|η_d(x°)|/π)·√(det∇²f(x•) / −det∇²f(x°)).
pub fn prefactor(field: &ScalarField, pairing: &SaddlePairing) -> Result<f64> {
    let SaddleRef::Point(saddle) = &pairing.saddle else {
        return Err(Error::Domain("the pairing at infinity has no prefactor".into()));
    };
    let saddle = CriticalPoint::at(field, &saddle.location)?;
    let minimum = CriticalPoint::at(field, &pairing.minimum.location)?;
    prefactor_of(&saddle, &minimum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Point(f64),
    Interval(f64, f64),
}

/// s·γ_ℓ·e^{−2H_ℓ/s}, the small eigenvalue δ_{s,ℓ} of the Witten operator.
/// Landscapes violating genericity get the interval spanned by the barrier bounds.
pub fn eyring_kramers_predict(report: &MorseReport, s: f64, ell: usize) -> Result<Prediction> {
    let finite: Vec<&SaddlePairing> = report.finite_pairings().collect();
    if ell == 0 || ell > finite.len() {
        return Err(Error::Domain(format!("ℓ = {ell} outside [1, {}]", finite.len())));
    }
    let p = finite[ell - 1];
    let gamma = p.gamma.ok_or_else(|| Error::Domain("pairing has no prefactor".into()))?;
    let h = p.barrier.finite().unwrap();
    if report.generic {
        return Ok(Prediction::Point(s * gamma * (-2.0 * h / s).exp()));
    }
    let (lo, hi) = p.barrier_interval.unwrap_or((h, h));
    Ok(Prediction::Interval(s * gamma * (-2.0 * hi / s).exp(), s * gamma * (-2.0 * lo / s).exp()))
}
