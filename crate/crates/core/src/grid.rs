//! Uniform tensor grids on truncated boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{newton, ScalarField};

/// Default cap on the number of grid nodes.
pub const MAX_NODES: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self { lower, upper, points }
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }
}

/// A uniform grid in one or two dimensions. Nodes include the box faces and
/// are ordered row-major: `index = i0 * n1 + i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        let grid = Self { axes };
        grid.validate()?;
        Ok(grid)
    }

    pub fn line(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, points)])
    }

    pub fn rect(x: (f64, f64, usize), y: (f64, f64, usize)) -> Result<Self> {
        Self::new(vec![Axis::new(x.0, x.1, x.2), Axis::new(y.0, y.1, y.2)])
    }

    /// Symmetric box `[-half_widths[i], half_widths[i]]` with the given spacing.
    pub fn symmetric(half_widths: &[f64], spacing: f64) -> Result<Self> {
        let axes = half_widths
            .iter()
            .map(|&l| {
                let cells = (2.0 * l / spacing).round().max(2.0) as usize;
                Axis::new(-l, l, cells + 1)
            })
            .collect();
        Self::new(axes)
    }

    fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::Config(format!("grids must be 1D or 2D, got {}D", self.axes.len())));
        }
        for a in &self.axes {
            if !(a.lower < a.upper) || !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(Error::Config(format!("invalid axis bounds [{}, {}]", a.lower, a.upper)));
            }
            if a.points < 3 {
                return Err(Error::Config("each axis needs at least 3 points".into()));
            }
        }
        if self.len() > MAX_NODES {
            return Err(Error::Config(format!("grid has {} nodes, cap is {MAX_NODES}", self.len())));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.axes[axis].spacing()
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Per-axis multi-index of a flat node index.
    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        match self.dim() {
            1 => [idx, 0],
            _ => {
                let n1 = self.axes[1].points;
                [idx / n1, idx % n1]
            }
        }
    }

    #[inline]
    pub fn ravel(&self, i: [usize; 2]) -> usize {
        match self.dim() {
            1 => i[0],
            _ => i[0] * self.axes[1].points + i[1],
        }
    }

    /// Index stride along `axis` in the flat ordering.
    pub fn stride(&self, axis: usize) -> usize {
        if self.dim() == 2 && axis == 0 {
            self.axes[1].points
        } else {
            1
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let m = self.unravel(idx);
        (0..self.dim()).map(|a| self.axes[a].coord(m[a])).collect()
    }

    /// All node coordinates, flattened `len * dim`.
    pub fn nodes_flat(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.len() * d);
        for idx in 0..self.len() {
            out.extend(self.node(idx));
        }
        out
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.unravel(idx);
        (0..self.dim()).any(|a| m[a] == 0 || m[a] + 1 == self.axes[a].points)
    }

    /// True if the node has a full stencil `margin` nodes deep on every axis.
    pub fn is_interior(&self, idx: usize, margin: usize) -> bool {
        let m = self.unravel(idx);
        (0..self.dim()).all(|a| m[a] >= margin && m[a] + margin < self.axes[a].points)
    }

    /// Neighbour along `axis` in direction `dir` (±1), if inside the grid.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, dir: isize) -> Option<usize> {
        let m = self.unravel(idx);
        let j = m[axis] as isize + dir;
        if j < 0 || j >= self.axes[axis].points as isize {
            None
        } else {
            let mut mm = m;
            mm[axis] = j as usize;
            Some(self.ravel(mm))
        }
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                let h = a.spacing();
                (0..a.points)
                    .map(|i| if i == 0 || i + 1 == a.points { 0.5 * h } else { h })
                    .collect()
            })
            .collect();
        (0..self.len())
            .map(|idx| {
                let m = self.unravel(idx);
                (0..self.dim()).map(|a| per_axis[a][m[a]]).product()
            })
            .collect()
    }

    /// Nearest node to a point (clamped into the box).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut m = [0usize; 2];
        for (a, axis) in self.axes.iter().enumerate() {
            let t = ((x[a] - axis.lower) / axis.spacing()).round();
            m[a] = t.clamp(0.0, (axis.points - 1) as f64) as usize;
        }
        self.ravel(m)
    }

    /// Same box at a different node count per axis.
    pub fn with_points(&self, points: &[usize]) -> Result<Self> {
        Self::new(
            self.axes
                .iter()
                .zip(points)
                .map(|(a, &n)| Axis::new(a.lower, a.upper, n))
                .collect(),
        )
    }

    /// Same box with spacing halved on every axis.
    pub fn refined(&self) -> Result<Self> {
        let pts: Vec<usize> = self.axes.iter().map(|a| 2 * a.points - 1).collect();
        self.with_points(&pts)
    }
}

/// Values of `field` at every node.
pub fn sample(field: &ScalarField, grid: &GridSpec) -> Result<Vec<f64>> {
    (0..grid.len())
        .map(|idx| field.checked_value(&grid.node(idx)))
        .collect()
}

/// Global minimum on the grid, refined by Newton steps from the best node.
///
/// The refined point is accepted only if it lowers the value; otherwise the
/// best node is returned.
pub fn refined_minimum(field: &ScalarField, grid: &GridSpec, values: &[f64]) -> (Vec<f64>, f64) {
    let (best, &fbest) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let x0 = grid.node(best);
    let mut candidates = vec![(x0.clone(), fbest)];
    if let Some(x) = newton(field, &x0, 1e-13, 30) {
        let v = field.value(&x);
        let h = x
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let max_h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0f64, f64::max);
        if v <= fbest && h <= 2.0 * max_h {
            candidates.push((x, v));
        }
    }
    if let (Some(x), Some(v)) = (field.minimizer(), field.minimum_value()) {
        if v <= fbest {
            candidates.push((x.to_vec(), v));
        }
    }
    candidates
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Which tail bound certifies a truncated box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoxCriterion {
    /// e^{−2(f−f*)/s} < 1e-12 on the boundary (Gibbs density).
    Gibbs,
    /// e^{−(f−f*)/s} < 1e-10 on the boundary (Witten ground state).
    GroundState,
}

impl BoxCriterion {
    /// Minimal f − f* required on the boundary at temperature `s`.
    pub fn required_gap(&self, s: f64) -> f64 {
        match self {
            BoxCriterion::Gibbs => 0.5 * s * 1e12f64.ln(),
            BoxCriterion::GroundState => s * 1e10f64.ln(),
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            BoxCriterion::Gibbs => "exp(-2(f-f*)/s) < 1e-12",
            BoxCriterion::GroundState => "exp(-(f-f*)/s) < 1e-10",
        }
    }
}

/// Verifies the boundary criterion on `grid`; returns f* on success.
pub fn certify_box(field: &ScalarField, grid: &GridSpec, values: &[f64], s: f64, criterion: BoxCriterion) -> Result<f64> {
    let (_, fstar) = refined_minimum(field, grid, values);
    let gap = criterion.required_gap(s);
    let worst = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| (i, values[i] - fstar))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match worst {
        Some((i, g)) if g <= gap => Err(Error::Truncation(format!(
            "{} fails at boundary node {:?} (f - f* = {g:.4}, need > {gap:.4})",
            criterion.describe(),
            grid.node(i)
        ))),
        _ => Ok(fstar),
    }
}

/// Node resolution of an automatically sized grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    /// Fixed node count per axis.
    Nodes(usize),
    /// Fixed spacing; the node count follows from the box.
    Spacing(f64),
}

/// How to pick a certified box and its resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub resolution: Resolution,
    pub criterion: BoxCriterion,
}

impl GridPolicy {
    pub fn gibbs(resolution: Resolution) -> Self {
        Self { resolution, criterion: BoxCriterion::Gibbs }
    }

    pub fn ground_state(resolution: Resolution) -> Self {
        Self { resolution, criterion: BoxCriterion::GroundState }
    }

    /// Smallest symmetric box (per-axis half widths found by doubling from 1)
    /// satisfying the boundary criterion at `s`.
    pub fn build(&self, field: &ScalarField, s: f64) -> Result<GridSpec> {
        let half = certified_half_widths(field, s, self.criterion)?;
        let grid = match self.resolution {
            Resolution::Nodes(n) => GridSpec::new(half.iter().map(|&l| Axis::new(-l, l, n)).collect())?,
            Resolution::Spacing(h) => GridSpec::symmetric(&half, h)?,
        };
        let values = sample(field, &grid)?;
        certify_box(field, &grid, &values, s, self.criterion)?;
        Ok(grid)
    }
}

const PROBE_POINTS: usize = 401;
const MAX_HALF_WIDTH: f64 = 4096.0;

/// Per-axis half widths by doubling until every face clears the criterion.
pub fn certified_half_widths(field: &ScalarField, s: f64, criterion: BoxCriterion) -> Result<Vec<f64>> {
    let d = field.dim();
    let gap = criterion.required_gap(s);
    let mut half = vec![1.0f64; d];
    loop {
        let probe = GridSpec::new(half.iter().map(|&l| Axis::new(-l, l, PROBE_POINTS)).collect())?;
        let values = sample(field, &probe)?;
        let (_, fstar) = refined_minimum(field, &probe, &values);
        let mut grew = false;
        for a in 0..d {
            let n = probe.axes[a].points;
            let face_ok = (0..probe.len())
                .filter(|&i| {
                    let m = probe.unravel(i);
                    m[a] == 0 || m[a] + 1 == n
                })
                .all(|i| values[i] - fstar > gap);
            if !face_ok {
                half[a] *= 2.0;
                grew = true;
            }
        }
        if !grew {
            return Ok(half);
        }
        if half.iter().any(|&l| l > MAX_HALF_WIDTH) {
            return Err(Error::Truncation(format!(
                "no box up to half width {MAX_HALF_WIDTH} satisfies {}",
                criterion.describe()
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{double_well_tilted, linear_1d, quadratic_2d_paper};

    #[test]
    fn indexing_round_trip() {
        let g = GridSpec::rect((-1.0, 1.0, 5), (0.0, 2.0, 3)).unwrap();
        assert_eq!(g.len(), 15);
        for idx in 0..g.len() {
            assert_eq!(g.ravel(g.unravel(idx)), idx);
        }
        assert_eq!(g.node(4), vec![-0.5, 1.0]);
        assert_eq!(g.stride(0), 3);
        assert!(g.is_boundary(0) && !g.is_boundary(4));
        assert_eq!(g.neighbor(4, 0, 1), Some(7));
        assert_eq!(g.neighbor(5, 1, 1), None);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = GridSpec::rect((0.0, 2.0, 11), (-1.0, 3.0, 7)).unwrap();
        let w = g.trapezoid_weights();
        let total: f64 = (0..g.len()).map(|i| w[i] * (1.0 + g.node(i)[0])).sum();
        assert!((total - 16.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::line(1.0, 0.0, 10).is_err());
        assert!(GridSpec::line(0.0, 1.0, 2).is_err());
        assert!(GridSpec::rect((0.0, 1.0, 3000), (0.0, 1.0, 3000)).is_err());
    }

    #[test]
    fn doubling_finds_per_axis_box() {
        let half = certified_half_widths(&quadratic_2d_paper(), 0.1, BoxCriterion::GroundState).unwrap();
        assert_eq!(half, vec![8.0, 16.0]);
        let half = certified_half_widths(&double_well_tilted(), 0.2, BoxCriterion::Gibbs).unwrap();
        assert_eq!(half, vec![4.0]);
        assert!(matches!(
            certified_half_widths(&linear_1d(), 0.1, BoxCriterion::Gibbs),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn certify_rejects_small_box() {
        let f = double_well_tilted();
        let g = GridSpec::line(-1.5, 1.5, 301).unwrap();
        let v = sample(&f, &g).unwrap();
        assert!(matches!(certify_box(&f, &g, &v, 0.2, BoxCriterion::Gibbs), Err(Error::Truncation(_))));
    }
}
