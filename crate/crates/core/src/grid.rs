//! Uniform grids on the cube [-1,1]^{2k} and the fields and masks that live on them.
//!
//! Coordinates are ordered (x1, y1, x2, y2) with z_j = x_j + i y_j. Node classes are
//! decided in exact integer arithmetic on the centered lattice offsets, so the ball
//! classification never depends on floating-point rounding.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// |z| < 1 - h: every axis neighbour lies inside the closed ball.
    Interior,
    /// 1 - h <= |z| <= 1.
    Boundary,
    Exterior,
}

#[derive(Debug)]
struct Layout {
    k: usize,
    n: usize,
    h: f64,
    half: i64,
    strides: [usize; 4],
    class: Vec<NodeClass>,
}

/// Shared handle to a grid. Cloning is cheap; fields and masks keep one.
#[derive(Clone)]
pub struct GridDomain(Arc<Layout>);

impl fmt::Debug for GridDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GridDomain(k={}, n={})", self.0.k, self.0.n)
    }
}

impl PartialEq for GridDomain {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.k == other.0.k && self.0.n == other.0.n)
    }
}

/// Builds the grid with `n` points per real axis on [-1,1]^{2k}.
pub fn make_ball_grid(k: usize, n: usize) -> Result<GridDomain> {
    if k != 1 && k != 2 {
        return Err(invalid("k", format!("complex dimension must be 1 or 2, got {k}")));
    }
    if n < 17 || n.is_multiple_of(2) {
        return Err(invalid("n", format!("resolution must be odd and >= 17, got {n}")));
    }
    let dims = 2 * k;
    let total = n
        .checked_pow(dims as u32)
        .filter(|&t| t <= 1 << 31)
        .ok_or_else(|| invalid("n", format!("{n}^{dims} nodes is too many")))?;
    let half = ((n - 1) / 2) as i64;
    let mut strides = [0usize; 4];
    let mut s = 1;
    for st in strides.iter_mut().take(dims) {
        *st = s;
        s *= n;
    }
    let r_in = (half - 1) * (half - 1);
    let r_out = half * half;
    let mut class = Vec::with_capacity(total);
    let mut m = [-half; 4];
    for _ in 0..total {
        let r2: i64 = m[..dims].iter().map(|v| v * v).sum();
        class.push(if r2 < r_in {
            NodeClass::Interior
        } else if r2 <= r_out {
            NodeClass::Boundary
        } else {
            NodeClass::Exterior
        });
        for v in m[..dims].iter_mut() {
            *v += 1;
            if *v <= half {
                break;
            }
            *v = -half;
        }
    }
    Ok(GridDomain(Arc::new(Layout { k, n, h: 1.0 / half as f64, half, strides, class })))
}

impl GridDomain {
    pub fn k(&self) -> usize {
        self.0.k
    }
    pub fn dims(&self) -> usize {
        2 * self.0.k
    }
    pub fn n(&self) -> usize {
        self.0.n
    }
    pub fn h(&self) -> f64 {
        self.0.h
    }
    /// Number of lattice steps from the centre to a face of the cube.
    pub fn half(&self) -> i64 {
        self.0.half
    }
    pub fn len(&self) -> usize {
        self.0.class.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.class.is_empty()
    }
    pub fn strides(&self) -> &[usize] {
        &self.0.strides[..self.dims()]
    }
    /// Volume h^{2k} attached to each node by the Riemann sums.
    pub fn cell_volume(&self) -> f64 {
        self.0.h.powi(self.dims() as i32)
    }
    pub fn class(&self, idx: usize) -> NodeClass {
        self.0.class[idx]
    }
    pub fn in_closed_ball(&self, idx: usize) -> bool {
        self.0.class[idx] != NodeClass::Exterior
    }

    /// Centered integer offsets of a node; unused trailing entries are zero.
    pub fn lattice(&self, idx: usize) -> [i64; 4] {
        let mut out = [0i64; 4];
        let n = self.0.n;
        let mut rest = idx;
        for o in out.iter_mut().take(self.dims()) {
            *o = (rest % n) as i64 - self.0.half;
            rest /= n;
        }
        out
    }

    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let m = self.lattice(idx);
        let h = self.0.h;
        [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h, m[3] as f64 * h]
    }

    /// Squared norm of a node in lattice units (exact).
    pub fn lattice_norm2(&self, idx: usize) -> i64 {
        self.lattice(idx).iter().map(|v| v * v).sum()
    }

    pub fn norm2(&self, idx: usize) -> f64 {
        self.lattice_norm2(idx) as f64 * self.0.h * self.0.h
    }

    pub fn index_of(&self, m: &[i64]) -> Option<usize> {
        let half = self.0.half;
        let mut idx = 0usize;
        for (a, &v) in m.iter().enumerate().take(self.dims()) {
            if v < -half || v > half {
                return None;
            }
            idx += (v + half) as usize * self.0.strides[a];
        }
        Some(idx)
    }

    /// Node reached from `idx` by an integer lattice offset, if it stays in the cube.
    pub fn shifted(&self, idx: usize, off: &[i64]) -> Option<usize> {
        let mut m = self.lattice(idx);
        for (a, v) in off.iter().enumerate().take(self.dims()) {
            m[a] += v;
        }
        self.index_of(&m)
    }

    pub fn origin(&self) -> usize {
        self.index_of(&[0, 0, 0, 0]).expect("origin is a node")
    }

    /// Nearest node to a point given in real coordinates (x1, y1, x2, y2).
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        let mut m = [0i64; 4];
        for (a, v) in p.iter().enumerate().take(self.dims()) {
            m[a] = (v / self.0.h).round() as i64;
        }
        self.index_of(&m)
    }

    pub fn nodes_of_class(&self, c: NodeClass) -> usize {
        self.0.class.iter().filter(|&&x| x == c).count()
    }

    /// Mask of every node in the closed ball.
    pub fn closed_ball(&self) -> Mask {
        Mask::from_fn(self, |_, _| true)
    }

    pub fn interior(&self) -> Mask {
        Mask::from_fn(self, |g, i| g.class(i) == NodeClass::Interior)
    }

    /// Riemann-sum measure of the closed ball.
    pub fn ball_measure(&self) -> f64 {
        (self.len() - self.nodes_of_class(NodeClass::Exterior)) as f64 * self.cell_volume()
    }
}

/// Set of nodes inside the closed unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: GridDomain,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(grid: &GridDomain) -> Self {
        Mask { grid: grid.clone(), bits: vec![false; grid.len()] }
    }

    /// Nodes of the closed ball satisfying `pred`; exterior nodes are never included.
    pub fn from_fn(grid: &GridDomain, pred: impl Fn(&GridDomain, usize) -> bool) -> Self {
        let bits = (0..grid.len()).map(|i| grid.in_closed_ball(i) && pred(grid, i)).collect();
        Mask { grid: grid.clone(), bits }
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }
    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }
    pub fn set(&mut self, idx: usize, on: bool) {
        self.bits[idx] = on && self.grid.in_closed_ball(idx);
    }
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
    pub fn and(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && b)
    }
    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a || b)
    }
    pub fn minus(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && !b)
    }
    fn zip(&self, other: &Mask, op: impl Fn(bool, bool) -> bool) -> Mask {
        assert!(self.grid == other.grid, "masks live on different grids");
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .enumerate()
            .map(|(i, (&a, &b))| op(a, b) && self.grid.in_closed_ball(i))
            .collect();
        Mask { grid: self.grid.clone(), bits }
    }

    /// Largest distance from the origin over the mask, in real units.
    pub fn max_norm(&self) -> f64 {
        self.iter().map(|i| self.grid.lattice_norm2(i)).max().map_or(0.0, |r2| (r2 as f64).sqrt() * self.grid.h())
    }

    /// Nodes of the closed ball within Euclidean distance `r` of the mask.
    pub fn dilate(&self, r: f64) -> Mask {
        let g = &self.grid;
        let rr = (r / g.h()).floor() as i64;
        let offs = ball_offsets(g.dims(), rr);
        let mut out = Mask::empty(g);
        for i in self.iter() {
            for off in &offs {
                if let Some(j) = g.shifted(i, off) {
                    out.set(j, true);
                }
            }
        }
        out
    }
}

/// Integer offsets y with |y|^2 <= r^2 in `dims` real dimensions.
pub fn ball_offsets(dims: usize, r: i64) -> Vec<[i64; 4]> {
    let mut out = Vec::new();
    let r2 = r * r;
    let span = |d: usize| if d < dims { -r..=r } else { 0..=0 };
    for a in span(0) {
        for b in span(1) {
            for c in span(2) {
                for d in span(3) {
                    if a * a + b * b + c * c + d * d <= r2 {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

/// Nodes with |z - center| <= r inside the closed unit ball.
pub fn ball_mask(grid: &GridDomain, center: &[f64], r: f64) -> Mask {
    let mut c = [0.0; 4];
    c[..center.len().min(4)].copy_from_slice(&center[..center.len().min(4)]);
    let r2 = r * r * (1.0 + 1e-12);
    Mask::from_fn(grid, |g, i| {
        let p = g.coords(i);
        let d2: f64 = (0..g.dims()).map(|a| (p[a] - c[a]).powi(2)).sum();
        d2 <= r2
    })
}

/// Value of a field at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeValue {
    Finite(f64),
    NegInfinity,
    Undefined,
}

/// Real field on the grid with extended values: NaN encodes an undefined node and
/// -inf a node where the function equals -infinity. +inf is stored as undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridDomain,
    values: Vec<f64>,
}

fn sanitize(v: f64) -> f64 {
    if v == f64::INFINITY {
        f64::NAN
    } else {
        v
    }
}

impl ScalarField {
    pub fn constant(grid: &GridDomain, v: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![sanitize(v); grid.len()] }
    }

    /// Samples `f` at the real coordinates of every node, including exterior ones.
    pub fn from_fn(grid: &GridDomain, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dims();
        let values = (0..grid.len()).map(|i| sanitize(f(&grid.coords(i)[..d]))).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch);
        }
        Ok(ScalarField { grid: grid.clone(), values: values.into_iter().map(sanitize).collect() })
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }
    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = sanitize(v);
    }

    pub fn state(&self, idx: usize) -> NodeValue {
        let v = self.values[idx];
        if v.is_nan() {
            NodeValue::Undefined
        } else if v == f64::NEG_INFINITY {
            NodeValue::NegInfinity
        } else {
            NodeValue::Finite(v)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| sanitize(f(v))).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| sanitize(f(a, b))).collect();
        Ok(ScalarField { grid: self.grid.clone(), values })
    }

    /// Marks every node of `m` undefined.
    pub fn undefine_on(&mut self, m: &Mask) {
        for i in m.iter() {
            self.values[i] = f64::NAN;
        }
    }

    /// Supremum and infimum over finite values on a mask.
    pub fn finite_range(&self, m: &Mask) -> Option<(f64, f64)> {
        let mut it = m.iter().map(|i| self.values[i]).filter(|v| v.is_finite());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

/// Result of a Riemann sum that skips non-finite nodes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Integral {
    pub value: f64,
    /// Mask nodes left out because the integrand was undefined or infinite there.
    pub skipped: usize,
}

/// Riemann sum of `f` over the nodes of `m` with weight h^{2k}, in index order.
pub fn integrate(f: &ScalarField, m: &Mask) -> Result<Integral> {
    if f.grid != m.grid {
        return Err(LabError::GridMismatch);
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for i in m.iter() {
        let v = f.values[i];
        if v.is_finite() {
            sum += v;
            used += 1;
        } else {
            skipped += 1;
        }
    }
    if used == 0 && skipped > 0 {
        return Err(LabError::AllUndefined);
    }
    Ok(Integral { value: sum * f.grid.cell_volume(), skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_resolution() {
        assert!(make_ball_grid(1, 16).is_err());
        assert!(make_ball_grid(1, 15).is_err());
        assert!(make_ball_grid(3, 17).is_err());
        assert!(make_ball_grid(1, 17).is_ok());
    }

    #[test]
    fn spacing_and_origin() {
        let g = make_ball_grid(1, 17).unwrap();
        assert_eq!(g.h(), 0.125);
        let o = g.origin();
        assert_eq!(g.coords(o), [0.0; 4]);
        assert_eq!(g.class(o), NodeClass::Interior);
        let corner = g.index_of(&[8, 8]).unwrap();
        assert_eq!(g.class(corner), NodeClass::Exterior);
        let edge = g.index_of(&[8, 0]).unwrap();
        assert_eq!(g.class(edge), NodeClass::Boundary);
    }

    #[test]
    fn interior_neighbours_stay_in_ball() {
        for (k, n) in [(1, 33), (2, 17)] {
            let g = make_ball_grid(k, n).unwrap();
            for i in 0..g.len() {
                if g.class(i) != NodeClass::Interior {
                    continue;
                }
                for a in 0..g.dims() {
                    for s in [-1, 1] {
                        let mut off = [0i64; 4];
                        off[a] = s;
                        let j = g.shifted(i, &off).unwrap();
                        assert!(g.in_closed_ball(j));
                    }
                }
            }
        }
    }

    #[test]
    fn disc_area_and_ball_volume() {
        let g = make_ball_grid(1, 513).unwrap();
        let area = g.ball_measure();
        assert!((area - std::f64::consts::PI).abs() < 1e-3 * std::f64::consts::PI);
        let g2 = make_ball_grid(2, 33).unwrap();
        let vol = g2.ball_measure();
        let exact = std::f64::consts::PI.powi(2) / 2.0;
        assert!((vol - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn integrate_skips_and_errors() {
        let g = make_ball_grid(1, 17).unwrap();
        let mut f = ScalarField::constant(&g, 1.0);
        f.set(g.origin(), f64::NEG_INFINITY);
        let m = g.closed_ball();
        let r = integrate(&f, &m).unwrap();
        assert_eq!(r.skipped, 1);
        let nan = ScalarField::constant(&g, f64::NAN);
        assert_eq!(integrate(&nan, &m), Err(LabError::AllUndefined));
        let empty = Mask::empty(&g);
        assert_eq!(integrate(&nan, &empty).unwrap().value, 0.0);
    }

    #[test]
    fn plus_infinity_is_undefined() {
        let g = make_ball_grid(1, 17).unwrap();
        let f = ScalarField::constant(&g, f64::INFINITY);
        assert_eq!(f.state(0), NodeValue::Undefined);
    }

    #[test]
    fn dilation_grows_masks() {
        let g = make_ball_grid(1, 33).unwrap();
        let m = ball_mask(&g, &[0.0, 0.0], 0.25);
        let d = m.dilate(3.0 * g.h());
        assert!(d.count() > m.count());
        assert!(m.minus(&d).is_empty());
        let far = ball_mask(&g, &[0.0, 0.0], 0.25 + 3.0 * g.h());
        assert!(d.minus(&far).is_empty());
    }
}
