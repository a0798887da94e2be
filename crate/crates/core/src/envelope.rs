//! Discrete plurisubharmonic envelopes and relative extremal functions.
//!
//! A function is discretely psh when at every node it is bounded by its four-point
//! average over each complex line of a fixed [`DirectionSet`]:
//! `u(x) <= (u(x+h zeta) + u(x-h zeta) + u(x+ih zeta) + u(x-ih zeta)) / 4`.
//! The envelope of an obstacle `g` is the largest such function below `g`; it is the
//! fixed point of `u <- min(g, min_zeta avg_zeta(u))` reached monotonically from `g`.
//!
//! The unknowns are the nodes strictly inside the unit sphere. Stencil arms that leave
//! the closed ball are shortened to end on the sphere, where the boundary data is
//! imposed, and the line average is replaced by the matching unequal-arm (Shortley-Weller)
//! weights. This keeps the scheme monotone and second-order accurate up to the sphere.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{GridDomain, Mask, ScalarField};

/// Complex directions with Gaussian-integer coordinates, stored as real lattice offsets
/// (Re z1, Im z1, Re z2, Im z2). Their stencils land exactly on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    k: usize,
    dirs: Vec<[i64; 4]>,
}

fn times_i(v: &[i64; 4]) -> [i64; 4] {
    [-v[1], v[0], -v[3], v[2]]
}

impl DirectionSet {
    /// k=1: the single direction 1. k=2: the 6 directions pointing at the vertices of
    /// an octahedron on CP^1 (the axes, (1,+-1), (1,+-i)) together with the 8 pointing
    /// at the vertices of a cube ((1,e) and (e,1) for e = +-1 +-i).
    pub fn standard(k: usize) -> Self {
        if k == 1 {
            return DirectionSet { k, dirs: vec![[1, 0, 0, 0]] };
        }
        let mut dirs = vec![[1, 0, 0, 0], [0, 0, 1, 0], [1, 0, 1, 0], [1, 0, -1, 0], [1, 0, 0, 1], [1, 0, 0, -1]];
        for (er, ei) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            dirs.push([1, 0, er, ei]);
            dirs.push([er, ei, 1, 0]);
        }
        DirectionSet { k, dirs }
    }

    /// One direction for every complex line spanned by a Gaussian-integer vector of
    /// squared length at most `max_norm2`, represented by its shortest such vector.
    /// `gaussian(2, 4)` is [`DirectionSet::standard`] up to order.
    pub fn gaussian(k: usize, max_norm2: i64) -> Self {
        if k == 1 {
            return DirectionSet::standard(1);
        }
        let b = (max_norm2 as f64).sqrt() as i64;
        let mut found: Vec<([i64; 4], [i64; 4])> = Vec::new();
        for ar in -b..=b {
            for ai in -b..=b {
                for br in -b..=b {
                    for bi in -b..=b {
                        let v = [ar, ai, br, bi];
                        let n2: i64 = v.iter().map(|x| x * x).sum();
                        if n2 == 0 || n2 > max_norm2 {
                            continue;
                        }
                        // Point of the line on the Riemann sphere, as a reduced integer ratio.
                        let re = 2 * (ar * br + ai * bi);
                        let im = 2 * (ar * bi - ai * br);
                        let d = ar * ar + ai * ai - br * br - bi * bi;
                        let gg = [re, im, d, n2].iter().fold(0i64, |acc, &x| gcd(acc, x.abs()));
                        let key = [re / gg, im / gg, d / gg, n2 / gg];
                        match found.iter_mut().find(|(kk, _)| *kk == key) {
                            Some((_, best)) => {
                                let bn: i64 = best.iter().map(|x| x * x).sum();
                                if n2 < bn || (n2 == bn && v > *best) {
                                    *best = v;
                                }
                            }
                            None => found.push((key, v)),
                        }
                    }
                }
            }
        }
        let mut dirs: Vec<[i64; 4]> = found.into_iter().map(|(_, v)| v).collect();
        dirs.sort_by_key(|v| (v.iter().map(|x| x * x).sum::<i64>(), std::cmp::Reverse(*v)));
        DirectionSet { k, dirs }
    }

    /// The coordinate axes only.
    pub fn axes(k: usize) -> Self {
        let mut dirs = vec![[1, 0, 0, 0]];
        if k == 2 {
            dirs.push([0, 0, 1, 0]);
        }
        DirectionSet { k, dirs }
    }

    /// Directions given as complex vectors with integer real and imaginary parts.
    pub fn from_complex(k: usize, dirs: &[[Complex64; 2]]) -> Result<Self> {
        let mut out = Vec::new();
        for d in dirs {
            let parts = [d[0].re, d[0].im, d[1].re, d[1].im];
            if parts.iter().any(|p| p.fract() != 0.0) || (k == 1 && (d[1].re != 0.0 || d[1].im != 0.0)) {
                return Err(invalid("directions", "coordinates must be Gaussian integers in C^k"));
            }
            let v = parts.map(|p| p as i64);
            if v == [0; 4] {
                return Err(invalid("directions", "zero direction"));
            }
            out.push(v);
        }
        if out.is_empty() {
            return Err(invalid("directions", "empty direction set"));
        }
        Ok(DirectionSet { k, dirs: out })
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn len(&self) -> usize {
        self.dirs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// The four lattice offsets +-zeta, +-i zeta of each direction.
    pub fn stencils(&self) -> Vec<[[i64; 4]; 4]> {
        self.dirs
            .iter()
            .map(|d| {
                let e = times_i(d);
                [*d, d.map(|x| -x), e, e.map(|x| -x)]
            })
            .collect()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Data imposed on the unit sphere.
#[derive(Clone)]
pub enum Boundary {
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Boundary {
    fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Boundary::Constant(c) => *c,
            Boundary::Function(f) => f(p),
        }
    }
}

impl std::fmt::Debug for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Constant(c) => write!(f, "Boundary::Constant({c})"),
            Boundary::Function(_) => write!(f, "Boundary::Function"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Sweep {
    /// Simultaneous update of every node.
    Jacobi,
    /// In-place lexicographic update, over-relaxed by `omega` in [1, 2).
    GaussSeidel { omega: f64 },
}

impl Sweep {
    /// Over-relaxation tuned to the lowest Dirichlet mode of the unit ball at spacing h.
    pub fn over_relaxed(grid: &GridDomain) -> Sweep {
        let lambda = if grid.k() == 1 { 5.783 } else { 14.68 };
        let rho = 1.0 - lambda * grid.h() * grid.h() / 4.0;
        Sweep::GaussSeidel { omega: 2.0 / (1.0 + (1.0 - rho * rho).sqrt()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub sweep: Sweep,
}

impl SolveOptions {
    /// Defaults: tolerance 1e-6, Jacobi sweeps, at most 10 n^2 iterations.
    pub fn new(grid: &GridDomain) -> Self {
        SolveOptions { tol: 1e-6, max_iter: 10 * grid.n() * grid.n(), sweep: Sweep::Jacobi }
    }
    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
    pub fn max_iter(mut self, m: usize) -> Self {
        self.max_iter = m;
        self
    }
    pub fn sweep(mut self, s: Sweep) -> Self {
        self.sweep = s;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    pub u: ScalarField,
    pub iterations: usize,
    /// max |u - T(u)| for the Jacobi update T at the returned u.
    pub residual: f64,
}

/// Precomputed stencils for one grid and direction set.
///
/// Solver state lives in a work vector holding every grid node followed by the boundary
/// values at the sphere crossings of cut stencil arms, so every arm is an index into it.
pub(crate) struct LineStencils {
    /// Unknown nodes (strictly inside the unit sphere), in sweep order.
    pub(crate) nodes: Vec<usize>,
    /// Position in `cut` for nodes whose stencil leaves the ball, else u32::MAX.
    cut_at: Vec<u32>,
    /// Per cut node: 4 weighted work-vector entries for each direction.
    cut: Vec<(f64, u32)>,
    /// Per cut node and direction: sum over the two real lines of 2/(a+ a-), arm
    /// lengths in units of the stencil step. Equals 4 for an uncut stencil.
    cut_denom: Vec<f64>,
    /// Flat index offsets of the four stencil points per direction.
    offsets: Vec<[isize; 4]>,
    /// Values of every node that is not an unknown.
    fixed: Vec<(usize, f64)>,
    /// Boundary values at arm crossings, stored after the grid nodes in the work vector.
    crossings: Vec<f64>,
    ndirs: usize,
}

/// Fraction along `v` (in (0, 1]) at which m + t v leaves the ball of radius `r`
/// around the origin.
fn sphere_exit(m: &[f64; 4], v: &[i64; 4], r: f64) -> f64 {
    let mv: f64 = (0..4).map(|a| m[a] * v[a] as f64).sum();
    let vv: f64 = (0..4).map(|a| (v[a] * v[a]) as f64).sum();
    let mm: f64 = (0..4).map(|a| m[a] * m[a]).sum();
    let disc = mv * mv - vv * (mm - r * r);
    ((-mv + disc.max(0.0).sqrt()) / vv).clamp(1e-12, 1.0)
}

/// Fraction along `v` at which m + t v first enters the ball of radius `r` around the
/// origin, for m outside it.
fn sphere_entry(m: &[f64; 4], v: &[i64; 4], r: f64) -> f64 {
    let mv: f64 = (0..4).map(|a| m[a] * v[a] as f64).sum();
    let vv: f64 = (0..4).map(|a| (v[a] * v[a]) as f64).sum();
    let mm: f64 = (0..4).map(|a| m[a] * m[a]).sum();
    let disc = mv * mv - vv * (mm - r * r);
    ((-mv - disc.max(0.0).sqrt()) / vv).clamp(1e-12, 1.0)
}

/// Closed ball held at a fixed value inside the domain (the inner plate of a condenser).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct InnerBall {
    pub center: [f64; 4],
    pub radius: f64,
    pub value: f64,
}

impl LineStencils {
    pub(crate) fn new(grid: &GridDomain, dirs: &DirectionSet, boundary: &Boundary) -> Result<Self> {
        Self::with_inner(grid, dirs, boundary, None)
    }

    pub(crate) fn with_inner(
        grid: &GridDomain,
        dirs: &DirectionSet,
        boundary: &Boundary,
        inner: Option<InnerBall>,
    ) -> Result<Self> {
        if dirs.k() != grid.k() {
            return Err(invalid("directions", "direction set and grid disagree on k"));
        }
        let half = grid.half();
        let r2max = half * half;
        let h = grid.h();
        let dims = grid.dims();
        let strides = grid.strides();
        let sts = dirs.stencils();
        let offsets: Vec<[isize; 4]> = sts
            .iter()
            .map(|st| st.map(|v| (0..dims).map(|a| v[a] as isize * strides[a] as isize).sum()))
            .collect();
        // Inner ball in lattice units.
        let inner_l = inner.map(|b| (b.center.map(|c| c / h), b.radius / h, b.value));
        let in_inner = |p: &[f64; 4]| {
            inner_l.is_some_and(|(c, r, _)| (0..4).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() < r * r)
        };
        let in_inner_closed = |p: &[f64; 4]| {
            inner_l.is_some_and(|(c, r, _)| (0..4).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= r * r)
        };
        let mut nodes = Vec::new();
        let mut fixed = Vec::new();
        let mut cut_at: Vec<u32> = Vec::new();
        let mut cut: Vec<(f64, u32)> = Vec::new();
        let mut cut_denom: Vec<f64> = Vec::new();
        let mut crossings = Vec::new();
        let base = grid.len();
        for i in 0..grid.len() {
            let m = grid.lattice(i);
            let mf = m.map(|v| v as f64);
            let r2: i64 = m.iter().map(|v| v * v).sum();
            if r2 >= r2max {
                let p = grid.coords(i);
                fixed.push((i, boundary.eval(&p[..dims])));
                continue;
            }
            if in_inner_closed(&mf) {
                fixed.push((i, inner_l.map_or(0.0, |b| b.2)));
                continue;
            }
            nodes.push(i);
            let regular = |v: &[i64; 4]| {
                let p = [mf[0] + v[0] as f64, mf[1] + v[1] as f64, mf[2] + v[2] as f64, mf[3] + v[3] as f64];
                (0..4).map(|a| (m[a] + v[a]).pow(2)).sum::<i64>() <= r2max && !in_inner(&p)
            };
            if sts.iter().all(|st| st.iter().all(regular)) {
                cut_at.push(u32::MAX);
                continue;
            }
            cut_at.push(cut.len() as u32);
            for (st, off) in sts.iter().zip(&offsets) {
                let mut arm = [(0.0, 0u32); 4];
                let mut len = [1.0; 4];
                for j in 0..4 {
                    if regular(&st[j]) {
                        arm[j].1 = (i as isize + off[j]) as u32;
                        continue;
                    }
                    let mut t = sphere_exit(&mf, &st[j], half as f64);
                    let mut value = None;
                    if let Some((c, r, v)) = inner_l {
                        let d = [mf[0] - c[0], mf[1] - c[1], mf[2] - c[2], mf[3] - c[3]];
                        let dv: f64 = (0..4).map(|a| d[a] * st[j][a] as f64).sum();
                        let vv: f64 = st[j].iter().map(|x| (x * x) as f64).sum();
                        let dd: f64 = d.iter().map(|x| x * x).sum();
                        // The arm meets the inner sphere when the nearest point of the
                        // segment lies inside it.
                        let tmin = (-dv / vv).clamp(0.0, 1.0);
                        if dd + 2.0 * tmin * dv + tmin * tmin * vv < r * r {
                            let ti = sphere_entry(&d, &st[j], r);
                            if ti < t {
                                t = ti;
                                value = Some(v);
                            }
                        }
                    }
                    len[j] = t;
                    let value = value.unwrap_or_else(|| {
                        let mut p = [0.0; 4];
                        for a in 0..4 {
                            p[a] = (mf[a] + t * st[j][a] as f64) * h;
                        }
                        boundary.eval(&p[..dims])
                    });
                    arm[j].1 = (base + crossings.len()) as u32;
                    crossings.push(value);
                }
                // Unequal-arm second differences along the two real lines of the complex line.
                let line = |ap: f64, am: f64| 2.0 / (ap * am);
                let denom = line(len[0], len[1]) + line(len[2], len[3]);
                for (j, l) in len.iter().enumerate() {
                    let other = if j < 2 { len[1 - j] } else { len[5 - j] };
                    arm[j].0 = 2.0 / ((l + other) * l) / denom;
                }
                cut.extend_from_slice(&arm);
                cut_denom.push(denom);
            }
        }
        if grid.k() == 2 {
            // Sweep in 8^4 blocks so the stencil neighbourhood of a block stays in cache.
            let key = |i: usize| {
                let m = grid.lattice(i);
                let b = m.map(|v| (v + half) / 8);
                (b[3], b[2], b[1], b[0], i)
            };
            let mut order: Vec<usize> = (0..nodes.len()).collect();
            order.sort_by_key(|&s| key(nodes[s]));
            nodes = order.iter().map(|&s| nodes[s]).collect();
            cut_at = order.iter().map(|&s| cut_at[s]).collect();
        }
        let ndirs = offsets.len();
        Ok(LineStencils { nodes, cut_at, cut, cut_denom, offsets, fixed, crossings, ndirs })
    }

    #[inline]
    fn line_min(&self, u: &[f64], slot: usize, i: usize) -> f64 {
        let c = self.cut_at[slot];
        let mut best = f64::INFINITY;
        if c == u32::MAX {
            let p = u[i..].as_ptr();
            for off in &self.offsets {
                // SAFETY: regular stencils stay inside the closed ball, so every offset
                // lands on a grid node and inside `u`.
                let s = unsafe { *p.offset(off[0]) + *p.offset(off[1]) + *p.offset(off[2]) + *p.offset(off[3]) };
                if s < best {
                    best = s;
                }
            }
            0.25 * best
        } else {
            let c = c as usize;
            for arm in self.cut[c..c + 4 * self.ndirs].chunks_exact(4) {
                let s = arm[0].0 * u[arm[0].1 as usize]
                    + arm[1].0 * u[arm[1].1 as usize]
                    + arm[2].0 * u[arm[2].1 as usize]
                    + arm[3].0 * u[arm[3].1 as usize];
                best = best.min(s);
            }
            best
        }
    }

    /// Work vector for the grid values `u`.
    pub(crate) fn work(&self, u: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(u.len() + self.crossings.len());
        w.extend_from_slice(u);
        for &(i, v) in &self.fixed {
            w[i] = v;
        }
        w.extend_from_slice(&self.crossings);
        w
    }

    /// Weighted average over the single direction and its scaled denominator, for
    /// linear solves with a one-direction set.
    #[inline]
    fn line_avg(&self, u: &[f64], slot: usize, i: usize) -> (f64, f64) {
        let c = self.cut_at[slot];
        if c == u32::MAX {
            let off = &self.offsets[0];
            let s = u[(i as isize + off[0]) as usize]
                + u[(i as isize + off[1]) as usize]
                + u[(i as isize + off[2]) as usize]
                + u[(i as isize + off[3]) as usize];
            (0.25 * s, 4.0)
        } else {
            let c = c as usize;
            let arm = &self.cut[c..c + 4];
            let s: f64 = arm.iter().map(|&(w, j)| w * u[j as usize]).sum();
            (s, self.cut_denom[c / 4])
        }
    }

    /// Solves the Dirichlet problem Delta u = f (Euclidean Laplacian) by over-relaxed
    /// Gauss-Seidel until max |Delta_h u - f| <= tol. Needs a one-direction set.
    pub(crate) fn solve_poisson(
        &self,
        u: &mut Vec<f64>,
        f: &[f64],
        h: f64,
        omega: f64,
        tol: f64,
        max_iter: usize,
    ) -> Result<(usize, f64)> {
        if self.ndirs != 1 {
            return Err(invalid("directions", "linear solves use a single direction"));
        }
        let n = u.len();
        *u = self.work(u);
        let h2 = h * h;
        let mut it = 0;
        let out = loop {
            for (s, &i) in self.nodes.iter().enumerate() {
                let (avg, denom) = self.line_avg(u, s, i);
                let target = avg - f[i] * h2 / denom;
                u[i] += omega * (target - u[i]);
            }
            it += 1;
            if it % 10 == 0 || it >= max_iter {
                let r = self
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(s, &i)| {
                        let (avg, denom) = self.line_avg(u, s, i);
                        (denom * (avg - u[i]) / h2 - f[i]).abs()
                    })
                    .fold(0.0, f64::max);
                if r <= tol {
                    break Ok((it, r));
                }
                if it >= max_iter || !r.is_finite() {
                    break Err(LabError::NonConvergence { iterations: it, residual: r });
                }
            }
        };
        u.truncate(n);
        out
    }

    /// Jacobi residual max |u - min(g, min avg u)| over the unknowns.
    pub(crate) fn residual(&self, u: &[f64], g: &[f64]) -> f64 {
        self.nodes
            .par_iter()
            .enumerate()
            .map(|(s, &i)| (u[i] - g[i].min(self.line_min(u, s, i))).abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Iterates `u <- min(g, min avg u)` to the tolerance. `u` must be at or above the
    /// fixed point on the unknowns for the monotone convergence guarantee.
    pub(crate) fn solve(&self, u: &mut Vec<f64>, g: &[f64], opts: &SolveOptions) -> Result<(usize, f64)> {
        let n = u.len();
        *u = self.work(u);
        let out = self.iterate(u, g, opts);
        u.truncate(n);
        out
    }

    fn iterate(&self, u: &mut [f64], g: &[f64], opts: &SolveOptions) -> Result<(usize, f64)> {
        let mut it = 0;
        match opts.sweep {
            Sweep::Jacobi => {
                let mut next = vec![0.0; self.nodes.len()];
                loop {
                    let r = {
                        let uu: &[f64] = u;
                        next.par_iter_mut().zip(self.nodes.par_iter().enumerate()).for_each(|(o, (s, &i))| {
                            *o = g[i].min(self.line_min(uu, s, i));
                        });
                        self.nodes.iter().zip(&next).map(|(&i, &v)| (u[i] - v).abs()).fold(0.0, f64::max)
                    };
                    for (&i, &v) in self.nodes.iter().zip(&next) {
                        u[i] = v;
                    }
                    it += 1;
                    if r <= opts.tol {
                        break;
                    }
                    if it >= opts.max_iter || !r.is_finite() {
                        return Err(LabError::NonConvergence { iterations: it, residual: r });
                    }
                }
            }
            Sweep::GaussSeidel { omega } => {
                if !(1.0..2.0).contains(&omega) {
                    return Err(invalid("omega", "over-relaxation factor must lie in [1, 2)"));
                }
                loop {
                    let mut r: f64 = 0.0;
                    for (s, &i) in self.nodes.iter().enumerate() {
                        let t = g[i].min(self.line_min(u, s, i));
                        let d = t - u[i];
                        r = r.max(d.abs());
                        u[i] = g[i].min(u[i] + omega * d);
                    }
                    it += 1;
                    if r <= 0.5 * opts.tol {
                        let full = self.residual(u, g);
                        if full <= opts.tol {
                            return Ok((it, full));
                        }
                    }
                    if it >= opts.max_iter || !r.is_finite() {
                        return Err(LabError::NonConvergence { iterations: it, residual: r });
                    }
                }
            }
        }
        Ok((it, self.residual(u, g)))
    }
}

/// Largest discretely psh function below the obstacle `g` with boundary data `boundary`.
pub fn psh_envelope(
    g: &ScalarField,
    boundary: &Boundary,
    dirs: &DirectionSet,
    opts: &SolveOptions,
) -> Result<EnvelopeResult> {
    let grid = g.grid();
    let st = LineStencils::new(grid, dirs, boundary)?;
    if st.nodes.iter().any(|&i| !g.get(i).is_finite()) {
        return Err(invalid("obstacle", "obstacle must be finite inside the ball"));
    }
    let mut u = g.values().to_vec();
    let (iterations, residual) = st.solve(&mut u, g.values(), opts)?;
    Ok(EnvelopeResult { u: ScalarField::from_values(grid, u)?, iterations, residual })
}

/// Relative extremal function of E: envelope of the obstacle -1 on E, 0 elsewhere,
/// with zero boundary data.
pub fn relative_extremal(e: &Mask, dirs: &DirectionSet, opts: &SolveOptions) -> Result<EnvelopeResult> {
    let grid = e.grid();
    if e.is_empty() {
        return Err(LabError::EmptySet);
    }
    let lim = (grid.half() - 2).pow(2);
    if e.iter().any(|i| grid.lattice_norm2(i) > lim) {
        return Err(LabError::NotCompact("set reaches within 2h of the unit sphere".into()));
    }
    let mut g = ScalarField::constant(grid, 0.0);
    for i in e.iter() {
        g.set(i, -1.0);
    }
    psh_envelope(&g, &Boundary::Constant(0.0), dirs, opts)
}

/// Relative extremal function of the closed ball B(center, radius), with the ball
/// boundary resolved at sub-cell accuracy: the envelope is -1 on the ball and stencil arms
/// entering it are cut where they meet its sphere. On a ball this equals the envelope of
/// the continuum set up to O(h^2) instead of the O(h) error of a node mask.
pub fn relative_extremal_ball(
    grid: &GridDomain,
    center: &[f64],
    radius: f64,
    dirs: &DirectionSet,
    opts: &SolveOptions,
) -> Result<EnvelopeResult> {
    let mut c = [0.0; 4];
    c[..center.len().min(4)].copy_from_slice(&center[..center.len().min(4)]);
    let reach = c.iter().map(|x| x * x).sum::<f64>().sqrt() + radius;
    if radius <= 0.0 {
        return Err(LabError::EmptySet);
    }
    if reach > 1.0 - 2.0 * grid.h() {
        return Err(LabError::NotCompact("ball reaches within 2h of the unit sphere".into()));
    }
    let inner = InnerBall { center: c, radius, value: -1.0 };
    let st = LineStencils::with_inner(grid, dirs, &Boundary::Constant(0.0), Some(inner))?;
    let g = vec![0.0; grid.len()];
    let mut u = vec![0.0; grid.len()];
    let (iterations, residual) = st.solve(&mut u, &g, opts)?;
    let u = ScalarField::from_values(grid, u)?;
    Ok(EnvelopeResult { u, iterations, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PshResidual {
    /// max over nodes and directions of u(x) - avg, floored at 0.
    pub max: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Largest violation of the sub-mean inequality on the mask. Only stencils lying in the
/// closed ball with finite values are tested; nodes with no such stencil are skipped.
pub fn psh_residual(u: &ScalarField, dirs: &DirectionSet, m: &Mask) -> Result<PshResidual> {
    if u.grid() != m.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = u.grid();
    let sts = dirs.stencils();
    let v = u.values();
    let nodes: Vec<usize> = m.iter().collect();
    let per: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|&i| {
            let x = v[i];
            if x.is_nan() {
                return None;
            }
            let site = crate::calculus::Site::new(g, i);
            let mut worst: Option<f64> = None;
            for st in &sts {
                let mut s = 0.0;
                let mut ok = true;
                for off in st {
                    match site.at(off).map(|j| v[j]) {
                        Some(y) if y.is_finite() => s += y,
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    let d = if x == f64::NEG_INFINITY { 0.0 } else { x - 0.25 * s };
                    worst = Some(worst.map_or(d, |w: f64| w.max(d)));
                }
            }
            worst
        })
        .collect();
    let mut out = PshResidual { max: 0.0, checked: 0, skipped: 0 };
    for p in per {
        match p {
            Some(d) => {
                out.checked += 1;
                out.max = out.max.max(d);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ball_mask, make_ball_grid};

    #[test]
    fn standard_directions() {
        let d = DirectionSet::standard(2);
        assert_eq!(d.len(), 14);
        assert!(d.dirs.contains(&[1, 0, 1, 0]) && d.dirs.contains(&[1, 0, 0, -1]));
        for st in d.stencils() {
            let n2: Vec<i64> = st.iter().map(|v| v.iter().map(|x| x * x).sum()).collect();
            assert!(n2.iter().all(|&x| x == n2[0]));
        }
    }

    #[test]
    fn gaussian_directions_are_distinct_lines() {
        assert_eq!(DirectionSet::gaussian(2, 4).len(), 14);
        assert_eq!(DirectionSet::gaussian(2, 5).len(), 22);
        let mut a = DirectionSet::gaussian(2, 4).stencils();
        let mut b = DirectionSet::standard(2).stencils();
        for s in a.iter_mut().chain(b.iter_mut()) {
            s.sort();
        }
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn cut_weights_sum_to_one() {
        let g = make_ball_grid(2, 17).unwrap();
        let st = LineStencils::new(&g, &DirectionSet::standard(2), &Boundary::Constant(0.0)).unwrap();
        for arm in st.cut.chunks_exact(4) {
            let s: f64 = arm.iter().map(|a| a.0).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(arm.iter().all(|a| a.0 > 0.0));
        }
    }

    #[test]
    fn harmonic_boundary_data_reproduced() {
        // With obstacle far above, the envelope solves the Dirichlet problem; a harmonic
        // quadratic is reproduced up to the solver tolerance.
        let g = make_ball_grid(1, 33).unwrap();
        let f = |p: &[f64]| p[0] * p[0] - p[1] * p[1] + p[0] - 3.0;
        let obstacle = ScalarField::constant(&g, 10.0);
        let opts = SolveOptions::new(&g).tol(1e-12).sweep(Sweep::over_relaxed(&g));
        let r = psh_envelope(&obstacle, &Boundary::Function(Arc::new(f)), &DirectionSet::standard(1), &opts).unwrap();
        for i in g.closed_ball().iter() {
            let p = g.coords(i);
            assert!((r.u.get(i) - f(&p[..2])).abs() < 1e-9);
        }
    }

    #[test]
    fn extremal_disc_matches_log() {
        let g = make_ball_grid(1, 129).unwrap();
        let e = ball_mask(&g, &[0.0, 0.0], 0.3);
        let opts = SolveOptions::new(&g).tol(1e-9).sweep(Sweep::over_relaxed(&g));
        let r = relative_extremal(&e, &DirectionSet::standard(1), &opts).unwrap();
        let mut err: f64 = 0.0;
        for i in g.closed_ball().iter() {
            let rr = g.norm2(i).sqrt();
            let exact = (rr.ln() / (1.0f64 / 0.3).ln()).max(-1.0);
            err = err.max((r.u.get(i) - exact).abs());
        }
        assert!(err < 0.03, "{err}");
    }

    #[test]
    fn jacobi_and_gauss_seidel_agree() {
        let g = make_ball_grid(1, 33).unwrap();
        let e = ball_mask(&g, &[0.2, -0.1], 0.25);
        let d = DirectionSet::standard(1);
        let a = relative_extremal(&e, &d, &SolveOptions::new(&g).tol(1e-10)).unwrap();
        let b = relative_extremal(&e, &d, &SolveOptions::new(&g).tol(1e-10).sweep(Sweep::GaussSeidel { omega: 1.0 }))
            .unwrap();
        let c = relative_extremal(&e, &d, &SolveOptions::new(&g).tol(1e-10).sweep(Sweep::over_relaxed(&g))).unwrap();
        for i in 0..g.len() {
            assert!((a.u.get(i) - b.u.get(i)).abs() < 1e-7);
            assert!((a.u.get(i) - c.u.get(i)).abs() < 1e-7);
        }
    }

    #[test]
    fn envelope_is_below_obstacle_and_psh() {
        let g = make_ball_grid(2, 17).unwrap();
        let obstacle = ScalarField::from_fn(&g, |p| -((p[0] - 0.2).powi(2) + p[3] * p[3]).sqrt().cos());
        let d = DirectionSet::standard(2);
        let opts = SolveOptions::new(&g).tol(1e-9).sweep(Sweep::over_relaxed(&g));
        let r = psh_envelope(&obstacle, &Boundary::Constant(0.0), &d, &opts).unwrap();
        for i in g.closed_ball().iter() {
            if g.norm2(i) < 1.0 {
                assert!(r.u.get(i) <= obstacle.get(i));
            }
        }
        let interior = g.interior();
        let res = psh_residual(&r.u, &d, &interior).unwrap();
        assert!(res.max <= 1e-8, "{res:?}");
    }

    #[test]
    fn residual_of_concave_quadratic() {
        let g = make_ball_grid(1, 65).unwrap();
        let u = ScalarField::from_fn(&g, |p| -(p[0] * p[0] + p[1] * p[1]));
        let r = psh_residual(&u, &DirectionSet::standard(1), &g.closed_ball()).unwrap();
        assert!((r.max - g.h() * g.h()).abs() < 1e-12);
    }

    #[test]
    fn rejects_sets_touching_the_sphere() {
        let g = make_ball_grid(1, 33).unwrap();
        let e = ball_mask(&g, &[0.0, 0.0], 0.99);
        let d = DirectionSet::standard(1);
        assert!(matches!(relative_extremal(&e, &d, &SolveOptions::new(&g)), Err(LabError::NotCompact(_))));
        assert!(matches!(relative_extremal(&Mask::empty(&g), &d, &SolveOptions::new(&g)), Err(LabError::EmptySet)));
    }
}
