//! Approximations of unity, mollification and Lebesgue-point diagnostics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{GridDomain, Mask, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    /// Normalized indicator of the ball B(0, eps).
    Indicator,
    /// exp(1 - 1/(1 - s^8)), s = |y|/eps: smooth, radial, flat near the centre.
    SmoothRadial,
}

/// Volume of the unit ball of R^{2k}.
pub fn unit_ball_volume(k: usize) -> f64 {
    if k == 1 {
        PI
    } else {
        PI * PI / 2.0
    }
}

/// Density bound M with eps^{2k} mu_eps <= M Leb: twice the indicator normalization.
pub fn kernel_bound(k: usize) -> f64 {
    2.0 / unit_ball_volume(k)
}

fn smooth_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s.powi(8))).exp()
    }
}

/// Discrete probability measure supported in B(0, eps), stored as lattice offsets.
#[derive(Debug, Clone)]
pub struct UnityKernel {
    pub kind: KernelKind,
    pub eps: f64,
    k: usize,
    h: f64,
    offsets: Vec<[i64; 4]>,
    weights: Vec<f64>,
}

/// Lattice offsets y with |y| <= r (r in lattice units) in `dims` real dimensions.
pub fn lattice_ball(dims: usize, r: f64) -> Vec<[i64; 4]> {
    let ri = r.floor() as i64;
    let r2 = r * r * (1.0 + 1e-12);
    // The integer ball of radius ri + 1 contains every offset of norm <= r.
    crate::grid::ball_offsets(dims, ri + 1)
        .into_iter()
        .filter(|o| o.iter().map(|v| (v * v) as f64).sum::<f64>() <= r2)
        .collect()
}

impl UnityKernel {
    pub fn new(kind: KernelKind, grid: &GridDomain, eps: f64) -> Result<Self> {
        let h = grid.h();
        if !(eps >= 2.0 * h * (1.0 - 1e-12)) {
            return Err(invalid("eps", format!("mollifier radius {eps} is below 2h = {}", 2.0 * h)));
        }
        let r = eps / h;
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        for o in lattice_ball(grid.dims(), r) {
            let s = (o.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt() / r;
            let w = match kind {
                KernelKind::Indicator => 1.0,
                KernelKind::SmoothRadial => smooth_profile(s),
            };
            if w > 0.0 {
                offsets.push(o);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let kern = UnityKernel { kind, eps, k: grid.k(), h, offsets, weights };
        if kern.density_constant() > kernel_bound(grid.k()) {
            return Err(invalid("eps", "kernel density exceeds the approximation-of-unity bound"));
        }
        Ok(kern)
    }

    /// eps^{2k} times the largest density of the kernel against Lebesgue measure.
    pub fn density_constant(&self) -> f64 {
        let wmax = self.weights.iter().cloned().fold(0.0, f64::max);
        let d = 2 * self.k as i32;
        self.eps.powi(d) * wmax / self.h.powi(d)
    }

    pub fn support_size(&self) -> usize {
        self.offsets.len()
    }

    /// Mean of f over the kernel centred at node `idx`, renormalized over finite values.
    /// Returns the value and the kernel mass that had to be dropped.
    pub fn apply_at(&self, f: &ScalarField, idx: usize) -> Option<(f64, f64)> {
        let g = f.grid();
        let v = f.values();
        let (mut s, mut used) = (0.0, 0.0);
        for (o, &w) in self.offsets.iter().zip(&self.weights) {
            let neg = [-o[0], -o[1], -o[2], -o[3]];
            let j = g.shifted(idx, &neg[..g.dims()])?;
            if !g.in_closed_ball(j) {
                return None;
            }
            let x = v[j];
            if x.is_finite() {
                s += w * x;
                used += w;
            }
        }
        (used > 0.0).then(|| (s / used, 1.0 - used))
    }
}

#[derive(Debug, Clone)]
pub struct Mollified {
    pub field: ScalarField,
    /// Largest fraction of kernel mass dropped at any node because of non-finite values.
    pub max_excluded: f64,
}

/// Convolution with the kernel, evaluated on nodes whose kernel support keeps
/// distance eps from the boundary band; other nodes are undefined.
pub fn mollify(f: &ScalarField, kern: &UnityKernel) -> Mollified {
    let g = f.grid();
    let limit = 1.0 - g.h() - kern.eps;
    let strides = g.strides().to_vec();
    let flat: Vec<isize> = kern
        .offsets
        .iter()
        .map(|o| -(0..g.dims()).map(|a| o[a] as isize * strides[a] as isize).sum::<isize>())
        .collect();
    let v = f.values();
    let res: Vec<(f64, f64)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            if !g.in_closed_ball(i) || g.norm2(i).sqrt() > limit + 1e-12 {
                return (f64::NAN, 0.0);
            }
            let (mut s, mut used) = (0.0, 0.0);
            for (&o, &w) in flat.iter().zip(&kern.weights) {
                let x = v[(i as isize + o) as usize];
                if x.is_finite() {
                    s += w * x;
                    used += w;
                }
            }
            if used > 0.0 {
                (s / used, 1.0 - used)
            } else {
                (f64::NAN, 1.0)
            }
        })
        .collect();
    let max_excluded = res.iter().map(|r| r.1).fold(0.0, f64::max);
    let values = res.into_iter().map(|r| r.0).collect();
    Mollified { field: ScalarField::from_values(g, values).expect("same grid"), max_excluded }
}

fn check_radius(grid: &GridDomain, eps: f64) -> Result<()> {
    if eps < 2.0 * grid.h() * (1.0 - 1e-12) {
        return Err(invalid("eps", format!("radius {eps} is below 2h = {}", 2.0 * grid.h())));
    }
    Ok(())
}

/// Nodes of the closed unit ball within distance r of x0.
fn ball_nodes(grid: &GridDomain, x0: usize, r: f64) -> Vec<usize> {
    lattice_ball(grid.dims(), r / grid.h())
        .iter()
        .filter_map(|o| grid.shifted(x0, &o[..grid.dims()]))
        .filter(|&j| grid.in_closed_ball(j))
        .collect()
}

/// A(x0, eps) = mean over B(x0, eps) of |f - f(x0)| for each radius; non-finite
/// nodes in the ball are left out of the mean.
pub fn lebesgue_ratio(f: &ScalarField, x0: usize, eps_list: &[f64]) -> Result<Vec<f64>> {
    let g = f.grid();
    let f0 = f.get(x0);
    if !f0.is_finite() || !g.in_closed_ball(x0) {
        return Err(LabError::SingularPoint);
    }
    eps_list
        .iter()
        .map(|&eps| {
            check_radius(g, eps)?;
            let (mut s, mut c) = (0.0, 0usize);
            for j in ball_nodes(g, x0, eps) {
                let v = f.get(j);
                if v.is_finite() {
                    s += (v - f0).abs();
                    c += 1;
                }
            }
            if c == 0 {
                return Err(LabError::AllUndefined);
            }
            Ok(s / c as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityRow {
    pub r: f64,
    /// Leb(B(x0, r) intersect {|u - u(x0)| >= delta}).
    pub b: f64,
    /// Leb(B(x0, r)).
    pub c: f64,
    pub ratio: f64,
}

/// Density of the set where u leaves the delta-neighbourhood of u(x0). Nodes where u is
/// -inf count as inside that set; undefined nodes are left out of both measures.
pub fn density_ratio(u: &ScalarField, x0: usize, delta: f64, r_list: &[f64]) -> Result<Vec<DensityRow>> {
    let g = u.grid();
    let u0 = u.get(x0);
    if !u0.is_finite() {
        return Err(LabError::SingularPoint);
    }
    let vol = g.cell_volume();
    r_list
        .iter()
        .map(|&r| {
            check_radius(g, r)?;
            let (mut b, mut c) = (0usize, 0usize);
            for j in ball_nodes(g, x0, r) {
                let v = u.get(j);
                if v.is_nan() {
                    continue;
                }
                c += 1;
                if (v - u0).abs() >= delta {
                    b += 1;
                }
            }
            let ratio = if c == 0 { 0.0 } else { b as f64 / c as f64 };
            Ok(DensityRow { r, b: b as f64 * vol, c: c as f64 * vol, ratio })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskedMeanRow {
    pub r: f64,
    /// c_r^{-1} times the integral of u over B(x0, r) intersect V.
    pub inside: f64,
    /// c_r^{-1} times the integral of |u| over B(x0, r) minus V.
    pub outside: f64,
}

pub fn masked_mean(u: &ScalarField, x0: usize, r_list: &[f64], v: &Mask) -> Result<Vec<MaskedMeanRow>> {
    let g = u.grid();
    if g != v.grid() {
        return Err(LabError::GridMismatch);
    }
    r_list
        .iter()
        .map(|&r| {
            check_radius(g, r)?;
            let nodes = ball_nodes(g, x0, r);
            let c = nodes.len() as f64;
            let (mut inside, mut outside) = (0.0, 0.0);
            for j in nodes {
                let x = u.get(j);
                if !x.is_finite() {
                    continue;
                }
                if v.contains(j) {
                    inside += x;
                } else {
                    outside += x.abs();
                }
            }
            Ok(MaskedMeanRow { r, inside: inside / c, outside: outside / c })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub point: usize,
    pub eps: f64,
    /// |f_eps - f| at the point for the indicator kernel.
    pub indicator_error: f64,
    /// |f_eps - f| at the point for the smooth radial kernel.
    pub smooth_error: f64,
    /// |f_eps(indicator) - f_eps(smooth)|.
    pub cross: f64,
}

/// Pointwise mollifier errors for both kernels and their mutual deviation.
pub fn mollifier_convergence(f: &ScalarField, points: &[usize], eps_list: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let g = f.grid();
    let mut rows = Vec::new();
    for &eps in eps_list {
        let ki = UnityKernel::new(KernelKind::Indicator, g, eps)?;
        let ks = UnityKernel::new(KernelKind::SmoothRadial, g, eps)?;
        for &p in points {
            let f0 = f.get(p);
            if !f0.is_finite() {
                return Err(LabError::SingularPoint);
            }
            let (Some((a, _)), Some((b, _))) = (ki.apply_at(f, p), ks.apply_at(f, p)) else {
                return Err(invalid("points", "kernel support leaves the ball"));
            };
            rows.push(ConvergenceRow {
                point: p,
                eps,
                indicator_error: (a - f0).abs(),
                smooth_error: (b - f0).abs(),
                cross: (a - b).abs(),
            });
        }
    }
    Ok(rows)
}

/// `count` distinct nodes drawn uniformly from the ball of radius `max_radius`, keeping
/// only nodes at distance at least `min_dist` from every point of `avoid`.
pub fn sample_nodes(
    grid: &GridDomain,
    count: usize,
    seed: u64,
    max_radius: f64,
    avoid: &[[f64; 4]],
    min_dist: f64,
) -> Result<Vec<usize>> {
    let d = grid.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..1000 * count.max(1) {
        if out.len() == count {
            break;
        }
        let mut p = [0.0; 4];
        for x in p.iter_mut().take(d) {
            *x = rng.gen_range(-max_radius..=max_radius);
        }
        if p.iter().map(|x| x * x).sum::<f64>() > max_radius * max_radius {
            continue;
        }
        let Some(i) = grid.nearest_node(&p[..d]) else { continue };
        let c = grid.coords(i);
        let far = avoid.iter().all(|a| (0..d).map(|j| (c[j] - a[j]).powi(2)).sum::<f64>() >= min_dist * min_dist);
        if far && grid.in_closed_ball(i) && !out.contains(&i) {
            out.push(i);
        }
    }
    if out.len() < count {
        return Err(LabError::TooFewPoints { got: out.len(), need: count });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_ball_grid;

    #[test]
    fn kernels_respect_density_bound() {
        for (k, n) in [(1, 65), (2, 17)] {
            let g = make_ball_grid(k, n).unwrap();
            for kind in [KernelKind::Indicator, KernelKind::SmoothRadial] {
                for mult in [2.0, 3.0, 5.5] {
                    let kern = UnityKernel::new(kind, &g, mult * g.h()).unwrap();
                    assert!(kern.density_constant() <= kernel_bound(k));
                    let total: f64 = kern.weights.iter().sum();
                    assert!((total - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_small_radius() {
        let g = make_ball_grid(1, 65).unwrap();
        assert!(UnityKernel::new(KernelKind::Indicator, &g, g.h()).is_err());
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let g = make_ball_grid(1, 65).unwrap();
        let f = ScalarField::from_fn(&g, |p| 2.0 * p[0] - p[1] + 0.5);
        let kern = UnityKernel::new(KernelKind::SmoothRadial, &g, 4.0 * g.h()).unwrap();
        let m = mollify(&f, &kern);
        for i in 0..g.len() {
            let v = m.field.get(i);
            if v.is_finite() {
                assert!((v - f.get(i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn log_mean_at_pole() {
        let g = make_ball_grid(1, 513).unwrap();
        let mut f = ScalarField::from_fn(&g, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]).ln());
        f.set(g.origin(), f64::NEG_INFINITY);
        let eps = 32.0 * g.h();
        let kern = UnityKernel::new(KernelKind::Indicator, &g, eps).unwrap();
        let (v, dropped) = kern.apply_at(&f, g.origin()).unwrap();
        let exact = eps.ln() - 0.5;
        assert!((v - exact).abs() < 0.02 * exact.abs(), "{v} {exact}");
        assert!(dropped > 0.0);
    }

    #[test]
    fn density_of_truncated_log() {
        let g = make_ball_grid(1, 257).unwrap();
        let u = ScalarField::from_fn(&g, |p| (0.5 * (p[0] * p[0] + p[1] * p[1]).ln()).max(-10.0));
        let rows = density_ratio(&u, g.origin(), 1.0, &[0.1, 0.2, 0.3]).unwrap();
        for row in rows {
            // Only the centre node lies within e^{-9} of the origin.
            assert_eq!(row.b, row.c - g.cell_volume());
            let annulus = PI * (row.r * row.r - (-18.0f64).exp());
            assert!((row.b - annulus).abs() < 0.05 * annulus, "{row:?}");
        }
    }

    #[test]
    fn smooth_errors_shrink() {
        let g = make_ball_grid(1, 257).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p[0] * 2.0).sin() * (p[1] + 0.3).exp());
        let p = g.nearest_node(&[0.2, -0.1]).unwrap();
        let rows = mollifier_convergence(&f, &[p], &[0.04, 0.08, 0.16]).unwrap();
        assert!(rows[0].indicator_error < rows[2].indicator_error);
        assert!(rows[0].smooth_error < rows[2].smooth_error);
        assert!(rows[0].cross < rows[2].cross);
    }

    #[test]
    fn sampled_nodes_respect_constraints() {
        let g = crate::grid::make_ball_grid(1, 129).unwrap();
        let pts = sample_nodes(&g, 20, 3, 0.7, &[[0.0; 4]], 0.2).unwrap();
        assert_eq!(pts.len(), 20);
        for &i in &pts {
            let r = g.norm2(i).sqrt();
            assert!(r >= 0.2 && r <= 0.7 + g.h());
        }
        assert_eq!(pts, sample_nodes(&g, 20, 3, 0.7, &[[0.0; 4]], 0.2).unwrap());
        assert!(sample_nodes(&g, 5, 3, 0.1, &[[0.0; 4]], 0.5).is_err());
    }
}
