//! Finite-difference Wirtinger calculus on a [`GridDomain`].
//!
//! Forms are represented by their coefficient matrix in the basis (i/pi) dz_i ^ dzbar_j,
//! so dd^c f has matrix (d^2 f / dz_i dzbar_j) and df ^ d^c f has matrix f_{z_i} conj(f_{z_j}).
//! Densities against Lebesgue measure: k=1 multiplies the scalar by 2/pi; for k=2 the
//! top-degree product of two such forms A, B has density
//! (4/pi^2)(A11 B22 + A22 B11 - 2 Re(A12 conj B12)).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{GridDomain, Mask, ScalarField};

/// Hermitian 1x1 or 2x2 coefficient matrix. For k=1 only `a11` is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Herm {
    pub a11: f64,
    pub a22: f64,
    pub a12: Complex64,
}

impl Herm {
    pub const ZERO: Herm = Herm { a11: 0.0, a22: 0.0, a12: Complex64 { re: 0.0, im: 0.0 } };

    pub fn scalar(a: f64) -> Herm {
        Herm { a11: a, ..Herm::ZERO }
    }
    pub fn identity(k: usize) -> Herm {
        Herm { a11: 1.0, a22: if k == 2 { 1.0 } else { 0.0 }, ..Herm::ZERO }
    }
    pub fn outer(g: &[Complex64]) -> Herm {
        match g.len() {
            1 => Herm::scalar(g[0].norm_sqr()),
            _ => Herm { a11: g[0].norm_sqr(), a22: g[1].norm_sqr(), a12: g[0] * g[1].conj() },
        }
    }
    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }
    pub fn det(&self, k: usize) -> f64 {
        if k == 1 {
            self.a11
        } else {
            self.a11 * self.a22 - self.a12.norm_sqr()
        }
    }
    pub fn min_eig(&self, k: usize) -> f64 {
        if k == 1 {
            self.a11
        } else {
            let m = 0.5 * (self.a11 + self.a22);
            let d = (0.25 * (self.a11 - self.a22).powi(2) + self.a12.norm_sqr()).sqrt();
            m - d
        }
    }
    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a22.is_finite() && self.a12.re.is_finite() && self.a12.im.is_finite()
    }
    pub fn scale(&self, t: f64) -> Herm {
        Herm { a11: self.a11 * t, a22: self.a22 * t, a12: self.a12 * t }
    }
    pub fn add(&self, o: &Herm) -> Herm {
        Herm { a11: self.a11 + o.a11, a22: self.a22 + o.a22, a12: self.a12 + o.a12 }
    }
    pub fn sub(&self, o: &Herm) -> Herm {
        self.add(&o.scale(-1.0))
    }
    /// Coefficient of A ^ B against the 2x2 determinant form (k=2), so that the
    /// density of A ^ B is (4/pi^2) times this value.
    pub fn mixed(&self, o: &Herm) -> f64 {
        self.a11 * o.a22 + self.a22 * o.a11 - 2.0 * (self.a12 * o.a12.conj()).re
    }
}

/// Density of a top-degree product against Lebesgue measure.
/// k=1: the form A alone. k=2: A ^ B.
pub fn top_density(k: usize, a: &Herm, b: &Herm) -> f64 {
    if k == 1 {
        2.0 / PI * a.a11
    } else {
        4.0 / (PI * PI) * a.mixed(b)
    }
}

/// Density of omega^k, omega = dd^c |z|^2 / 2, against Lebesgue measure.
pub fn omega_power_density(k: usize) -> f64 {
    if k == 1 {
        1.0 / PI
    } else {
        2.0 / (PI * PI)
    }
}

/// Density of dd^c f ^ omega^{k-1} in terms of the Euclidean Laplacian.
pub fn laplacian_density_factor(k: usize) -> f64 {
    if k == 1 {
        1.0 / (2.0 * PI)
    } else {
        1.0 / (2.0 * PI * PI)
    }
}

/// A node plus its lattice offsets, for cheap neighbour lookups restricted to the closed ball.
#[derive(Clone, Copy)]
pub(crate) struct Site<'a> {
    g: &'a GridDomain,
    idx: usize,
    m: [i64; 4],
    r2max: i64,
}

impl<'a> Site<'a> {
    pub(crate) fn new(g: &'a GridDomain, idx: usize) -> Self {
        let half = g.half();
        Site { g, idx, m: g.lattice(idx), r2max: half * half }
    }

    /// Index of the node at lattice offset `off` if it lies in the closed ball.
    #[inline]
    pub(crate) fn at(&self, off: &[i64; 4]) -> Option<usize> {
        let mut r2 = 0;
        let mut idx = self.idx as i64;
        let strides = self.g.strides();
        for a in 0..strides.len() {
            let p = self.m[a] + off[a];
            r2 += p * p;
            idx += off[a] * strides[a] as i64;
        }
        (r2 <= self.r2max).then_some(idx as usize)
    }

    fn axis(&self, a: usize, s: i64) -> Option<usize> {
        let mut off = [0i64; 4];
        off[a] = s;
        self.at(&off)
    }
}

const FIRST_CENTRAL: &[(i64, f64)] = &[(-1, -0.5), (1, 0.5)];
const FIRST_FORWARD: &[(i64, f64)] = &[(0, -1.5), (1, 2.0), (2, -0.5)];
const FIRST_BACKWARD: &[(i64, f64)] = &[(0, 1.5), (-1, -2.0), (-2, 0.5)];
const SECOND_CENTRAL: &[(i64, f64)] = &[(-1, 1.0), (0, -2.0), (1, 1.0)];
const SECOND_FORWARD: &[(i64, f64)] = &[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)];
const SECOND_BACKWARD: &[(i64, f64)] = &[(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)];
const FIRST_CENTRAL4: &[(i64, f64)] = &[(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];
const SECOND_CENTRAL4: &[(i64, f64)] =
    &[(-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0), (1, 16.0 / 12.0), (2, -1.0 / 12.0)];

fn axis_fits(site: &Site, a: usize, st: &[(i64, f64)]) -> bool {
    st.iter().all(|&(o, _)| site.axis(a, o).is_some())
}

/// First-derivative stencils along axis `a`, most preferred first.
fn first_candidates<'a>(site: &'a Site<'a>, a: usize) -> impl Iterator<Item = &'static [(i64, f64)]> + 'a {
    [FIRST_CENTRAL, FIRST_FORWARD, FIRST_BACKWARD].into_iter().filter(move |st| axis_fits(site, a, st))
}

fn second_stencil(site: &Site, a: usize) -> Option<&'static [(i64, f64)]> {
    [SECOND_CENTRAL, SECOND_FORWARD, SECOND_BACKWARD].into_iter().find(|st| axis_fits(site, a, st))
}

fn apply_axis(f: &[f64], site: &Site, a: usize, st: &[(i64, f64)]) -> Option<f64> {
    let mut s = 0.0;
    for &(o, w) in st {
        let v = f[site.axis(a, o)?];
        if !v.is_finite() {
            return None;
        }
        s += w * v;
    }
    Some(s)
}

pub(crate) fn first_derivative(f: &[f64], site: &Site, a: usize, h: f64) -> Option<f64> {
    let st = first_candidates(site, a).next()?;
    apply_axis(f, site, a, st).map(|v| v / h)
}

pub(crate) fn second_derivative(f: &[f64], site: &Site, a: usize, h: f64) -> Option<f64> {
    let st = second_stencil(site, a)?;
    apply_axis(f, site, a, st).map(|v| v / (h * h))
}

pub(crate) fn mixed_derivative(f: &[f64], site: &Site, a: usize, b: usize, h: f64) -> Option<f64> {
    for sa in first_candidates(site, a) {
        'combo: for sb in first_candidates(site, b) {
            let mut s = 0.0;
            for &(oa, wa) in sa {
                for &(ob, wb) in sb {
                    let mut off = [0i64; 4];
                    off[a] = oa;
                    off[b] = ob;
                    let Some(j) = site.at(&off) else { continue 'combo };
                    let v = f[j];
                    if !v.is_finite() {
                        return None;
                    }
                    s += wa * wb * v;
                }
            }
            return Some(s / (h * h));
        }
    }
    None
}

/// Tensor of two axis stencils applied at the site; None if a point is missing or not finite.
fn apply_tensor(f: &[f64], site: &Site, a: usize, sa: &[(i64, f64)], b: usize, sb: &[(i64, f64)]) -> Option<f64> {
    let mut s = 0.0;
    for &(oa, wa) in sa {
        for &(ob, wb) in sb {
            let mut off = [0i64; 4];
            off[a] = oa;
            off[b] = ob;
            let v = f[site.at(&off)?];
            if !v.is_finite() {
                return None;
            }
            s += wa * wb * v;
        }
    }
    Some(s)
}

/// Fourth-order central gradient and Hessian, when every stencil point is in the ball
/// and finite.
fn fourth_order_at(f: &ScalarField, idx: usize) -> Option<([Complex64; 2], Herm)> {
    let g = f.grid();
    let site = Site::new(g, idx);
    let v = f.values();
    let h = g.h();
    let d1 = |a: usize| apply_axis(v, &site, a, FIRST_CENTRAL4).map(|x| x / h);
    let d2 = |a: usize| apply_axis(v, &site, a, SECOND_CENTRAL4).map(|x| x / (h * h));
    let mx = |a: usize, b: usize| apply_tensor(v, &site, a, FIRST_CENTRAL4, b, FIRST_CENTRAL4).map(|x| x / (h * h));
    let mut grad = [Complex64::new(0.0, 0.0); 2];
    for (j, o) in grad.iter_mut().enumerate().take(g.k()) {
        *o = Complex64::new(0.5 * d1(2 * j)?, -0.5 * d1(2 * j + 1)?);
    }
    let a11 = 0.25 * (d2(0)? + d2(1)?);
    if g.k() == 1 {
        return Some((grad, Herm::scalar(a11)));
    }
    let a22 = 0.25 * (d2(2)? + d2(3)?);
    let re = mx(0, 2)? + mx(1, 3)?;
    let im = mx(0, 3)? - mx(1, 2)?;
    Some((grad, Herm { a11, a22, a12: Complex64::new(0.25 * re, 0.25 * im) }))
}

/// Wirtinger gradient (f_{z_1}, ..., f_{z_k}) at one node.
pub fn gradient_at(f: &ScalarField, idx: usize) -> Option<[Complex64; 2]> {
    let g = f.grid();
    if !g.in_closed_ball(idx) {
        return None;
    }
    let site = Site::new(g, idx);
    let v = f.values();
    let h = g.h();
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (j, o) in out.iter_mut().enumerate().take(g.k()) {
        let fx = first_derivative(v, &site, 2 * j, h)?;
        let fy = first_derivative(v, &site, 2 * j + 1, h)?;
        *o = Complex64::new(0.5 * fx, -0.5 * fy);
    }
    Some(out)
}

/// Complex Hessian (f_{z_i zbar_j}) at one node.
pub fn hessian_at(f: &ScalarField, idx: usize) -> Option<Herm> {
    let g = f.grid();
    if !g.in_closed_ball(idx) {
        return None;
    }
    let site = Site::new(g, idx);
    let v = f.values();
    let h = g.h();
    let d2 = |a: usize| second_derivative(v, &site, a, h);
    let a11 = 0.25 * (d2(0)? + d2(1)?);
    if g.k() == 1 {
        return Some(Herm::scalar(a11));
    }
    let a22 = 0.25 * (d2(2)? + d2(3)?);
    let mx = |a: usize, b: usize| mixed_derivative(v, &site, a, b, h);
    let re = mx(0, 2)? + mx(1, 3)?;
    let im = mx(0, 3)? - mx(1, 2)?;
    Some(Herm { a11, a22, a12: Complex64::new(0.25 * re, 0.25 * im) })
}

/// Euclidean Laplacian at one node, summed directly over the axes.
pub fn laplacian_at(f: &ScalarField, idx: usize) -> Option<f64> {
    let g = f.grid();
    if !g.in_closed_ball(idx) {
        return None;
    }
    let site = Site::new(g, idx);
    let mut s = 0.0;
    for a in 0..g.dims() {
        s += second_derivative(f.values(), &site, a, g.h())?;
    }
    Some(s)
}

/// Wirtinger gradient of a field; undefined entries are `None`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: GridDomain,
    pub values: Vec<Option<[Complex64; 2]>>,
}

/// Hermitian-matrix-valued field; undefined entries are `None`.
#[derive(Debug, Clone)]
pub struct HermitianField {
    pub grid: GridDomain,
    pub values: Vec<Option<Herm>>,
}

impl HermitianField {
    /// Fraction of defined nodes in `m` whose matrix has an eigenvalue below -tol.
    pub fn indefinite_fraction(&self, m: &Mask, tol: f64) -> f64 {
        let k = self.grid.k();
        let (mut bad, mut seen) = (0usize, 0usize);
        for i in m.iter() {
            if let Some(a) = self.values[i] {
                seen += 1;
                if a.min_eig(k) < -tol {
                    bad += 1;
                }
            }
        }
        if seen == 0 {
            0.0
        } else {
            bad as f64 / seen as f64
        }
    }
}

pub fn wirtinger_gradient(f: &ScalarField) -> VectorField {
    let values = (0..f.grid().len()).into_par_iter().map(|i| gradient_at(f, i)).collect();
    VectorField { grid: f.grid().clone(), values }
}

pub fn complex_hessian(f: &ScalarField) -> HermitianField {
    let values = (0..f.grid().len()).into_par_iter().map(|i| hessian_at(f, i)).collect();
    HermitianField { grid: f.grid().clone(), values }
}

/// Coefficient matrix of df ^ d^c f.
pub fn gradient_form(f: &ScalarField) -> HermitianField {
    let k = f.grid().k();
    let values = (0..f.grid().len())
        .into_par_iter()
        .map(|i| gradient_at(f, i).map(|g| Herm::outer(&g[..k])))
        .collect();
    HermitianField { grid: f.grid().clone(), values }
}

/// Total mass with the number of mask nodes that could not be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mass {
    pub value: f64,
    pub skipped: usize,
}

fn masked_sum(m: &Mask, f: impl Fn(usize) -> Option<f64> + Sync) -> (f64, usize) {
    let nodes: Vec<usize> = m.iter().collect();
    let vals: Vec<Option<f64>> = nodes.par_iter().map(|&i| f(i)).collect();
    let mut sum = 0.0;
    let mut skipped = 0;
    for v in vals {
        match v {
            Some(x) => sum += x,
            None => skipped += 1,
        }
    }
    (sum, skipped)
}

/// Mass of dd^c f ^ omega^{k-1} over the mask.
pub fn ddc_mass(f: &ScalarField, m: &Mask) -> Result<Mass> {
    if f.grid() != m.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = f.grid();
    let (sum, skipped) = masked_sum(m, |i| laplacian_at(f, i));
    Ok(Mass { value: sum * laplacian_density_factor(g.k()) * g.cell_volume(), skipped })
}

/// Mass of dd^c f ^ omega^{k-1} over the interior nodes, computed from the flux of f
/// through the edges leaving the interior. On fields finite everywhere this equals
/// [`ddc_mass`] over the interior mask; it needs f only near the boundary, so it also
/// accounts for mass concentrated at points where f is singular.
pub fn ddc_mass_flux(f: &ScalarField) -> Result<Mass> {
    use crate::grid::NodeClass;
    let g = f.grid();
    let v = f.values();
    let mut sum = 0.0;
    let mut skipped = 0;
    for i in 0..g.len() {
        if g.class(i) != NodeClass::Interior {
            continue;
        }
        let site = Site::new(g, i);
        for a in 0..g.dims() {
            for s in [-1, 1] {
                let j = site.axis(a, s).expect("interior neighbours are in the ball");
                if g.class(j) == NodeClass::Interior {
                    continue;
                }
                let d = v[j] - v[i];
                if d.is_finite() {
                    sum += d;
                } else {
                    skipped += 1;
                }
            }
        }
    }
    let h = g.h();
    let scale = h.powi(g.dims() as i32 - 2) * laplacian_density_factor(g.k());
    Ok(Mass { value: sum * scale, skipped })
}

/// Monge-Ampere mass with negative determinants clipped to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaMass {
    pub value: f64,
    /// Total |density| removed by clipping.
    pub clipped_mass: f64,
    /// Fraction of evaluated nodes whose determinant was negative.
    pub clipped_fraction: f64,
    pub skipped: usize,
}

/// Mass of (dd^c f)^k over the mask.
pub fn ma_mass(f: &ScalarField, m: &Mask) -> Result<MaMass> {
    if f.grid() != m.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = f.grid();
    let k = g.k();
    let nodes: Vec<usize> = m.iter().collect();
    let dens: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|&i| hessian_at(f, i).map(|a| top_density(k, &a, &a)))
        .collect();
    let (mut sum, mut clipped, mut neg, mut seen, mut skipped) = (0.0, 0.0, 0usize, 0usize, 0usize);
    for d in dens {
        match d {
            Some(x) => {
                seen += 1;
                if x < 0.0 {
                    clipped -= x;
                    neg += 1;
                } else {
                    sum += x;
                }
            }
            None => skipped += 1,
        }
    }
    let vol = g.cell_volume();
    Ok(MaMass {
        value: sum * vol,
        clipped_mass: clipped * vol,
        clipped_fraction: if seen == 0 { 0.0 } else { neg as f64 / seen as f64 },
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationReport {
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Most negative eigenvalue (k=1: scalar) of dd^c psi - dphi ^ d^c phi seen; 0 if none.
    pub worst: f64,
}

impl DominationReport {
    pub fn passes(&self, max_fraction: f64) -> bool {
        self.checked > 0 && self.violation_fraction <= max_fraction
    }
}

/// Checks dd^c psi - dphi ^ d^c phi >= -tol on the mask: a scalar sign for k=1,
/// trace and determinant for k=2. Derivatives are fourth-order central differences where
/// their five-point stencils fit and are finite, and the usual second-order ones otherwise.
pub fn domination_check(phi: &ScalarField, psi: &ScalarField, m: &Mask, tol: f64) -> Result<DominationReport> {
    if phi.grid() != psi.grid() || phi.grid() != m.grid() {
        return Err(LabError::GridMismatch);
    }
    let k = phi.grid().k();
    let nodes: Vec<usize> = m.iter().collect();
    let diffs: Vec<Option<Herm>> = nodes
        .par_iter()
        .map(|&i| {
            let a = fourth_order_at(psi, i).map(|x| x.1).or_else(|| hessian_at(psi, i))?;
            let gphi = fourth_order_at(phi, i).map(|x| x.0).or_else(|| gradient_at(phi, i))?;
            Some(a.sub(&Herm::outer(&gphi[..k])))
        })
        .collect();
    let (mut checked, mut skipped, mut bad, mut worst) = (0, 0, 0, 0.0f64);
    for d in diffs {
        let Some(d) = d else {
            skipped += 1;
            continue;
        };
        checked += 1;
        let ok = if k == 1 { d.a11 >= -tol } else { d.trace() >= -tol && d.det(2) >= -tol };
        if !ok {
            bad += 1;
        }
        worst = worst.min(d.min_eig(k));
    }
    Ok(DominationReport {
        checked,
        skipped,
        violations: bad,
        violation_fraction: if checked == 0 { 0.0 } else { bad as f64 / checked as f64 },
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ball_mask, make_ball_grid};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let g = make_ball_grid(2, 17).unwrap();
        // f = |z1|^2 + 2 Re(z1 conj z2) + 3|z2|^2 -> A = [[1,1],[1,3]]
        let f = ScalarField::from_fn(&g, |p| {
            p[0] * p[0] + p[1] * p[1] + 2.0 * (p[0] * p[2] + p[1] * p[3]) + 3.0 * (p[2] * p[2] + p[3] * p[3])
        });
        for i in 0..g.len() {
            if let Some(a) = hessian_at(&f, i) {
                assert!(close(a.a11, 1.0, 1e-9) && close(a.a22, 3.0, 1e-9));
                assert!(close(a.a12.re, 1.0, 1e-9) && close(a.a12.im, 0.0, 1e-9));
            }
        }
    }

    #[test]
    fn imaginary_off_diagonal_sign() {
        let g = make_ball_grid(2, 17).unwrap();
        // f = 2 Re(i z1 conj z2) = -2 (x1 y2 - y1 x2) ... A12 = i
        let f = ScalarField::from_fn(&g, |p| -2.0 * (p[1] * p[2] - p[0] * p[3]));
        let a = hessian_at(&f, g.origin()).unwrap();
        assert!(close(a.a12.re, 0.0, 1e-9) && close(a.a12.im, 1.0, 1e-9), "{a:?}");
    }

    #[test]
    fn gradient_of_linear_and_boundary_fallback() {
        let g = make_ball_grid(1, 33).unwrap();
        let f = ScalarField::from_fn(&g, |p| 3.0 * p[0] - 2.0 * p[1]);
        let edge = g.index_of(&[15, 3]).unwrap();
        for i in [g.origin(), edge] {
            let gr = gradient_at(&f, i).unwrap();
            assert!(close(gr[0].re, 1.5, 1e-12) && close(gr[0].im, 1.0, 1e-12));
        }
    }

    #[test]
    fn undefined_neighbour_propagates() {
        let g = make_ball_grid(1, 17).unwrap();
        let mut f = ScalarField::from_fn(&g, |p| p[0]);
        let o = g.origin();
        f.set(o, f64::NAN);
        let right = g.index_of(&[1, 0]).unwrap();
        assert!(hessian_at(&f, right).is_none());
        assert!(gradient_at(&f, right).is_none());
        assert!(gradient_at(&f, g.index_of(&[2, 0]).unwrap()).is_some());
    }

    #[test]
    fn omega_power_has_unit_mass() {
        let g = make_ball_grid(1, 257).unwrap();
        let w = ScalarField::from_fn(&g, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]));
        let m = ma_mass(&w, &g.closed_ball()).unwrap();
        assert!(close(m.value, 1.0, 0.01), "{m:?}");
    }

    #[test]
    fn trace_path_matches_laplacian_path() {
        let g = make_ball_grid(2, 17).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p[0] * p[1]).sin() + p[2].exp() * p[3] + (p[0] + p[3]).powi(4));
        let m = ball_mask(&g, &[0.0; 4], 0.8);
        let direct = ddc_mass(&f, &m).unwrap();
        let herm = complex_hessian(&f);
        let mut via_trace = 0.0;
        for i in m.iter() {
            via_trace += 4.0 * herm.values[i].unwrap().trace();
        }
        via_trace *= laplacian_density_factor(2) * g.cell_volume();
        assert!((direct.value - via_trace).abs() <= 1e-12 * direct.value.abs().max(1.0));
    }

    #[test]
    fn flux_mass_matches_sum_on_smooth_fields() {
        let g = make_ball_grid(1, 65).unwrap();
        let f = ScalarField::from_fn(&g, |p| (p[0] * 1.3).exp() + p[1] * p[1] * p[0]);
        let direct = ddc_mass(&f, &g.interior()).unwrap();
        let flux = ddc_mass_flux(&f).unwrap();
        assert!((direct.value - flux.value).abs() < 1e-10, "{direct:?} {flux:?}");
    }

    #[test]
    fn flux_mass_sees_point_mass() {
        let g = make_ball_grid(1, 129).unwrap();
        let mut f = ScalarField::from_fn(&g, |p| 0.5 * (p[0] * p[0] + p[1] * p[1]).ln());
        f.set(g.origin(), f64::NEG_INFINITY);
        let flux = ddc_mass_flux(&f).unwrap();
        assert!(close(flux.value, 1.0, 0.01), "{flux:?}");
    }

    #[test]
    fn linear_equality_dominator() {
        let g = make_ball_grid(1, 65).unwrap();
        let phi = ScalarField::from_fn(&g, |p| p[0]);
        let psi = ScalarField::from_fn(&g, |p| 0.25 * (p[0] * p[0] + p[1] * p[1] - 1.0));
        let r = domination_check(&phi, &psi, &g.interior(), 1e-9).unwrap();
        assert_eq!(r.violations, 0);
        let bad = ScalarField::from_fn(&g, |p| 0.2 * (p[0] * p[0] + p[1] * p[1] - 1.0));
        let r = domination_check(&phi, &bad, &g.interior(), 1e-9).unwrap();
        assert_eq!(r.violation_fraction, 1.0);
    }
}
