//! Truncated levels h_n of a negative psh function, the currents T_n = dd^c h_n^2 / 2, and
//! the energy integrals I and J evaluated over a finite dictionary of psh test functions.
//!
//! The integrals are defined as a sup over all psh v with 0 <= v <= 1; a finite dictionary
//! only gives lower bounds, and every probe value is labelled as one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{complex_hessian, gradient_form, omega_power_density, top_density, Herm, HermitianField};
use crate::envelope::{psh_residual, DirectionSet};
use crate::error::{invalid, LabError, Result};
use crate::fit::linear_fit;
use crate::grid::{GridDomain, Mask, ScalarField};
use crate::wstar::WStarPair;

/// Largest power m accepted by the probes.
pub const MAX_M: u32 = 3;
/// |phi| is clipped here inside the probes.
pub const PHI_CLIP: f64 = 1e3;
/// Largest sub-mean violation tolerated for a dictionary member: h^2, the residual of
/// 1 - |z|^2.
pub fn dictionary_psh_tolerance(grid: &GridDomain) -> f64 {
    grid.h() * grid.h()
}

fn omega() -> Herm {
    Herm::scalar(0.5)
}

#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub field: ScalarField,
    pub hessian: HermitianField,
}

/// Psh functions with values in [0, 1] on the closed ball.
#[derive(Debug, Clone)]
pub struct TestDictionary {
    grid: GridDomain,
    members: Vec<TestFunction>,
}

impl TestDictionary {
    pub fn new(grid: &GridDomain) -> Self {
        TestDictionary { grid: grid.clone(), members: Vec::new() }
    }

    /// Adds a member after checking 0 <= v <= 1 on the closed ball and the sub-mean
    /// inequality up to [`dictionary_psh_tolerance`].
    pub fn push(&mut self, name: impl Into<String>, field: ScalarField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(LabError::GridMismatch);
        }
        let ball = self.grid.closed_ball();
        if ball.iter().any(|i| !(field.get(i) >= 0.0 && field.get(i) <= 1.0)) {
            return Err(invalid("dictionary", "members must take values in [0, 1]"));
        }
        let r = psh_residual(&field, &DirectionSet::standard(self.grid.k()), &self.grid.interior())?;
        if r.max > dictionary_psh_tolerance(&self.grid) {
            return Err(invalid("dictionary", format!("member is not psh on the grid (residual {:e})", r.max)));
        }
        let hessian = complex_hessian(&field);
        self.members.push(TestFunction { name: name.into(), field, hessian });
        Ok(())
    }

    /// |z|^2, the constant 1/2, and for each shift a = +-0.5 e_j along the real axes
    /// |z - a|^2 / 4 and max(0, 1 + log(|z - a| / 2) / c) with c = 3. On coarse grids c
    /// shrinks so that the zero radius 2 e^{-c} stays at least 4h; below that the sampled
    /// log term fails the discrete sub-mean inequality.
    pub fn standard(grid: &GridDomain) -> Result<Self> {
        let mut shifts = Vec::new();
        for j in 0..grid.dims() {
            for s in [0.5, -0.5] {
                let mut a = [0.0; 4];
                a[j] = s;
                shifts.push(a);
            }
        }
        Self::with_shifts(grid, &shifts)
    }

    /// Same families with `count` shifts drawn uniformly from the ball of radius 0.9.
    pub fn random(grid: &GridDomain, seed: u64, count: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = grid.dims();
        let mut shifts = Vec::with_capacity(count);
        while shifts.len() < count {
            let mut a = [0.0; 4];
            for x in a.iter_mut().take(d) {
                *x = rng.gen_range(-0.9..0.9);
            }
            if a.iter().map(|x| x * x).sum::<f64>() <= 0.81 {
                shifts.push(a);
            }
        }
        Self::with_shifts(grid, &shifts)
    }

    fn with_shifts(grid: &GridDomain, shifts: &[[f64; 4]]) -> Result<Self> {
        let d = grid.dims();
        let c = 3f64.min((0.5 / grid.h()).ln());
        let mut dict = TestDictionary::new(grid);
        dict.push("abs2", ScalarField::from_fn(grid, |x| x[..d].iter().map(|v| v * v).sum()))?;
        dict.push("const", ScalarField::constant(grid, 0.5))?;
        for a in shifts {
            let a = *a;
            let dist2 = move |x: &[f64]| (0..d).map(|j| (x[j] - a[j]).powi(2)).sum::<f64>();
            let tag = a[..d].iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(",");
            dict.push(format!("quad({tag})"), ScalarField::from_fn(grid, |x| dist2(x) / 4.0))?;
            dict.push(
                format!("log({tag})"),
                ScalarField::from_fn(grid, |x| (1.0 + (0.5 * dist2(x).sqrt()).ln() / c).max(0.0)),
            )?;
        }
        Ok(dict)
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }
    pub fn len(&self) -> usize {
        self.members.len()
    }
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }
}

/// h_n = 1 + max(psi, -n) / n, in [0, 1] for psi <= 0.
pub fn h_level(psi: &ScalarField, n: usize) -> ScalarField {
    let n = n.max(1) as f64;
    psi.map(|p| if p.is_nan() { p } else { 1.0 + p.max(-n) / n })
}

#[derive(Debug, Clone)]
pub struct TCurrent {
    /// Coefficients of T_n = dd^c h_n^2 / 2.
    pub t: HermitianField,
    pub h: ScalarField,
    /// Nodes whose stencils stay on one side of {psi = -n}, avoid undefined values and are
    /// not cut by the sphere.
    pub smooth: Mask,
    pub checked: usize,
    /// Smooth nodes where T_n - dh_n ^ d^c h_n has an eigenvalue below -tol tr(T_n).
    pub gradient_violations: usize,
    /// Smooth nodes where T_n - h_n dd^c h_n has an eigenvalue below -tol tr(T_n).
    pub hessian_violations: usize,
}

/// T_n with the node-wise checks of T_n >= dh_n ^ d^c h_n and T_n >= h_n dd^c h_n
/// (the two terms of T_n = h_n dd^c h_n + dh_n ^ d^c h_n are positive). `tol` is relative
/// to the trace of T_n: where h_n is pluriharmonic the first check compares two quantities
/// that agree only up to truncation error.
pub fn t_current(psi: &ScalarField, n: usize, tol: f64) -> TCurrent {
    let g = psi.grid();
    let k = g.k();
    let h = h_level(psi, n);
    let t = complex_hessian(&h.map(|v| v * v));
    let t = HermitianField { grid: t.grid, values: t.values.into_iter().map(|a| a.map(|a| a.scale(0.5))).collect() };
    let floor = -(n.max(1) as f64);
    let above = Mask::from_fn(g, |_, i| psi.get(i) > floor && psi.get(i).is_finite());
    let undefined = Mask::from_fn(g, |_, i| psi.get(i).is_nan());
    let below = g.closed_ball().minus(&above).minus(&undefined);
    let reach = 2.0 * g.h();
    let near_below = below.or(&undefined).dilate(reach);
    let near_above = above.or(&undefined).dilate(reach);
    let inner = (1.0 - reach).powi(2);
    let smooth = Mask::from_fn(g, |g, i| {
        g.norm2(i) <= inner && (!near_below.contains(i) || !near_above.contains(i))
    });
    let dh = gradient_form(&h);
    let hh = complex_hessian(&h);
    let (mut checked, mut gradient_violations, mut hessian_violations) = (0, 0, 0);
    for i in smooth.iter() {
        let (Some(ti), Some(di), Some(hi)) = (t.values[i], dh.values[i], hh.values[i]) else { continue };
        checked += 1;
        let floor = -tol * ti.trace().abs();
        if ti.sub(&di).min_eig(k) < floor {
            gradient_violations += 1;
        }
        if ti.sub(&hi.scale(h.get(i))).min_eig(k) < floor {
            hessian_violations += 1;
        }
    }
    TCurrent { t, h, smooth, checked, gradient_violations, hessian_violations }
}

/// Mass of a (1,1)-coefficient field over a mask: the integral of A ^ omega^{k-1}.
pub fn current_mass(a: &HermitianField, m: &Mask) -> Result<f64> {
    if &a.grid != m.grid() {
        return Err(LabError::GridMismatch);
    }
    let k = a.grid.k();
    let sum: f64 = m.iter().filter_map(|i| a.values[i]).map(|x| top_density(k, &x, &omega())).sum();
    Ok(sum * a.grid.cell_volume())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// integral of phi^{2m} dd^c v_1 ^ ... ^ dd^c v_p ^ T_n ^ omega^{k-1-p}
    J,
    /// integral of h_n^2 phi^{2m} dd^c v_1 ^ ... ^ dd^c v_p ^ omega^{k-p}
    I,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeValue {
    pub kind: ProbeKind,
    pub n: usize,
    pub m: u32,
    pub p: usize,
    /// Max over dictionary tuples: a lower bound for the sup over all psh test functions.
    pub value: f64,
    pub lower_bound: bool,
    /// Dictionary members attaining the max (empty when p = 0).
    pub argmax: Vec<String>,
    /// Mask nodes where the integrand could not be evaluated.
    pub skipped: usize,
}

/// Evaluates I or J for one (n, m, p). With k <= 2 a tuple holds at most two test
/// functions; for p = 2 (k = 2, I only) both factors run over the dictionary.
pub fn probe(
    kind: ProbeKind,
    pair: &WStarPair,
    n: usize,
    m: u32,
    p: usize,
    k_set: &Mask,
    dict: &TestDictionary,
) -> Result<ProbeValue> {
    let g = pair.grid();
    let k = g.k();
    if k_set.grid() != g || dict.grid() != g {
        return Err(LabError::GridMismatch);
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if m > MAX_M {
        return Err(invalid("m", format!("must be at most {MAX_M}")));
    }
    let p_max = match kind {
        ProbeKind::J => k - 1,
        ProbeKind::I => k,
    };
    if p > p_max {
        return Err(invalid("p", format!("must be at most {p_max} here")));
    }
    if p > 0 && dict.is_empty() {
        return Err(invalid("dictionary", "is empty"));
    }
    let h = h_level(&pair.psi, n);
    let t = match kind {
        ProbeKind::J => Some(t_current(&pair.psi, n, 0.0).t),
        ProbeKind::I => None,
    };
    // weight(i) multiplies the top-degree density
    let weight = |i: usize| -> Option<f64> {
        let f = pair.phi.get(i);
        if f.is_nan() {
            return None;
        }
        let base = f.abs().min(PHI_CLIP).powi(2 * m as i32);
        match kind {
            ProbeKind::J => Some(base),
            ProbeKind::I => {
                let hv = h.get(i);
                if hv.is_nan() {
                    None
                } else {
                    Some(hv * hv * base)
                }
            }
        }
    };
    let tuples: Vec<Vec<usize>> = match p {
        0 => vec![vec![]],
        1 => (0..dict.len()).map(|a| vec![a]).collect(),
        _ => (0..dict.len()).flat_map(|a| (a..dict.len()).map(move |b| vec![a, b])).collect(),
    };
    let members = dict.members();
    let nodes: Vec<usize> = k_set.iter().collect();
    let evaluate = |tuple: &Vec<usize>| -> (f64, usize) {
        let (mut sum, mut skipped) = (0.0, 0usize);
        for &i in &nodes {
            let Some(w) = weight(i) else {
                skipped += 1;
                continue;
            };
            let hess = |a: usize| members[tuple[a]].hessian.values[i];
            let density = match (kind, p) {
                (ProbeKind::J, 0) => t.as_ref().unwrap().values[i].map(|ti| top_density(k, &ti, &omega())),
                (ProbeKind::J, _) => match (hess(0), t.as_ref().unwrap().values[i]) {
                    (Some(a), Some(ti)) => Some(top_density(k, &a, &ti)),
                    _ => None,
                },
                (ProbeKind::I, 0) => Some(omega_power_density(k)),
                (ProbeKind::I, 1) => hess(0).map(|a| top_density(k, &a, &omega())),
                (ProbeKind::I, _) => match (hess(0), hess(1)) {
                    (Some(a), Some(b)) => Some(top_density(k, &a, &b)),
                    _ => None,
                },
            };
            match density {
                Some(d) if (w * d).is_finite() => sum += w * d,
                _ => skipped += 1,
            }
        }
        (sum * g.cell_volume(), skipped)
    };
    let results: Vec<(f64, usize)> = tuples.par_iter().map(evaluate).collect();
    // first maximum in tuple order keeps the result deterministic
    let mut best = 0;
    for (j, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = j;
        }
    }
    Ok(ProbeValue {
        kind,
        n,
        m,
        p,
        value: results[best].0,
        lower_bound: true,
        argmax: tuples[best].iter().map(|&a| members[a].name.clone()).collect(),
        skipped: results[best].1,
    })
}

pub fn probe_j(pair: &WStarPair, n: usize, m: u32, p: usize, k_set: &Mask, dict: &TestDictionary) -> Result<ProbeValue> {
    probe(ProbeKind::J, pair, n, m, p, k_set, dict)
}

pub fn probe_i(pair: &WStarPair, n: usize, m: u32, p: usize, k_set: &Mask, dict: &TestDictionary) -> Result<ProbeValue> {
    probe(ProbeKind::I, pair, n, m, p, k_set, dict)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    /// Least-squares slope of log value against log n.
    pub exponent: f64,
    pub r2: f64,
}

/// Fits value ~ C n^e; needs at least three positive values.
pub fn growth_exponent(ns: &[usize], values: &[f64]) -> Result<GrowthFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(n, v)| ((*n as f64).ln(), v.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(LabError::TooFewPoints { got: xs.len(), need: 3 });
    }
    let (exponent, _, r2) = linear_fit(&xs, &ys);
    Ok(GrowthFit { exponent, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::ddc_mass;
    use crate::grid::{ball_mask, make_ball_grid};
    use crate::wstar::Provenance;
    use std::f64::consts::PI;

    fn log_pair(g: &GridDomain) -> WStarPair {
        let psi = ScalarField::from_fn(g, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>().ln());
        WStarPair::new(ScalarField::constant(g, 1.0), psi, Provenance::UserSupplied).unwrap()
    }

    #[test]
    fn h_level_examples() {
        let g = make_ball_grid(1, 33).unwrap();
        let h = h_level(&ScalarField::constant(&g, -1.5), 3);
        assert!(h.values().iter().all(|&v| v == 0.5));
        let h = h_level(&ScalarField::constant(&g, -7.0), 3);
        assert!(h.values().iter().all(|&v| v == 0.0));
        let psi = log_pair(&g).psi;
        let h = h_level(&psi, 1);
        for i in 0..g.len() {
            let expect = 1.0 + psi.get(i).max(-1.0);
            assert_eq!(h.get(i), expect);
        }
        // non-decreasing in n
        let (h2, h5) = (h_level(&psi, 2), h_level(&psi, 5));
        for i in g.closed_ball().iter() {
            assert!(h5.get(i) >= h2.get(i) && (0.0..=1.0).contains(&h2.get(i)));
        }
    }

    #[test]
    fn constant_psi_gives_zero_current() {
        let g = make_ball_grid(2, 17).unwrap();
        let tc = t_current(&ScalarField::constant(&g, -0.3), 2, 0.0);
        assert!(tc.t.values.iter().flatten().all(|a| a.a11.abs() < 1e-12 && a.a22.abs() < 1e-12));
    }

    #[test]
    fn current_mass_matches_radial_value() {
        // psi = log|z|, n = 2: h = 1 + max(log r, -2)/2 and d(h^2)/dr = 1 at r = 1, so
        // dd^c h^2 has unit mass on the disc and T_2 has mass 1/2.
        let g = make_ball_grid(1, 257).unwrap();
        let tc = t_current(&log_pair(&g).psi, 2, 0.0);
        let mass = current_mass(&tc.t, &g.closed_ball()).unwrap();
        assert!((mass - 0.5).abs() < 0.5 * 0.03, "{mass}");
    }

    #[test]
    fn current_splits_into_positive_terms() {
        for (k, n) in [(1, 129), (2, 17)] {
            let g = make_ball_grid(k, n).unwrap();
            let tc = t_current(&log_pair(&g).psi, 3, 0.05);
            assert!(tc.checked > 0);
            assert_eq!(tc.gradient_violations, 0, "k={k}");
            assert_eq!(tc.hessian_violations, 0, "k={k}");
        }
    }

    #[test]
    fn truncation_leaves_hessian_unchanged_above_level() {
        let g = make_ball_grid(1, 65).unwrap();
        let psi = log_pair(&g).psi;
        let n = 2.0;
        let cut = psi.map(|p| p.max(-n));
        let (a, b) = (complex_hessian(&cut), complex_hessian(&psi));
        let above = Mask::from_fn(&g, |_, i| psi.get(i) > -n);
        let inner = g.closed_ball().minus(&g.closed_ball().minus(&above).dilate(g.h()));
        assert!(inner.count() > 0);
        for i in inner.iter() {
            assert_eq!(a.values[i], b.values[i]);
        }
    }

    #[test]
    fn dictionaries_are_valid() {
        for (k, n) in [(1, 129), (2, 33)] {
            let g = make_ball_grid(k, n).unwrap();
            let d = TestDictionary::standard(&g).unwrap();
            assert_eq!(d.len(), 2 + 4 * g.dims());
            let r = TestDictionary::random(&g, 7, 5).unwrap();
            assert_eq!(r.len(), 12);
            let again = TestDictionary::random(&g, 7, 5).unwrap();
            assert_eq!(r.members()[4].field, again.members()[4].field);
        }
        let g = make_ball_grid(1, 17).unwrap();
        let mut d = TestDictionary::new(&g);
        assert!(d.push("big", ScalarField::constant(&g, 2.0)).is_err());
        assert!(d.push("concave", ScalarField::from_fn(&g, |x| (1.0 - 4.0 * x[0] * x[0]).max(0.0))).is_err());
    }

    #[test]
    fn trivial_probe_values() {
        let g = make_ball_grid(1, 65).unwrap();
        let k_set = ball_mask(&g, &[0.0, 0.0], 0.5);
        let dict = TestDictionary::standard(&g).unwrap();
        let pair = log_pair(&g);
        // m = 0, p = 0: no test function enters
        let j0 = probe_j(&pair, 2, 0, 0, &k_set, &dict).unwrap();
        let j0e = probe_j(&pair, 2, 0, 0, &k_set, &TestDictionary::new(&g)).unwrap();
        assert_eq!(j0.value, j0e.value);
        let i0 = probe_i(&pair, 2, 0, 0, &k_set, &dict).unwrap();
        assert!(i0.value <= k_set.measure() / PI + 1e-12);
        // phi = 0
        let zero = WStarPair::new(ScalarField::constant(&g, 0.0), pair.psi.clone(), Provenance::UserSupplied).unwrap();
        assert_eq!(probe_j(&zero, 3, 1, 0, &k_set, &dict).unwrap().value, 0.0);
        assert_eq!(probe_i(&zero, 3, 1, 1, &k_set, &dict).unwrap().value, 0.0);
        assert!(probe_i(&pair, 3, 4, 0, &k_set, &dict).is_err());
        assert!(probe_j(&pair, 3, 1, 1, &k_set, &dict).is_err());
        assert!(probe_i(&pair, 3, 1, 1, &k_set, &TestDictionary::new(&g)).is_err());
    }

    #[test]
    fn probe_with_abs2_is_ball_mass() {
        // dd^c |z|^2 = 2 omega, so the I probe with p = 1, phi = 1, h = 1 is at least 2 Leb(K)/pi.
        let g = make_ball_grid(1, 65).unwrap();
        let k_set = ball_mask(&g, &[0.0, 0.0], 0.5);
        let pair = WStarPair::new(ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 0.0), Provenance::UserSupplied)
            .unwrap();
        let v = probe_i(&pair, 1, 1, 1, &k_set, &TestDictionary::standard(&g).unwrap()).unwrap();
        assert!((v.value - 2.0 * k_set.measure() / PI).abs() < 1e-9, "{}", v.value);
        assert!(v.argmax[0] == "abs2" || v.argmax[0].starts_with("quad"));
        let mass = ddc_mass(&ScalarField::from_fn(&g, |x| x[0] * x[0] + x[1] * x[1]), &k_set).unwrap();
        assert!((mass.value - v.value).abs() < 1e-9);
    }

    #[test]
    fn k2_probes_use_mixed_densities() {
        let g = make_ball_grid(2, 17).unwrap();
        let k_set = ball_mask(&g, &[0.0; 4], 0.5);
        let pair = WStarPair::new(ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 0.0), Provenance::UserSupplied)
            .unwrap();
        let dict = TestDictionary::standard(&g).unwrap();
        // (dd^c |z|^2)^2 = 4 omega^2
        let v = probe_i(&pair, 1, 1, 2, &k_set, &dict).unwrap();
        assert!((v.value - 4.0 * omega_power_density(2) * k_set.measure()).abs() < 1e-9, "{}", v.value);
        assert!(probe_j(&pair, 1, 1, 1, &k_set, &dict).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn growth_fit() {
        let ns: Vec<usize> = (1..=8).collect();
        let vals: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(1.2)).collect();
        let f = growth_exponent(&ns, &vals).unwrap();
        assert!((f.exponent - 1.2).abs() < 1e-12 && f.r2 > 0.999);
        assert!(growth_exponent(&ns, &[0.0; 8]).is_err());
    }
}
