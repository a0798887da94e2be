//! Pairs (phi, psi) with d phi ^ d^c phi <= dd^c psi, the witness *-norm, and
//! exponential moments.

use serde::Serialize;

use crate::calculus::{ddc_mass_flux, domination_check, gradient_at, omega_power_density, DominationReport};
use crate::envelope::{Boundary, DirectionSet, LineStencils, Sweep};
use crate::error::{invalid, LabError, Result};
use crate::grid::{integrate, GridDomain, Mask, ScalarField};

/// Largest fraction of checked nodes allowed to violate the domination inequality.
pub const MAX_VIOLATION_FRACTION: f64 = 1e-3;

/// Tolerance of the domination check on a grid: 10 h^2.
pub fn domination_tolerance(grid: &GridDomain) -> f64 {
    10.0 * grid.h() * grid.h()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    PoissonSolved,
    UserSupplied,
}

/// A function phi with a negative potential psi whose dd^c dominates its gradient form.
#[derive(Debug, Clone)]
pub struct WStarPair {
    pub phi: ScalarField,
    pub psi: ScalarField,
    pub provenance: Provenance,
}

impl WStarPair {
    /// Checks that the grids agree and psi <= 0 on the closed ball. Domination itself is
    /// checked by [`star_norm`].
    pub fn new(phi: ScalarField, psi: ScalarField, provenance: Provenance) -> Result<Self> {
        if phi.grid() != psi.grid() {
            return Err(LabError::GridMismatch);
        }
        let g = psi.grid();
        let positive = (0..g.len()).filter(|&i| g.in_closed_ball(i) && psi.get(i) > 1e-12).count();
        if positive > 0 {
            return Err(invalid("psi", format!("psi must be <= 0 on the ball ({positive} positive nodes)")));
        }
        Ok(WStarPair { phi, psi, provenance })
    }

    pub fn grid(&self) -> &GridDomain {
        self.phi.grid()
    }

    /// Domination report on the interior nodes at tolerance 10 h^2.
    pub fn domination(&self) -> Result<DominationReport> {
        let g = self.grid();
        domination_check(&self.phi, &self.psi, &g.interior(), domination_tolerance(g))
    }
}

#[derive(Debug, Clone)]
pub struct PoissonDominator {
    pub psi: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Nodes where the gradient of phi was undefined; the right-hand side is 0 there.
    pub undefined_rhs: usize,
}

/// Solves Delta psi = |grad phi|^2 with psi = 0 on the unit circle (k = 1 only), so that
/// dd^c psi = d phi ^ d^c phi. Stops when max |Delta_h psi - rhs| <= tol.
pub fn poisson_dominator(phi: &ScalarField, tol: f64) -> Result<PoissonDominator> {
    let g = phi.grid();
    if g.k() != 1 {
        return Err(invalid("k", "Poisson dominators control only the trace; k=2 dominators must be analytic"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let mut rhs = vec![0.0; g.len()];
    let mut undefined_rhs = 0;
    for (i, r) in rhs.iter_mut().enumerate() {
        if g.norm2(i) >= 1.0 {
            continue;
        }
        match gradient_at(phi, i) {
            Some(d) => *r = 4.0 * d[0].norm_sqr(),
            None => undefined_rhs += 1,
        }
    }
    let st = LineStencils::new(g, &DirectionSet::axes(1), &Boundary::Constant(0.0))?;
    let Sweep::GaussSeidel { omega } = Sweep::over_relaxed(g) else { unreachable!() };
    let mut u = vec![0.0; g.len()];
    let max_iter = 20 * g.n() * g.n();
    let (iterations, residual) = st.solve_poisson(&mut u, &rhs, g.h(), omega, tol, max_iter)?;
    let mut psi = ScalarField::from_values(g, u)?;
    for i in 0..g.len() {
        if !g.in_closed_ball(i) {
            psi.set(i, 0.0);
        }
    }
    Ok(PoissonDominator { psi, iterations, residual, undefined_rhs })
}

/// Witness *-norm of a pair. It bounds the infimum over all dominating currents from above.
#[derive(Debug, Clone, Serialize)]
pub struct StarNorm {
    /// L1 term plus the square root of the mass term.
    pub value: f64,
    /// Integral of |phi| omega^k over the closed ball.
    pub l1: f64,
    /// Mass of dd^c psi ^ omega^{k-1} over the interior.
    pub mass: f64,
    pub skipped: usize,
    pub domination: DominationReport,
}

/// Witness norm int |phi| omega^k + (int dd^c psi ^ omega^{k-1})^{1/2}. Fails when more than
/// 0.1% of the checked interior nodes violate domination at tolerance 10 h^2.
pub fn star_norm(p: &WStarPair) -> Result<StarNorm> {
    let g = p.grid();
    let domination = p.domination()?;
    if domination.checked > 0 && !domination.passes(MAX_VIOLATION_FRACTION) {
        return Err(LabError::DominationFailure {
            violations: domination.violations,
            checked: domination.checked,
            worst: domination.worst,
        });
    }
    let abs = p.phi.map(f64::abs);
    let l1 = integrate(&abs, &g.closed_ball())?;
    let mass = ddc_mass_flux(&p.psi)?;
    let l1v = l1.value * omega_power_density(g.k());
    Ok(StarNorm {
        value: l1v + mass.value.max(0.0).sqrt(),
        l1: l1v,
        mass: mass.value,
        skipped: l1.skipped + mass.skipped,
        domination,
    })
}

/// Rescales to (phi / s, psi / s^2) with s the witness norm, which keeps domination and
/// gives witness norm 1. Returns the rescaled pair and s.
pub fn normalize_pair(p: &WStarPair) -> Result<(WStarPair, f64)> {
    let s = star_norm(p)?.value;
    if !(s > 0.0) {
        return Err(LabError::ZeroNorm);
    }
    Ok((scale_pair(p, 1.0 / s), s))
}

/// The pair (t phi, t^2 psi).
pub fn scale_pair(p: &WStarPair, t: f64) -> WStarPair {
    WStarPair { phi: p.phi.map(|v| t * v), psi: p.psi.map(|v| t * t * v), provenance: p.provenance }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpMoment {
    /// Integral of exp(c |phi|^alpha) over K against Lebesgue measure; +inf when divergent.
    pub value: f64,
    /// Natural log of `value`, finite whenever the sum is.
    pub log_value: f64,
    /// Nodes of K where phi is undefined (left out).
    pub skipped: usize,
    /// Nodes of K where phi is infinite (each makes the integral diverge).
    pub divergent: usize,
}

/// Integral of exp(c |phi|^alpha) d Leb over K, accumulated in log-sum-exp form.
pub fn exp_moment(phi: &ScalarField, k_set: &Mask, c: f64, alpha: f64) -> Result<ExpMoment> {
    if phi.grid() != k_set.grid() {
        return Err(LabError::GridMismatch);
    }
    if !(1.0..2.0).contains(&alpha) {
        return Err(invalid("alpha", "must lie in [1, 2)"));
    }
    if !(c > 0.0) {
        return Err(invalid("c", "must be positive"));
    }
    let (mut skipped, mut divergent) = (0, 0);
    let mut exps = Vec::with_capacity(k_set.count());
    for i in k_set.iter() {
        let v = phi.get(i);
        if v.is_nan() {
            skipped += 1;
        } else if v.is_infinite() {
            divergent += 1;
        } else {
            exps.push(c * v.abs().powf(alpha));
        }
    }
    let log_cell = phi.grid().cell_volume().ln();
    if divergent > 0 {
        return Ok(ExpMoment { value: f64::INFINITY, log_value: f64::INFINITY, skipped, divergent });
    }
    if exps.is_empty() {
        return Ok(ExpMoment { value: 0.0, log_value: f64::NEG_INFINITY, skipped, divergent });
    }
    let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exps.iter().map(|e| (e - top).exp()).sum();
    let log_value = top + sum.ln() + log_cell;
    Ok(ExpMoment { value: log_value.exp(), log_value, skipped, divergent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::psh_residual;
    use crate::grid::{ball_mask, make_ball_grid};
    use crate::quadrature;
    use std::f64::consts::PI;

    #[test]
    fn constant_phi_gives_zero_dominator() {
        let g = make_ball_grid(1, 33).unwrap();
        let d = poisson_dominator(&ScalarField::constant(&g, 2.5), 1e-10).unwrap();
        assert!(d.psi.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_phi_dominator_is_exact() {
        let g = make_ball_grid(1, 129).unwrap();
        let phi = ScalarField::from_fn(&g, |p| p[0]);
        let d = poisson_dominator(&phi, 1e-8).unwrap();
        let err = (0..g.len())
            .filter(|&i| g.in_closed_ball(i))
            .map(|i| (d.psi.get(i) - (g.norm2(i) - 1.0) / 4.0).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let res = psh_residual(&d.psi, &DirectionSet::axes(1), &g.interior()).unwrap();
        assert!(res.max <= 10.0 * g.h() * g.h());
    }

    #[test]
    fn poisson_dominator_rejects_k2() {
        let g = make_ball_grid(2, 17).unwrap();
        assert!(poisson_dominator(&ScalarField::constant(&g, 0.0), 1e-6).is_err());
    }

    #[test]
    fn radial_dominator_matches_ode() {
        // phi = (-log(|w|^2/4))^0.4 with undefined nodes inside 4h. Oracle: the radial
        // solution psi(r) = -int_r^1 M(s) / (2 pi s) ds, where M(s) is the rhs mass inside
        // radius s: the discrete rhs sum inside R = 8h (the unresolved core) plus the exact
        // radial integral from R to s.
        let g = make_ball_grid(1, 257).unwrap();
        let h = g.h();
        let a = 0.4;
        let phi = ScalarField::from_fn(&g, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1];
            if r2.sqrt() < 4.0 * h {
                f64::NAN
            } else {
                (-(r2 / 4.0).ln()).powf(a)
            }
        });
        let d = poisson_dominator(&phi, 1e-6).unwrap();
        let big_r = 8.0 * h;
        let core: f64 = (0..g.len())
            .filter(|&i| g.norm2(i).sqrt() < big_r)
            .filter_map(|i| gradient_at(&phi, i))
            .map(|d| 4.0 * d[0].norm_sqr() * h * h)
            .sum();
        let f = |r: f64| {
            let t = -(r * r / 4.0).ln();
            4.0 * a * a * t.powf(2.0 * a - 2.0) / (r * r)
        };
        let mass = |s: f64| core + 2.0 * PI * quadrature::integrate(|t| f(t) * t, big_r, s, 1e-10);
        let oracle = |r: f64| -quadrature::integrate(|s| mass(s) / (2.0 * PI * s), r, 1.0, 1e-8);
        let mut worst: f64 = 0.0;
        for r in [0.1, 0.2, 0.35, 0.5, 0.75, 0.9] {
            let i = g.nearest_node(&[r, 0.0]).unwrap();
            let rr = g.norm2(i).sqrt();
            worst = worst.max((d.psi.get(i) - oracle(rr)).abs());
        }
        assert!(worst < 1e-2, "{worst}");
    }

    #[test]
    fn star_norm_of_linear_pair() {
        let g = make_ball_grid(1, 257).unwrap();
        let phi = ScalarField::from_fn(&g, |p| p[0]);
        let psi = ScalarField::from_fn(&g, |p| (p[0] * p[0] + p[1] * p[1] - 1.0) / 4.0);
        let pair = WStarPair::new(phi, psi, Provenance::Analytic).unwrap();
        let s = star_norm(&pair).unwrap();
        // int |x| dLeb / pi = 4/(3 pi); mass = (1/2pi) int 1 = 1/2
        assert!((s.l1 - 4.0 / (3.0 * PI)).abs() < 0.02, "{s:?}");
        assert!((s.mass - 0.5).abs() < 0.02, "{s:?}");
        assert_eq!(s.domination.violations, 0);
    }

    #[test]
    fn zero_pair_has_zero_norm() {
        let g = make_ball_grid(1, 33).unwrap();
        let z = ScalarField::constant(&g, 0.0);
        let pair = WStarPair::new(z.clone(), z, Provenance::Analytic).unwrap();
        assert_eq!(star_norm(&pair).unwrap().value, 0.0);
        assert!(matches!(normalize_pair(&pair), Err(LabError::ZeroNorm)));
    }

    #[test]
    fn undominated_pair_is_rejected() {
        let g = make_ball_grid(1, 33).unwrap();
        let pair = WStarPair::new(ScalarField::from_fn(&g, |p| p[0]), ScalarField::constant(&g, 0.0), Provenance::UserSupplied)
            .unwrap();
        assert!(matches!(star_norm(&pair), Err(LabError::DominationFailure { .. })));
    }

    #[test]
    fn positive_psi_is_rejected() {
        let g = make_ball_grid(1, 33).unwrap();
        let z = ScalarField::constant(&g, 0.0);
        assert!(WStarPair::new(z, ScalarField::constant(&g, 0.1), Provenance::UserSupplied).is_err());
    }

    #[test]
    fn normalization_is_idempotent_and_scaling_is_exact() {
        let g = make_ball_grid(1, 65).unwrap();
        let phi = ScalarField::from_fn(&g, |p| p[0]);
        let psi = ScalarField::from_fn(&g, |p| (p[0] * p[0] + p[1] * p[1] - 1.0) / 4.0);
        let pair = WStarPair::new(phi, psi, Provenance::Analytic).unwrap();
        let (unit, s) = normalize_pair(&pair).unwrap();
        assert!(s > 0.0);
        let (again, s2) = normalize_pair(&unit).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12);
        for i in 0..g.len() {
            assert!((again.phi.get(i) - unit.phi.get(i)).abs() < 1e-12);
        }
        let four = scale_pair(&pair, 4.0);
        assert_eq!(four.psi.get(g.origin()), 16.0 * pair.psi.get(g.origin()));
        let d1 = pair.domination().unwrap();
        let d4 = four.domination().unwrap();
        assert_eq!(d1.violations, d4.violations);
    }

    #[test]
    fn exp_moment_basics() {
        let g = make_ball_grid(1, 129).unwrap();
        let k = ball_mask(&g, &[0.0, 0.0], 0.5);
        let m = exp_moment(&ScalarField::constant(&g, 0.0), &k, 1.0, 1.5).unwrap();
        assert!((m.value - k.measure()).abs() < 1e-12);
        assert!(exp_moment(&ScalarField::constant(&g, 0.0), &k, 1.0, 2.5).is_err());
        let mut phi = ScalarField::constant(&g, 800.0);
        let big = exp_moment(&phi, &k, 1.0, 1.0).unwrap();
        assert!(big.value.is_infinite() && (big.log_value - (800.0 + k.measure().ln())).abs() < 1e-9);
        phi.set(g.origin(), f64::NEG_INFINITY);
        assert_eq!(exp_moment(&phi, &k, 1.0, 1.0).unwrap().divergent, 1);
    }
}
