//! Relative (Bedford-Taylor) capacity of compact sets from Monge-Ampere masses of
//! relative extremal functions.

use serde::Serialize;

use crate::calculus::ma_mass;
use crate::envelope::{relative_extremal, relative_extremal_ball, DirectionSet, EnvelopeResult, SolveOptions, Sweep};
use crate::error::{LabError, Result};
use crate::grid::{ball_mask, GridDomain, Mask, ScalarField};
use crate::lebesgue::{mollify, KernelKind, UnityKernel};

#[derive(Debug, Clone)]
pub struct CapOptions {
    pub solve: SolveOptions,
    pub dirs: DirectionSet,
}

impl CapOptions {
    /// Tolerance 1e-7 with over-relaxed sweeps (omega 1.2 for k=2) and the standard directions.
    pub fn new(grid: &GridDomain) -> Self {
        let sweep = if grid.k() == 1 { Sweep::over_relaxed(grid) } else { Sweep::GaussSeidel { omega: 1.2 } };
        CapOptions { solve: SolveOptions::new(grid).tol(1e-7).sweep(sweep), dirs: DirectionSet::standard(grid.k()) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityEstimate {
    /// Monge-Ampere mass of the extremal function after one smoothing pass at scale 2h.
    pub value: f64,
    /// Mass of the unsmoothed extremal function (negative determinants clipped).
    pub raw_value: f64,
    pub resolution: usize,
    pub iterations: usize,
    pub residual: f64,
    /// Fraction of the smoothed mass found off the 3h-dilation of the set.
    pub mass_outside: f64,
    /// Fraction of nodes where the smoothed determinant was negative and got clipped.
    pub clipped_fraction: f64,
    pub warnings: Vec<String>,
}

impl CapacityEstimate {
    fn zero(grid: &GridDomain) -> Self {
        CapacityEstimate {
            value: 0.0,
            raw_value: 0.0,
            resolution: grid.n(),
            iterations: 0,
            residual: 0.0,
            mass_outside: 0.0,
            clipped_fraction: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// Capacity estimate from an extremal function `u` of the set `e`.
pub fn capacity_from_extremal(u: &ScalarField, e: &Mask) -> Result<(f64, f64, f64, f64)> {
    let g = u.grid();
    let raw = ma_mass(u, &g.closed_ball())?;
    let kern = UnityKernel::new(KernelKind::SmoothRadial, g, 2.0 * g.h())?;
    let smooth = mollify(u, &kern).field;
    let all = ma_mass(&smooth, &g.closed_ball())?;
    let near = e.dilate(3.0 * g.h());
    let far = g.closed_ball().minus(&near);
    let off = ma_mass(&smooth, &far)?;
    let outside = if all.value > 0.0 { off.value / all.value } else { 0.0 };
    Ok((all.value, raw.value, outside, all.clipped_fraction))
}

/// Capacity estimate from a solved relative extremal function of `e`.
pub fn estimate_from_envelope(res: EnvelopeResult, e: &Mask) -> Result<CapacityEstimate> {
    let g = e.grid();
    let (value, raw_value, mass_outside, clipped_fraction) = capacity_from_extremal(&res.u, e)?;
    let mut warnings = Vec::new();
    if mass_outside > 0.10 {
        warnings.push(format!("{:.1}% of the mass lies off the 3h-dilation of the set", 100.0 * mass_outside));
    }
    Ok(CapacityEstimate {
        value,
        raw_value,
        resolution: g.n(),
        iterations: res.iterations,
        residual: res.residual,
        mass_outside,
        clipped_fraction,
        warnings,
    })
}

/// Capacity of a node set: the Monge-Ampere mass of its relative extremal function.
/// The empty set has capacity 0.
pub fn cap_bt(e: &Mask, opts: &CapOptions) -> Result<CapacityEstimate> {
    if e.is_empty() {
        return Ok(CapacityEstimate::zero(e.grid()));
    }
    let res = relative_extremal(e, &opts.dirs, &opts.solve)?;
    estimate_from_envelope(res, e)
}

/// Capacity of the closed ball B(center, radius), resolving its boundary below grid scale.
pub fn cap_bt_ball(grid: &GridDomain, center: &[f64], radius: f64, opts: &CapOptions) -> Result<CapacityEstimate> {
    let res = relative_extremal_ball(grid, center, radius, &opts.dirs, &opts.solve)?;
    estimate_from_envelope(res, &ball_mask(grid, center, radius))
}

/// Capacity of B(0, r) in the unit ball: (1/log(1/r))^k.
pub fn ball_capacity_exact(k: usize, r: f64) -> f64 {
    (1.0 / (1.0 / r).ln()).powi(k as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Levels n whose capacity was positive and entered the fit.
    pub used: Vec<usize>,
}

/// Least-squares fit of log value against n over the positive entries of (n, value).
pub fn cap_decay_fit(caps: &[(usize, f64)]) -> Result<DecayFit> {
    let pts: Vec<(usize, f64)> = caps.iter().filter(|(_, c)| *c > 0.0 && c.is_finite()).cloned().collect();
    if pts.len() < 3 {
        return Err(LabError::TooFewPoints { got: pts.len(), need: 3 });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = crate::fit::linear_fit(&xs, &ys);
    Ok(DecayFit { slope, intercept, r2, used: pts.iter().map(|p| p.0).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_ball_grid;

    #[test]
    fn empty_set_has_zero_capacity() {
        let g = make_ball_grid(1, 33).unwrap();
        let c = cap_bt(&Mask::empty(&g), &CapOptions::new(&g)).unwrap();
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn disc_capacity() {
        let g = make_ball_grid(1, 257).unwrap();
        let opts = CapOptions::new(&g);
        let exact = ball_capacity_exact(1, 0.3);
        let c = cap_bt_ball(&g, &[0.0, 0.0], 0.3, &opts).unwrap();
        assert!((c.value - exact).abs() < 0.01 * exact, "{c:?} vs {exact}");
        assert!(c.mass_outside < 0.1);
        let m = cap_bt(&ball_mask(&g, &[0.0, 0.0], 0.3), &opts).unwrap();
        assert!((m.value - exact).abs() < 0.05 * exact, "{m:?} vs {exact}");
    }

    #[test]
    fn capacity_is_monotone_in_the_set() {
        let g = make_ball_grid(1, 129).unwrap();
        let opts = CapOptions::new(&g);
        let small = cap_bt(&ball_mask(&g, &[0.1, 0.0], 0.2), &opts).unwrap();
        let big = cap_bt(&ball_mask(&g, &[0.1, 0.0], 0.3), &opts).unwrap();
        assert!(small.value <= big.value);
    }

    #[test]
    fn decay_fit_needs_three_points() {
        assert!(matches!(cap_decay_fit(&[(1, 0.5), (2, 0.0), (3, 0.1)]), Err(LabError::TooFewPoints { got: 2, .. })));
        let fit = cap_decay_fit(&[(1, 0.5), (2, 0.25), (3, 0.125), (4, 0.0)]).unwrap();
        assert!((fit.slope + 2f64.ln()).abs() < 1e-12);
        assert_eq!(fit.used, vec![1, 2, 3]);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }
}
