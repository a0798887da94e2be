//! Psh majorant of |phi|^alpha built from relative extremal functions of level sets:
//! u = sum_n 2^{n alpha} (u*_n + max(psi, -lambda^n) / lambda^n), with
//! K_n = {phi >= 2^n, psi >= -lambda^n} inside a compact K.

use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::{psh_residual, relative_extremal, DirectionSet, SolveOptions};
use crate::error::{invalid, LabError, Result};
use crate::grid::{integrate, GridDomain, Mask, ScalarField};
use crate::wstar::WStarPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MajorantParams {
    pub alpha: f64,
    pub lambda: f64,
    /// Number of levels N.
    pub levels: usize,
    /// Envelope tolerance; level n is solved to tol 2^{-n alpha}.
    pub tol: f64,
}

/// Midpoint of the admissible interval (2^alpha, 4).
pub fn default_lambda(alpha: f64) -> f64 {
    (2f64.powf(alpha) + 4.0) / 2.0
}

impl MajorantParams {
    pub fn new(alpha: f64, lambda: Option<f64>, levels: usize, tol: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&alpha) {
            return Err(invalid("alpha", "must lie in [1, 2)"));
        }
        let lambda = lambda.unwrap_or_else(|| default_lambda(alpha));
        if !(lambda > 2f64.powf(alpha) && lambda < 4.0) {
            return Err(invalid("lambda", format!("must satisfy 2^alpha = {} < lambda < 4", 2f64.powf(alpha))));
        }
        if levels == 0 {
            return Err(invalid("levels", "must be at least 1"));
        }
        if !(tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        Ok(MajorantParams { alpha, lambda, levels, tol })
    }
}

/// K_n = {x in K : phi(x) >= 2^n and psi(x) >= -lambda^n} for n = 1..=levels.
/// Nodes where phi or psi is undefined belong to no K_n.
pub fn level_sets(phi: &ScalarField, psi: &ScalarField, k_set: &Mask, lambda: f64, levels: usize) -> Result<Vec<Mask>> {
    if phi.grid() != psi.grid() || phi.grid() != k_set.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = k_set.grid();
    Ok((1..=levels)
        .map(|n| {
            let (t, floor) = (2f64.powi(n as i32), -lambda.powi(n as i32));
            let mut m = Mask::empty(g);
            for i in k_set.iter() {
                let (f, p) = (phi.get(i), psi.get(i));
                if f >= t && p >= floor {
                    m.set(i, true);
                }
            }
            m
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct TailSeries {
    /// sum_{n <= N} 2^{n alpha} max(psi, -lambda^n) / lambda^n.
    pub w: ScalarField,
    /// Bound on the sup norm of the dropped terms n > N: sup|psi| q^{N+1} / (1 - q) with
    /// q = 2^alpha / lambda; infinite when psi is unbounded.
    pub dropped_bound: f64,
    /// The same bound node by node, |psi(x)| q^{N+1} / (1 - q).
    pub dropped_per_node: ScalarField,
}

pub fn tail_series(psi: &ScalarField, alpha: f64, lambda: f64, levels: usize) -> Result<TailSeries> {
    let q = 2f64.powf(alpha) / lambda;
    if !(q < 1.0) {
        return Err(invalid("lambda", "must exceed 2^alpha for the series to converge"));
    }
    let coeffs: Vec<(f64, f64)> =
        (1..=levels as i32).map(|n| (2f64.powf(n as f64 * alpha) / lambda.powi(n), -lambda.powi(n))).collect();
    let w = psi.map(|p| {
        if p.is_nan() {
            return f64::NAN;
        }
        coeffs.iter().map(|&(c, floor)| c * p.max(floor)).sum()
    });
    let factor = q.powi(levels as i32 + 1) / (1.0 - q);
    let dropped_per_node = psi.map(|p| p.abs() * factor);
    let g = psi.grid();
    let sup = psi.finite_range(&g.closed_ball()).map_or(0.0, |(lo, hi)| lo.abs().max(hi.abs()));
    let unbounded = g.closed_ball().iter().any(|i| psi.get(i) == f64::NEG_INFINITY);
    let dropped_bound = if unbounded { f64::INFINITY } else { sup * factor };
    Ok(TailSeries { w, dropped_bound, dropped_per_node })
}

/// (max(phi, 0), -min(phi, 0)); undefined nodes stay undefined in both.
pub fn split_signed(phi: &ScalarField) -> (ScalarField, ScalarField) {
    (phi.map(|v| if v.is_nan() { v } else { v.max(0.0) }), phi.map(|v| if v.is_nan() { v } else { -(v.min(0.0)) }))
}

#[derive(Debug, Clone, Serialize)]
pub struct MajorantReport {
    /// Nodes of {phi >= 2} in K where the inequality is asserted.
    pub certified: usize,
    /// Certified nodes with 2^alpha u > -phi^alpha beyond the envelope tolerance.
    pub violations: usize,
    pub violation_fraction: f64,
    /// Nodes of {phi >= 2} in K that the truncated series cannot certify.
    pub exceptions: usize,
    /// No node was certified, so the check is vacuous.
    pub vacuous: bool,
    /// Nodes of K violating the weaker bound 2^alpha u <= -phi^alpha + 2^alpha.
    pub global_bound_violations: usize,
    pub psh_residual: f64,
    pub l1_on_k: f64,
    /// Largest finite value of u on the closed ball and its node.
    pub witness_value: f64,
    pub witness_node: usize,
    pub nonempty_levels: Vec<usize>,
    pub iterations: Vec<usize>,
    pub tail_dropped_bound: f64,
}

#[derive(Debug, Clone)]
pub struct MajorantBundle {
    pub params: MajorantParams,
    pub k_masks: Vec<Mask>,
    /// u*_n, or None where K_n is empty (the extremal function of the empty set is 0).
    pub u_fields: Vec<Option<ScalarField>>,
    pub w_tail: ScalarField,
    pub u: ScalarField,
    pub exception_mask: Mask,
    pub violation_mask: Mask,
    pub report: MajorantReport,
}

/// Builds the truncated majorant for a pair with phi >= 0 and checks
/// 2^alpha u <= -phi^alpha on {phi >= 2} in K. Nodes with phi >= 2^{N+1} or psi < -lambda^N
/// are exceptions: the truncated series does not reach them.
pub fn build_majorant(
    pair: &WStarPair,
    k_set: &Mask,
    params: &MajorantParams,
    dirs: &DirectionSet,
    opts: &SolveOptions,
) -> Result<MajorantBundle> {
    let (phi, psi) = (&pair.phi, &pair.psi);
    if phi.grid() != k_set.grid() {
        return Err(LabError::GridMismatch);
    }
    let g = k_set.grid();
    if k_set.iter().any(|i| phi.get(i) < 0.0) {
        return Err(invalid("phi", "must be >= 0 on K (split signed functions first)"));
    }
    let MajorantParams { alpha, lambda, levels, tol } = *params;
    let k_masks = level_sets(phi, psi, k_set, lambda, levels)?;
    let solved: Vec<Result<Option<(ScalarField, usize)>>> = k_masks
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            if m.is_empty() {
                return Ok(None);
            }
            let n = (j + 1) as f64;
            let o = opts.tol(tol * 2f64.powf(-n * alpha));
            let r = relative_extremal(m, dirs, &o)?;
            Ok(Some((r.u, r.iterations)))
        })
        .collect();
    let mut u_fields = Vec::with_capacity(levels);
    let mut iterations = Vec::new();
    let mut nonempty_levels = Vec::new();
    for (j, s) in solved.into_iter().enumerate() {
        match s? {
            Some((u, it)) => {
                nonempty_levels.push(j + 1);
                iterations.push(it);
                u_fields.push(Some(u));
            }
            None => u_fields.push(None),
        }
    }
    let tail = tail_series(psi, alpha, lambda, levels)?;
    let mut u = tail.w.clone();
    for (j, uf) in u_fields.iter().enumerate() {
        if let Some(f) = uf {
            let c = 2f64.powf((j + 1) as f64 * alpha);
            u = u.zip_map(f, |a, b| a + c * b)?;
        }
    }

    let two_a = 2f64.powf(alpha);
    let top = 2f64.powi(levels as i32 + 1);
    let floor = -lambda.powi(levels as i32);
    let slack = two_a * levels as f64 * tol;
    let mut exception_mask = Mask::empty(g);
    let mut violation_mask = Mask::empty(g);
    let (mut certified, mut global_bad) = (0, 0);
    for i in k_set.iter() {
        let (f, p, v) = (phi.get(i), psi.get(i), u.get(i));
        if f.is_finite() && v.is_finite() && two_a * v > -f.powf(alpha) + two_a + slack {
            global_bad += 1;
        }
        if !(f >= 2.0) {
            continue;
        }
        if !(f < top) || !(p >= floor) || v.is_nan() {
            exception_mask.set(i, true);
            continue;
        }
        certified += 1;
        if two_a * v > -f.powf(alpha) + slack {
            violation_mask.set(i, true);
        }
    }
    let violations = violation_mask.count();
    let residual = psh_residual(&u, dirs, &g.interior())?;
    let l1 = integrate(&u.map(f64::abs), k_set)?;
    let (mut witness_value, mut witness_node) = (f64::NEG_INFINITY, g.origin());
    for i in g.closed_ball().iter() {
        let v = u.get(i);
        if v.is_finite() && v > witness_value {
            witness_value = v;
            witness_node = i;
        }
    }
    let report = MajorantReport {
        certified,
        violations,
        violation_fraction: if certified == 0 { 0.0 } else { violations as f64 / certified as f64 },
        exceptions: exception_mask.count(),
        vacuous: certified == 0,
        global_bound_violations: global_bad,
        psh_residual: residual.max,
        l1_on_k: l1.value,
        witness_value,
        witness_node,
        nonempty_levels,
        iterations,
        tail_dropped_bound: tail.dropped_bound,
    };
    Ok(MajorantBundle {
        params: *params,
        k_masks,
        u_fields,
        w_tail: tail.w,
        u,
        exception_mask,
        violation_mask,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    /// Lebesgue measure of B_n for n = 1..=N.
    pub measures: Vec<f64>,
    pub n0: usize,
    /// sum_{n >= n0} Leb(B_n).
    pub tail_sum: f64,
    pub ball_measure: f64,
    /// tail_sum < ball_measure: some node lies outside every B_n with n >= n0.
    pub holds: bool,
}

/// B_n = {2^{n alpha} u*_n < (|z|^2 - 1) / n^2} on the closed ball; empty levels (u*_n = 0)
/// give empty B_n.
pub fn budget_sets(grid: &GridDomain, u_fields: &[Option<ScalarField>], alpha: f64, n0: usize) -> Result<(Vec<Mask>, BudgetSummary)> {
    let mut masks = Vec::with_capacity(u_fields.len());
    for (j, uf) in u_fields.iter().enumerate() {
        let n = (j + 1) as f64;
        let mut m = Mask::empty(grid);
        if let Some(u) = uf {
            if u.grid() != grid {
                return Err(LabError::GridMismatch);
            }
            let c = 2f64.powf(n * alpha);
            for i in grid.closed_ball().iter() {
                if c * u.get(i) < (grid.norm2(i) - 1.0) / (n * n) {
                    m.set(i, true);
                }
            }
        }
        masks.push(m);
    }
    let measures: Vec<f64> = masks.iter().map(Mask::measure).collect();
    let tail_sum: f64 = measures.iter().skip(n0.saturating_sub(1)).sum();
    let ball_measure = grid.ball_measure();
    Ok((masks, BudgetSummary { measures, n0, tail_sum, ball_measure, holds: tail_sum < ball_measure }))
}
