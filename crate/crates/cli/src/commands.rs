//! One function per subcommand. Each returns its checks, a JSON results block and a CSV table.

use serde::Serialize;
use serde_json::{json, Value};

use pplab_core::capacity::{ball_capacity_exact, cap_bt, cap_bt_ball, cap_decay_fit, CapOptions};
use pplab_core::energy::{growth_exponent, probe, ProbeKind, TestDictionary};
use pplab_core::envelope::{psh_residual, relative_extremal_ball};
use pplab_core::fit::loglog_slope;
use pplab_core::gallery::{self, GalleryEntry, Params};
use pplab_core::grid::{ball_mask, make_ball_grid, GridDomain, Mask, ScalarField};
use pplab_core::lebesgue::{density_ratio, lebesgue_ratio, mollifier_convergence, sample_nodes};
use pplab_core::majorant::{budget_sets, build_majorant, default_lambda, level_sets, MajorantParams};
use pplab_core::wstar::{exp_moment, normalize_pair, star_norm, WStarPair};
use pplab_core::{LabError, Result};

use crate::config::ExperimentConfig;
use crate::report::{num, Check, Table};

pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: Value,
    pub table: Table,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn grid_of(cfg: &ExperimentConfig) -> Result<GridDomain> {
    make_ball_grid(cfg.grid.k, cfg.resolution())
}

/// Gallery entry with the pair used by the experiments: scaled to unit witness norm when
/// `normalize` is set. Returns the entry, the pair and the scale factor applied.
pub fn gallery_pair(name: &str, grid: &GridDomain, params: &Params, normalize: bool) -> Result<(GalleryEntry, WStarPair, f64)> {
    let entry = gallery::instantiate(name, grid, params)?;
    if !normalize {
        let pair = entry.pair.clone();
        return Ok((entry, pair, 1.0));
    }
    let (pair, s) = normalize_pair(&entry.pair)?;
    Ok((entry, pair, 1.0 / s))
}

fn singular_points(name: &str, k: usize, params: &Params) -> Result<Vec<[f64; 4]>> {
    let prm = gallery::resolve_params(name, k, params)?;
    Ok(gallery::analytic(name, k, &prm)?.singular_points)
}

/// Extremal function of B(0, r) relative to the unit ball: max(log|z| / log(1/r), -1).
pub fn ball_extremal_exact(r: f64, norm: f64) -> f64 {
    (norm.ln() / (1.0 / r).ln()).max(-1.0)
}

/// Tolerances of the ball capacity and extremal function checks, by dimension.
pub fn capacity_tolerance(k: usize) -> f64 {
    if k == 1 {
        0.03
    } else {
        0.15
    }
}

pub fn extremal_tolerance(k: usize) -> f64 {
    if k == 1 {
        1e-2
    } else {
        3e-2
    }
}

pub fn capacity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let k = g.k();
    let r = cfg.method.set_radius;
    let mut table = Table::new(&["kind", "index", "radius", "nodes", "value", "reference", "iterations", "residual"]);
    let est = cap_bt_ball(&g, &[0.0; 4], r, &CapOptions::new(&g))?;
    let exact = ball_capacity_exact(k, r);
    let mut checks = vec![Check::rel("ball_capacity", est.value, exact, capacity_tolerance(k), "(1/log(1/r))^k")];
    table.push(vec![
        "ball".into(),
        "0".into(),
        num(r),
        ball_mask(&g, &[0.0; 4], r).count().to_string(),
        num(est.value),
        num(exact),
        est.iterations.to_string(),
        num(est.residual),
    ]);
    let mut results = json!({ "ball": to_json(&est), "exact": exact });
    if cfg.method.decay_levels > 0 {
        let decay = level_set_decay(cfg, &g, &mut checks, &mut table)?;
        results["decay"] = decay;
    }
    Ok(Outcome { checks, results, table })
}

/// Capacities of K_n = {|phi| >= 2^n, psi >= -lambda^n} in K and their exponential decay
/// rate, compared with log(lambda/4).
fn level_set_decay(cfg: &ExperimentConfig, g: &GridDomain, checks: &mut Vec<Check>, table: &mut Table) -> Result<Value> {
    let (_, pair, _) = gallery_pair(&cfg.gallery.entry, g, &cfg.params, cfg.gallery.normalize)?;
    let k_set = ball_mask(g, &[0.0; 4], cfg.method.k_radius);
    let lambda = cfg.method.lambda.unwrap_or_else(|| default_lambda(cfg.method.alpha));
    let abs_phi = pair.phi.map(f64::abs);
    let masks = level_sets(&abs_phi, &pair.psi, &k_set, lambda, cfg.method.decay_levels)?;
    let opts = CapOptions::new(g);
    let mut caps = Vec::new();
    let mut levels = Vec::new();
    for (j, m) in masks.iter().enumerate() {
        let est = cap_bt(m, &opts)?;
        caps.push((j + 1, est.value));
        table.push(vec![
            "level_set".into(),
            (j + 1).to_string(),
            num(cfg.method.k_radius),
            m.count().to_string(),
            num(est.value),
            String::new(),
            est.iterations.to_string(),
            num(est.residual),
        ]);
        levels.push(json!({ "n": j + 1, "nodes": m.count(), "capacity": est.value }));
    }
    let bound = (lambda / 4.0).ln() + 0.1;
    let fit = match cap_decay_fit(&caps) {
        Ok(f) => {
            checks.push(Check::le("decay_slope", f.slope, bound, "log(lambda/4) + 0.1"));
            checks.push(Check::ge("decay_r2", f.r2, 0.9, "linear fit of log Cap(K_n)"));
            to_json(&f)
        }
        Err(e) => {
            checks.push(Check::holds("decay_fit_available", false, format!("fit of log Cap(K_n): {e}")));
            json!({ "error": e.to_string() })
        }
    };
    Ok(json!({ "lambda": lambda, "slope_bound": bound, "levels": levels, "fit": fit }))
}

pub fn envelope(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let r = cfg.method.set_radius;
    let opts = CapOptions::new(&g);
    let res = relative_extremal_ball(&g, &[0.0; 4], r, &opts.dirs, &opts.solve)?;
    let (err, at) = sup_error_vs_ball(&res.u, r);
    let checks = vec![Check::le("sup_error", err, extremal_tolerance(g.k()), "max(log|z|/log(1/r), -1)")];
    let mut table = Table::new(&["x", "u", "exact", "error"]);
    for i in g.closed_ball().iter() {
        let l = g.lattice(i);
        if l[0] >= 0 && l[1..].iter().all(|&v| v == 0) {
            let x = g.coords(i)[0];
            let e = ball_extremal_exact(r, x);
            table.push(vec![num(x), num(res.u.get(i)), num(e), num((res.u.get(i) - e).abs())]);
        }
    }
    let results = json!({
        "iterations": res.iterations,
        "residual": res.residual,
        "sup_error": err,
        "sup_error_radius": at,
    });
    Ok(Outcome { checks, results, table })
}

/// Sup over the closed ball of |u - closed form| and the radius where it is attained.
pub fn sup_error_vs_ball(u: &ScalarField, r: f64) -> (f64, f64) {
    let g = u.grid();
    let (mut err, mut at) = (0.0f64, 0.0);
    for i in g.closed_ball().iter() {
        let rr = g.norm2(i).sqrt();
        let e = (u.get(i) - ball_extremal_exact(r, rr)).abs();
        if e > err {
            err = e;
            at = rr;
        }
    }
    (err, at)
}

#[derive(Debug, Clone, Serialize)]
pub struct MajorantRun {
    pub resolution: usize,
    pub params: MajorantParams,
    pub signed: bool,
    pub report: pplab_core::majorant::MajorantReport,
    /// psh residual of u on interior nodes at least 5h from the singular points.
    pub psh_residual_off_singular: f64,
    pub budget: pplab_core::majorant::BudgetSummary,
    pub violation_capacity: f64,
    pub level_nodes: Vec<usize>,
    pub budget_measures: Vec<f64>,
}

/// Builds the majorant of |phi| for the configured pair. Signed phi is replaced by |phi|,
/// which has the same gradient form.
pub fn majorant_run(cfg: &ExperimentConfig, g: &GridDomain) -> Result<MajorantRun> {
    let m = &cfg.method;
    let (entry, pair, _) = gallery_pair(&cfg.gallery.entry, g, &cfg.params, cfg.gallery.normalize)?;
    let k_set = ball_mask(g, &[0.0; 4], m.k_radius);
    let signed = k_set.iter().any(|i| pair.phi.get(i) < 0.0);
    let pair = if signed { WStarPair::new(pair.phi.map(f64::abs), pair.psi.clone(), pair.provenance)? } else { pair };
    let params = MajorantParams::new(m.alpha, m.lambda, m.levels, m.tol)?;
    let CapOptions { solve, dirs } = CapOptions::new(g);
    let b = build_majorant(&pair, &k_set, &params, &dirs, &solve)?;
    let (bmasks, budget) = budget_sets(g, &b.u_fields, m.alpha, m.budget_from)?;
    let sing = singular_points(&entry.name, g.k(), &cfg.params)?;
    let reach = 5.0 * g.h();
    let off = Mask::from_fn(g, |g, i| {
        let c = g.coords(i);
        g.interior().contains(i) && sing.iter().all(|s| (0..4).map(|a| (c[a] - s[a]).powi(2)).sum::<f64>() >= reach * reach)
    });
    let off_res = psh_residual(&b.u, &dirs, &off)?;
    let violation_capacity = cap_bt(&b.violation_mask, &CapOptions::new(g))?.value;
    Ok(MajorantRun {
        resolution: g.n(),
        params,
        signed,
        psh_residual_off_singular: off_res.max,
        violation_capacity,
        level_nodes: b.k_masks.iter().map(Mask::count).collect(),
        budget_measures: bmasks.iter().map(Mask::measure).collect(),
        budget,
        report: b.report,
    })
}

pub fn majorant_checks(run: &MajorantRun) -> Vec<Check> {
    let tol = run.params.tol;
    let vac = if run.report.vacuous { " (vacuous: no certified nodes)" } else { "" };
    vec![
        Check::le("psh_residual", run.report.psh_residual, 8.0 * tol, "8 tol"),
        Check::le("violation_fraction", run.report.violation_fraction, 1e-3, format!("certified region{vac}")),
        Check::holds("l1_finite", run.report.l1_on_k.is_finite(), "L1 norm of u on K"),
        Check::holds("budget", run.budget.holds, format!("sum_{{n>={}}} Leb(B_n) < Leb(ball)", run.budget.n0)),
    ]
}

pub fn majorant(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let run = majorant_run(cfg, &g)?;
    let checks = majorant_checks(&run);
    let mut table = Table::new(&["level", "nodes", "iterations", "budget_measure"]);
    let mut it = run.report.iterations.iter();
    for (j, nodes) in run.level_nodes.iter().enumerate() {
        let iters = if run.report.nonempty_levels.contains(&(j + 1)) { it.next().copied().unwrap_or(0) } else { 0 };
        table.push(vec![(j + 1).to_string(), nodes.to_string(), iters.to_string(), num(run.budget_measures[j])]);
    }
    Ok(Outcome { checks, results: to_json(&run), table })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSeries {
    pub dictionary: String,
    pub kind: ProbeKind,
    pub p: usize,
    pub values: Vec<f64>,
    pub argmax: Vec<Vec<String>>,
    /// Growth exponent in n; -inf when every value is 0.
    pub exponent: f64,
    pub r2: f64,
}

/// probe_I and probe_J over n = 1..=n_max for every admissible p and each dictionary.
pub fn energy_series(
    pair: &WStarPair,
    k_set: &Mask,
    dicts: &[(String, TestDictionary)],
    m: u32,
    n_max: usize,
) -> Result<Vec<ProbeSeries>> {
    let k = pair.grid().k();
    let ns: Vec<usize> = (1..=n_max).collect();
    let mut out = Vec::new();
    for (name, d) in dicts {
        let kinds: Vec<(ProbeKind, usize)> =
            (0..k).map(|p| (ProbeKind::J, p)).chain((0..=k).map(|p| (ProbeKind::I, p))).collect();
        for (kind, p) in kinds {
            let mut values = Vec::new();
            let mut argmax = Vec::new();
            for &n in &ns {
                let v = probe(kind, pair, n, m, p, k_set, d)?;
                values.push(v.value);
                argmax.push(v.argmax);
            }
            let (exponent, r2) = if values.iter().all(|&v| v == 0.0) {
                (f64::NEG_INFINITY, 1.0)
            } else {
                let f = growth_exponent(&ns, &values)?;
                (f.exponent, f.r2)
            };
            out.push(ProbeSeries { dictionary: name.clone(), kind, p, values, argmax, exponent, r2 });
        }
    }
    Ok(out)
}

/// Growth exponents at most m + 0.3, and within 0.2 of each other across dictionaries.
pub fn energy_checks(series: &[ProbeSeries], m: u32) -> Vec<Check> {
    let mut checks = Vec::new();
    let bound = m as f64 + 0.3;
    for s in series {
        let name = format!("{}_{:?}_p{}_exponent", s.dictionary, s.kind, s.p);
        checks.push(Check::le(name, s.exponent, bound, "growth exponent of the probe in n, at most m + 0.3"));
    }
    let dicts: Vec<&String> = {
        let mut d: Vec<&String> = series.iter().map(|s| &s.dictionary).collect();
        d.dedup();
        d
    };
    if dicts.len() == 2 {
        for a in series.iter().filter(|s| &s.dictionary == dicts[0]) {
            if let Some(b) = series.iter().find(|s| &s.dictionary == dicts[1] && s.kind == a.kind && s.p == a.p) {
                let diff = if a.exponent == b.exponent { 0.0 } else { (a.exponent - b.exponent).abs() };
                checks.push(Check::le(format!("{:?}_p{}_dictionary_spread", a.kind, a.p), diff, 0.2, "exponent stable across dictionaries"));
            }
        }
    }
    checks
}

pub fn dictionaries(cfg: &ExperimentConfig, g: &GridDomain) -> Result<Vec<(String, TestDictionary)>> {
    let mut out = Vec::new();
    if cfg.method.dictionary != "random" {
        out.push(("standard".to_string(), TestDictionary::standard(g)?));
    }
    if cfg.method.dictionary != "standard" {
        out.push((format!("random{}", cfg.run.seed), TestDictionary::random(g, cfg.run.seed, cfg.method.shifts)?));
    }
    Ok(out)
}

pub fn energy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let (_, pair, _) = gallery_pair(&cfg.gallery.entry, &g, &cfg.params, cfg.gallery.normalize)?;
    let k_set = ball_mask(&g, &[0.0; 4], cfg.method.k_radius);
    let dicts = dictionaries(cfg, &g)?;
    let series = energy_series(&pair, &k_set, &dicts, cfg.method.m, cfg.method.n_max)?;
    let checks = energy_checks(&series, cfg.method.m);
    let mut table = Table::new(&["dictionary", "kind", "p", "n", "value", "argmax"]);
    for s in &series {
        for (j, v) in s.values.iter().enumerate() {
            table.push(vec![
                s.dictionary.clone(),
                format!("{:?}", s.kind),
                s.p.to_string(),
                (j + 1).to_string(),
                num(*v),
                s.argmax[j].join("+"),
            ]);
        }
    }
    let results = json!({ "lower_bounds": true, "m": cfg.method.m, "series": to_json(&series) });
    Ok(Outcome { checks, results, table })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointDecay {
    pub entry: String,
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub eps: Vec<f64>,
    pub a: Vec<f64>,
    /// Log-log slope of A(x, eps) against eps; +inf when A vanishes identically.
    pub slope: f64,
    pub cross: Vec<f64>,
}

/// A(x, eps) and the cross-kernel deviation at sampled points away from singularities.
pub fn lebesgue_points(
    entry: &str,
    g: &GridDomain,
    params: &Params,
    count: usize,
    seed: u64,
    eps: &[f64],
) -> Result<Vec<PointDecay>> {
    let e = gallery::instantiate(entry, g, params)?;
    let sing = singular_points(entry, g.k(), params)?;
    let pts = sample_nodes(g, count, seed, 0.7, &sing, 0.2)?;
    let conv = mollifier_convergence(&e.pair.phi, &pts, eps)?;
    pts.iter()
        .map(|&p| {
            let a = lebesgue_ratio(&e.pair.phi, p, eps)?;
            let slope = if a.iter().all(|&v| v == 0.0) {
                f64::INFINITY
            } else if a.iter().any(|&v| v <= 0.0) {
                f64::NAN
            } else {
                loglog_slope(eps, &a)
            };
            let cross = eps
                .iter()
                .map(|&ep| conv.iter().find(|r| r.point == p && r.eps == ep).map_or(f64::NAN, |r| r.cross))
                .collect();
            let c = g.coords(p);
            Ok(PointDecay { entry: entry.into(), node: p, x: c[0], y: c[1], eps: eps.to_vec(), a, slope, cross })
        })
        .collect()
}

/// Cross-kernel deviations stay below 4 A(x, eps) (twice the density bound of each kernel)
/// and shrink with eps.
pub fn cross_kernel_ok(p: &PointDecay) -> bool {
    let bounded = p.cross.iter().zip(&p.a).all(|(c, a)| *c <= 4.0 * a + 1e-12);
    let shrinking = p.cross.first().zip(p.cross.last()).is_some_and(|(s, l)| s <= &(l + 1e-12));
    bounded && shrinking
}

/// Indicator of the half-plane {x cos t + y sin t > 0}; the angle keeps lattice nodes off the
/// boundary line except the origin, where A(0, eps) is the fraction of the other side.
/// The origin itself biases that fraction by 1/(2 #nodes), so only radii of at least
/// `EDGE_MIN_RADIUS_H` grid steps are returned.
pub fn half_space_edge(g: &GridDomain, eps: &[f64]) -> Result<Vec<(f64, f64)>> {
    let t: f64 = 0.3;
    let f = ScalarField::from_fn(g, |x| if x[0] * t.cos() + x[1] * t.sin() > 0.0 { 1.0 } else { 0.0 });
    let eps: Vec<f64> = eps.iter().copied().filter(|&e| e >= EDGE_MIN_RADIUS_H * g.h()).collect();
    if eps.is_empty() {
        return Err(LabError::TooFewPoints { got: 0, need: 1 });
    }
    Ok(eps.iter().copied().zip(lebesgue_ratio(&f, g.origin(), &eps)?).collect())
}

pub const EDGE_MIN_RADIUS_H: f64 = 6.0;

/// Domain radius of the divergence test: small enough that the leading term dominates.
pub const DIVERGENCE_RADIUS: f64 = 0.01;

/// A(0, eps) for phi = (-log(rho^2 |z|^2))^(1/2 - delta) with phi(0) set to 0, against
/// (-2 log(rho eps))^(1/2 - delta): the mean of phi over B(0, eps).
pub fn loglog_divergence(g: &GridDomain, delta: f64, rho: f64, eps: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut prm = Params::new();
    prm.insert("delta".into(), delta);
    prm.insert("radius".into(), rho);
    let prm = gallery::resolve_params("loglog", g.k(), &prm)?;
    let an = gallery::analytic("loglog", g.k(), &prm)?;
    let mut f = ScalarField::from_fn(g, |x| (an.phi)(x));
    f.set(g.origin(), 0.0);
    let a = lebesgue_ratio(&f, g.origin(), eps)?;
    Ok(a.into_iter().zip(eps).map(|(v, &e)| (v, (-2.0 * (rho * e).ln()).powf(0.5 - delta))).collect())
}

pub fn lebesgue(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let m = &cfg.method;
    let entry = cfg.gallery.entry.as_str();
    let mut checks = Vec::new();
    let mut table = Table::new(&["test", "entry", "node", "x", "y", "eps", "value", "reference"]);
    let pts = lebesgue_points(entry, &g, &cfg.params, m.points, cfg.run.seed, &m.eps)?;
    let e = gallery::instantiate(entry, &g, &cfg.params)?;
    let mut densities = Vec::new();
    for p in &pts {
        for (j, ep) in p.eps.iter().enumerate() {
            let row = |test: &str, v: f64, r: f64| {
                vec![test.into(), entry.into(), p.node.to_string(), num(p.x), num(p.y), num(*ep), num(v), num(r)]
            };
            table.push(row("lebesgue_ratio", p.a[j], 0.0));
            table.push(row("cross_kernel", p.cross[j], 4.0 * p.a[j]));
        }
        let d = density_ratio(&e.pair.phi, p.node, m.delta, &m.radii)?;
        for r in &d {
            table.push(vec!["density_ratio".into(), entry.into(), p.node.to_string(), num(p.x), num(p.y), num(r.r), num(r.ratio), num(0.0)]);
        }
        densities.push(d);
    }
    let min_slope = pts.iter().map(|p| p.slope).fold(f64::INFINITY, f64::min);
    checks.push(Check::ge("min_decay_slope", min_slope, 0.9, "A(x, eps) = O(eps) at smooth points"));
    checks.push(Check::holds("cross_kernel", pts.iter().all(cross_kernel_ok), "cross deviation <= 4 A(x, eps), shrinking"));
    let shrink = densities.iter().all(|d| d.first().map(|a| a.ratio) <= d.last().map(|a| a.ratio));
    checks.push(Check::holds("density_ratio_shrinks", shrink, "density of {|u - u(x)| >= delta} decreases with r"));
    let edge = half_space_edge(&g, &m.eps)?;
    for (ep, v) in &edge {
        table.push(vec!["half_space".into(), String::new(), g.origin().to_string(), num(0.0), num(0.0), num(*ep), num(*v), num(0.5)]);
        checks.push(Check::rel(format!("half_space_eps_{ep}"), *v, 0.5, 0.02, "half of the ball lies across the edge"));
    }
    let mut divergence = Value::Null;
    if entry == "loglog" {
        let prm = gallery::resolve_params("loglog", g.k(), &cfg.params)?;
        let rows = loglog_divergence(&g, prm["delta"], DIVERGENCE_RADIUS, &m.eps)?;
        for ((v, r), ep) in rows.iter().zip(&m.eps) {
            table.push(vec!["divergence".into(), entry.into(), g.origin().to_string(), num(0.0), num(0.0), num(*ep), num(*v), num(*r)]);
            checks.push(Check::rel(format!("divergence_eps_{ep}"), *v, *r, 0.05, "(-2 log(rho eps))^(1/2 - delta)"));
        }
        divergence = to_json(&rows);
    }
    let results = json!({ "points": to_json(&pts), "half_space": edge, "divergence": divergence });
    Ok(Outcome { checks, results, table })
}

pub fn wstar(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = grid_of(cfg)?;
    let e = gallery::instantiate(&cfg.gallery.entry, &g, &cfg.params)?;
    let sn = star_norm(&e.pair)?;
    let (normed, s) = normalize_pair(&e.pair)?;
    let k_set = g.closed_ball();
    let mom = exp_moment(&normed.phi, &k_set, cfg.method.c, cfg.method.alpha)?;
    let mut checks = Vec::new();
    let mut table = Table::new(&["quantity", "value", "reference", "tolerance", "pass"]);
    for f in &e.facts {
        let measured = match f.name.as_str() {
            "l1" => sn.l1,
            "mass" => sn.mass,
            "star_norm" => sn.value,
            _ => continue,
        };
        let c = if f.tolerance == 0.0 {
            Check::le(f.name.clone(), (measured - f.value).abs(), 1e-12, f.oracle.clone())
        } else {
            Check::rel(f.name.clone(), measured, f.value, f.tolerance, f.oracle.clone())
        };
        table.push(vec![f.name.clone(), num(measured), num(f.value), num(f.tolerance), c.pass.to_string()]);
        checks.push(c);
    }
    checks.push(Check::holds("exp_moment_finite", mom.value.is_finite(), "integral of exp(c |phi|^alpha) over the ball"));
    table.push(vec!["exp_moment".into(), num(mom.value), String::new(), String::new(), mom.value.is_finite().to_string()]);
    table.push(vec!["star_norm".into(), num(sn.value), String::new(), String::new(), "true".into()]);
    let results = json!({
        "entry": e.name,
        "params": e.params,
        "provenance": e.pair.provenance,
        "star_norm": to_json(&sn),
        "normalizing_factor": 1.0 / s,
        "exp_moment": to_json(&mom),
        "facts": to_json(&e.facts),
    });
    Ok(Outcome { checks, results, table })
}

pub fn gallery_list() -> Outcome {
    let specs = gallery::list();
    let mut table = Table::new(&["entry", "dims", "param", "default", "default_k2", "doc"]);
    for s in &specs {
        let dims = s.dims.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        for p in &s.params {
            table.push(vec![
                s.name.into(),
                dims.clone(),
                p.name.into(),
                num(p.default),
                p.default_k2.map_or(String::new(), num),
                p.doc.into(),
            ]);
        }
        if s.params.is_empty() {
            table.push(vec![s.name.into(), dims, String::new(), String::new(), String::new(), String::new()]);
        }
    }
    Outcome { checks: Vec::new(), results: to_json(&specs), table }
}

pub fn gallery_show(cfg: &ExperimentConfig) -> Result<Outcome> {
    let name = cfg.gallery.entry.as_str();
    let k = cfg.grid.k;
    let spec = gallery::list().into_iter().find(|s| s.name == name).ok_or_else(|| LabError::UnknownEntry(name.into()))?;
    let params = gallery::resolve_params(name, k, &cfg.params)?;
    let facts = gallery::facts(name, k, &cfg.params)?;
    let mut table = Table::new(&["fact", "value", "tolerance", "oracle"]);
    for f in &facts {
        table.push(vec![f.name.clone(), num(f.value), num(f.tolerance), f.oracle.clone()]);
    }
    let results = json!({ "entry": to_json(&spec), "k": k, "params": params, "facts": to_json(&facts) });
    Ok(Outcome { checks: Vec::new(), results, table })
}
