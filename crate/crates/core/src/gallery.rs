//! Built-in analytic pairs (phi, psi) with closed-form facts.
//!
//! Dominators of the singular entries are the equality case of the domination inequality
//! scaled by a factor 1 + margin, so that the discrete check is not decided by rounding.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{GridDomain, ScalarField};
use crate::quadrature;
use crate::wstar::{poisson_dominator, Provenance, WStarPair};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    /// Default for k=2 when it differs.
    pub default_k2: Option<f64>,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntrySpec {
    pub name: &'static str,
    pub dims: Vec<usize>,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
    /// Exponents alpha for which the majorant construction applies.
    pub alpha_range: (f64, f64),
}

fn p(name: &'static str, default: f64, doc: &'static str) -> ParamSpec {
    ParamSpec { name, default, default_k2: None, doc }
}

/// Margin of the singular dominators: the coarser k=2 grids need more room.
fn margin() -> ParamSpec {
    ParamSpec { default_k2: Some(0.03), ..p("margin", 0.005, "dominator scale factor minus 1") }
}

/// Every registered entry.
pub fn list() -> Vec<EntrySpec> {
    let alpha_range = (1.0, 2.0);
    vec![
        EntrySpec {
            name: "constant",
            dims: vec![1, 2],
            description: "phi = c, psi = 0",
            params: vec![p("c", 1.0, "value of phi")],
            alpha_range,
        },
        EntrySpec {
            name: "linear",
            dims: vec![1, 2],
            description: "phi = Re z1; psi solves Delta psi = |grad phi|^2 (k=1, poisson=1) or is (|z|^2-1)/4",
            params: vec![p("poisson", 1.0, "1: solve for psi on the grid (k=1 only), 0: closed form")],
            alpha_range,
        },
        EntrySpec {
            name: "loglog",
            dims: vec![1, 2],
            description: "phi = (-log|z|^2)^(1/2-delta) on B(0,radius), pulled back to the unit ball by z = radius w",
            params: vec![
                p("delta", 0.1, "exponent parameter in (0, 1/2)"),
                p("radius", 0.5, "radius of the original domain, in (0, 1)"),
                margin(),
            ],
            alpha_range,
        },
        EntrySpec {
            name: "log_max",
            dims: vec![1, 2],
            description: "phi = max(log|z|, c)",
            params: vec![p("c", -3.0, "truncation level, negative"), margin()],
            alpha_range,
        },
        EntrySpec {
            name: "log_sum",
            dims: vec![1],
            description: "phi = c1 max(log|z-a1|, b) + c2 max(log|z-a2|, b), a1 = 0.3, a2 = -0.25+0.2i; psi = 2 sum cj^2 psi_j",
            params: vec![
                p("c1", 1.0, "first coefficient"),
                p("c2", -0.5, "second coefficient"),
                p("b", -3.0, "truncation level, negative"),
                margin(),
            ],
            alpha_range,
        },
        EntrySpec {
            name: "log_single",
            dims: vec![1, 2],
            description: "phi = 0, psi = log|z|",
            params: vec![],
            alpha_range,
        },
    ]
}

/// A known value attached to an instantiated entry.
#[derive(Debug, Clone, Serialize)]
pub struct Fact {
    pub name: String,
    pub value: f64,
    /// Relative tolerance within which grid computations are expected to reproduce it.
    pub tolerance: f64,
    pub oracle: String,
}

fn fact(name: &str, value: f64, tolerance: f64, oracle: &str) -> Fact {
    Fact { name: name.into(), value, tolerance, oracle: oracle.into() }
}

type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed-form phi and psi of an entry, as functions of real coordinates.
#[derive(Clone)]
pub struct Analytic {
    pub phi: Eval,
    pub psi: Eval,
    /// Nodes closer than this multiple of h to a singular point are left undefined.
    pub singular_points: Vec<[f64; 4]>,
    pub singular_radius_h: f64,
}

#[derive(Debug, Clone)]
pub struct GalleryEntry {
    pub name: String,
    pub k: usize,
    pub params: Params,
    pub pair: WStarPair,
    pub facts: Vec<Fact>,
    /// Nodes marked undefined around singular points.
    pub singular_nodes: usize,
}

/// Full parameter set of an entry for dimension k: defaults overridden by `given`.
pub fn resolve_params(name: &str, k: usize, given: &Params) -> Result<Params> {
    let spec = list().into_iter().find(|s| s.name == name).ok_or_else(|| LabError::UnknownEntry(name.into()))?;
    resolve(&spec, k, given)
}

/// Closed-form facts of an entry.
pub fn facts(name: &str, k: usize, given: &Params) -> Result<Vec<Fact>> {
    let prm = resolve_params(name, k, given)?;
    let an = analytic(name, k, &prm)?;
    Ok(facts_for(name, k, &prm, &an))
}

fn resolve(spec: &EntrySpec, k: usize, given: &Params) -> Result<Params> {
    if !spec.dims.contains(&k) {
        return Err(invalid("k", format!("entry {} is not available for k={k}", spec.name)));
    }
    let mut out = Params::new();
    for ps in &spec.params {
        let default = if k == 2 { ps.default_k2.unwrap_or(ps.default) } else { ps.default };
        out.insert(ps.name.to_string(), given.get(ps.name).copied().unwrap_or(default));
    }
    if let Some(extra) = given.keys().find(|key| !out.contains_key(*key)) {
        return Err(invalid("params", format!("unknown parameter {extra} for entry {}", spec.name)));
    }
    if let Some((key, _)) = out.iter().find(|(_, v)| !v.is_finite()) {
        return Err(invalid("params", format!("{key} must be finite")));
    }
    Ok(out)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Profile of the truncated-log dominator: with u = -log r and c' = -c,
/// -(c' u - u^2/2) for r >= e^c and -c'^2/2 below. Equality case of domination for
/// max(log r, c), increasing in r and 0 at r = 1.
fn log_max_profile(c: f64, r: f64) -> f64 {
    let cp = -c;
    let u = -r.ln();
    if u >= cp {
        -0.5 * cp * cp
    } else {
        -(cp * u - 0.5 * u * u)
    }
}

const LOG_SUM_POINTS: [[f64; 2]; 2] = [[0.3, 0.0], [-0.25, 0.2]];

/// Closed forms of an entry with resolved parameters.
pub fn analytic(name: &str, k: usize, params: &Params) -> Result<Analytic> {
    let spec = list().into_iter().find(|s| s.name == name).ok_or_else(|| LabError::UnknownEntry(name.into()))?;
    let prm = resolve(&spec, k, params)?;
    let get = |key: &str| prm[key];
    let none = Vec::new();
    let out = match name {
        "constant" => {
            let c = get("c");
            Analytic { phi: Arc::new(move |_| c), psi: Arc::new(|_| 0.0), singular_points: none, singular_radius_h: 0.0 }
        }
        "linear" => Analytic {
            phi: Arc::new(|x| x[0]),
            psi: Arc::new(|x| (norm2(x) - 1.0) / 4.0),
            singular_points: none,
            singular_radius_h: 0.0,
        },
        "loglog" => {
            let (delta, rho, eta) = (get("delta"), get("radius"), get("margin"));
            if !(delta > 0.0 && delta < 0.5) {
                return Err(invalid("delta", "must lie in (0, 1/2)"));
            }
            if !(rho > 0.0 && rho < 1.0) {
                return Err(invalid("radius", "must lie in (0, 1)"));
            }
            if eta < 0.0 {
                return Err(invalid("margin", "must be >= 0"));
            }
            let a = 0.5 - delta;
            let e = 1.0 - 2.0 * delta;
            let t1 = -(rho * rho).ln();
            let scale = (1.0 + eta) * a * a / (2.0 * delta * e);
            Analytic {
                phi: Arc::new(move |x| (-(rho * rho * norm2(x)).ln()).powf(a)),
                psi: Arc::new(move |x| {
                    let t = -(rho * rho * norm2(x)).ln();
                    -scale * (t.powf(e) - t1.powf(e))
                }),
                singular_points: vec![[0.0; 4]],
                singular_radius_h: 2.0,
            }
        }
        "log_max" => {
            let (c, eta) = (get("c"), get("margin"));
            if c >= 0.0 {
                return Err(invalid("c", "must be negative"));
            }
            if eta < 0.0 {
                return Err(invalid("margin", "must be >= 0"));
            }
            Analytic {
                phi: Arc::new(move |x| (0.5 * norm2(x).ln()).max(c)),
                psi: Arc::new(move |x| (1.0 + eta) * log_max_profile(c, norm2(x).sqrt())),
                singular_points: none,
                singular_radius_h: 0.0,
            }
        }
        "log_sum" => {
            let (c1, c2, b, eta) = (get("c1"), get("c2"), get("b"), get("margin"));
            if b >= 0.0 {
                return Err(invalid("b", "must be negative"));
            }
            if eta < 0.0 {
                return Err(invalid("margin", "must be >= 0"));
            }
            let cs = [c1, c2];
            let dist = |x: &[f64], a: &[f64; 2]| ((x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2)).sqrt();
            Analytic {
                phi: Arc::new(move |x| {
                    cs.iter().zip(&LOG_SUM_POINTS).map(|(c, a)| c * dist(x, a).ln().max(b)).sum()
                }),
                psi: Arc::new(move |x| {
                    let m = cs.len() as f64;
                    let s: f64 = cs
                        .iter()
                        .zip(&LOG_SUM_POINTS)
                        .map(|(c, a)| {
                            let far = 1.0 + (a[0] * a[0] + a[1] * a[1]).sqrt();
                            c * c * (log_max_profile(b, dist(x, a)) - log_max_profile(b, far))
                        })
                        .sum();
                    (1.0 + eta) * m * s
                }),
                singular_points: none,
                singular_radius_h: 0.0,
            }
        }
        "log_single" => Analytic {
            phi: Arc::new(|_| 0.0),
            psi: Arc::new(|x| 0.5 * norm2(x).ln()),
            singular_points: none,
            singular_radius_h: 0.0,
        },
        _ => return Err(LabError::UnknownEntry(name.into())),
    };
    Ok(out)
}

/// Integral of a radial function against omega^k over the unit ball.
fn radial_omega_integral(k: usize, f: impl Fn(f64) -> f64) -> f64 {
    if k == 1 {
        2.0 * quadrature::integrate(|r| f(r) * r, 0.0, 1.0, 1e-13)
    } else {
        4.0 * quadrature::integrate(|r| f(r) * r.powi(3), 0.0, 1.0, 1e-13)
    }
}

/// Mass of d phi ^ d^c phi ^ omega^{k-1} over the unit ball for phi = (-log(rho^2 |w|^2))^(1/2 - delta):
/// (1/2 - delta)^2 (-log rho^2)^(-2 delta) / delta in both dimensions.
pub fn loglog_gradient_mass(delta: f64, rho: f64) -> f64 {
    let a = 0.5 - delta;
    a * a * (-(rho * rho).ln()).powf(-2.0 * delta) / delta
}

/// The same mass by numerical quadrature of the radial density in t = -log(rho^2 r^2).
pub fn loglog_gradient_mass_quadrature(delta: f64, rho: f64) -> f64 {
    // density of d phi ^ d^c phi: |grad phi|^2 / (2 pi) with |grad phi|^2 = 4 a^2 t^{-1-2 delta} / r^2,
    // and r dr = -r^2 dt / 2, so the mass is 2 a^2 int_{t1}^inf t^{-1-2 delta} dt.
    let a = 0.5 - delta;
    let t1 = -(rho * rho).ln();
    2.0 * a * a * quadrature::integrate_to_infinity(|t| t.powf(-1.0 - 2.0 * delta), t1, 1e-13)
}

fn facts_for(name: &str, k: usize, prm: &Params, an: &Analytic) -> Vec<Fact> {
    let phi = an.phi.clone();
    let radial_l1 = move |kk: usize| {
        radial_omega_integral(kk, |r| {
            let mut x = [0.0; 4];
            x[0] = r;
            phi(&x[..2 * kk]).abs()
        })
    };
    match name {
        "constant" => {
            let c = prm["c"].abs();
            vec![fact("l1", c, 0.02, "int omega^k = 1"), fact("mass", 0.0, 0.0, "psi = 0"), fact("star_norm", c, 0.02, "closed form")]
        }
        "linear" => {
            let l1 = if k == 1 { 4.0 / (3.0 * PI) } else { 16.0 / (15.0 * PI) };
            vec![
                fact("l1", l1, 0.02, "closed form int |Re z1| omega^k"),
                fact("mass", 0.5, 0.02, "Delta psi = 2k/2 on the ball"),
                fact("star_norm", l1 + 0.5f64.sqrt(), 0.02, "closed form"),
            ]
        }
        "loglog" => {
            let (delta, rho, eta) = (prm["delta"], prm["radius"], prm["margin"]);
            let gm = loglog_gradient_mass(delta, rho);
            vec![
                fact("gradient_mass", gm, 0.01, "closed-form radial integral in t = -log(rho^2 r^2)"),
                fact("mass", (1.0 + eta) * gm, 0.01, "closed form times (1 + margin)"),
                fact("l1", radial_l1(k), 0.02, "radial quadrature"),
                fact("pullback_factor", rho.powi(2 * (k as i32 - 1)), 0.0, "mass on B(0,radius) = factor * mass on the unit ball"),
            ]
        }
        "log_max" => {
            let (c, eta) = (prm["c"], prm["margin"]);
            vec![
                fact("gradient_mass", -c, 0.02, "closed form"),
                fact("mass", -(1.0 + eta) * c, 0.02, "closed form times (1 + margin)"),
                fact("l1", radial_l1(k), 0.02, "radial quadrature"),
                fact("ddc_phi_mass", 1.0, 0.03, "dd^c log|z| is the unit point mass"),
            ]
        }
        "log_single" => vec![fact("mass", 1.0, 0.02, "dd^c log|z| is the unit point mass"), fact("l1", 0.0, 0.0, "phi = 0")],
        _ => Vec::new(),
    }
}

/// Samples an entry on a grid. Nodes near singular points are undefined in both fields.
pub fn instantiate(name: &str, grid: &GridDomain, params: &Params) -> Result<GalleryEntry> {
    let k = grid.k();
    let spec = list().into_iter().find(|s| s.name == name).ok_or_else(|| LabError::UnknownEntry(name.into()))?;
    let prm = resolve(&spec, k, params)?;
    let an = analytic(name, k, &prm)?;
    let mut phi = ScalarField::from_fn(grid, |x| (an.phi)(x));
    let mut psi = ScalarField::from_fn(grid, |x| (an.psi)(x));
    let mut singular_nodes = 0;
    if an.singular_radius_h > 0.0 {
        let r = an.singular_radius_h * grid.h();
        for i in 0..grid.len() {
            let x = grid.coords(i);
            if an.singular_points.iter().any(|s| norm2(&[x[0] - s[0], x[1] - s[1], x[2] - s[2], x[3] - s[3]]) < r * r) {
                phi.set(i, f64::NAN);
                psi.set(i, f64::NAN);
                singular_nodes += 1;
            }
        }
    }
    let mut provenance = Provenance::Analytic;
    if name == "linear" && prm["poisson"] != 0.0 {
        if k != 1 {
            return Err(invalid("poisson", "grid-solved dominators exist only for k=1"));
        }
        psi = poisson_dominator(&phi, 1e-6)?.psi;
        provenance = Provenance::PoissonSolved;
    }
    let facts = facts_for(name, k, &prm, &an);
    Ok(GalleryEntry { name: name.into(), k, params: prm, pair: WStarPair::new(phi, psi, provenance)?, facts, singular_nodes })
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessRow {
    pub r: f64,
    /// Circle mean of -phi^alpha at radius r.
    pub mean: f64,
    /// |mean| / log(1/r^2).
    pub ratio: f64,
    /// |mean| / log(1/r) (twice `ratio`).
    pub ratio_per_log_r: f64,
    /// (2 log(1/r))^(beta - 1), the closed form of `ratio`.
    pub closed_form: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessTable {
    pub beta: f64,
    /// beta > 1 and the ratio increases strictly as r decreases: the circle means fall
    /// below every A log(1/r) + B, so no subharmonic u satisfies u <= -phi^alpha near 0.
    pub conclusive: bool,
    pub increasing: bool,
    pub rows: Vec<WitnessRow>,
}

/// Circle means of -phi^alpha for phi = (-log|z|^2)^(1/2 - delta), computed by the
/// trapezoidal rule on 256 points of each circle.
pub fn alpha2_failure_witness(delta: f64, alpha: f64, r_list: &[f64]) -> Result<WitnessTable> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid("delta", "must lie in (0, 1/2)"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "must be positive"));
    }
    if r_list.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(invalid("r", "radii must lie in (0, 1)"));
    }
    let beta = alpha * (0.5 - delta);
    let f = |x: f64, y: f64| -(-(x * x + y * y).ln()).powf(beta);
    let m = 256;
    let mut rows = Vec::new();
    let mut sorted = r_list.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for r in sorted {
        let mean = (0..m)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / m as f64;
                f(r * th.cos(), r * th.sin())
            })
            .sum::<f64>()
            / m as f64;
        let l = (1.0 / (r * r)).ln();
        let ratio = mean.abs() / l;
        let closed_form = l.powf(beta - 1.0);
        rows.push(WitnessRow { r, mean, ratio, ratio_per_log_r: 2.0 * ratio, closed_form, rel_err: (ratio - closed_form).abs() / closed_form });
    }
    let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    Ok(WitnessTable { beta, conclusive: beta > 1.0 && increasing, increasing, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{ddc_mass, ddc_mass_flux};
    use crate::grid::make_ball_grid;
    use crate::wstar::star_norm;

    #[test]
    fn loglog_mass_closed_form_matches_quadrature() {
        for (delta, rho) in [(0.1, 0.5), (0.2, 0.5), (0.1, 0.01), (0.3, 0.8)] {
            let a = loglog_gradient_mass(delta, rho);
            let q = loglog_gradient_mass_quadrature(delta, rho);
            assert!((a - q).abs() < 1e-3 * a, "{a} {q}");
        }
        // the value on B(0, 1/2)
        let a: f64 = 0.4;
        let v = a * a * (2.0 * 2f64.ln()).powf(-0.2) / 0.1;
        assert!((loglog_gradient_mass(0.1, 0.5) - v).abs() < 1e-14);
    }

    #[test]
    fn constant_zero_entry() {
        let g = make_ball_grid(1, 33).unwrap();
        let e = instantiate("constant", &g, &Params::from([("c".into(), 0.0)])).unwrap();
        assert!(e.pair.phi.values().iter().all(|&v| v == 0.0));
        assert!(e.pair.psi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_names_and_params_are_rejected() {
        let g = make_ball_grid(1, 33).unwrap();
        assert!(matches!(instantiate("nope", &g, &Params::new()), Err(LabError::UnknownEntry(_))));
        assert!(instantiate("loglog", &g, &Params::from([("delta".into(), 0.7)])).is_err());
        assert!(instantiate("loglog", &g, &Params::from([("colour".into(), 1.0)])).is_err());
        let g2 = make_ball_grid(2, 17).unwrap();
        assert!(instantiate("log_sum", &g2, &Params::new()).is_err());
    }

    #[test]
    fn loglog_singular_nodes_are_undefined() {
        let g = make_ball_grid(1, 65).unwrap();
        let e = instantiate("loglog", &g, &Params::new()).unwrap();
        assert!(e.pair.phi.get(g.origin()).is_nan());
        assert!(e.singular_nodes > 0 && e.singular_nodes < 20);
        let i = g.nearest_node(&[0.5, 0.0]).unwrap();
        let expect = (-(0.25f64 * 0.25).ln()).powf(0.4);
        assert!((e.pair.phi.get(i) - expect).abs() < 1e-12);
    }

    #[test]
    fn log_single_mass_is_one() {
        let g = make_ball_grid(1, 129).unwrap();
        let e = instantiate("log_single", &g, &Params::new()).unwrap();
        assert_eq!(e.pair.psi.get(g.origin()), f64::NEG_INFINITY);
        let m = ddc_mass_flux(&e.pair.psi).unwrap();
        assert!((m.value - 1.0).abs() < 0.02, "{m:?}");
    }

    #[test]
    fn log_max_masses() {
        let g = make_ball_grid(1, 513).unwrap();
        let e = instantiate("log_max", &g, &Params::new()).unwrap();
        let s = star_norm(&e.pair).unwrap();
        let want = e.facts.iter().find(|f| f.name == "mass").unwrap().value;
        assert!((s.mass - want).abs() < 0.02 * want, "{} vs {want}", s.mass);
        let l1 = e.facts.iter().find(|f| f.name == "l1").unwrap().value;
        assert!((s.l1 - l1).abs() < 0.02 * l1, "{} vs {l1}", s.l1);
        let direct = ddc_mass(&e.pair.phi, &g.interior()).unwrap();
        assert!((direct.value - 1.0).abs() < 0.03, "{direct:?}");
    }

    #[test]
    fn k1_entries_dominate_at_fine_resolution() {
        let g = make_ball_grid(1, 513).unwrap();
        for spec in list() {
            // psi = log|z| is harmonic off 0, an equality case with no margin: see below.
            if spec.name == "log_single" {
                continue;
            }
            let e = instantiate(spec.name, &g, &Params::new()).unwrap();
            let d = e.pair.domination().unwrap();
            assert!(d.passes(1e-3), "{}: {d:?}", spec.name);
        }
    }

    #[test]
    fn harmonic_potential_violations_shrink_with_resolution() {
        let frac = |n| {
            let g = make_ball_grid(1, n).unwrap();
            instantiate("log_single", &g, &Params::new()).unwrap().pair.domination().unwrap().violation_fraction
        };
        let (coarse, fine) = (frac(257), frac(513));
        assert!(fine < coarse && fine < 2e-3, "{coarse} {fine}");
    }

    #[test]
    fn k2_loglog_dominates() {
        let g = make_ball_grid(2, 65).unwrap();
        let e = instantiate("loglog", &g, &Params::new()).unwrap();
        assert_eq!(e.params["margin"], 0.03);
        let d = e.pair.domination().unwrap();
        assert!(d.passes(1e-3), "{d:?}");
    }

    #[test]
    fn witness_ratio_follows_closed_form() {
        let rs: Vec<f64> = (2..=12).map(|j| 2f64.powi(-j)).collect();
        let t = alpha2_failure_witness(0.1, 3.0, &rs).unwrap();
        assert!(t.conclusive && t.increasing);
        assert!((t.beta - 1.2).abs() < 1e-12);
        assert!(t.rows.iter().all(|r| r.rel_err < 1e-10));
        let weak = alpha2_failure_witness(0.1, 1.5, &rs).unwrap();
        assert!(!weak.conclusive);
        let tiny = alpha2_failure_witness(0.49, 3.0, &rs).unwrap();
        assert!(!tiny.conclusive);
    }
}
