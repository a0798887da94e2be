//! Experiment configuration: a TOML file with one level of sections, then `PPLAB_SECTION_KEY`
//! environment overrides, then command-line flags. Everything is validated before any
//! computation starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pplab_core::gallery;

pub const SUBCOMMANDS: [&str; 9] =
    ["capacity", "envelope", "majorant", "energy", "lebesgue", "wstar", "verify", "gallery-list", "gallery-show"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub gallery: GallerySection,
    /// Gallery entry parameters; missing ones take the entry defaults.
    pub params: BTreeMap<String, f64>,
    pub method: MethodSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Resolutions of the acceptance criteria.
    Full,
    /// Small grids, for smoke runs and the determinism check.
    Quick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    pub seed: u64,
    /// Worker threads; 0 leaves the choice to the thread pool.
    pub threads: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub k: usize,
    /// Nodes per axis; defaults to 257 for k=1 and 33 for k=2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GallerySection {
    pub entry: String,
    /// Scale the pair to unit witness norm before use.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Majorant levels N.
    pub levels: usize,
    pub tol: f64,
    /// Radius of the ball whose extremal function and capacity are computed.
    pub set_radius: f64,
    /// Radius of the compact ball K used by majorant, energy and wstar.
    pub k_radius: f64,
    /// First level of the budget-set sum.
    pub budget_from: usize,
    /// Levels K_1..K_m entering the capacity decay fit; 0 skips the fit.
    pub decay_levels: usize,
    pub eps: Vec<f64>,
    pub radii: Vec<f64>,
    /// Threshold of the density ratio.
    pub delta: f64,
    /// Number of sampled Lebesgue points.
    pub points: usize,
    pub m: u32,
    pub n_max: usize,
    /// "standard", "random" or "both".
    pub dictionary: String,
    pub shifts: usize,
    /// Constant c of the exponential moment.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { subcommand: None, seed: 1, threads: 0, profile: Profile::Full }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { k: 1, n: None }
    }
}

impl Default for GallerySection {
    fn default() -> Self {
        GallerySection { entry: "loglog".into(), normalize: true }
    }
}

impl Default for MethodSection {
    fn default() -> Self {
        MethodSection {
            alpha: 1.5,
            lambda: None,
            levels: 8,
            tol: 1e-6,
            set_radius: 0.3,
            k_radius: 0.5,
            budget_from: 4,
            decay_levels: 5,
            eps: vec![0.025, 0.05, 0.1, 0.2],
            radii: vec![0.025, 0.05, 0.1],
            delta: 0.1,
            points: 20,
            m: 1,
            n_max: 16,
            dictionary: "both".into(),
            shifts: 6,
            c: 0.1,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// A configuration problem, reported as JSON with exit code 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub error: &'static str,
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { error: "config", field: field.into(), message: message.into() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub subcommand: Option<String>,
    pub entry: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub resolution: Option<usize>,
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn section<'a>(t: &'a mut toml::Table, name: &str) -> Result<&'a mut toml::Table, ConfigError> {
    t.entry(name.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| ConfigError::new(name, "must be a section"))
}

/// Applies `PPLAB_SECTION_KEY=value` pairs; the name splits at its first underscore, so
/// `PPLAB_METHOD_SET_RADIUS` sets `method.set_radius`. Values are read as TOML literals and
/// fall back to strings.
pub fn apply_env(t: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with("PPLAB_")).collect();
    vars.sort();
    for (name, raw) in vars {
        let rest = name["PPLAB_".len()..].to_ascii_lowercase();
        let Some((sec, key)) = rest.split_once('_') else {
            return Err(ConfigError::new(name, "expected PPLAB_<SECTION>_<KEY>"));
        };
        if !["run", "grid", "gallery", "params", "method", "output"].contains(&sec) {
            return Err(ConfigError::new(name, format!("unknown section `{sec}`")));
        }
        section(t, sec)?.insert(key.to_string(), parse_value(&raw));
    }
    Ok(())
}

fn apply_overrides(t: &mut toml::Table, o: &Overrides) -> Result<(), ConfigError> {
    let mut set = |sec: &str, key: &str, v: toml::Value| -> Result<(), ConfigError> {
        section(t, sec)?.insert(key.into(), v);
        Ok(())
    };
    if let Some(s) = &o.subcommand {
        set("run", "subcommand", toml::Value::String(s.clone()))?;
    }
    if let Some(e) = &o.entry {
        set("gallery", "entry", toml::Value::String(e.clone()))?;
    }
    if let Some(p) = &o.out {
        set("output", "dir", toml::Value::String(p.to_string_lossy().into_owned()))?;
    }
    let int = |v: u64| -> Result<toml::Value, ConfigError> {
        i64::try_from(v).map(toml::Value::Integer).map_err(|_| ConfigError::new("flags", "integer too large"))
    };
    if let Some(n) = o.threads {
        set("run", "threads", int(n as u64)?)?;
    }
    if let Some(n) = o.resolution {
        set("grid", "n", int(n as u64)?)?;
    }
    if let Some(s) = o.seed {
        set("run", "seed", int(s)?)?;
    }
    if let Some(p) = o.profile {
        let name = match p {
            Profile::Full => "full",
            Profile::Quick => "quick",
        };
        set("run", "profile", toml::Value::String(name.into()))?;
    }
    Ok(())
}

/// File, then environment, then flags; the result is validated.
pub fn load(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &Overrides,
) -> Result<ExperimentConfig, ConfigError> {
    let mut t = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::new("config", format!("{}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::new("config", e.to_string()))?
        }
        None => toml::Table::new(),
    };
    apply_env(&mut t, env)?;
    apply_overrides(&mut t, overrides)?;
    let cfg: ExperimentConfig = toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| {
        ConfigError::new("config", e.to_string().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn resolution(&self) -> usize {
        self.grid.n.unwrap_or(if self.grid.k == 2 { 33 } else { 257 })
    }

    pub fn subcommand(&self) -> Option<&str> {
        self.run.subcommand.as_deref()
    }

    /// Checks every precondition the subcommands rely on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = |f: &str, m: &dyn std::fmt::Display| ConfigError::new(f, m.to_string());
        if let Some(s) = self.subcommand() {
            if !SUBCOMMANDS.contains(&s) {
                return Err(e("run.subcommand", &format!("unknown subcommand `{s}`; expected one of {}", SUBCOMMANDS.join(", "))));
            }
        }
        let k = self.grid.k;
        if k != 1 && k != 2 {
            return Err(e("grid.k", &"must be 1 or 2"));
        }
        let n = self.resolution();
        if n < 17 || n.is_multiple_of(2) {
            return Err(e("grid.n", &format!("must be odd and at least 17, got {n}")));
        }
        if k == 2 && n > 65 {
            return Err(e("grid.n", &"k=2 grids are limited to n <= 65 (memory)"));
        }
        if k == 1 && n > 4097 {
            return Err(e("grid.n", &"k=1 grids are limited to n <= 4097"));
        }
        gallery::resolve_params(&self.gallery.entry, k, &self.params).map_err(|err| e("gallery", &err))?;
        let m = &self.method;
        if !(1.0..2.0).contains(&m.alpha) {
            return Err(e("method.alpha", &"must lie in [1, 2)"));
        }
        if let Some(l) = m.lambda {
            if !(l > 2f64.powf(m.alpha) && l < 4.0) {
                return Err(e("method.lambda", &format!("must satisfy 2^alpha < lambda < 4; 2^alpha = {}, lambda = {l}", 2f64.powf(m.alpha))));
            }
        }
        if m.levels == 0 || m.levels > 30 {
            return Err(e("method.levels", &"must lie in 1..=30"));
        }
        if !(m.tol > 0.0 && m.tol < 1.0) {
            return Err(e("method.tol", &"must lie in (0, 1)"));
        }
        if !(m.set_radius > 0.0 && m.set_radius < 0.9) {
            return Err(e("method.set_radius", &"must lie in (0, 0.9)"));
        }
        if !(m.k_radius > 0.0 && m.k_radius < 0.9) {
            return Err(e("method.k_radius", &"must lie in (0, 0.9)"));
        }
        if m.budget_from == 0 {
            return Err(e("method.budget_from", &"must be at least 1"));
        }
        if m.decay_levels > 30 {
            return Err(e("method.decay_levels", &"must be at most 30"));
        }
        // Kernel radii below 2h hold too few nodes; only the lebesgue subcommand uses them.
        let h = if self.subcommand() == Some("lebesgue") { 2.0 / (n - 1) as f64 } else { 0.0 };
        for (name, list) in [("method.eps", &m.eps), ("method.radii", &m.radii)] {
            if list.is_empty() {
                return Err(e(name, &"must not be empty"));
            }
            if list.iter().any(|&v| !(v >= 2.0 * h * (1.0 - 1e-12) && v > 0.0 && v < 0.5)) {
                return Err(e(name, &format!("entries must lie in [2h, 0.5) with h = {h}")));
            }
        }
        if !(m.delta > 0.0) {
            return Err(e("method.delta", &"must be positive"));
        }
        if m.points == 0 {
            return Err(e("method.points", &"must be at least 1"));
        }
        if m.m > pplab_core::energy::MAX_M {
            return Err(e("method.m", &format!("must be at most {}", pplab_core::energy::MAX_M)));
        }
        if m.n_max < 3 {
            return Err(e("method.n_max", &"must be at least 3 for a growth fit"));
        }
        if !["standard", "random", "both"].contains(&m.dictionary.as_str()) {
            return Err(e("method.dictionary", &"must be standard, random or both"));
        }
        if m.shifts == 0 {
            return Err(e("method.shifts", &"must be at least 1"));
        }
        if !(m.c > 0.0 && m.c.is_finite()) {
            return Err(e("method.c", &"must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.subcommand = Some("majorant".into());
        cfg.grid.n = Some(129);
        cfg.method.lambda = Some(3.1);
        cfg.method.tol = 3.7e-7;
        cfg.params.insert("delta".into(), 0.15);
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn env_overrides_split_at_first_underscore() {
        let mut t = toml::Table::new();
        apply_env(
            &mut t,
            env(&[("PPLAB_METHOD_SET_RADIUS", "0.4"), ("PPLAB_GRID_N", "65"), ("PPLAB_GALLERY_ENTRY", "log_max"), ("HOME", "/x")]),
        )
        .unwrap();
        let cfg: ExperimentConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(cfg.method.set_radius, 0.4);
        assert_eq!(cfg.grid.n, Some(65));
        assert_eq!(cfg.gallery.entry, "log_max");
        let mut t = toml::Table::new();
        assert!(apply_env(&mut t, env(&[("PPLAB_BOGUS_X", "1")])).is_err());
    }

    #[test]
    fn precedence_file_env_flags() {
        let dir = std::env::temp_dir().join(format!("pplab-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "[grid]\nn = 65\n[method]\nalpha = 1.2\n").unwrap();
        let cfg = load(Some(&path), env(&[("PPLAB_METHOD_ALPHA", "1.7")]), &Overrides::default()).unwrap();
        assert_eq!((cfg.resolution(), cfg.method.alpha), (65, 1.7));
        let o = Overrides { resolution: Some(33), ..Default::default() };
        let cfg = load(Some(&path), Vec::new(), &o).unwrap();
        assert_eq!((cfg.resolution(), cfg.method.alpha), (33, 1.2));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_values_name_the_constraint() {
        let err = load(None, env(&[("PPLAB_METHOD_LAMBDA", "2.5")]), &Overrides::default()).unwrap_err();
        assert_eq!(err.field, "method.lambda");
        assert!(err.message.contains("2^alpha < lambda < 4"));
        for (k, v, field) in [
            ("PPLAB_GRID_N", "64", "grid.n"),
            ("PPLAB_GRID_K", "3", "grid.k"),
            ("PPLAB_METHOD_ALPHA", "2.0", "method.alpha"),
            ("PPLAB_GALLERY_ENTRY", "nope", "gallery"),
            ("PPLAB_PARAMS_BOGUS", "1.0", "gallery"),
            ("PPLAB_METHOD_EPS", "[0.7]", "method.eps"),
            ("PPLAB_RUN_SUBCOMMAND", "\"dance\"", "run.subcommand"),
        ] {
            let err = load(None, env(&[(k, v)]), &Overrides::default()).unwrap_err();
            assert_eq!(err.field, field, "{k}={v}");
        }
        let small = env(&[("PPLAB_METHOD_EPS", "[0.001]"), ("PPLAB_RUN_SUBCOMMAND", "\"lebesgue\"")]);
        assert_eq!(load(None, small, &Overrides::default()).unwrap_err().field, "method.eps");
        let err = load(None, env(&[("PPLAB_METHOD_NOPE", "1")]), &Overrides::default()).unwrap_err();
        assert_eq!(err.field, "config");
    }
}
