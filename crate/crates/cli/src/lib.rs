//! Command-line driver: configuration, subcommands, reports and the acceptance criteria.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for configuration or
//! parameter errors (a JSON error object on stdout), 3 when a solver does not converge.

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use pplab_core::LabError;

use config::{ConfigError, ExperimentConfig, Overrides, Profile};
use report::{Check, Report, Table};

#[derive(Debug, Parser)]
#[command(name = "pplab", version, about = "Numerical experiments on plurisubharmonic envelopes, capacities and W* functions")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report.json and the CSV table.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid nodes per axis (odd, at least 17).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Gallery entry.
    #[arg(long, global = true)]
    entry: Option<String>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capacity of a ball and the decay of Cap(K_n).
    Capacity,
    /// Relative extremal function of a ball against its closed form.
    Envelope,
    /// Majorant series, Claim certification and budget sets.
    Majorant,
    /// Energy probes I and J over the levels n.
    Energy,
    /// Lebesgue-point ratios, density ratios and mollifier convergence.
    Lebesgue,
    /// Witness norm, domination and exponential moment.
    Wstar,
    /// Run the acceptance criteria.
    Verify {
        #[arg(long, value_parser = ["full", "quick"])]
        profile: Option<String>,
    },
    /// Inspect the gallery.
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
}

#[derive(Debug, Subcommand)]
enum GalleryAction {
    List,
    Show { name: String },
}

fn overrides(cli: &Cli) -> Overrides {
    let (subcommand, entry, profile) = match &cli.command {
        None => (None, None, None),
        Some(Command::Gallery { action: GalleryAction::List }) => (Some("gallery-list"), None, None),
        Some(Command::Gallery { action: GalleryAction::Show { name } }) => (Some("gallery-show"), Some(name.clone()), None),
        Some(Command::Verify { profile }) => {
            let p = profile.as_deref().map(|p| if p == "quick" { Profile::Quick } else { Profile::Full });
            (Some("verify"), None, p)
        }
        Some(Command::Capacity) => (Some("capacity"), None, None),
        Some(Command::Envelope) => (Some("envelope"), None, None),
        Some(Command::Majorant) => (Some("majorant"), None, None),
        Some(Command::Energy) => (Some("energy"), None, None),
        Some(Command::Lebesgue) => (Some("lebesgue"), None, None),
        Some(Command::Wstar) => (Some("wstar"), None, None),
    };
    Overrides {
        subcommand: subcommand.map(String::from),
        entry: entry.or_else(|| cli.entry.clone()),
        out: cli.out.clone(),
        threads: cli.threads,
        resolution: cli.resolution,
        seed: cli.seed,
        profile,
    }
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) {
    let _ = writeln!(out, "{}", serde_json::to_string(v).expect("error objects serialize"));
}

fn lab_error_code(e: &LabError) -> i32 {
    match e {
        LabError::NonConvergence { .. } => 3,
        LabError::InvalidParameter { .. } | LabError::UnknownEntry(_) | LabError::NotCompact(_) => 2,
        _ => 1,
    }
}

fn run_verify(cfg: &ExperimentConfig, out: &mut dyn Write) -> (Vec<Check>, serde_json::Value, Table) {
    let mut outcomes = Vec::new();
    for id in 1..=11 {
        let o = verify::run_criterion(id, cfg.run.profile);
        let _ = writeln!(out, "{}", o.line());
        outcomes.push(o);
    }
    let mut table = Table::new(&["criterion", "title", "check", "value", "target", "tolerance", "relation", "oracle", "pass"]);
    for o in &outcomes {
        for c in &o.checks {
            table.push(vec![
                o.id.to_string(),
                o.title.into(),
                c.name.clone(),
                report::num(c.value),
                report::num(c.target),
                report::num(c.tolerance),
                c.relation.into(),
                c.oracle.clone(),
                c.pass.to_string(),
            ]);
        }
    }
    let checks = outcomes.iter().map(|o| Check::holds(format!("criterion_{}", o.id), o.pass, o.title)).collect();
    (checks, serde_json::to_value(&outcomes).expect("outcomes serialize"), table)
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run_with(args: impl IntoIterator<Item = String>, env: Vec<(String, String)>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match config::load(cli.config.as_deref(), env, &overrides(&cli)) {
        Ok(c) => c,
        Err(e) => {
            print_json(out, &e);
            return 2;
        }
    };
    if cfg.run.threads > 0 {
        // Fails only when a pool already exists, e.g. a second call in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global();
    }
    let Some(sub) = cfg.subcommand().map(String::from) else {
        print_json(out, &ConfigError::new("run.subcommand", "no subcommand given"));
        return 2;
    };
    let result = match sub.as_str() {
        "capacity" => commands::capacity(&cfg),
        "envelope" => commands::envelope(&cfg),
        "majorant" => commands::majorant(&cfg),
        "energy" => commands::energy(&cfg),
        "lebesgue" => commands::lebesgue(&cfg),
        "wstar" => commands::wstar(&cfg),
        "gallery-list" => Ok(commands::gallery_list()),
        "gallery-show" => commands::gallery_show(&cfg),
        "verify" => {
            let (checks, results, table) = run_verify(&cfg, out);
            Ok(commands::Outcome { checks, results, table })
        }
        other => unreachable!("validated subcommand {other}"),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let code = lab_error_code(&e);
            let kind = if code == 2 { "parameter" } else { "runtime" };
            print_json(out, &json!({ "error": kind, "message": e.to_string() }));
            return code;
        }
    };
    let passed = outcome.checks.iter().all(|c| c.pass);
    let report = Report {
        schema_version: report::SCHEMA_VERSION,
        subcommand: sub.clone(),
        passed,
        checks: outcome.checks,
        results: outcome.results,
        config: cfg.clone(),
    };
    if sub != "verify" {
        for c in &report.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{verdict} {} = {} ({} {})", c.name, report::num(c.value), c.relation, report::num(c.target));
        }
    }
    match report::write_outputs(&cfg.output.dir, &report, &outcome.table) {
        Ok((json, csv)) => {
            let _ = writeln!(out, "wrote {} and {}", json.display(), csv.display());
        }
        Err(e) => {
            print_json(out, &json!({ "error": "io", "message": e.to_string() }));
            return 1;
        }
    }
    if passed {
        0
    } else {
        1
    }
}
