//! Acceptance criteria at their pinned resolutions. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails.

use std::path::Path;
use std::process::Command;

use pplab_tool::config::Profile;
use pplab_tool::verify::{run_criterion, CRITERIA};

/// Runs `pplab verify --profile quick` twice into the same directory and compares the files.
fn repeated_runs_identical() -> Result<bool, String> {
    let dir = std::env::temp_dir().join(format!("pplab-acceptance-{}", std::process::id()));
    let mut seen = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_pplab"))
            .args(["verify", "--profile", "quick", "--out"])
            .arg(&dir)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.code().is_none_or(|c| c > 1) {
            return Err(format!("verify exited with {:?}", status.status.code()));
        }
        let read = |f: &str| std::fs::read(Path::new(&dir).join(f)).map_err(|e| e.to_string());
        seen.push((read("report.json")?, read("verify.csv")?, status.stdout));
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(seen[0] == seen[1])
}

fn main() {
    let mut failed = 0;
    for &(id, title) in CRITERIA.iter() {
        let line = if id == 11 {
            match repeated_runs_identical() {
                Ok(true) => format!("criterion {id:>2} PASS {title} | report.json, verify.csv and stdout identical"),
                Ok(false) => format!("criterion {id:>2} FAIL {title} | outputs differ between runs"),
                Err(e) => format!("criterion {id:>2} FAIL {title} | {e}"),
            }
        } else {
            run_criterion(id, Profile::Full).line()
        };
        if line.contains(" FAIL ") {
            failed += 1;
        }
        println!("{line}");
    }
    println!("acceptance: {} of {} criteria pass", CRITERIA.len() - failed, CRITERIA.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
