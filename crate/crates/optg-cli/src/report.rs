//! Post-run reporting: plot-ready CSVs from a single run's metrics, or an
//! aggregated accuracy-vs-sparsity table across a sweep directory.

use crate::error::{CliError, Result};
use crate::runner::write_text;
use std::fs;
use std::path::Path;

/// Rows of metrics.csv as (epoch, sparsity, eval_acc, lr_w, lr_m).
fn read_metrics(path: &Path) -> Result<Vec<(usize, f64, Option<f64>, f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(CliError::format(
                path,
                format!("line {}: expected 7 fields, got {}", i + 1, fields.len()),
            ));
        }
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| CliError::format(path, format!("line {}: bad {name} `{s}`", i + 1)))
        };
        let epoch = fields[0]
            .parse::<usize>()
            .map_err(|_| CliError::format(path, format!("line {}: bad epoch", i + 1)))?;
        let sparsity = parse(fields[1], "sparsity")?;
        let eval = if fields[3].is_empty() {
            None
        } else {
            Some(parse(fields[3], "eval_acc")?)
        };
        let lr_w = parse(fields[4], "lr_w")?;
        let lr_m = parse(fields[5], "lr_m")?;
        rows.push((epoch, sparsity, eval, lr_w, lr_m));
    }
    Ok(rows)
}

fn target_sparsity_of(dir: &Path) -> Option<String> {
    let echo = fs::read_to_string(dir.join("config.echo.txt")).ok()?;
    for line in echo.lines() {
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == "sparsity" {
                return Some(v.trim().to_string());
            }
        }
    }
    None
}

/// Emits plot-data CSVs for a run directory.
///
/// Single run (has metrics.csv): `accuracy_vs_sparsity.csv` and
/// `schedule_curve.csv`, one row per epoch each. Sweep directory (metrics in
/// subdirectories): one aggregated `accuracy_vs_sparsity.csv` keyed by the
/// runs' target sparsity.
pub fn report(dir: &Path) -> Result<()> {
    let single = dir.join("metrics.csv");
    if single.exists() {
        let rows = read_metrics(&single)?;
        let mut acc = String::from("epoch,sparsity,eval_acc\n");
        let mut sched = String::from("epoch,sparsity,lr_w,lr_m\n");
        for (epoch, sparsity, eval, lr_w, lr_m) in &rows {
            acc.push_str(&format!(
                "{epoch},{sparsity},{}\n",
                eval.map(|v| v.to_string()).unwrap_or_default()
            ));
            sched.push_str(&format!("{epoch},{sparsity},{lr_w},{lr_m}\n"));
        }
        write_text(&dir.join("accuracy_vs_sparsity.csv"), &acc)?;
        write_text(&dir.join("schedule_curve.csv"), &sched)?;
        println!("wrote accuracy_vs_sparsity.csv and schedule_curve.csv ({} rows)", rows.len());
        return Ok(());
    }

    // Sweep mode: aggregate final rows of every subdirectory run.
    let mut entries: Vec<(String, String, f64)> = Vec::new();
    let read_dir = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut subdirs: Vec<_> = read_dir
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("metrics.csv").exists())
        .collect();
    subdirs.sort();
    for sub in &subdirs {
        let rows = read_metrics(&sub.join("metrics.csv"))?;
        let Some(last) = rows.last() else { continue };
        let target = target_sparsity_of(sub)
            .or_else(|| target_sparsity_of(dir))
            .unwrap_or_else(|| last.1.to_string());
        let name = sub
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        entries.push((target, name, last.2.unwrap_or(f64::NAN)));
    }
    if entries.is_empty() {
        return Err(CliError::io(
            dir.join("metrics.csv"),
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "expected metrics.csv or run subdirectories containing metrics.csv",
            ),
        ));
    }
    entries.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
    });
    let mut out = String::from("sparsity,run,final_eval_acc\n");
    for (target, name, acc) in &entries {
        out.push_str(&format!("{target},{name},{acc}\n"));
    }
    write_text(&dir.join("accuracy_vs_sparsity.csv"), &out)?;
    println!("aggregated {} runs into accuracy_vs_sparsity.csv", entries.len());
    Ok(())
}
