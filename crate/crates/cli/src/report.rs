use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use spad_core::eval::EvalReport;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::evaluate::REPORT_FILE;
use crate::provenance::{create_dir, write_json};

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// Evaluation reports, or run directories containing `report.json`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(REPORT_FILE)
    } else {
        p.to_path_buf()
    }
}

fn run_name(p: &Path) -> String {
    let dir = if p.is_dir() { Some(p) } else { p.parent() };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.2}", 100.0 * v))
}

/// Markdown comparison table, one row per report.
pub fn summary_table(rows: &[(String, EvalReport)]) -> String {
    let mut s = String::new();
    s.push_str("| run | EER % | AUC | BPCER@APCER=5% | BPCER@APCER=10% | final gap | bona fide | attack |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for (name, r) in rows {
        let at = |t: f64| {
            r.bpcer_at_apcer
                .iter()
                .find(|p| (p.target - t).abs() < 1e-12)
                .and_then(|p| p.value)
        };
        let gap = r
            .gap_curve
            .last()
            .map_or("-".into(), |g| format!("{:.4e}", g.gap));
        let _ = writeln!(
            s,
            "| {name} | {} | {:.4} | {} | {} | {gap} | {} | {} |",
            pct(Some(r.eer.eer)),
            r.auc,
            pct(at(0.05)),
            pct(at(0.10)),
            r.n_bonafide,
            r.n_attack
        );
    }
    s
}

pub fn run(cfg: &RunConfig, args: &ReportArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for input in &args.inputs {
        let path = report_path(input);
        if !path.is_file() {
            return Err(CliError::Config(format!("report {} does not exist", path.display())));
        }
        rows.push((run_name(input), EvalReport::load_json(&path)?));
    }
    let table = summary_table(&rows);
    print!("{table}");
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        std::fs::write(out.join("summary.md"), &table).map_err(|e| CliError::io(&out.join("summary.md"), e))?;
        let entries: Vec<_> = rows
            .iter()
            .map(|(name, r)| {
                json!({
                    "run": name,
                    "eer": r.eer.eer,
                    "auc": r.auc,
                    "final_gap": r.gap_curve.last().map(|g| g.gap),
                })
            })
            .collect();
        write_json(&out.join("summary.json"), &json!(entries))?;
    }
    Ok(())
}
