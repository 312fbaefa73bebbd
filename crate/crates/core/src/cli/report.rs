use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::metrics::{assemble_report, curve_csv, report_csv, scatter_csv, EvalReport};
use crate::pipeline::EvalRecord;

use super::{read_jsonl, read_manifest, write_file, LABELS_FILE, RECORDS_FILE};

pub const PASS_CSV: &str = "pass_at_k.csv";
pub const MAJ_CSV: &str = "maj_at_k.csv";
pub const SCATTER_CSV: &str = "scatter.csv";
pub const MERGED_CSV: &str = "report.csv";

fn load_run(dir: &Path) -> anyhow::Result<EvalReport> {
    let manifest = read_manifest(dir)?;
    let (sha, records) = read_jsonl::<EvalRecord>(&dir.join(RECORDS_FILE))?;
    if sha != manifest.sha256() {
        bail!("records in {} do not match its manifest", dir.display());
    }
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.is_file() {
        let (lsha, lines) = read_jsonl::<super::classify::LabelLine>(&labels_path)?;
        if lsha != sha {
            bail!("labels in {} do not match its manifest", dir.display());
        }
        Some(
            lines
                .into_iter()
                .map(|l| crate::diagnoser::ErrorLabel {
                    category: l.category,
                    subtype: l.subtype,
                    rationale: l.rationale,
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let strategy = manifest.get("strategy").unwrap_or("unknown").to_string();
    Ok(assemble_report(&records, &strategy, &manifest, labels.as_deref()))
}

/// Merges runs over the same benchmark into pass@k, Maj@k, scatter and summary
/// CSVs under `out`. Every file carries the comma-joined run manifest hashes.
pub fn report_runs(runs: &[PathBuf], out: &Path) -> anyhow::Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for dir in runs {
        reports.push(load_run(dir).with_context(|| format!("loading run {}", dir.display()))?);
    }
    let bench = |r: &EvalReport| r.manifest.get("benchmark_sha256").map(str::to_string);
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if bench(r) != bench(first) {
                bail!(
                    "runs {} and {} evaluate different benchmarks",
                    first.strategy,
                    r.strategy
                );
            }
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let provenance = reports
        .iter()
        .map(|r| r.manifest_sha256.as_str())
        .collect::<Vec<_>>()
        .join(",");
    write_file(&out.join(PASS_CSV), &curve_csv(&refs, "pass@k", &provenance))?;
    write_file(&out.join(MAJ_CSV), &curve_csv(&refs, "maj@k", &provenance))?;
    write_file(&out.join(SCATTER_CSV), &scatter_csv(&refs, &provenance))?;
    write_file(&out.join(MERGED_CSV), &report_csv(&refs, &provenance))?;
    for r in &reports {
        println!("{}: {}", r.strategy, r.efficiency_row());
    }
    Ok(reports)
}
