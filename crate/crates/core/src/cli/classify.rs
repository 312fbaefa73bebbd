use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::context::{extract_schema, load_descriptions, SchemaContext};
use crate::corpus::{load_benchmark, load_database_with, DatabaseHandle, DbLayout};
use crate::diagnoser::{classify_error, Category, ErrorLabel, Subtype};
use crate::executor::{compare_results, execute_sql, is_order_sensitive};
use crate::pipeline::EvalRecord;

use super::{header_line, json_line, read_jsonl, read_manifest, write_file, ClassifyArgs, LABELS_FILE, RECORDS_FILE};

/// One line of the labels file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLine {
    pub item_id: String,
    pub category: Category,
    pub subtype: Subtype,
    pub rationale: String,
}

impl LabelLine {
    fn new(item_id: &str, label: ErrorLabel) -> Self {
        LabelLine {
            item_id: item_id.to_string(),
            category: label.category,
            subtype: label.subtype,
            rationale: label.rationale,
        }
    }
}

struct Schemas {
    root: std::path::PathBuf,
    layout: DbLayout,
    cache: BTreeMap<String, (DatabaseHandle, SchemaContext)>,
}

impl Schemas {
    fn get(&mut self, db_id: &str) -> anyhow::Result<&(DatabaseHandle, SchemaContext)> {
        if !self.cache.contains_key(db_id) {
            let db = load_database_with(db_id, &self.root, self.layout)?;
            let schema = extract_schema(&db, load_descriptions(&self.root, db_id).as_ref())?;
            self.cache.insert(db_id.to_string(), (db, schema));
        }
        Ok(&self.cache[db_id])
    }
}

pub(super) fn cmd_classify(args: &ClassifyArgs) -> anyhow::Result<u8> {
    match (&args.run, &args.pred) {
        (Some(run), None) => classify_run(run).map(|_| 0),
        (None, Some(pred)) => {
            let gold = args.gold.as_deref().context("--pred needs --gold")?;
            let root = args.db_root.as_deref().context("--pred needs --db-root")?;
            let layout = if args.flat_db { DbLayout::Flat } else { DbLayout::Nested };
            for line in classify_predictions(pred, gold, args.format, root, layout, args.timeout)? {
                print!("{}", json_line(&line)?);
            }
            Ok(0)
        }
        _ => bail!("classify needs either --run or --pred/--gold/--db-root"),
    }
}

/// Labels each incorrect record of a run directory, writes the labels file and
/// adds the error distribution to the report. Returns the labels.
pub fn classify_run(dir: &Path) -> anyhow::Result<Vec<LabelLine>> {
    let manifest = read_manifest(dir)?;
    let sha = manifest.sha256();
    let records_path = dir.join(RECORDS_FILE);
    if !records_path.is_file() {
        bail!("no records file at {}", records_path.display());
    }
    let (records_sha, records) = read_jsonl::<EvalRecord>(&records_path)?;
    if records_sha != sha {
        bail!("{} does not match {}", records_path.display(), dir.join(super::MANIFEST_FILE).display());
    }
    let mut schemas = Schemas {
        root: manifest.get("db_root").context("manifest lacks db_root")?.into(),
        layout: if manifest.get("db_layout") == Some("flat") { DbLayout::Flat } else { DbLayout::Nested },
        cache: BTreeMap::new(),
    };
    let mut labels = Vec::new();
    let mut lines = Vec::new();
    for r in records.iter().filter(|r| !r.correct) {
        let (_, schema) = schemas.get(&r.db_id)?;
        let label = classify_error(
            r.final_sql.as_deref(),
            &r.gold_sql,
            schema,
            Some(&r.outcome),
            Some(&r.gold_outcome),
        );
        labels.push(label.clone());
        lines.push(LabelLine::new(&r.item_id, label));
    }
    let mut body = header_line(&sha);
    for l in &lines {
        body.push_str(&json_line(l)?);
    }
    write_file(&dir.join(LABELS_FILE), &body)?;
    let strategy = manifest.get("strategy").unwrap_or("unknown").to_string();
    super::eval::write_reports(dir, &records, &strategy, &manifest, Some(&labels))?;
    Ok(lines)
}

/// Labels standalone predictions (`{"item_id": "SQL", ...}`) against a gold
/// benchmark. Items whose prediction matches gold get no label; items missing
/// from the prediction file are labelled as producing no SQL.
pub fn classify_predictions(
    pred: &Path,
    gold: &Path,
    format: crate::corpus::BenchmarkFormat,
    db_root: &Path,
    layout: DbLayout,
    timeout: f64,
) -> anyhow::Result<Vec<LabelLine>> {
    let text = std::fs::read_to_string(pred).with_context(|| format!("cannot read {}", pred.display()))?;
    let preds: BTreeMap<String, Option<String>> =
        serde_json::from_str(&text).with_context(|| format!("{} is not an id -> SQL object", pred.display()))?;
    let items = load_benchmark(gold, format)?;
    let mut schemas = Schemas {
        root: db_root.to_path_buf(),
        layout,
        cache: BTreeMap::new(),
    };
    let mut out = Vec::new();
    for item in &items {
        let sql = preds.get(&item.item_id).cloned().flatten();
        let (db, schema) = schemas.get(&item.db_id)?;
        let p = execute_sql(db, sql.as_deref(), timeout);
        let g = execute_sql(db, Some(&item.gold_sql), timeout);
        if g.is_ok() && compare_results(&p, &g, is_order_sensitive(&item.gold_sql)) {
            continue;
        }
        let label = classify_error(sql.as_deref(), &item.gold_sql, schema, Some(&p), Some(&g));
        out.push(LabelLine::new(&item.item_id, label));
    }
    Ok(out)
}
