//! Parallel evaluation of a benchmark slice.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::context::{extract_schema, load_descriptions, SchemaContext};
use crate::corpus::{load_database_with, BenchmarkItem, DatabaseHandle, DbLayout};
use crate::gateway::Gateway;

use super::{run_sql_d1_with, CandidateSelector, ConsistencySelector, EvalRecord, ItemEnv, PipelineConfig};

/// Gateway plus one opened database and extracted schema per `db_id`.
pub struct RunEnv {
    pub gateway: Gateway,
    pub databases: BTreeMap<String, (DatabaseHandle, SchemaContext)>,
}

impl RunEnv {
    /// Opens every database the items reference and extracts its schema once.
    pub fn prepare(
        gateway: Gateway,
        items: &[BenchmarkItem],
        db_root: &Path,
        layout: DbLayout,
    ) -> anyhow::Result<Self> {
        let mut databases = BTreeMap::new();
        for item in items {
            if databases.contains_key(&item.db_id) {
                continue;
            }
            let db = load_database_with(&item.db_id, db_root, layout)?;
            let desc = load_descriptions(db_root, &item.db_id);
            let schema = extract_schema(&db, desc.as_ref())?;
            databases.insert(item.db_id.clone(), (db, schema));
        }
        Ok(RunEnv { gateway, databases })
    }

    pub fn item_env(&self, db_id: &str) -> Option<ItemEnv<'_>> {
        self.databases.get(db_id).map(|(db, schema)| ItemEnv {
            gateway: &self.gateway,
            db,
            schema,
        })
    }
}

/// Evaluates `items` on `workers` threads. `on_record` sees records in item
/// order as soon as each prefix is complete; the full list is returned too.
/// After a record with a backend failure no further items are started, so the
/// result may be a prefix of `items`.
pub fn run_items(
    items: &[BenchmarkItem],
    env: &RunEnv,
    cfg: &PipelineConfig,
    workers: usize,
    mut on_record: impl FnMut(&EvalRecord),
) -> Vec<EvalRecord> {
    let selector: &dyn CandidateSelector = &ConsistencySelector;
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, EvalRecord)>();
    let mut out: Vec<EvalRecord> = Vec::with_capacity(items.len());
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            let tx = tx.clone();
            let (next, abort) = (&next, &abort);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let record = match env.item_env(&item.db_id) {
                    Some(ie) => run_sql_d1_with(item, &ie, cfg, selector),
                    None => panic!("database {} was not prepared", item.db_id),
                };
                if record.backend_failure.is_some() {
                    abort.store(true, Ordering::SeqCst);
                }
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: HashMap<usize, EvalRecord> = HashMap::new();
        for (i, record) in rx {
            pending.insert(i, record);
            while let Some(r) = pending.remove(&out.len()) {
                log::info!("item {} correct={}", r.item_id, r.correct);
                on_record(&r);
                out.push(r);
            }
        }
    });
    out
}
