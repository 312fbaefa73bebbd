use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use sha2::{Digest, Sha256};

use crate::corpus::{load_benchmark, BenchmarkItem, DbLayout};
use crate::gateway::{Backend, Gateway, MockBackend, MockFixture, RemoteBackend, SAMPLING_TEMPERATURE};
use crate::metrics::{assemble_report, curves_csv, report_csv, Manifest};
use crate::pipeline::{run_items, EvalRecord, PipelineConfig, RunEnv};

use super::{
    default_workers, header_line, json_line, read_jsonl, write_file, BackendKind, EvalArgs, Track, CURVES_CSV,
    EXIT_BACKEND_FAILURE, MANIFEST_FILE, RECORDS_FILE, REPORT_CSV, REPORT_JSON,
};

const STAGES: [&str; 4] = ["a_r", "a_g", "a_v", "a_s"];

/// Pipeline configuration and strategy tag for the chosen track.
pub fn track_config(args: &EvalArgs) -> anyhow::Result<(PipelineConfig, String)> {
    let (mut cfg, tag) = match args.track {
        Track::Greedy => {
            if args.k.is_some_and(|k| k != 1) {
                bail!("the greedy track produces exactly one candidate");
            }
            (PipelineConfig::greedy(), "greedy".to_string())
        }
        Track::Sample => {
            if args.k.is_some_and(|k| k != 1) {
                bail!("the sample track produces exactly one candidate; use --track maj for pools");
            }
            (PipelineConfig::sample(), "sample".to_string())
        }
        Track::Maj => {
            let k = args.k.unwrap_or(8);
            (PipelineConfig::majority(k), format!("maj@{k}"))
        }
        Track::SqlD1 => {
            let stages: Vec<String> = match &args.ablation {
                Some(v) => v.iter().map(|s| s.trim().to_ascii_lowercase()).collect(),
                None => STAGES.iter().map(|s| s.to_string()).collect(),
            };
            if let Some(bad) = stages.iter().find(|s| !STAGES.contains(&s.as_str())) {
                bail!("unknown stage {bad:?} in --ablation (expected a_r, a_g, a_v, a_s)");
            }
            if !stages.iter().any(|s| s == "a_g") {
                bail!("--ablation must include the generator a_g");
            }
            let has = |s: &str| stages.iter().any(|x| x == s);
            let selector = has("a_s");
            let k = args.k.unwrap_or(if selector { 8 } else { 1 });
            let mut cfg = PipelineConfig::sql_d1(has("a_r"), has("a_v"), selector, k);
            cfg.sampling.temperature = if k == 1 { 0.0 } else { SAMPLING_TEMPERATURE };
            let on: Vec<&str> = STAGES.iter().copied().filter(|s| has(s)).collect();
            let mut tag = format!("sql-d1[{}]", on.join("+"));
            if k > 1 {
                tag.push_str(&format!("@{k}"));
            }
            (cfg, tag)
        }
    };
    if let Some(t) = args.temperature {
        cfg.sampling.temperature = t;
    }
    cfg.verifier_max_iters = args.verifier_iters;
    cfg.timeout_seconds = args.timeout;
    cfg.sampling.max_new_tokens = args.max_new_tokens;
    cfg.sampling.backend_params = args.backend_params.clone();
    cfg.sampling.seed = args.seed;
    cfg.validate()?;
    Ok((cfg, tag))
}

fn make_backend(args: &EvalArgs) -> anyhow::Result<Box<dyn Backend>> {
    Ok(match args.backend {
        BackendKind::Mock => {
            let path = args
                .mock_fixture
                .as_deref()
                .context("--backend mock needs --mock-fixture")?;
            Box::new(MockBackend::new(MockFixture::load(path)?))
        }
        BackendKind::Remote => Box::new(RemoteBackend::from_env()?),
    })
}

fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn build_manifest(
    args: &EvalArgs,
    cfg: &PipelineConfig,
    strategy: &str,
    backend: &dyn Backend,
    n_items: usize,
) -> anyhow::Result<Manifest> {
    let mut m = Manifest::default();
    m.set("benchmark", args.benchmark.display());
    m.set("benchmark_sha256", file_sha256(&args.benchmark)?);
    m.set("format", args.format);
    m.set("db_root", args.db_root.display());
    m.set("db_layout", if args.flat_db { "flat" } else { "nested" });
    m.set("n_items", n_items);
    m.set("strategy", strategy);
    m.set("use_retriever", cfg.use_retriever);
    m.set("use_verifier", cfg.use_verifier);
    m.set("use_selector", cfg.use_selector);
    m.set("k", cfg.k);
    m.set("verifier_max_iters", cfg.verifier_max_iters);
    m.set("timeout_seconds", cfg.timeout_seconds);
    m.set("temperature", cfg.sampling.temperature);
    m.set("max_new_tokens", cfg.sampling.max_new_tokens);
    m.set(
        "backend_params",
        serde_json::to_string(&cfg.sampling.backend_params).expect("pairs serialize"),
    );
    m.set("seed", cfg.sampling.seed.map_or("none".to_string(), |s| s.to_string()));
    m.set("backend", backend.identity());
    Ok(m)
}

/// Runs `eval`. Returns the exit status: 0, or 2 when the backend failed.
pub fn eval_run(args: &EvalArgs) -> anyhow::Result<u8> {
    let (cfg, strategy) = track_config(args)?;
    let mut items = load_benchmark(&args.benchmark, args.format)?;
    if let Some(n) = args.limit {
        items.truncate(n);
    }
    let backend = make_backend(args)?;
    let manifest = build_manifest(args, &cfg, &strategy, backend.as_ref(), items.len())?;
    let sha = manifest.sha256();

    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let manifest_path = args.out.join(MANIFEST_FILE);
    let records_path = args.out.join(RECORDS_FILE);

    let mut done: Vec<EvalRecord> = Vec::new();
    if args.resume && records_path.exists() {
        let old = super::read_manifest(&args.out)?;
        if old != manifest {
            bail!("{} was written with a different configuration; refusing to resume", manifest_path.display());
        }
        let (old_sha, old_records) = read_jsonl::<EvalRecord>(&records_path)?;
        if old_sha != sha {
            bail!("{} belongs to another run", records_path.display());
        }
        done = old_records.into_iter().filter(|r| r.backend_failure.is_none()).collect();
        log::info!("resuming with {} finished records", done.len());
    }
    write_file(&manifest_path, &manifest.to_toml())?;

    let mut body = header_line(&sha);
    for r in &done {
        body.push_str(&json_line(r)?);
    }
    write_file(&records_path, &body)?;

    let finished: HashSet<&str> = done.iter().map(|r| r.item_id.as_str()).collect();
    let todo: Vec<BenchmarkItem> = items
        .iter()
        .filter(|i| !finished.contains(i.item_id.as_str()))
        .cloned()
        .collect();

    let layout = if args.flat_db { DbLayout::Flat } else { DbLayout::Nested };
    let env = RunEnv::prepare(Gateway::new(backend, args.max_in_flight), &todo, &args.db_root, layout)?;
    let mut sink = OpenOptions::new().append(true).open(&records_path)?;
    let mut write_err: Option<std::io::Error> = None;
    let fresh = run_items(&todo, &env, &cfg, args.workers.unwrap_or_else(default_workers), |r| {
        if write_err.is_some() {
            return;
        }
        let line = json_line(r).expect("record serializes");
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|_| sink.flush()) {
            write_err = Some(e);
        }
    });
    if let Some(e) = write_err {
        return Err(e).context("writing records");
    }

    let failed = fresh.iter().any(|r| r.backend_failure.is_some());
    let mut all = done;
    all.extend(fresh);
    let order: std::collections::HashMap<&str, usize> =
        items.iter().enumerate().map(|(i, it)| (it.item_id.as_str(), i)).collect();
    all.sort_by_key(|r| order.get(r.item_id.as_str()).copied().unwrap_or(usize::MAX));

    if failed {
        eprintln!(
            "backend failure after {} of {} items; finished records kept in {}",
            all.len(),
            items.len(),
            records_path.display()
        );
        return Ok(EXIT_BACKEND_FAILURE);
    }
    write_reports(&args.out, &all, &strategy, &manifest, None)?;
    Ok(0)
}

pub(super) fn write_reports(
    out: &Path,
    records: &[EvalRecord],
    strategy: &str,
    manifest: &Manifest,
    labels: Option<&[crate::diagnoser::ErrorLabel]>,
) -> anyhow::Result<()> {
    let report = assemble_report(records, strategy, manifest, labels);
    write_file(&out.join(REPORT_JSON), &report.to_json())?;
    write_file(&out.join(REPORT_CSV), &report_csv(&[&report], &report.manifest_sha256))?;
    write_file(&out.join(CURVES_CSV), &curves_csv(&[&report], &report.manifest_sha256))?;
    println!("{strategy}: EX {} over {} items ({})", report.ex_overall, report.n_items, report.efficiency_row());
    Ok(())
}
