//! Read-only, time-limited SQL execution and execution-accuracy comparison.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::DatabaseHandle;
use crate::diagnoser::parse_sql;

pub const ROW_CAP: usize = 100_000;
pub const DEFAULT_TIMEOUT_SECONDS: f64 = 30.0;
/// Relative tolerance for real-valued cells.
pub const REAL_TOLERANCE: f64 = 1e-6;
/// Above this size the order-insensitive comparison skips the matching fallback.
const MATCHING_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    /// Hex sha256 of the blob contents.
    Blob { blob_sha256: String },
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob { .. } => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }
}

pub fn reals_equal(x: f64, y: f64) -> bool {
    if x == y {
        return true;
    }
    if !x.is_finite() || !y.is_finite() {
        return x.is_nan() && y.is_nan();
    }
    (x - y).abs() <= REAL_TOLERANCE * 1f64.max(x.abs()).max(y.abs())
}

pub fn cells_equal(a: &Cell, b: &Cell) -> bool {
    match (a, b) {
        (Cell::Null, Cell::Null) => true,
        (Cell::Integer(x), Cell::Integer(y)) => x == y,
        (Cell::Text(x), Cell::Text(y)) => x.trim_end() == y.trim_end(),
        (Cell::Blob { blob_sha256: x }, Cell::Blob { blob_sha256: y }) => x == y,
        (Cell::Real(_) | Cell::Integer(_), Cell::Real(_) | Cell::Integer(_)) => {
            reals_equal(a.as_f64().unwrap(), b.as_f64().unwrap())
        }
        _ => false,
    }
}

fn rows_equal(a: &[Cell], b: &[Cell]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cells_equal(x, y))
}

/// Total order used to line up rows before comparison.
fn cell_order(a: &Cell, b: &Cell) -> Ordering {
    match (a, b) {
        (Cell::Text(x), Cell::Text(y)) => x.trim_end().cmp(y.trim_end()),
        (Cell::Blob { blob_sha256: x }, Cell::Blob { blob_sha256: y }) => x.cmp(y),
        _ if a.rank() == 1 && b.rank() == 1 => {
            let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
            x.total_cmp(&y).then_with(|| match (a, b) {
                (Cell::Integer(i), Cell::Integer(j)) => i.cmp(j),
                _ => Ordering::Equal,
            })
        }
        _ => a.rank().cmp(&b.rank()),
    }
}

fn row_order(a: &[Cell], b: &[Cell]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = cell_order(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    SqlError,
    Timeout,
    EmptyPrediction,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::SqlError => "sql_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::EmptyPrediction => "empty_prediction",
        }
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub rows: Option<Vec<Vec<Cell>>>,
    pub column_count: usize,
    pub error_message: Option<String>,
    /// Wall-clock time; not serialized so that records stay reproducible.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl ExecutionOutcome {
    pub fn ok(rows: Vec<Vec<Cell>>, column_count: usize) -> Self {
        ExecutionOutcome {
            status: ExecStatus::Ok,
            rows: Some(rows),
            column_count,
            error_message: None,
            elapsed_seconds: 0.0,
        }
    }

    pub fn failed(status: ExecStatus, message: impl Into<String>) -> Self {
        ExecutionOutcome {
            status,
            rows: None,
            column_count: 0,
            error_message: Some(message.into()),
            elapsed_seconds: 0.0,
        }
    }

    pub fn empty_prediction() -> Self {
        Self::failed(ExecStatus::EmptyPrediction, "no SQL to execute")
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }
}

fn first_keyword(sql: &str) -> String {
    // skip leading comments so they cannot hide the statement kind
    let mut s = sql.trim_start();
    loop {
        if let Some(rest) = s.strip_prefix("--") {
            s = rest.find('\n').map_or("", |i| &rest[i..]).trim_start();
        } else if let Some(rest) = s.strip_prefix("/*") {
            s = rest.find("*/").map_or("", |i| &rest[i + 2..]).trim_start();
        } else {
            break;
        }
    }
    if s.starts_with('(') {
        return "(".into();
    }
    s.chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase()
}

pub fn execute_sql(db: &DatabaseHandle, sql: Option<&str>, timeout_seconds: f64) -> ExecutionOutcome {
    execute_sql_capped(db, sql, timeout_seconds, ROW_CAP)
}

pub fn execute_sql_capped(
    db: &DatabaseHandle,
    sql: Option<&str>,
    timeout_seconds: f64,
    row_cap: usize,
) -> ExecutionOutcome {
    let start = Instant::now();
    let mut outcome = run(db, sql, timeout_seconds, row_cap, start);
    outcome.elapsed_seconds = start.elapsed().as_secs_f64();
    outcome
}

fn run(db: &DatabaseHandle, sql: Option<&str>, timeout_seconds: f64, row_cap: usize, start: Instant) -> ExecutionOutcome {
    let sql = match sql.map(str::trim) {
        Some(s) if !s.is_empty() && !s.trim_end_matches(';').trim().is_empty() => s,
        _ => return ExecutionOutcome::empty_prediction(),
    };
    if !matches!(first_keyword(sql).as_str(), "SELECT" | "WITH" | "VALUES" | "(") {
        return ExecutionOutcome::failed(ExecStatus::SqlError, "only read-only queries are allowed");
    }
    let conn = match db.connect() {
        Ok(c) => c,
        Err(e) => return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string()),
    };
    let deadline = start + Duration::from_secs_f64(timeout_seconds.max(0.0));
    if let Err(e) = conn.progress_handler(1000, Some(move || Instant::now() >= deadline)) {
        return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string());
    }
    let timed_out = || Instant::now() >= deadline;

    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) if timed_out() => return ExecutionOutcome::failed(ExecStatus::Timeout, e.to_string()),
        Err(e) => return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string()),
    };
    if !stmt.readonly() {
        return ExecutionOutcome::failed(ExecStatus::SqlError, "only read-only queries are allowed");
    }
    let column_count = stmt.column_count();
    let mut rows_out = Vec::new();
    let mut overflow = false;
    let mut rows = match stmt.query([]) {
        Ok(r) => r,
        Err(e) => return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string()),
    };
    loop {
        match rows.next() {
            Ok(Some(row)) => {
                if overflow || rows_out.len() >= row_cap {
                    // keep stepping so a runaway query still reaches the deadline
                    overflow = true;
                    rows_out.clear();
                    continue;
                }
                let mut cells = Vec::with_capacity(column_count);
                for i in 0..column_count {
                    let cell = match row.get_ref(i) {
                        Ok(ValueRef::Null) => Cell::Null,
                        Ok(ValueRef::Integer(v)) => Cell::Integer(v),
                        Ok(ValueRef::Real(v)) => Cell::Real(v),
                        Ok(ValueRef::Text(t)) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                        Ok(ValueRef::Blob(b)) => Cell::Blob {
                            blob_sha256: hex::encode(Sha256::digest(b)),
                        },
                        Err(e) => return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string()),
                    };
                    cells.push(cell);
                }
                rows_out.push(cells);
            }
            Ok(None) => break,
            Err(e) if timed_out() => return ExecutionOutcome::failed(ExecStatus::Timeout, e.to_string()),
            Err(e) => return ExecutionOutcome::failed(ExecStatus::SqlError, e.to_string()),
        }
    }
    if overflow {
        return ExecutionOutcome::failed(ExecStatus::SqlError, "result too large");
    }
    ExecutionOutcome::ok(rows_out, column_count)
}

/// True when the outermost query has an ORDER BY.
pub fn is_order_sensitive(gold_sql: &str) -> bool {
    match parse_sql(gold_sql) {
        Ok(ast) => !ast.query.order_by.is_empty(),
        Err(_) => textual_top_level_order_by(gold_sql),
    }
}

fn textual_top_level_order_by(sql: &str) -> bool {
    let mut depth = 0i32;
    let mut words: Vec<String> = Vec::new();
    let mut chars = sql.chars().peekable();
    let mut word = String::new();
    let flush = |word: &mut String, words: &mut Vec<String>, depth: i32| {
        if !word.is_empty() {
            if depth == 0 {
                words.push(word.to_ascii_uppercase());
            }
            word.clear();
        }
    };
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' | '`' => {
                flush(&mut word, &mut words, depth);
                for d in chars.by_ref() {
                    if d == c {
                        break;
                    }
                }
            }
            '[' => {
                flush(&mut word, &mut words, depth);
                for d in chars.by_ref() {
                    if d == ']' {
                        break;
                    }
                }
            }
            '(' => {
                flush(&mut word, &mut words, depth);
                depth += 1;
            }
            ')' => {
                flush(&mut word, &mut words, depth);
                depth -= 1;
            }
            c if c.is_alphanumeric() || c == '_' => word.push(c),
            _ => {
                flush(&mut word, &mut words, depth);
                if depth == 0 {
                    words.push(String::new());
                }
            }
        }
    }
    flush(&mut word, &mut words, depth);
    let words: Vec<&String> = words.iter().filter(|w| !w.is_empty()).collect();
    words.windows(2).any(|w| w[0] == "ORDER" && w[1] == "BY")
}

pub fn compare_results(pred: &ExecutionOutcome, gold: &ExecutionOutcome, order_sensitive: bool) -> bool {
    let (Some(p), Some(g)) = (&pred.rows, &gold.rows) else {
        return false;
    };
    if !pred.is_ok() || !gold.is_ok() || pred.column_count != gold.column_count || p.len() != g.len() {
        return false;
    }
    if order_sensitive {
        return p.iter().zip(g).all(|(a, b)| rows_equal(a, b));
    }
    let mut ps: Vec<&Vec<Cell>> = p.iter().collect();
    let mut gs: Vec<&Vec<Cell>> = g.iter().collect();
    ps.sort_by(|a, b| row_order(a, b));
    gs.sort_by(|a, b| row_order(a, b));
    if ps.iter().zip(&gs).all(|(a, b)| rows_equal(a, b)) {
        return true;
    }
    // tolerance is not transitive, so sorted alignment can miss a valid pairing
    let has_real = |rows: &[&Vec<Cell>]| rows.iter().any(|r| r.iter().any(|c| matches!(c, Cell::Real(_))));
    if p.len() <= MATCHING_LIMIT && (has_real(&ps) || has_real(&gs)) {
        return perfect_matching(&ps, &gs);
    }
    false
}

/// Kuhn's augmenting-path bipartite matching between rows under `rows_equal`.
fn perfect_matching(a: &[&Vec<Cell>], b: &[&Vec<Cell>]) -> bool {
    let adj: Vec<Vec<usize>> = a
        .iter()
        .map(|ra| (0..b.len()).filter(|&j| rows_equal(ra, b[j])).collect())
        .collect();
    if adj.iter().any(Vec::is_empty) {
        return false;
    }
    let mut match_b: Vec<Option<usize>> = vec![None; b.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], match_b: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if match_b[j].is_none_or(|k| augment(k, adj, seen, match_b)) {
                match_b[j] = Some(i);
                return true;
            }
        }
        false
    }
    for i in 0..a.len() {
        let mut seen = vec![false; b.len()];
        if !augment(i, &adj, &mut seen, &mut match_b) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResultSignature(pub [u8; 32]);

impl ResultSignature {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn is_failure(&self) -> bool {
        [ExecStatus::SqlError, ExecStatus::Timeout, ExecStatus::EmptyPrediction]
            .iter()
            .any(|s| *self == status_signature(*s))
    }
}

impl fmt::Display for ResultSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ResultSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ResultSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("signature must be 32 bytes"))?;
        Ok(ResultSignature(arr))
    }
}

fn status_signature(status: ExecStatus) -> ResultSignature {
    ResultSignature(Sha256::digest(format!("status:{}", status.as_str())).into())
}

/// Grid key for a real: values sharing a key are within tolerance of each other.
fn real_key(x: f64) -> String {
    if !x.is_finite() {
        return format!("R{x}");
    }
    let mag = x.abs();
    if mag <= 1.0 {
        format!("Rs:{}", (x / REAL_TOLERANCE).round() as i64)
    } else {
        let e = mag.log2().floor() as i32;
        let width = REAL_TOLERANCE * 2f64.powi(e);
        format!("R{e}:{}", (x / width).round() as i64)
    }
}

/// Below this magnitude the grid is finer than 1, so integers keep distinct
/// keys and share them with equal reals; above it integral values are keyed
/// exactly.
const GRID_INT_LIMIT: f64 = (1u64 << 20) as f64;

fn cell_key(c: &Cell) -> String {
    match c {
        Cell::Null => "N".into(),
        Cell::Integer(i) if (*i as f64).abs() < GRID_INT_LIMIT => real_key(*i as f64),
        Cell::Integer(i) => format!("I{i}"),
        Cell::Real(r) if r.fract() == 0.0 && r.abs() >= GRID_INT_LIMIT && r.abs() < 9.0e18 => {
            format!("I{}", *r as i64)
        }
        Cell::Real(r) => real_key(*r),
        Cell::Text(t) => {
            let t = t.trim_end();
            format!("T{}:{t}", t.len())
        }
        Cell::Blob { blob_sha256 } => format!("B{blob_sha256}"),
    }
}

pub fn result_signature(outcome: &ExecutionOutcome, order_sensitive: bool) -> ResultSignature {
    let rows = match (&outcome.rows, outcome.status) {
        (Some(rows), ExecStatus::Ok) => rows,
        _ => return status_signature(outcome.status),
    };
    let mut keys: Vec<String> = rows
        .iter()
        .map(|r| r.iter().map(cell_key).collect::<Vec<_>>().join("\u{1f}"))
        .collect();
    if !order_sensitive {
        keys.sort();
    }
    let mut h = Sha256::new();
    h.update(format!("ok:{}:{}\n", outcome.column_count, rows.len()));
    for k in keys {
        h.update(k.len().to_le_bytes());
        h.update(k.as_bytes());
    }
    ResultSignature(h.finalize().into())
}

/// Hex sha256 of the database file.
pub fn database_digest(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
