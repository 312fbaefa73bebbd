//! Benchmark ingestion (Spider and BIRD layouts) and the database registry.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not a JSON array of records: {message}")]
    Format { path: PathBuf, message: String },
    #[error("record {index}: {message}")]
    Ingest { index: usize, message: String },
    #[error("unknown benchmark format {0:?} (expected spider or bird)")]
    UnknownFormat(String),
    #[error("database {db_id:?} not found at {path}")]
    Registry { db_id: String, path: PathBuf },
    #[error("database {db_id:?} failed to open: {message}")]
    Open { db_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
    Unlabeled,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Simple,
        Difficulty::Moderate,
        Difficulty::Challenging,
        Difficulty::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Challenging => "challenging",
            Difficulty::Unlabeled => "unlabeled",
        }
    }

    /// Case-insensitive; unknown labels map to `Unlabeled` with a warning.
    pub fn from_label(label: &str) -> Difficulty {
        match label.trim().to_ascii_lowercase().as_str() {
            "simple" => Difficulty::Simple,
            "moderate" => Difficulty::Moderate,
            "challenging" => Difficulty::Challenging,
            other => {
                log::warn!("unknown difficulty label {other:?}, treating as unlabeled");
                Difficulty::Unlabeled
            }
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkFormat {
    Spider,
    Bird,
}

impl FromStr for BenchmarkFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "spider" => Ok(BenchmarkFormat::Spider),
            "bird" => Ok(BenchmarkFormat::Bird),
            _ => Err(CorpusError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for BenchmarkFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchmarkFormat::Spider => "spider",
            BenchmarkFormat::Bird => "bird",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub item_id: String,
    pub question: String,
    pub evidence: Option<String>,
    pub db_id: String,
    pub gold_sql: String,
    pub difficulty: Difficulty,
}

fn required_str(rec: &Map<String, Value>, index: usize, field: &str) -> Result<String, CorpusError> {
    match rec.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CorpusError::Ingest {
            index,
            message: format!("field {field:?} is not a string"),
        }),
        None => Err(CorpusError::Ingest {
            index,
            message: format!("missing field {field:?}"),
        }),
    }
}

/// Parses a benchmark file. Item ids come from BIRD's `question_id` when present,
/// otherwise from the record index.
pub fn load_benchmark(path: &Path, format: BenchmarkFormat) -> Result<Vec<BenchmarkItem>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_benchmark(&text, format).map_err(|e| match e {
        CorpusError::Format { message, .. } => CorpusError::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_benchmark(text: &str, format: BenchmarkFormat) -> Result<Vec<BenchmarkItem>, CorpusError> {
    let records: Vec<Value> = serde_json::from_str(text).map_err(|e| CorpusError::Format {
        path: PathBuf::new(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(records.len());
    for (index, value) in records.iter().enumerate() {
        let rec = value.as_object().ok_or_else(|| CorpusError::Ingest {
            index,
            message: "record is not an object".into(),
        })?;
        let question = required_str(rec, index, "question")?;
        let db_id = required_str(rec, index, "db_id")?;
        let (gold_sql, evidence, difficulty) = match format {
            BenchmarkFormat::Spider => (required_str(rec, index, "query")?, None, Difficulty::Unlabeled),
            BenchmarkFormat::Bird => {
                let evidence = match rec.get("evidence") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(required_str(rec, index, "evidence")?),
                };
                let difficulty = match rec.get("difficulty") {
                    None | Some(Value::Null) => Difficulty::Unlabeled,
                    Some(_) => Difficulty::from_label(&required_str(rec, index, "difficulty")?),
                };
                (required_str(rec, index, "SQL")?, evidence, difficulty)
            }
        };
        if gold_sql.trim().is_empty() {
            return Err(CorpusError::Ingest {
                index,
                message: "gold SQL is empty".into(),
            });
        }
        let item_id = match rec.get("question_id") {
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::String(s)) => s.clone(),
            _ => index.to_string(),
        };
        if !seen.insert(item_id.clone()) {
            return Err(CorpusError::Ingest {
                index,
                message: format!("duplicate item id {item_id:?}"),
            });
        }
        items.push(BenchmarkItem {
            item_id,
            question,
            evidence,
            db_id,
            gold_sql,
            difficulty,
        });
    }
    Ok(items)
}

/// Serializes items back to their source layout.
pub fn to_source_json(items: &[BenchmarkItem], format: BenchmarkFormat) -> Value {
    let records = items
        .iter()
        .map(|it| {
            let mut rec = Map::new();
            rec.insert("question".into(), it.question.clone().into());
            rec.insert("db_id".into(), it.db_id.clone().into());
            match format {
                BenchmarkFormat::Spider => {
                    rec.insert("query".into(), it.gold_sql.clone().into());
                }
                BenchmarkFormat::Bird => {
                    rec.insert("SQL".into(), it.gold_sql.clone().into());
                    if let Some(e) = &it.evidence {
                        rec.insert("evidence".into(), e.clone().into());
                    }
                    if it.difficulty != Difficulty::Unlabeled {
                        rec.insert("difficulty".into(), it.difficulty.as_str().into());
                    }
                    rec.insert("question_id".into(), it.item_id.clone().into());
                }
            }
            Value::Object(rec)
        })
        .collect();
    Value::Array(records)
}

/// Buckets in the fixed order simple, moderate, challenging, unlabeled. All four
/// buckets are always present.
pub fn stratify(items: &[BenchmarkItem]) -> Vec<(Difficulty, Vec<&BenchmarkItem>)> {
    stratify_by(items, |it| it.difficulty)
}

pub fn stratify_by<T>(items: &[T], key: impl Fn(&T) -> Difficulty) -> Vec<(Difficulty, Vec<&T>)> {
    Difficulty::ALL
        .iter()
        .map(|d| (*d, items.iter().filter(|it| key(it) == *d).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Sqlite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DbLayout {
    /// `root/<db_id>/<db_id>.sqlite`
    #[default]
    Nested,
    /// `root/<db_id>.sqlite`
    Flat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseHandle {
    pub db_id: String,
    pub path: PathBuf,
    pub dialect: Dialect,
}

impl DatabaseHandle {
    /// Opens an existing file read-only, verifying it is a readable database.
    pub fn open(db_id: impl Into<String>, path: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let handle = DatabaseHandle {
            db_id: db_id.into(),
            path: path.into(),
            dialect: Dialect::Sqlite,
        };
        if !handle.path.is_file() {
            return Err(CorpusError::Registry {
                db_id: handle.db_id,
                path: handle.path,
            });
        }
        let open_err = |e: rusqlite::Error| CorpusError::Open {
            db_id: handle.db_id.clone(),
            message: e.to_string(),
        };
        let conn = handle.connect().map_err(open_err)?;
        conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))
            .map_err(open_err)?;
        let probe: i64 = conn.query_row("SELECT 1", [], |r| r.get(0)).map_err(open_err)?;
        debug_assert_eq!(probe, 1);
        Ok(handle)
    }

    /// New read-only connection. Never shared between threads.
    pub fn connect(&self) -> rusqlite::Result<Connection> {
        let conn = Connection::open_with_flags(
            &self.path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )?;
        conn.pragma_update(None, "query_only", true)?;
        Ok(conn)
    }
}

pub fn database_path(db_id: &str, root: &Path, layout: DbLayout) -> PathBuf {
    match layout {
        DbLayout::Nested => root.join(db_id).join(format!("{db_id}.sqlite")),
        DbLayout::Flat => root.join(format!("{db_id}.sqlite")),
    }
}

pub fn load_database(db_id: &str, root: &Path) -> Result<DatabaseHandle, CorpusError> {
    load_database_with(db_id, root, DbLayout::Nested)
}

pub fn load_database_with(db_id: &str, root: &Path, layout: DbLayout) -> Result<DatabaseHandle, CorpusError> {
    DatabaseHandle::open(db_id, database_path(db_id, root, layout))
}
