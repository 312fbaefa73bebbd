//! Schema extraction, annotated DDL rendering, value retrieval and prompt assembly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;
use std::path::Path;

use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::corpus::{BenchmarkItem, DatabaseHandle};

const PROMPT_TEMPLATE: &str = include_str!("prompt_template.txt");

pub const DEFAULT_VALUES_PER_COLUMN: usize = 3;
pub const DEFAULT_TOP_K: usize = 3;
pub const MATCH_THRESHOLD: f64 = 0.6;
/// Distinct values pulled per column when scoring retrieval candidates.
const CANDIDATE_LIMIT: usize = 2000;
/// Representative values kept per column at extraction time.
const SAMPLE_LIMIT: usize = 10;
const SAMPLE_MAX_CHARS: usize = 100;
/// Literals shorter than this must equal a question n-gram outright.
const MIN_FUZZY_LEN: usize = 4;
const MAX_NGRAM: usize = 4;

#[derive(Debug, thiserror::Error)]
#[error("schema extraction failed for {db_id:?}: {message}")]
pub struct SchemaError {
    pub db_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnInfo {
    pub name: String,
    pub decl_type: String,
    pub description: Option<String>,
}

impl ColumnInfo {
    /// TEXT affinity, or no declared type at all.
    pub fn is_textual(&self) -> bool {
        let t = self.decl_type.to_ascii_uppercase();
        t.is_empty() || t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: String,
    pub foreign_table: String,
    pub foreign_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ColumnInfo>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

/// `(table, column)` with catalog spelling.
pub type ColumnRef = (String, String);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaContext {
    pub db_id: String,
    pub tables: Vec<TableInfo>,
    pub ddl_text: String,
    pub matched_values: BTreeMap<ColumnRef, Vec<String>>,
    /// Representative values per column, in first-seen order.
    pub sample_values: BTreeMap<ColumnRef, Vec<String>>,
}

impl SchemaContext {
    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DdlOptions {
    pub include_values: bool,
    pub values_per_column: usize,
    pub include_descriptions: bool,
}

impl Default for DdlOptions {
    fn default() -> Self {
        DdlOptions {
            include_values: true,
            values_per_column: DEFAULT_VALUES_PER_COLUMN,
            include_descriptions: true,
        }
    }
}

impl DdlOptions {
    pub fn plain() -> Self {
        DdlOptions {
            include_values: false,
            values_per_column: 0,
            include_descriptions: false,
        }
    }
}

/// Column descriptions keyed by lowercased `(table, column)`.
pub type Descriptions = HashMap<(String, String), String>;

/// Reads `root/<db_id>/database_description/<table>.csv` files if the directory
/// exists. Files that are not UTF-8 are decoded lossily.
pub fn load_descriptions(root: &Path, db_id: &str) -> Option<Descriptions> {
    let dir = root.join(db_id).join("database_description");
    let entries = std::fs::read_dir(&dir).ok()?;
    let mut out = Descriptions::new();
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(table) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Ok(bytes) = std::fs::read(&path) else {
            log::warn!("cannot read {}", path.display());
            continue;
        };
        let text = String::from_utf8_lossy(&bytes);
        let text = text.trim_start_matches('\u{feff}');
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let Ok(headers) = reader.headers().cloned() else {
            continue;
        };
        let col_of = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let (Some(ci), Some(di)) = (col_of("original_column_name"), col_of("column_description")) else {
            log::warn!("{} lacks description columns", path.display());
            continue;
        };
        for rec in reader.records().flatten() {
            let (Some(col), Some(desc)) = (rec.get(ci), rec.get(di)) else {
                continue;
            };
            let desc = desc.split_whitespace().collect::<Vec<_>>().join(" ");
            if !col.trim().is_empty() && !desc.is_empty() {
                out.insert((table.to_lowercase(), col.trim().to_lowercase()), desc);
            }
        }
    }
    Some(out)
}

pub fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn ddl_ident(name: &str) -> String {
    let simple = name
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if simple {
        name.to_string()
    } else {
        format!("`{}`", name.replace('`', "``"))
    }
}

fn value_text(v: ValueRef<'_>) -> Option<String> {
    match v {
        ValueRef::Null | ValueRef::Blob(_) => None,
        ValueRef::Integer(i) => Some(i.to_string()),
        ValueRef::Real(r) => Some(r.to_string()),
        ValueRef::Text(t) => Some(String::from_utf8_lossy(t).into_owned()),
    }
}

pub fn extract_schema(db: &DatabaseHandle, descriptions: Option<&Descriptions>) -> Result<SchemaContext, SchemaError> {
    let err = |e: rusqlite::Error| SchemaError {
        db_id: db.db_id.clone(),
        message: e.to_string(),
    };
    let conn = db.connect().map_err(err)?;
    let mut stmt = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")
        .map_err(err)?;
    let names: Vec<String> = stmt
        .query_map([], |r| r.get(0))
        .map_err(err)?
        .collect::<Result<_, _>>()
        .map_err(err)?;
    drop(stmt);

    let mut tables = Vec::new();
    let mut sample_values = BTreeMap::new();
    for name in &names {
        let table = read_table(&conn, name, descriptions).map_err(err)?;
        for col in &table.columns {
            match sample_column(&conn, name, &col.name, SAMPLE_LIMIT) {
                Ok(vals) if !vals.is_empty() => {
                    sample_values.insert((name.clone(), col.name.clone()), vals);
                }
                Ok(_) => {}
                Err(e) => log::warn!("sampling {name}.{} failed: {e}", col.name),
            }
        }
        tables.push(table);
    }
    // foreign keys without an explicit target column point at the primary key
    let pks: HashMap<String, Vec<String>> = tables
        .iter()
        .map(|t| (t.name.to_lowercase(), t.primary_key.clone()))
        .collect();
    for t in &mut tables {
        for fk in &mut t.foreign_keys {
            if fk.foreign_column.is_empty() {
                if let Some(pk) = pks.get(&fk.foreign_table.to_lowercase()).and_then(|pk| pk.first()) {
                    fk.foreign_column = pk.clone();
                }
            }
        }
    }
    Ok(SchemaContext {
        db_id: db.db_id.clone(),
        tables,
        ddl_text: String::new(),
        matched_values: BTreeMap::new(),
        sample_values,
    })
}

fn read_table(conn: &Connection, name: &str, descriptions: Option<&Descriptions>) -> rusqlite::Result<TableInfo> {
    let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(name)))?;
    let mut pk: Vec<(i64, String)> = Vec::new();
    let columns = stmt
        .query_map([], |r| {
            let col: String = r.get(1)?;
            let ty: Option<String> = r.get(2)?;
            let pk_pos: i64 = r.get(5)?;
            Ok((col, ty.unwrap_or_default(), pk_pos))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?
        .into_iter()
        .map(|(col, ty, pk_pos)| {
            if pk_pos > 0 {
                pk.push((pk_pos, col.clone()));
            }
            let description = descriptions
                .and_then(|d| d.get(&(name.to_lowercase(), col.to_lowercase())))
                .cloned();
            ColumnInfo {
                name: col,
                decl_type: ty,
                description,
            }
        })
        .collect();
    pk.sort();
    let mut stmt = conn.prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(name)))?;
    let foreign_keys = stmt
        .query_map([], |r| {
            Ok(ForeignKey {
                foreign_table: r.get(2)?,
                column: r.get(3)?,
                foreign_column: r.get::<_, Option<String>>(4)?.unwrap_or_default(),
            })
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    Ok(TableInfo {
        name: name.to_string(),
        columns,
        primary_key: pk.into_iter().map(|(_, c)| c).collect(),
        foreign_keys,
    })
}

fn sample_column(conn: &Connection, table: &str, column: &str, limit: usize) -> rusqlite::Result<Vec<String>> {
    let sql = format!(
        "SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL LIMIT {n}",
        c = quote_ident(column),
        t = quote_ident(table),
        n = limit * 4
    );
    let mut stmt = conn.prepare(&sql)?;
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        if let Some(v) = value_text(row.get_ref(0)?) {
            if v.chars().count() <= SAMPLE_MAX_CHARS && !v.trim().is_empty() {
                out.push(v);
            }
        }
        if out.len() >= limit {
            break;
        }
    }
    Ok(out)
}

fn render_value(v: &str, textual: bool) -> String {
    if textual {
        format!("'{}'", v.replace('\'', "''"))
    } else {
        v.to_string()
    }
}

pub fn render_ddl(schema: &SchemaContext, options: &DdlOptions) -> String {
    let mut out = String::new();
    for (ti, table) in schema.tables.iter().enumerate() {
        if ti > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "CREATE TABLE {} (", ddl_ident(&table.name));
        let mut constraints = Vec::new();
        if !table.primary_key.is_empty() {
            let cols: Vec<_> = table.primary_key.iter().map(|c| ddl_ident(c)).collect();
            constraints.push(format!("PRIMARY KEY ({})", cols.join(", ")));
        }
        for fk in &table.foreign_keys {
            constraints.push(format!(
                "FOREIGN KEY ({}) REFERENCES {}({})",
                ddl_ident(&fk.column),
                ddl_ident(&fk.foreign_table),
                ddl_ident(&fk.foreign_column)
            ));
        }
        let n_lines = table.columns.len() + constraints.len();
        let mut line_no = 0;
        for col in &table.columns {
            line_no += 1;
            let mut line = format!("  {}", ddl_ident(&col.name));
            if !col.decl_type.is_empty() {
                line.push(' ');
                line.push_str(&col.decl_type);
            }
            if line_no < n_lines {
                line.push(',');
            }
            let key = (table.name.clone(), col.name.clone());
            let mut notes = Vec::new();
            if options.include_descriptions {
                if let Some(d) = &col.description {
                    notes.push(d.clone());
                }
            }
            if options.include_values && options.values_per_column > 0 {
                let mut vals: Vec<&String> = Vec::new();
                let matched = schema.matched_values.get(&key).into_iter().flatten();
                let samples = schema.sample_values.get(&key).into_iter().flatten();
                for v in matched.chain(samples) {
                    if !vals.contains(&v) {
                        vals.push(v);
                    }
                }
                vals.truncate(options.values_per_column);
                if !vals.is_empty() {
                    let rendered: Vec<_> = vals.iter().map(|v| render_value(v, col.is_textual())).collect();
                    notes.push(format!("examples: {}", rendered.join(", ")));
                }
            }
            if !notes.is_empty() {
                line.push_str(" -- ");
                line.push_str(&notes.join("; "));
            }
            out.push_str(&line);
            out.push('\n');
        }
        for c in constraints {
            line_no += 1;
            out.push_str("  ");
            out.push_str(&c);
            if line_no < n_lines {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str(");\n");
    }
    out
}

fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '%' && c != '$')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// All word n-grams (n in 1..=4) of the question, lowercased.
pub fn question_ngrams(question: &str) -> Vec<String> {
    let words = normalize_words(question);
    let mut out = Vec::new();
    for n in 1..=MAX_NGRAM {
        for w in words.windows(n) {
            out.push(w.join(" "));
        }
    }
    out
}

/// Longest substring shared by `lit` and `text` that spans at most
/// `max_spaces` spaces of `text`. Lengths are in chars.
fn longest_common_window(lit: &[char], text: &[char], max_spaces: usize) -> usize {
    let (n, m) = (lit.len(), text.len());
    let mut best = 0;
    // walk each diagonal, tracking the current run of equal characters
    for d in -(n as isize - 1)..(m as isize) {
        let (mut i, mut j) = if d >= 0 { (0usize, d as usize) } else { ((-d) as usize, 0usize) };
        let mut run_start = j;
        let mut spaces: std::collections::VecDeque<usize> = Default::default();
        while i < n && j < m {
            if lit[i] == text[j] {
                if text[j] == ' ' {
                    spaces.push_back(j);
                    if spaces.len() > max_spaces {
                        let s = spaces.pop_front().unwrap();
                        run_start = run_start.max(s + 1);
                    }
                }
                best = best.max(j + 1 - run_start);
            } else {
                run_start = j + 1;
                spaces.clear();
            }
            i += 1;
            j += 1;
        }
    }
    best
}

/// Retrieval score of a column literal against a question: longest common
/// substring with any question n-gram, divided by the literal length.
pub fn match_score(question: &str, literal: &str) -> f64 {
    let lit: Vec<char> = literal.to_lowercase().chars().collect();
    if lit.is_empty() || lit.iter().all(|c| c.is_whitespace()) {
        return 0.0;
    }
    let words = normalize_words(question);
    if lit.len() < MIN_FUZZY_LEN {
        let lit: String = lit.iter().collect();
        return if question_ngrams(question).contains(&lit) { 1.0 } else { 0.0 };
    }
    // every n-gram lies inside the normalized text and spans at most MAX_NGRAM-1 spaces
    let text: Vec<char> = words.join(" ").chars().collect();
    let lcs = longest_common_window(&lit, &text, MAX_NGRAM - 1);
    lcs as f64 / lit.len() as f64
}

/// Populates `matched_values` with up to `top_k` literals per textual column.
/// Columns that fail to sample are skipped with a warning.
pub fn retrieve_values(question: &str, db: &DatabaseHandle, schema: &SchemaContext, top_k: usize) -> SchemaContext {
    let mut ctx = schema.clone();
    ctx.matched_values.clear();
    let top_k = top_k.max(1);
    let conn = match db.connect() {
        Ok(c) => c,
        Err(e) => {
            log::warn!("value retrieval skipped for {}: {e}", db.db_id);
            return ctx;
        }
    };
    for table in &schema.tables {
        for col in table.columns.iter().filter(|c| c.is_textual()) {
            let literals = match candidate_literals(&conn, &table.name, &col.name) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("value retrieval skipped {}.{}: {e}", table.name, col.name);
                    continue;
                }
            };
            let mut scored: Vec<(f64, String)> = literals
                .into_iter()
                .map(|l| (match_score(question, &l), l))
                .filter(|(s, _)| *s >= MATCH_THRESHOLD)
                .collect();
            scored.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.chars().count().cmp(&b.1.chars().count()))
                    .then_with(|| a.1.cmp(&b.1))
            });
            scored.truncate(top_k);
            if !scored.is_empty() {
                ctx.matched_values.insert(
                    (table.name.clone(), col.name.clone()),
                    scored.into_iter().map(|(_, l)| l).collect(),
                );
            }
        }
    }
    ctx
}

fn candidate_literals(conn: &Connection, table: &str, column: &str) -> rusqlite::Result<Vec<String>> {
    let sql = format!(
        "SELECT DISTINCT {c} FROM {t} WHERE typeof({c}) = 'text' LIMIT {CANDIDATE_LIMIT}",
        c = quote_ident(column),
        t = quote_ident(table)
    );
    let mut stmt = conn.prepare(&sql)?;
    let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
    rows.collect()
}

/// The question slot text: the question, followed by evidence when present.
pub fn question_text(item: &BenchmarkItem) -> String {
    match item.evidence.as_deref().map(str::trim) {
        Some(e) if !e.is_empty() => format!("{}\nEvidence: {}", item.question, e),
        _ => item.question.clone(),
    }
}

pub fn build_prompt(item: &BenchmarkItem, ctx: &SchemaContext) -> String {
    PROMPT_TEMPLATE
        .replace("{db_engine}", "SQLite")
        .replace("{schema}", ctx.ddl_text.trim_end())
        .replace("{question}", &question_text(item))
}

/// Builds the full context for an item: schema, optional retrieval, rendered DDL.
pub fn build_context(
    item: &BenchmarkItem,
    db: &DatabaseHandle,
    schema: &SchemaContext,
    use_retriever: bool,
    options: &DdlOptions,
) -> SchemaContext {
    let mut ctx = if use_retriever {
        retrieve_values(&question_text(item), db, schema, DEFAULT_TOP_K)
    } else {
        let mut c = schema.clone();
        c.matched_values.clear();
        c
    };
    let opts = if use_retriever { *options } else { DdlOptions { include_values: false, ..*options } };
    ctx.ddl_text = render_ddl(&ctx, &opts);
    ctx
}
