//! Fixture databases, benchmarks and mock scripts shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nl2sql_eval::context::{build_context, build_prompt, extract_schema, DdlOptions, SchemaContext};
use nl2sql_eval::corpus::{load_database, BenchmarkItem, DatabaseHandle, Difficulty};
use nl2sql_eval::gateway::{Gateway, MockBackend, MockEntry, MockFixture, PromptMatch};
use rusqlite::Connection;
use sha2::{Digest, Sha256};

pub const CODEBASE: &str = "
CREATE TABLE users (Id INTEGER PRIMARY KEY, DisplayName TEXT, Reputation INTEGER);
CREATE TABLE posts (Id INTEGER PRIMARY KEY, OwnerUserId INTEGER REFERENCES users(Id), Title TEXT, Score INTEGER);
CREATE TABLE comments (Id INTEGER PRIMARY KEY, PostId INTEGER REFERENCES posts(Id), UserId INTEGER REFERENCES users(Id), Score INTEGER, Text TEXT);
INSERT INTO users VALUES (1, 'Neil McGuigan', 120), (2, 'Ann Lee', 45), (3, 'Bo', 7);
INSERT INTO posts VALUES (10, 1, 'Indexing sparse tables', 12), (11, 1, 'Window functions', 3), (12, 2, 'Null semantics', 8);
INSERT INTO comments VALUES
  (100, 10, 2, 10, 'meh'), (101, 10, 3, 75, 'great'), (102, 11, 2, 20, 'wrong'),
  (103, 12, 1, 30, 'nope'), (104, 12, 1, 90, 'thanks'), (105, 11, 3, 55, 'unclear');
";

pub const SCHOOLS: &str = "
CREATE TABLE schools (CDSCode TEXT PRIMARY KEY, District TEXT, StatusType TEXT);
CREATE TABLE frpm (CDSCode TEXT PRIMARY KEY REFERENCES schools(CDSCode), `School Name` TEXT,
  `Percent (%) Eligible Free (K-12)` REAL, `Free Meal Count (K-12)` REAL, `Enrollment (K-12)` REAL);
CREATE TABLE satscores (cds TEXT PRIMARY KEY REFERENCES schools(CDSCode), sname TEXT, dname TEXT,
  NumGE1500 INTEGER, AvgScrRead INTEGER);
INSERT INTO schools VALUES ('01', 'Alameda Unified', 'Active'), ('02', 'Berkeley Unified', 'Active'),
  ('03', 'Closed District', 'Closed'), ('04', 'Dublin Unified', 'Active');
INSERT INTO frpm VALUES ('01', 'Alameda High', 0.35, 350, 1000), ('02', 'Berkeley High', 0.05, 60, 1200),
  ('03', 'Old School', 0.5, 100, 200), ('04', 'Dublin High', 0.2, 200, 1000);
INSERT INTO satscores VALUES ('01', 'Alameda High', 'Alameda Unified', 30, 520),
  ('02', 'Berkeley High', 'Berkeley Unified', 80, 560), ('03', 'Old School', 'Closed District', 0, 600),
  ('04', 'Dublin High', 'Dublin Unified', 0, 500);
";

pub const FORMULA: &str = "
CREATE TABLE circuits (circuitId INTEGER PRIMARY KEY, name TEXT, location TEXT, country TEXT);
CREATE TABLE races (raceId INTEGER PRIMARY KEY, year INTEGER, name TEXT, circuitId INTEGER REFERENCES circuits(circuitId));
CREATE TABLE drivers (driverId INTEGER PRIMARY KEY, forename TEXT, surname TEXT);
CREATE TABLE results (resultId INTEGER PRIMARY KEY, driverId INTEGER REFERENCES drivers(driverId), fastestLapTime TEXT);
INSERT INTO circuits VALUES (1, 'Albert Park Grand Prix Circuit', 'Melbourne', 'Australia'),
  (2, 'Silverstone Circuit', 'Silverstone', 'UK'), (3, 'Circuit de Monaco', 'Monte-Carlo', 'Monaco'),
  (4, 'Autodromo Nazionale di Monza', 'Monza', 'Italy'), (5, 'Brands Hatch', 'Kent', 'UK');
INSERT INTO races VALUES (1, 1950, 'British Grand Prix', 2), (2, 1950, 'Monaco Grand Prix', 3),
  (3, 1950, 'Italian Grand Prix', 4), (4, 1983, 'European Grand Prix', 5), (5, 1996, 'Australian Grand Prix', 1);
INSERT INTO drivers VALUES (1, 'Lewis', 'Hamilton'), (2, 'Max', 'Verstappen');
INSERT INTO results VALUES (1, 1, '1:21.500'), (2, 1, '1:19.250'), (3, 2, '1:20.000');
";

/// Database directory with the nested `<db_id>/<db_id>.sqlite` layout.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        f.add_db("codebase_community", CODEBASE);
        f.add_db("california_schools", SCHOOLS);
        f.add_db("formula_1", FORMULA);
        f
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn add_db(&self, db_id: &str, ddl: &str) -> PathBuf {
        let dir = self.root().join(db_id);
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{db_id}.sqlite"));
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(ddl).unwrap();
        path
    }

    pub fn db(&self, db_id: &str) -> DatabaseHandle {
        load_database(db_id, self.root()).unwrap()
    }

    pub fn schema(&self, db_id: &str) -> SchemaContext {
        extract_schema(&self.db(db_id), None).unwrap()
    }

    pub fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.root().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

pub fn item(id: &str, db_id: &str, question: &str, gold: &str, difficulty: Difficulty) -> BenchmarkItem {
    BenchmarkItem {
        item_id: id.into(),
        question: question.into(),
        evidence: None,
        db_id: db_id.into(),
        gold_sql: gold.into(),
        difficulty,
    }
}

/// BIRD-style JSON for `items`.
pub fn bird_json(items: &[BenchmarkItem]) -> String {
    let arr: Vec<serde_json::Value> = items
        .iter()
        .map(|i| {
            serde_json::json!({
                "question_id": i.item_id.parse::<u64>().unwrap(),
                "db_id": i.db_id,
                "question": i.question,
                "evidence": i.evidence.clone().unwrap_or_default(),
                "SQL": i.gold_sql,
                "difficulty": i.difficulty.as_str(),
            })
        })
        .collect();
    serde_json::to_string_pretty(&arr).unwrap()
}

pub fn fenced(sql: &str) -> String {
    format!("<answer>\n```sql\n{sql}\n```\n</answer>")
}

pub fn sha_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The exact prompt the pipeline sends for `item`.
pub fn prompt_for(item: &BenchmarkItem, db: &DatabaseHandle, schema: &SchemaContext, retriever: bool) -> String {
    let ctx = build_context(item, db, schema, retriever, &DdlOptions::default());
    build_prompt(item, &ctx)
}

pub fn hashed(prompt: &str, trajectory: Option<usize>, reply: &str) -> MockEntry {
    MockEntry {
        prompt_match: PromptMatch::Sha256,
        pattern: sha_hex(prompt),
        trajectory_id: trajectory,
        reply: reply.into(),
        usage: None,
        latency_seconds: None,
    }
}

pub fn gateway(entries: Vec<MockEntry>) -> Gateway {
    Gateway::new(
        Box::new(MockBackend::new(MockFixture {
            default_reply: String::new(),
            entries,
        })),
        8,
    )
}
