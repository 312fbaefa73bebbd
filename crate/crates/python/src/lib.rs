//! Python bindings.
//!
//! Structured values (outcomes, labels, benchmark items) cross the boundary as
//! plain dicts and lists with the same shape as the JSON artifacts.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use nl2sql_eval::context::{build_context, build_prompt as core_build_prompt, extract_schema, DdlOptions, SchemaContext};
use nl2sql_eval::corpus::{self, BenchmarkFormat, BenchmarkItem, DatabaseHandle};
use nl2sql_eval::diagnoser::{self, parse_sql};
use nl2sql_eval::executor::{self, ExecutionOutcome};
use nl2sql_eval::{gateway, metrics};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

/// SQL found in a model reply, or None.
#[pyfunction]
fn extract_sql(raw_text: &str) -> Option<String> {
    gateway::extract_sql(raw_text)
}

/// Unbiased pass@k for a pool of `n` with `c` correct.
#[pyfunction]
fn pass_at_k(n: usize, c: usize, k: usize) -> PyResult<f64> {
    metrics::pass_at_k(n, c, k).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (raw_text, backend_usage=None))]
fn count_tokens(raw_text: &str, backend_usage: Option<u64>) -> u64 {
    gateway::count_tokens(raw_text, backend_usage)
}

/// Parses `sql` and renders it back in canonical spacing.
#[pyfunction]
fn normalize_sql(sql: &str) -> PyResult<String> {
    parse_sql(sql).map(|ast| diagnoser::render(&ast)).map_err(value_err)
}

#[pyfunction]
fn is_order_sensitive(gold_sql: &str) -> bool {
    executor::is_order_sensitive(gold_sql)
}

/// Compares two outcome dicts as returned by `Database.execute`.
#[pyfunction]
fn compare_results(pred: &Bound<'_, PyAny>, gold: &Bound<'_, PyAny>, order_sensitive: bool) -> PyResult<bool> {
    let (p, g): (ExecutionOutcome, ExecutionOutcome) = (from_py(pred)?, from_py(gold)?);
    Ok(executor::compare_results(&p, &g, order_sensitive))
}

/// Hex digest used to cluster candidates with equal results.
#[pyfunction]
fn result_signature(outcome: &Bound<'_, PyAny>, order_sensitive: bool) -> PyResult<String> {
    let o: ExecutionOutcome = from_py(outcome)?;
    Ok(executor::result_signature(&o, order_sensitive).to_hex())
}

#[pyfunction]
fn match_score(question: &str, literal: &str) -> f64 {
    nl2sql_eval::context::match_score(question, literal)
}

/// Benchmark items as dicts.
#[pyfunction]
#[pyo3(signature = (path, format="bird"))]
fn load_benchmark<'py>(py: Python<'py>, path: PathBuf, format: &str) -> PyResult<Bound<'py, PyAny>> {
    let format: BenchmarkFormat = format.parse().map_err(value_err)?;
    let items = corpus::load_benchmark(&path, format).map_err(value_err)?;
    to_py(py, &items)
}

/// A read-only benchmark database.
#[pyclass(frozen)]
struct Database {
    handle: DatabaseHandle,
    schema: SchemaContext,
}

#[pymethods]
impl Database {
    #[new]
    fn new(db_id: String, path: PathBuf) -> PyResult<Self> {
        let handle = DatabaseHandle::open(db_id, path).map_err(|e| PyOSError::new_err(e.to_string()))?;
        let schema = extract_schema(&handle, None).map_err(value_err)?;
        Ok(Database { handle, schema })
    }

    /// Opens `<root>/<db_id>/<db_id>.sqlite`, or `<root>/<db_id>.sqlite` when `flat`.
    #[staticmethod]
    #[pyo3(signature = (db_id, root, flat=false))]
    fn load(db_id: &str, root: PathBuf, flat: bool) -> PyResult<Self> {
        let layout = if flat { corpus::DbLayout::Flat } else { corpus::DbLayout::Nested };
        let handle = corpus::load_database_with(db_id, &root, layout).map_err(|e| PyOSError::new_err(e.to_string()))?;
        let descriptions = nl2sql_eval::context::load_descriptions(&root, db_id);
        let schema = extract_schema(&handle, descriptions.as_ref()).map_err(value_err)?;
        Ok(Database { handle, schema })
    }

    #[getter]
    fn db_id(&self) -> &str {
        &self.handle.db_id
    }

    /// Runs `sql` (None counts as an empty prediction) and returns the outcome dict.
    #[pyo3(signature = (sql, timeout_seconds=executor::DEFAULT_TIMEOUT_SECONDS))]
    fn execute<'py>(&self, py: Python<'py>, sql: Option<&str>, timeout_seconds: f64) -> PyResult<Bound<'py, PyAny>> {
        let out = py.detach(|| executor::execute_sql(&self.handle, sql, timeout_seconds));
        to_py(py, &out)
    }

    #[pyo3(signature = (values_per_column=3))]
    fn schema_ddl(&self, values_per_column: usize) -> String {
        let opts = DdlOptions {
            include_values: values_per_column > 0,
            values_per_column,
            include_descriptions: true,
        };
        nl2sql_eval::context::render_ddl(&self.schema, &opts)
    }

    fn table_names(&self) -> Vec<String> {
        self.schema.tables.iter().map(|t| t.name.clone()).collect()
    }

    /// Sha256 of the database file.
    fn digest(&self) -> PyResult<String> {
        executor::database_digest(&self.handle.path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Database({:?}, {:?})", self.handle.db_id, self.handle.path)
    }
}

/// The generation prompt for a benchmark item dict.
#[pyfunction]
#[pyo3(signature = (item, db, use_retriever=false))]
fn build_prompt(item: &Bound<'_, PyAny>, db: &Database, use_retriever: bool) -> PyResult<String> {
    let item: BenchmarkItem = from_py(item)?;
    let ctx = build_context(&item, &db.handle, &db.schema, use_retriever, &DdlOptions::default());
    Ok(core_build_prompt(&item, &ctx))
}

/// Error label dict for a wrong prediction. With a database, both queries are
/// executed first and the schema resolves column owners.
#[pyfunction]
#[pyo3(signature = (pred_sql, gold_sql, db=None))]
fn classify_error<'py>(
    py: Python<'py>,
    pred_sql: Option<&str>,
    gold_sql: &str,
    db: Option<&Database>,
) -> PyResult<Bound<'py, PyAny>> {
    let label = match db {
        Some(db) => {
            let p = executor::execute_sql(&db.handle, pred_sql, executor::DEFAULT_TIMEOUT_SECONDS);
            let g = executor::execute_sql(&db.handle, Some(gold_sql), executor::DEFAULT_TIMEOUT_SECONDS);
            diagnoser::classify_error(pred_sql, gold_sql, &db.schema, Some(&p), Some(&g))
        }
        None => diagnoser::classify_error(pred_sql, gold_sql, &SchemaContext::default(), None, None),
    };
    to_py(py, &label)
}

#[pymodule]
fn pynl2sql(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(extract_sql, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(count_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_sql, m)?)?;
    m.add_function(wrap_pyfunction!(is_order_sensitive, m)?)?;
    m.add_function(wrap_pyfunction!(compare_results, m)?)?;
    m.add_function(wrap_pyfunction!(result_signature, m)?)?;
    m.add_function(wrap_pyfunction!(match_score, m)?)?;
    m.add_function(wrap_pyfunction!(load_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(classify_error, m)?)?;
    m.add_class::<Database>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyDict;

    #[test]
    fn module_round_trips_outcomes() {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "pynl2sql").unwrap();
            pynl2sql(&m).unwrap();
            let p = m.getattr("pass_at_k").unwrap().call1((8, 3, 2)).unwrap().extract::<f64>().unwrap();
            assert!((p - 9.0 / 14.0).abs() < 1e-12);
            assert!(m.getattr("pass_at_k").unwrap().call1((2, 1, 3)).is_err());

            let outcome = to_py(py, &ExecutionOutcome::ok(vec![vec![executor::Cell::Real(0.1 + 0.2)]], 1)).unwrap();
            let same = to_py(py, &ExecutionOutcome::ok(vec![vec![executor::Cell::Real(0.3)]], 1)).unwrap();
            assert!(outcome.cast::<PyDict>().is_ok());
            assert!(compare_results(&outcome, &same, true).unwrap());
            assert_eq!(result_signature(&outcome, false).unwrap(), result_signature(&same, false).unwrap());
            let back: ExecutionOutcome = from_py(&outcome).unwrap();
            assert_eq!(back.column_count, 1);
        });
    }
}
