//! Rule-based error taxonomy for incorrect predictions.
//!
//! Rules fire in priority order Table > Condition > Value > Function > Others;
//! the first match wins so every record gets exactly one label.

use std::collections::BTreeSet;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize};

use super::analysis::{analyze, AtomOp, ColumnKey, QueryFacts};
use super::parse_sql;
use crate::context::SchemaContext;
use crate::executor::{ExecStatus, ExecutionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Table,
    Value,
    Condition,
    Function,
    Others,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Table,
        Category::Value,
        Category::Condition,
        Category::Function,
        Category::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Table => "Table",
            Category::Value => "Value",
            Category::Condition => "Condition",
            Category::Function => "Function",
            Category::Others => "Others",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    TableMismatch,
    TableMissing,
    ValueMismatch,
    AttributeError,
    OperatorError,
    AggregationError,
    ClauseMissing,
    StructuralError,
}

impl Subtype {
    pub const ALL: [Subtype; 8] = [
        Subtype::TableMismatch,
        Subtype::TableMissing,
        Subtype::ValueMismatch,
        Subtype::AttributeError,
        Subtype::OperatorError,
        Subtype::AggregationError,
        Subtype::ClauseMissing,
        Subtype::StructuralError,
    ];

    pub fn category(self) -> Category {
        match self {
            Subtype::TableMismatch | Subtype::TableMissing => Category::Table,
            Subtype::ValueMismatch => Category::Value,
            Subtype::AttributeError | Subtype::OperatorError => Category::Condition,
            Subtype::AggregationError => Category::Function,
            Subtype::ClauseMissing | Subtype::StructuralError => Category::Others,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subtype::TableMismatch => "table_mismatch",
            Subtype::TableMissing => "table_missing",
            Subtype::ValueMismatch => "value_mismatch",
            Subtype::AttributeError => "attribute_error",
            Subtype::OperatorError => "operator_error",
            Subtype::AggregationError => "aggregation_error",
            Subtype::ClauseMissing => "clause_missing",
            Subtype::StructuralError => "structural_error",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorLabel {
    pub category: Category,
    pub subtype: Subtype,
    pub rationale: String,
}

impl ErrorLabel {
    fn new(subtype: Subtype, rationale: impl Into<String>) -> Self {
        ErrorLabel {
            category: subtype.category(),
            subtype,
            rationale: rationale.into(),
        }
    }
}

/// Counts per category, always listing all five in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorDistribution(pub [usize; 5]);

impl ErrorDistribution {
    pub fn get(&self, c: Category) -> usize {
        self.0[c as usize]
    }

    pub fn add(&mut self, c: Category) {
        self.0[c as usize] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, usize)> + '_ {
        Category::ALL.iter().map(|c| (*c, self.get(*c)))
    }
}

impl Serialize for ErrorDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(5))?;
        for (c, n) in self.iter() {
            m.serialize_entry(c.as_str(), &n)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for ErrorDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = std::collections::BTreeMap::<String, usize>::deserialize(d)?;
        let mut out = ErrorDistribution::default();
        for c in Category::ALL {
            out.0[c as usize] = map.get(c.as_str()).copied().unwrap_or(0);
        }
        Ok(out)
    }
}

pub fn error_distribution<'a>(labels: impl IntoIterator<Item = &'a ErrorLabel>) -> ErrorDistribution {
    let mut d = ErrorDistribution::default();
    for l in labels {
        d.add(l.category);
    }
    d
}

const DATE_FUNCTIONS: [&str; 6] = ["STRFTIME", "DATE", "TIME", "DATETIME", "JULIANDAY", "UNIXEPOCH"];

fn show_col(k: &ColumnKey) -> String {
    if k.0.is_empty() {
        k.1.clone()
    } else {
        format!("{}.{}", k.0, k.1)
    }
}

fn show_set<T: AsRef<str>>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().join(", ")
}

pub fn classify_error(
    pred_sql: Option<&str>,
    gold_sql: &str,
    schema: &SchemaContext,
    pred_outcome: Option<&ExecutionOutcome>,
    gold_outcome: Option<&ExecutionOutcome>,
) -> ErrorLabel {
    let _ = gold_outcome;
    let pred_sql = match pred_sql.map(str::trim) {
        Some(s) if !s.is_empty() => s,
        _ => return ErrorLabel::new(Subtype::StructuralError, "unparseable: no SQL was produced"),
    };
    let pred = match parse_sql(pred_sql) {
        Ok(ast) => ast,
        Err(e) => return ErrorLabel::new(Subtype::StructuralError, format!("unparseable: {e}")),
    };
    if let Some(out) = pred_outcome {
        if out.status == ExecStatus::SqlError {
            let msg = out.error_message.as_deref().unwrap_or("");
            if msg.contains("no such table") {
                return ErrorLabel::new(Subtype::TableMismatch, format!("engine rejected a table: {msg}"));
            }
            if msg.contains("no such column") {
                return ErrorLabel::new(Subtype::AttributeError, format!("engine rejected a column: {msg}"));
            }
        }
    }
    let gold = match parse_sql(gold_sql) {
        Ok(ast) => ast,
        Err(e) => return ErrorLabel::new(Subtype::StructuralError, format!("gold query unparseable: {e}")),
    };
    let schema_opt = if schema.tables.is_empty() { None } else { Some(schema) };
    let p = analyze(&pred, schema_opt);
    let g = analyze(&gold, schema_opt);
    table_rule(&p, &g)
        .or_else(|| condition_rule(&p, &g))
        .or_else(|| value_rule(&p, &g))
        .or_else(|| function_rule(&p, &g))
        .or_else(|| others_rule(&p, &g))
        .or_else(|| {
            (p.projection_columns != g.projection_columns).then(|| {
                let extra: Vec<_> = p.projection_columns.difference(&g.projection_columns).map(show_col).collect();
                let missing: Vec<_> = g.projection_columns.difference(&p.projection_columns).map(show_col).collect();
                ErrorLabel::new(
                    Subtype::AttributeError,
                    format!("selected columns differ (extra: [{}], missing: [{}])", show_set(extra), show_set(missing)),
                )
            })
        })
        .unwrap_or_else(|| ErrorLabel::new(Subtype::StructuralError, "no static difference from the gold query"))
}

fn table_rule(p: &QueryFacts, g: &QueryFacts) -> Option<ErrorLabel> {
    let extra: Vec<&String> = p.tables.difference(&g.tables).collect();
    if !extra.is_empty() {
        return Some(ErrorLabel::new(
            Subtype::TableMismatch,
            format!("uses tables absent from the gold query: {}", show_set(extra)),
        ));
    }
    let wrong_edges: Vec<String> = p
        .join_edges
        .difference(&g.join_edges)
        .map(|(a, b)| format!("{a}-{b}"))
        .collect();
    if !wrong_edges.is_empty() && p.tables != g.tables {
        return Some(ErrorLabel::new(
            Subtype::TableMismatch,
            format!("joins tables the gold query does not link: {}", show_set(wrong_edges)),
        ));
    }
    let missing: Vec<&String> = g.tables.difference(&p.tables).collect();
    if !missing.is_empty() {
        return Some(ErrorLabel::new(
            Subtype::TableMissing,
            format!("omits tables used by the gold query: {}", show_set(missing)),
        ));
    }
    None
}

fn condition_rule(p: &QueryFacts, g: &QueryFacts) -> Option<ErrorLabel> {
    if let Some(bad) = p.columns.iter().find(|c| c.known == Some(false)) {
        return Some(ErrorLabel::new(
            Subtype::AttributeError,
            format!("column {} does not exist in the referenced table", bad.written),
        ));
    }
    let p_cols = p.predicate_columns();
    let g_bare: BTreeSet<&ColumnKey> = g
        .predicates
        .iter()
        .filter(|a| !a.is_join)
        .filter_map(|a| a.bare_column.as_ref())
        .collect();
    if let Some(missing) = g_bare.iter().find(|c| !p_cols.contains(**c)) {
        return Some(ErrorLabel::new(
            Subtype::AttributeError,
            format!("missing explicit condition on {}", show_col(missing)),
        ));
    }
    let g_cols = g.predicate_columns();
    for atom in p.predicates.iter().filter(|a| !a.is_join) {
        let Some(col) = &atom.bare_column else { continue };
        if g_cols.contains(col) || atom.literals.is_empty() {
            continue;
        }
        let other = g.predicates.iter().find(|ga| {
            !ga.is_join && ga.bare_column.as_ref().is_some_and(|c| c != col) && ga.literals == atom.literals
        });
        if let Some(ga) = other {
            return Some(ErrorLabel::new(
                Subtype::AttributeError,
                format!(
                    "condition on {} where the gold query tests {}",
                    show_col(col),
                    show_col(ga.bare_column.as_ref().unwrap())
                ),
            ));
        }
    }
    for pa in p.predicates.iter().filter(|a| !a.is_join) {
        let Some(col) = &pa.bare_column else { continue };
        for ga in g.predicates.iter().filter(|a| !a.is_join) {
            if ga.bare_column.as_ref() == Some(col) && ga.literals == pa.literals && ga.op != pa.op {
                return Some(ErrorLabel::new(
                    Subtype::OperatorError,
                    format!("{} uses {} instead of {}", show_col(col), op_name(&pa.op), op_name(&ga.op)),
                ));
            }
        }
    }
    if p.connectives != g.connectives {
        let show = |f: &QueryFacts| {
            ["AND", "OR", "NOT"]
                .iter()
                .map(|k| format!("{k}={}", f.connectives.get(k).copied().unwrap_or(0)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        return Some(ErrorLabel::new(
            Subtype::OperatorError,
            format!("logical connectives differ ({} vs gold {})", show(p), show(g)),
        ));
    }
    None
}

fn op_name(op: &AtomOp) -> String {
    let not = |n: &bool| if *n { "NOT " } else { "" };
    match op {
        AtomOp::Compare(b) => b.symbol().to_string(),
        AtomOp::Like { op, negated } => format!("{}{}", not(negated), op.keyword()),
        AtomOp::In { negated } => format!("{}IN", not(negated)),
        AtomOp::Between { negated } => format!("{}BETWEEN", not(negated)),
        AtomOp::IsNull { negated } => format!("IS {}NULL", not(negated)),
        AtomOp::Exists { negated } => format!("{}EXISTS", not(negated)),
        AtomOp::Other => "an expression".into(),
    }
}

fn value_rule(p: &QueryFacts, g: &QueryFacts) -> Option<ErrorLabel> {
    for pa in p.predicates.iter().filter(|a| !a.is_join) {
        let Some(col) = &pa.bare_column else { continue };
        let aligned = g
            .predicates
            .iter()
            .filter(|a| !a.is_join && a.bare_column.as_ref() == Some(col))
            .collect::<Vec<_>>();
        if !aligned.is_empty() && aligned.iter().all(|ga| ga.literals != pa.literals) {
            return Some(ErrorLabel::new(
                Subtype::ValueMismatch,
                format!(
                    "{} compared with {} where the gold query uses {}",
                    show_col(col),
                    show_set(&pa.literals),
                    show_set(&aligned[0].literals)
                ),
            ));
        }
    }
    let pl = p.predicate_literals();
    let gl = g.predicate_literals();
    if pl != gl {
        let extra: Vec<_> = pl.difference(&gl).collect();
        let missing: Vec<_> = gl.difference(&pl).collect();
        return Some(ErrorLabel::new(
            Subtype::ValueMismatch,
            format!("condition values differ (extra: [{}], missing: [{}])", show_set(extra), show_set(missing)),
        ));
    }
    None
}

fn function_rule(p: &QueryFacts, g: &QueryFacts) -> Option<ErrorLabel> {
    if p.functions == g.functions {
        return None;
    }
    let names = |f: &QueryFacts| f.functions.keys().cloned().collect::<BTreeSet<_>>();
    let (pn, gn) = (names(p), names(g));
    let extra: Vec<_> = pn.difference(&gn).cloned().collect();
    let missing: Vec<_> = gn.difference(&pn).cloned().collect();
    let dated = extra.iter().chain(&missing).any(|f| DATE_FUNCTIONS.contains(&f.as_str()));
    let what = if dated { "date/time function misuse" } else { "function usage differs" };
    let detail = if extra.is_empty() && missing.is_empty() {
        "same functions, different counts".to_string()
    } else {
        format!("extra: [{}], missing: [{}]", show_set(extra), show_set(missing))
    };
    Some(ErrorLabel::new(Subtype::AggregationError, format!("{what} ({detail})")))
}

fn others_rule(p: &QueryFacts, g: &QueryFacts) -> Option<ErrorLabel> {
    let mut missing = Vec::new();
    if g.clauses.group_by && !p.clauses.group_by {
        missing.push("GROUP BY");
    }
    if g.clauses.order_by && !p.clauses.order_by {
        missing.push("ORDER BY");
    }
    if g.clauses.limit && !p.clauses.limit {
        missing.push("LIMIT");
    }
    if !missing.is_empty() {
        return Some(ErrorLabel::new(
            Subtype::ClauseMissing,
            format!("missing {} present in the gold query", missing.join(", ")),
        ));
    }
    if p.shape != g.shape {
        let s = |f: &QueryFacts| {
            format!(
                "subqueries={} set_ops={} ctes={} depth={}",
                f.shape.subqueries, f.shape.set_operations, f.shape.ctes, f.shape.max_depth
            )
        };
        return Some(ErrorLabel::new(
            Subtype::StructuralError,
            format!("nesting differs ({} vs gold {})", s(p), s(g)),
        ));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subtype_category_pairs() {
        let cats: Vec<_> = Subtype::ALL.iter().map(|s| s.category()).collect();
        assert_eq!(
            cats,
            vec![
                Category::Table,
                Category::Table,
                Category::Value,
                Category::Condition,
                Category::Condition,
                Category::Function,
                Category::Others,
                Category::Others
            ]
        );
    }

    fn label(pred: &str, gold: &str) -> ErrorLabel {
        classify_error(Some(pred), gold, &SchemaContext::default(), None, None)
    }

    #[test]
    fn absent_and_garbage_predictions() {
        let l = classify_error(None, "SELECT 1", &SchemaContext::default(), None, None);
        assert_eq!(l.subtype, Subtype::StructuralError);
        assert!(l.rationale.starts_with("unparseable"));
        assert!(label("SELEC 1 FROM", "SELECT 1").rationale.starts_with("unparseable"));
    }

    #[test]
    fn operator_and_clause_rules() {
        assert_eq!(label("SELECT a FROM t WHERE b > 3", "SELECT a FROM t WHERE b >= 3").subtype, Subtype::OperatorError);
        assert_eq!(label("SELECT a FROM t WHERE b = 3 OR c = 1", "SELECT a FROM t WHERE b = 3 AND c = 1").subtype, Subtype::OperatorError);
        assert_eq!(label("SELECT a FROM t", "SELECT a FROM t ORDER BY a LIMIT 1").subtype, Subtype::ClauseMissing);
        assert_eq!(label("SELECT a FROM t", "SELECT a FROM t UNION SELECT a FROM t").subtype, Subtype::StructuralError);
        assert_eq!(label("SELECT SUM(a) FROM t", "SELECT COUNT(a) FROM t").subtype, Subtype::AggregationError);
        assert_eq!(label("SELECT a FROM t WHERE b = 'x'", "SELECT a FROM t WHERE b = 'y'").subtype, Subtype::ValueMismatch);
        assert_eq!(label("SELECT a FROM t", "SELECT b FROM t").subtype, Subtype::AttributeError);
        assert_eq!(label("SELECT a FROM t", "SELECT a FROM t").subtype, Subtype::StructuralError);
        assert_eq!(label("SELECT a FROM t", "SELECT a FROM t JOIN u ON t.x = u.x").subtype, Subtype::TableMissing);
        assert_eq!(label("SELECT a FROM v", "SELECT a FROM t").subtype, Subtype::TableMismatch);
    }

    #[test]
    fn engine_errors_shortcut() {
        let out = ExecutionOutcome::failed(ExecStatus::SqlError, "no such column: s.District");
        let l = classify_error(Some("SELECT s.District FROM satscores s"), "SELECT 1", &SchemaContext::default(), Some(&out), None);
        assert_eq!(l.subtype, Subtype::AttributeError);
    }

    #[test]
    fn distribution_lists_all_categories() {
        let d = error_distribution(&[ErrorLabel::new(Subtype::TableMissing, "x")]);
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"{"Table":1,"Value":0,"Condition":0,"Function":0,"Others":0}"#
        );
        let back: ErrorDistribution = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
