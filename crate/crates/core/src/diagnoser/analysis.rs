//! Structural facts extracted from a query for error classification.
//!
//! All names are lowercased and aliases are resolved to base tables, so facts
//! from two queries that differ only in aliasing are identical.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::ast::*;
use crate::context::SchemaContext;

/// `(table, column)`, lowercased. The table part is empty when the column could
/// not be attributed to a base table (derived tables, output aliases).
pub type ColumnKey = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AtomOp {
    Compare(BinaryOp),
    Like { op: LikeOp, negated: bool },
    In { negated: bool },
    Between { negated: bool },
    IsNull { negated: bool },
    Exists { negated: bool },
    Other,
}

/// One leaf of a WHERE/HAVING predicate tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateAtom {
    /// The column tested by the atom when one side is a plain column.
    pub bare_column: Option<ColumnKey>,
    pub columns: BTreeSet<ColumnKey>,
    pub op: AtomOp,
    /// Normalized literal operands.
    pub literals: Vec<String>,
    /// Column-to-column equality across two tables (a join written in WHERE).
    pub is_join: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnUse {
    pub key: ColumnKey,
    /// Source spelling, e.g. `s.District`.
    pub written: String,
    /// `Some(false)` when the schema proves the column does not exist.
    pub known: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clauses {
    pub group_by: bool,
    pub order_by: bool,
    pub limit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NestingShape {
    pub subqueries: usize,
    pub set_operations: usize,
    pub ctes: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Default)]
pub struct QueryFacts {
    pub tables: BTreeSet<String>,
    pub join_edges: BTreeSet<(String, String)>,
    pub predicates: Vec<PredicateAtom>,
    pub connectives: BTreeMap<&'static str, usize>,
    pub columns: Vec<ColumnUse>,
    pub projection_columns: BTreeSet<ColumnKey>,
    pub functions: BTreeMap<String, usize>,
    pub clauses: Clauses,
    pub shape: NestingShape,
}

impl QueryFacts {
    pub fn predicate_columns(&self) -> BTreeSet<ColumnKey> {
        self.predicates
            .iter()
            .flat_map(|a| a.columns.iter().cloned())
            .collect()
    }

    pub fn predicate_literals(&self) -> BTreeSet<String> {
        self.predicates
            .iter()
            .filter(|a| !a.is_join)
            .flat_map(|a| a.literals.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Source {
    Table(String),
    Derived,
}

#[derive(Debug, Default, Clone)]
struct Scope {
    bindings: Vec<(String, Source)>,
}

struct Analyzer<'s> {
    schema: HashMap<String, HashSet<String>>,
    schema_ref: Option<&'s SchemaContext>,
    ctes: Vec<HashSet<String>>,
    facts: QueryFacts,
}

pub fn analyze(ast: &SqlAst, schema: Option<&SchemaContext>) -> QueryFacts {
    let mut map = HashMap::new();
    if let Some(s) = schema {
        for t in &s.tables {
            map.insert(
                t.name.to_lowercase(),
                t.columns.iter().map(|c| c.name.to_lowercase()).collect(),
            );
        }
    }
    let mut an = Analyzer {
        schema: map,
        schema_ref: schema,
        ctes: Vec::new(),
        facts: QueryFacts::default(),
    };
    let q = &ast.query;
    an.facts.clauses = Clauses {
        group_by: first_select(&q.body).is_some_and(|s| !s.group_by.is_empty()),
        order_by: !q.order_by.is_empty(),
        limit: q.limit.is_some(),
    };
    an.query(q, &[], 0, true);
    an.facts
}

fn first_select(body: &SetExpr) -> Option<&Select> {
    match body {
        SetExpr::Select(s) => Some(s),
        SetExpr::SetOp { left, .. } => first_select(left),
        SetExpr::Values(..) => None,
    }
}

fn normalize_number(raw: &str) -> String {
    let parsed = if let Some(hex) = raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok().map(|v| v as f64)
    } else {
        raw.parse::<f64>().ok()
    };
    match parsed {
        Some(v) => format!("{v}"),
        None => raw.to_string(),
    }
}

fn literal_text(expr: &Expr) -> Option<String> {
    match &expr.unnested().kind {
        ExprKind::Literal(Literal::Number(n)) => Some(normalize_number(n)),
        ExprKind::Literal(Literal::String(s)) => Some(format!("'{s}'")),
        ExprKind::Literal(l) => Some(l.to_string()),
        ExprKind::Unary {
            op: UnaryOp::Neg,
            expr,
        } => match &expr.unnested().kind {
            ExprKind::Literal(Literal::Number(n)) => Some(normalize_number(&format!("-{n}"))),
            _ => None,
        },
        _ => None,
    }
}

impl<'s> Analyzer<'s> {
    fn is_cte(&self, name: &str) -> bool {
        self.ctes.iter().any(|set| set.contains(name))
    }

    fn query(&mut self, q: &Query, outer: &[Scope], depth: usize, top: bool) {
        self.facts.shape.max_depth = self.facts.shape.max_depth.max(depth);
        let mut pushed = false;
        if let Some(with) = &q.with {
            self.facts.shape.ctes += with.ctes.len();
            let names: HashSet<String> = with.ctes.iter().map(|c| c.name.normalized()).collect();
            self.ctes.push(names);
            pushed = true;
            for cte in &with.ctes {
                self.query(&cte.query, outer, depth + 1, false);
            }
        }
        let scope = self.set_expr(&q.body, outer, depth, top);
        // ORDER BY may reference output aliases or columns of the (first) select
        let mut chain = outer.to_vec();
        chain.push(scope);
        for item in &q.order_by {
            self.expr_columns(&item.expr, &chain, depth);
        }
        if let Some(limit) = &q.limit {
            self.expr_columns(&limit.limit, &chain, depth);
            if let Some(o) = &limit.offset {
                self.expr_columns(o, &chain, depth);
            }
        }
        if pushed {
            self.ctes.pop();
        }
    }

    /// Walks a query body; returns the scope of its first select for ORDER BY.
    fn set_expr(&mut self, body: &SetExpr, outer: &[Scope], depth: usize, top: bool) -> Scope {
        match body {
            SetExpr::Select(s) => self.select(s, outer, depth, top),
            SetExpr::Values(rows, _) => {
                for row in rows {
                    for e in row {
                        self.expr_columns(e, outer, depth);
                    }
                }
                Scope::default()
            }
            SetExpr::SetOp { left, right, .. } => {
                self.facts.shape.set_operations += 1;
                let scope = self.set_expr(left, outer, depth, top);
                self.set_expr(right, outer, depth, false);
                scope
            }
        }
    }

    fn bind_table_ref(&mut self, t: &TableRef, scope: &mut Scope, outer: &[Scope], depth: usize) {
        match t {
            TableRef::Named { name, alias, .. } => {
                let lname = name.normalized();
                let source = if self.is_cte(&lname) {
                    Source::Derived
                } else {
                    self.facts.tables.insert(lname.clone());
                    Source::Table(lname.clone())
                };
                if let Some(a) = alias {
                    scope.bindings.push((a.normalized(), source.clone()));
                }
                // the bare table name stays resolvable, as models often mix both
                scope.bindings.push((lname, source));
            }
            TableRef::Subquery { query, alias, .. } => {
                self.facts.shape.subqueries += 1;
                self.query(query, outer, depth + 1, false);
                if let Some(a) = alias {
                    scope.bindings.push((a.normalized(), Source::Derived));
                }
            }
            TableRef::Nested(inner, _) => {
                self.bind_from(inner, scope, outer, depth);
            }
        }
    }

    fn table_name_of(t: &TableRef, scope: &Scope) -> Option<String> {
        match t {
            TableRef::Named { name, .. } => {
                let lname = name.normalized();
                scope.bindings.iter().find_map(|(n, s)| match s {
                    Source::Table(tn) if *n == lname => Some(tn.clone()),
                    _ => None,
                })
            }
            _ => None,
        }
    }

    fn bind_from(&mut self, from: &FromClause, scope: &mut Scope, outer: &[Scope], depth: usize) {
        self.bind_table_ref(&from.first, scope, outer, depth);
        let mut prev = Self::table_name_of(&from.first, scope);
        for join in &from.joins {
            self.bind_table_ref(&join.table, scope, outer, depth);
            let this = Self::table_name_of(&join.table, scope);
            let implicit_edge = matches!(join.constraint, JoinConstraint::Using(_))
                || join.kind == JoinKind::Natural;
            if implicit_edge {
                if let (Some(a), Some(b)) = (&prev, &this) {
                    self.add_edge(a, b);
                }
            }
            if this.is_some() {
                prev = this;
            }
        }
    }

    fn add_edge(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        let edge = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.facts.join_edges.insert(edge);
    }

    fn select(&mut self, s: &Select, outer: &[Scope], depth: usize, top: bool) -> Scope {
        let mut scope = Scope::default();
        if let Some(from) = &s.from {
            self.bind_from(from, &mut scope, outer, depth);
        }
        let mut chain = outer.to_vec();
        chain.push(scope.clone());

        // output aliases are visible to GROUP BY / HAVING / ORDER BY
        let mut alias_scope = scope.clone();
        for item in &s.projection {
            if let SelectItem::Expr {
                alias: Some(a), ..
            } = item
            {
                alias_scope.bindings.push((format!("#{}", a.normalized()), Source::Derived));
            }
        }

        for item in &s.projection {
            if let SelectItem::Expr { expr, .. } = item {
                let before = self.facts.columns.len();
                self.expr_columns(expr, &chain, depth);
                if top {
                    let keys: Vec<ColumnKey> = self.facts.columns[before..]
                        .iter()
                        .map(|c| c.key.clone())
                        .collect();
                    self.facts.projection_columns.extend(keys);
                }
            }
        }
        if let Some(from) = &s.from {
            for join in &from.joins {
                if let JoinConstraint::On(on) = &join.constraint {
                    self.join_condition(on, &chain, depth);
                }
            }
        }
        if let Some(w) = &s.selection {
            self.predicate(w, &chain, depth);
        }
        let mut alias_chain = outer.to_vec();
        alias_chain.push(alias_scope.clone());
        for g in &s.group_by {
            self.expr_columns(g, &alias_chain, depth);
        }
        if let Some(h) = &s.having {
            self.predicate(h, &alias_chain, depth);
        }
        alias_scope
    }

    fn join_condition(&mut self, on: &Expr, chain: &[Scope], depth: usize) {
        // equalities between columns become join edges; anything else in ON
        // behaves like a filter
        let mut conjuncts = Vec::new();
        split_and(on, &mut conjuncts);
        for c in conjuncts {
            if let Some((a, b)) = self.column_equality(c, chain) {
                self.expr_columns(c, chain, depth);
                self.add_edge(&a, &b);
            } else {
                self.predicate(c, chain, depth);
            }
        }
    }

    /// Tables on both sides of `col = col` when they differ.
    fn column_equality(&self, e: &Expr, chain: &[Scope]) -> Option<(String, String)> {
        if let ExprKind::Binary {
            op: BinaryOp::Eq,
            left,
            right,
        } = &e.unnested().kind
        {
            let l = self.resolve_if_column(left, chain)?;
            let r = self.resolve_if_column(right, chain)?;
            if !l.0.is_empty() && !r.0.is_empty() && l.0 != r.0 {
                return Some((l.0, r.0));
            }
        }
        None
    }

    fn resolve_if_column(&self, e: &Expr, chain: &[Scope]) -> Option<ColumnKey> {
        match &e.unnested().kind {
            ExprKind::Column { qualifier, name } => Some(self.resolve(qualifier, name, chain).key),
            _ => None,
        }
    }

    fn predicate(&mut self, e: &Expr, chain: &[Scope], depth: usize) {
        let e = e.unnested();
        match &e.kind {
            ExprKind::Binary {
                op: op @ (BinaryOp::And | BinaryOp::Or),
                left,
                right,
            } => {
                let name = if *op == BinaryOp::And { "AND" } else { "OR" };
                *self.facts.connectives.entry(name).or_default() += 1;
                self.predicate(left, chain, depth);
                self.predicate(right, chain, depth);
            }
            ExprKind::Unary {
                op: UnaryOp::Not,
                expr,
            } => {
                *self.facts.connectives.entry("NOT").or_default() += 1;
                self.predicate(expr, chain, depth);
            }
            _ => self.atom(e, chain, depth),
        }
    }

    fn atom(&mut self, e: &Expr, chain: &[Scope], depth: usize) {
        let before = self.facts.columns.len();
        let is_join = self.column_equality(e, chain).is_some();
        if let Some((a, b)) = self.column_equality(e, chain) {
            self.add_edge(&a, &b);
        }
        self.expr_columns(e, chain, depth);
        let columns: BTreeSet<ColumnKey> = self.facts.columns[before..]
            .iter()
            .filter(|c| c.written.len() > 0)
            .map(|c| c.key.clone())
            .collect();

        let mut literals = Vec::new();
        let mut bare_column = None;
        let op = match &e.kind {
            ExprKind::Binary { op, left, right } if op.is_comparison() => {
                let l = self.resolve_if_column(left, chain);
                let r = self.resolve_if_column(right, chain);
                match (l, r) {
                    (Some(c), None) => {
                        bare_column = Some(c);
                        literals.extend(literal_text(right));
                    }
                    (None, Some(c)) => {
                        bare_column = Some(c);
                        literals.extend(literal_text(left));
                    }
                    (None, None) => {
                        literals.extend(literal_text(left));
                        literals.extend(literal_text(right));
                    }
                    (Some(_), Some(_)) => {}
                }
                // `x > 1` and `1 < x` test the same thing
                let flipped = self.resolve_if_column(left, chain).is_none()
                    && self.resolve_if_column(right, chain).is_some();
                AtomOp::Compare(if flipped { mirror(*op) } else { *op })
            }
            ExprKind::Like {
                expr,
                negated,
                op,
                pattern,
                ..
            } => {
                bare_column = self.resolve_if_column(expr, chain);
                literals.extend(literal_text(pattern));
                AtomOp::Like {
                    op: *op,
                    negated: *negated,
                }
            }
            ExprKind::Between {
                expr,
                negated,
                low,
                high,
            } => {
                bare_column = self.resolve_if_column(expr, chain);
                literals.extend(literal_text(low));
                literals.extend(literal_text(high));
                AtomOp::Between { negated: *negated }
            }
            ExprKind::InList {
                expr,
                negated,
                list,
            } => {
                bare_column = self.resolve_if_column(expr, chain);
                literals.extend(list.iter().filter_map(literal_text));
                AtomOp::In { negated: *negated }
            }
            ExprKind::InSubquery { expr, negated, .. } | ExprKind::InTable { expr, negated, .. } => {
                bare_column = self.resolve_if_column(expr, chain);
                AtomOp::In { negated: *negated }
            }
            ExprKind::IsNull { expr, negated } => {
                bare_column = self.resolve_if_column(expr, chain);
                AtomOp::IsNull { negated: *negated }
            }
            ExprKind::Is {
                left,
                negated,
                right,
            } => {
                bare_column = self.resolve_if_column(left, chain);
                literals.extend(literal_text(right));
                AtomOp::Compare(if *negated {
                    BinaryOp::NotEq
                } else {
                    BinaryOp::Eq
                })
            }
            ExprKind::Exists { negated, .. } => AtomOp::Exists { negated: *negated },
            _ => AtomOp::Other,
        };
        literals.sort();
        self.facts.predicates.push(PredicateAtom {
            bare_column,
            columns,
            op,
            literals,
            is_join,
        });
    }

    fn resolve(&self, qualifier: &[Ident], name: &Ident, chain: &[Scope]) -> ColumnUse {
        let col = name.normalized();
        let written = qualifier
            .iter()
            .map(|q| q.value.as_str())
            .chain(std::iter::once(name.value.as_str()))
            .collect::<Vec<_>>()
            .join(".");
        let rowid = matches!(col.as_str(), "rowid" | "oid" | "_rowid_");
        if let Some(q) = qualifier.last() {
            let q = q.normalized();
            for scope in chain.iter().rev() {
                if let Some((_, source)) = scope.bindings.iter().find(|(n, _)| *n == q) {
                    return match source {
                        Source::Table(t) => {
                            let known = self
                                .schema
                                .get(t)
                                .map(|cols| rowid || cols.contains(&col));
                            ColumnUse {
                                key: (t.clone(), col),
                                written,
                                known,
                            }
                        }
                        Source::Derived => ColumnUse {
                            key: (String::new(), col),
                            written,
                            known: None,
                        },
                    };
                }
            }
            // qualifier names nothing in scope
            let known = if self.schema_ref.is_some() {
                Some(false)
            } else {
                None
            };
            return ColumnUse {
                key: (q, col),
                written,
                known,
            };
        }
        let mut saw_unknown_source = false;
        for scope in chain.iter().rev() {
            for (binding, source) in &scope.bindings {
                match source {
                    Source::Table(t) if binding == t => match self.schema.get(t) {
                        Some(cols) if cols.contains(&col) || rowid => {
                            return ColumnUse {
                                key: (t.clone(), col),
                                written,
                                known: Some(true),
                            };
                        }
                        Some(_) => {}
                        None => saw_unknown_source = true,
                    },
                    Source::Derived if binding.starts_with('#') => {
                        if binding[1..] == col {
                            return ColumnUse {
                                key: (String::new(), col),
                                written,
                                known: None,
                            };
                        }
                    }
                    Source::Derived => saw_unknown_source = true,
                    Source::Table(_) => {}
                }
            }
        }
        // unattributed: single-table scopes claim the column, otherwise give up
        let tables: Vec<&String> = chain
            .last()
            .map(|s| {
                s.bindings
                    .iter()
                    .filter_map(|(b, src)| match src {
                        Source::Table(t) if b == t => Some(t),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let known = if self.schema_ref.is_some() && !saw_unknown_source && !tables.is_empty() {
            Some(false)
        } else {
            None
        };
        let table = if tables.len() == 1 {
            tables[0].clone()
        } else {
            String::new()
        };
        ColumnUse {
            key: (table, col),
            written,
            known,
        }
    }

    /// Records columns and functions used anywhere in `e`, descending into
    /// subqueries (whose own predicates are collected as atoms).
    fn expr_columns(&mut self, e: &Expr, chain: &[Scope], depth: usize) {
        match &e.kind {
            ExprKind::Column { qualifier, name } => {
                let use_ = self.resolve(qualifier, name, chain);
                self.facts.columns.push(use_);
            }
            ExprKind::Literal(_) | ExprKind::Param(_) | ExprKind::Opaque(_) => {}
            ExprKind::Unary { expr, .. } => self.expr_columns(expr, chain, depth),
            ExprKind::Binary { left, right, .. } => {
                self.expr_columns(left, chain, depth);
                self.expr_columns(right, chain, depth);
            }
            ExprKind::Function { name, args } => {
                *self
                    .facts
                    .functions
                    .entry(name.value.to_uppercase())
                    .or_default() += 1;
                if let FunctionArgs::List { args, .. } = args {
                    for a in args {
                        self.expr_columns(a, chain, depth);
                    }
                }
            }
            ExprKind::Cast { expr, .. } => {
                *self.facts.functions.entry("CAST".into()).or_default() += 1;
                self.expr_columns(expr, chain, depth);
            }
            ExprKind::Case {
                operand,
                whens,
                else_result,
            } => {
                if let Some(o) = operand {
                    self.expr_columns(o, chain, depth);
                }
                for (c, r) in whens {
                    self.expr_columns(c, chain, depth);
                    self.expr_columns(r, chain, depth);
                }
                if let Some(e) = else_result {
                    self.expr_columns(e, chain, depth);
                }
            }
            ExprKind::Between {
                expr, low, high, ..
            } => {
                self.expr_columns(expr, chain, depth);
                self.expr_columns(low, chain, depth);
                self.expr_columns(high, chain, depth);
            }
            ExprKind::InList { expr, list, .. } => {
                self.expr_columns(expr, chain, depth);
                for x in list {
                    self.expr_columns(x, chain, depth);
                }
            }
            ExprKind::InSubquery { expr, query, .. } => {
                self.expr_columns(expr, chain, depth);
                self.subquery(query, chain, depth);
            }
            ExprKind::InTable { expr, .. } => self.expr_columns(expr, chain, depth),
            ExprKind::Exists { query, .. } | ExprKind::Subquery(query) => {
                self.subquery(query, chain, depth)
            }
            ExprKind::Like {
                expr,
                pattern,
                escape,
                ..
            } => {
                self.expr_columns(expr, chain, depth);
                self.expr_columns(pattern, chain, depth);
                if let Some(x) = escape {
                    self.expr_columns(x, chain, depth);
                }
            }
            ExprKind::IsNull { expr, .. } | ExprKind::Collate { expr, .. } => {
                self.expr_columns(expr, chain, depth)
            }
            ExprKind::Is { left, right, .. } => {
                self.expr_columns(left, chain, depth);
                self.expr_columns(right, chain, depth);
            }
            ExprKind::Nested(items) => {
                for x in items {
                    self.expr_columns(x, chain, depth);
                }
            }
        }
    }

    fn subquery(&mut self, q: &Query, chain: &[Scope], depth: usize) {
        self.facts.shape.subqueries += 1;
        self.query(q, chain, depth + 1, false);
    }
}

fn split_and<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match &e.unnested().kind {
        ExprKind::Binary {
            op: BinaryOp::And,
            left,
            right,
        } => {
            split_and(left, out);
            split_and(right, out);
        }
        _ => out.push(e.unnested()),
    }
}

fn mirror(op: BinaryOp) -> BinaryOp {
    match op {
        BinaryOp::Lt => BinaryOp::Gt,
        BinaryOp::LtEq => BinaryOp::GtEq,
        BinaryOp::Gt => BinaryOp::Lt,
        BinaryOp::GtEq => BinaryOp::LtEq,
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnoser::parse_sql;

    fn facts(sql: &str) -> QueryFacts {
        analyze(&parse_sql(sql).unwrap(), None)
    }

    #[test]
    fn aliases_resolve_to_tables() {
        let f = facts(
            "SELECT COUNT(T3.Id) FROM users AS T1 INNER JOIN posts AS T2 ON T1.Id = T2.OwnerUserId \
             INNER JOIN comments AS T3 ON T2.Id = T3.PostId WHERE T1.DisplayName = 'Neil McGuigan' AND T3.Score < 60",
        );
        assert_eq!(
            f.tables,
            ["comments", "posts", "users"].map(String::from).into()
        );
        assert!(f.join_edges.contains(&("posts".into(), "users".into())));
        assert!(f.join_edges.contains(&("comments".into(), "posts".into())));
        assert_eq!(f.join_edges.len(), 2);
        let bare: Vec<_> = f
            .predicates
            .iter()
            .filter_map(|a| a.bare_column.clone())
            .collect();
        assert!(bare.contains(&("users".into(), "displayname".into())));
        assert!(bare.contains(&("comments".into(), "score".into())));
        assert_eq!(f.functions.get("COUNT"), Some(&1));
    }

    #[test]
    fn where_join_is_an_edge_not_a_filter() {
        let f = facts("SELECT a.x FROM a, b WHERE a.id = b.aid AND b.y > 3");
        assert!(f.join_edges.contains(&("a".into(), "b".into())));
        let filters: Vec<_> = f.predicates.iter().filter(|p| !p.is_join).collect();
        assert_eq!(filters.len(), 1);
        assert_eq!(filters[0].literals, vec!["3".to_string()]);
        assert_eq!(filters[0].op, AtomOp::Compare(BinaryOp::Gt));
    }

    #[test]
    fn flipped_comparison_is_mirrored() {
        let a = facts("SELECT 1 FROM t WHERE 5 < t.x");
        let b = facts("SELECT 1 FROM t WHERE t.x > 5");
        assert_eq!(a.predicates, b.predicates);
    }

    #[test]
    fn outer_clauses_and_shape() {
        let f = facts(
            "SELECT c.country FROM races r JOIN circuits c ON r.circuitId = c.circuitId \
             WHERE r.year = (SELECT MIN(year) FROM races)",
        );
        assert_eq!(f.clauses, Clauses::default());
        assert_eq!(f.shape.subqueries, 1);
        assert_eq!(f.shape.max_depth, 1);
        let f = facts("SELECT a FROM t GROUP BY a ORDER BY COUNT(*) DESC LIMIT 1");
        assert!(f.clauses.group_by && f.clauses.order_by && f.clauses.limit);
    }

    #[test]
    fn numbers_normalize() {
        let a = facts("SELECT 1 FROM t WHERE x = 1.0");
        let b = facts("SELECT 1 FROM t WHERE x = 1");
        assert_eq!(a.predicate_literals(), b.predicate_literals());
    }
}
