//! Renders syntax trees back to SQL text.
//!
//! Parentheses are emitted only where the tree holds a `Nested` node, so a
//! rendered tree re-parses to an equal tree.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

impl Display for SqlAst {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        self.query.fmt(f)
    }
}

fn comma_list<T: Display>(f: &mut Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        item.fmt(f)?;
    }
    Ok(())
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if let Some(with) = &self.with {
            f.write_str("WITH ")?;
            if with.recursive {
                f.write_str("RECURSIVE ")?;
            }
            comma_list(f, &with.ctes)?;
            f.write_char(' ')?;
        }
        self.body.fmt(f)?;
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            comma_list(f, &self.order_by)?;
        }
        if let Some(limit) = &self.limit {
            match (&limit.offset, limit.comma_form) {
                (Some(offset), true) => write!(f, " LIMIT {offset}, {}", limit.limit)?,
                (Some(offset), false) => write!(f, " LIMIT {} OFFSET {offset}", limit.limit)?,
                (None, _) => write!(f, " LIMIT {}", limit.limit)?,
            }
        }
        Ok(())
    }
}

impl Display for Cte {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        self.name.fmt(f)?;
        if !self.columns.is_empty() {
            f.write_char('(')?;
            comma_list(f, &self.columns)?;
            f.write_char(')')?;
        }
        write!(f, " AS ({})", self.query)
    }
}

impl Display for SetExpr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Select(s) => s.fmt(f),
            SetExpr::Values(rows, _) => {
                f.write_str("VALUES ")?;
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_char('(')?;
                    comma_list(f, row)?;
                    f.write_char(')')?;
                }
                Ok(())
            }
            SetExpr::SetOp {
                op, left, right, ..
            } => write!(f, "{left} {} {right}", op.keyword()),
        }
    }
}

impl Display for Select {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        comma_list(f, &self.projection)?;
        if let Some(from) = &self.from {
            write!(f, " FROM {from}")?;
        }
        if let Some(sel) = &self.selection {
            write!(f, " WHERE {sel}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            comma_list(f, &self.group_by)?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl Display for SelectItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Wildcard(_) => f.write_char('*'),
            SelectItem::QualifiedWildcard(t, _) => write!(f, "{t}.*"),
            SelectItem::Expr { expr, alias } => {
                expr.fmt(f)?;
                if let Some(a) = alias {
                    write!(f, " AS {a}")?;
                }
                Ok(())
            }
        }
    }
}

impl Display for FromClause {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        self.first.fmt(f)?;
        for join in &self.joins {
            if join.kind == JoinKind::Comma {
                write!(f, ", {}", join.table)?;
            } else {
                write!(f, " {} {}", join.kind.keyword(), join.table)?;
            }
            match &join.constraint {
                JoinConstraint::None => {}
                JoinConstraint::On(e) => write!(f, " ON {e}")?,
                JoinConstraint::Using(cols) => {
                    f.write_str(" USING (")?;
                    comma_list(f, cols)?;
                    f.write_char(')')?;
                }
            }
        }
        Ok(())
    }
}

impl Display for TableRef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let alias = match self {
            TableRef::Named {
                schema,
                name,
                alias,
                ..
            } => {
                if let Some(s) = schema {
                    write!(f, "{s}.")?;
                }
                name.fmt(f)?;
                alias
            }
            TableRef::Subquery { query, alias, .. } => {
                write!(f, "({query})")?;
                alias
            }
            TableRef::Nested(inner, _) => return write!(f, "({inner})"),
        };
        if let Some(a) = alias {
            write!(f, " AS {a}")?;
        }
        Ok(())
    }
}

impl Display for OrderItem {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)?;
        match self.asc {
            Some(true) => f.write_str(" ASC")?,
            Some(false) => f.write_str(" DESC")?,
            None => {}
        }
        match self.nulls_first {
            Some(true) => f.write_str(" NULLS FIRST"),
            Some(false) => f.write_str(" NULLS LAST"),
            None => Ok(()),
        }
    }
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => f.write_str(n),
            Literal::String(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Blob(b) => write!(f, "X'{b}'"),
            Literal::Null => f.write_str("NULL"),
            Literal::True => f.write_str("TRUE"),
            Literal::False => f.write_str("FALSE"),
            Literal::CurrentTime => f.write_str("CURRENT_TIME"),
            Literal::CurrentDate => f.write_str("CURRENT_DATE"),
            Literal::CurrentTimestamp => f.write_str("CURRENT_TIMESTAMP"),
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let not = |negated: bool| if negated { "NOT " } else { "" };
        match &self.kind {
            ExprKind::Column { qualifier, name } => {
                for q in qualifier {
                    write!(f, "{q}.")?;
                }
                name.fmt(f)
            }
            ExprKind::Literal(l) => l.fmt(f),
            ExprKind::Param(p) => f.write_str(p),
            ExprKind::Unary { op, expr } => {
                let inner = expr.to_string();
                match op {
                    UnaryOp::Not => write!(f, "NOT {inner}"),
                    UnaryOp::BitNot => write!(f, "~{inner}"),
                    UnaryOp::Neg | UnaryOp::Plus => {
                        let sym = if *op == UnaryOp::Neg { '-' } else { '+' };
                        if inner.starts_with(['-', '+']) {
                            write!(f, "{sym} {inner}")
                        } else {
                            write!(f, "{sym}{inner}")
                        }
                    }
                }
            }
            ExprKind::Binary { op, left, right } => {
                write!(f, "{left} {} {right}", op.symbol())
            }
            ExprKind::Function { name, args } => {
                write!(f, "{name}(")?;
                match args {
                    FunctionArgs::Star => f.write_char('*')?,
                    FunctionArgs::List { distinct, args } => {
                        if *distinct {
                            f.write_str("DISTINCT ")?;
                        }
                        comma_list(f, args)?;
                    }
                }
                f.write_char(')')
            }
            ExprKind::Cast { expr, type_name } => write!(f, "CAST({expr} AS {type_name})"),
            ExprKind::Case {
                operand,
                whens,
                else_result,
            } => {
                f.write_str("CASE")?;
                if let Some(op) = operand {
                    write!(f, " {op}")?;
                }
                for (cond, result) in whens {
                    write!(f, " WHEN {cond} THEN {result}")?;
                }
                if let Some(e) = else_result {
                    write!(f, " ELSE {e}")?;
                }
                f.write_str(" END")
            }
            ExprKind::Between {
                expr,
                negated,
                low,
                high,
            } => write!(f, "{expr} {}BETWEEN {low} AND {high}", not(*negated)),
            ExprKind::InList {
                expr,
                negated,
                list,
            } => {
                write!(f, "{expr} {}IN (", not(*negated))?;
                comma_list(f, list)?;
                f.write_char(')')
            }
            ExprKind::InSubquery {
                expr,
                negated,
                query,
            } => write!(f, "{expr} {}IN ({query})", not(*negated)),
            ExprKind::InTable {
                expr,
                negated,
                table,
            } => write!(f, "{expr} {}IN {table}", not(*negated)),
            ExprKind::Exists { negated, query } => {
                write!(f, "{}EXISTS ({query})", not(*negated))
            }
            ExprKind::Subquery(q) => write!(f, "({q})"),
            ExprKind::Like {
                expr,
                negated,
                op,
                pattern,
                escape,
            } => {
                write!(f, "{expr} {}{} {pattern}", not(*negated), op.keyword())?;
                if let Some(e) = escape {
                    write!(f, " ESCAPE {e}")?;
                }
                Ok(())
            }
            ExprKind::IsNull { expr, negated } => {
                write!(f, "{expr} IS {}NULL", not(*negated))
            }
            ExprKind::Is {
                left,
                negated,
                right,
            } => write!(f, "{left} IS {}{right}", not(*negated)),
            ExprKind::Collate { expr, collation } => write!(f, "{expr} COLLATE {collation}"),
            ExprKind::Nested(items) => {
                f.write_char('(')?;
                comma_list(f, items)?;
                f.write_char(')')
            }
            ExprKind::Opaque(text) => f.write_str(text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_sql;

    fn roundtrip(sql: &str) -> String {
        let ast = parse_sql(sql).unwrap();
        let text = ast.to_string();
        let again = parse_sql(&text).unwrap_or_else(|e| panic!("reparse of {text:?}: {e}"));
        assert_eq!(ast, again, "round-trip changed the tree for {sql}");
        text
    }

    #[test]
    fn canonical_spacing() {
        assert_eq!(
            roundtrip("select  a,b from t  where x=1"),
            "SELECT a, b FROM t WHERE x = 1"
        );
    }

    #[test]
    fn double_negation_does_not_become_comment() {
        assert_eq!(roundtrip("SELECT - -1"), "SELECT - -1");
        assert_eq!(roundtrip("SELECT -(-1)"), "SELECT -(-1)");
    }

    #[test]
    fn quoted_identifiers_survive() {
        let text = roundtrip("SELECT \"a\"\"b\", `c d`, [e f] FROM t");
        assert_eq!(text, "SELECT \"a\"\"b\", `c d`, [e f] FROM t");
    }

    #[test]
    fn string_alias() {
        assert_eq!(roundtrip("SELECT 1 'one'"), "SELECT 1 AS 'one'");
    }
}
