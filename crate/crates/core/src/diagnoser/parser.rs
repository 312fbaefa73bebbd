//! Recursive-descent parser for SQLite queries.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

/// Words that can never be used as a bare identifier or alias.
const RESERVED: &[&str] = &[
    "ALL", "AND", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "COLLATE", "CROSS", "DESC",
    "DISTINCT", "ELSE", "END", "ESCAPE", "EXCEPT", "EXISTS", "FILTER", "FROM", "FULL", "GLOB",
    "GROUP", "HAVING", "IN", "INDEXED", "INNER", "INTERSECT", "IS", "ISNULL", "JOIN", "LEFT",
    "LIKE", "LIMIT", "MATCH", "NATURAL", "NOT", "NOTNULL", "NULL", "NULLS", "OFFSET", "ON",
    "OR", "ORDER", "OUTER", "OVER", "REGEXP", "RETURNING", "RIGHT", "SELECT", "THEN", "UNION",
    "USING", "VALUES", "WHEN", "WHERE", "WINDOW", "WITH",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

/// Parses a single SQL query. A trailing semicolon is allowed.
pub fn parse_sql(src: &str) -> Result<SqlAst, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        src,
        tokens,
        pos: 0,
    };
    if p.tokens.is_empty() {
        return Err(ParseError::new("empty statement", 0));
    }
    let query = p.parse_query()?;
    while p.eat(&TokenKind::Semicolon) {}
    if let Some(tok) = p.peek() {
        return Err(ParseError::new(
            format!("unexpected {} after end of query", describe(tok)),
            tok.span.start,
        ));
    }
    let span = query.span;
    Ok(SqlAst { query, span })
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

fn describe(tok: &Token) -> String {
    match &tok.kind {
        TokenKind::Word(w) => format!("`{w}`"),
        TokenKind::QuotedIdent(v, _) => format!("identifier {v:?}"),
        TokenKind::String(s) => format!("string '{s}'"),
        TokenKind::Number(n) => format!("number {n}"),
        other => format!("{other:?}"),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.src.len(), |t| t.span.start)
    }

    fn prev_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let found = match self.peek() {
            Some(tok) => describe(tok),
            None => "end of input".to_string(),
        };
        Err(ParseError::new(
            format!("{}, found {found}", msg.into()),
            self.here(),
        ))
    }

    fn at_word(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_word(kw))
    }

    fn at_word_at(&self, offset: usize, kw: &str) -> bool {
        self.peek_at(offset).is_some_and(|t| t.is_word(kw))
    }

    fn eat_word(&mut self, kw: &str) -> bool {
        if self.at_word(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_word(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_word(kw) {
            Ok(())
        } else {
            self.error(format!("expected {kw}"))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek_kind() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<(), ParseError> {
        if self.eat(kind) {
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn at_query_start(&self) -> bool {
        self.at_word("SELECT") || self.at_word("WITH") || self.at_word("VALUES")
    }

    /// Identifier in name position: bare non-reserved word or quoted identifier.
    fn parse_ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek().cloned() {
            Some(Token {
                kind: TokenKind::Word(w),
                span,
            }) if !is_reserved(&w) => {
                self.pos += 1;
                Ok(Ident {
                    value: w,
                    quote: None,
                    span,
                })
            }
            Some(Token {
                kind: TokenKind::QuotedIdent(v, q),
                span,
            }) => {
                self.pos += 1;
                Ok(Ident {
                    value: v,
                    quote: Some(q),
                    span,
                })
            }
            _ => self.error("expected identifier"),
        }
    }

    /// Alias after `AS` or in bare position. String literals are accepted as
    /// aliases, as SQLite does.
    fn parse_alias(&mut self, required: bool) -> Result<Option<Ident>, ParseError> {
        match self.peek().cloned() {
            Some(Token {
                kind: TokenKind::String(s),
                span,
            }) => {
                self.pos += 1;
                Ok(Some(Ident {
                    value: s,
                    quote: Some('\''),
                    span,
                }))
            }
            Some(Token {
                kind: TokenKind::Word(w),
                ..
            }) if !is_reserved(&w) => self.parse_ident().map(Some),
            Some(Token {
                kind: TokenKind::QuotedIdent(..),
                ..
            }) => self.parse_ident().map(Some),
            _ if required => self.error("expected alias"),
            _ => Ok(None),
        }
    }

    fn parse_optional_alias(&mut self) -> Result<Option<Ident>, ParseError> {
        if self.eat_word("AS") {
            self.parse_alias(true)
        } else {
            self.parse_alias(false)
        }
    }

    // ----------------------------------------------------------------- queries

    fn parse_query(&mut self) -> Result<Query, ParseError> {
        let start = self.here();
        let with = if self.at_word("WITH") {
            Some(self.parse_with()?)
        } else {
            None
        };
        let body = self.parse_set_expr()?;
        let mut order_by = Vec::new();
        if self.at_word("ORDER") {
            self.pos += 1;
            self.expect_word("BY")?;
            order_by = self.parse_order_items()?;
        }
        let limit = if self.eat_word("LIMIT") {
            let first = self.parse_expr()?;
            if self.eat_word("OFFSET") {
                Some(Limit {
                    limit: first,
                    offset: Some(self.parse_expr()?),
                    comma_form: false,
                })
            } else if self.eat(&TokenKind::Comma) {
                let second = self.parse_expr()?;
                Some(Limit {
                    limit: second,
                    offset: Some(first),
                    comma_form: true,
                })
            } else {
                Some(Limit {
                    limit: first,
                    offset: None,
                    comma_form: false,
                })
            }
        } else {
            None
        };
        Ok(Query {
            with,
            body,
            order_by,
            limit,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_with(&mut self) -> Result<With, ParseError> {
        self.expect_word("WITH")?;
        let recursive = self.eat_word("RECURSIVE");
        let mut ctes = Vec::new();
        loop {
            let start = self.here();
            let name = self.parse_ident()?;
            let mut columns = Vec::new();
            if self.eat(&TokenKind::LParen) {
                loop {
                    columns.push(self.parse_ident()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RParen, "`)`")?;
            }
            self.expect_word("AS")?;
            if self.at_word("NOT") && self.at_word_at(1, "MATERIALIZED") {
                return self.error("MATERIALIZED hints are not supported");
            }
            if self.at_word("MATERIALIZED") {
                return self.error("MATERIALIZED hints are not supported");
            }
            self.expect(&TokenKind::LParen, "`(`")?;
            let query = self.parse_query()?;
            self.expect(&TokenKind::RParen, "`)`")?;
            ctes.push(Cte {
                name,
                columns,
                query: Box::new(query),
                span: Span::new(start, self.prev_end()),
            });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(With { recursive, ctes })
    }

    fn parse_set_expr(&mut self) -> Result<SetExpr, ParseError> {
        let start = self.here();
        let mut left = self.parse_set_operand()?;
        loop {
            let op = if self.eat_word("UNION") {
                if self.eat_word("ALL") {
                    SetOperator::UnionAll
                } else {
                    SetOperator::Union
                }
            } else if self.eat_word("INTERSECT") {
                SetOperator::Intersect
            } else if self.eat_word("EXCEPT") {
                SetOperator::Except
            } else {
                break;
            };
            let right = self.parse_set_operand()?;
            left = SetExpr::SetOp {
                op,
                left: Box::new(left),
                right: Box::new(right),
                span: Span::new(start, self.prev_end()),
            };
        }
        Ok(left)
    }

    fn parse_set_operand(&mut self) -> Result<SetExpr, ParseError> {
        if self.at_word("SELECT") {
            Ok(SetExpr::Select(Box::new(self.parse_select()?)))
        } else if self.at_word("VALUES") {
            let start = self.here();
            self.pos += 1;
            let mut rows = Vec::new();
            loop {
                self.expect(&TokenKind::LParen, "`(`")?;
                rows.push(self.parse_expr_list()?);
                self.expect(&TokenKind::RParen, "`)`")?;
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            Ok(SetExpr::Values(rows, Span::new(start, self.prev_end())))
        } else {
            self.error("expected SELECT or VALUES")
        }
    }

    fn parse_select(&mut self) -> Result<Select, ParseError> {
        let start = self.here();
        self.expect_word("SELECT")?;
        let distinct = if self.eat_word("DISTINCT") {
            true
        } else {
            self.eat_word("ALL");
            false
        };
        let mut projection = Vec::new();
        loop {
            projection.push(self.parse_select_item()?);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        let from = if self.eat_word("FROM") {
            Some(self.parse_from()?)
        } else {
            None
        };
        let selection = if self.eat_word("WHERE") {
            Some(self.parse_expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.at_word("GROUP") {
            self.pos += 1;
            self.expect_word("BY")?;
            group_by = self.parse_expr_list()?;
        }
        let having = if self.eat_word("HAVING") {
            Some(self.parse_expr()?)
        } else {
            None
        };
        if self.at_word("WINDOW") {
            return self.error("named WINDOW clauses are not supported");
        }
        Ok(Select {
            distinct,
            projection,
            from,
            selection,
            group_by,
            having,
            span: Span::new(start, self.prev_end()),
        })
    }

    fn parse_select_item(&mut self) -> Result<SelectItem, ParseError> {
        let start = self.here();
        if self.eat(&TokenKind::Star) {
            return Ok(SelectItem::Wildcard(Span::new(start, self.prev_end())));
        }
        let qualified_star = matches!(
            self.peek_kind(),
            Some(TokenKind::Word(_) | TokenKind::QuotedIdent(..))
        ) && self.peek_at(1).map(|t| &t.kind) == Some(&TokenKind::Dot)
            && self.peek_at(2).map(|t| &t.kind) == Some(&TokenKind::Star);
        if qualified_star {
            let table = self.parse_ident()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(
                table,
                Span::new(start, self.prev_end()),
            ));
        }
        let expr = self.parse_expr()?;
        let alias = self.parse_optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn parse_order_items(&mut self) -> Result<Vec<OrderItem>, ParseError> {
        let mut items = Vec::new();
        loop {
            let expr = self.parse_expr()?;
            let asc = if self.eat_word("ASC") {
                Some(true)
            } else if self.eat_word("DESC") {
                Some(false)
            } else {
                None
            };
            let nulls_first = if self.eat_word("NULLS") {
                if self.eat_word("FIRST") {
                    Some(true)
                } else {
                    self.expect_word("LAST")?;
                    Some(false)
                }
            } else {
                None
            };
            items.push(OrderItem {
                expr,
                asc,
                nulls_first,
            });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(items)
    }

    fn parse_from(&mut self) -> Result<FromClause, ParseError> {
        let first = self.parse_table_ref()?;
        let mut joins = Vec::new();
        loop {
            let start = self.here();
            let kind = if self.eat(&TokenKind::Comma) {
                JoinKind::Comma
            } else if let Some(kind) = self.parse_join_keyword()? {
                kind
            } else {
                break;
            };
            let table = self.parse_table_ref()?;
            let constraint = if self.eat_word("ON") {
                JoinConstraint::On(self.parse_expr()?)
            } else if self.eat_word("USING") {
                self.expect(&TokenKind::LParen, "`(`")?;
                let mut cols = Vec::new();
                loop {
                    cols.push(self.parse_ident()?);
                    if !self.eat(&TokenKind::Comma) {
                        break;
                    }
                }
                self.expect(&TokenKind::RParen, "`)`")?;
                JoinConstraint::Using(cols)
            } else {
                JoinConstraint::None
            };
            joins.push(Join {
                kind,
                table,
                constraint,
                span: Span::new(start, self.prev_end()),
            });
        }
        Ok(FromClause { first, joins })
    }

    fn parse_join_keyword(&mut self) -> Result<Option<JoinKind>, ParseError> {
        let kind = if self.eat_word("JOIN") {
            return Ok(Some(JoinKind::Plain));
        } else if self.eat_word("INNER") {
            JoinKind::Inner
        } else if self.eat_word("CROSS") {
            JoinKind::Cross
        } else if self.eat_word("LEFT") {
            if self.eat_word("OUTER") {
                JoinKind::LeftOuter
            } else {
                JoinKind::Left
            }
        } else if self.eat_word("RIGHT") {
            self.eat_word("OUTER");
            JoinKind::Right
        } else if self.eat_word("FULL") {
            self.eat_word("OUTER");
            JoinKind::Full
        } else if self.eat_word("NATURAL") {
            self.eat_word("INNER");
            JoinKind::Natural
        } else {
            return Ok(None);
        };
        self.expect_word("JOIN")?;
        Ok(Some(kind))
    }

    fn parse_table_ref(&mut self) -> Result<TableRef, ParseError> {
        let start = self.here();
        if self.eat(&TokenKind::LParen) {
            if self.at_query_start() {
                let query = self.parse_query()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                let alias = self.parse_optional_alias()?;
                return Ok(TableRef::Subquery {
                    query: Box::new(query),
                    alias,
                    span: Span::new(start, self.prev_end()),
                });
            }
            let inner = self.parse_from()?;
            self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(TableRef::Nested(
                Box::new(inner),
                Span::new(start, self.prev_end()),
            ));
        }
        let first = self.parse_ident()?;
        let (schema, name) = if self.eat(&TokenKind::Dot) {
            (Some(first), self.parse_ident()?)
        } else {
            (None, first)
        };
        if self.peek_kind() == Some(&TokenKind::LParen) {
            return self.error("table-valued functions are not supported");
        }
        let alias = self.parse_optional_alias()?;
        if self.at_word("INDEXED") || (self.at_word("NOT") && self.at_word_at(1, "INDEXED")) {
            return self.error("index hints are not supported");
        }
        Ok(TableRef::Named {
            schema,
            name,
            alias,
            span: Span::new(start, self.prev_end()),
        })
    }

    // ------------------------------------------------------------- expressions

    fn parse_expr_list(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        loop {
            items.push(self.parse_expr()?);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(items)
    }

    pub fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        self.parse_or()
    }

    fn binary(op: BinaryOp, left: Expr, right: Expr) -> Expr {
        let span = left.span.to(right.span);
        Expr::new(
            ExprKind::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            },
            span,
        )
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_and()?;
        while self.eat_word("OR") {
            let right = self.parse_and()?;
            left = Self::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_not()?;
        while self.eat_word("AND") {
            let right = self.parse_not()?;
            left = Self::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.at_word("NOT") && !self.at_word_at(1, "EXISTS") {
            let start = self.here();
            self.pos += 1;
            let inner = self.parse_not()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr::new(
                ExprKind::Unary {
                    op: UnaryOp::Not,
                    expr: Box::new(inner),
                },
                span,
            ));
        }
        self.parse_equality()
    }

    fn parse_equality(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_comparison()?;
        loop {
            let start = left.span.start;
            let op = match self.peek_kind() {
                Some(TokenKind::Eq | TokenKind::EqEq) => Some(BinaryOp::Eq),
                Some(TokenKind::NotEq | TokenKind::LtGt) => Some(BinaryOp::NotEq),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let right = self.parse_comparison()?;
                left = Self::binary(op, left, right);
                continue;
            }
            if self.eat_word("ISNULL") {
                left = Expr::new(
                    ExprKind::IsNull {
                        expr: Box::new(left),
                        negated: false,
                    },
                    Span::new(start, self.prev_end()),
                );
                continue;
            }
            if self.eat_word("NOTNULL") {
                left = Expr::new(
                    ExprKind::IsNull {
                        expr: Box::new(left),
                        negated: true,
                    },
                    Span::new(start, self.prev_end()),
                );
                continue;
            }
            if self.at_word("IS") {
                self.pos += 1;
                let negated = self.eat_word("NOT");
                if self.at_word("DISTINCT") {
                    return self.error("IS DISTINCT FROM is not supported");
                }
                if self.eat_word("NULL") {
                    left = Expr::new(
                        ExprKind::IsNull {
                            expr: Box::new(left),
                            negated,
                        },
                        Span::new(start, self.prev_end()),
                    );
                } else {
                    let right = self.parse_comparison()?;
                    let span = Span::new(start, right.span.end);
                    left = Expr::new(
                        ExprKind::Is {
                            left: Box::new(left),
                            negated,
                            right: Box::new(right),
                        },
                        span,
                    );
                }
                continue;
            }
            let negated = self.at_word("NOT")
                && [
                    "IN", "LIKE", "GLOB", "REGEXP", "MATCH", "BETWEEN", "NULL",
                ]
                .iter()
                .any(|kw| self.at_word_at(1, kw));
            if negated {
                self.pos += 1;
            }
            if negated && self.eat_word("NULL") {
                left = Expr::new(
                    ExprKind::IsNull {
                        expr: Box::new(left),
                        negated: true,
                    },
                    Span::new(start, self.prev_end()),
                );
                continue;
            }
            if self.eat_word("IN") {
                left = self.parse_in_rhs(left, negated)?;
                continue;
            }
            let like = if self.eat_word("LIKE") {
                Some(LikeOp::Like)
            } else if self.eat_word("GLOB") {
                Some(LikeOp::Glob)
            } else if self.eat_word("REGEXP") {
                Some(LikeOp::Regexp)
            } else if self.eat_word("MATCH") {
                Some(LikeOp::Match)
            } else {
                None
            };
            if let Some(op) = like {
                let pattern = self.parse_comparison()?;
                let escape = if self.eat_word("ESCAPE") {
                    Some(Box::new(self.parse_comparison()?))
                } else {
                    None
                };
                left = Expr::new(
                    ExprKind::Like {
                        expr: Box::new(left),
                        negated,
                        op,
                        pattern: Box::new(pattern),
                        escape,
                    },
                    Span::new(start, self.prev_end()),
                );
                continue;
            }
            if self.eat_word("BETWEEN") {
                let low = self.parse_comparison()?;
                self.expect_word("AND")?;
                let high = self.parse_comparison()?;
                left = Expr::new(
                    ExprKind::Between {
                        expr: Box::new(left),
                        negated,
                        low: Box::new(low),
                        high: Box::new(high),
                    },
                    Span::new(start, self.prev_end()),
                );
                continue;
            }
            if negated {
                return self.error("expected IN, LIKE, BETWEEN or NULL after NOT");
            }
            break;
        }
        Ok(left)
    }

    fn parse_in_rhs(&mut self, left: Expr, negated: bool) -> Result<Expr, ParseError> {
        let start = left.span.start;
        if self.eat(&TokenKind::LParen) {
            if self.at_query_start() {
                let query = self.parse_query()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                return Ok(Expr::new(
                    ExprKind::InSubquery {
                        expr: Box::new(left),
                        negated,
                        query: Box::new(query),
                    },
                    Span::new(start, self.prev_end()),
                ));
            }
            let list = if self.peek_kind() == Some(&TokenKind::RParen) {
                Vec::new()
            } else {
                self.parse_expr_list()?
            };
            self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::new(
                ExprKind::InList {
                    expr: Box::new(left),
                    negated,
                    list,
                },
                Span::new(start, self.prev_end()),
            ));
        }
        let table = self.parse_ident()?;
        Ok(Expr::new(
            ExprKind::InTable {
                expr: Box::new(left),
                negated,
                table,
            },
            Span::new(start, self.prev_end()),
        ))
    }

    fn parse_comparison(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_bitwise()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Lt) => BinaryOp::Lt,
                Some(TokenKind::LtEq) => BinaryOp::LtEq,
                Some(TokenKind::Gt) => BinaryOp::Gt,
                Some(TokenKind::GtEq) => BinaryOp::GtEq,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_bitwise()?;
            left = Self::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_bitwise(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_additive()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Amp) => BinaryOp::BitAnd,
                Some(TokenKind::Pipe) => BinaryOp::BitOr,
                Some(TokenKind::ShiftL) => BinaryOp::ShiftL,
                Some(TokenKind::ShiftR) => BinaryOp::ShiftR,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_additive()?;
            left = Self::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_additive(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_multiplicative()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Plus) => BinaryOp::Plus,
                Some(TokenKind::Minus) => BinaryOp::Minus,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_multiplicative()?;
            left = Self::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_concat()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Star) => BinaryOp::Mul,
                Some(TokenKind::Slash) => BinaryOp::Div,
                Some(TokenKind::Percent) => BinaryOp::Mod,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_concat()?;
            left = Self::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_concat(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.parse_unary()?;
        loop {
            let op = match self.peek_kind() {
                Some(TokenKind::Concat) => BinaryOp::Concat,
                Some(TokenKind::Arrow) => BinaryOp::Arrow,
                Some(TokenKind::LongArrow) => BinaryOp::LongArrow,
                _ => break,
            };
            self.pos += 1;
            let right = self.parse_unary()?;
            left = Self::binary(op, left, right);
        }
        Ok(left)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let op = match self.peek_kind() {
            Some(TokenKind::Minus) => Some(UnaryOp::Neg),
            Some(TokenKind::Plus) => Some(UnaryOp::Plus),
            Some(TokenKind::Tilde) => Some(UnaryOp::BitNot),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let inner = self.parse_unary()?;
            let span = Span::new(start, inner.span.end);
            return Ok(Expr::new(
                ExprKind::Unary {
                    op,
                    expr: Box::new(inner),
                },
                span,
            ));
        }
        let mut expr = self.parse_primary()?;
        while self.eat_word("COLLATE") {
            let collation = self.parse_ident()?;
            let span = Span::new(expr.span.start, self.prev_end());
            expr = Expr::new(
                ExprKind::Collate {
                    expr: Box::new(expr),
                    collation,
                },
                span,
            );
        }
        Ok(expr)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let Some(tok) = self.peek().cloned() else {
            return self.error("expected expression");
        };
        let lit = |l: Literal, span| Ok(Expr::new(ExprKind::Literal(l), span));
        match tok.kind {
            TokenKind::Number(n) => {
                self.pos += 1;
                lit(Literal::Number(n), tok.span)
            }
            TokenKind::String(s) => {
                self.pos += 1;
                lit(Literal::String(s), tok.span)
            }
            TokenKind::Blob(b) => {
                self.pos += 1;
                lit(Literal::Blob(b), tok.span)
            }
            TokenKind::Param(p) => {
                self.pos += 1;
                Ok(Expr::new(ExprKind::Param(p), tok.span))
            }
            TokenKind::LParen => {
                self.pos += 1;
                if self.at_query_start() {
                    let query = self.parse_query()?;
                    self.expect(&TokenKind::RParen, "`)`")?;
                    return Ok(Expr::new(
                        ExprKind::Subquery(Box::new(query)),
                        Span::new(start, self.prev_end()),
                    ));
                }
                let items = self.parse_expr_list()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                Ok(Expr::new(
                    ExprKind::Nested(items),
                    Span::new(start, self.prev_end()),
                ))
            }
            TokenKind::Word(ref w) => {
                let upper = w.to_ascii_uppercase();
                match upper.as_str() {
                    "NULL" => {
                        self.pos += 1;
                        lit(Literal::Null, tok.span)
                    }
                    "TRUE" if !self.next_is_call() => {
                        self.pos += 1;
                        lit(Literal::True, tok.span)
                    }
                    "FALSE" if !self.next_is_call() => {
                        self.pos += 1;
                        lit(Literal::False, tok.span)
                    }
                    "CURRENT_TIME" => {
                        self.pos += 1;
                        lit(Literal::CurrentTime, tok.span)
                    }
                    "CURRENT_DATE" => {
                        self.pos += 1;
                        lit(Literal::CurrentDate, tok.span)
                    }
                    "CURRENT_TIMESTAMP" => {
                        self.pos += 1;
                        lit(Literal::CurrentTimestamp, tok.span)
                    }
                    "CAST" => self.parse_cast(),
                    "CASE" => self.parse_case(),
                    "EXISTS" => self.parse_exists(false),
                    "NOT" if self.at_word_at(1, "EXISTS") => {
                        self.pos += 1;
                        self.parse_exists(true)
                    }
                    "RAISE" if self.next_is_call() => {
                        self.pos += 1;
                        self.skip_balanced()?;
                        Ok(self.opaque_from(start))
                    }
                    _ if is_reserved(&upper) => self.error("expected expression"),
                    _ => self.parse_name_expr(),
                }
            }
            TokenKind::QuotedIdent(..) => self.parse_name_expr(),
            _ => self.error("expected expression"),
        }
    }

    fn next_is_call(&self) -> bool {
        self.peek_at(1).map(|t| &t.kind) == Some(&TokenKind::LParen)
    }

    fn opaque_from(&self, start: usize) -> Expr {
        let end = self.prev_end();
        Expr::new(
            ExprKind::Opaque(self.src[start..end].to_string()),
            Span::new(start, end),
        )
    }

    /// Consumes a parenthesized token run, including nested parentheses.
    fn skip_balanced(&mut self) -> Result<(), ParseError> {
        self.expect(&TokenKind::LParen, "`(`")?;
        let mut depth = 1usize;
        while depth > 0 {
            match self.next().map(|t| t.kind) {
                Some(TokenKind::LParen) => depth += 1,
                Some(TokenKind::RParen) => depth -= 1,
                Some(_) => {}
                None => return self.error("unbalanced parentheses"),
            }
        }
        Ok(())
    }

    fn parse_cast(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        self.expect_word("CAST")?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let expr = self.parse_expr()?;
        self.expect_word("AS")?;
        let mut parts: Vec<String> = Vec::new();
        while let Some(TokenKind::Word(w) | TokenKind::QuotedIdent(w, _)) =
            self.peek_kind().cloned()
        {
            parts.push(w);
            self.pos += 1;
        }
        if parts.is_empty() {
            return self.error("expected type name");
        }
        let mut type_name = parts.join(" ");
        if self.eat(&TokenKind::LParen) {
            let mut dims = Vec::new();
            loop {
                let sign = if self.eat(&TokenKind::Minus) { "-" } else { "" };
                match self.next().map(|t| t.kind) {
                    Some(TokenKind::Number(n)) => dims.push(format!("{sign}{n}")),
                    _ => return self.error("expected type size"),
                }
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(&TokenKind::RParen, "`)`")?;
            type_name = format!("{type_name}({})", dims.join(", "));
        }
        self.expect(&TokenKind::RParen, "`)`")?;
        Ok(Expr::new(
            ExprKind::Cast {
                expr: Box::new(expr),
                type_name,
            },
            Span::new(start, self.prev_end()),
        ))
    }

    fn parse_case(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        self.expect_word("CASE")?;
        let operand = if self.at_word("WHEN") {
            None
        } else {
            Some(Box::new(self.parse_expr()?))
        };
        let mut whens = Vec::new();
        while self.eat_word("WHEN") {
            let cond = self.parse_expr()?;
            self.expect_word("THEN")?;
            let result = self.parse_expr()?;
            whens.push((cond, result));
        }
        if whens.is_empty() {
            return self.error("expected WHEN");
        }
        let else_result = if self.eat_word("ELSE") {
            Some(Box::new(self.parse_expr()?))
        } else {
            None
        };
        self.expect_word("END")?;
        Ok(Expr::new(
            ExprKind::Case {
                operand,
                whens,
                else_result,
            },
            Span::new(start, self.prev_end()),
        ))
    }

    fn parse_exists(&mut self, negated: bool) -> Result<Expr, ParseError> {
        let start = if negated {
            self.tokens[self.pos - 1].span.start
        } else {
            self.here()
        };
        self.expect_word("EXISTS")?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let query = self.parse_query()?;
        self.expect(&TokenKind::RParen, "`)`")?;
        Ok(Expr::new(
            ExprKind::Exists {
                negated,
                query: Box::new(query),
            },
            Span::new(start, self.prev_end()),
        ))
    }

    /// Column reference or function call.
    fn parse_name_expr(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let first = self.parse_ident()?;
        if self.peek_kind() == Some(&TokenKind::LParen) {
            return self.parse_call(first, start);
        }
        let mut parts = vec![first];
        while self.peek_kind() == Some(&TokenKind::Dot) && parts.len() < 3 {
            self.pos += 1;
            parts.push(self.parse_ident()?);
        }
        let name = parts.pop().expect("at least one part");
        Ok(Expr::new(
            ExprKind::Column {
                qualifier: parts,
                name,
            },
            Span::new(start, self.prev_end()),
        ))
    }

    fn parse_call(&mut self, name: Ident, start: usize) -> Result<Expr, ParseError> {
        self.expect(&TokenKind::LParen, "`(`")?;
        let args = if self.eat(&TokenKind::Star) {
            FunctionArgs::Star
        } else if self.peek_kind() == Some(&TokenKind::RParen) {
            FunctionArgs::List {
                distinct: false,
                args: Vec::new(),
            }
        } else {
            let distinct = self.eat_word("DISTINCT");
            if !distinct {
                self.eat_word("ALL");
            }
            FunctionArgs::List {
                distinct,
                args: self.parse_expr_list()?,
            }
        };
        if self.at_word("ORDER") {
            // ordered-set aggregate arguments, e.g. group_concat(x ORDER BY y)
            while self.peek_kind().is_some() && self.peek_kind() != Some(&TokenKind::RParen) {
                self.pos += 1;
            }
            self.expect(&TokenKind::RParen, "`)`")?;
            return self.finish_opaque_call(start);
        }
        self.expect(&TokenKind::RParen, "`)`")?;
        if self.at_word("FILTER") || self.at_word("OVER") {
            return self.finish_opaque_call(start);
        }
        Ok(Expr::new(
            ExprKind::Function { name, args },
            Span::new(start, self.prev_end()),
        ))
    }

    /// Window and filter clauses are kept as opaque source text covering the
    /// whole call.
    fn finish_opaque_call(&mut self, start: usize) -> Result<Expr, ParseError> {
        if self.eat_word("FILTER") {
            self.skip_balanced()?;
        }
        if self.eat_word("OVER") {
            if self.peek_kind() == Some(&TokenKind::LParen) {
                self.skip_balanced()?;
            } else {
                self.parse_ident()?;
            }
        }
        Ok(self.opaque_from(start))
    }
}
