use crate::error::{ErrorCode, QueryError};

use super::ast::{ColumnName, Comparison, JoinClause, Predicate, Projection, Query};
use super::token::{tokenize, Keyword, Token, TokenKind};

/// Parses a single SELECT statement, with at most one trailing semicolon.
pub fn parse(text: &str) -> Result<Query, QueryError> {
    let tokens = tokenize(text)?;
    Parser {
        tokens: &tokens,
        pos: 0,
        end: text.len(),
    }
    .statement()
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.position)
    }

    fn error(&self, expected: &str) -> QueryError {
        let found = match self.peek() {
            None => "end of input".to_string(),
            Some(kind) => describe(kind),
        };
        QueryError::syntax(
            format!("expected {expected}, found {found}"),
            self.position(),
        )
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: Keyword) -> bool {
        self.eat(&TokenKind::Keyword(kw))
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<(), QueryError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn expect_keyword(&mut self, kw: Keyword) -> Result<(), QueryError> {
        self.expect(&TokenKind::Keyword(kw), kw.as_str())
    }

    fn identifier(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => Err(self.error(what)),
        }
    }

    fn statement(mut self) -> Result<Query, QueryError> {
        match self.peek() {
            None => return Err(QueryError::syntax("empty query", 0)),
            Some(TokenKind::Keyword(Keyword::Select)) => self.pos += 1,
            Some(_) => {
                return Err(QueryError::at(
                    ErrorCode::NonQuery,
                    "only SELECT queries are accepted",
                    self.position(),
                ))
            }
        }
        let projection = self.projection()?;
        self.expect_keyword(Keyword::From)?;
        let from = self.identifier("table name")?;
        let join = if self.eat_keyword(Keyword::Join) {
            Some(self.join_clause()?)
        } else {
            None
        };
        let filter = if self.eat_keyword(Keyword::Where) {
            Some(self.predicate()?)
        } else {
            None
        };
        let limit = if self.eat_keyword(Keyword::Limit) {
            match self.peek() {
                Some(TokenKind::Number(n)) => {
                    self.pos += 1;
                    Some(*n)
                }
                _ => return Err(self.error("row count after LIMIT")),
            }
        } else {
            None
        };
        if self.eat(&TokenKind::Semicolon) && self.peek().is_some() {
            return Err(QueryError::at(
                ErrorCode::NonQuery,
                "only a single statement is accepted",
                self.position(),
            ));
        }
        if self.peek().is_some() {
            return Err(self.error("end of query"));
        }
        Ok(Query {
            projection,
            from,
            join,
            filter,
            limit,
        })
    }

    fn projection(&mut self) -> Result<Projection, QueryError> {
        if self.eat(&TokenKind::Star) {
            return Ok(Projection::Star);
        }
        if self.eat_keyword(Keyword::Count) {
            self.expect(&TokenKind::LParen, "(")?;
            self.expect(&TokenKind::Star, "*")?;
            self.expect(&TokenKind::RParen, ")")?;
            if self.peek() == Some(&TokenKind::Comma) {
                return Err(QueryError::at(
                    ErrorCode::Unsupported,
                    "COUNT(*) cannot be combined with other columns",
                    self.position(),
                ));
            }
            return Ok(Projection::CountStar);
        }
        let mut columns = vec![self.column()?];
        while self.eat(&TokenKind::Comma) {
            if self.peek() == Some(&TokenKind::Keyword(Keyword::Count))
                || self.peek() == Some(&TokenKind::Star)
            {
                return Err(QueryError::at(
                    ErrorCode::Unsupported,
                    "only plain columns can be listed together",
                    self.position(),
                ));
            }
            columns.push(self.column()?);
        }
        Ok(Projection::Columns(columns))
    }

    fn column(&mut self) -> Result<ColumnName, QueryError> {
        let first = self.identifier("column name")?;
        if self.eat(&TokenKind::Dot) {
            let name = self.identifier("column name after '.'")?;
            Ok(ColumnName::qualified(first, name))
        } else {
            Ok(ColumnName::bare(first))
        }
    }

    fn join_clause(&mut self) -> Result<JoinClause, QueryError> {
        let table = self.identifier("table name after JOIN")?;
        self.expect_keyword(Keyword::On)?;
        let at = self.position();
        let left = self.column()?;
        self.expect(&TokenKind::Op(super::CmpOp::Eq), "= in join condition")?;
        let right = self.column()?;
        if left.table.is_none() || right.table.is_none() {
            return Err(QueryError::syntax(
                "join columns must be qualified with their table",
                at,
            ));
        }
        Ok(JoinClause { table, left, right })
    }

    fn predicate(&mut self) -> Result<Predicate, QueryError> {
        let mut comparisons = vec![self.comparison()?];
        while self.eat_keyword(Keyword::And) {
            comparisons.push(self.comparison()?);
        }
        Ok(Predicate { comparisons })
    }

    fn comparison(&mut self) -> Result<Comparison, QueryError> {
        let column = self.column()?;
        let op = match self.peek() {
            Some(TokenKind::Op(op)) => {
                self.pos += 1;
                *op
            }
            _ => return Err(self.error("comparison operator")),
        };
        let literal = match self.peek() {
            Some(TokenKind::Str(s)) => {
                self.pos += 1;
                s.clone()
            }
            _ => return Err(self.error("quoted string literal")),
        };
        Ok(Comparison {
            column,
            op,
            literal,
        })
    }
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Keyword(kw) => kw.as_str().to_string(),
        TokenKind::Ident(name) => format!("identifier {name}"),
        TokenKind::Str(_) => "string literal".into(),
        TokenKind::Number(n) => format!("number {n}"),
        TokenKind::Star => "'*'".into(),
        TokenKind::Comma => "','".into(),
        TokenKind::LParen => "'('".into(),
        TokenKind::RParen => "')'".into(),
        TokenKind::Dot => "'.'".into(),
        TokenKind::Semicolon => "';'".into(),
        TokenKind::Op(op) => format!("'{}'", op.symbol()),
    }
}
