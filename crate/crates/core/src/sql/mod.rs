//! Tokenizer, parser, name resolution and canonical rendering for the
//! accepted SQL subset:
//!
//! ```text
//! SELECT (* | COUNT(*) | col [, col]*)
//! FROM table
//! [JOIN table ON t1.col = t2.col]
//! [WHERE col op 'literal' [AND col op 'literal']*]
//! [LIMIT n] [;]
//! ```

mod ast;
mod parser;
mod render;
mod resolve;
mod token;

pub use ast::{CmpOp, ColumnName, Comparison, JoinClause, Predicate, Projection, Query};
pub use parser::parse;
pub use render::{quote_identifier, render};
pub use resolve::{resolve, BoundColumn, BoundComparison, ResolvedProjection, ResolvedQuery};
pub use token::{tokenize, Keyword, Token, TokenKind};

/// Column label used for `COUNT(*)` results.
pub const COUNT_COLUMN: &str = "count";
