//! A small, deterministic Cypher dialect.
//!
//! ```text
//! query := "MATCH" path ("," path)* ["WHERE" cond ("AND" cond)*]
//!          "RETURN" item ("," item)* ["LIMIT" integer]
//! path  := node (edge node)*
//! node  := "(" [ident] ["{" "name" ":" strlit "}"] ")"
//! edge  := "-[" [ident] ":" ident "]->" | "<-[" [ident] ":" ident "]-"
//! cond  := ident "." "name" "=" strlit
//! item  := ident ["." "name"]
//! ```
//!
//! Results use set semantics and are ordered by canonical entity names.
//! Anchors (`{name:"..."}`) resolve through alias ranking; `WHERE` filters
//! compare canonical names exactly.

mod ast;
mod exec;
mod lexer;
mod parser;

use thiserror::Error;

pub use ast::{
    Condition, CypherQuery, EdgeDirection, EdgePattern, NodePattern, PathPattern, ReturnItem,
};
pub use exec::{execute, sort_rows_by_name, BindingTable};
pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CypherError {
    #[error("unterminated string literal at offset {offset}")]
    UnterminatedString { offset: usize },
    #[error("unexpected character {ch:?} at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("parse error at offset {offset}: expected {}, found {found}", expected.join(" or "))]
    Parse {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("parse error at offset {offset}: LIMIT must be a positive integer")]
    InvalidLimit { offset: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("variable `{0}` is used both as a node and as a relationship")]
    VariableRoleConflict(String),
    #[error("relationship variable `{0}` is bound more than once")]
    DuplicateEdgeVariable(String),
    #[error("`{0}` is a relationship variable; only node variables can be filtered or returned")]
    EdgeVariableNotAllowed(String),
    #[error("anchor {0:?} does not resolve to any entity")]
    UnresolvedAnchor(String),
}

impl CypherError {
    /// Character offset for lexical and grammar errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            CypherError::UnterminatedString { offset }
            | CypherError::UnexpectedChar { offset, .. }
            | CypherError::Parse { offset, .. }
            | CypherError::InvalidLimit { offset } => Some(*offset),
            _ => None,
        }
    }
}

/// Tokenizes and parses in one step.
pub fn parse_query(text: &str) -> Result<CypherQuery, CypherError> {
    parse(&tokenize(text)?)
}

/// Canonical query text; parsing it yields the same AST.
pub fn render(query: &CypherQuery) -> String {
    query.to_string()
}
