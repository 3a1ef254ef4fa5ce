//! A deterministic toy language whose interpreter step count is an exact,
//! platform-independent runtime.
//!
//! ```text
//! program  = { stmt } ;
//! stmt     = ident "=" expr ";"
//!          | "print" "(" expr ")" ";"
//!          | "while" "(" expr ")" block
//!          | "if" "(" expr ")" block [ "else" block ] ;
//! block    = "{" { stmt } "}" ;
//! expr     = or ;
//! or       = and { "||" and } ;
//! and      = equality { "&&" equality } ;
//! equality = relation { ( "==" | "!=" ) relation } ;
//! relation = additive { ( "<" | "<=" | ">" | ">=" ) additive } ;
//! additive = term { ( "+" | "-" ) term } ;
//! term     = unary { ( "*" | "/" | "%" ) unary } ;
//! unary    = ( "-" | "!" ) unary | primary ;
//! primary  = integer | ident | "in0" .. "in9" | "(" expr ")" ;
//! ```
//!
//! Values are 64-bit signed integers; overflow, division by zero and reads of
//! unassigned variables are runtime errors.

mod ast;
mod interp;
mod lexer;
mod parser;
mod pretty;

pub use ast::{BinOp, Expr, Program, Stmt, UnOp, INPUT_SLOTS, MAX_DEPTH};
pub use interp::{run, ExecOutcome, ExecStatus};
pub use parser::parse;
pub use pretty::{print_expr, print_program};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinilangError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("nesting depth exceeds {MAX_DEPTH} at {line}:{col}")]
    DepthOverflow { line: usize, col: usize },
}

/// Parses whitespace-separated integers as used by test-case inputs/outputs.
pub fn parse_values(text: &str) -> Result<Vec<i64>, std::num::ParseIntError> {
    text.split_whitespace().map(str::parse).collect()
}

/// Formats values the way test-case outputs are stored: one per line.
pub fn format_values(values: &[i64]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
