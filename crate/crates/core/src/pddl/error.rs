use std::fmt;

use thiserror::Error;

use super::sexpr::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical(String),
    Syntax(String),
    UnknownRequirement(String),
    Unsupported(String),
    UndeclaredPredicate(String),
    UndeclaredType(String),
    UndeclaredVariable(String),
    UnknownObject(String),
    DuplicatePredicate(String),
    DuplicateObject(String),
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
    TypeMismatch {
        predicate: String,
        argument: String,
        expected: String,
    },
    DomainMismatch {
        expected: String,
        found: String,
    },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        match self {
            Lexical(m) => write!(f, "lexical error: {m}"),
            Syntax(m) => write!(f, "syntax error: {m}"),
            UnknownRequirement(r) => write!(f, "unsupported requirement `{r}`"),
            Unsupported(m) => write!(f, "unsupported construct: {m}"),
            UndeclaredPredicate(p) => write!(f, "undeclared predicate `{p}`"),
            UndeclaredType(t) => write!(f, "undeclared type `{t}`"),
            UndeclaredVariable(v) => write!(f, "variable `{v}` is not an operator parameter"),
            UnknownObject(o) => write!(f, "unknown object `{o}`"),
            DuplicatePredicate(p) => write!(f, "predicate `{p}` declared twice"),
            DuplicateObject(o) => write!(f, "object `{o}` declared twice"),
            ArityMismatch {
                predicate,
                expected,
                found,
            } => write!(
                f,
                "predicate `{predicate}` takes {expected} argument(s), found {found}"
            ),
            TypeMismatch {
                predicate,
                argument,
                expected,
            } => write!(
                f,
                "argument `{argument}` of `{predicate}` is not of type `{expected}`"
            ),
            DomainMismatch { expected, found } => {
                write!(f, "problem is for domain `{found}`, expected `{expected}`")
            }
        }
    }
}

/// A PDDL front-end error, located at `file:line:col`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}:{line}:{col}: {kind}")]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub(crate) fn new(file: &str, pos: Pos, kind: ParseErrorKind) -> Self {
        ParseError {
            file: file.to_string(),
            line: pos.line,
            col: pos.col,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("grounding needs {needed} {what}, budget is {limit}")]
    Budget {
        what: &'static str,
        needed: u128,
        limit: usize,
    },
    #[error("problem atom {0} is not in the grounded universe")]
    UnknownAtom(String),
}
