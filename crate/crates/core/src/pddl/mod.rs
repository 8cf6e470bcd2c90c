//! PDDL front-end for the STRIPS + typing subset, and grounding into an
//! indexed task.
//!
//! Supported: `:strips`, `:typing`, and `:action-costs` (cost functions,
//! `increase` effects and `:metric` are read and dropped since plan length
//! is measured in actions). Goals are conjunctions of positive atoms.

mod ast;
mod error;
mod ground;
mod parse;
pub mod sexpr;

pub use ast::{
    Atom, DomainDef, OperatorSchema, PredicateDef, ProblemDef, Requirement, TypedName, ROOT_TYPE,
};
pub use error::{GroundError, ParseError, ParseErrorKind};
pub use ground::{ground, ground_with_budget, GroundAction, GroundAtom, GroundBudget, GroundedTask};
pub use parse::{
    parse_domain, parse_domain_named, parse_plan_text, parse_problem, parse_problem_named,
};
