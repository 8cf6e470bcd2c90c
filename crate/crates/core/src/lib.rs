//! Plan generation with a small transformer policy, improved by harvesting
//! shorter plans from its own sampled candidates.

pub mod domains;
pub mod harvest;
pub mod improve;
pub mod metrics;
pub mod pddl;
pub mod policy;
pub mod tokenizer;
pub mod world;

pub use domains::{DomainKind, GeneratorConfig, Instance, ProblemSet};
pub use pddl::{DomainDef, GroundedTask, ProblemDef};
pub use world::{CompiledPlan, Plan, State};
