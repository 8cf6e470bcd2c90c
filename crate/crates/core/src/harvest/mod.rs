//! Improved training labels from sampled candidates: compile and filter,
//! merge into a per-problem state graph, extract its shortest plan, and keep
//! the best plan ever seen per problem.

mod cache;
mod graph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheEntry, SolutionCache};
pub use graph::{compile_and_filter, StateGraph};

use crate::domains::{DatasetRecord, DomainError, Instance};
use crate::pddl::GroundedTask;
use crate::policy::Candidate;
use crate::world::validate_actions;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("inconsistent data: {0}")]
    Integrity(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Where an emitted label came from.
pub fn harvest_source(iteration: usize) -> String {
    format!("harvest-iter-{iteration}")
}

pub const CACHE_SOURCE: &str = "cache";

/// What happened to one problem during harvesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProblemHarvest {
    pub id: String,
    pub candidates: usize,
    pub valid: usize,
    pub shortest_candidate: Option<usize>,
    pub harvested: Option<usize>,
    /// Length of the emitted label (harvested or cached).
    pub emitted: Option<usize>,
    pub cache_improved: bool,
}

#[derive(Debug, Clone, Default)]
pub struct HarvestOutcome {
    pub records: Vec<DatasetRecord>,
    pub problems: Vec<ProblemHarvest>,
}

impl HarvestOutcome {
    pub fn candidates(&self) -> usize {
        self.problems.iter().map(|p| p.candidates).sum()
    }

    pub fn valid_candidates(&self) -> usize {
        self.problems.iter().map(|p| p.valid).sum()
    }

    pub fn harvested(&self) -> usize {
        self.problems.iter().filter(|p| p.harvested.is_some()).count()
    }

    pub fn mean_harvested_length(&self) -> Option<f64> {
        let l: Vec<f64> = self.problems.iter().filter_map(|p| p.harvested).map(|x| x as f64).collect();
        (!l.is_empty()).then(|| l.iter().sum::<f64>() / l.len() as f64)
    }
}

/// Shortest plan through the graph of the valid candidates, or `None` when
/// no candidate is valid.
pub fn best_through_graph(task: &GroundedTask, candidates: &[Vec<u32>]) -> Option<Vec<u32>> {
    let valid = compile_and_filter(task, candidates);
    if valid.is_empty() {
        return None;
    }
    StateGraph::build(task, &valid).shortest_plan()
}

/// Harvests one iteration. Problems without a valid candidate contribute
/// nothing; otherwise the label is the shorter of the harvested plan and the
/// cached one (the cached one on ties) and the cache takes strict
/// improvements.
pub fn harvest(
    problems: &[(&Instance, &GroundedTask, &[Candidate])],
    cache: &mut SolutionCache,
    iteration: usize,
) -> Result<HarvestOutcome, HarvestError> {
    let mut out = HarvestOutcome::default();
    for &(inst, task, cands) in problems {
        let decoded: Vec<Vec<u32>> = cands.iter().filter_map(|c| c.as_ref().ok().cloned()).collect();
        let valid = compile_and_filter(task, &decoded);
        let mut ph = ProblemHarvest {
            id: inst.id.clone(),
            candidates: cands.len(),
            valid: valid.len(),
            shortest_candidate: valid.iter().map(|c| c.actions.len()).min(),
            harvested: None,
            emitted: None,
            cache_improved: false,
        };
        if valid.is_empty() {
            out.problems.push(ph);
            continue;
        }
        let plan = StateGraph::build(task, &valid)
            .shortest_plan()
            .ok_or_else(|| HarvestError::Integrity(format!("no path in the graph of `{}`", inst.id)))?;
        if !validate_actions(task, &plan).is_solution() {
            return Err(HarvestError::Integrity(format!("harvested plan of `{}` is invalid", inst.id)));
        }
        ph.harvested = Some(plan.len());
        let names: Vec<String> = plan.iter().map(|&a| task.action_name(a)).collect();
        let improved = cache.offer(&inst.id, names, iteration);
        ph.cache_improved = improved;
        let entry = cache.get(&inst.id).expect("offered");
        let source = if improved {
            harvest_source(iteration)
        } else {
            CACHE_SOURCE.to_string()
        };
        let check: Option<Vec<u32>> = entry.plan.iter().map(|s| task.parse_action(s)).collect();
        match check {
            Some(ids) if validate_actions(task, &ids).is_solution() => {}
            _ => {
                return Err(HarvestError::Integrity(format!(
                    "cached plan of `{}` does not solve it",
                    inst.id
                )))
            }
        }
        ph.emitted = Some(entry.length);
        out.records.push(DatasetRecord {
            id: inst.id.clone(),
            domain_name: inst.domain,
            problem_pddl_text: inst.problem.to_string(),
            plan: Some(entry.plan.clone()),
            plan_source: source,
            optimal_length: None,
        });
        out.problems.push(ph);
    }
    Ok(out)
}
