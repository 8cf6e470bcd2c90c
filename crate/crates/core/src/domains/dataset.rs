use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{baseline_solve, bfs_oracle, BaselineStrategy, CandidateStream, DomainError, DomainKind, GeneratorConfig, Instance};
use crate::pddl::{self, GroundedTask};

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DatasetRecord {
    pub id: String,
    pub domain_name: DomainKind,
    pub problem_pddl_text: String,
    pub plan: Option<Vec<String>>,
    pub plan_source: String,
    pub optimal_length: Option<usize>,
}

impl DatasetRecord {
    pub fn instance(&self) -> Result<Instance, DomainError> {
        let mut problem = pddl::parse_problem_named(&self.problem_pddl_text, self.domain_name.domain_def(), &self.id)?;
        problem.name = self.id.clone();
        Ok(Instance {
            id: self.id.clone(),
            domain: self.domain_name,
            problem,
        })
    }

    /// The stored plan as action indices of `task`, if every step resolves.
    pub fn plan_actions(&self, task: &GroundedTask) -> Option<Vec<u32>> {
        self.plan.as_ref()?.iter().map(|s| task.parse_action(s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub generator: GeneratorConfig,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub strategy: BaselineStrategy,
    /// Node budget for the BFS oracle on test instances; `None` skips it.
    pub oracle_budget: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<DatasetRecord>,
    pub valid: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

impl DatasetSplits {
    pub fn all(&self) -> impl Iterator<Item = &DatasetRecord> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Generates structurally distinct instances, keeps those the baseline
/// solves, and deals them into train, validation and test splits in order.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<DatasetSplits, DomainError> {
    cfg.generator.validate()?;
    let kind = cfg.generator.kind();
    let wanted = cfg.train + cfg.valid + cfg.test;
    let max_attempts = wanted.max(1) * cfg.generator.attempts_per_instance;
    let mut stream = CandidateStream::new(&cfg.generator);
    let mut out = DatasetSplits::default();
    let mut made = 0;
    while made < wanted {
        let Some(mut problem) = stream.next_unique(max_attempts) else {
            return Err(DomainError::RetryBudget {
                wanted,
                got: made,
                attempts: stream.attempts(),
            });
        };
        let id = format!("{}-{:06}", kind.name(), made);
        problem.name = id.clone();
        let task = pddl::ground(kind.domain_def(), &problem)?;
        if crate::world::satisfies(&task.init, &task.goal) {
            continue;
        }
        let plan = match baseline_solve(kind, &problem, &task, &cfg.strategy) {
            Ok(p) => p,
            Err(DomainError::Unsolved(_)) | Err(DomainError::External(_)) => continue,
            Err(e) => return Err(e),
        };
        let is_test = made >= cfg.train + cfg.valid;
        let optimal_length = match cfg.oracle_budget {
            Some(b) if is_test => bfs_oracle(&task, b).length(),
            _ => None,
        };
        let rec = DatasetRecord {
            id,
            domain_name: kind,
            problem_pddl_text: problem.to_string(),
            plan: Some(plan.action_names(&task)),
            plan_source: cfg.strategy.tag().to_string(),
            optimal_length,
        };
        if made < cfg.train {
            out.train.push(rec);
        } else if made < cfg.train + cfg.valid {
            out.valid.push(rec);
        } else {
            out.test.push(rec);
        }
        made += 1;
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), DomainError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, DomainError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
