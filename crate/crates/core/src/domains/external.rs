use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{DomainError, DomainKind};
use crate::pddl::{parse_plan_text, GroundedTask, ProblemDef};

/// A planner invoked through `sh -c` with `{domain}`, `{problem}` and
/// `{plan-out}` substituted by file paths. The plan file holds one
/// parenthesized action per line; `;` comments are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPlanner {
    pub command: String,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

static CALLS: AtomicU64 = AtomicU64::new(0);

impl ExternalPlanner {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalPlanner {
            command: command.into(),
            timeout_secs: None,
        }
    }

    pub fn solve(&self, kind: DomainKind, problem: &ProblemDef, task: &GroundedTask) -> Result<Vec<u32>, DomainError> {
        let dir = std::env::temp_dir().join(format!(
            "plangen-planner-{}-{}",
            std::process::id(),
            CALLS.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::create_dir_all(&dir)?;
        let result = self.run_in(&dir, kind, problem, task);
        let _ = std::fs::remove_dir_all(&dir);
        result
    }

    fn run_in(
        &self,
        dir: &std::path::Path,
        kind: DomainKind,
        problem: &ProblemDef,
        task: &GroundedTask,
    ) -> Result<Vec<u32>, DomainError> {
        let domain_path = dir.join("domain.pddl");
        let problem_path = dir.join("problem.pddl");
        let plan_path: PathBuf = dir.join("plan.txt");
        std::fs::write(&domain_path, kind.domain_pddl())?;
        std::fs::write(&problem_path, problem.to_string())?;
        let cmd = self
            .command
            .replace("{domain}", &domain_path.display().to_string())
            .replace("{problem}", &problem_path.display().to_string())
            .replace("{plan-out}", &plan_path.display().to_string());
        let mut child = Command::new("sh").arg("-c").arg(&cmd).spawn()?;
        let start = Instant::now();
        let status = loop {
            if let Some(st) = child.try_wait()? {
                break st;
            }
            if let Some(t) = self.timeout_secs {
                if start.elapsed() > Duration::from_secs(t) {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(DomainError::External(format!("timed out after {t}s")));
                }
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        if !status.success() {
            return Err(DomainError::External(format!("`{cmd}` exited with {status}")));
        }
        let text = std::fs::read_to_string(&plan_path)
            .map_err(|e| DomainError::External(format!("no plan written: {e}")))?;
        let atoms = parse_plan_text(&text)?;
        atoms
            .iter()
            .map(|a| {
                let args: Vec<&str> = a.args.iter().map(String::as_str).collect();
                task.lookup_action(&a.predicate, &args)
                    .ok_or_else(|| DomainError::External(format!("unknown action {a}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{baseline_solve, BaselineStrategy};
    use crate::pddl::{ground, parse_problem};

    const SWAP: &str = "(define (problem s) (:domain blocksworld) (:objects a b - block)
        (:init (on a b) (on-table b) (clear a) (arm-empty)) (:goal (and (on b a))))";

    #[test]
    fn shell_planner_round_trip() {
        let d = DomainKind::Blocksworld.domain_def();
        let p = parse_problem(SWAP, d).unwrap();
        let t = ground(d, &p).unwrap();
        let cmd = "test -f {domain} && test -f {problem} && printf '(unstack a b)\\n(put-down a)\\n; comment\\n(pick-up b)\\n(stack b a)\\n' > {plan-out}";
        let s = BaselineStrategy::External(ExternalPlanner::new(cmd));
        let plan = baseline_solve(DomainKind::Blocksworld, &p, &t, &s).unwrap();
        assert_eq!(plan.len(), 4);

        let bad = BaselineStrategy::External(ExternalPlanner::new("printf '(pick-up b)\\n' > {plan-out}"));
        assert!(baseline_solve(DomainKind::Blocksworld, &p, &t, &bad).is_err());
        let failing = BaselineStrategy::External(ExternalPlanner::new("exit 3"));
        assert!(matches!(
            baseline_solve(DomainKind::Blocksworld, &p, &t, &failing),
            Err(DomainError::External(_))
        ));
    }
}
