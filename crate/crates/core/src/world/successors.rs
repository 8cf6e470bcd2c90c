use super::{applicable, State};
use crate::pddl::GroundedTask;

/// Enumerates applicable actions without scanning the whole action list.
///
/// Each action is filed under one of its precondition atoms, the one shared
/// by the fewest actions. Only actions filed under atoms true in the state
/// are checked, so actions anchored on never-true atoms (e.g. non-adjacent
/// cells) cost nothing.
pub struct SuccessorGenerator<'t> {
    task: &'t GroundedTask,
    by_anchor: Vec<Vec<u32>>,
    unconditional: Vec<u32>,
}

impl<'t> SuccessorGenerator<'t> {
    pub fn new(task: &'t GroundedTask) -> Self {
        let mut refs = vec![0u32; task.num_atoms()];
        for a in &task.actions {
            for &p in &a.pre {
                refs[p as usize] += 1;
            }
        }
        let mut by_anchor = vec![Vec::new(); task.num_atoms()];
        let mut unconditional = Vec::new();
        for a in &task.actions {
            match a.pre.iter().min_by_key(|&&p| (refs[p as usize], p)) {
                Some(&p) => by_anchor[p as usize].push(a.id),
                None => unconditional.push(a.id),
            }
        }
        SuccessorGenerator {
            task,
            by_anchor,
            unconditional,
        }
    }

    /// Applicable action ids in ascending order.
    pub fn applicable(&self, s: &State) -> Vec<u32> {
        let mut out: Vec<u32> = self.unconditional.clone();
        for atom in s.ones() {
            for &a in &self.by_anchor[atom] {
                if applicable(s, &self.task.actions[a as usize]) {
                    out.push(a);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn task(&self) -> &'t GroundedTask {
        self.task
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{DomainKind, GeneratorConfig};

    #[test]
    fn matches_linear_scan() {
        for kind in DomainKind::ALL {
            let cfg = GeneratorConfig::minimal(kind, 3, 11);
            let set = crate::domains::generate(&cfg).unwrap();
            for inst in &set.problems {
                let t = inst.ground().unwrap();
                let gen = SuccessorGenerator::new(&t);
                let scan: Vec<u32> = t
                    .actions
                    .iter()
                    .filter(|a| applicable(&t.init, a))
                    .map(|a| a.id)
                    .collect();
                assert_eq!(gen.applicable(&t.init), scan, "{kind:?}");
            }
        }
    }
}
