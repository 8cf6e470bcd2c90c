use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::pddl::GroundedTask;
use crate::world::{apply, satisfies, State, SuccessorGenerator};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleResult {
    Optimal(Vec<u32>),
    /// The reachable state space was exhausted without reaching the goal.
    Unsolvable,
    BudgetExceeded,
}

impl OracleResult {
    pub fn length(&self) -> Option<usize> {
        match self {
            OracleResult::Optimal(p) => Some(p.len()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Vec<u32>),
    Exhausted,
    Budget,
}

struct Tree {
    states: Vec<State>,
    parent: Vec<(u32, u32)>,
    index: HashMap<State, u32>,
}

impl Tree {
    fn new(root: State) -> Self {
        let mut index = HashMap::new();
        index.insert(root.clone(), 0);
        Tree {
            states: vec![root],
            parent: vec![(u32::MAX, u32::MAX)],
            index,
        }
    }

    /// Inserts a new state; `None` if it was already known.
    fn add(&mut self, s: State, parent: u32, action: u32) -> Option<u32> {
        if self.index.contains_key(&s) {
            return None;
        }
        let id = self.states.len() as u32;
        self.index.insert(s.clone(), id);
        self.states.push(s);
        self.parent.push((parent, action));
        Some(id)
    }

    fn path(&self, mut node: u32) -> Vec<u32> {
        let mut out = Vec::new();
        while self.parent[node as usize].0 != u32::MAX {
            let (p, a) = self.parent[node as usize];
            out.push(a);
            node = p;
        }
        out.reverse();
        out
    }
}

/// Breadth-first search for a shortest plan, storing at most `node_budget`
/// states.
pub fn bfs_oracle(task: &GroundedTask, node_budget: usize) -> OracleResult {
    if satisfies(&task.init, &task.goal) {
        return OracleResult::Optimal(Vec::new());
    }
    let gen = SuccessorGenerator::new(task);
    let mut tree = Tree::new(task.init.clone());
    let mut queue = VecDeque::from([0u32]);
    while let Some(node) = queue.pop_front() {
        let s = tree.states[node as usize].clone();
        for a in gen.applicable(&s) {
            let next = apply(&s, &task.actions[a as usize]);
            let reached = satisfies(&next, &task.goal);
            if let Some(id) = tree.add(next, node, a) {
                if reached {
                    return OracleResult::Optimal(tree.path(id));
                }
                if tree.states.len() >= node_budget {
                    return OracleResult::BudgetExceeded;
                }
                queue.push_back(id);
            }
        }
    }
    OracleResult::Unsolvable
}

/// Greedy best-first search on the number of unsatisfied goal atoms, ties
/// broken first-in first-out.
pub fn gbfs(task: &GroundedTask, node_budget: usize) -> SearchOutcome {
    if satisfies(&task.init, &task.goal) {
        return SearchOutcome::Found(Vec::new());
    }
    let h = |s: &State| task.goal.ones().filter(|&g| !s.contains(g)).count();
    let gen = SuccessorGenerator::new(task);
    let mut tree = Tree::new(task.init.clone());
    let mut open = BinaryHeap::new();
    open.push(Reverse((h(&task.init), 0u32)));
    while let Some(Reverse((_, node))) = open.pop() {
        let s = tree.states[node as usize].clone();
        for a in gen.applicable(&s) {
            let next = apply(&s, &task.actions[a as usize]);
            let hn = h(&next);
            if let Some(id) = tree.add(next, node, a) {
                if hn == 0 {
                    return SearchOutcome::Found(tree.path(id));
                }
                if tree.states.len() >= node_budget {
                    return SearchOutcome::Budget;
                }
                open.push(Reverse((hn, id)));
            }
        }
    }
    SearchOutcome::Exhausted
}

/// Iterative-deepening DFS up to `max_depth`; returns a shortest plan.
/// Exponential, meant for cross-checking on tiny tasks.
pub fn iddfs(task: &GroundedTask, max_depth: usize) -> Option<Vec<u32>> {
    fn dfs(
        task: &GroundedTask,
        gen: &SuccessorGenerator,
        path_states: &mut Vec<State>,
        plan: &mut Vec<u32>,
        limit: usize,
    ) -> bool {
        let s = path_states.last().expect("non-empty").clone();
        if satisfies(&s, &task.goal) {
            return true;
        }
        if plan.len() == limit {
            return false;
        }
        for a in gen.applicable(&s) {
            let next = apply(&s, &task.actions[a as usize]);
            if path_states.contains(&next) {
                continue;
            }
            path_states.push(next);
            plan.push(a);
            if dfs(task, gen, path_states, plan, limit) {
                return true;
            }
            plan.pop();
            path_states.pop();
        }
        false
    }
    let gen = SuccessorGenerator::new(task);
    for limit in 0..=max_depth {
        let mut states = vec![task.init.clone()];
        let mut plan = Vec::new();
        if dfs(task, &gen, &mut states, &mut plan, limit) {
            return Some(plan);
        }
    }
    None
}
