use std::collections::VecDeque;

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};

use crate::pddl::GroundedTask;
use crate::world::{satisfies, validate_actions, CompiledPlan, State};

/// Keeps the candidates that execute and reach the goal, compiled to their
/// state sequences, in input order.
pub fn compile_and_filter(task: &GroundedTask, candidates: &[Vec<u32>]) -> Vec<CompiledPlan> {
    candidates
        .iter()
        .map(|c| validate_actions(task, c))
        .filter(CompiledPlan::is_solution)
        .collect()
}

/// The union of the state sequences of several plans of one problem.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateGraph {
    /// `states[v]` is the state of vertex `v` (empty for graphs built from
    /// bare edges).
    pub states: Vec<State>,
    /// Unique (from, action, to) transitions in insertion order.
    pub edges: Vec<(u32, u32, u32)>,
    pub init: Option<u32>,
    pub goal: Vec<bool>,
}

impl StateGraph {
    /// Builds the graph in time linear in the total number of transitions.
    /// Every vertex whose state satisfies the goal is a goal vertex.
    pub fn build(task: &GroundedTask, plans: &[CompiledPlan]) -> Self {
        let mut index: HashMap<&State, u32> = HashMap::default();
        let mut states: Vec<&State> = Vec::new();
        // (source, action) determines the target
        let mut seen: HashSet<u64> = HashSet::default();
        let mut edges = Vec::new();
        for p in plans {
            let mut prev: Option<u32> = None;
            for (t, s) in p.states.iter().enumerate() {
                let v = *index.entry(s).or_insert_with(|| {
                    states.push(s);
                    states.len() as u32 - 1
                });
                if let Some(u) = prev {
                    let a = p.actions[t - 1];
                    if seen.insert((u as u64) << 32 | a as u64) {
                        edges.push((u, a, v));
                    }
                }
                prev = Some(v);
            }
        }
        let init = index.get(&task.init).copied();
        let goal = states.iter().map(|s| satisfies(s, &task.goal)).collect();
        StateGraph {
            states: states.into_iter().cloned().collect(),
            edges,
            init,
            goal,
        }
    }

    /// A graph over `n` bare vertices; duplicate edges are dropped.
    pub fn from_edges(n: usize, init: u32, goal: Vec<bool>, edges: &[(u32, u32, u32)]) -> Self {
        assert_eq!(goal.len(), n);
        let mut seen = HashSet::default();
        let edges = edges.iter().copied().filter(|e| seen.insert(*e)).collect();
        StateGraph {
            states: Vec::new(),
            edges,
            init: Some(init),
            goal,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.goal.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Fewest-edge action sequence from the initial vertex to any goal
    /// vertex in O(V + E). Among equally short sequences the
    /// lexicographically smallest by action id wins; remaining ties go to the
    /// lower target vertex.
    pub fn shortest_plan(&self) -> Option<Vec<u32>> {
        let init = self.init? as usize;
        let n = self.num_vertices();
        // distance to the nearest goal over reversed edges
        let rev = csr(n, self.edges.iter().map(|&(u, a, v)| (v, a, u)));
        let mut dist = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        for (v, _) in self.goal.iter().enumerate().filter(|(_, g)| **g) {
            dist[v] = 0;
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for &(_, u) in rev.out(v) {
                if dist[u as usize] == u32::MAX {
                    dist[u as usize] = dist[v] + 1;
                    queue.push_back(u as usize);
                }
            }
        }
        if dist[init] == u32::MAX {
            return None;
        }
        let fwd = csr(n, self.edges.iter().copied());
        let mut plan = Vec::with_capacity(dist[init] as usize);
        let mut cur = init;
        while dist[cur] > 0 {
            let &(a, v) = fwd
                .out(cur)
                .iter()
                .filter(|&&(_, v)| dist[v as usize] == dist[cur] - 1)
                .min()
                .expect("a step towards the goal");
            plan.push(a);
            cur = v as usize;
        }
        Some(plan)
    }
}

/// Out-edges grouped by source vertex.
struct Csr {
    start: Vec<usize>,
    items: Vec<(u32, u32)>,
}

impl Csr {
    fn out(&self, v: usize) -> &[(u32, u32)] {
        &self.items[self.start[v]..self.start[v + 1]]
    }
}

fn csr(n: usize, edges: impl Iterator<Item = (u32, u32, u32)> + Clone) -> Csr {
    let mut start = vec![0usize; n + 1];
    for (u, _, _) in edges.clone() {
        start[u as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut items = vec![(0, 0); start[n]];
    for (u, a, v) in edges {
        items[fill[u as usize]] = (a, v);
        fill[u as usize] += 1;
    }
    Csr { start, items }
}
