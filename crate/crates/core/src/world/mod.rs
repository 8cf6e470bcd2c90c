//! STRIPS semantics over grounded tasks: applicability, transitions, goal
//! tests, and plan validation/compilation.

mod state;
mod successors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use state::State;
pub use successors::SuccessorGenerator;

use crate::pddl::{GroundAction, GroundedTask};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("action {0} is not applicable")]
    Inapplicable(u32),
}

/// An action-index sequence for one problem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Plan {
    pub problem_id: String,
    pub actions: Vec<u32>,
}

impl Plan {
    pub fn new(problem_id: impl Into<String>, actions: Vec<u32>) -> Self {
        Plan {
            problem_id: problem_id.into(),
            actions,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action_names(&self, task: &GroundedTask) -> Vec<String> {
        self.actions.iter().map(|&a| task.action_name(a)).collect()
    }
}

/// A plan together with the states it visits.
///
/// `states[t + 1]` is the successor of `states[t]` under `actions[t]`. When an
/// action is inapplicable compilation stops there: `states` ends at the state
/// in which it failed and `failed_at` holds its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledPlan {
    pub states: Vec<State>,
    pub actions: Vec<u32>,
    pub valid: bool,
    pub goal_reached: bool,
    pub failed_at: Option<usize>,
}

impl CompiledPlan {
    pub fn is_solution(&self) -> bool {
        self.valid && self.goal_reached
    }
}

#[inline]
pub fn applicable(s: &State, a: &GroundAction) -> bool {
    a.pre.iter().all(|&p| s.contains(p as usize))
}

/// `(s \ del(a)) ∪ add(a)`; the input is left untouched.
pub fn step(s: &State, a: &GroundAction) -> Result<State, WorldError> {
    if !applicable(s, a) {
        return Err(WorldError::Inapplicable(a.id));
    }
    Ok(apply(s, a))
}

/// Applies the effects without checking preconditions.
#[inline]
pub fn apply(s: &State, a: &GroundAction) -> State {
    let mut next = s.clone();
    for &d in &a.del {
        next.remove(d as usize);
    }
    for &p in &a.add {
        next.insert(p as usize);
    }
    next
}

#[inline]
pub fn satisfies(s: &State, goal: &State) -> bool {
    s.is_superset(goal)
}

/// Executes `plan` from the initial state. Runs in O(T·M) for T actions of at
/// most M precondition and effect atoms (plus one state copy per step).
pub fn validate(task: &GroundedTask, plan: &Plan) -> CompiledPlan {
    validate_actions(task, &plan.actions)
}

pub fn validate_actions(task: &GroundedTask, actions: &[u32]) -> CompiledPlan {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(task.init.clone());
    for (t, &ai) in actions.iter().enumerate() {
        let cur = states.last().expect("non-empty");
        let next = task
            .actions
            .get(ai as usize)
            .filter(|a| applicable(cur, a))
            .map(|a| apply(cur, a));
        match next {
            Some(s) => states.push(s),
            None => {
                return CompiledPlan {
                    states,
                    actions: actions.to_vec(),
                    valid: false,
                    goal_reached: false,
                    failed_at: Some(t),
                }
            }
        }
    }
    let goal_reached = satisfies(states.last().expect("non-empty"), &task.goal);
    CompiledPlan {
        states,
        actions: actions.to_vec(),
        valid: true,
        goal_reached,
        failed_at: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::DomainKind;
    use crate::pddl::{ground, parse_domain, parse_problem};
    use proptest::prelude::*;

    const TOWER: &str = "(define (problem tower) (:domain blocksworld)
        (:objects block-1 block-2 block-3 - block)
        (:init (on block-1 block-2) (on block-2 block-3) (on-table block-3) (clear block-1) (arm-empty))
        (:goal (and (on block-3 block-2) (on block-2 block-1))))";

    const SWAP: &str = "(define (problem swap) (:domain blocksworld)
        (:objects a b - block)
        (:init (on a b) (on-table b) (clear a) (arm-empty))
        (:goal (and (on b a))))";

    fn task(src: &str) -> GroundedTask {
        let d = parse_domain(DomainKind::Blocksworld.domain_pddl()).unwrap();
        let p = parse_problem(src, &d).unwrap();
        ground(&d, &p).unwrap()
    }

    fn act(t: &GroundedTask, s: &str) -> u32 {
        t.parse_action(s).unwrap_or_else(|| panic!("no action {s}"))
    }

    #[test]
    fn applicable_cases() {
        let t = task(TOWER);
        let a = &t.actions[act(&t, "(unstack block-1 block-2)") as usize];
        assert!(applicable(&t.init, a));
        let b = &t.actions[act(&t, "(unstack block-2 block-3)") as usize];
        assert!(!applicable(&t.init, b));
        assert!(!applicable(&State::empty(t.num_atoms()), a));
        let free = GroundAction {
            id: 0,
            schema: 0,
            args: vec![],
            pre: vec![],
            add: vec![],
            del: vec![],
        };
        assert!(applicable(&State::empty(t.num_atoms()), &free));
        assert_eq!(step(&t.init, &free).unwrap(), t.init);
    }

    #[test]
    fn pickup_effects() {
        let t = task(SWAP);
        let s1 = apply(&t.init, &t.actions[act(&t, "(unstack a b)") as usize]);
        let s2 = apply(&s1, &t.actions[act(&t, "(put-down a)") as usize]);
        let pick_b = &t.actions[act(&t, "(pick-up b)") as usize];
        let before = s2.clone();
        let s3 = step(&s2, pick_b).unwrap();
        assert_eq!(s2, before);
        let has = |s: &State, atom: &str, args: &[&str]| s.contains(t.atom_index(atom, args).unwrap() as usize);
        assert!(has(&s3, "holding", &["b"]));
        assert!(!has(&s3, "on-table", &["b"]));
        assert!(!has(&s3, "clear", &["b"]));
        assert!(!has(&s3, "arm-empty", &[]));
        // del ⊆ s, add ∩ s = ∅
        assert_eq!(s3.count(), s2.count() - pick_b.del.len() + pick_b.add.len());
    }

    #[test]
    fn step_rejects_inapplicable() {
        let t = task(SWAP);
        let a = act(&t, "(pick-up b)");
        assert_eq!(step(&t.init, &t.actions[a as usize]), Err(WorldError::Inapplicable(a)));
    }

    #[test]
    fn validate_swap_plan() {
        let t = task(SWAP);
        let plan: Vec<u32> = ["(unstack a b)", "(put-down a)", "(pick-up b)", "(stack b a)"]
            .iter()
            .map(|s| act(&t, s))
            .collect();
        let c = validate(&t, &Plan::new("swap", plan));
        assert!(c.valid && c.goal_reached);
        assert_eq!(c.states.len(), 5);
    }

    #[test]
    fn validate_empty_plan_goal_in_init() {
        let src = SWAP.replace("(on b a)", "(on a b)");
        let t = task(&src);
        let c = validate(&t, &Plan::new("x", vec![]));
        assert!(c.valid && c.goal_reached);
        assert_eq!(c.states, vec![t.init.clone()]);
    }

    #[test]
    fn validate_double_pickup_fails_at_second_step() {
        let t = task(TOWER);
        let plan = vec![act(&t, "(unstack block-1 block-2)"), act(&t, "(unstack block-2 block-3)")];
        let c = validate(&t, &Plan::new("x", plan));
        assert!(!c.valid);
        assert_eq!(c.failed_at, Some(1));
        assert_eq!(c.states.len(), 2);

        let t2 = task(SWAP);
        let c = validate_actions(&t2, &[act(&t2, "(unstack a b)"), act(&t2, "(unstack a b)")]);
        assert_eq!(c.failed_at, Some(1));
    }

    #[test]
    fn satisfies_basic() {
        let s = State::from_atoms(10, [1, 3, 5]);
        assert!(satisfies(&s, &State::empty(10)));
        assert!(satisfies(&s, &s));
    }

    proptest! {
        #[test]
        fn satisfies_detects_missing_bit(bits in proptest::collection::vec(any::<bool>(), 1..200), pick in any::<prop::sample::Index>()) {
            let n = bits.len();
            let s = State::from_atoms(n, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i as u32));
            let mut g = s.clone();
            let missing = pick.index(n);
            g.insert(missing);
            let mut s2 = s.clone();
            s2.remove(missing);
            // oracle: g ⊆ s2 iff every set bit of g is set in s2
            let oracle = (0..n).all(|i| !g.contains(i) || s2.contains(i));
            prop_assert!(!oracle);
            prop_assert!(!satisfies(&s2, &g));
        }

        #[test]
        fn step_frame_and_purity(walk in proptest::collection::vec(0usize..1000, 0..30)) {
            let t = task(TOWER);
            let gen = SuccessorGenerator::new(&t);
            let mut s = t.init.clone();
            for w in walk {
                let apps = gen.applicable(&s);
                prop_assume!(!apps.is_empty());
                let a = &t.actions[apps[w % apps.len()] as usize];
                let n1 = step(&s, a).unwrap();
                let n2 = step(&s, a).unwrap();
                prop_assert_eq!(&n1, &n2);
                for i in 0..t.num_atoms() {
                    let touched = a.add.contains(&(i as u32)) || a.del.contains(&(i as u32));
                    if !touched {
                        prop_assert_eq!(n1.contains(i), s.contains(i));
                    }
                }
                s = n1;
            }
        }
    }
}
