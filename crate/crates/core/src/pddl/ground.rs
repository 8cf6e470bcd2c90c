use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ast::{Atom, DomainDef, ProblemDef, ROOT_TYPE};
use super::error::GroundError;
use crate::world::State;

/// Upper bounds on the size of a grounded task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundBudget {
    pub max_atoms: usize,
    pub max_actions: usize,
}

impl Default for GroundBudget {
    fn default() -> Self {
        GroundBudget {
            max_atoms: 1 << 20,
            max_actions: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAtom {
    pub predicate: u32,
    pub args: Vec<u32>,
}

/// A grounded operator. `pre`, `add` and `del` are sorted atom-index sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAction {
    pub id: u32,
    pub schema: u32,
    pub args: Vec<u32>,
    pub pre: Vec<u32>,
    pub add: Vec<u32>,
    pub del: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PredLayout {
    base: usize,
    /// Per argument position: object index -> rank among the allowed objects.
    rank: Vec<Vec<Option<u32>>>,
    strides: Vec<usize>,
}

impl PredLayout {
    fn index(&self, args: &[u32]) -> Option<usize> {
        let mut idx = self.base;
        for ((a, rank), stride) in args.iter().zip(&self.rank).zip(&self.strides) {
            idx += (*rank.get(*a as usize)?)? as usize * stride;
        }
        Some(idx)
    }
}

/// A fully grounded planning instance with dense, deterministic indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedTask {
    pub domain_name: String,
    pub problem_name: String,
    /// Predicate names in atom-index order (sorted by name).
    pub predicates: Vec<String>,
    /// Operator names in domain declaration order; `GroundAction::schema` indexes this.
    pub operators: Vec<String>,
    /// Object names in problem declaration order.
    pub objects: Vec<String>,
    pub objects_by_type: BTreeMap<String, Vec<u32>>,
    pub atoms: Vec<GroundAtom>,
    pub actions: Vec<GroundAction>,
    pub init: State,
    pub goal: State,
    layouts: Vec<PredLayout>,
    action_lookup: HashMap<(u32, Vec<u32>), u32>,
}

impl GroundedTask {
    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn atom_index(&self, predicate: &str, args: &[&str]) -> Option<u32> {
        let p = self.predicates.binary_search_by(|x| x.as_str().cmp(predicate)).ok()?;
        let ids = args
            .iter()
            .map(|a| self.object_index(a))
            .collect::<Option<Vec<_>>>()?;
        if ids.len() != self.layouts[p].rank.len() {
            return None;
        }
        self.layouts[p].index(&ids).map(|i| i as u32)
    }

    pub fn object_index(&self, name: &str) -> Option<u32> {
        self.objects.iter().position(|o| o == name).map(|i| i as u32)
    }

    pub fn operator_index(&self, name: &str) -> Option<u32> {
        self.operators.iter().position(|o| o == name).map(|i| i as u32)
    }

    /// Finds the grounded action `(name args...)`.
    pub fn lookup_action(&self, name: &str, args: &[&str]) -> Option<u32> {
        let op = self.operator_index(name)?;
        let ids = args
            .iter()
            .map(|a| self.object_index(a))
            .collect::<Option<Vec<_>>>()?;
        self.lookup_action_ids(op, &ids)
    }

    pub fn lookup_action_ids(&self, schema: u32, args: &[u32]) -> Option<u32> {
        self.action_lookup.get(&(schema, args.to_vec())).copied()
    }

    pub fn atom_name(&self, i: u32) -> String {
        let a = &self.atoms[i as usize];
        let mut s = format!("({}", self.predicates[a.predicate as usize]);
        for o in &a.args {
            let _ = write!(s, " {}", self.objects[*o as usize]);
        }
        s.push(')');
        s
    }

    pub fn action_name(&self, i: u32) -> String {
        let a = &self.actions[i as usize];
        let mut s = format!("({}", self.operators[a.schema as usize]);
        for o in &a.args {
            let _ = write!(s, " {}", self.objects[*o as usize]);
        }
        s.push(')');
        s
    }

    /// Parses `(name arg...)` into an action index.
    pub fn parse_action(&self, text: &str) -> Option<u32> {
        let t = text.trim().strip_prefix('(')?.strip_suffix(')')?;
        let mut it = t.split_whitespace();
        let name = it.next()?.to_lowercase();
        let args: Vec<String> = it.map(str::to_lowercase).collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        self.lookup_action(&name, &refs)
    }

    /// Maximum of |pre|+|add|+|del| over actions.
    pub fn max_action_atoms(&self) -> usize {
        self.actions
            .iter()
            .map(|a| a.pre.len() + a.add.len() + a.del.len())
            .max()
            .unwrap_or(0)
    }
}

fn objects_by_type(dom: &DomainDef, prob: &ProblemDef) -> BTreeMap<String, Vec<u32>> {
    let mut m: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    m.insert(ROOT_TYPE.to_string(), Vec::new());
    for (t, _) in &dom.types {
        m.insert(t.clone(), Vec::new());
    }
    for (i, o) in prob.objects.iter().enumerate() {
        for (t, list) in m.iter_mut() {
            if dom.is_subtype(&o.ty, t) {
                list.push(i as u32);
            }
        }
    }
    m
}

fn product(sizes: impl IntoIterator<Item = usize>) -> u128 {
    sizes.into_iter().fold(1u128, |acc, s| acc.saturating_mul(s as u128))
}

/// Instantiates every operator with every well-typed object tuple.
///
/// Atoms are indexed by (predicate name, lexicographic object-index tuple).
/// Bindings whose add and delete sets overlap (e.g. `stack b1 b1`) are not
/// instantiated.
pub fn ground(dom: &DomainDef, prob: &ProblemDef) -> Result<GroundedTask, GroundError> {
    ground_with_budget(dom, prob, GroundBudget::default())
}

pub fn ground_with_budget(
    dom: &DomainDef,
    prob: &ProblemDef,
    budget: GroundBudget,
) -> Result<GroundedTask, GroundError> {
    let by_type = objects_by_type(dom, prob);
    let n_obj = prob.objects.len();
    let typed = |ty: &str| -> &Vec<u32> { &by_type[ty] };

    let mut preds: Vec<usize> = (0..dom.predicates.len()).collect();
    preds.sort_by(|&a, &b| dom.predicates[a].name.cmp(&dom.predicates[b].name));

    let n_atoms = preds
        .iter()
        .map(|&p| product(dom.predicates[p].params.iter().map(|x| typed(&x.ty).len())))
        .fold(0u128, u128::saturating_add);
    if n_atoms > budget.max_atoms as u128 {
        return Err(GroundError::Budget {
            what: "atoms",
            needed: n_atoms,
            limit: budget.max_atoms,
        });
    }

    let mut layouts = Vec::with_capacity(preds.len());
    let mut atoms = Vec::with_capacity(n_atoms as usize);
    let mut pred_names = Vec::with_capacity(preds.len());
    for (pi, &p) in preds.iter().enumerate() {
        let pd = &dom.predicates[p];
        pred_names.push(pd.name.clone());
        let domains: Vec<&Vec<u32>> = pd.params.iter().map(|x| typed(&x.ty)).collect();
        let mut strides = vec![1usize; domains.len()];
        for k in (0..domains.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * domains[k + 1].len();
        }
        let rank = domains
            .iter()
            .map(|d| {
                let mut r = vec![None; n_obj];
                for (i, &o) in d.iter().enumerate() {
                    r[o as usize] = Some(i as u32);
                }
                r
            })
            .collect();
        layouts.push(PredLayout {
            base: atoms.len(),
            rank,
            strides,
        });
        for tuple in tuples(&domains) {
            atoms.push(GroundAtom {
                predicate: pi as u32,
                args: tuple,
            });
        }
    }

    let raw_actions = dom
        .operators
        .iter()
        .map(|op| product(op.params.iter().map(|x| typed(&x.ty).len())))
        .fold(0u128, u128::saturating_add);
    if raw_actions > budget.max_actions as u128 {
        return Err(GroundError::Budget {
            what: "actions",
            needed: raw_actions,
            limit: budget.max_actions,
        });
    }

    let pred_slot: HashMap<&str, usize> = pred_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut actions = Vec::new();
    let mut action_lookup = HashMap::new();
    for (si, op) in dom.operators.iter().enumerate() {
        let domains: Vec<&Vec<u32>> = op.params.iter().map(|x| typed(&x.ty)).collect();
        let var_pos: HashMap<&str, usize> = op
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.as_str(), i))
            .collect();
        let resolve = |lifted: &[Atom], binding: &[u32]| -> Vec<u32> {
            let mut v: Vec<u32> = lifted
                .iter()
                .map(|a| {
                    let args: Vec<u32> = a.args.iter().map(|x| binding[var_pos[x.as_str()]]).collect();
                    let slot = pred_slot[a.predicate.as_str()];
                    layouts[slot]
                        .index(&args)
                        .expect("parser guarantees well-typed schema atoms") as u32
                })
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for binding in tuples(&domains) {
            let add = resolve(&op.add, &binding);
            let del = resolve(&op.del, &binding);
            if intersects(&add, &del) {
                continue;
            }
            let pre = resolve(&op.pre, &binding);
            let id = actions.len() as u32;
            action_lookup.insert((si as u32, binding.clone()), id);
            actions.push(GroundAction {
                id,
                schema: si as u32,
                args: binding,
                pre,
                add,
                del,
            });
        }
    }

    let n = atoms.len();
    let to_state = |list: &[Atom]| -> Result<State, GroundError> {
        let mut s = State::empty(n);
        for a in list {
            let slot = pred_slot
                .get(a.predicate.as_str())
                .ok_or_else(|| GroundError::UnknownAtom(a.to_string()))?;
            let args = a
                .args
                .iter()
                .map(|x| {
                    prob.objects
                        .iter()
                        .position(|o| &o.name == x)
                        .map(|i| i as u32)
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| GroundError::UnknownAtom(a.to_string()))?;
            let i = layouts[*slot]
                .index(&args)
                .ok_or_else(|| GroundError::UnknownAtom(a.to_string()))?;
            s.insert(i);
        }
        Ok(s)
    };
    let init = to_state(&prob.init)?;
    let goal = to_state(&prob.goal)?;

    Ok(GroundedTask {
        domain_name: dom.name.clone(),
        problem_name: prob.name.clone(),
        predicates: pred_names,
        operators: dom.operators.iter().map(|o| o.name.clone()).collect(),
        objects: prob.objects.iter().map(|o| o.name.clone()).collect(),
        objects_by_type: by_type,
        atoms,
        actions,
        init,
        goal,
        layouts,
        action_lookup,
    })
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// All tuples of the cartesian product, first position most significant.
fn tuples(domains: &[&Vec<u32>]) -> Vec<Vec<u32>> {
    if domains.iter().any(|d| d.is_empty()) {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(product(domains.iter().map(|d| d.len())) as usize);
    let mut idx = vec![0usize; domains.len()];
    loop {
        out.push(idx.iter().zip(domains).map(|(&i, d)| d[i]).collect());
        let mut k = domains.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}
