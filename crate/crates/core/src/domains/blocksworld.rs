use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{object_name, BlocksworldParams};
use crate::pddl::{Atom, ProblemDef, TypedName};

/// `below[b]` is the block under `b`, `None` for the table.
type Towers = Vec<Option<usize>>;

/// Number of states of `n` blocks as unordered sets of towers, as `f64`.
fn state_counts(n: usize) -> Vec<f64> {
    // f(m) = sum_k C(m-1, k) (k+1)! f(m-1-k): the tower holding the first
    // block has k further blocks in some order
    let mut f = vec![1.0f64; n + 1];
    for m in 1..=n {
        let mut total = 0.0;
        let mut binom = 1.0;
        let mut fact = 1.0;
        for k in 0..m {
            fact *= (k + 1) as f64;
            total += binom * fact * f[m - 1 - k];
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
        }
        f[m] = total;
    }
    f
}

/// A uniformly random arrangement of `n` blocks into towers.
fn random_towers(n: usize, rng: &mut ChaCha8Rng) -> Towers {
    let f = state_counts(n);
    let mut rest: Vec<usize> = (0..n).collect();
    rest.shuffle(rng);
    let mut below = vec![None; n];
    while let Some(first) = rest.pop() {
        let m = rest.len() + 1;
        let mut u = rng.random::<f64>() * f[m];
        let mut binom = 1.0;
        let mut fact = 1.0;
        let mut k = 0;
        loop {
            fact *= (k + 1) as f64;
            let w = binom * fact * f[m - 1 - k];
            if u < w || k == m - 1 {
                break;
            }
            u -= w;
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
            k += 1;
        }
        // `rest` is already shuffled, so its tail is a uniform choice of k
        // blocks in uniform order
        let mut tower = vec![first];
        tower.extend(rest.drain(rest.len() - k..));
        tower.shuffle(rng);
        for w in 1..tower.len() {
            below[tower[w]] = Some(tower[w - 1]);
        }
    }
    below
}

fn sample_count(p: &BlocksworldParams, rng: &mut ChaCha8Rng) -> usize {
    if !p.log_count_distribution || p.blocks.min == p.blocks.max {
        return p.blocks.sample(rng);
    }
    let weights: Vec<f64> = (p.blocks.min..=p.blocks.max)
        .map(|k| (1.0 + k as f64).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return p.blocks.min + i;
        }
        u -= w;
    }
    p.blocks.max
}

pub(super) fn sample(p: &BlocksworldParams, rng: &mut ChaCha8Rng, name: &str) -> Option<ProblemDef> {
    let n = sample_count(p, rng);
    let names: Vec<String> = (1..=n).map(|k| object_name("block", k)).collect();
    let init_towers = random_towers(n, rng);
    let goal_towers = random_towers(n, rng);

    let mut init = vec![Atom::new("arm-empty", Vec::<String>::new())];
    let mut covered = vec![false; n];
    for (b, under) in init_towers.iter().enumerate() {
        match under {
            Some(u) => {
                covered[*u] = true;
                init.push(Atom::new("on", [names[b].clone(), names[*u].clone()]));
            }
            None => init.push(Atom::new("on-table", [names[b].clone()])),
        }
    }
    for b in 0..n {
        if !covered[b] {
            init.push(Atom::new("clear", [names[b].clone()]));
        }
    }
    let mut goal = Vec::new();
    for (b, under) in goal_towers.iter().enumerate() {
        if let Some(u) = under {
            if !rng.random_bool(p.goal_omit_prob) {
                goal.push(Atom::new("on", [names[b].clone(), names[*u].clone()]));
            }
        }
    }
    if goal.is_empty() {
        return None;
    }
    let mut prob = ProblemDef {
        name: name.to_string(),
        domain: "blocksworld".into(),
        objects: names.iter().map(|n| TypedName::new(n.clone(), "block")).collect(),
        init,
        goal,
    };
    prob.canonicalize();
    Some(prob)
}

/// Unstack every block that is not in its final position to the table, then
/// build the goal towers bottom-up. A block is in final position when its own
/// goal fact holds, the block below it is in final position, and no other
/// block must go where it sits; blocks without a goal fact are in final
/// position only on the table. Each block moves at most twice.
pub(super) fn naive_plan(p: &ProblemDef) -> Option<Vec<String>> {
    let names: Vec<&str> = p.objects.iter().map(|o| o.name.as_str()).collect();
    let idx = |s: &str| names.iter().position(|n| *n == s);
    let n = names.len();
    let mut below: Vec<Option<usize>> = vec![None; n];
    let mut held = None;
    for a in &p.init {
        match a.predicate.as_str() {
            "on" => below[idx(&a.args[0])?] = Some(idx(&a.args[1])?),
            "holding" => held = Some(idx(&a.args[0])?),
            _ => {}
        }
    }
    // goal_below[b]: None unconstrained, Some(None) table, Some(Some(c)) on c
    let mut goal_below: Vec<Option<Option<usize>>> = vec![None; n];
    for a in &p.goal {
        match a.predicate.as_str() {
            "on" => goal_below[idx(&a.args[0])?] = Some(Some(idx(&a.args[1])?)),
            "on-table" => goal_below[idx(&a.args[0])?] = Some(None),
            _ => {}
        }
    }
    let mut plan = Vec::new();
    if let Some(h) = held {
        plan.push(format!("(put-down {})", names[h]));
    }

    let wanted_under = |c: usize, b: usize, gb: &[Option<Option<usize>>]| {
        (0..n).any(|x| x != b && gb[x] == Some(Some(c)))
    };
    let well_placed = |below: &[Option<usize>], b: usize| -> bool {
        let mut cur = b;
        for _ in 0..=n {
            match goal_below[cur] {
                Some(g) if g != below[cur] => return false,
                None if below[cur].is_some() => return false,
                _ => {}
            }
            match below[cur] {
                None => return true,
                Some(c) => {
                    if wanted_under(c, cur, &goal_below) {
                        return false;
                    }
                    cur = c;
                }
            }
        }
        false
    };
    let clear = |below: &[Option<usize>], b: usize| (0..n).all(|x| below[x] != Some(b));

    loop {
        let next = (0..n).find(|&b| below[b].is_some() && clear(&below, b) && !well_placed(&below, b));
        let Some(b) = next else { break };
        let under = below[b].expect("on a block");
        plan.push(format!("(unstack {} {})", names[b], names[under]));
        plan.push(format!("(put-down {})", names[b]));
        below[b] = None;
    }
    loop {
        let next = (0..n).find(|&b| match goal_below[b] {
            Some(Some(c)) => {
                below[b] != Some(c)
                    && below[b].is_none()
                    && clear(&below, b)
                    && clear(&below, c)
                    && well_placed(&below, c)
            }
            _ => false,
        });
        let Some(b) = next else { break };
        let c = goal_below[b].flatten().expect("target");
        plan.push(format!("(pick-up {})", names[b]));
        plan.push(format!("(stack {} {})", names[b], names[c]));
        below[b] = Some(c);
    }
    Some(plan)
}
