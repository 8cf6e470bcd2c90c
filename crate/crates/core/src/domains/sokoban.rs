use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{object_name, SokobanParams};
use crate::pddl::{Atom, ProblemDef, TypedName};

/// Direction objects in order: up, down, left, right.
const STEPS: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

pub(super) fn sample(p: &SokobanParams, rng: &mut ChaCha8Rng, name: &str) -> Option<ProblemDef> {
    let n = p.size.sample(rng);
    let walls = p.walls.sample(rng);
    let boxes = p.boxes.sample(rng);
    let cells = n * n;
    // walls, then boxes, targets and the robot on distinct free cells
    if walls + 2 * boxes + 1 > cells {
        return None;
    }
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(rng);
    let wall = &order[..walls];
    let box_at = &order[walls..walls + boxes];
    let target = &order[walls + boxes..walls + 2 * boxes];
    let robot = order[walls + 2 * boxes];

    let loc: Vec<String> = (1..=cells).map(|k| object_name("loc", k)).collect();
    let dir: Vec<String> = (1..=4).map(|k| object_name("dir", k)).collect();
    let bx: Vec<String> = (1..=boxes).map(|k| object_name("box", k)).collect();
    let mut is_wall = vec![false; cells];
    for &w in wall {
        is_wall[w] = true;
    }
    let mut objects: Vec<TypedName> = loc.iter().map(|l| TypedName::new(l.clone(), "loc")).collect();
    objects.extend(dir.iter().map(|d| TypedName::new(d.clone(), "dir")));
    objects.extend(bx.iter().map(|b| TypedName::new(b.clone(), "box")));

    let mut init = vec![Atom::new("at-robot", [loc[robot].clone()])];
    for c in 0..cells {
        if is_wall[c] {
            continue;
        }
        if !box_at.contains(&c) {
            init.push(Atom::new("clear", [loc[c].clone()]));
        }
        let (x, y) = ((c % n) as isize, (c / n) as isize);
        for (d, (dx, dy)) in STEPS.iter().enumerate() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= n as isize || ny >= n as isize {
                continue;
            }
            let nc = ny as usize * n + nx as usize;
            if !is_wall[nc] {
                init.push(Atom::new("adjacent", [loc[c].clone(), loc[nc].clone(), dir[d].clone()]));
            }
        }
    }
    for (b, &c) in box_at.iter().enumerate() {
        init.push(Atom::new("at", [bx[b].clone(), loc[c].clone()]));
        init.push(Atom::new("has-box", [loc[c].clone()]));
    }
    let goal = target
        .iter()
        .map(|&c| Atom::new("has-box", [loc[c].clone()]))
        .collect();
    let mut prob = ProblemDef {
        name: name.to_string(),
        domain: "typed-sokoban".into(),
        objects,
        init,
        goal,
    };
    prob.canonicalize();
    Some(prob)
}
