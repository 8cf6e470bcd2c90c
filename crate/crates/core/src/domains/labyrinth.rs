use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{object_name, LabyrinthParams};
use crate::pddl::{Atom, ProblemDef, TypedName};

/// Opening patterns (north, south, east, west): straights, corners, tees, cross.
const SHAPES: [[bool; 4]; 11] = [
    [true, true, false, false],
    [false, false, true, true],
    [true, false, true, false],
    [false, true, true, false],
    [false, true, false, true],
    [true, false, false, true],
    [true, true, true, false],
    [false, true, true, true],
    [true, true, false, true],
    [true, false, true, true],
    [true, true, true, true],
];

const OPEN: [&str; 4] = ["open-n", "open-s", "open-e", "open-w"];

pub(super) fn sample(p: &LabyrinthParams, rng: &mut ChaCha8Rng, name: &str) -> Option<ProblemDef> {
    let n = p.size.sample(rng);
    let cards = n * n;
    let pos: Vec<String> = (1..=n).map(|k| object_name("pos", k)).collect();
    let card: Vec<String> = (1..=cards).map(|k| object_name("card", k)).collect();
    let mut cells: Vec<usize> = (0..cards).collect();
    cells.shuffle(rng);

    let mut objects: Vec<TypedName> = card.iter().map(|c| TypedName::new(c.clone(), "card")).collect();
    objects.extend(pos.iter().map(|q| TypedName::new(q.clone(), "pos")));
    let mut init = vec![
        Atom::new("idle", Vec::<String>::new()),
        Atom::new("first", [pos[0].clone()]),
        Atom::new("last", [pos[n - 1].clone()]),
    ];
    for k in 1..n {
        init.push(Atom::new("next", [pos[k - 1].clone(), pos[k].clone()]));
    }
    for (c, &cell) in cells.iter().enumerate() {
        let (x, y) = (cell % n, cell / n);
        init.push(Atom::new("card-at", [card[c].clone(), pos[x].clone(), pos[y].clone()]));
        let shape = SHAPES[rng.random_range(0..SHAPES.len())];
        for (d, open) in shape.iter().enumerate() {
            if *open {
                init.push(Atom::new(OPEN[d], [card[c].clone()]));
            }
        }
    }
    let start = rng.random_range(0..cards);
    let target = rng.random_range(0..cards);
    if start == target {
        return None;
    }
    init.push(Atom::new("robot-at", [card[start].clone()]));
    let mut prob = ProblemDef {
        name: name.to_string(),
        domain: "labyrinth".into(),
        objects,
        init,
        goal: vec![Atom::new("robot-at", [card[target].clone()])],
    };
    prob.canonicalize();
    Some(prob)
}
