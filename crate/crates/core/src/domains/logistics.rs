use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{object_name, LogisticsParams};
use crate::pddl::{Atom, ProblemDef, TypedName};

pub(super) fn sample(p: &LogisticsParams, rng: &mut ChaCha8Rng, name: &str) -> Option<ProblemDef> {
    let cities = p.cities.sample(rng);
    let size = p.city_size.sample(rng);
    let packages = p.packages.sample(rng);
    let planes = p.airplanes.sample(rng);

    let mut objects = Vec::new();
    let mut init = Vec::new();
    // places[c] = airport first, then plain locations
    let mut places: Vec<Vec<String>> = Vec::with_capacity(cities);
    let mut loc_counter = 0;
    for c in 1..=cities {
        let city = object_name("city", c);
        objects.push(TypedName::new(city.clone(), "city"));
        let airport = object_name("airport", c);
        objects.push(TypedName::new(airport.clone(), "airport"));
        init.push(Atom::new("in-city", [airport.clone(), city.clone()]));
        let mut ps = vec![airport];
        for _ in 1..size {
            loc_counter += 1;
            let l = object_name("location", loc_counter);
            objects.push(TypedName::new(l.clone(), "location"));
            init.push(Atom::new("in-city", [l.clone(), city.clone()]));
            ps.push(l);
        }
        places.push(ps);
    }
    for (c, ps) in places.iter().enumerate() {
        let t = object_name("truck", c + 1);
        objects.push(TypedName::new(t.clone(), "truck"));
        init.push(Atom::new("at", [t, ps[rng.random_range(0..ps.len())].clone()]));
    }
    for a in 1..=planes {
        let plane = object_name("airplane", a);
        objects.push(TypedName::new(plane.clone(), "airplane"));
        init.push(Atom::new("at", [plane, places[rng.random_range(0..cities)][0].clone()]));
    }
    let all: Vec<&String> = places.iter().flatten().collect();
    let mut goal = Vec::new();
    let mut any_moved = false;
    for k in 1..=packages {
        let pkg = object_name("package", k);
        objects.push(TypedName::new(pkg.clone(), "package"));
        let from = all[rng.random_range(0..all.len())];
        let to = all[rng.random_range(0..all.len())];
        any_moved |= from != to;
        init.push(Atom::new("at", [pkg.clone(), from.clone()]));
        goal.push(Atom::new("at", [pkg, to.clone()]));
    }
    if !any_moved {
        return None;
    }
    let mut prob = ProblemDef {
        name: name.to_string(),
        domain: "logistics".into(),
        objects,
        init,
        goal,
    };
    prob.canonicalize();
    Some(prob)
}

struct Sim<'p> {
    city_of: HashMap<&'p str, &'p str>,
    airport_of: HashMap<&'p str, &'p str>,
    truck_of: HashMap<&'p str, &'p str>,
    at: HashMap<&'p str, &'p str>,
    planes: Vec<&'p str>,
    plan: Vec<String>,
}

impl<'p> Sim<'p> {
    fn drive(&mut self, truck: &'p str, to: &'p str) {
        let from = self.at[truck];
        if from != to {
            let city = self.city_of[to];
            self.plan.push(format!("(drive-truck {truck} {from} {to} {city})"));
            self.at.insert(truck, to);
        }
    }

    fn fly(&mut self, plane: &'p str, to: &'p str) {
        let from = self.at[plane];
        if from != to {
            self.plan.push(format!("(fly-airplane {plane} {from} {to})"));
            self.at.insert(plane, to);
        }
    }

    /// Moves `pkg` from `from` to `to` inside one city by truck.
    fn truck_leg(&mut self, pkg: &'p str, from: &'p str, to: &'p str) -> Option<()> {
        if from == to {
            return Some(());
        }
        let truck = *self.truck_of.get(self.city_of[from])?;
        self.drive(truck, from);
        self.plan.push(format!("(load-truck {pkg} {truck} {from})"));
        self.drive(truck, to);
        self.plan.push(format!("(unload-truck {pkg} {truck} {to})"));
        Some(())
    }
}

/// Routes packages one at a time: truck to the airport, fly, truck to the
/// destination. Always valid, rarely short.
pub(super) fn naive_plan(p: &ProblemDef) -> Option<Vec<String>> {
    let mut sim = Sim {
        city_of: HashMap::new(),
        airport_of: HashMap::new(),
        truck_of: HashMap::new(),
        at: HashMap::new(),
        planes: Vec::new(),
        plan: Vec::new(),
    };
    let ty = |o: &str| p.object_type(o).unwrap_or("");
    for a in &p.init {
        match a.predicate.as_str() {
            "in-city" => {
                sim.city_of.insert(&a.args[0], &a.args[1]);
                if ty(&a.args[0]) == "airport" {
                    sim.airport_of.insert(&a.args[1], &a.args[0]);
                }
            }
            "at" => {
                sim.at.insert(&a.args[0], &a.args[1]);
            }
            "in" => return None,
            _ => {}
        }
    }
    for o in &p.objects {
        match o.ty.as_str() {
            "airplane" => sim.planes.push(&o.name),
            "truck" => {
                let city = *sim.city_of.get(sim.at.get(o.name.as_str())?)?;
                sim.truck_of.entry(city).or_insert(&o.name);
            }
            _ => {}
        }
    }
    for g in &p.goal {
        if g.predicate != "at" || ty(&g.args[0]) != "package" {
            return None;
        }
        let pkg: &str = &g.args[0];
        let dest: &str = &g.args[1];
        let here = *sim.at.get(pkg)?;
        if here == dest {
            continue;
        }
        let (c1, c2) = (*sim.city_of.get(here)?, *sim.city_of.get(dest)?);
        if c1 == c2 {
            sim.truck_leg(pkg, here, dest)?;
        } else {
            let (a1, a2) = (*sim.airport_of.get(c1)?, *sim.airport_of.get(c2)?);
            sim.truck_leg(pkg, here, a1)?;
            let plane = sim
                .planes
                .iter()
                .copied()
                .find(|pl| sim.at[pl] == a1)
                .or_else(|| sim.planes.first().copied())?;
            sim.fly(plane, a1);
            sim.plan.push(format!("(load-airplane {pkg} {plane} {a1})"));
            sim.fly(plane, a2);
            sim.plan.push(format!("(unload-airplane {pkg} {plane} {a2})"));
            sim.truck_leg(pkg, a2, dest)?;
        }
        sim.at.insert(pkg, dest);
    }
    Some(sim.plan)
}
