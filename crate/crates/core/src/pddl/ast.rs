use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requirement {
    Strips,
    Typing,
    ActionCosts,
}

impl Requirement {
    pub fn keyword(self) -> &'static str {
        match self {
            Requirement::Strips => ":strips",
            Requirement::Typing => ":typing",
            Requirement::ActionCosts => ":action-costs",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            ":strips" => Some(Requirement::Strips),
            ":typing" => Some(Requirement::Typing),
            ":action-costs" => Some(Requirement::ActionCosts),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedName {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

/// `predicate(args...)`. In operator schemas arguments are `?variables`,
/// in problems they are object names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        Atom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    pub params: Vec<TypedName>,
}

impl PredicateDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSchema {
    pub name: String,
    pub params: Vec<TypedName>,
    pub pre: Vec<Atom>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

impl OperatorSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDef {
    pub name: String,
    pub requirements: Vec<Requirement>,
    /// `(type, parent)` pairs; the implicit root `object` is not listed.
    pub types: Vec<(String, String)>,
    pub predicates: Vec<PredicateDef>,
    pub operators: Vec<OperatorSchema>,
}

impl DomainDef {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDef> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn operator(&self, name: &str) -> Option<&OperatorSchema> {
        self.operators.iter().find(|o| o.name == name)
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == ROOT_TYPE || self.types.iter().any(|(t, _)| t == ty)
    }

    pub fn parent_of(&self, ty: &str) -> Option<&str> {
        self.types
            .iter()
            .find(|(t, _)| t == ty)
            .map(|(_, p)| p.as_str())
    }

    /// True if `ty` equals `ancestor` or lies below it in the type forest.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ancestor == ROOT_TYPE {
            return true;
        }
        let mut cur = ty;
        // Bounded walk; the parser rejects cycles.
        for _ in 0..=self.types.len() {
            if cur == ancestor {
                return true;
            }
            match self.parent_of(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    }

    /// Declared type names (without the root), in declaration order.
    pub fn type_names(&self) -> Vec<&str> {
        self.types.iter().map(|(t, _)| t.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDef {
    pub name: String,
    pub domain: String,
    /// `(object, type)` in declaration order.
    pub objects: Vec<TypedName>,
    pub init: Vec<Atom>,
    pub goal: Vec<Atom>,
}

impl ProblemDef {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.ty.as_str())
    }

    pub fn objects_by_type(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut m: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for o in &self.objects {
            m.entry(o.ty.as_str()).or_default().push(o.name.as_str());
        }
        m
    }

    /// Sorts init and goal atoms and removes duplicates. Two problems with the
    /// same objects and the same atom sets are equal after canonicalization.
    pub fn canonicalize(&mut self) {
        let rank: HashMap<&str, usize> = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.name.as_str(), i))
            .collect();
        let key = |a: &Atom| {
            (
                a.predicate.clone(),
                a.args
                    .iter()
                    .map(|x| rank.get(x.as_str()).copied().unwrap_or(usize::MAX))
                    .collect::<Vec<_>>(),
            )
        };
        self.init.sort_by_key(key);
        self.init.dedup();
        self.goal.sort_by_key(key);
        self.goal.dedup();
    }
}

fn write_typed_list(f: &mut fmt::Formatter<'_>, items: &[TypedName], typed: bool) -> fmt::Result {
    let mut i = 0;
    while i < items.len() {
        let ty = &items[i].ty;
        let mut j = i;
        while j < items.len() && &items[j].ty == ty {
            if j > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", items[j].name)?;
            j += 1;
        }
        if typed {
            write!(f, " - {ty}")?;
        }
        i = j;
    }
    Ok(())
}

fn write_conj(f: &mut fmt::Formatter<'_>, pos: &[Atom], neg: &[Atom]) -> fmt::Result {
    write!(f, "(and")?;
    for a in pos {
        write!(f, " {a}")?;
    }
    for a in neg {
        write!(f, " (not {a})")?;
    }
    write!(f, ")")
}

impl fmt::Display for DomainDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let typed = self.requirements.contains(&Requirement::Typing);
        writeln!(f, "(define (domain {})", self.name)?;
        if !self.requirements.is_empty() {
            write!(f, "  (:requirements")?;
            for r in &self.requirements {
                write!(f, " {}", r.keyword())?;
            }
            writeln!(f, ")")?;
        }
        if typed && !self.types.is_empty() {
            write!(f, "  (:types ")?;
            let tn: Vec<TypedName> = self
                .types
                .iter()
                .map(|(t, p)| TypedName::new(t.clone(), p.clone()))
                .collect();
            write_typed_list(f, &tn, true)?;
            writeln!(f, ")")?;
        }
        write!(f, "  (:predicates")?;
        for p in &self.predicates {
            write!(f, " ({}", p.name)?;
            if !p.params.is_empty() {
                write!(f, " ")?;
                write_typed_list(f, &p.params, typed)?;
            }
            write!(f, ")")?;
        }
        writeln!(f, ")")?;
        for op in &self.operators {
            writeln!(f, "  (:action {}", op.name)?;
            write!(f, "    :parameters (")?;
            write_typed_list(f, &op.params, typed)?;
            writeln!(f, ")")?;
            write!(f, "    :precondition ")?;
            write_conj(f, &op.pre, &[])?;
            writeln!(f)?;
            write!(f, "    :effect ")?;
            write_conj(f, &op.add, &op.del)?;
            writeln!(f, ")")?;
        }
        writeln!(f, ")")
    }
}

impl fmt::Display for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let typed = self.objects.iter().any(|o| o.ty != ROOT_TYPE);
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, "  (:domain {})", self.domain)?;
        write!(f, "  (:objects ")?;
        write_typed_list(f, &self.objects, typed)?;
        writeln!(f, ")")?;
        write!(f, "  (:init")?;
        for a in &self.init {
            write!(f, " {a}")?;
        }
        writeln!(f, ")")?;
        write!(f, "  (:goal ")?;
        write_conj(f, &self.goal, &[])?;
        writeln!(f, "))")
    }
}
