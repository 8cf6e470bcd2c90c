//! Fixed vocabularies and the token layout of problems and plans.
//!
//! A training sequence reads
//! `[startofproblem] [objects] (type obj)* [init] atoms [goal] atoms [startofplan] actions [endofplan]`
//! where an atom is its predicate token followed by its argument tokens and
//! an action is its operator token followed by its argument tokens.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pddl::{Atom, DomainDef, GroundedTask, ProblemDef, TypedName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizerError {
    #[error("{count} objects of type `{ty}` exceed the limit of {limit}")]
    ObjectLimit { ty: String, count: usize, limit: usize },
    #[error("object `{0}` is not named `<type>-<k>`; normalize the problem first")]
    NonCanonicalObject(String),
    #[error("no token for {0}")]
    UnknownSymbol(String),
    #[error("vocabulary does not match the domain: {0}")]
    Mismatch(String),
    #[error("malformed vocabulary file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// The sequence ended without `[endofplan]`.
    #[error("truncated: no end-of-plan token")]
    Truncated,
    #[error("malformed at token {pos}: {reason}")]
    Malformed { pos: usize, reason: String },
}

impl DecodeError {
    fn at(pos: usize, reason: impl Into<String>) -> Self {
        DecodeError::Malformed {
            pos,
            reason: reason.into(),
        }
    }
}

/// Ids of the structural delimiter tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Specials {
    pub pad: u32,
    pub start_of_problem: u32,
    pub objects_mark: u32,
    pub init_mark: u32,
    pub goal_mark: u32,
    pub start_of_plan: u32,
    pub end_of_plan: u32,
}

const SPECIAL_NAMES: [&str; 7] = [
    "[pad]",
    "[startofproblem]",
    "[objects]",
    "[init]",
    "[goal]",
    "[startofplan]",
    "[endofplan]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Special,
    Predicate(u32),
    Operator(u32),
    Type(u32),
    /// Object `k` (0-based) of type `ty`.
    Object { ty: u32, k: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    domain: String,
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    specials: Specials,
    limits: BTreeMap<String, usize>,
    predicates: Vec<(String, usize)>,
    operators: Vec<(String, usize)>,
    types: Vec<String>,
    predicate_ids: HashMap<String, u32>,
    operator_ids: HashMap<String, u32>,
    type_ids: HashMap<String, u32>,
    object_ids: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    domain: String,
    tokens: Vec<String>,
    specials: Specials,
    limits: BTreeMap<String, usize>,
}

/// A token sequence with the position right after `[startofplan]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub boundary: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn prompt(&self) -> &[u32] {
        &self.ids[..self.boundary]
    }

    pub fn plan_tokens(&self) -> &[u32] {
        &self.ids[self.boundary..]
    }
}

/// Builds the vocabulary for `dom` with at most `limits[t]` objects of type `t`.
///
/// Layout: the 7 specials, then predicates, operators and declared types in
/// domain order, then `t-1 .. t-limit` for every limited type in name order.
pub fn build_vocab(dom: &DomainDef, limits: &BTreeMap<String, usize>) -> Vocabulary {
    let mut tokens: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
    let mut kinds = vec![TokenKind::Special; SPECIAL_NAMES.len()];
    let specials = Specials {
        pad: 0,
        start_of_problem: 1,
        objects_mark: 2,
        init_mark: 3,
        goal_mark: 4,
        start_of_plan: 5,
        end_of_plan: 6,
    };
    let mut predicate_ids = HashMap::new();
    let mut predicates = Vec::new();
    for (i, p) in dom.predicates.iter().enumerate() {
        predicate_ids.insert(p.name.clone(), tokens.len() as u32);
        predicates.push((p.name.clone(), p.arity()));
        tokens.push(p.name.clone());
        kinds.push(TokenKind::Predicate(i as u32));
    }
    let mut operator_ids = HashMap::new();
    let mut operators = Vec::new();
    for (i, o) in dom.operators.iter().enumerate() {
        operator_ids.insert(o.name.clone(), tokens.len() as u32);
        operators.push((o.name.clone(), o.arity()));
        tokens.push(o.name.clone());
        kinds.push(TokenKind::Operator(i as u32));
    }
    let mut type_ids = HashMap::new();
    let mut types = Vec::new();
    for (i, t) in dom.type_names().into_iter().enumerate() {
        type_ids.insert(t.to_string(), tokens.len() as u32);
        types.push(t.to_string());
        tokens.push(t.to_string());
        kinds.push(TokenKind::Type(i as u32));
    }
    let mut object_ids = HashMap::new();
    for (ty, &limit) in limits {
        let tyi = types.iter().position(|t| t == ty).map_or(u32::MAX, |i| i as u32);
        for k in 0..limit {
            let name = crate::domains::object_name(ty, k + 1);
            object_ids.insert(name.clone(), tokens.len() as u32);
            tokens.push(name);
            kinds.push(TokenKind::Object { ty: tyi, k: k as u32 });
        }
    }
    Vocabulary {
        domain: dom.name.clone(),
        tokens,
        kinds,
        specials,
        limits: limits.clone(),
        predicates,
        operators,
        types,
        predicate_ids,
        operator_ids,
        type_ids,
        object_ids,
    }
}

/// Renames objects to `<type>-<k>`, numbering each type in declaration order.
pub fn normalize_objects(p: &ProblemDef) -> ProblemDef {
    let mut counters: HashMap<&str, usize> = HashMap::new();
    let mut rename: HashMap<&str, String> = HashMap::new();
    let mut objects = Vec::with_capacity(p.objects.len());
    for o in &p.objects {
        let k = counters.entry(o.ty.as_str()).or_insert(0);
        *k += 1;
        let name = crate::domains::object_name(&o.ty, *k);
        rename.insert(o.name.as_str(), name.clone());
        objects.push(TypedName::new(name, o.ty.clone()));
    }
    let map_atom = |a: &Atom| Atom {
        predicate: a.predicate.clone(),
        args: a
            .args
            .iter()
            .map(|x| rename.get(x.as_str()).cloned().unwrap_or_else(|| x.clone()))
            .collect(),
    };
    let mut out = ProblemDef {
        name: p.name.clone(),
        domain: p.domain.clone(),
        objects,
        init: p.init.iter().map(map_atom).collect(),
        goal: p.goal.iter().map(map_atom).collect(),
    };
    out.canonicalize();
    out
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        self.kinds.get(id as usize).copied()
    }

    pub fn limits(&self) -> &BTreeMap<String, usize> {
        &self.limits
    }

    pub fn domain_name(&self) -> &str {
        &self.domain
    }

    pub fn operator_token(&self, name: &str) -> Option<u32> {
        self.operator_ids.get(name).copied()
    }

    pub fn object_token(&self, name: &str) -> Option<u32> {
        self.object_ids.get(name).copied()
    }

    /// Lowercase hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_json().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        let f = VocabFile {
            domain: self.domain.clone(),
            tokens: self.tokens.clone(),
            specials: self.specials,
            limits: self.limits.clone(),
        };
        serde_json::to_string_pretty(&f).expect("vocabulary serializes")
    }

    /// Rebuilds a vocabulary from its JSON form; the domain must produce the
    /// same token list.
    pub fn from_json(text: &str, dom: &DomainDef) -> Result<Self, TokenizerError> {
        let f: VocabFile = serde_json::from_str(text).map_err(|e| TokenizerError::Format(e.to_string()))?;
        if f.domain != dom.name {
            return Err(TokenizerError::Mismatch(format!(
                "built for `{}`, given `{}`",
                f.domain, dom.name
            )));
        }
        let v = build_vocab(dom, &f.limits);
        if v.tokens != f.tokens || v.specials != f.specials {
            return Err(TokenizerError::Mismatch("token list differs".into()));
        }
        Ok(v)
    }

    fn object(&self, name: &str, ty: &str) -> Result<u32, TokenizerError> {
        match self.object_ids.get(name) {
            Some(&id) => match self.kinds[id as usize] {
                TokenKind::Object { ty: t, .. } if self.types.get(t as usize).map(String::as_str) == Some(ty) => {
                    Ok(id)
                }
                _ => Err(TokenizerError::NonCanonicalObject(name.to_string())),
            },
            None => Err(TokenizerError::NonCanonicalObject(name.to_string())),
        }
    }

    fn push_atom(&self, out: &mut Vec<u32>, a: &Atom) -> Result<(), TokenizerError> {
        let p = self
            .predicate_ids
            .get(&a.predicate)
            .ok_or_else(|| TokenizerError::UnknownSymbol(format!("predicate `{}`", a.predicate)))?;
        out.push(*p);
        for x in &a.args {
            out.push(
                *self
                    .object_ids
                    .get(x)
                    .ok_or_else(|| TokenizerError::NonCanonicalObject(x.clone()))?,
            );
        }
        Ok(())
    }

    /// Encodes the problem prompt, ending with `[startofplan]`.
    pub fn encode_problem(&self, p: &ProblemDef) -> Result<TokenSeq, TokenizerError> {
        for (ty, objs) in p.objects_by_type() {
            let limit = self.limits.get(ty).copied().unwrap_or(0);
            if objs.len() > limit {
                return Err(TokenizerError::ObjectLimit {
                    ty: ty.to_string(),
                    count: objs.len(),
                    limit,
                });
            }
        }
        let mut canon = p.clone();
        canon.canonicalize();
        let s = self.specials;
        let mut ids = vec![s.start_of_problem, s.objects_mark];
        for o in &canon.objects {
            let t = self
                .type_ids
                .get(&o.ty)
                .ok_or_else(|| TokenizerError::UnknownSymbol(format!("type `{}`", o.ty)))?;
            ids.push(*t);
            ids.push(self.object(&o.name, &o.ty)?);
        }
        ids.push(s.init_mark);
        for a in &canon.init {
            self.push_atom(&mut ids, a)?;
        }
        ids.push(s.goal_mark);
        for a in &canon.goal {
            self.push_atom(&mut ids, a)?;
        }
        ids.push(s.start_of_plan);
        let boundary = ids.len();
        Ok(TokenSeq { ids, boundary })
    }

    pub fn encode_action(&self, op: &str, args: &[&str]) -> Result<Vec<u32>, TokenizerError> {
        let mut out = vec![self
            .operator_token(op)
            .ok_or_else(|| TokenizerError::UnknownSymbol(format!("operator `{op}`")))?];
        for a in args {
            out.push(
                self.object_token(a)
                    .ok_or_else(|| TokenizerError::NonCanonicalObject(a.to_string()))?,
            );
        }
        Ok(out)
    }

    /// Plan tokens for grounded actions, terminated by `[endofplan]`.
    pub fn encode_plan(&self, task: &GroundedTask, actions: &[u32]) -> Result<Vec<u32>, TokenizerError> {
        let mut out = Vec::new();
        for &a in actions {
            let act = &task.actions[a as usize];
            let args: Vec<&str> = act.args.iter().map(|&o| task.objects[o as usize].as_str()).collect();
            out.extend(self.encode_action(&task.operators[act.schema as usize], &args)?);
        }
        out.push(self.specials.end_of_plan);
        Ok(out)
    }

    /// Prompt followed by plan tokens.
    pub fn encode_example(&self, p: &ProblemDef, task: &GroundedTask, actions: &[u32]) -> Result<TokenSeq, TokenizerError> {
        let mut seq = self.encode_problem(p)?;
        seq.ids.extend(self.encode_plan(task, actions)?);
        Ok(seq)
    }

    /// Decodes one action span starting at `pos`; returns the action and
    /// the position after it.
    pub fn decode_action(&self, ids: &[u32], pos: usize) -> Result<(Atom, usize), DecodeError> {
        let Some(&head) = ids.get(pos) else {
            return Err(DecodeError::Truncated);
        };
        let Some(TokenKind::Operator(op)) = self.kind(head) else {
            return Err(DecodeError::at(pos, format!("expected an operator, got `{}`", self.show(head))));
        };
        let (name, arity) = &self.operators[op as usize];
        let mut args = Vec::with_capacity(*arity);
        for i in 0..*arity {
            let p = pos + 1 + i;
            match ids.get(p) {
                None => return Err(DecodeError::Truncated),
                Some(&t) => match self.kind(t) {
                    Some(TokenKind::Object { .. }) => args.push(self.tokens[t as usize].clone()),
                    _ => {
                        return Err(DecodeError::at(
                            p,
                            format!("`{name}` expects {arity} object arguments, got `{}`", self.show(t)),
                        ))
                    }
                },
            }
        }
        Ok((
            Atom {
                predicate: name.clone(),
                args,
            },
            pos + 1 + arity,
        ))
    }

    /// Splits plan tokens into actions up to `[endofplan]`; tokens after it
    /// are ignored.
    pub fn decode_plan(&self, tail: &[u32]) -> Result<Vec<Atom>, DecodeError> {
        let mut out = Vec::new();
        let mut pos = 0;
        loop {
            match tail.get(pos) {
                None => return Err(DecodeError::Truncated),
                Some(&t) if t == self.specials.end_of_plan => return Ok(out),
                Some(_) => {
                    let (a, next) = self.decode_action(tail, pos)?;
                    out.push(a);
                    pos = next;
                }
            }
        }
    }

    /// Decodes a prompt produced by [`Vocabulary::encode_problem`].
    pub fn decode_problem(&self, ids: &[u32]) -> Result<ProblemDef, DecodeError> {
        let s = self.specials;
        let expect = |pos: usize, tok: u32| -> Result<(), DecodeError> {
            match ids.get(pos) {
                Some(&t) if t == tok => Ok(()),
                Some(&t) => Err(DecodeError::at(pos, format!("expected `{}`, got `{}`", self.show(tok), self.show(t)))),
                None => Err(DecodeError::Truncated),
            }
        };
        expect(0, s.start_of_problem)?;
        expect(1, s.objects_mark)?;
        let mut pos = 2;
        let mut objects = Vec::new();
        while ids.get(pos).is_some_and(|&t| t != s.init_mark) {
            let (t, o) = (ids[pos], *ids.get(pos + 1).ok_or(DecodeError::Truncated)?);
            match (self.kind(t), self.kind(o)) {
                (Some(TokenKind::Type(ti)), Some(TokenKind::Object { ty, .. })) if ti == ty => {
                    objects.push(TypedName::new(self.tokens[o as usize].clone(), self.types[ti as usize].clone()));
                }
                _ => return Err(DecodeError::at(pos, "expected a type and a matching object")),
            }
            pos += 2;
        }
        expect(pos, s.init_mark)?;
        pos += 1;
        let mut init = Vec::new();
        pos = self.decode_atoms(ids, pos, s.goal_mark, &mut init)?;
        pos += 1;
        let mut goal = Vec::new();
        pos = self.decode_atoms(ids, pos, s.start_of_plan, &mut goal)?;
        if pos + 1 != ids.len() {
            return Err(DecodeError::at(pos + 1, "trailing tokens after the prompt"));
        }
        Ok(ProblemDef {
            name: "decoded".into(),
            domain: self.domain.clone(),
            objects,
            init,
            goal,
        })
    }

    fn decode_atoms(&self, ids: &[u32], mut pos: usize, stop: u32, out: &mut Vec<Atom>) -> Result<usize, DecodeError> {
        loop {
            let &t = ids.get(pos).ok_or(DecodeError::Truncated)?;
            if t == stop {
                return Ok(pos);
            }
            let Some(TokenKind::Predicate(pi)) = self.kind(t) else {
                return Err(DecodeError::at(pos, format!("expected a predicate, got `{}`", self.show(t))));
            };
            let (name, arity) = &self.predicates[pi as usize];
            let mut args = Vec::with_capacity(*arity);
            for i in 0..*arity {
                let p = pos + 1 + i;
                let &o = ids.get(p).ok_or(DecodeError::Truncated)?;
                match self.kind(o) {
                    Some(TokenKind::Object { .. }) => args.push(self.tokens[o as usize].clone()),
                    _ => return Err(DecodeError::at(p, "expected an object")),
                }
            }
            out.push(Atom {
                predicate: name.clone(),
                args,
            });
            pos += 1 + arity;
        }
    }

    fn show(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map_or("<out of range>", String::as_str)
    }

    /// Space-separated token strings.
    pub fn render(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.show(i)).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vocabulary for `{}` ({} tokens)", self.domain, self.tokens.len())
    }
}

/// Maps plan tokens straight to grounded action ids of one task.
pub struct PlanDecoder<'t> {
    task: &'t GroundedTask,
    object_of_token: Vec<Option<u32>>,
    schema_of_token: Vec<Option<u32>>,
}

/// Why a sampled sequence did not yield an executable action list.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanDecodeError {
    #[error(transparent)]
    Syntax(#[from] DecodeError),
    /// Well-formed but names an action that does not exist in the task
    /// (object absent from the problem, wrong type, or a dropped binding).
    #[error("no such action: {0}")]
    UnknownAction(String),
}

impl<'t> PlanDecoder<'t> {
    pub fn new(vocab: &Vocabulary, task: &'t GroundedTask) -> Self {
        let object_of_token = vocab.tokens.iter().map(|t| task.object_index(t)).collect::<Vec<_>>();
        let object_of_token = object_of_token
            .into_iter()
            .zip(&vocab.kinds)
            .map(|(o, k)| if matches!(k, TokenKind::Object { .. }) { o } else { None })
            .collect();
        let schema_of_token = vocab
            .kinds
            .iter()
            .enumerate()
            .map(|(i, k)| match k {
                TokenKind::Operator(_) => task.operator_index(&vocab.tokens[i]),
                _ => None,
            })
            .collect();
        PlanDecoder {
            task,
            object_of_token,
            schema_of_token,
        }
    }

    pub fn decode(&self, vocab: &Vocabulary, tail: &[u32]) -> Result<Vec<u32>, PlanDecodeError> {
        let atoms = vocab.decode_plan(tail)?;
        let mut out = Vec::with_capacity(atoms.len());
        let mut pos = 0;
        for a in &atoms {
            let op = tail[pos];
            let arity = a.args.len();
            let schema = self.schema_of_token[op as usize];
            let args: Option<Vec<u32>> = tail[pos + 1..pos + 1 + arity]
                .iter()
                .map(|&t| self.object_of_token[t as usize])
                .collect();
            pos += 1 + arity;
            match (schema, args) {
                (Some(s), Some(args)) => match self.task.lookup_action_ids(s, &args) {
                    Some(id) => out.push(id),
                    None => return Err(PlanDecodeError::UnknownAction(a.to_string())),
                },
                _ => return Err(PlanDecodeError::UnknownAction(a.to_string())),
            }
        }
        Ok(out)
    }
}
