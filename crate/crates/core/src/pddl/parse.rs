use std::collections::HashSet;

use super::ast::*;
use super::error::{ParseError, ParseErrorKind as K};
use super::sexpr::{self, Pos, SExpr};

struct Ctx<'a> {
    file: &'a str,
}

impl Ctx<'_> {
    fn err(&self, pos: Pos, kind: K) -> ParseError {
        ParseError::new(self.file, pos, kind)
    }

    fn syntax(&self, pos: Pos, msg: impl Into<String>) -> ParseError {
        self.err(pos, K::Syntax(msg.into()))
    }

    fn list<'e>(&self, e: &'e SExpr, what: &str) -> Result<&'e [SExpr], ParseError> {
        e.as_list()
            .ok_or_else(|| self.syntax(e.pos(), format!("expected a list for {what}")))
    }

    fn sym<'e>(&self, e: &'e SExpr, what: &str) -> Result<&'e str, ParseError> {
        e.as_atom()
            .ok_or_else(|| self.syntax(e.pos(), format!("expected a symbol for {what}")))
    }

    /// `(define (<kind> NAME) sections...)` → (name, sections)
    fn header<'e>(&self, root: &'e SExpr, kind: &str) -> Result<(&'e str, &'e [SExpr]), ParseError> {
        let items = self.list(root, "define")?;
        match items.first().and_then(SExpr::as_atom) {
            Some("define") => {}
            _ => return Err(self.syntax(root.pos(), "expected `(define ...)`")),
        }
        let head = items
            .get(1)
            .ok_or_else(|| self.syntax(root.pos(), format!("missing `({kind} NAME)`")))?;
        let h = self.list(head, kind)?;
        if h.len() != 2 || h[0].as_atom() != Some(kind) {
            return Err(self.syntax(head.pos(), format!("expected `({kind} NAME)`")));
        }
        Ok((self.sym(&h[1], "name")?, &items[2..]))
    }

    /// `a b - t c - u d` → [(a,t),(b,t),(c,u),(d,object)]
    fn typed_list(&self, items: &[SExpr]) -> Result<Vec<(String, String, Pos)>, ParseError> {
        let mut out = Vec::new();
        let mut pending: Vec<(String, Pos)> = Vec::new();
        let mut i = 0;
        while i < items.len() {
            let e = &items[i];
            let s = self.sym(e, "typed list entry")?;
            if s == "-" {
                let t = items
                    .get(i + 1)
                    .ok_or_else(|| self.syntax(e.pos(), "`-` without a type"))?;
                if t.head() == Some("either") {
                    return Err(self.err(t.pos(), K::Unsupported("`either` types".into())));
                }
                let ty = self.sym(t, "type")?;
                if pending.is_empty() {
                    return Err(self.syntax(e.pos(), "type annotation without names"));
                }
                out.extend(pending.drain(..).map(|(n, p)| (n, ty.to_string(), p)));
                i += 2;
            } else {
                pending.push((s.to_string(), e.pos()));
                i += 1;
            }
        }
        out.extend(
            pending
                .into_iter()
                .map(|(n, p)| (n, ROOT_TYPE.to_string(), p)),
        );
        Ok(out)
    }
}

/// Parses a domain file. `file` is only used in error messages.
pub fn parse_domain(text: &str) -> Result<DomainDef, ParseError> {
    parse_domain_named(text, "<domain>")
}

pub fn parse_domain_named(text: &str, file: &str) -> Result<DomainDef, ParseError> {
    let cx = Ctx { file };
    let root = sexpr::parse_one(text, file)?;
    let (name, sections) = cx.header(&root, "domain")?;

    let mut dom = DomainDef {
        name: name.to_string(),
        requirements: Vec::new(),
        types: Vec::new(),
        predicates: Vec::new(),
        operators: Vec::new(),
    };
    let mut type_pos: Vec<Pos> = Vec::new();
    let mut raw_ops: Vec<&SExpr> = Vec::new();

    for sec in sections {
        let items = cx.list(sec, "domain section")?;
        let key = items
            .first()
            .and_then(SExpr::as_atom)
            .ok_or_else(|| cx.syntax(sec.pos(), "expected a `:keyword` section"))?;
        match key {
            ":requirements" => {
                for r in &items[1..] {
                    let s = cx.sym(r, "requirement")?;
                    let req = Requirement::from_keyword(s)
                        .ok_or_else(|| cx.err(r.pos(), K::UnknownRequirement(s.to_string())))?;
                    if !dom.requirements.contains(&req) {
                        dom.requirements.push(req);
                    }
                }
            }
            ":types" => {
                for (t, parent, p) in cx.typed_list(&items[1..])? {
                    if t == ROOT_TYPE {
                        continue;
                    }
                    if dom.types.iter().any(|(x, _)| *x == t) {
                        return Err(cx.syntax(p, format!("type `{t}` declared twice")));
                    }
                    dom.types.push((t, parent));
                    type_pos.push(p);
                }
            }
            ":constants" => {
                return Err(cx.err(sec.pos(), K::Unsupported("domain constants".into())));
            }
            ":predicates" => {
                for pe in &items[1..] {
                    let pl = cx.list(pe, "predicate declaration")?;
                    let pname = pl
                        .first()
                        .ok_or_else(|| cx.syntax(pe.pos(), "empty predicate declaration"))?;
                    let pname = cx.sym(pname, "predicate name")?;
                    if dom.predicates.iter().any(|p| p.name == pname) {
                        return Err(cx.err(pe.pos(), K::DuplicatePredicate(pname.to_string())));
                    }
                    let params = cx
                        .typed_list(&pl[1..])?
                        .into_iter()
                        .map(|(n, t, _)| TypedName::new(n, t))
                        .collect();
                    dom.predicates.push(PredicateDef {
                        name: pname.to_string(),
                        params,
                    });
                }
            }
            ":functions" => {
                if !dom.requirements.contains(&Requirement::ActionCosts) {
                    return Err(cx.err(
                        sec.pos(),
                        K::Unsupported("`:functions` without `:action-costs`".into()),
                    ));
                }
            }
            ":action" => raw_ops.push(sec),
            other => {
                return Err(cx.err(sec.pos(), K::Unsupported(format!("section `{other}`"))));
            }
        }
    }

    // Parents that are never declared themselves hang off the root.
    let declared: HashSet<String> = dom.types.iter().map(|(t, _)| t.clone()).collect();
    let mut implicit = Vec::new();
    for (_, p) in &dom.types {
        if p != ROOT_TYPE && !declared.contains(p) && !implicit.contains(p) {
            implicit.push(p.clone());
        }
    }
    for p in implicit {
        dom.types.push((p, ROOT_TYPE.to_string()));
        type_pos.push(root.pos());
    }
    for (i, (t, _)) in dom.types.iter().enumerate() {
        let mut cur = t.as_str();
        let mut steps = 0;
        while let Some(p) = dom.parent_of(cur) {
            cur = p;
            steps += 1;
            if steps > dom.types.len() {
                return Err(cx.syntax(type_pos[i], format!("cyclic type hierarchy at `{t}`")));
            }
        }
    }

    for p in &dom.predicates {
        for prm in &p.params {
            if !dom.has_type(&prm.ty) {
                return Err(cx.err(root.pos(), K::UndeclaredType(prm.ty.clone())));
            }
        }
    }

    for op in raw_ops {
        let schema = parse_operator(&cx, &dom, op)?;
        dom.operators.push(schema);
    }
    Ok(dom)
}

fn parse_operator(cx: &Ctx, dom: &DomainDef, sec: &SExpr) -> Result<OperatorSchema, ParseError> {
    let items = cx.list(sec, "action")?;
    let name = items
        .get(1)
        .ok_or_else(|| cx.syntax(sec.pos(), "action without a name"))?;
    let name = cx.sym(name, "action name")?.to_string();
    let mut params = Vec::new();
    let mut pre_e = None;
    let mut eff_e = None;
    let mut i = 2;
    while i < items.len() {
        let k = cx.sym(&items[i], "action keyword")?;
        let v = items
            .get(i + 1)
            .ok_or_else(|| cx.syntax(items[i].pos(), format!("`{k}` without a value")))?;
        match k {
            ":parameters" => {
                for (n, t, p) in cx.typed_list(cx.list(v, "parameters")?)? {
                    if !n.starts_with('?') {
                        return Err(cx.syntax(p, format!("parameter `{n}` must start with `?`")));
                    }
                    if !dom.has_type(&t) {
                        return Err(cx.err(p, K::UndeclaredType(t)));
                    }
                    params.push(TypedName::new(n, t));
                }
            }
            ":precondition" => pre_e = Some(v),
            ":effect" => eff_e = Some(v),
            other => return Err(cx.err(items[i].pos(), K::Unsupported(format!("`{other}`")))),
        }
        i += 2;
    }

    let mut pre = Vec::new();
    if let Some(e) = pre_e {
        for lit in conjuncts(cx, e)? {
            match lit.head() {
                Some("not") => {
                    return Err(cx.err(lit.pos(), K::Unsupported("negative preconditions".into())))
                }
                Some("or") | Some("imply") | Some("forall") | Some("exists") | Some("=") => {
                    return Err(cx.err(
                        lit.pos(),
                        K::Unsupported(format!("`{}` in preconditions", lit.head().unwrap())),
                    ))
                }
                _ => pre.push(lifted_atom(cx, dom, &params, lit)?),
            }
        }
    }
    let mut add = Vec::new();
    let mut del = Vec::new();
    if let Some(e) = eff_e {
        for lit in conjuncts(cx, e)? {
            match lit.head() {
                Some("not") => {
                    let l = cx.list(lit, "negated effect")?;
                    if l.len() != 2 {
                        return Err(cx.syntax(lit.pos(), "`not` takes one atom"));
                    }
                    del.push(lifted_atom(cx, dom, &params, &l[1])?);
                }
                Some("increase") if dom.requirements.contains(&Requirement::ActionCosts) => {}
                Some("when") | Some("forall") => {
                    return Err(cx.err(lit.pos(), K::Unsupported("conditional effects".into())))
                }
                _ => add.push(lifted_atom(cx, dom, &params, lit)?),
            }
        }
    }
    Ok(OperatorSchema {
        name,
        params,
        pre,
        add,
        del,
    })
}

fn conjuncts<'e>(cx: &Ctx, e: &'e SExpr) -> Result<Vec<&'e SExpr>, ParseError> {
    let l = cx.list(e, "condition")?;
    if l.is_empty() {
        return Ok(Vec::new());
    }
    if e.head() == Some("and") {
        Ok(l[1..].iter().collect())
    } else {
        Ok(vec![e])
    }
}

fn lifted_atom(
    cx: &Ctx,
    dom: &DomainDef,
    params: &[TypedName],
    e: &SExpr,
) -> Result<Atom, ParseError> {
    let l = cx.list(e, "atom")?;
    let pname = l.first().ok_or_else(|| cx.syntax(e.pos(), "empty atom"))?;
    let pname = cx.sym(pname, "predicate")?;
    let pred = dom
        .predicate(pname)
        .ok_or_else(|| cx.err(e.pos(), K::UndeclaredPredicate(pname.to_string())))?;
    if pred.arity() != l.len() - 1 {
        return Err(cx.err(
            e.pos(),
            K::ArityMismatch {
                predicate: pname.to_string(),
                expected: pred.arity(),
                found: l.len() - 1,
            },
        ));
    }
    let mut args = Vec::new();
    for (a, want) in l[1..].iter().zip(&pred.params) {
        let v = cx.sym(a, "argument")?;
        if !v.starts_with('?') {
            return Err(cx.err(a.pos(), K::Unsupported(format!("constant `{v}` in schema"))));
        }
        let prm = params
            .iter()
            .find(|p| p.name == v)
            .ok_or_else(|| cx.err(a.pos(), K::UndeclaredVariable(v.to_string())))?;
        if !dom.is_subtype(&prm.ty, &want.ty) {
            return Err(cx.err(
                a.pos(),
                K::TypeMismatch {
                    predicate: pname.to_string(),
                    argument: v.to_string(),
                    expected: want.ty.clone(),
                },
            ));
        }
        args.push(v.to_string());
    }
    Ok(Atom {
        predicate: pname.to_string(),
        args,
    })
}

pub fn parse_problem(text: &str, dom: &DomainDef) -> Result<ProblemDef, ParseError> {
    parse_problem_named(text, dom, "<problem>")
}

pub fn parse_problem_named(text: &str, dom: &DomainDef, file: &str) -> Result<ProblemDef, ParseError> {
    let cx = Ctx { file };
    let root = sexpr::parse_one(text, file)?;
    let (name, sections) = cx.header(&root, "problem")?;
    let mut prob = ProblemDef {
        name: name.to_string(),
        domain: String::new(),
        objects: Vec::new(),
        init: Vec::new(),
        goal: Vec::new(),
    };
    let mut init_e: Option<&SExpr> = None;
    let mut goal_e: Option<&SExpr> = None;
    for sec in sections {
        let items = cx.list(sec, "problem section")?;
        let key = items
            .first()
            .and_then(SExpr::as_atom)
            .ok_or_else(|| cx.syntax(sec.pos(), "expected a `:keyword` section"))?;
        match key {
            ":domain" => {
                let d = items
                    .get(1)
                    .ok_or_else(|| cx.syntax(sec.pos(), "`:domain` without a name"))?;
                let d = cx.sym(d, "domain name")?;
                if d != dom.name {
                    return Err(cx.err(
                        sec.pos(),
                        K::DomainMismatch {
                            expected: dom.name.clone(),
                            found: d.to_string(),
                        },
                    ));
                }
                prob.domain = d.to_string();
            }
            ":objects" => {
                for (n, t, p) in cx.typed_list(&items[1..])? {
                    if !dom.has_type(&t) {
                        return Err(cx.err(p, K::UndeclaredType(t)));
                    }
                    if prob.objects.iter().any(|o| o.name == n) {
                        return Err(cx.err(p, K::DuplicateObject(n)));
                    }
                    prob.objects.push(TypedName::new(n, t));
                }
            }
            ":init" => init_e = Some(sec),
            ":goal" => goal_e = Some(sec),
            ":metric" if dom.requirements.contains(&Requirement::ActionCosts) => {}
            other => {
                return Err(cx.err(sec.pos(), K::Unsupported(format!("section `{other}`"))));
            }
        }
    }
    if prob.domain.is_empty() {
        prob.domain = dom.name.clone();
    }
    if let Some(sec) = init_e {
        for a in &cx.list(sec, "init")?[1..] {
            if a.head() == Some("=") && dom.requirements.contains(&Requirement::ActionCosts) {
                continue;
            }
            prob.init.push(ground_atom(&cx, dom, &prob, a)?);
        }
    }
    if let Some(sec) = goal_e {
        let l = cx.list(sec, "goal")?;
        if let Some(g) = l.get(1) {
            for lit in conjuncts(&cx, g)? {
                if lit.head() == Some("not") {
                    return Err(cx.err(lit.pos(), K::Unsupported("negative goals".into())));
                }
                prob.goal.push(ground_atom(&cx, dom, &prob, lit)?);
            }
        }
    }
    Ok(prob)
}

fn ground_atom(cx: &Ctx, dom: &DomainDef, prob: &ProblemDef, e: &SExpr) -> Result<Atom, ParseError> {
    let l = cx.list(e, "atom")?;
    let pname = l.first().ok_or_else(|| cx.syntax(e.pos(), "empty atom"))?;
    let pname = cx.sym(pname, "predicate")?;
    let pred = dom
        .predicate(pname)
        .ok_or_else(|| cx.err(e.pos(), K::UndeclaredPredicate(pname.to_string())))?;
    if pred.arity() != l.len() - 1 {
        return Err(cx.err(
            e.pos(),
            K::ArityMismatch {
                predicate: pname.to_string(),
                expected: pred.arity(),
                found: l.len() - 1,
            },
        ));
    }
    let mut args = Vec::new();
    for (a, want) in l[1..].iter().zip(&pred.params) {
        let o = cx.sym(a, "object")?;
        let ty = prob
            .object_type(o)
            .ok_or_else(|| cx.err(a.pos(), K::UnknownObject(o.to_string())))?;
        if !dom.is_subtype(ty, &want.ty) {
            return Err(cx.err(
                a.pos(),
                K::TypeMismatch {
                    predicate: pname.to_string(),
                    argument: o.to_string(),
                    expected: want.ty.clone(),
                },
            ));
        }
        args.push(o.to_string());
    }
    Ok(Atom {
        predicate: pname.to_string(),
        args,
    })
}

/// Parses a plan file: one `(name arg...)` per action; `;` comments ignored.
pub fn parse_plan_text(text: &str) -> Result<Vec<Atom>, ParseError> {
    let cx = Ctx { file: "<plan>" };
    sexpr::parse_many(text, "<plan>")?
        .iter()
        .map(|e| {
            let l = cx.list(e, "action")?;
            let name = l.first().ok_or_else(|| cx.syntax(e.pos(), "empty action"))?;
            let name = cx.sym(name, "action name")?;
            let args = l[1..]
                .iter()
                .map(|a| cx.sym(a, "argument").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Atom {
                predicate: name.to_string(),
                args,
            })
        })
        .collect()
}
