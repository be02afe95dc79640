//! S-expression surface syntax: formula parsing with positioned
//! errors and sort checking, deterministic printing (round-trip
//! identity), and the base-structure / config file formats.

use crate::ba::{BaAtom, BaFormula, SetTm};
use crate::lang::{Cmp, Inner, InnerAtom, PAtom, PFormula, Tm, SHAPE_CONST};
use crate::logic::{Formula, Quant, Sort, Var};
use crate::model::FiniteStructure;
use anyhow::{bail, ensure, Context, Result};
use std::collections::HashMap;

// ---------------------------------------------------------------------
// S-expressions
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }
    fn sym(&self) -> Result<&str> {
        match self {
            Sexp::Sym(s, _) => Ok(s),
            Sexp::List(_, p) => bail!("{p}: expected a symbol, found a list"),
        }
    }
    fn list(&self) -> Result<&[Sexp]> {
        match self {
            Sexp::List(xs, _) => Ok(xs),
            Sexp::Sym(s, p) => bail!("{p}: expected a list, found symbol {s}"),
        }
    }
}

/// Parse a whole input into its top-level S-expressions.  Comments run
/// from `;` to end of line.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>> {
    let mut chars = text.chars().peekable();
    let mut line = 1;
    let mut col = 1;
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let push = |stack: &mut Vec<(Vec<Sexp>, Pos)>, top: &mut Vec<Sexp>, s: Sexp| {
        match stack.last_mut() {
            Some((items, _)) => items.push(s),
            None => top.push(s),
        }
    };
    while let Some(&c) = chars.peek() {
        let here = Pos { line, col };
        let advance = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            ';' => {
                while let Some(&c) = chars.peek() {
                    chars.next();
                    advance(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                advance(c, &mut line, &mut col);
            }
            '(' => {
                chars.next();
                advance(c, &mut line, &mut col);
                stack.push((Vec::new(), here));
            }
            ')' => {
                chars.next();
                advance(c, &mut line, &mut col);
                let (items, open) = stack
                    .pop()
                    .with_context(|| format!("{here}: unmatched closing parenthesis"))?;
                push(&mut stack, &mut top, Sexp::List(items, open));
            }
            '"' => bail!("{here}: string literals are not part of the grammar"),
            _ => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    advance(c, &mut line, &mut col);
                }
                push(&mut stack, &mut top, Sexp::Sym(s, here));
            }
        }
    }
    if let Some((_, open)) = stack.last() {
        bail!("{open}: unclosed parenthesis");
    }
    Ok(top)
}

pub fn valid_name(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_u64(e: &Sexp) -> Result<u64> {
    let s = e.sym()?;
    s.parse()
        .with_context(|| format!("{}: expected a nonnegative integer, found {s}", e.pos()))
}

// ---------------------------------------------------------------------
// Term / term-power formula language
// ---------------------------------------------------------------------

/// What the current theory admits in the surface language.
#[derive(Clone, Debug)]
pub struct LangCtx {
    /// Term constructors with arities; 0-ary entries are the constants
    /// (primitive constants or base-carrier elements).
    pub term_cons: Vec<(String, usize)>,
    /// Liftable base relations with arities.
    pub rels: Vec<(String, usize)>,
    /// Shape sort, shape operations and `shape` homomorphism admitted.
    pub allow_shapes: bool,
    /// Cardinality atoms admitted.
    pub allow_card: bool,
    /// Cardinality atoms carry a shape argument.
    pub card_shape: bool,
}

impl LangCtx {
    pub fn cons_arity(&self, f: &str) -> Option<usize> {
        self.term_cons.iter().find(|(n, _)| n == f).map(|(_, a)| *a)
    }
    pub fn rel_arity(&self, r: &str) -> Option<usize> {
        self.rels.iter().find(|(n, _)| n == r).map(|(_, a)| *a)
    }
    fn is_cons(&self, f: &str) -> bool {
        self.cons_arity(f).is_some()
    }
}

const KEYWORDS: &[&str] = &[
    "and", "or", "not", "implies", "iff", "forall", "exists", "sel", "is", "shape", "shp",
    "shp-c", "sel-s", "is-s", "lift", "card=", "card>=", "inner", "inner-forall",
    "inner-exists", "distinct", "term", "set",
];

struct FParser<'a> {
    ctx: &'a LangCtx,
    env: HashMap<Var, Option<Sort>>, // None = sort not yet determined
}

impl<'a> FParser<'a> {
    fn var_ok(&self, e: &Sexp, s: &str) -> Result<()> {
        ensure!(
            valid_name(s),
            "{}: invalid name {s} (expected [A-Za-z][A-Za-z0-9_]*)",
            e.pos()
        );
        ensure!(
            !KEYWORDS.contains(&s),
            "{}: {s} is a reserved keyword",
            e.pos()
        );
        ensure!(
            self.ctx.rel_arity(s).is_none(),
            "{}: {s} is a relation name, not a variable",
            e.pos()
        );
        Ok(())
    }

    /// Record / check the sort of a variable occurrence.
    fn use_var(&mut self, e: &Sexp, v: &str, want: Option<Sort>) -> Result<()> {
        match self.env.get_mut(v) {
            Some(slot) => match (&slot, want) {
                (Some(have), Some(w)) if *have != w => {
                    bail!(
                        "{}: variable {v} used at sort {:?} but has sort {:?}",
                        e.pos(),
                        w,
                        have
                    )
                }
                (None, Some(w)) => {
                    *slot = Some(w);
                    Ok(())
                }
                _ => Ok(()),
            },
            None => {
                self.env.insert(v.to_string(), want);
                Ok(())
            }
        }
    }

    fn term(&mut self, e: &Sexp, want: Option<Sort>) -> Result<(Tm, Option<Sort>)> {
        match e {
            Sexp::Sym(s, _) => {
                if self.ctx.cons_arity(s) == Some(0) {
                    ensure!(
                        want != Some(Sort::Shape),
                        "{}: constant {s} has term sort, shape expected",
                        e.pos()
                    );
                    return Ok((Tm::Cons(s.clone(), vec![]), Some(Sort::Term)));
                }
                if self.ctx.is_cons(s) {
                    bail!("{}: constructor {s} used without arguments", e.pos());
                }
                self.var_ok(e, s)?;
                self.use_var(e, s, want)?;
                Ok((Tm::Var(s.clone()), self.env[s.as_str()]))
            }
            Sexp::List(items, p) => {
                ensure!(!items.is_empty(), "{p}: empty term");
                let head = items[0].sym()?;
                match head {
                    "sel" => {
                        ensure!(items.len() == 4, "{p}: (sel f i t) takes 3 arguments");
                        let f = items[1].sym()?.to_string();
                        let ar = self
                            .ctx
                            .cons_arity(&f)
                            .with_context(|| format!("{p}: unknown constructor {f}"))?;
                        let i = parse_u64(&items[2])? as usize;
                        ensure!(
                            i >= 1 && i <= ar,
                            "{}: selector index {i} out of range for {f} of arity {ar}",
                            items[2].pos()
                        );
                        let (t, _) = self.term(&items[3], Some(Sort::Term))?;
                        self.check_want(p, Sort::Term, want)?;
                        Ok((Tm::Sel(f, i, Box::new(t)), Some(Sort::Term)))
                    }
                    "shape" => {
                        self.shapes_ok(p)?;
                        ensure!(items.len() == 2, "{p}: (shape t) takes 1 argument");
                        let (t, _) = self.term(&items[1], Some(Sort::Term))?;
                        self.check_want(p, Sort::Shape, want)?;
                        Ok((Tm::ShapeOf(Box::new(t)), Some(Sort::Shape)))
                    }
                    "shp" => {
                        self.shapes_ok(p)?;
                        ensure!(items.len() >= 2, "{p}: (shp f s...) needs a constructor");
                        let f = items[1].sym()?.to_string();
                        let ar = self
                            .ctx
                            .cons_arity(&f)
                            .with_context(|| format!("{p}: unknown constructor {f}"))?;
                        ensure!(ar >= 1, "{p}: {f} is a constant, use (shp-c)");
                        ensure!(
                            items.len() == 2 + ar,
                            "{p}: shape constructor {f} takes {ar} arguments"
                        );
                        let args: Vec<Tm> = items[2..]
                            .iter()
                            .map(|a| Ok(self.term(a, Some(Sort::Shape))?.0))
                            .collect::<Result<_>>()?;
                        self.check_want(p, Sort::Shape, want)?;
                        Ok((Tm::ShCons(f, args), Some(Sort::Shape)))
                    }
                    "shp-c" => {
                        self.shapes_ok(p)?;
                        ensure!(items.len() == 1, "{p}: (shp-c) takes no arguments");
                        self.check_want(p, Sort::Shape, want)?;
                        Ok((Tm::ShCons(SHAPE_CONST.into(), vec![]), Some(Sort::Shape)))
                    }
                    "sel-s" => {
                        self.shapes_ok(p)?;
                        ensure!(items.len() == 4, "{p}: (sel-s f i s) takes 3 arguments");
                        let f = items[1].sym()?.to_string();
                        let ar = self
                            .ctx
                            .cons_arity(&f)
                            .with_context(|| format!("{p}: unknown constructor {f}"))?;
                        ensure!(ar >= 1, "{p}: cannot select from constant {f}");
                        let i = parse_u64(&items[2])? as usize;
                        ensure!(
                            i >= 1 && i <= ar,
                            "{}: selector index {i} out of range for {f} of arity {ar}",
                            items[2].pos()
                        );
                        let (t, _) = self.term(&items[3], Some(Sort::Shape))?;
                        self.check_want(p, Sort::Shape, want)?;
                        Ok((Tm::ShSel(f, i, Box::new(t)), Some(Sort::Shape)))
                    }
                    f if self.ctx.is_cons(f) => {
                        let ar = self.ctx.cons_arity(f).unwrap();
                        ensure!(
                            items.len() == 1 + ar,
                            "{p}: constructor {f} takes {ar} arguments, got {}",
                            items.len() - 1
                        );
                        let args: Vec<Tm> = items[1..]
                            .iter()
                            .map(|a| Ok(self.term(a, Some(Sort::Term))?.0))
                            .collect::<Result<_>>()?;
                        self.check_want(p, Sort::Term, want)?;
                        Ok((Tm::Cons(f.to_string(), args), Some(Sort::Term)))
                    }
                    other => bail!("{p}: unknown term head {other}"),
                }
            }
        }
    }

    fn shapes_ok(&self, p: &Pos) -> Result<()> {
        ensure!(
            self.ctx.allow_shapes,
            "{p}: the shape sort is not part of this theory"
        );
        Ok(())
    }

    fn check_want(&self, p: &Pos, have: Sort, want: Option<Sort>) -> Result<()> {
        if let Some(w) = want {
            ensure!(w == have, "{p}: sort mismatch: {have:?} where {w:?} expected");
        }
        Ok(())
    }

    fn formula(&mut self, e: &Sexp) -> Result<PFormula> {
        let items = e.list()?;
        let p = e.pos();
        ensure!(!items.is_empty(), "{p}: empty formula");
        let head = items[0].sym()?;
        match head {
            "and" => Ok(Formula::and(
                items[1..]
                    .iter()
                    .map(|x| self.formula(x))
                    .collect::<Result<_>>()?,
            )),
            "or" => Ok(Formula::or(
                items[1..]
                    .iter()
                    .map(|x| self.formula(x))
                    .collect::<Result<_>>()?,
            )),
            "not" => {
                ensure!(items.len() == 2, "{p}: (not f) takes 1 argument");
                Ok(Formula::not(self.formula(&items[1])?))
            }
            "implies" => {
                ensure!(items.len() == 3, "{p}: (implies f g) takes 2 arguments");
                Ok(Formula::implies(
                    self.formula(&items[1])?,
                    self.formula(&items[2])?,
                ))
            }
            "iff" => {
                ensure!(items.len() == 3, "{p}: (iff f g) takes 2 arguments");
                Ok(Formula::iff(
                    self.formula(&items[1])?,
                    self.formula(&items[2])?,
                ))
            }
            "forall" | "exists" => {
                let q = if head == "forall" {
                    Quant::Forall
                } else {
                    Quant::Exists
                };
                ensure!(items.len() == 3, "{p}: ({head} (binders) body)");
                let binders = items[1].list()?;
                ensure!(!binders.is_empty(), "{p}: empty binder list");
                let mut parsed: Vec<(Var, Sort)> = Vec::new();
                for b in binders {
                    let pair = b.list()?;
                    ensure!(
                        pair.len() == 2,
                        "{}: binder must be (name sort)",
                        b.pos()
                    );
                    let name = pair[0].sym()?.to_string();
                    self.var_ok(&pair[0], &name)?;
                    let sort = match pair[1].sym()? {
                        "term" => Sort::Term,
                        "shape" => {
                            self.shapes_ok(&pair[1].pos())?;
                            Sort::Shape
                        }
                        other => bail!("{}: unknown sort {other}", pair[1].pos()),
                    };
                    parsed.push((name, sort));
                }
                // binders shadow; save and restore outer entries
                let saved: Vec<(Var, Option<Option<Sort>>)> = parsed
                    .iter()
                    .map(|(v, s)| {
                        let old = self.env.insert(v.clone(), Some(*s));
                        (v.clone(), old)
                    })
                    .collect();
                let mut body = self.formula(&items[2])?;
                for (v, old) in saved.into_iter().rev() {
                    match old {
                        Some(o) => {
                            self.env.insert(v, o);
                        }
                        None => {
                            self.env.remove(&v);
                        }
                    }
                }
                for (v, s) in parsed.into_iter().rev() {
                    body = Formula::Quantified(q, v, s, Box::new(body));
                }
                Ok(body)
            }
            "=" | "distinct" => {
                ensure!(items.len() == 3, "{p}: ({head} t1 t2) takes 2 arguments");
                let (t1, s1) = self.term(&items[1], None)?;
                let (t2, _) = self.term(&items[2], s1)?;
                // propagate a sort learned only from the right side
                if s1.is_none() {
                    if let (Tm::Var(v), Some(s2)) = (&t1, self.tm_sort(&t2)) {
                        self.use_var(&items[1], v, Some(s2))?;
                    }
                }
                let eq = Formula::Atom(PAtom::Eq(t1, t2));
                Ok(if head == "=" { eq } else { Formula::not(eq) })
            }
            "is" => {
                ensure!(items.len() == 3, "{p}: (is f t) takes 2 arguments");
                let f = items[1].sym()?.to_string();
                self.ctx
                    .cons_arity(&f)
                    .with_context(|| format!("{p}: unknown constructor {f}"))?;
                let (t, _) = self.term(&items[2], Some(Sort::Term))?;
                Ok(Formula::Atom(PAtom::Is(f, t)))
            }
            "is-s" => {
                self.shapes_ok(&p)?;
                ensure!(items.len() == 3, "{p}: (is-s f s) takes 2 arguments");
                let f = items[1].sym()?.to_string();
                let ar = self
                    .ctx
                    .cons_arity(&f)
                    .with_context(|| format!("{p}: unknown constructor {f}"))?;
                ensure!(ar >= 1, "{p}: (is-s {f} ...) needs a proper constructor");
                let (t, _) = self.term(&items[2], Some(Sort::Shape))?;
                Ok(Formula::Atom(PAtom::IsSh(f, t)))
            }
            "lift" => {
                ensure!(
                    !self.ctx.rels.is_empty(),
                    "{p}: no base relations in this theory"
                );
                ensure!(items.len() >= 2, "{p}: (lift r t...) needs a relation");
                let r = items[1].sym()?.to_string();
                let ar = self
                    .ctx
                    .rel_arity(&r)
                    .with_context(|| format!("{p}: unknown relation {r}"))?;
                ensure!(
                    items.len() == 2 + ar,
                    "{p}: relation {r} takes {ar} arguments, got {}",
                    items.len() - 2
                );
                let args: Vec<Tm> = items[2..]
                    .iter()
                    .map(|a| Ok(self.term(a, Some(Sort::Term))?.0))
                    .collect::<Result<_>>()?;
                Ok(Formula::Atom(PAtom::Rel(r, args)))
            }
            "card=" | "card>=" => {
                ensure!(
                    self.ctx.allow_card,
                    "{p}: cardinality atoms are not part of this theory"
                );
                let cmp = if head == "card=" { Cmp::Eq } else { Cmp::Ge };
                let (k, shape, inner_e) = if self.ctx.card_shape {
                    ensure!(
                        items.len() == 4,
                        "{p}: ({head} k s (inner ...)) takes 3 arguments"
                    );
                    let (s, _) = self.term(&items[2], Some(Sort::Shape))?;
                    (parse_u64(&items[1])?, s, &items[3])
                } else {
                    ensure!(
                        items.len() == 3,
                        "{p}: ({head} k (inner ...)) takes 2 arguments"
                    );
                    (
                        parse_u64(&items[1])?,
                        Tm::ShCons(SHAPE_CONST.into(), vec![]),
                        &items[2],
                    )
                };
                let ie = inner_e.list()?;
                ensure!(
                    !ie.is_empty() && ie[0].sym().map(|s| s == "inner").unwrap_or(false),
                    "{}: expected (inner ...)",
                    inner_e.pos()
                );
                ensure!(
                    ie.len() == 2,
                    "{}: (inner f) takes exactly one formula",
                    inner_e.pos()
                );
                let mut inner_bound = Vec::new();
                let inner = self.inner_formula(&ie[1], &mut inner_bound)?;
                Ok(Formula::Atom(PAtom::Card {
                    inner,
                    shape,
                    cmp,
                    k,
                }))
            }
            other => bail!("{p}: unknown formula head {other}"),
        }
    }

    fn tm_sort(&self, t: &Tm) -> Option<Sort> {
        match t {
            Tm::Var(v) => self.env.get(v).copied().flatten(),
            _ => t.sort_hint(),
        }
    }

    fn inner_formula(&mut self, e: &Sexp, bound: &mut Vec<Var>) -> Result<Inner> {
        let items = e.list()?;
        let p = e.pos();
        ensure!(!items.is_empty(), "{p}: empty inner formula");
        let head = items[0].sym()?;
        match head {
            "and" => Ok(Formula::and(
                items[1..]
                    .iter()
                    .map(|x| self.inner_formula(x, bound))
                    .collect::<Result<_>>()?,
            )),
            "or" => Ok(Formula::or(
                items[1..]
                    .iter()
                    .map(|x| self.inner_formula(x, bound))
                    .collect::<Result<_>>()?,
            )),
            "not" => {
                ensure!(items.len() == 2, "{p}: (not f) takes 1 argument");
                Ok(Formula::not(self.inner_formula(&items[1], bound)?))
            }
            "implies" => {
                ensure!(items.len() == 3, "{p}: (implies f g) takes 2 arguments");
                Ok(Formula::implies(
                    self.inner_formula(&items[1], bound)?,
                    self.inner_formula(&items[2], bound)?,
                ))
            }
            "iff" => {
                ensure!(items.len() == 3, "{p}: (iff f g) takes 2 arguments");
                Ok(Formula::iff(
                    self.inner_formula(&items[1], bound)?,
                    self.inner_formula(&items[2], bound)?,
                ))
            }
            "inner-forall" | "inner-exists" => {
                let q = if head == "inner-forall" {
                    Quant::Forall
                } else {
                    Quant::Exists
                };
                ensure!(items.len() == 3, "{p}: ({head} (v...) body)");
                let binders = items[1].list()?;
                ensure!(!binders.is_empty(), "{p}: empty binder list");
                let names: Vec<String> = binders
                    .iter()
                    .map(|b| {
                        let n = b.sym()?.to_string();
                        self.var_ok(b, &n)?;
                        Ok(n)
                    })
                    .collect::<Result<_>>()?;
                bound.extend(names.iter().cloned());
                let mut body = self.inner_formula(&items[2], bound)?;
                for _ in &names {
                    bound.pop();
                }
                for n in names.into_iter().rev() {
                    body = Formula::Quantified(q, n, Sort::Term, Box::new(body));
                }
                Ok(body)
            }
            r => {
                let ar = self
                    .ctx
                    .rel_arity(r)
                    .with_context(|| format!("{p}: unknown inner relation {r}"))?;
                ensure!(
                    items.len() == 1 + ar,
                    "{p}: relation {r} takes {ar} arguments, got {}",
                    items.len() - 1
                );
                let args: Vec<Tm> = items[1..]
                    .iter()
                    .map(|a| {
                        // inner-bound names are points of the base
                        // carrier, not outer term variables
                        if let Sexp::Sym(s, _) = a {
                            if bound.contains(s) {
                                return Ok(Tm::Var(s.clone()));
                            }
                        }
                        Ok(self.term(a, Some(Sort::Term))?.0)
                    })
                    .collect::<Result<_>>()?;
                Ok(Formula::Atom(InnerAtom::Rel(r.to_string(), args)))
            }
        }
    }
}

/// Parse a single formula in the term / term-power surface language.
pub fn parse_power_formula(text: &str, ctx: &LangCtx) -> Result<PFormula> {
    let tops = parse_sexps(text)?;
    ensure!(
        tops.len() == 1,
        "expected exactly one top-level formula, found {}",
        tops.len()
    );
    let mut p = FParser {
        ctx,
        env: HashMap::new(),
    };
    p.formula(&tops[0])
}

// ---------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------

/// Render to nested lists first, then lay out deterministically.
enum Doc {
    Leaf(String),
    Node(Vec<Doc>),
}

impl Doc {
    fn n(head: &str, rest: Vec<Doc>) -> Doc {
        let mut v = vec![Doc::Leaf(head.to_string())];
        v.extend(rest);
        Doc::Node(v)
    }

    fn width(&self) -> usize {
        match self {
            Doc::Leaf(s) => s.len(),
            Doc::Node(ds) => {
                2 + ds.iter().map(|d| d.width()).sum::<usize>() + ds.len().saturating_sub(1)
            }
        }
    }

    fn render(&self, out: &mut String, indent: usize) {
        match self {
            Doc::Leaf(s) => out.push_str(s),
            Doc::Node(ds) => {
                if self.width() + indent <= 72 || ds.len() <= 1 {
                    out.push('(');
                    for (i, d) in ds.iter().enumerate() {
                        if i > 0 {
                            out.push(' ');
                        }
                        d.render(out, indent + 1);
                    }
                    out.push(')');
                } else {
                    out.push('(');
                    ds[0].render(out, indent + 1);
                    for d in &ds[1..] {
                        out.push('\n');
                        for _ in 0..indent + 2 {
                            out.push(' ');
                        }
                        d.render(out, indent + 2);
                    }
                    out.push(')');
                }
            }
        }
    }
}

fn tm_doc(t: &Tm) -> Doc {
    match t {
        Tm::Var(v) => Doc::Leaf(v.clone()),
        Tm::Cons(f, ts) if ts.is_empty() => Doc::Leaf(f.clone()),
        Tm::Cons(f, ts) => Doc::n(f, ts.iter().map(tm_doc).collect()),
        Tm::Sel(f, i, t) => Doc::n(
            "sel",
            vec![Doc::Leaf(f.clone()), Doc::Leaf(i.to_string()), tm_doc(t)],
        ),
        Tm::ShCons(f, ts) if f == SHAPE_CONST => {
            debug_assert!(ts.is_empty());
            Doc::n("shp-c", vec![])
        }
        Tm::ShCons(f, ts) => {
            let mut v = vec![Doc::Leaf(f.clone())];
            v.extend(ts.iter().map(tm_doc));
            Doc::n("shp", v)
        }
        Tm::ShSel(f, i, t) => Doc::n(
            "sel-s",
            vec![Doc::Leaf(f.clone()), Doc::Leaf(i.to_string()), tm_doc(t)],
        ),
        Tm::ShapeOf(t) => Doc::n("shape", vec![tm_doc(t)]),
    }
}

pub fn print_tm(t: &Tm) -> String {
    let mut s = String::new();
    tm_doc(t).render(&mut s, 0);
    s
}

fn inner_doc(f: &Inner) -> Doc {
    match f {
        Formula::True => Doc::n("and", vec![]),
        Formula::False => Doc::n("or", vec![]),
        Formula::Undef => panic!("cannot print an undefined inner formula"),
        Formula::Atom(InnerAtom::Rel(r, ts)) => Doc::n(r, ts.iter().map(tm_doc).collect()),
        Formula::Not(g) => Doc::n("not", vec![inner_doc(g)]),
        Formula::And(gs) => Doc::n("and", gs.iter().map(inner_doc).collect()),
        Formula::Or(gs) => Doc::n("or", gs.iter().map(inner_doc).collect()),
        Formula::Quantified(q, x, _, g) => Doc::n(
            match q {
                Quant::Forall => "inner-forall",
                Quant::Exists => "inner-exists",
            },
            vec![Doc::Node(vec![Doc::Leaf(x.clone())]), inner_doc(g)],
        ),
    }
}

fn patom_doc(a: &PAtom, card_shape: bool) -> Doc {
    match a {
        PAtom::Eq(t1, t2) => Doc::n("=", vec![tm_doc(t1), tm_doc(t2)]),
        PAtom::Is(f, t) => Doc::n("is", vec![Doc::Leaf(f.clone()), tm_doc(t)]),
        PAtom::IsSh(f, t) => Doc::n("is-s", vec![Doc::Leaf(f.clone()), tm_doc(t)]),
        PAtom::Rel(r, ts) => {
            let mut v = vec![Doc::Leaf(r.clone())];
            v.extend(ts.iter().map(tm_doc));
            Doc::n("lift", v)
        }
        PAtom::Card {
            inner,
            shape,
            cmp,
            k,
        } => {
            let head = match cmp {
                Cmp::Eq => "card=",
                Cmp::Ge => "card>=",
            };
            let mut v = vec![Doc::Leaf(k.to_string())];
            if card_shape {
                v.push(tm_doc(shape));
            }
            v.push(Doc::n("inner", vec![inner_doc(inner)]));
            Doc::n(head, v)
        }
    }
}

fn pformula_doc(f: &PFormula, card_shape: bool) -> Doc {
    match f {
        Formula::True => Doc::n("and", vec![]),
        Formula::False => Doc::n("or", vec![]),
        Formula::Undef => panic!("cannot print an undefined formula"),
        Formula::Atom(a) => patom_doc(a, card_shape),
        Formula::Not(g) => Doc::n("not", vec![pformula_doc(g, card_shape)]),
        Formula::And(gs) => {
            Doc::n("and", gs.iter().map(|g| pformula_doc(g, card_shape)).collect())
        }
        Formula::Or(gs) => {
            Doc::n("or", gs.iter().map(|g| pformula_doc(g, card_shape)).collect())
        }
        Formula::Quantified(q, x, s, g) => Doc::n(
            match q {
                Quant::Forall => "forall",
                Quant::Exists => "exists",
            },
            vec![
                Doc::Node(vec![Doc::Node(vec![
                    Doc::Leaf(x.clone()),
                    Doc::Leaf(
                        match s {
                            Sort::Term => "term",
                            Sort::Shape => "shape",
                        }
                        .into(),
                    ),
                ])]),
                pformula_doc(g, card_shape),
            ],
        ),
    }
}

/// Rename internally generated variables (which contain `%`) to names
/// the surface grammar accepts, avoiding every name already in use.
pub fn sanitize(f: &PFormula) -> PFormula {
    let mut used = std::collections::BTreeSet::new();
    let mut gen_names = Vec::new();
    fn scan_tm(t: &Tm, used: &mut std::collections::BTreeSet<String>, g: &mut Vec<String>) {
        t.for_each_var(&mut |v| {
            if v.contains('%') {
                if !g.contains(v) {
                    g.push(v.clone());
                }
            } else {
                used.insert(v.clone());
            }
        });
    }
    fn scan(
        f: &PFormula,
        used: &mut std::collections::BTreeSet<String>,
        g: &mut Vec<String>,
    ) {
        match f {
            Formula::Atom(a) => {
                match a {
                    PAtom::Eq(t1, t2) => {
                        scan_tm(t1, used, g);
                        scan_tm(t2, used, g);
                    }
                    PAtom::Is(_, t) | PAtom::IsSh(_, t) => scan_tm(t, used, g),
                    PAtom::Rel(_, ts) => ts.iter().for_each(|t| scan_tm(t, used, g)),
                    PAtom::Card { inner, shape, .. } => {
                        scan_tm(shape, used, g);
                        scan_inner(inner, used, g);
                    }
                }
            }
            Formula::Not(x) => scan(x, used, g),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| scan(x, used, g)),
            Formula::Quantified(_, x, _, b) => {
                if x.contains('%') {
                    if !g.contains(x) {
                        g.push(x.clone());
                    }
                } else {
                    used.insert(x.clone());
                }
                scan(b, used, g);
            }
            _ => {}
        }
    }
    fn scan_inner(
        f: &Inner,
        used: &mut std::collections::BTreeSet<String>,
        g: &mut Vec<String>,
    ) {
        match f {
            Formula::Atom(InnerAtom::Rel(_, ts)) => {
                ts.iter().for_each(|t| scan_tm(t, used, g))
            }
            Formula::Not(x) => scan_inner(x, used, g),
            Formula::And(xs) | Formula::Or(xs) => {
                xs.iter().for_each(|x| scan_inner(x, used, g))
            }
            Formula::Quantified(_, x, _, b) => {
                if x.contains('%') {
                    if !g.contains(x) {
                        g.push(x.clone());
                    }
                } else {
                    used.insert(x.clone());
                }
                scan_inner(b, used, g);
            }
            _ => {}
        }
    }
    scan(f, &mut used, &mut gen_names);
    let mut map: HashMap<Var, Var> = HashMap::new();
    let mut counter = 0usize;
    for v in gen_names {
        loop {
            let cand = format!("v{counter}");
            counter += 1;
            if !used.contains(&cand) {
                used.insert(cand.clone());
                map.insert(v, cand);
                break;
            }
        }
    }
    rename_all(f, &map)
}

/// Rename variables including binder occurrences (all names distinct
/// from the map's targets by construction).
fn rename_all(f: &PFormula, map: &HashMap<Var, Var>) -> PFormula {
    let tm_map: HashMap<Var, Tm> = map
        .iter()
        .map(|(k, v)| (k.clone(), Tm::Var(v.clone())))
        .collect();
    fn go(f: &PFormula, map: &HashMap<Var, Var>, tm_map: &HashMap<Var, Tm>) -> PFormula {
        match f {
            Formula::Atom(a) => Formula::Atom(patom_rename_all(a, map, tm_map)),
            Formula::Not(g) => Formula::Not(Box::new(go(g, map, tm_map))),
            Formula::And(gs) => {
                Formula::And(gs.iter().map(|g| go(g, map, tm_map)).collect())
            }
            Formula::Or(gs) => Formula::Or(gs.iter().map(|g| go(g, map, tm_map)).collect()),
            Formula::Quantified(q, x, s, g) => Formula::Quantified(
                *q,
                map.get(x).cloned().unwrap_or_else(|| x.clone()),
                *s,
                Box::new(go(g, map, tm_map)),
            ),
            other => other.clone(),
        }
    }
    fn inner_rename_all(f: &Inner, map: &HashMap<Var, Var>, tm_map: &HashMap<Var, Tm>) -> Inner {
        match f {
            Formula::Atom(InnerAtom::Rel(r, ts)) => Formula::Atom(InnerAtom::Rel(
                r.clone(),
                ts.iter().map(|t| t.subst(tm_map)).collect(),
            )),
            Formula::Not(g) => Formula::Not(Box::new(inner_rename_all(g, map, tm_map))),
            Formula::And(gs) => Formula::And(
                gs.iter().map(|g| inner_rename_all(g, map, tm_map)).collect(),
            ),
            Formula::Or(gs) => Formula::Or(
                gs.iter().map(|g| inner_rename_all(g, map, tm_map)).collect(),
            ),
            Formula::Quantified(q, x, s, g) => Formula::Quantified(
                *q,
                map.get(x).cloned().unwrap_or_else(|| x.clone()),
                *s,
                Box::new(inner_rename_all(g, map, tm_map)),
            ),
            other => other.clone(),
        }
    }
    fn patom_rename_all(
        a: &PAtom,
        map: &HashMap<Var, Var>,
        tm_map: &HashMap<Var, Tm>,
    ) -> PAtom {
        match a {
            PAtom::Card {
                inner,
                shape,
                cmp,
                k,
            } => PAtom::Card {
                inner: inner_rename_all(inner, map, tm_map),
                shape: shape.subst(tm_map),
                cmp: *cmp,
                k: *k,
            },
            other => other.subst(tm_map),
        }
    }
    go(f, map, &tm_map)
}

/// Deterministic printing of a formula in the surface grammar.  Any
/// internally generated variable names are sanitized first so the
/// output is re-parseable.
pub fn print_power_formula(f: &PFormula, card_shape: bool) -> String {
    let mut s = String::new();
    pformula_doc(&sanitize(f), card_shape).render(&mut s, 0);
    s
}

// ---------------------------------------------------------------------
// Set-algebra surface language
// ---------------------------------------------------------------------

fn ba_term(e: &Sexp) -> Result<SetTm> {
    match e {
        Sexp::Sym(s, p) => match s.as_str() {
            "empty" => Ok(SetTm::Zero),
            "full" => Ok(SetTm::One),
            s if valid_name(s) && !KEYWORDS.contains(&s) => Ok(SetTm::Var(s.to_string())),
            s => bail!("{p}: invalid set variable {s}"),
        },
        Sexp::List(items, p) => {
            ensure!(!items.is_empty(), "{p}: empty set term");
            match items[0].sym()? {
                "inter" => {
                    ensure!(items.len() >= 3, "{p}: (inter a b ...) needs 2+ arguments");
                    let mut t = ba_term(&items[1])?;
                    for x in &items[2..] {
                        t = SetTm::Inter(Box::new(t), Box::new(ba_term(x)?));
                    }
                    Ok(t)
                }
                "union" => {
                    ensure!(items.len() >= 3, "{p}: (union a b ...) needs 2+ arguments");
                    let mut t = ba_term(&items[1])?;
                    for x in &items[2..] {
                        t = SetTm::Union(Box::new(t), Box::new(ba_term(x)?));
                    }
                    Ok(t)
                }
                "compl" => {
                    ensure!(items.len() == 2, "{p}: (compl a) takes 1 argument");
                    Ok(SetTm::Compl(Box::new(ba_term(&items[1])?)))
                }
                other => bail!("{p}: unknown set operation {other}"),
            }
        }
    }
}

fn ba_formula(e: &Sexp) -> Result<BaFormula> {
    let items = e.list()?;
    let p = e.pos();
    ensure!(!items.is_empty(), "{p}: empty formula");
    match items[0].sym()? {
        "and" => Ok(Formula::and(
            items[1..].iter().map(ba_formula).collect::<Result<_>>()?,
        )),
        "or" => Ok(Formula::or(
            items[1..].iter().map(ba_formula).collect::<Result<_>>()?,
        )),
        "not" => {
            ensure!(items.len() == 2, "{p}: (not f) takes 1 argument");
            Ok(Formula::not(ba_formula(&items[1])?))
        }
        "implies" => {
            ensure!(items.len() == 3, "{p}: (implies f g) takes 2 arguments");
            Ok(Formula::implies(ba_formula(&items[1])?, ba_formula(&items[2])?))
        }
        "iff" => {
            ensure!(items.len() == 3, "{p}: (iff f g) takes 2 arguments");
            Ok(Formula::iff(ba_formula(&items[1])?, ba_formula(&items[2])?))
        }
        "forall" | "exists" => {
            let q = if items[0].sym()? == "forall" {
                Quant::Forall
            } else {
                Quant::Exists
            };
            ensure!(items.len() == 3, "{p}: quantifier takes binders and body");
            let binders = items[1].list()?;
            ensure!(!binders.is_empty(), "{p}: empty binder list");
            let mut names = Vec::new();
            for b in binders {
                let pair = b.list()?;
                ensure!(pair.len() == 2, "{}: binder must be (name set)", b.pos());
                let n = pair[0].sym()?.to_string();
                ensure!(valid_name(&n), "{}: invalid name {n}", pair[0].pos());
                ensure!(
                    pair[1].sym()? == "set",
                    "{}: set-algebra binders have sort set",
                    pair[1].pos()
                );
                names.push(n);
            }
            let mut body = ba_formula(&items[2])?;
            for n in names.into_iter().rev() {
                body = Formula::Quantified(q, n, Sort::Term, Box::new(body));
            }
            Ok(body)
        }
        "card=" | "card>=" => {
            ensure!(items.len() == 3, "{p}: (card= k t) takes 2 arguments");
            let cmp = if items[0].sym()? == "card=" {
                Cmp::Eq
            } else {
                Cmp::Ge
            };
            Ok(Formula::Atom(BaAtom::Card(
                ba_term(&items[2])?,
                cmp,
                parse_u64(&items[1])?,
            )))
        }
        "subset" => {
            ensure!(items.len() == 3, "{p}: (subset a b) takes 2 arguments");
            Ok(Formula::Atom(BaAtom::Subset(
                ba_term(&items[1])?,
                ba_term(&items[2])?,
            )))
        }
        "=" => {
            ensure!(items.len() == 3, "{p}: (= a b) takes 2 arguments");
            Ok(Formula::Atom(BaAtom::SetEq(
                ba_term(&items[1])?,
                ba_term(&items[2])?,
            )))
        }
        other => bail!("{p}: unknown formula head {other}"),
    }
}

pub fn parse_ba_formula(text: &str) -> Result<BaFormula> {
    let tops = parse_sexps(text)?;
    ensure!(
        tops.len() == 1,
        "expected exactly one top-level formula, found {}",
        tops.len()
    );
    ba_formula(&tops[0])
}

fn ba_term_doc(t: &SetTm) -> Doc {
    match t {
        SetTm::Var(v) => Doc::Leaf(v.clone()),
        SetTm::Zero => Doc::Leaf("empty".into()),
        SetTm::One => Doc::Leaf("full".into()),
        SetTm::Inter(a, b) => Doc::n("inter", vec![ba_term_doc(a), ba_term_doc(b)]),
        SetTm::Union(a, b) => Doc::n("union", vec![ba_term_doc(a), ba_term_doc(b)]),
        SetTm::Compl(a) => Doc::n("compl", vec![ba_term_doc(a)]),
    }
}

fn ba_doc(f: &BaFormula) -> Doc {
    match f {
        Formula::True => Doc::n("and", vec![]),
        Formula::False => Doc::n("or", vec![]),
        Formula::Undef => panic!("cannot print an undefined formula"),
        Formula::Atom(BaAtom::Card(t, c, k)) => Doc::n(
            match c {
                Cmp::Eq => "card=",
                Cmp::Ge => "card>=",
            },
            vec![Doc::Leaf(k.to_string()), ba_term_doc(t)],
        ),
        Formula::Atom(BaAtom::Subset(a, b)) => {
            Doc::n("subset", vec![ba_term_doc(a), ba_term_doc(b)])
        }
        Formula::Atom(BaAtom::SetEq(a, b)) => Doc::n("=", vec![ba_term_doc(a), ba_term_doc(b)]),
        Formula::Not(g) => Doc::n("not", vec![ba_doc(g)]),
        Formula::And(gs) => Doc::n("and", gs.iter().map(ba_doc).collect()),
        Formula::Or(gs) => Doc::n("or", gs.iter().map(ba_doc).collect()),
        Formula::Quantified(q, x, _, g) => Doc::n(
            match q {
                Quant::Forall => "forall",
                Quant::Exists => "exists",
            },
            vec![
                Doc::Node(vec![Doc::Node(vec![
                    Doc::Leaf(x.clone()),
                    Doc::Leaf("set".into()),
                ])]),
                ba_doc(g),
            ],
        ),
    }
}

pub fn print_ba_formula(f: &BaFormula) -> String {
    // set-algebra elimination introduces no fresh free names, but bound
    // ones may carry the internal marker; print after renaming them
    let mut counter = 0;
    let mut map = HashMap::new();
    fn collect(f: &BaFormula, map: &mut HashMap<Var, Var>, counter: &mut usize) {
        if let Formula::Quantified(_, x, _, g) = f {
            if x.contains('%') && !map.contains_key(x) {
                map.insert(x.clone(), format!("v{counter}"));
                *counter += 1;
            }
            collect(g, map, counter);
        } else {
            match f {
                Formula::Not(g) => collect(g, map, counter),
                Formula::And(gs) | Formula::Or(gs) => {
                    gs.iter().for_each(|g| collect(g, map, counter))
                }
                _ => {}
            }
        }
    }
    collect(f, &mut map, &mut counter);
    let f = if map.is_empty() {
        f.clone()
    } else {
        fn deep_rename(f: &BaFormula, map: &HashMap<Var, Var>) -> BaFormula {
            match f {
                Formula::Quantified(q, x, s, g) => Formula::Quantified(
                    *q,
                    map.get(x).cloned().unwrap_or_else(|| x.clone()),
                    *s,
                    Box::new(deep_rename(g, map)),
                ),
                Formula::Not(g) => Formula::Not(Box::new(deep_rename(g, map))),
                Formula::And(gs) => {
                    Formula::And(gs.iter().map(|g| deep_rename(g, map)).collect())
                }
                Formula::Or(gs) => {
                    Formula::Or(gs.iter().map(|g| deep_rename(g, map)).collect())
                }
                Formula::Atom(a) => Formula::Atom(crate::logic::AtomOps::rename(a, map)),
                other => other.clone(),
            }
        }
        deep_rename(f, &map)
    };
    let mut s = String::new();
    ba_doc(&f).render(&mut s, 0);
    s
}

// ---------------------------------------------------------------------
// Base structures and configs
// ---------------------------------------------------------------------

fn parse_base_form(items: &[Sexp], p: Pos) -> Result<FiniteStructure> {
    let mut elems: Option<Vec<String>> = None;
    let mut rels: Vec<(String, usize, Vec<Vec<String>>)> = Vec::new();
    let mut order = None;
    let mut equality = None;
    for e in items {
        let parts = e.list()?;
        let ep = e.pos();
        ensure!(!parts.is_empty(), "{ep}: empty entry in base form");
        match parts[0].sym()? {
            "elems" => {
                let names: Vec<String> = parts[1..]
                    .iter()
                    .map(|x| {
                        let n = x.sym()?.to_string();
                        ensure!(valid_name(&n), "{}: invalid element name {n}", x.pos());
                        Ok(n)
                    })
                    .collect::<Result<_>>()?;
                ensure!(elems.replace(names).is_none(), "{ep}: duplicate elems");
            }
            "rel" => {
                ensure!(parts.len() == 4, "{ep}: (rel name arity (tuples...))");
                let name = parts[1].sym()?.to_string();
                ensure!(valid_name(&name), "{}: invalid relation name", parts[1].pos());
                let arity = parse_u64(&parts[2])? as usize;
                let tuples: Vec<Vec<String>> = parts[3]
                    .list()?
                    .iter()
                    .map(|t| {
                        t.list()?
                            .iter()
                            .map(|x| Ok(x.sym()?.to_string()))
                            .collect::<Result<_>>()
                    })
                    .collect::<Result<_>>()?;
                rels.push((name, arity, tuples));
            }
            "order" => {
                ensure!(parts.len() == 2, "{ep}: (order name)");
                ensure!(
                    order.replace(parts[1].sym()?.to_string()).is_none(),
                    "{ep}: duplicate order"
                );
            }
            "equality" => {
                ensure!(parts.len() == 2, "{ep}: (equality name)");
                ensure!(
                    equality.replace(parts[1].sym()?.to_string()).is_none(),
                    "{ep}: duplicate equality"
                );
            }
            other => bail!("{ep}: unknown key {other} in base form"),
        }
    }
    FiniteStructure::new(
        elems.with_context(|| format!("{p}: base form missing (elems ...)"))?,
        rels,
        equality.with_context(|| format!("{p}: base form missing (equality ...)"))?,
        order.with_context(|| format!("{p}: base form missing (order ...)"))?,
    )
}

/// Parse a base-structure file: a single `(base ...)` form.
pub fn parse_base_structure(text: &str) -> Result<FiniteStructure> {
    let tops = parse_sexps(text)?;
    ensure!(tops.len() == 1, "base file must contain exactly one form");
    let items = tops[0].list()?;
    ensure!(
        !items.is_empty() && items[0].sym().map(|s| s == "base").unwrap_or(false),
        "{}: expected (base ...)",
        tops[0].pos()
    );
    parse_base_form(&items[1..], tops[0].pos())
}

/// Contents of a `--config` file: any of a base structure, a signature
/// (with or without variance), and a power exponent.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    pub base: Option<FiniteStructure>,
    /// (name, arity, optional variance list)
    pub sig: Option<Vec<(String, usize, Option<Vec<i8>>)>>,
    pub power: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let tops = parse_sexps(text)?;
    let mut cfg = ConfigFile::default();
    for top in &tops {
        let items = top.list()?;
        let p = top.pos();
        ensure!(!items.is_empty(), "{p}: empty form");
        match items[0].sym()? {
            "base" => {
                ensure!(cfg.base.is_none(), "{p}: duplicate base form");
                cfg.base = Some(parse_base_form(&items[1..], p)?);
            }
            "sig" => {
                ensure!(cfg.sig.is_none(), "{p}: duplicate sig form");
                let mut entries = Vec::new();
                for e in &items[1..] {
                    let parts = e.list()?;
                    ensure!(
                        parts.len() == 2 || parts.len() == 3,
                        "{}: (name arity) or (name arity (variances...))",
                        e.pos()
                    );
                    let name = parts[0].sym()?.to_string();
                    ensure!(valid_name(&name), "{}: invalid constructor name", e.pos());
                    let arity = parse_u64(&parts[1])? as usize;
                    let variance = if parts.len() == 3 {
                        let vs: Vec<i8> = parts[2]
                            .list()?
                            .iter()
                            .map(|v| match v.sym()? {
                                "+" => Ok(1),
                                "-" => Ok(-1),
                                other => bail!("{}: variance must be + or -, found {other}", v.pos()),
                            })
                            .collect::<Result<_>>()?;
                        ensure!(
                            vs.len() == arity,
                            "{}: variance list length must equal arity",
                            parts[2].pos()
                        );
                        Some(vs)
                    } else {
                        None
                    };
                    entries.push((name, arity, variance));
                }
                cfg.sig = Some(entries);
            }
            "power" => {
                ensure!(items.len() == 2, "{p}: (power n)");
                ensure!(cfg.power.is_none(), "{p}: duplicate power form");
                let n = parse_u64(&items[1])? as usize;
                ensure!(n >= 1, "{p}: power exponent must be at least 1");
                cfg.power = Some(n);
            }
            other => bail!("{p}: unknown config form {other}"),
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_const_ctx() -> LangCtx {
        LangCtx {
            term_cons: vec![("a".into(), 0), ("b".into(), 0), ("g".into(), 2)],
            rels: vec![("leq".into(), 2), ("eqc".into(), 2)],
            allow_shapes: true,
            allow_card: true,
            card_shape: true,
        }
    }

    #[test]
    fn parse_basic_forms() {
        let ctx = two_const_ctx();
        let f = parse_power_formula("(forall ((x term)) (lift leq x x))", &ctx).unwrap();
        assert!(matches!(f, Formula::Quantified(Quant::Forall, _, Sort::Term, _)));
        let g = parse_power_formula("(exists ((s shape)) (= s (shp-c)))", &ctx).unwrap();
        assert!(matches!(g, Formula::Quantified(Quant::Exists, _, Sort::Shape, _)));
        // arity error on selector index
        assert!(parse_power_formula("(is g (sel g 3 x))", &ctx).is_err());
        // sort error
        assert!(parse_power_formula("(= (shape x) x)", &ctx).is_err());
        // unknown head
        assert!(parse_power_formula("(frobnicate x)", &ctx).is_err());
        // comments and nesting
        let h = parse_power_formula(
            "; a comment\n(and (lift leq a b) ; trailing\n (not (= a b)))",
            &ctx,
        )
        .unwrap();
        assert!(h.is_quantifier_free());
    }

    #[test]
    fn roundtrip_identity() {
        let ctx = two_const_ctx();
        let texts = [
            "(forall ((x term)) (lift leq x x))",
            "(exists ((s shape)) (= s (shp-c)))",
            "(and (is g x) (= (sel g 1 x) (sel g 2 x)))",
            "(card= 2 (shape x) (inner (not (leq x x))))",
            "(or (not (= x y)) (lift leq (g x y) (g y x)))",
            "(card>= 1 (shp g (shp-c) (shp-c)) (inner (inner-exists (v) (and (leq v v) (leq x v)))))",
        ];
        for t in texts {
            let f = parse_power_formula(t, &ctx).unwrap();
            let printed = print_power_formula(&f, true);
            let g = parse_power_formula(&printed, &ctx).unwrap();
            assert_eq!(f, g, "round trip failed for {t}: printed as {printed}");
        }
    }

    #[test]
    fn ba_roundtrip() {
        let texts = [
            "(exists ((x set)) (and (card= 1 x) (card= 0 (compl x))))",
            "(subset (inter x y) (union x (compl y)))",
            "(not (= x empty))",
        ];
        for t in texts {
            let f = parse_ba_formula(t).unwrap();
            let printed = print_ba_formula(&f);
            let g = parse_ba_formula(&printed).unwrap();
            assert_eq!(f, g, "round trip failed for {t}: printed as {printed}");
        }
    }

    #[test]
    fn base_file() {
        let m = parse_base_structure(
            "(base (elems a b) (rel leq 2 ((a a) (a b) (b b))) (rel eqc 2 ((a a) (b b))) (order leq) (equality eqc))",
        )
        .unwrap();
        assert_eq!(m.size(), 2);
        assert_eq!(m.order_name(), "leq");
        // equality must be the diagonal
        assert!(parse_base_structure(
            "(base (elems a b) (rel leq 2 ()) (rel eqc 2 ((a b))) (order leq) (equality eqc))"
        )
        .is_err());
        // unknown keys rejected
        assert!(parse_base_structure("(base (elems a) (wat))").is_err());
    }

    #[test]
    fn config_file() {
        let c = parse_config(
            "(base (elems a b) (rel leq 2 ((a a) (a b) (b b))) (rel eqc 2 ((a a) (b b))) (order leq) (equality eqc))\n(sig (f 2 (- +)) (g 2 (+ +)))\n(power 2)",
        )
        .unwrap();
        assert!(c.base.is_some());
        assert_eq!(c.power, Some(2));
        let sig = c.sig.unwrap();
        assert_eq!(sig[0].2, Some(vec![-1, 1]));
    }
}
