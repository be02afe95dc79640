//! The term-power surface language: terms over constructors, selectors,
//! testers, shapes and the shape homomorphism, lifted relation atoms and
//! cardinality atoms over inner formulas; plus ground terms/shapes and
//! the unnesting pass shared by the term-algebra and term-power
//! eliminators.

use crate::logic::{fresh, AtomOps, Formula, Lit, Sort, Var};
use std::collections::HashMap;
use std::fmt;

/// Constructor signature of a term algebra: names with arities.
#[derive(Clone, Debug, PartialEq)]
pub struct TermSignature {
    cons: Vec<(String, usize)>,
}

impl TermSignature {
    pub fn new(cons: Vec<(String, usize)>) -> anyhow::Result<TermSignature> {
        anyhow::ensure!(!cons.is_empty(), "signature must be nonempty");
        let mut seen = std::collections::HashSet::new();
        for (n, _) in &cons {
            anyhow::ensure!(seen.insert(n.clone()), "duplicate constructor {n}");
        }
        Ok(TermSignature { cons })
    }

    pub fn constructors(&self) -> &[(String, usize)] {
        &self.cons
    }

    pub fn arity(&self, f: &str) -> Option<usize> {
        self.cons.iter().find(|(n, _)| n == f).map(|(_, a)| *a)
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> {
        self.cons.iter().filter(|(_, a)| *a == 0).map(|(n, _)| n.as_str())
    }

    pub fn has_constant(&self) -> bool {
        self.cons.iter().any(|(_, a)| *a == 0)
    }

    pub fn has_proper(&self) -> bool {
        self.cons.iter().any(|(_, a)| *a >= 1)
    }
}

/// Signature with per-argument variance, for the term-power theory.
/// All constructors have arity ≥ 1; the leaves of terms are elements of
/// the base-structure carrier.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceSignature {
    cons: Vec<(String, Vec<i8>)>, // variance in {-1, +1} per argument
}

impl VarianceSignature {
    pub fn new(cons: Vec<(String, Vec<i8>)>) -> anyhow::Result<VarianceSignature> {
        anyhow::ensure!(!cons.is_empty(), "term-power signature must be nonempty");
        let mut seen = std::collections::HashSet::new();
        for (n, vs) in &cons {
            anyhow::ensure!(seen.insert(n.clone()), "duplicate constructor {n}");
            anyhow::ensure!(!vs.is_empty(), "term-power constructor {n} must have arity >= 1");
            anyhow::ensure!(
                vs.iter().all(|v| *v == 1 || *v == -1),
                "variance entries must be +1 or -1"
            );
        }
        Ok(VarianceSignature { cons })
    }

    pub fn constructors(&self) -> &[(String, Vec<i8>)] {
        &self.cons
    }

    pub fn arity(&self, f: &str) -> Option<usize> {
        self.cons.iter().find(|(n, _)| n == f).map(|(_, v)| v.len())
    }

    pub fn variance(&self, f: &str, i: usize) -> Option<i8> {
        self.cons
            .iter()
            .find(|(n, _)| n == f)
            .and_then(|(_, v)| v.get(i).copied())
    }

    pub fn all_covariant(&self) -> bool {
        self.cons.iter().all(|(_, v)| v.iter().all(|x| *x == 1))
    }
}

/// Internal name of the shape constant (printed as `(shp-c)`).  The `*`
/// cannot occur in user identifiers, so no clash with constructor names.
pub const SHAPE_CONST: &str = "c*";

/// Comparison in a cardinality atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cmp {
    Eq,
    Ge,
}

/// Multi-sorted terms: term sort and shape sort in one tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Tm {
    Var(Var),
    /// Constructor application; base constants are 0-ary constructors.
    Cons(String, Vec<Tm>),
    /// Selector `f_i(t)` (1-based), defined iff `Is_f(t)`.
    Sel(String, usize, Box<Tm>),
    /// Shape constructor `f^S(...)`; [`SHAPE_CONST`] is the 0-ary one.
    ShCons(String, Vec<Tm>),
    /// Shape selector, defined iff the shape tester holds.
    ShSel(String, usize, Box<Tm>),
    /// The term→shape homomorphism `sh(t)`.
    ShapeOf(Box<Tm>),
}

impl Tm {
    pub fn var(v: impl Into<Var>) -> Tm {
        Tm::Var(v.into())
    }

    pub fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            Tm::Var(v) => f(v),
            Tm::Cons(_, ts) | Tm::ShCons(_, ts) => {
                for t in ts {
                    t.for_each_var(f);
                }
            }
            Tm::Sel(_, _, t) | Tm::ShSel(_, _, t) | Tm::ShapeOf(t) => t.for_each_var(f),
        }
    }

    pub fn rename(&self, map: &HashMap<Var, Var>) -> Tm {
        self.subst(&map
            .iter()
            .map(|(k, v)| (k.clone(), Tm::Var(v.clone())))
            .collect())
    }

    pub fn subst(&self, map: &HashMap<Var, Tm>) -> Tm {
        match self {
            Tm::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Tm::Cons(f, ts) => Tm::Cons(f.clone(), ts.iter().map(|t| t.subst(map)).collect()),
            Tm::ShCons(f, ts) => {
                Tm::ShCons(f.clone(), ts.iter().map(|t| t.subst(map)).collect())
            }
            Tm::Sel(f, i, t) => Tm::Sel(f.clone(), *i, Box::new(t.subst(map))),
            Tm::ShSel(f, i, t) => Tm::ShSel(f.clone(), *i, Box::new(t.subst(map))),
            Tm::ShapeOf(t) => Tm::ShapeOf(Box::new(t.subst(map))),
        }
    }

    /// Sort of the term, when it is syntactically determined; variables
    /// take their sort from context.
    pub fn sort_hint(&self) -> Option<Sort> {
        match self {
            Tm::Var(_) => None,
            Tm::Cons(..) | Tm::Sel(..) => Some(Sort::Term),
            Tm::ShCons(..) | Tm::ShSel(..) | Tm::ShapeOf(_) => Some(Sort::Shape),
        }
    }
}

/// Atoms of an inner formula: base-structure relations applied to
/// term-sort terms (free term variables of the enclosing formula, or
/// inner-quantified variables ranging over the base carrier).
#[derive(Clone, Debug, PartialEq)]
pub enum InnerAtom {
    Rel(String, Vec<Tm>),
}

pub type Inner = Formula<InnerAtom>;

impl AtomOps for InnerAtom {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            InnerAtom::Rel(_, ts) => {
                for t in ts {
                    t.for_each_var(f);
                }
            }
        }
    }
    fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        match self {
            InnerAtom::Rel(r, ts) => {
                InnerAtom::Rel(r.clone(), ts.iter().map(|t| t.rename(map)).collect())
            }
        }
    }
}

/// Capture-avoiding substitution of terms for free variables of an
/// inner formula (inner binders shadow).
pub fn inner_subst(f: &Inner, map: &HashMap<Var, Tm>) -> Inner {
    match f {
        Formula::Atom(InnerAtom::Rel(r, ts)) => Formula::Atom(InnerAtom::Rel(
            r.clone(),
            ts.iter().map(|t| t.subst(map)).collect(),
        )),
        Formula::Not(g) => Formula::not(inner_subst(g, map)),
        Formula::And(gs) => Formula::and(gs.iter().map(|g| inner_subst(g, map)).collect()),
        Formula::Or(gs) => Formula::or(gs.iter().map(|g| inner_subst(g, map)).collect()),
        Formula::Quantified(q, x, s, g) => {
            let mut inner = map.clone();
            inner.remove(x);
            Formula::Quantified(*q, x.clone(), *s, Box::new(inner_subst(g, &inner)))
        }
        other => other.clone(),
    }
}

/// Atoms of the term-power (and plain term-algebra) language.
#[derive(Clone, Debug, PartialEq)]
pub enum PAtom {
    /// Equality at either sort (term or shape, by context).
    Eq(Tm, Tm),
    /// Constructor tester `Is_f(t)`.
    Is(String, Tm),
    /// Shape-constructor tester.
    IsSh(String, Tm),
    /// Lifted base relation `r(t̄)` (total: false on shape mismatch).
    Rel(String, Vec<Tm>),
    /// Cardinality atom `|inner(t̄)|_shape ⋈ k`, defined iff every free
    /// argument term has the stated shape.
    Card {
        inner: Inner,
        shape: Tm,
        cmp: Cmp,
        k: u64,
    },
}

impl PAtom {
    fn for_each_tm(&self, f: &mut dyn FnMut(&Tm)) {
        match self {
            PAtom::Eq(a, b) => {
                f(a);
                f(b);
            }
            PAtom::Is(_, t) | PAtom::IsSh(_, t) => f(t),
            PAtom::Rel(_, ts) => {
                for t in ts {
                    f(t);
                }
            }
            PAtom::Card { inner, shape, .. } => {
                f(shape);
                for a in inner.atoms() {
                    let InnerAtom::Rel(_, ts) = a;
                    for t in &ts {
                        f(t);
                    }
                }
            }
        }
    }

    pub fn subst(&self, map: &HashMap<Var, Tm>) -> PAtom {
        match self {
            PAtom::Eq(a, b) => PAtom::Eq(a.subst(map), b.subst(map)),
            PAtom::Is(f, t) => PAtom::Is(f.clone(), t.subst(map)),
            PAtom::IsSh(f, t) => PAtom::IsSh(f.clone(), t.subst(map)),
            PAtom::Rel(r, ts) => {
                PAtom::Rel(r.clone(), ts.iter().map(|t| t.subst(map)).collect())
            }
            PAtom::Card {
                inner,
                shape,
                cmp,
                k,
            } => PAtom::Card {
                inner: inner_subst(inner, map),
                shape: shape.subst(map),
                cmp: *cmp,
                k: *k,
            },
        }
    }

    /// Free argument terms of a cardinality atom: the maximal term-sort
    /// terms in the inner atoms that are not inner-bound variables.
    pub fn card_args(inner: &Inner) -> Vec<Tm> {
        fn go(f: &Inner, bound: &mut Vec<Var>, out: &mut Vec<Tm>) {
            match f {
                Formula::Atom(InnerAtom::Rel(_, ts)) => {
                    for t in ts {
                        let skip = matches!(t, Tm::Var(v) if bound.contains(v));
                        if !skip && !out.contains(t) {
                            out.push(t.clone());
                        }
                    }
                }
                Formula::Not(g) => go(g, bound, out),
                Formula::And(gs) | Formula::Or(gs) => {
                    for g in gs {
                        go(g, bound, out);
                    }
                }
                Formula::Quantified(_, x, _, g) => {
                    bound.push(x.clone());
                    go(g, bound, out);
                    bound.pop();
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        go(inner, &mut Vec::new(), &mut out);
        out
    }
}

fn sel_guards(t: &Tm, out: &mut Vec<PAtom>) {
    match t {
        Tm::Var(_) => {}
        Tm::Cons(_, ts) | Tm::ShCons(_, ts) => {
            for s in ts {
                sel_guards(s, out);
            }
        }
        Tm::Sel(f, _, s) => {
            sel_guards(s, out);
            let g = PAtom::Is(f.clone(), (**s).clone());
            if !out.contains(&g) {
                out.push(g);
            }
        }
        Tm::ShSel(f, _, s) => {
            sel_guards(s, out);
            let g = PAtom::IsSh(f.clone(), (**s).clone());
            if !out.contains(&g) {
                out.push(g);
            }
        }
        Tm::ShapeOf(s) => sel_guards(s, out),
    }
}

impl AtomOps for PAtom {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            PAtom::Card { inner, shape, .. } => {
                shape.for_each_var(f);
                inner.for_each_free_var(f);
            }
            other => other.for_each_tm(&mut |t| t.for_each_var(f)),
        }
    }

    fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        self.subst(
            &map.iter()
                .map(|(k, v)| (k.clone(), Tm::Var(v.clone())))
                .collect(),
        )
    }

    fn guards(&self) -> Vec<PAtom> {
        let mut out = Vec::new();
        self.for_each_tm(&mut |t| sel_guards(t, &mut out));
        if let PAtom::Card { inner, shape, .. } = self {
            for arg in PAtom::card_args(inner) {
                let g = PAtom::Eq(Tm::ShapeOf(Box::new(arg)), shape.clone());
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
        out
    }
}

pub type PFormula = Formula<PAtom>;

// ---------------------------------------------------------------------
// Ground terms and shapes
// ---------------------------------------------------------------------

/// Ground term: base-carrier element at the leaves, constructors above.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GT {
    C(String),
    F(String, Vec<GT>),
}

/// Ground shape.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GS {
    C,
    F(String, Vec<GS>),
}

impl GT {
    pub fn height(&self) -> usize {
        match self {
            GT::C(_) => 0,
            GT::F(_, ts) => 1 + ts.iter().map(|t| t.height()).max().unwrap_or(0),
        }
    }

    pub fn shape(&self) -> GS {
        match self {
            GT::C(_) => GS::C,
            GT::F(f, ts) => GS::F(f.clone(), ts.iter().map(|t| t.shape()).collect()),
        }
    }

    /// The carrier element at a leaf position.
    pub fn at_leaf(&self, path: &[(String, usize)]) -> &str {
        match (self, path) {
            (GT::C(c), []) => c,
            (GT::F(f, ts), [(g, i), rest @ ..]) => {
                debug_assert_eq!(f, g);
                ts[*i].at_leaf(rest)
            }
            _ => panic!("at_leaf: path does not match term"),
        }
    }

    pub fn to_tm(&self) -> Tm {
        match self {
            GT::C(c) => Tm::Cons(c.clone(), vec![]),
            GT::F(f, ts) => Tm::Cons(f.clone(), ts.iter().map(|t| t.to_tm()).collect()),
        }
    }
}

impl GS {
    pub fn height(&self) -> usize {
        match self {
            GS::C => 0,
            GS::F(_, ts) => 1 + ts.iter().map(|t| t.height()).max().unwrap_or(0),
        }
    }

    /// Leaves in depth-first order with their variance signs.
    pub fn leaves(&self, sig: &VarianceSignature) -> Vec<(Vec<(String, usize)>, i8)> {
        fn go(
            s: &GS,
            sig: &VarianceSignature,
            path: &mut Vec<(String, usize)>,
            sign: i8,
            out: &mut Vec<(Vec<(String, usize)>, i8)>,
        ) {
            match s {
                GS::C => out.push((path.clone(), sign)),
                GS::F(f, ts) => {
                    for (i, t) in ts.iter().enumerate() {
                        let v = sig.variance(f, i).expect("unknown constructor in shape");
                        path.push((f.clone(), i));
                        go(t, sig, path, sign * v, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, sig, &mut Vec::new(), 1, &mut out);
        out
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            GS::C => 1,
            GS::F(_, ts) => ts.iter().map(|t| t.num_leaves()).sum(),
        }
    }

    /// (covariant, contravariant) leaf counts.
    pub fn pn(&self, sig: &VarianceSignature) -> (usize, usize) {
        let ls = self.leaves(sig);
        let p = ls.iter().filter(|(_, v)| *v == 1).count();
        (p, ls.len() - p)
    }

    pub fn to_tm(&self) -> Tm {
        match self {
            GS::C => Tm::ShCons(SHAPE_CONST.to_string(), vec![]),
            GS::F(f, ts) => Tm::ShCons(f.clone(), ts.iter().map(|t| t.to_tm()).collect()),
        }
    }

    /// Parse a ground shape back out of a term, if it is one.
    pub fn from_tm(t: &Tm) -> Option<GS> {
        match t {
            Tm::ShCons(f, ts) if f == SHAPE_CONST && ts.is_empty() => Some(GS::C),
            Tm::ShCons(f, ts) => {
                let parts: Option<Vec<GS>> = ts.iter().map(GS::from_tm).collect();
                Some(GS::F(f.clone(), parts?))
            }
            _ => None,
        }
    }
}

pub fn gt_from_tm(t: &Tm) -> Option<GT> {
    match t {
        Tm::Cons(f, ts) if ts.is_empty() => Some(GT::C(f.clone())), // constant or carrier elem
        Tm::Cons(f, ts) => {
            let parts: Option<Vec<GT>> = ts.iter().map(gt_from_tm).collect();
            Some(GT::F(f.clone(), parts?))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------
// Unnesting
// ---------------------------------------------------------------------

/// Result of unnesting a conjunction: fresh existential variables and a
/// flat literal list in which every atom has one of the primitive
/// shapes (variable equalities/disequalities, `x = f(x̄)`,
/// `s = f^S(s̄)`, `s = sh(x)`, testers on variables, relations and
/// cardinality atoms over variables).
#[derive(Debug, Clone)]
pub struct Unnested {
    pub exvars: Vec<(Var, Sort)>,
    pub lits: Vec<Lit<PAtom>>,
}

struct Unnester {
    exvars: Vec<(Var, Sort)>,
    lits: Vec<Lit<PAtom>>,
    cache: HashMap<Tm, Var>,
    sel_cache: HashMap<(Var, String), Vec<Var>>,
}

impl Unnester {
    fn push(&mut self, pos: bool, atom: PAtom) {
        let l = Lit { pos, atom };
        if !self.lits.contains(&l) {
            self.lits.push(l);
        }
    }

    fn fresh_var(&mut self, sort: Sort) -> Var {
        let v = fresh(match sort {
            Sort::Term => "u",
            Sort::Shape => "s",
        });
        self.exvars.push((v.clone(), sort));
        v
    }

    /// Flatten a term to a variable, emitting defining literals.
    fn var_of(&mut self, t: &Tm, arities: &dyn Fn(&str) -> usize) -> Var {
        if let Tm::Var(v) = t {
            return v.clone();
        }
        if let Some(v) = self.cache.get(t) {
            return v.clone();
        }
        let v = match t {
            Tm::Var(_) => unreachable!(),
            Tm::Cons(f, ts) => {
                let args: Vec<Var> = ts.iter().map(|s| self.var_of(s, arities)).collect();
                let v = self.fresh_var(Sort::Term);
                self.push(
                    true,
                    PAtom::Eq(
                        Tm::Var(v.clone()),
                        Tm::Cons(f.clone(), args.into_iter().map(Tm::Var).collect()),
                    ),
                );
                v
            }
            Tm::ShCons(f, ts) => {
                let args: Vec<Var> = ts.iter().map(|s| self.var_of(s, arities)).collect();
                let v = self.fresh_var(Sort::Shape);
                self.push(
                    true,
                    PAtom::Eq(
                        Tm::Var(v.clone()),
                        Tm::ShCons(f.clone(), args.into_iter().map(Tm::Var).collect()),
                    ),
                );
                v
            }
            Tm::Sel(f, i, s) => {
                let base = self.var_of(s, arities);
                let ws = self.sel_expand(&base, f, arities(f), Sort::Term);
                ws[*i - 1].clone()
            }
            Tm::ShSel(f, i, s) => {
                let base = self.var_of(s, arities);
                let ws = self.sel_expand(&base, f, arities(f), Sort::Shape);
                ws[*i - 1].clone()
            }
            Tm::ShapeOf(s) => {
                let base = self.var_of(s, arities);
                let v = self.fresh_var(Sort::Shape);
                self.push(
                    true,
                    PAtom::Eq(Tm::Var(v.clone()), Tm::ShapeOf(Box::new(Tm::Var(base)))),
                );
                v
            }
        };
        self.cache.insert(t.clone(), v.clone());
        v
    }

    /// Expand `base = f(w₁..w_k)` once per (base, f); the guard `Is_f`
    /// justifying this is part of the well-defined conjunction.
    fn sel_expand(
        &mut self,
        base: &Var,
        f: &str,
        arity: usize,
        sort: Sort,
    ) -> Vec<Var> {
        if let Some(ws) = self.sel_cache.get(&(base.clone(), f.to_string())) {
            return ws.clone();
        }
        let ws: Vec<Var> = (0..arity).map(|_| self.fresh_var(sort)).collect();
        let args = ws.iter().cloned().map(Tm::Var).collect();
        let rhs = match sort {
            Sort::Term => Tm::Cons(f.to_string(), args),
            Sort::Shape => Tm::ShCons(f.to_string(), args),
        };
        self.push(true, PAtom::Eq(Tm::Var(base.clone()), rhs));
        self.sel_cache
            .insert((base.clone(), f.to_string()), ws.clone());
        ws
    }
}

/// Unnest a well-defined conjunction.  `arities` resolves constructor
/// arities (used when expanding selector applications).  Assumes
/// negative `Is` literals have already been expanded away.
pub fn unnest(conj: &[Lit<PAtom>], arities: &dyn Fn(&str) -> usize) -> Unnested {
    let mut u = Unnester {
        exvars: Vec::new(),
        lits: Vec::new(),
        cache: HashMap::new(),
        sel_cache: HashMap::new(),
    };
    for lit in conj {
        match (&lit.pos, &lit.atom) {
            (true, PAtom::Eq(a, b)) => {
                // keep x = f(ȳ) / x = f^S(s̄) / s = sh(x) shapes directly
                let (a, b) = if a.sort_hint().is_none() || b.sort_hint().is_some() {
                    (a, b)
                } else {
                    (b, a)
                };
                let va = u.var_of(a, arities);
                match b {
                    Tm::Cons(f, ts) => {
                        let args: Vec<Var> = ts.iter().map(|s| u.var_of(s, arities)).collect();
                        u.push(
                            true,
                            PAtom::Eq(
                                Tm::Var(va),
                                Tm::Cons(f.clone(), args.into_iter().map(Tm::Var).collect()),
                            ),
                        );
                    }
                    Tm::ShCons(f, ts) => {
                        let args: Vec<Var> = ts.iter().map(|s| u.var_of(s, arities)).collect();
                        u.push(
                            true,
                            PAtom::Eq(
                                Tm::Var(va),
                                Tm::ShCons(f.clone(), args.into_iter().map(Tm::Var).collect()),
                            ),
                        );
                    }
                    Tm::ShapeOf(s) => {
                        let vs = u.var_of(s, arities);
                        u.push(
                            true,
                            PAtom::Eq(Tm::Var(va), Tm::ShapeOf(Box::new(Tm::Var(vs)))),
                        );
                    }
                    other => {
                        let vb = u.var_of(other, arities);
                        if va != vb {
                            u.push(true, PAtom::Eq(Tm::Var(va), Tm::Var(vb)));
                        }
                    }
                }
            }
            (false, PAtom::Eq(a, b)) => {
                let va = u.var_of(a, arities);
                let vb = u.var_of(b, arities);
                u.push(false, PAtom::Eq(Tm::Var(va), Tm::Var(vb)));
            }
            (pos, PAtom::Is(f, t)) => {
                debug_assert!(*pos, "negative Is literals must be expanded before unnest");
                let v = u.var_of(t, arities);
                u.push(*pos, PAtom::Is(f.clone(), Tm::Var(v)));
            }
            (pos, PAtom::IsSh(f, t)) => {
                debug_assert!(*pos, "negative IsSh literals must be expanded before unnest");
                let v = u.var_of(t, arities);
                u.push(*pos, PAtom::IsSh(f.clone(), Tm::Var(v)));
            }
            (pos, PAtom::Rel(r, ts)) => {
                let args: Vec<Tm> = ts
                    .iter()
                    .map(|t| Tm::Var(u.var_of(t, arities)))
                    .collect();
                u.push(*pos, PAtom::Rel(r.clone(), args));
            }
            (
                pos,
                PAtom::Card {
                    inner,
                    shape,
                    cmp,
                    k,
                },
            ) => {
                let vs = u.var_of(shape, arities);
                let mut map = HashMap::new();
                for arg in PAtom::card_args(inner) {
                    if let Tm::Var(_) = arg {
                        continue;
                    }
                    let v = u.var_of(&arg, arities);
                    // substitution key: replace the composite arg term
                    // occurrences with the new variable
                    map.insert(arg, Tm::Var(v));
                }
                let inner2 = subst_inner_terms(inner, &map);
                u.push(
                    *pos,
                    PAtom::Card {
                        inner: inner2,
                        shape: Tm::Var(vs),
                        cmp: *cmp,
                        k: *k,
                    },
                );
            }
        }
    }
    Unnested {
        exvars: u.exvars,
        lits: u.lits,
    }
}

/// Replace whole subterms (not just variables) inside inner atoms.
pub(crate) fn subst_inner_terms(f: &Inner, map: &HashMap<Tm, Tm>) -> Inner {
    f.map_atoms(&mut |a| {
        let InnerAtom::Rel(r, ts) = a;
        Formula::Atom(InnerAtom::Rel(
            r.clone(),
            ts.iter()
                .map(|t| map.get(t).cloned().unwrap_or_else(|| t.clone()))
                .collect(),
        ))
    })
}

impl fmt::Display for Tm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::parse::print_tm(self))
    }
}
