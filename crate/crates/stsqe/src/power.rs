//! Quantifier elimination and decision procedure for term powers: terms
//! are built from base-carrier constants by constructors with declared
//! per-argument variance, relations of the finite base structure are
//! lifted leafwise (through the order-transposed structure at
//! contravariant positions), and the language additionally has shapes,
//! the shape homomorphism and cardinality atoms counting the leaves at
//! which an inner formula holds.
//!
//! The eliminator follows the same two-way conversion as the plain term
//! algebra: a quantifier-free formula is turned into a disjunction of
//! structural base formulas (a pair of constraint graphs over term and
//! shape nodes linked by the shape homomorphism, plus per-shape-node
//! cardinality constraints), an existential quantifier is a label
//! removal, and a base formula is converted back by eliminating the
//! unconstrained nodes: product elimination for term nodes, leaf-count
//! reachability analysis for shape nodes.

use crate::fv::{self, inner_to_fo, FvAtom};
use crate::lang::{
    gt_from_tm, inner_subst, subst_inner_terms, unnest, Cmp, Inner, InnerAtom, PAtom, PFormula,
    Tm, Unnested, VarianceSignature, GS, GT, SHAPE_CONST,
};
use crate::logic::{Bool3, ExistsElim, Formula, Lit, Sort, Var};
use crate::model::{eval_fo, FiniteStructure};
use crate::term::{conj_with_guards, tau, BaseFormulaGraph, Closure};
use anyhow::{bail, ensure, Context, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap};

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

/// The running configuration used throughout the test suites: a single
/// covariant binary constructor over the two-element chain a ≤ b.
pub fn two_const() -> (VarianceSignature, FiniteStructure) {
    let sig = VarianceSignature::new(vec![("g".into(), vec![1, 1])]).unwrap();
    let m = FiniteStructure::new(
        vec!["a".into(), "b".into()],
        vec![
            (
                "leq".into(),
                2,
                vec![
                    vec!["a".into(), "a".into()],
                    vec!["a".into(), "b".into()],
                    vec!["b".into(), "b".into()],
                ],
            ),
            (
                "eqc".into(),
                2,
                vec![
                    vec!["a".into(), "a".into()],
                    vec!["b".into(), "b".into()],
                ],
            ),
        ],
        "eqc".into(),
        "leq".into(),
    )
    .unwrap();
    (sig, m)
}

pub fn validate_power_config(sig: &VarianceSignature, m: &FiniteStructure) -> Result<()> {
    for (f, _) in sig.constructors() {
        ensure!(
            m.elem_index(f).is_none(),
            "constructor {f} clashes with a carrier element"
        );
        ensure!(f != SHAPE_CONST, "reserved constructor name");
    }
    for c in m.carrier() {
        ensure!(c != SHAPE_CONST, "reserved carrier element name");
    }
    Ok(())
}

fn tm_wf(t: &Tm, sig: &VarianceSignature, m: &FiniteStructure) -> Result<()> {
    match t {
        Tm::Var(_) => Ok(()),
        Tm::Cons(f, ts) => {
            if let Some(a) = sig.arity(f) {
                ensure!(ts.len() == a, "constructor {f}: arity mismatch");
            } else {
                ensure!(
                    m.elem_index(f).is_some(),
                    "unknown constructor or constant {f}"
                );
                ensure!(ts.is_empty(), "carrier constant {f} takes no arguments");
            }
            ts.iter().try_for_each(|s| tm_wf(s, sig, m))
        }
        Tm::Sel(f, i, b) => {
            let a = sig.arity(f).with_context(|| format!("unknown constructor {f}"))?;
            ensure!(*i >= 1 && *i <= a, "selector index out of range for {f}");
            tm_wf(b, sig, m)
        }
        Tm::ShCons(f, ts) => {
            if f == SHAPE_CONST {
                ensure!(ts.is_empty(), "shape constant takes no arguments");
            } else {
                let a = sig.arity(f).with_context(|| format!("unknown constructor {f}"))?;
                ensure!(ts.len() == a, "shape constructor {f}: arity mismatch");
            }
            ts.iter().try_for_each(|s| tm_wf(s, sig, m))
        }
        Tm::ShSel(f, i, b) => {
            let a = sig.arity(f).with_context(|| format!("unknown constructor {f}"))?;
            ensure!(*i >= 1 && *i <= a, "shape selector index out of range for {f}");
            tm_wf(b, sig, m)
        }
        Tm::ShapeOf(b) => tm_wf(b, sig, m),
    }
}

fn inner_wf(f: &Inner, sig: &VarianceSignature, m: &FiniteStructure) -> Result<()> {
    for InnerAtom::Rel(r, ts) in f.atoms() {
        let a = m.arity(&r).with_context(|| format!("unknown relation {r}"))?;
        ensure!(ts.len() == a, "relation {r}: arity mismatch");
        ts.iter().try_for_each(|t| tm_wf(t, sig, m))?;
    }
    Ok(())
}

pub fn validate_power_formula(
    f: &PFormula,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<()> {
    for a in f.atoms() {
        match &a {
            PAtom::Eq(x, y) => {
                tm_wf(x, sig, m)?;
                tm_wf(y, sig, m)?;
            }
            PAtom::Is(g, t) => {
                ensure!(
                    sig.arity(g).is_some() || m.elem_index(g).is_some(),
                    "unknown constructor or constant {g}"
                );
                tm_wf(t, sig, m)?;
            }
            PAtom::IsSh(g, t) => {
                ensure!(
                    sig.arity(g).is_some() || g == SHAPE_CONST,
                    "unknown shape constructor {g}"
                );
                tm_wf(t, sig, m)?;
            }
            PAtom::Rel(r, ts) => {
                let ar = m.arity(r).with_context(|| format!("unknown relation {r}"))?;
                ensure!(ts.len() == ar, "relation {r}: arity mismatch");
                ensure!(ar >= 1, "lifted relations must have arity >= 1");
                ts.iter().try_for_each(|t| tm_wf(t, sig, m))?;
            }
            PAtom::Card { inner, shape, .. } => {
                tm_wf(shape, sig, m)?;
                inner_wf(inner, sig, m)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Ground semantics
// ---------------------------------------------------------------------

/// A ground value of either sort.
#[derive(Clone, Debug, PartialEq)]
pub enum GV {
    T(GT),
    S(GS),
}

pub type GEnv = BTreeMap<Var, GV>;

/// Evaluate a term to a ground value; `None` means undefined (selector
/// applied to a mismatching value).
pub fn eval_power_tm(t: &Tm, env: &GEnv) -> Result<Option<GV>> {
    Ok(match t {
        Tm::Var(v) => Some(
            env.get(v)
                .with_context(|| format!("unbound variable {v}"))?
                .clone(),
        ),
        Tm::Cons(f, ts) => {
            if ts.is_empty() {
                Some(GV::T(GT::C(f.clone())))
            } else {
                let mut parts = Vec::new();
                for s in ts {
                    match eval_power_tm(s, env)? {
                        None => return Ok(None),
                        Some(GV::T(g)) => parts.push(g),
                        Some(GV::S(_)) => bail!("shape value as constructor argument"),
                    }
                }
                Some(GV::T(GT::F(f.clone(), parts)))
            }
        }
        Tm::Sel(f, i, b) => match eval_power_tm(b, env)? {
            None => None,
            Some(GV::T(GT::F(g, parts))) if &g == f => Some(GV::T(parts[*i - 1].clone())),
            Some(GV::T(_)) => None,
            Some(GV::S(_)) => bail!("shape value under a term selector"),
        },
        Tm::ShCons(f, ts) => {
            if f == SHAPE_CONST {
                Some(GV::S(GS::C))
            } else {
                let mut parts = Vec::new();
                for s in ts {
                    match eval_power_tm(s, env)? {
                        None => return Ok(None),
                        Some(GV::S(g)) => parts.push(g),
                        Some(GV::T(_)) => bail!("term value as shape constructor argument"),
                    }
                }
                Some(GV::S(GS::F(f.clone(), parts)))
            }
        }
        Tm::ShSel(f, i, b) => match eval_power_tm(b, env)? {
            None => None,
            Some(GV::S(GS::F(g, parts))) if &g == f => Some(GV::S(parts[*i - 1].clone())),
            Some(GV::S(_)) => None,
            Some(GV::T(_)) => bail!("term value under a shape selector"),
        },
        Tm::ShapeOf(b) => match eval_power_tm(b, env)? {
            None => None,
            Some(GV::T(g)) => Some(GV::S(g.shape())),
            Some(GV::S(_)) => bail!("shape value under the shape homomorphism"),
        },
    })
}

/// A lifted base relation holds iff all arguments share one shape and
/// the relation holds leafwise, in the order-transposed structure at
/// leaves of negative variance.
pub fn lifted_relation_eval(
    m: &FiniteStructure,
    inv: &FiniteStructure,
    sig: &VarianceSignature,
    r: &str,
    args: &[GT],
) -> Result<bool> {
    ensure!(!args.is_empty(), "lifted relation needs arguments");
    let s0 = args[0].shape();
    if args.iter().any(|a| a.shape() != s0) {
        return Ok(false);
    }
    for (path, sign) in s0.leaves(sig) {
        let mut tuple = Vec::new();
        for a in args {
            let e = a.at_leaf(&path);
            tuple.push(
                m.elem_index(e)
                    .with_context(|| format!("unknown carrier element {e}"))?,
            );
        }
        let mm = if sign == 1 { m } else { inv };
        if !mm.holds(r, &tuple)? {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn eval_patom(
    a: &PAtom,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    inv: &FiniteStructure,
    env: &GEnv,
) -> Result<Bool3> {
    Ok(match a {
        PAtom::Eq(x, y) => match (eval_power_tm(x, env)?, eval_power_tm(y, env)?) {
            (Some(GV::T(p)), Some(GV::T(q))) => Bool3::from_bool(p == q),
            (Some(GV::S(p)), Some(GV::S(q))) => Bool3::from_bool(p == q),
            (Some(_), Some(_)) => bail!("equality between different sorts"),
            _ => Bool3::U,
        },
        PAtom::Is(f, t) => match eval_power_tm(t, env)? {
            Some(GV::T(GT::F(g, _))) => Bool3::from_bool(&g == f),
            Some(GV::T(GT::C(c))) => Bool3::from_bool(&c == f),
            Some(GV::S(_)) => bail!("constructor test on a shape"),
            None => Bool3::U,
        },
        PAtom::IsSh(f, t) => match eval_power_tm(t, env)? {
            Some(GV::S(GS::F(g, _))) => Bool3::from_bool(&g == f),
            Some(GV::S(GS::C)) => Bool3::from_bool(f == SHAPE_CONST),
            Some(GV::T(_)) => bail!("shape constructor test on a term"),
            None => Bool3::U,
        },
        PAtom::Rel(r, ts) => {
            let mut args = Vec::new();
            for t in ts {
                match eval_power_tm(t, env)? {
                    None => return Ok(Bool3::U),
                    Some(GV::T(g)) => args.push(g),
                    Some(GV::S(_)) => bail!("shape value in a lifted relation"),
                }
            }
            Bool3::from_bool(lifted_relation_eval(m, inv, sig, r, &args)?)
        }
        PAtom::Card {
            inner,
            shape,
            cmp,
            k,
        } => {
            let s = match eval_power_tm(shape, env)? {
                None => return Ok(Bool3::U),
                Some(GV::S(s)) => s,
                Some(GV::T(_)) => bail!("cardinality subscript must be a shape"),
            };
            let inner = inner.rename_bound_apart();
            let args = PAtom::card_args(&inner);
            let mut gargs = Vec::new();
            for t in &args {
                match eval_power_tm(t, env)? {
                    None => return Ok(Bool3::U),
                    Some(GV::T(g)) => {
                        if g.shape() != s {
                            return Ok(Bool3::U);
                        }
                        gargs.push(g);
                    }
                    Some(GV::S(_)) => bail!("shape value as a cardinality argument"),
                }
            }
            let map: HashMap<Tm, Tm> = args
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), Tm::Var(format!("c%{i}"))))
                .collect();
            let fo = inner_to_fo(&subst_inner_terms(&inner, &map))?;
            let mut count = 0u64;
            for (path, sign) in s.leaves(sig) {
                let mut fenv = HashMap::new();
                for (i, g) in gargs.iter().enumerate() {
                    let e = g.at_leaf(&path);
                    fenv.insert(
                        format!("c%{i}"),
                        m.elem_index(e)
                            .with_context(|| format!("unknown carrier element {e}"))?,
                    );
                }
                let mm = if sign == 1 { m } else { inv };
                if eval_fo(mm, &fo, &fenv)? {
                    count += 1;
                }
            }
            Bool3::from_bool(match cmp {
                Cmp::Eq => count == *k,
                Cmp::Ge => count >= *k,
            })
        }
    })
}

/// Three-valued evaluation of a quantifier-free formula under a ground
/// valuation.
pub fn eval_power(
    f: &PFormula,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    env: &GEnv,
) -> Result<Bool3> {
    let inv = m.inverted();
    fn go(
        f: &PFormula,
        sig: &VarianceSignature,
        m: &FiniteStructure,
        inv: &FiniteStructure,
        env: &GEnv,
    ) -> Result<Bool3> {
        Ok(match f {
            Formula::True => Bool3::T,
            Formula::False => Bool3::F,
            Formula::Undef => Bool3::U,
            Formula::Atom(a) => eval_patom(a, sig, m, inv, env)?,
            Formula::Not(g) => go(g, sig, m, inv, env)?.not(),
            Formula::And(gs) => {
                let mut acc = Bool3::T;
                for g in gs {
                    acc = acc.and(go(g, sig, m, inv, env)?);
                }
                acc
            }
            Formula::Or(gs) => {
                let mut acc = Bool3::F;
                for g in gs {
                    acc = acc.or(go(g, sig, m, inv, env)?);
                }
                acc
            }
            Formula::Quantified(..) => bail!("ground evaluation expects a quantifier-free formula"),
        })
    }
    go(f, sig, m, &inv, env)
}

// ---------------------------------------------------------------------
// Cardinality rewrites
// ---------------------------------------------------------------------

/// Transpose the two arguments of every order atom of an inner formula.
/// Evaluating the result in the base structure equals evaluating the
/// original in the order-transposed structure.
pub fn cver(f: &Inner, order: &str) -> Inner {
    f.map_atoms(&mut |a| {
        let InnerAtom::Rel(r, ts) = a;
        if r == order && ts.len() == 2 {
            Formula::Atom(InnerAtom::Rel(r.clone(), vec![ts[1].clone(), ts[0].clone()]))
        } else {
            Formula::Atom(a.clone())
        }
    })
}

fn rel_card_lits(r: &str, ts: &[Tm]) -> Vec<Lit<PAtom>> {
    let mut lits: Vec<Lit<PAtom>> = Vec::new();
    for t in ts.iter().skip(1) {
        lits.push(Lit {
            pos: true,
            atom: PAtom::Eq(
                Tm::ShapeOf(Box::new(ts[0].clone())),
                Tm::ShapeOf(Box::new(t.clone())),
            ),
        });
    }
    lits.push(Lit {
        pos: true,
        atom: PAtom::Card {
            inner: Formula::not(Formula::Atom(InnerAtom::Rel(r.to_string(), ts.to_vec()))),
            shape: Tm::ShapeOf(Box::new(ts[0].clone())),
            cmp: Cmp::Eq,
            k: 0,
        },
    });
    lits
}

/// A lifted relation atom as shape equalities plus a cardinality
/// constraint: r(t̄) iff the shapes agree and ¬r fails at no leaf.
pub fn relation_to_card(r: &str, ts: &[Tm]) -> PFormula {
    Formula::and(
        rel_card_lits(r, ts)
            .into_iter()
            .map(|l| l.to_formula())
            .collect(),
    )
}

/// All length-`parts` vectors of naturals summing to `k`.
pub fn compositions(k: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 0..=k {
        for mut rest in compositions(k - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// One decomposition step of a cardinality constraint whose subscript
/// is a composed shape: the count splits as a sum over the components,
/// with the inner formula order-transposed at contravariant positions.
pub fn decompose_card(a: &PAtom, sig: &VarianceSignature, order: &str) -> Result<PFormula> {
    let PAtom::Card {
        inner,
        shape: Tm::ShCons(f, sargs),
        cmp,
        k,
    } = a
    else {
        bail!("decomposition expects a cardinality atom at a composed shape");
    };
    ensure!(f != SHAPE_CONST, "the shape constant does not decompose");
    let arity = sig
        .arity(f)
        .with_context(|| format!("unknown constructor {f}"))?;
    ensure!(*k <= 32, "cardinality bound too large");
    let inner = inner.rename_bound_apart();
    let args = PAtom::card_args(&inner);
    let mut disjuncts = Vec::new();
    for comp in compositions(*k, arity) {
        let mut conj = Vec::new();
        for i in 0..arity {
            let map: HashMap<Tm, Tm> = args
                .iter()
                .map(|t| {
                    let part = match t {
                        Tm::Cons(g, ws) if g == f => ws[i].clone(),
                        other => Tm::Sel(f.clone(), i + 1, Box::new(other.clone())),
                    };
                    (t.clone(), part)
                })
                .collect();
            let mut e = subst_inner_terms(&inner, &map);
            if sig.variance(f, i) == Some(-1) {
                e = cver(&e, order);
            }
            conj.push(Formula::Atom(PAtom::Card {
                inner: e,
                shape: sargs[i].clone(),
                cmp: *cmp,
                k: comp[i],
            }));
        }
        disjuncts.push(Formula::and(conj));
    }
    Ok(Formula::or(disjuncts))
}

// ---------------------------------------------------------------------
// Structural base formulas
// ---------------------------------------------------------------------

fn nd_name(u: usize) -> Var {
    format!("nd%{u}")
}

fn nd_index(v: &str) -> Option<usize> {
    v.strip_prefix("nd%").and_then(|s| s.parse().ok())
}

/// A per-shape-node cardinality constraint: |inner|_shape ⋈ k, where
/// the free variables of `inner` name term nodes of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct CardConstraint {
    pub inner: Inner,
    pub args: Vec<(Var, usize)>,
    pub shape: usize,
    pub cmp: Cmp,
    pub k: u64,
}

/// Structural base formula: a term graph and a shape graph, the shape
/// homomorphism image of every term node, recorded disequalities
/// between shape nodes, and cardinality constraints attached to
/// undecomposed shape nodes.  Distinct shape nodes are not implicitly
/// distinct; only the recorded disequalities constrain them.
#[derive(Clone, Debug, PartialEq)]
pub struct StructBase {
    pub terms: BaseFormulaGraph,
    pub shapes: BaseFormulaGraph,
    pub hom: Vec<usize>,
    pub sdiseq: Vec<(usize, usize)>,
    pub cards: Vec<CardConstraint>,
}

impl StructBase {
    pub fn validate(&self, sig: &VarianceSignature, m: &FiniteStructure) -> Result<()> {
        self.terms.validate()?;
        self.shapes.validate()?;
        let nt = self.terms.nodes.len();
        let ns = self.shapes.nodes.len();
        ensure!(self.hom.len() == nt, "homomorphism must be total");
        ensure!(self.hom.iter().all(|&s| s < ns), "homomorphism out of range");
        for u in 0..nt {
            match &self.terms.nodes[u] {
                Some((f, args)) if sig.arity(f).is_some() => {
                    let expect = Some((f.clone(), args.iter().map(|&a| self.hom[a]).collect()));
                    ensure!(
                        self.shapes.nodes[self.hom[u]] == expect,
                        "shape of a composed term node must be composed compatibly"
                    );
                }
                Some((c, args)) => {
                    ensure!(args.is_empty(), "carrier constant with arguments");
                    ensure!(m.elem_index(c).is_some(), "unknown carrier constant {c}");
                    ensure!(
                        self.shapes.nodes[self.hom[u]] == Some((SHAPE_CONST.into(), vec![])),
                        "carrier constants live at the shape constant"
                    );
                }
                None => {
                    let sh = &self.shapes.nodes[self.hom[u]];
                    ensure!(
                        sh.is_none() || *sh == Some((SHAPE_CONST.into(), vec![])),
                        "parameter term node at a composed shape"
                    );
                }
            }
        }
        for &(i, j) in &self.sdiseq {
            ensure!(i < ns && j < ns, "disequality out of range");
            ensure!(i != j, "disequality between a node and itself");
        }
        for c in &self.cards {
            ensure!(c.shape < ns, "cardinality shape out of range");
            let sh = &self.shapes.nodes[c.shape];
            ensure!(
                sh.is_none() || *sh == Some((SHAPE_CONST.into(), vec![])),
                "cardinality constraint at a composed shape"
            );
            let mut names = BTreeSet::new();
            for (v, u) in &c.args {
                ensure!(*u < nt, "cardinality argument out of range");
                ensure!(self.hom[*u] == c.shape, "cardinality argument at a different shape");
                ensure!(*v == nd_name(*u), "cardinality argument names its node");
                match &self.terms.nodes[*u] {
                    None => {}
                    Some((_, args)) => ensure!(
                        args.is_empty(),
                        "cardinality argument must be a parameter or a constant"
                    ),
                }
                names.insert(v.clone());
            }
            ensure!(
                c.inner.free_vars() == names,
                "cardinality arguments must cover the inner free variables"
            );
            inner_wf(&c.inner, sig, m)?;
        }
        Ok(())
    }
}

/// Drop the label of `x`; the result describes ∃x applied to the base.
pub fn exists_on_struct_base(b: &StructBase, x: &Var) -> StructBase {
    let mut b = b.clone();
    b.terms.labels.remove(x);
    b.shapes.labels.remove(x);
    b
}

// ---------------------------------------------------------------------
// Quantifier-free formula -> disjunction of bases
// ---------------------------------------------------------------------

fn assign_tm_sorts(t: &Tm, top: Option<Sort>, out: &mut HashMap<Var, Sort>) {
    match t {
        Tm::Var(v) => {
            if let Some(s) = top {
                out.insert(v.clone(), s);
            }
        }
        Tm::Cons(_, ts) => {
            for s in ts {
                assign_tm_sorts(s, Some(Sort::Term), out);
            }
        }
        Tm::Sel(_, _, b) => assign_tm_sorts(b, Some(Sort::Term), out),
        Tm::ShCons(_, ts) => {
            for s in ts {
                assign_tm_sorts(s, Some(Sort::Shape), out);
            }
        }
        Tm::ShSel(_, _, b) => assign_tm_sorts(b, Some(Sort::Shape), out),
        Tm::ShapeOf(b) => assign_tm_sorts(b, Some(Sort::Term), out),
    }
}

fn atom_sorts(a: &PAtom, out: &mut HashMap<Var, Sort>, pairs: &mut Vec<(Var, Var)>) {
    match a {
        PAtom::Eq(x, y) => {
            let s = x.sort_hint().or_else(|| y.sort_hint());
            if s.is_none() {
                if let (Tm::Var(p), Tm::Var(q)) = (x, y) {
                    pairs.push((p.clone(), q.clone()));
                }
            }
            assign_tm_sorts(x, s, out);
            assign_tm_sorts(y, s, out);
        }
        PAtom::Is(_, t) => assign_tm_sorts(t, Some(Sort::Term), out),
        PAtom::IsSh(_, t) => assign_tm_sorts(t, Some(Sort::Shape), out),
        PAtom::Rel(_, ts) => {
            for t in ts {
                assign_tm_sorts(t, Some(Sort::Term), out);
            }
        }
        PAtom::Card { inner, shape, .. } => {
            assign_tm_sorts(shape, Some(Sort::Shape), out);
            for t in PAtom::card_args(inner) {
                assign_tm_sorts(&t, Some(Sort::Term), out);
            }
        }
    }
}

fn sorts_of_atoms(atoms: &[PAtom]) -> HashMap<Var, Sort> {
    let mut out = HashMap::new();
    let mut pairs = Vec::new();
    for a in atoms {
        atom_sorts(a, &mut out, &mut pairs);
    }
    loop {
        let mut changed = false;
        for (p, q) in &pairs {
            match (out.get(p).copied(), out.get(q).copied()) {
                (Some(s), None) => {
                    out.insert(q.clone(), s);
                    changed = true;
                }
                (None, Some(s)) => {
                    out.insert(p.clone(), s);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Sorts of the free variables of a formula, inferred from the contexts
/// in which they occur (unconstrained variables default to the term
/// sort).
pub fn free_var_sorts(f: &PFormula) -> HashMap<Var, Sort> {
    let g = f.rename_bound_apart();
    let sorts = sorts_of_atoms(&g.atoms());
    g.free_vars()
        .into_iter()
        .map(|v| {
            let s = sorts.get(&v).copied().unwrap_or(Sort::Term);
            (v, s)
        })
        .collect()
}

fn eq_sort(a: &Tm, b: &Tm, sorts: &HashMap<Var, Sort>) -> Sort {
    a.sort_hint()
        .or_else(|| b.sort_hint())
        .or_else(|| match a {
            Tm::Var(v) => sorts.get(v).copied(),
            _ => None,
        })
        .or_else(|| match b {
            Tm::Var(v) => sorts.get(v).copied(),
            _ => None,
        })
        .unwrap_or(Sort::Term)
}

fn needs_rewrite(l: &Lit<PAtom>, sorts: &HashMap<Var, Sort>) -> bool {
    match (&l.pos, &l.atom) {
        (_, PAtom::Rel(..)) => true,
        (false, PAtom::Is(..)) | (false, PAtom::IsSh(..)) | (false, PAtom::Card { .. }) => true,
        (false, PAtom::Eq(a, b)) => eq_sort(a, b, sorts) == Sort::Term,
        _ => false,
    }
}

fn rewrite_lit(
    l: &Lit<PAtom>,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<Vec<Vec<Lit<PAtom>>>> {
    let pos = |atom: PAtom| Lit { pos: true, atom };
    let neg = |atom: PAtom| Lit { pos: false, atom };
    let sh = |t: &Tm| Tm::ShapeOf(Box::new(t.clone()));
    Ok(match (&l.pos, &l.atom) {
        (true, PAtom::Rel(r, ts)) => vec![rel_card_lits(r, ts)],
        (false, PAtom::Rel(r, ts)) => {
            let mut alts = Vec::new();
            for t in ts.iter().skip(1) {
                alts.push(vec![neg(PAtom::Eq(sh(&ts[0]), sh(t)))]);
            }
            let mut lits: Vec<Lit<PAtom>> = ts
                .iter()
                .skip(1)
                .map(|t| pos(PAtom::Eq(sh(&ts[0]), sh(t))))
                .collect();
            lits.push(pos(PAtom::Card {
                inner: Formula::not(Formula::Atom(InnerAtom::Rel(r.clone(), ts.clone()))),
                shape: sh(&ts[0]),
                cmp: Cmp::Ge,
                k: 1,
            }));
            alts.push(lits);
            alts
        }
        (false, PAtom::Is(f, t)) => {
            let mut alts = Vec::new();
            for (g, _) in sig.constructors() {
                if g != f {
                    alts.push(vec![pos(PAtom::Is(g.clone(), t.clone()))]);
                }
            }
            for c in m.carrier() {
                if c != f {
                    alts.push(vec![pos(PAtom::Eq(t.clone(), Tm::Cons(c.clone(), vec![])))]);
                }
            }
            alts
        }
        (false, PAtom::IsSh(f, t)) => {
            let mut alts = Vec::new();
            for (g, _) in sig.constructors() {
                if g != f {
                    alts.push(vec![pos(PAtom::IsSh(g.clone(), t.clone()))]);
                }
            }
            if f != SHAPE_CONST {
                alts.push(vec![pos(PAtom::Eq(
                    t.clone(),
                    Tm::ShCons(SHAPE_CONST.into(), vec![]),
                ))]);
            }
            alts
        }
        (false, PAtom::Card { inner, shape, cmp, k }) => {
            let card = |cmp: Cmp, k: u64| {
                pos(PAtom::Card {
                    inner: inner.clone(),
                    shape: shape.clone(),
                    cmp,
                    k,
                })
            };
            let mut alts: Vec<Vec<Lit<PAtom>>> =
                (0..*k).map(|j| vec![card(Cmp::Eq, j)]).collect();
            if *cmp == Cmp::Eq {
                alts.push(vec![card(Cmp::Ge, k + 1)]);
            }
            alts
        }
        (false, PAtom::Eq(a, b)) => {
            let eqc = m.equality_name().to_string();
            vec![
                vec![neg(PAtom::Eq(sh(a), sh(b)))],
                vec![
                    pos(PAtom::Eq(sh(a), sh(b))),
                    pos(PAtom::Card {
                        inner: Formula::not(Formula::Atom(InnerAtom::Rel(
                            eqc,
                            vec![a.clone(), b.clone()],
                        ))),
                        shape: sh(a),
                        cmp: Cmp::Ge,
                        k: 1,
                    }),
                ],
            ]
        }
        _ => bail!("internal: literal needs no rewrite"),
    })
}

/// Replace lifted relations, negated testers, negated cardinalities and
/// negated term equalities by case splits over shape-equality and
/// cardinality literals.
fn rewrite_conj(
    conj: Vec<Lit<PAtom>>,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    budget: &mut usize,
) -> Result<Vec<Vec<Lit<PAtom>>>> {
    let mut ready = Vec::new();
    let mut work = vec![conj];
    while let Some(c) = work.pop() {
        ensure!(*budget > 0, "literal normalization is too large");
        *budget -= 1;
        let sorts = sorts_of_atoms(&c.iter().map(|l| l.atom.clone()).collect::<Vec<_>>());
        match c.iter().position(|l| needs_rewrite(l, &sorts)) {
            None => ready.push(c),
            Some(i) => {
                let lit = c[i].clone();
                let rest: Vec<Lit<PAtom>> = c
                    .into_iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, l)| l)
                    .collect();
                for alt in rewrite_lit(&lit, sig, m)? {
                    let mut c2 = rest.clone();
                    c2.extend(alt);
                    work.push(c2);
                }
            }
        }
    }
    Ok(ready)
}

#[derive(Clone, Debug)]
struct SlotCard {
    inner: Inner,
    args: Vec<(Var, usize)>,
    shape: usize,
    cmp: Cmp,
    k: u64,
}

#[derive(Clone, Debug, Default)]
struct State {
    terms: Closure,
    shapes: Closure,
    hom: Vec<(usize, usize)>,
    cards: Vec<SlotCard>,
    tvars: BTreeMap<Var, usize>,
    svars: BTreeMap<Var, usize>,
}

const MAX_SLOTS: usize = 96;

impl State {
    fn tslot(&mut self, v: &Var) -> usize {
        if let Some(&s) = self.tvars.get(v) {
            return s;
        }
        let s = self.terms.slot();
        self.tvars.insert(v.clone(), s);
        s
    }

    fn sslot(&mut self, v: &Var) -> usize {
        if let Some(&s) = self.svars.get(v) {
            return s;
        }
        let s = self.shapes.slot();
        self.svars.insert(v.clone(), s);
        s
    }

    fn fingerprint(&mut self) -> String {
        let tp: Vec<usize> = (0..self.terms.parent.len()).map(|i| self.terms.find(i)).collect();
        let sp: Vec<usize> = (0..self.shapes.parent.len())
            .map(|i| self.shapes.find(i))
            .collect();
        format!(
            "{tp:?}|{sp:?}|{:?}|{:?}|{:?}",
            self.terms.def, self.shapes.def, self.hom
        )
    }

    /// Run the closure rules to a fixpoint: congruence closure on both
    /// graphs, functionality and totality of the homomorphism, the
    /// homomorphism property of composed term nodes, and expansion of
    /// parameter term nodes whose shape is composed.  `Ok(false)` means
    /// the conjunction is unsatisfiable.
    fn propagate(&mut self, sig: &VarianceSignature) -> Result<bool> {
        for _ in 0..300 {
            if self.terms.close().is_err() || self.shapes.close().is_err() {
                return Ok(false);
            }
            ensure!(
                self.terms.parent.len() <= MAX_SLOTS && self.shapes.parent.len() <= MAX_SLOTS,
                "constraint graph exceeds the slot budget"
            );
            let before = self.fingerprint();
            // canonical homomorphism map; merged term nodes merge shapes
            let mut map: HashMap<usize, usize> = HashMap::new();
            let hom = std::mem::take(&mut self.hom);
            for (t, s) in hom {
                let rt = self.terms.find(t);
                let rs = self.shapes.find(s);
                match map.get(&rt).copied() {
                    Some(prev) if self.shapes.find(prev) != rs => {
                        if self.shapes.union(prev, rs).is_err() {
                            return Ok(false);
                        }
                    }
                    Some(_) => {}
                    None => {
                        map.insert(rt, rs);
                    }
                }
            }
            for r in self.terms.roots() {
                if !map.contains_key(&r) {
                    let s = self.shapes.slot();
                    map.insert(r, s);
                }
            }
            // composed term nodes force composed shapes
            for r in self.terms.roots() {
                if let Some((f, args)) = self.terms.def[r].clone() {
                    let s = self.shapes.find(map[&r]);
                    let ok = if sig.arity(&f).is_some() {
                        let mut sargs = Vec::new();
                        for a in args {
                            let ra = self.terms.find(a);
                            let sa = match map.get(&ra).copied() {
                                Some(sa) => sa,
                                None => {
                                    let ns = self.shapes.slot();
                                    map.insert(ra, ns);
                                    ns
                                }
                            };
                            sargs.push(self.shapes.find(sa));
                        }
                        self.shapes.add_def(s, &f, sargs)
                    } else {
                        self.shapes.add_def(s, SHAPE_CONST, vec![])
                    };
                    if ok.is_err() {
                        return Ok(false);
                    }
                }
            }
            // composed shapes expand parameter term nodes
            for r in self.terms.roots() {
                let rr = self.terms.find(r);
                if self.terms.def[rr].is_some() {
                    continue;
                }
                let s = self.shapes.find(map[&rr]);
                if let Some((f, sargs)) = self.shapes.def[s].clone() {
                    if f != SHAPE_CONST {
                        let ws: Vec<usize> = sargs.iter().map(|_| self.terms.slot()).collect();
                        for (w, sa) in ws.iter().zip(&sargs) {
                            let rs = self.shapes.find(*sa);
                            map.insert(*w, rs);
                        }
                        if self.terms.add_def(rr, &f, ws).is_err() {
                            return Ok(false);
                        }
                    }
                }
            }
            let mut hom: Vec<(usize, usize)> = map.into_iter().collect();
            hom.sort_unstable();
            self.hom = hom;
            if self.terms.close().is_err() || self.shapes.close().is_err() {
                return Ok(false);
            }
            if self.fingerprint() == before {
                return Ok(true);
            }
        }
        bail!("constraint propagation did not converge")
    }
}

fn build_state(
    un: &Unnested,
    sorts: &HashMap<Var, Sort>,
    sig: &VarianceSignature,
) -> Result<Option<State>> {
    let exsorts: HashMap<&Var, Sort> = un.exvars.iter().map(|(v, s)| (v, *s)).collect();
    let sort_of = |v: &Var| {
        exsorts
            .get(v)
            .copied()
            .or_else(|| sorts.get(v).copied())
            .unwrap_or(Sort::Term)
    };
    let mut st = State::default();
    for l in &un.lits {
        match (&l.pos, &l.atom) {
            (true, PAtom::Eq(Tm::Var(a), Tm::Var(b))) => {
                let ok = match sort_of(a) {
                    Sort::Term => {
                        let (x, y) = (st.tslot(a), st.tslot(b));
                        st.terms.union(x, y)
                    }
                    Sort::Shape => {
                        let (x, y) = (st.sslot(a), st.sslot(b));
                        st.shapes.union(x, y)
                    }
                };
                if ok.is_err() {
                    return Ok(None);
                }
            }
            (true, PAtom::Eq(Tm::Var(x), Tm::Cons(f, args))) => {
                let slot = st.tslot(x);
                let mut ws = Vec::new();
                for a in args {
                    let Tm::Var(v) = a else { bail!("internal: unnested constructor argument") };
                    ws.push(st.tslot(v));
                }
                if st.terms.add_def(slot, f, ws).is_err() {
                    return Ok(None);
                }
            }
            (true, PAtom::Eq(Tm::Var(x), Tm::ShCons(f, args))) => {
                let slot = st.sslot(x);
                let mut ws = Vec::new();
                for a in args {
                    let Tm::Var(v) = a else { bail!("internal: unnested shape argument") };
                    ws.push(st.sslot(v));
                }
                if st.shapes.add_def(slot, f, ws).is_err() {
                    return Ok(None);
                }
            }
            (true, PAtom::Eq(Tm::Var(s), Tm::ShapeOf(b))) => {
                let Tm::Var(x) = &**b else { bail!("internal: unnested homomorphism argument") };
                let (ts, ss) = (st.tslot(x), st.sslot(s));
                st.hom.push((ts, ss));
            }
            (true, PAtom::Is(f, Tm::Var(x))) => {
                let slot = st.tslot(x);
                let arity = sig.arity(f).unwrap_or(0);
                let ws: Vec<usize> = (0..arity).map(|_| st.terms.slot()).collect();
                if st.terms.add_def(slot, f, ws).is_err() {
                    return Ok(None);
                }
            }
            (true, PAtom::IsSh(f, Tm::Var(x))) => {
                let slot = st.sslot(x);
                let arity = if f == SHAPE_CONST { 0 } else { sig.arity(f).unwrap_or(0) };
                let ws: Vec<usize> = (0..arity).map(|_| st.shapes.slot()).collect();
                if st.shapes.add_def(slot, f, ws).is_err() {
                    return Ok(None);
                }
            }
            (true, PAtom::Card { inner, shape, cmp, k }) => {
                let Tm::Var(sv) = shape else { bail!("internal: unnested cardinality shape") };
                let sslot = st.sslot(sv);
                let mut args = Vec::new();
                for t in PAtom::card_args(inner) {
                    let Tm::Var(v) = t else { bail!("internal: unnested cardinality argument") };
                    let slot = st.tslot(&v);
                    args.push((v, slot));
                }
                st.cards.push(SlotCard {
                    inner: inner.clone(),
                    args,
                    shape: sslot,
                    cmp: *cmp,
                    k: *k,
                });
            }
            (false, PAtom::Eq(Tm::Var(a), Tm::Var(b))) => match sort_of(a) {
                Sort::Shape => {
                    let (x, y) = (st.sslot(a), st.sslot(b));
                    st.shapes.diseq.push((x, y));
                }
                Sort::Term => bail!("internal: negative term equality survived normalization"),
            },
            other => bail!("internal: non-primitive literal after unnesting: {other:?}"),
        }
    }
    Ok(Some(st))
}

/// Close the constraint graphs, then decompose cardinality constraints
/// at composed shapes.  Nothing forces unrelated shape nodes apart:
/// the base records only the disequalities the conjunction asserts.
fn saturate_power(
    mut st: State,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    out: &mut Vec<State>,
    budget: &mut usize,
) -> Result<()> {
    ensure!(*budget > 0, "case analysis on shape equalities is too large");
    *budget -= 1;
    if !st.propagate(sig)? {
        return Ok(());
    }
    decompose_state(st, sig, m, out, budget)
}

/// Split cardinality constraints at composed shape nodes into
/// constraints on the components, and evaluate constraints at the shape
/// constant whose arguments are all fixed carrier constants.
fn decompose_state(
    mut st: State,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    out: &mut Vec<State>,
    budget: &mut usize,
) -> Result<()> {
    ensure!(*budget > 0, "cardinality decomposition is too large");
    *budget -= 1;
    let composed = {
        let mut found = None;
        for (i, c) in st.cards.iter().enumerate() {
            let r = {
                // avoid double mutable borrow
                let mut a = c.shape;
                loop {
                    let p = st.shapes.parent[a];
                    if p == a {
                        break a;
                    }
                    a = p;
                }
            };
            if let Some((f, _)) = &st.shapes.def[r] {
                if f != SHAPE_CONST {
                    found = Some(i);
                    break;
                }
            }
        }
        found
    };
    if let Some(i) = composed {
        let c = st.cards.remove(i);
        let r = st.shapes.find(c.shape);
        let (f, sargs) = st.shapes.def[r].clone().unwrap();
        ensure!(c.k <= 32, "cardinality bound too large");
        let inner = c.inner.rename_bound_apart();
        let mut argparts: Vec<(Var, Vec<usize>)> = Vec::new();
        for (v, slot) in &c.args {
            let ar = st.terms.find(*slot);
            let Some((g, ws)) = st.terms.def[ar].clone() else {
                bail!("internal: cardinality argument not expanded at a composed shape")
            };
            ensure!(g == f, "internal: argument constructor mismatch survived propagation");
            argparts.push((v.clone(), ws));
        }
        for comp in compositions(c.k, sargs.len()) {
            let mut st2 = st.clone();
            for (i2, part) in comp.iter().enumerate() {
                let mut e = inner.clone();
                if sig.variance(&f, i2) == Some(-1) {
                    e = cver(&e, m.order_name());
                }
                st2.cards.push(SlotCard {
                    inner: e,
                    args: argparts.iter().map(|(v, ws)| (v.clone(), ws[i2])).collect(),
                    shape: sargs[i2],
                    cmp: c.cmp,
                    k: *part,
                });
            }
            decompose_state(st2, sig, m, out, budget)?;
        }
        return Ok(());
    }
    // constraints at the shape constant with fixed constant arguments
    let mut i = 0;
    while i < st.cards.len() {
        let r = st.shapes.find(st.cards[i].shape);
        let at_const = st.shapes.def[r] == Some((SHAPE_CONST.into(), vec![]));
        let all_const = st.cards[i].args.iter().all(|&(_, s)| {
            let mut a = s;
            loop {
                let p = st.terms.parent[a];
                if p == a {
                    break;
                }
                a = p;
            }
            st.terms.def[a].is_some()
        });
        if at_const && all_const {
            let c = st.cards.remove(i);
            let mut env = HashMap::new();
            for (v, s) in &c.args {
                let ar = st.terms.find(*s);
                let (g, ws) = st.terms.def[ar].clone().unwrap();
                ensure!(ws.is_empty(), "internal: composed term at the shape constant");
                env.insert(
                    v.clone(),
                    m.elem_index(&g)
                        .with_context(|| format!("unknown carrier element {g}"))?,
                );
            }
            let fo = inner_to_fo(&c.inner)?;
            let count = u64::from(eval_fo(m, &fo, &env)?);
            let ok = match c.cmp {
                Cmp::Eq => count == c.k,
                Cmp::Ge => count >= c.k,
            };
            if !ok {
                return Ok(()); // dead branch
            }
        } else {
            i += 1;
        }
    }
    out.push(st);
    Ok(())
}

/// Classify an inner formula semantically: `Some(true)` if it holds
/// under every assignment of its free variables in both the base
/// structure and its order transpose, `Some(false)` if under none.
fn inner_truth(inner: &Inner, m: &FiniteStructure) -> Result<Option<bool>> {
    let fo = inner_to_fo(inner)?;
    let vars: Vec<Var> = inner.free_vars().into_iter().collect();
    let inv = m.inverted();
    let n = m.carrier.len();
    let mut all_t = true;
    let mut all_f = true;
    let mut idx = vec![0usize; vars.len()];
    loop {
        let env: HashMap<Var, usize> =
            vars.iter().cloned().zip(idx.iter().copied()).collect();
        for s in [m, &inv] {
            if eval_fo(s, &fo, &env)? {
                all_f = false;
            } else {
                all_t = false;
            }
        }
        if !all_t && !all_f {
            return Ok(None);
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                return Ok(Some(all_t));
            }
            idx[i] += 1;
            if idx[i] < n {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// The result of semantically simplifying one cardinality constraint.
enum CardSimp {
    Keep(CardConstraint),
    Top,
    Bottom,
}

/// Simplify a cardinality constraint against the base structure: a
/// semantically constant inner formula decides or trivializes it, using
/// the fact that every shape has at least one leaf.
fn simplify_card(c: CardConstraint, m: &FiniteStructure) -> Result<CardSimp> {
    if c.cmp == Cmp::Ge && c.k == 0 {
        return Ok(CardSimp::Top);
    }
    Ok(match inner_truth(&c.inner, m)? {
        Some(false) => match (c.cmp, c.k) {
            (Cmp::Eq, 0) => CardSimp::Top,
            _ => CardSimp::Bottom,
        },
        Some(true) => match (c.cmp, c.k) {
            (Cmp::Ge, 0 | 1) => CardSimp::Top,
            (Cmp::Eq, 0) => CardSimp::Bottom,
            _ => CardSimp::Keep(CardConstraint {
                inner: Formula::True,
                args: Vec::new(),
                ..c
            }),
        },
        None => CardSimp::Keep(c),
    })
}

fn finalize(
    mut st: State,
    free: &BTreeSet<Var>,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<Option<StructBase>> {
    let troots = st.terms.roots();
    let sroots = st.shapes.roots();
    let tidx: HashMap<usize, usize> = troots.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let sidx: HashMap<usize, usize> = sroots.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let tdefs: Vec<Option<(String, Vec<usize>)>> =
        troots.iter().map(|&r| st.terms.def[r].clone()).collect();
    let sdefs: Vec<Option<(String, Vec<usize>)>> =
        sroots.iter().map(|&r| st.shapes.def[r].clone()).collect();
    let term_nodes: Vec<Option<(String, Vec<usize>)>> = tdefs
        .into_iter()
        .map(|d| d.map(|(f, args)| (f, args.iter().map(|&a| tidx[&st.terms.find(a)]).collect())))
        .collect();
    let shape_nodes: Vec<Option<(String, Vec<usize>)>> = sdefs
        .into_iter()
        .map(|d| d.map(|(f, args)| (f, args.iter().map(|&a| sidx[&st.shapes.find(a)]).collect())))
        .collect();
    let mut hom = vec![usize::MAX; term_nodes.len()];
    let st_hom = st.hom.clone();
    for (t, s) in st_hom {
        let u = tidx[&st.terms.find(t)];
        let v = sidx[&st.shapes.find(s)];
        ensure!(hom[u] == usize::MAX || hom[u] == v, "internal: homomorphism not functional");
        hom[u] = v;
    }
    ensure!(hom.iter().all(|&v| v != usize::MAX), "internal: homomorphism not total");
    let mut term_labels = BTreeMap::new();
    let tvars = st.tvars.clone();
    for (v, slot) in tvars {
        if free.contains(&v) {
            term_labels.insert(v, tidx[&st.terms.find(slot)]);
        }
    }
    let mut shape_labels = BTreeMap::new();
    let svars = st.svars.clone();
    for (v, slot) in svars {
        if free.contains(&v) {
            shape_labels.insert(v, sidx[&st.shapes.find(slot)]);
        }
    }
    let mut cards: Vec<CardConstraint> = Vec::new();
    let st_cards = st.cards.clone();
    for c in st_cards {
        let shape = sidx[&st.shapes.find(c.shape)];
        let mut map = HashMap::new();
        let mut args: Vec<(Var, usize)> = Vec::new();
        for (v, slot) in &c.args {
            let node = tidx[&st.terms.find(*slot)];
            map.insert(v.clone(), Tm::Var(nd_name(node)));
            if !args.iter().any(|(_, u)| *u == node) {
                args.push((nd_name(node), node));
            }
        }
        args.sort_by_key(|(_, u)| *u);
        if c.cmp == Cmp::Ge && c.k == 0 {
            continue; // trivially true
        }
        let inner = inner_subst(&c.inner.rename_bound_apart(), &map);
        let mut n = 0;
        let inner = canon_inner(&inner.simplify(), &mut n, &HashMap::new());
        let card = CardConstraint {
            inner,
            args,
            shape,
            cmp: c.cmp,
            k: c.k,
        };
        match simplify_card(card, m)? {
            CardSimp::Top => {}
            CardSimp::Bottom => return Ok(None),
            CardSimp::Keep(card) => {
                if !cards.contains(&card) {
                    cards.push(card);
                }
            }
        }
    }
    let mut sdiseq: Vec<(usize, usize)> = Vec::new();
    let diseqs = st.shapes.diseq.clone();
    for (a, c) in diseqs {
        let (i, j) = (sidx[&st.shapes.find(a)], sidx[&st.shapes.find(c)]);
        ensure!(i != j, "internal: disequality between merged nodes survived closure");
        let p = (i.min(j), i.max(j));
        if !sdiseq.contains(&p) {
            sdiseq.push(p);
        }
    }
    sdiseq.sort_unstable();
    let b = StructBase {
        terms: BaseFormulaGraph {
            nodes: term_nodes,
            labels: term_labels,
        },
        shapes: BaseFormulaGraph {
            nodes: shape_nodes,
            labels: shape_labels,
        },
        hom,
        sdiseq,
        cards,
    };
    b.validate(sig, m)?;
    Ok(Some(b))
}

/// Renames the bound variables of an inner formula to a canonical
/// scheme so that alpha-equivalent cardinality atoms compare equal.
fn canon_inner(f: &Inner, next: &mut usize, map: &HashMap<Var, Tm>) -> Inner {
    match f {
        Formula::Atom(InnerAtom::Rel(r, ts)) => Formula::Atom(InnerAtom::Rel(
            r.clone(),
            ts.iter().map(|t| t.subst(map)).collect(),
        )),
        Formula::Not(g) => Formula::not(canon_inner(g, next, map)),
        Formula::And(gs) => Formula::and(gs.iter().map(|g| canon_inner(g, next, map)).collect()),
        Formula::Or(gs) => Formula::or(gs.iter().map(|g| canon_inner(g, next, map)).collect()),
        Formula::Quantified(q, x, s, g) => {
            let nv = format!("i%{}", *next);
            *next += 1;
            let mut m2 = map.clone();
            m2.insert(x.clone(), Tm::Var(nv.clone()));
            Formula::Quantified(*q, nv, *s, Box::new(canon_inner(g, next, &m2)))
        }
        other => other.clone(),
    }
}

/// Puts an atom into a canonical form: equalities are oriented and the
/// inner formulas of cardinality atoms are simplified and canonically
/// renamed, so that syntactic variants of one atom are identified.
fn normalize_patom(a: &PAtom) -> PAtom {
    match a {
        PAtom::Eq(s, t) => {
            if format!("{t:?}") < format!("{s:?}") {
                PAtom::Eq(t.clone(), s.clone())
            } else {
                a.clone()
            }
        }
        PAtom::Card { inner, shape, cmp, k } => {
            let mut n = 0;
            PAtom::Card {
                inner: canon_inner(&inner.simplify(), &mut n, &HashMap::new()),
                shape: shape.clone(),
                cmp: *cmp,
                k: *k,
            }
        }
        _ => a.clone(),
    }
}

/// Convert a quantifier-free formula into an equivalent disjunction of
/// structural base formulas.
pub fn qf_to_struct_base(
    f: &PFormula,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<Vec<StructBase>> {
    ensure!(f.is_quantifier_free(), "conversion expects a quantifier-free formula");
    let f = &f.map_atoms(&mut |a| Formula::Atom(normalize_patom(a)));
    let free = f.free_vars();
    let fsorts = free_var_sorts(f);
    let mut out = Vec::new();
    let mut budget = 2_000_000usize;
    let wdnf = f.to_welldefined_dnf();
    eprintln!(
        "[qf2base] conjuncts={} max_lits={}",
        wdnf.len(),
        wdnf.iter().map(|c| c.len()).max().unwrap_or(0)
    );
    for conj in wdnf {
        let readies = rewrite_conj(conj, sig, m, &mut budget)?;
        eprintln!("[qf2base] readies={} budget={budget}", readies.len());
        for ready in readies {
            let mut sorts = sorts_of_atoms(&ready.iter().map(|l| l.atom.clone()).collect::<Vec<_>>());
            for (v, s) in &fsorts {
                sorts.entry(v.clone()).or_insert(*s);
            }
            let un = unnest(&ready, &|g| sig.arity(g).unwrap_or(0));
            let Some(st) = build_state(&un, &sorts, sig)? else {
                continue;
            };
            let mut states = Vec::new();
            saturate_power(st, sig, m, &mut states, &mut budget)?;
            for st in states {
                let b = finalize(st, &free, sig, m)?;
                ensure!(out.len() < 100_000, "disjunction of base formulas is too large");
                if !out.contains(&b) {
                    out.push(b);
                }
            }
        }
    }
    eprintln!("[qf2base] distinct bases={}", out.len());
    Ok(out)
}

// ---------------------------------------------------------------------
// Leaf-count reachability
// ---------------------------------------------------------------------

/// A one-sided constraint on one coordinate of a leaf count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Exact(u64),
    AtLeast(u64),
}

/// The set of (positive, negative) leaf-count pairs of shapes meeting a
/// pair of coordinate bounds.
#[derive(Clone, Debug, PartialEq)]
pub enum CountSet {
    Finite(BTreeSet<(u64, u64)>),
    Infinite,
}

#[derive(Clone, Debug, PartialEq)]
enum Stage {
    Fin(BTreeSet<u64>),
    Inf,
}

impl Stage {
    fn nonempty(&self) -> bool {
        match self {
            Stage::Fin(s) => !s.is_empty(),
            Stage::Inf => true,
        }
    }
    fn insert(&mut self, v: u64) -> bool {
        match self {
            Stage::Fin(s) => s.insert(v),
            Stage::Inf => false,
        }
    }
}

fn add_pair(s: &mut [Stage], t: &mut [Stage], p: u64, n: u64) -> Result<bool> {
    let mut ch = false;
    if (p as usize) < s.len() {
        ch |= s[p as usize].insert(n);
        if let Stage::Fin(set) = &s[p as usize] {
            ensure!(set.len() <= 4096, "leaf-count stage overflow");
        }
    }
    if (n as usize) < t.len() {
        ch |= t[n as usize].insert(p);
        if let Stage::Fin(set) = &t[n as usize] {
            ensure!(set.len() <= 4096, "leaf-count stage overflow");
        }
    }
    Ok(ch)
}

/// For a constructor slot, which family the other coordinate of the
/// child is read from: covariant slots keep sides, contravariant slots
/// swap them.  `true` is the family indexed by positive counts.
fn ref_is_p_indexed(target_p_indexed: bool, variance: i8) -> bool {
    if variance == 1 {
        target_p_indexed
    } else {
        !target_p_indexed
    }
}

/// Saturate the stage families S_i = {n : some shape has counts (i,n)}
/// and T_i = {p : some shape has counts (p,i)} for i ≤ k, marking a
/// stage infinite when a growing derivation exists.
fn staged(sig: &VarianceSignature, kk: u64) -> Result<(Vec<Stage>, Vec<Stage>)> {
    ensure!(kk <= 64, "leaf-count bound too large");
    let k = kk as usize;
    let mut s: Vec<Stage> = vec![Stage::Fin(BTreeSet::new()); k + 1];
    let mut t = s.clone();
    add_pair(&mut s, &mut t, 1, 0)?;
    for _pass in 0..200 {
        let mut changed = false;
        for (_f, vs) in sig.constructors() {
            let arity = vs.len();
            for target_p in [true, false] {
                for i in 0..=k as u64 {
                    for comp in compositions(i, arity) {
                        // the referenced stage for each slot
                        let refs: Vec<(bool, u64)> = (0..arity)
                            .map(|j| (ref_is_p_indexed(target_p, vs[j]), comp[j]))
                            .collect();
                        let stage_of = |sv: &Vec<Stage>, tv: &Vec<Stage>, r: &(bool, u64)| {
                            if r.0 {
                                sv[r.1 as usize].clone()
                            } else {
                                tv[r.1 as usize].clone()
                            }
                        };
                        let ref_stages: Vec<Stage> =
                            refs.iter().map(|r| stage_of(&s, &t, r)).collect();
                        if ref_stages.iter().any(|st| !st.nonempty()) {
                            continue;
                        }
                        let target_stage = |s: &Vec<Stage>, t: &Vec<Stage>| {
                            if target_p {
                                s[i as usize].clone()
                            } else {
                                t[i as usize].clone()
                            }
                        };
                        let set_target_inf = |s: &mut Vec<Stage>, t: &mut Vec<Stage>| {
                            let tgt = if target_p {
                                &mut s[i as usize]
                            } else {
                                &mut t[i as usize]
                            };
                            if *tgt != Stage::Inf {
                                *tgt = Stage::Inf;
                                true
                            } else {
                                false
                            }
                        };
                        if ref_stages.iter().any(|st| *st == Stage::Inf) {
                            changed |= set_target_inf(&mut s, &mut t);
                            continue;
                        }
                        // self-reference with strict growth elsewhere
                        let is_self = |j: usize| refs[j].0 == target_p && refs[j].1 == i;
                        let has_ge1 = |j: usize| match &ref_stages[j] {
                            Stage::Fin(set) => set.iter().any(|&v| v >= 1),
                            Stage::Inf => true,
                        };
                        // a self-reference with any other slot able to
                        // contribute a positive summand pumps forever
                        let grows = (0..arity).any(|j1| {
                            is_self(j1) && (0..arity).any(|j2| j2 != j1 && has_ge1(j2))
                        });
                        if grows && target_stage(&s, &t).nonempty() {
                            changed |= set_target_inf(&mut s, &mut t);
                            continue;
                        }
                        // enumerate finite products
                        let sets: Vec<Vec<u64>> = ref_stages
                            .iter()
                            .map(|st| match st {
                                Stage::Fin(set) => set.iter().copied().collect(),
                                Stage::Inf => unreachable!(),
                            })
                            .collect();
                        let count: usize = sets.iter().map(|v| v.len()).product();
                        ensure!(count <= 20_000, "leaf-count product overflow");
                        let mut picks = vec![0usize; arity];
                        loop {
                            let other: u64 = (0..arity).map(|j| sets[j][picks[j]]).sum();
                            let (p, n) = if target_p { (i, other) } else { (other, i) };
                            changed |= add_pair(&mut s, &mut t, p, n)?;
                            let mut pos = arity;
                            loop {
                                if pos == 0 {
                                    break;
                                }
                                pos -= 1;
                                picks[pos] += 1;
                                if picks[pos] < sets[pos].len() {
                                    break;
                                }
                                picks[pos] = 0;
                            }
                            if picks.iter().all(|&x| x == 0) {
                                break;
                            }
                        }
                    }
                }
            }
        }
        // growing exchange between the two families at one index
        for i in 0..=k as u64 {
            let cross = |target_p: bool, want_growth: bool| -> bool {
                for (f, vs) in sig.constructors() {
                    let arity = vs.len();
                    let _ = f;
                    for comp in compositions(i, arity) {
                        let refs: Vec<(bool, u64)> = (0..arity)
                            .map(|j| (ref_is_p_indexed(target_p, vs[j]), comp[j]))
                            .collect();
                        let mut has_cross = false;
                        let mut others_ok = true;
                        let mut growth = false;
                        for (j, r) in refs.iter().enumerate() {
                            let _ = j;
                            if r.0 != target_p && r.1 == i {
                                has_cross = true;
                                continue;
                            }
                            let st = if r.0 { &s[r.1 as usize] } else { &t[r.1 as usize] };
                            if !st.nonempty() {
                                others_ok = false;
                                break;
                            }
                            match st {
                                Stage::Fin(set) => {
                                    if set.iter().any(|&v| v >= 1) {
                                        growth = true;
                                    }
                                }
                                Stage::Inf => growth = true,
                            }
                        }
                        if has_cross && others_ok && (!want_growth || growth) {
                            return true;
                        }
                    }
                }
                false
            };
            let seeded = s[i as usize].nonempty() || t[i as usize].nonempty();
            if seeded
                && cross(true, false)
                && cross(false, false)
                && (cross(true, true) || cross(false, true))
            {
                if s[i as usize] != Stage::Inf {
                    s[i as usize] = Stage::Inf;
                    changed = true;
                }
                if t[i as usize] != Stage::Inf {
                    t[i as usize] = Stage::Inf;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok((s, t));
        }
    }
    bail!("leaf-count saturation did not converge")
}

/// Exact reachability of a single leaf-count pair.
fn pair_reachable(sig: &VarianceSignature, a: u64, b: u64) -> Result<bool> {
    let total = a + b;
    if total == 0 {
        return Ok(false);
    }
    ensure!(total <= 64, "leaf-count bound too large");
    let mut reach: BTreeSet<(u64, u64)> = BTreeSet::new();
    reach.insert((1, 0));
    loop {
        let mut added = Vec::new();
        for (_f, vs) in sig.constructors() {
            // all argument tuples with a total within the bound
            fn go(
                vs: &[i8],
                j: usize,
                acc: (u64, u64),
                total: u64,
                reach: &BTreeSet<(u64, u64)>,
                added: &mut Vec<(u64, u64)>,
            ) {
                if acc.0 + acc.1 > total {
                    return;
                }
                if j == vs.len() {
                    if !reach.contains(&acc) {
                        added.push(acc);
                    }
                    return;
                }
                let remaining = (vs.len() - j) as u64;
                if acc.0 + acc.1 + remaining > total {
                    return;
                }
                for &(p, n) in reach {
                    let (cp, cn) = if vs[j] == 1 { (p, n) } else { (n, p) };
                    go(vs, j + 1, (acc.0 + cp, acc.1 + cn), total, reach, added);
                }
            }
            go(vs, 0, (0, 0), total, &reach, &mut added);
        }
        if added.is_empty() {
            break;
        }
        reach.extend(added);
    }
    Ok(reach.contains(&(a, b)))
}

/// The set of leaf-count pairs (p, n) of shapes satisfying the two
/// coordinate bounds, computed finitely: a finite explicit set, or the
/// answer that infinitely many pairs qualify.
pub fn variance_count_sets(sig: &VarianceSignature, pb: Bound, nb: Bound) -> Result<CountSet> {
    match (pb, nb) {
        (Bound::Exact(a), Bound::Exact(b)) => Ok(CountSet::Finite(if pair_reachable(sig, a, b)? {
            [(a, b)].into_iter().collect()
        } else {
            BTreeSet::new()
        })),
        (Bound::Exact(a), Bound::AtLeast(b)) => {
            let (s, _) = staged(sig, a)?;
            match &s[a as usize] {
                Stage::Inf => Ok(CountSet::Infinite),
                Stage::Fin(set) => Ok(CountSet::Finite(
                    set.iter().filter(|&&n| n >= b).map(|&n| (a, n)).collect(),
                )),
            }
        }
        (Bound::AtLeast(a), Bound::Exact(b)) => {
            let (_, t) = staged(sig, b)?;
            match &t[b as usize] {
                Stage::Inf => Ok(CountSet::Infinite),
                Stage::Fin(set) => Ok(CountSet::Finite(
                    set.iter().filter(|&&p| p >= a).map(|&p| (p, b)).collect(),
                )),
            }
        }
        (Bound::AtLeast(a), Bound::AtLeast(b)) => {
            let wide = sig.constructors().iter().any(|(_, vs)| vs.len() >= 2);
            if !wide {
                // unary towers only flip the coordinates of the seed
                let mut reach: BTreeSet<(u64, u64)> = [(1, 0)].into_iter().collect();
                loop {
                    let mut added = Vec::new();
                    for (_, vs) in sig.constructors() {
                        for &(p, n) in &reach {
                            let c = if vs[0] == 1 { (p, n) } else { (n, p) };
                            if !reach.contains(&c) {
                                added.push(c);
                            }
                        }
                    }
                    if added.is_empty() {
                        break;
                    }
                    reach.extend(added);
                }
                return Ok(CountSet::Finite(
                    reach.into_iter().filter(|&(p, n)| p >= a && n >= b).collect(),
                ));
            }
            let contra = sig
                .constructors()
                .iter()
                .any(|(_, vs)| vs.iter().any(|&v| v == -1));
            if contra {
                Ok(CountSet::Infinite)
            } else if b >= 1 {
                Ok(CountSet::Finite(BTreeSet::new()))
            } else {
                Ok(CountSet::Infinite)
            }
        }
    }
}

// ---------------------------------------------------------------------
// Base -> quantifier-free formula
// ---------------------------------------------------------------------

fn det_flags(b: &StructBase, ground: &BTreeMap<usize, GS>) -> (Vec<bool>, Vec<bool>) {
    let tdet = b.terms.determined();
    let mut sdet = vec![false; b.shapes.nodes.len()];
    for &u in b.shapes.labels.values() {
        sdet[u] = true;
    }
    for &u in ground.keys() {
        sdet[u] = true;
    }
    for (u, d) in tdet.iter().enumerate() {
        if *d {
            sdet[b.hom[u]] = true;
        }
    }
    loop {
        let mut changed = false;
        for u in 0..sdet.len() {
            if let Some((_, succs)) = &b.shapes.nodes[u] {
                if sdet[u] {
                    for &c in succs {
                        if !sdet[c] {
                            sdet[c] = true;
                            changed = true;
                        }
                    }
                } else if succs.iter().all(|&c| sdet[c]) {
                    sdet[u] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (tdet, sdet)
}

fn remove_term_nodes(b: &StructBase, drop: &BTreeSet<usize>) -> Result<StructBase> {
    let n = b.terms.nodes.len();
    let mut remap = vec![None; n];
    let mut next = 0;
    for u in 0..n {
        if !drop.contains(&u) {
            remap[u] = Some(next);
            next += 1;
        }
    }
    let keep = |u: usize| remap[u].with_context(|| "internal: kept node references a dropped one");
    let mut nodes = Vec::new();
    let mut hom = Vec::new();
    for u in 0..n {
        if drop.contains(&u) {
            continue;
        }
        nodes.push(match &b.terms.nodes[u] {
            None => None,
            Some((f, succs)) => Some((
                f.clone(),
                succs.iter().map(|&c| keep(c)).collect::<Result<Vec<_>>>()?,
            )),
        });
        hom.push(b.hom[u]);
    }
    let mut labels = BTreeMap::new();
    for (v, &u) in &b.terms.labels {
        labels.insert(v.clone(), keep(u)?);
    }
    let mut cards = Vec::new();
    for c in &b.cards {
        let mut map = HashMap::new();
        let mut args = Vec::new();
        for (v, u) in &c.args {
            let nu = keep(*u)?;
            map.insert(v.clone(), Tm::Var(nd_name(nu)));
            args.push((nd_name(nu), nu));
        }
        cards.push(CardConstraint {
            inner: inner_subst(&c.inner, &map),
            args,
            shape: c.shape,
            cmp: c.cmp,
            k: c.k,
        });
    }
    Ok(StructBase {
        terms: BaseFormulaGraph { nodes, labels },
        shapes: b.shapes.clone(),
        hom,
        sdiseq: b.sdiseq.clone(),
        cards,
    })
}

fn remove_shape_nodes(
    b: &StructBase,
    drop: &BTreeSet<usize>,
    ground: &BTreeMap<usize, GS>,
) -> Result<(StructBase, BTreeMap<usize, GS>)> {
    let n = b.shapes.nodes.len();
    let mut remap = vec![None; n];
    let mut next = 0;
    for u in 0..n {
        if !drop.contains(&u) {
            remap[u] = Some(next);
            next += 1;
        }
    }
    let keep = |u: usize| remap[u].with_context(|| "internal: kept shape references a dropped one");
    let mut nodes = Vec::new();
    for u in 0..n {
        if drop.contains(&u) {
            continue;
        }
        nodes.push(match &b.shapes.nodes[u] {
            None => None,
            Some((f, succs)) => Some((
                f.clone(),
                succs.iter().map(|&c| keep(c)).collect::<Result<Vec<_>>>()?,
            )),
        });
    }
    let mut labels = BTreeMap::new();
    for (v, &u) in &b.shapes.labels {
        labels.insert(v.clone(), keep(u)?);
    }
    let hom = b.hom.iter().map(|&s| keep(s)).collect::<Result<Vec<_>>>()?;
    let mut cards = Vec::new();
    for c in &b.cards {
        if drop.contains(&c.shape) {
            continue;
        }
        let mut c2 = c.clone();
        c2.shape = keep(c.shape)?;
        cards.push(c2);
    }
    let mut ground2 = BTreeMap::new();
    for (&u, gs) in ground {
        ground2.insert(keep(u)?, gs.clone());
    }
    // disequalities with a dropped side go with it: the dropped node
    // ranges over infinitely many shapes, so they exclude nothing
    let mut sdiseq = Vec::new();
    for &(i, j) in &b.sdiseq {
        if !drop.contains(&i) && !drop.contains(&j) {
            sdiseq.push((keep(i)?, keep(j)?));
        }
    }
    Ok((
        StructBase {
            terms: b.terms.clone(),
            shapes: BaseFormulaGraph { nodes, labels },
            hom,
            sdiseq,
            cards,
        },
        ground2,
    ))
}

/// How often two shape nodes built over the freed node `s` coincide as
/// `s` ranges over its (infinitely many) candidates.
enum Equalizer {
    /// equal for at most finitely many candidates of `s`
    Sparse,
    /// equal exactly when every listed pair of kept nodes is equal,
    /// independently of `s`
    Always(Vec<(usize, usize)>),
}

fn shape_equalizer(
    b: &StructBase,
    i: usize,
    j: usize,
    s: usize,
    drop: &BTreeSet<usize>,
) -> Result<Equalizer> {
    let mut work = vec![(i, j)];
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    while let Some((i, j)) = work.pop() {
        if i == j || !seen.insert((i, j)) {
            continue;
        }
        if i == s || j == s {
            // one side is the freed node itself: at most one solution
            return Ok(Equalizer::Sparse);
        }
        match (drop.contains(&i), drop.contains(&j)) {
            (true, true) => {
                let (Some((f, fa)), Some((g, ga))) = (&b.shapes.nodes[i], &b.shapes.nodes[j])
                else {
                    bail!("internal: dropped parameter shape node other than the freed one");
                };
                if f != g {
                    return Ok(Equalizer::Sparse); // never equal
                }
                work.extend(fa.iter().copied().zip(ga.iter().copied()));
            }
            (false, false) => pairs.push((i, j)),
            // the dropped side mentions the freed node, the kept side
            // does not: at most one solution
            _ => return Ok(Equalizer::Sparse),
        }
    }
    Ok(Equalizer::Always(pairs))
}

/// Nodes from which `s` is reachable in the shape graph, including `s`.
fn shape_ancestors(b: &StructBase, s: usize) -> BTreeSet<usize> {
    let mut drop: BTreeSet<usize> = [s].into_iter().collect();
    loop {
        let mut changed = false;
        for u in 0..b.shapes.nodes.len() {
            if drop.contains(&u) {
                continue;
            }
            if let Some((_, succs)) = &b.shapes.nodes[u] {
                if succs.iter().any(|c| drop.contains(c)) {
                    drop.insert(u);
                    changed = true;
                }
            }
        }
        if !changed {
            return drop;
        }
    }
}

fn combine_bounds(constraints: &[(bool, Cmp, u64)]) -> Option<(Bound, Bound)> {
    let coord = |is_p: bool| -> Option<Bound> {
        let mut exact: Option<u64> = None;
        let mut lo = 0u64;
        for &(p, cmp, k) in constraints {
            if p != is_p {
                continue;
            }
            match cmp {
                Cmp::Eq => {
                    if let Some(v) = exact {
                        if v != k {
                            return None;
                        }
                    }
                    exact = Some(k);
                }
                Cmp::Ge => lo = lo.max(k),
            }
        }
        match exact {
            Some(v) if v < lo => None,
            Some(v) => Some(Bound::Exact(v)),
            None => Some(Bound::AtLeast(lo)),
        }
    };
    Some((coord(true)?, coord(false)?))
}

fn parse_fv_card(a: &FvAtom, s: usize, b: &StructBase) -> Result<CardConstraint> {
    let mut args = Vec::new();
    for v in a.expr.free_vars() {
        let node = nd_index(&v)
            .with_context(|| format!("internal: stray variable {v} after product elimination"))?;
        ensure!(
            node < b.terms.nodes.len() && b.hom[node] == s,
            "internal: product elimination crossed shapes"
        );
        args.push((v, node));
    }
    Ok(CardConstraint {
        inner: a.expr.clone(),
        args,
        shape: s,
        cmp: a.cmp,
        k: a.k,
    })
}

fn emit(b: &StructBase, ground: &BTreeMap<usize, GS>) -> Result<PFormula> {
    let tau_t = tau(&b.terms);
    let mut tau_s: HashMap<usize, Tm> = HashMap::new();
    for (x, &u) in &b.shapes.labels {
        tau_s.entry(u).or_insert_with(|| Tm::Var(x.clone()));
    }
    for (&u, gs) in ground {
        tau_s.entry(u).or_insert_with(|| gs.to_tm());
    }
    loop {
        let mut changed = false;
        for u in 0..b.terms.nodes.len() {
            if let Some(t) = tau_t.get(&u) {
                if !tau_s.contains_key(&b.hom[u]) {
                    tau_s.insert(b.hom[u], Tm::ShapeOf(Box::new(t.clone())));
                    changed = true;
                }
            }
        }
        for s in 0..b.shapes.nodes.len() {
            if let Some((f, succs)) = &b.shapes.nodes[s] {
                if let Some(ts) = tau_s.get(&s).cloned() {
                    if f != SHAPE_CONST {
                        for (i, &c) in succs.iter().enumerate() {
                            if !tau_s.contains_key(&c) {
                                tau_s.insert(c, Tm::ShSel(f.clone(), i + 1, Box::new(ts.clone())));
                                changed = true;
                            }
                        }
                    }
                } else if let Some(parts) = succs
                    .iter()
                    .map(|c| tau_s.get(c).cloned())
                    .collect::<Option<Vec<_>>>()
                {
                    tau_s.insert(s, Tm::ShCons(f.clone(), parts));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for u in 0..b.terms.nodes.len() {
        ensure!(tau_t.contains_key(&u), "internal: undetermined term node at emission");
    }
    for s in 0..b.shapes.nodes.len() {
        ensure!(tau_s.contains_key(&s), "internal: undetermined shape node at emission");
    }
    let mut lits: Vec<Lit<PAtom>> = Vec::new();
    let push = |lits: &mut Vec<Lit<PAtom>>, pos: bool, atom: PAtom| {
        let l = Lit { pos, atom };
        if !lits.contains(&l) {
            lits.push(l);
        }
    };
    for (x, &u) in &b.terms.labels {
        if tau_t[&u] != Tm::Var(x.clone()) {
            push(&mut lits, true, PAtom::Eq(Tm::Var(x.clone()), tau_t[&u].clone()));
        }
    }
    for u in 0..b.terms.nodes.len() {
        if let Some((f, succs)) = &b.terms.nodes[u] {
            let rhs = Tm::Cons(f.clone(), succs.iter().map(|&c| tau_t[&c].clone()).collect());
            if tau_t[&u] == rhs {
                continue;
            }
            let selector_chain = !succs.is_empty()
                && succs.iter().enumerate().all(|(i, &c)| {
                    tau_t[&c] == Tm::Sel(f.clone(), i + 1, Box::new(tau_t[&u].clone()))
                });
            if selector_chain {
                push(&mut lits, true, PAtom::Is(f.clone(), tau_t[&u].clone()));
            } else {
                push(&mut lits, true, PAtom::Eq(tau_t[&u].clone(), rhs));
            }
        }
    }
    for (x, &u) in &b.shapes.labels {
        if tau_s[&u] != Tm::Var(x.clone()) {
            push(&mut lits, true, PAtom::Eq(Tm::Var(x.clone()), tau_s[&u].clone()));
        }
    }
    for s in 0..b.shapes.nodes.len() {
        if let Some((f, succs)) = &b.shapes.nodes[s] {
            let rhs = Tm::ShCons(f.clone(), succs.iter().map(|&c| tau_s[&c].clone()).collect());
            if tau_s[&s] == rhs {
                continue;
            }
            if let (Some(p), Some(q)) = (GS::from_tm(&tau_s[&s]), GS::from_tm(&rhs)) {
                if p == q {
                    continue;
                }
                return Ok(Formula::False);
            }
            let selector_chain = f != SHAPE_CONST
                && !succs.is_empty()
                && succs.iter().enumerate().all(|(i, &c)| {
                    tau_s[&c] == Tm::ShSel(f.clone(), i + 1, Box::new(tau_s[&s].clone()))
                });
            if selector_chain {
                push(&mut lits, true, PAtom::IsSh(f.clone(), tau_s[&s].clone()));
            } else {
                push(&mut lits, true, PAtom::Eq(tau_s[&s].clone(), rhs));
            }
        }
    }
    for u in 0..b.terms.nodes.len() {
        let lhs = Tm::ShapeOf(Box::new(tau_t[&u].clone()));
        let rhs = tau_s[&b.hom[u]].clone();
        if lhs == rhs {
            continue;
        }
        let lg = gt_from_tm(&tau_t[&u]).map(|g| g.shape());
        let rg = GS::from_tm(&rhs);
        match (lg, rg) {
            (Some(p), Some(q)) => {
                if p != q {
                    return Ok(Formula::False);
                }
            }
            _ => push(&mut lits, true, PAtom::Eq(lhs, rhs)),
        }
    }
    for &(i, j) in &b.sdiseq {
        let (p, q) = (tau_s[&i].clone(), tau_s[&j].clone());
        match (GS::from_tm(&p), GS::from_tm(&q)) {
            (Some(a), Some(c)) => {
                if a == c {
                    return Ok(Formula::False);
                }
            }
            _ => {
                let heads_differ = matches!(
                    (&p, &q),
                    (Tm::ShCons(a, _), Tm::ShCons(c, _)) if a != c
                );
                if !heads_differ {
                    push(&mut lits, false, PAtom::Eq(p, q));
                }
            }
        }
    }
    for c in &b.cards {
        let map: HashMap<Var, Tm> = c
            .args
            .iter()
            .map(|(v, u)| (v.clone(), tau_t[u].clone()))
            .collect();
        let inner = inner_subst(&c.inner.rename_bound_apart(), &map);
        // resugar |¬r(t̄)|_S = 0 as the lifted relation (and ≥ 1 as its
        // negation): the homomorphism literals above pin every argument
        // to the shape S, so within this conjunct the two coincide.
        // keeping the surface atom makes later boolean normalization
        // share literals instead of multiplying distinct cards.
        if let Formula::Not(g) = &inner {
            if let Formula::Atom(InnerAtom::Rel(r, ts)) = g.as_ref() {
                if !ts.is_empty() {
                    match (c.cmp, c.k) {
                        (Cmp::Eq, 0) => {
                            push(&mut lits, true, PAtom::Rel(r.clone(), ts.clone()));
                            continue;
                        }
                        (Cmp::Ge, 1) => {
                            push(&mut lits, false, PAtom::Rel(r.clone(), ts.clone()));
                            continue;
                        }
                        _ => {}
                    }
                }
            }
        }
        push(
            &mut lits,
            true,
            PAtom::Card {
                inner,
                shape: tau_s[&c.shape].clone(),
                cmp: c.cmp,
                k: c.k,
            },
        );
    }
    // reflexive equalities are guard artifacts: whenever their term is
    // defined they hold, and definedness is carried by the tester
    // guards that accompany every literal below
    let f = conj_with_guards(lits);
    let drop_refl = |g: &PFormula| match g {
        Formula::Atom(PAtom::Eq(a, b)) => a == b,
        _ => false,
    };
    Ok(match f {
        Formula::And(gs) => Formula::and(gs.into_iter().filter(|g| !drop_refl(g)).collect()),
        other if drop_refl(&other) => Formula::True,
        other => other,
    })
}

fn base_to_qf_rec(
    b: StructBase,
    ground: BTreeMap<usize, GS>,
    sig: &VarianceSignature,
    m: &FiniteStructure,
    depth: usize,
) -> Result<PFormula> {
    ensure!(depth < 10_000, "base elimination recursion too deep");
    let (tdet, sdet) = det_flags(&b, &ground);
    // unconstrained composed term nodes disappear
    let drop: BTreeSet<usize> = (0..b.terms.nodes.len())
        .filter(|&u| !tdet[u] && b.terms.nodes[u].is_some())
        .collect();
    if !drop.is_empty() {
        for u in &drop {
            ensure!(
                !b.cards.iter().any(|c| c.args.iter().any(|(_, a)| a == u)),
                "internal: cardinality constraint on a composed node"
            );
        }
        return base_to_qf_rec(remove_term_nodes(&b, &drop)?, ground, sig, m, depth + 1);
    }
    // unconstrained parameter term node: product elimination over the
    // cardinality constraints at its shape
    if let Some(u) = (0..b.terms.nodes.len()).find(|&u| !tdet[u]) {
        let s = b.hom[u];
        let name = nd_name(u);
        let mine: Vec<&CardConstraint> = b.cards.iter().filter(|c| c.shape == s).collect();
        let rest: Vec<CardConstraint> = b.cards.iter().filter(|c| c.shape != s).cloned().collect();
        let matrix = Formula::and(
            mine.iter()
                .map(|c| {
                    Formula::Atom(FvAtom {
                        expr: c.inner.clone(),
                        cmp: c.cmp,
                        k: c.k,
                    })
                })
                .collect(),
        );
        let eliminated = fv::eliminate_tuple_quantifier(&name, &matrix)?;
        let mut parts = Vec::new();
        for conj in eliminated.dnf() {
            let mut nb = b.clone();
            nb.cards = rest.clone();
            for l in conj {
                ensure!(l.pos, "internal: negative literal after product elimination");
                nb.cards.push(parse_fv_card(&l.atom, s, &nb)?);
            }
            let nb = remove_term_nodes(&nb, &[u].into_iter().collect())?;
            parts.push(base_to_qf_rec(nb, ground.clone(), sig, m, depth + 1)?);
        }
        return Ok(Formula::or(parts).simplify());
    }
    // unconstrained parameter shape node: solve its closed cardinality
    // constraints through leaf-count reachability
    if let Some(s) =
        (0..b.shapes.nodes.len()).find(|&s| !sdet[s] && b.shapes.nodes[s].is_none())
    {
        let mine: Vec<CardConstraint> =
            b.cards.iter().filter(|c| c.shape == s).cloned().collect();
        for c in &mine {
            ensure!(
                c.args.is_empty(),
                "internal: open cardinality constraint at an unconstrained shape"
            );
        }
        let inv = m.inverted();
        // coefficient of each constraint: does the inner formula hold
        // at covariant leaves, at contravariant leaves?
        let mut constrs: Vec<((bool, bool), Cmp, u64)> = Vec::new();
        for c in &mine {
            let fo = inner_to_fo(&c.inner)?;
            let pv = eval_fo(m, &fo, &HashMap::new())?;
            let nv = eval_fo(&inv, &fo, &HashMap::new())?;
            constrs.push(((pv, nv), c.cmp, c.k));
        }
        let mut branches: Vec<Vec<(bool, Cmp, u64)>> = vec![Vec::new()];
        let mut dead = false;
        for ((pv, nv), cmp, k) in constrs {
            match (pv, nv) {
                (false, false) => {
                    if k != 0 {
                        dead = true;
                        break;
                    }
                }
                (true, false) => {
                    for br in &mut branches {
                        br.push((true, cmp, k));
                    }
                }
                (false, true) => {
                    for br in &mut branches {
                        br.push((false, cmp, k));
                    }
                }
                (true, true) => {
                    ensure!(k <= 32, "cardinality bound too large");
                    let mut nbs = Vec::new();
                    for a in 0..=k {
                        for br in &branches {
                            let mut b2 = br.clone();
                            b2.push((true, cmp, a));
                            b2.push((false, cmp, k - a));
                            nbs.push(b2);
                        }
                    }
                    branches = nbs;
                }
            }
        }
        if dead {
            return Ok(Formula::False);
        }
        let mut parts = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for br in branches {
            let Some((bp, bn)) = combine_bounds(&br) else {
                continue;
            };
            if !seen.insert(format!("{bp:?}|{bn:?}")) {
                continue;
            }
            let set = variance_count_sets(sig, bp, bn)?;
            let has_unary = sig.constructors().iter().any(|(_, vs)| vs.len() == 1);
            let infinite = match &set {
                CountSet::Infinite => true,
                // one reachable pair plus a unary constructor already
                // gives infinitely many shapes with those counts
                CountSet::Finite(pairs) => has_unary && !pairs.is_empty(),
            };
            if infinite {
                // infinitely many candidate shapes satisfy the counts;
                // disequalities excluding finitely many of them vanish,
                // but one between two dropped nodes may pin kept nodes
                let drop = shape_ancestors(&b, s);
                let mut dbranches: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
                let mut sat = true;
                for &(i, j) in &b.sdiseq {
                    if !(drop.contains(&i) && drop.contains(&j)) {
                        continue;
                    }
                    match shape_equalizer(&b, i, j, s, &drop)? {
                        Equalizer::Sparse => {}
                        Equalizer::Always(pairs) => {
                            let alts: Vec<(usize, usize)> =
                                pairs.into_iter().filter(|&(a, c)| a != c).collect();
                            if alts.is_empty() {
                                sat = false; // the two nodes are always equal
                                break;
                            }
                            let mut nbs = Vec::new();
                            for db in &dbranches {
                                for &p in &alts {
                                    let mut d2 = db.clone();
                                    d2.push(p);
                                    nbs.push(d2);
                                }
                            }
                            ensure!(nbs.len() <= 256, "disequality branching is too large");
                            dbranches = nbs;
                        }
                    }
                }
                if !sat {
                    continue;
                }
                for db in dbranches {
                    let mut nb0 = b.clone();
                    nb0.sdiseq.extend(db);
                    let (nb, g2) = remove_shape_nodes(&nb0, &drop, &ground)?;
                    parts.push(base_to_qf_rec(nb, g2, sig, m, depth + 1)?);
                }
                continue;
            }
            let CountSet::Finite(pairs) = set else { unreachable!() };
            if pairs.is_empty() {
                continue;
            }
            let maxl = pairs.iter().map(|&(p, n)| p + n).max().unwrap();
            ensure!(maxl <= 12, "shape enumeration bound too large");
            for ts in crate::oracle::enum_shapes(sig, maxl as usize) {
                let (p, n) = ts.pn(sig);
                if pairs.contains(&(p as u64, n as u64)) {
                    let mut nb = b.clone();
                    nb.cards.retain(|c| c.shape != s);
                    let mut g2 = ground.clone();
                    g2.insert(s, ts);
                    parts.push(base_to_qf_rec(nb, g2, sig, m, depth + 1)?);
                }
            }
        }
        return Ok(Formula::or(parts).simplify());
    }
    emit(&b, &ground)
}

/// Convert a structural base formula to an equivalent quantifier-free
/// formula by eliminating all unconstrained nodes.
pub fn struct_base_to_qf(
    b: &StructBase,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<PFormula> {
    base_to_qf_rec(b.clone(), BTreeMap::new(), sig, m, 0)
}

// ---------------------------------------------------------------------
// The eliminator
// ---------------------------------------------------------------------

pub struct PowerElim<'a> {
    pub sig: &'a VarianceSignature,
    pub m: &'a FiniteStructure,
}

impl ExistsElim<PAtom> for PowerElim<'_> {
    fn eliminate_exists(&self, x: &Var, _sort: Sort, f: PFormula) -> Result<PFormula> {
        eprintln!("[elim {x}] input atoms={}", f.atoms().len());
        let bases = qf_to_struct_base(&f, self.sig, self.m)?;
        eprintln!("[elim {x}] bases={}", bases.len());
        let mut outs = Vec::new();
        for (bi, b) in bases.into_iter().enumerate() {
            eprintln!("[elim {x}] base {bi}");
            if x == "z%2" && bi == 53 {
                eprintln!("[elim] stuck base: {b:#?}");
            }
            let b = exists_on_struct_base(&b, x);
            outs.push(struct_base_to_qf(&b, self.sig, self.m)?);
        }
        let r = Formula::or(outs).simplify();
        eprintln!("[elim {x}] output atoms={}", r.atoms().len());
        if x.starts_with('w') {
            eprintln!("{}", crate::parse::print_power_formula(&r, true));
        }
        Ok(r)
    }
}

/// Full quantifier elimination over the term power of `m` with
/// signature `sig`.
pub fn power_qe(
    f: &PFormula,
    sig: &VarianceSignature,
    m: &FiniteStructure,
) -> Result<PFormula> {
    validate_power_config(sig, m)?;
    validate_power_formula(f, sig, m)?;
    crate::logic::qe_drive(f, &PowerElim { sig, m })
}

/// Decide a closed, well-defined sentence.
pub fn decide(f: &PFormula, sig: &VarianceSignature, m: &FiniteStructure) -> Result<bool> {
    ensure!(f.free_vars().is_empty(), "decide expects a closed sentence");
    let q = power_qe(f, sig, m)?;
    match eval_power(&q, sig, m, &GEnv::new())? {
        Bool3::T => Ok(true),
        Bool3::F => Ok(false),
        Bool3::U => bail!("sentence is not well defined"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enum_shapes;

    fn v(n: &str) -> Tm {
        Tm::Var(n.into())
    }

    fn cons(f: &str, ts: Vec<Tm>) -> Tm {
        Tm::Cons(f.into(), ts)
    }

    fn sh(t: Tm) -> Tm {
        Tm::ShapeOf(Box::new(t))
    }

    fn eq(a: Tm, b: Tm) -> PFormula {
        Formula::Atom(PAtom::Eq(a, b))
    }

    fn rel(r: &str, ts: Vec<Tm>) -> PFormula {
        Formula::Atom(PAtom::Rel(r.into(), ts))
    }

    fn mixed_sig() -> VarianceSignature {
        VarianceSignature::new(vec![
            ("f".into(), vec![-1, 1]),
            ("g".into(), vec![1, 1]),
        ])
        .unwrap()
    }

    /// All ground terms of the two-constant configuration up to height h.
    fn terms2(h: usize) -> Vec<GT> {
        let mut by_h: Vec<Vec<GT>> = vec![vec![GT::C("a".into()), GT::C("b".into())]];
        for hh in 1..=h {
            let lower: Vec<GT> = by_h.iter().flatten().cloned().collect();
            let mut level = Vec::new();
            for x in &lower {
                for y in &lower {
                    let t = GT::F("g".into(), vec![x.clone(), y.clone()]);
                    if t.height() == hh {
                        level.push(t);
                    }
                }
            }
            by_h.push(level);
        }
        by_h.into_iter().flatten().collect()
    }

    /// Direct recursive definition of the lifted order on ground terms.
    fn ref_lifted(m: &FiniteStructure, sig: &VarianceSignature, r: &str, x: &GT, y: &GT, sign: i8) -> bool {
        match (x, y) {
            (GT::C(a), GT::C(b)) => {
                let (a, b) = if sign == 1 { (a, b) } else { (b, a) };
                m.holds(r, &[m.elem_index(a).unwrap(), m.elem_index(b).unwrap()])
                    .unwrap()
            }
            (GT::F(f, xs), GT::F(g, ys)) if f == g => xs
                .iter()
                .zip(ys)
                .enumerate()
                .all(|(i, (xc, yc))| {
                    let s = sign * sig.variance(f, i).unwrap();
                    ref_lifted(m, sig, r, xc, yc, s)
                }),
            _ => false,
        }
    }

    #[test]
    fn lifted_matches_recursive_definition() {
        let (sig, m) = two_const();
        let inv = m.inverted();
        for x in terms2(2) {
            for y in terms2(2) {
                let got =
                    lifted_relation_eval(&m, &inv, &sig, "leq", &[x.clone(), y.clone()]).unwrap();
                let want = ref_lifted(&m, &sig, "leq", &x, &y, 1);
                assert_eq!(got, want, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn cver_is_an_involution_and_transposes() {
        let (sig, m) = two_const();
        let inv = m.inverted();
        let f: Inner = Formula::and(vec![
            Formula::Atom(InnerAtom::Rel("leq".into(), vec![v("x"), v("y")])),
            Formula::not(Formula::Atom(InnerAtom::Rel("eqc".into(), vec![v("x"), v("y")]))),
        ]);
        assert_eq!(cver(&cver(&f, m.order_name()), m.order_name()), f);
        let fo = inner_to_fo(&f).unwrap();
        let fo_c = inner_to_fo(&cver(&f, m.order_name())).unwrap();
        let _ = sig;
        for x in 0..2 {
            for y in 0..2 {
                let env: HashMap<Var, usize> =
                    [("x".to_string(), x), ("y".to_string(), y)].into_iter().collect();
                assert_eq!(
                    eval_fo(&m, &fo_c, &env).unwrap(),
                    eval_fo(&inv, &fo, &env).unwrap()
                );
            }
        }
    }

    #[test]
    fn relation_as_cardinality_agrees_on_ground_terms() {
        let (sig, m) = two_const();
        let atom = rel("leq", vec![v("x"), v("y")]);
        let card = relation_to_card("leq", &[v("x"), v("y")]);
        for x in terms2(2) {
            for y in terms2(2) {
                let env: GEnv = [
                    ("x".to_string(), GV::T(x.clone())),
                    ("y".to_string(), GV::T(y.clone())),
                ]
                .into_iter()
                .collect();
                assert_eq!(
                    eval_power(&atom, &sig, &m, &env).unwrap(),
                    eval_power(&card, &sig, &m, &env).unwrap()
                );
            }
        }
    }

    #[test]
    fn decompose_card_agrees_on_ground_terms() {
        let sig = mixed_sig();
        let (_, m) = two_const();
        let atom = PAtom::Card {
            inner: Formula::not(Formula::Atom(InnerAtom::Rel(
                "leq".into(),
                vec![v("x"), v("y")],
            ))),
            shape: Tm::ShCons(
                "f".into(),
                vec![Tm::ShCons(SHAPE_CONST.into(), vec![]), Tm::ShCons(SHAPE_CONST.into(), vec![])],
            ),
            cmp: Cmp::Ge,
            k: 1,
        };
        let dec = decompose_card(&atom, &sig, m.order_name()).unwrap();
        for xa in ["a", "b"] {
            for xb in ["a", "b"] {
                for ya in ["a", "b"] {
                    for yb in ["a", "b"] {
                        let mk = |p: &str, q: &str| {
                            GT::F("f".into(), vec![GT::C(p.into()), GT::C(q.into())])
                        };
                        let env: GEnv = [
                            ("x".to_string(), GV::T(mk(xa, xb))),
                            ("y".to_string(), GV::T(mk(ya, yb))),
                        ]
                        .into_iter()
                        .collect();
                        assert_eq!(
                            eval_power(&Formula::Atom(atom.clone()), &sig, &m, &env).unwrap(),
                            eval_power(&dec, &sig, &m, &env).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn count_sets_two_const() {
        let (sig, _) = two_const();
        let fin = |pairs: &[(u64, u64)]| CountSet::Finite(pairs.iter().copied().collect());
        assert_eq!(
            variance_count_sets(&sig, Bound::Exact(2), Bound::Exact(0)).unwrap(),
            fin(&[(2, 0)])
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::Exact(1), Bound::Exact(1)).unwrap(),
            fin(&[])
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::AtLeast(0), Bound::AtLeast(1)).unwrap(),
            fin(&[])
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::AtLeast(0), Bound::AtLeast(0)).unwrap(),
            CountSet::Infinite
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::AtLeast(0), Bound::Exact(0)).unwrap(),
            CountSet::Infinite
        );
    }

    #[test]
    fn count_sets_mixed_variance() {
        // every pair with p >= 1 is reachable, and each window query
        // reflects that
        let sig = mixed_sig();
        for p in 0..=4u64 {
            for n in 0..=4u64 {
                let got = variance_count_sets(&sig, Bound::Exact(p), Bound::Exact(n)).unwrap();
                let want = if p >= 1 {
                    CountSet::Finite([(p, n)].into_iter().collect())
                } else {
                    CountSet::Finite(BTreeSet::new())
                };
                assert_eq!(got, want, "window ({p},{n})");
            }
        }
        assert_eq!(
            variance_count_sets(&sig, Bound::Exact(0), Bound::AtLeast(0)).unwrap(),
            CountSet::Finite(BTreeSet::new())
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::Exact(1), Bound::AtLeast(0)).unwrap(),
            CountSet::Infinite
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::AtLeast(1), Bound::Exact(1)).unwrap(),
            CountSet::Infinite
        );
        assert_eq!(
            variance_count_sets(&sig, Bound::AtLeast(0), Bound::AtLeast(0)).unwrap(),
            CountSet::Infinite
        );
    }

    #[test]
    fn count_sets_match_shape_enumeration() {
        for sig in [two_const().0, mixed_sig()] {
            for p in 0..=3u64 {
                for n in 0..=3u64 {
                    if p + n == 0 {
                        continue;
                    }
                    let reachable = enum_shapes(&sig, (p + n) as usize)
                        .into_iter()
                        .any(|s| s.pn(&sig) == (p as usize, n as usize));
                    let got = variance_count_sets(&sig, Bound::Exact(p), Bound::Exact(n)).unwrap();
                    let want = if reachable {
                        CountSet::Finite([(p, n)].into_iter().collect())
                    } else {
                        CountSet::Finite(BTreeSet::new())
                    };
                    assert_eq!(got, want, "pair ({p},{n})");
                }
            }
        }
    }

    #[test]
    fn simple_sentences() {
        let (sig, m) = two_const();
        // ∃x. x = x
        let f = Formula::exists("x", Sort::Term, eq(v("x"), v("x")));
        assert!(decide(&f, &sig, &m).unwrap());
        // ∃x. x ≠ x
        let f = Formula::exists("x", Sort::Term, Formula::not(eq(v("x"), v("x"))));
        assert!(!decide(&f, &sig, &m).unwrap());
        // ∃x. Is_g(x)
        let f = Formula::exists("x", Sort::Term, Formula::Atom(PAtom::Is("g".into(), v("x"))));
        assert!(decide(&f, &sig, &m).unwrap());
        // ∃s. s = c^S
        let f = Formula::exists(
            "s",
            Sort::Shape,
            eq(v("s"), Tm::ShCons(SHAPE_CONST.into(), vec![])),
        );
        assert!(decide(&f, &sig, &m).unwrap());
        // ∀s. ∃x. sh(x) = s
        let f = Formula::forall(
            "s",
            Sort::Shape,
            Formula::exists("x", Sort::Term, eq(sh(v("x")), v("s"))),
        );
        assert!(decide(&f, &sig, &m).unwrap());
        // ∀x,y. x ≤ y ∨ y ≤ x  (false: incomparable shapes exist... and
        // even at one shape (a,b) vs (b,a))
        let f = Formula::forall(
            "x",
            Sort::Term,
            Formula::forall(
                "y",
                Sort::Term,
                Formula::or(vec![
                    rel("leq", vec![v("x"), v("y")]),
                    rel("leq", vec![v("y"), v("x")]),
                ]),
            ),
        );
        assert!(!decide(&f, &sig, &m).unwrap());
        // ∀x. x ≤ x
        let f = Formula::forall("x", Sort::Term, rel("leq", vec![v("x"), v("x")]));
        assert!(decide(&f, &sig, &m).unwrap());
    }

    /// |true|_{sh x} = 1, i.e. the shape of x has exactly one leaf.
    fn size_one(x: &str) -> PFormula {
        Formula::Atom(PAtom::Card {
            inner: Formula::True,
            shape: sh(v(x)),
            cmp: Cmp::Eq,
            k: 1,
        })
    }

    #[test]
    fn shape_size_example() {
        let (sig, m) = two_const();
        let f = Formula::exists("x", Sort::Term, size_one("x"));
        assert!(decide(&f, &sig, &m).unwrap());
        let f = Formula::forall(
            "x",
            Sort::Term,
            Formula::iff(size_one("x"), eq(sh(v("x")), Tm::ShCons(SHAPE_CONST.into(), vec![]))),
        );
        assert!(decide(&f, &sig, &m).unwrap());
    }

    fn golden_sentence() -> PFormula {
        let leq = |a: Tm, b: Tm| rel("leq", vec![a, b]);
        let is_g = |t: Tm| Formula::Atom(PAtom::Is("g".into(), t));
        let g1 = |t: Tm| Tm::Sel("g".into(), 1, Box::new(t));
        let inner_v = Formula::forall(
            "v",
            Sort::Term,
            Formula::implies(
                Formula::and(vec![
                    leq(
                        cons("g", vec![v("v"), v("z")]),
                        cons("g", vec![v("z"), v("v")]),
                    ),
                    is_g(v("v")),
                    is_g(v("w")),
                ]),
                leq(g1(v("w")), g1(v("v"))),
            ),
        );
        let inner_w = Formula::forall(
            "w",
            Sort::Term,
            Formula::implies(
                Formula::and(vec![leq(v("w"), v("x")), leq(v("w"), v("y"))]),
                inner_v,
            ),
        );
        let inner_z = Formula::exists(
            "z",
            Sort::Term,
            Formula::and(vec![leq(v("z"), v("x")), leq(v("z"), v("y")), inner_w]),
        );
        Formula::forall(
            "x",
            Sort::Term,
            Formula::forall(
                "y",
                Sort::Term,
                Formula::implies(leq(v("x"), v("y")), inner_z),
            ),
        )
    }

    #[test]
    fn golden_sentence_is_true() {
        let (sig, m) = two_const();
        assert!(decide(&golden_sentence(), &sig, &m).unwrap());
    }

    #[test]
    fn innermost_branch_produces_valid_bases() {
        let (sig, m) = two_const();
        let leq = |a: Tm, b: Tm| rel("leq", vec![a, b]);
        let phi1 = Formula::and(vec![
            leq(
                cons("g", vec![v("v"), v("z")]),
                cons("g", vec![v("z"), v("v")]),
            ),
            Formula::Atom(PAtom::Is("g".into(), v("v"))),
            Formula::Atom(PAtom::Is("g".into(), v("w"))),
            Formula::not(leq(
                Tm::Sel("g".into(), 1, Box::new(v("w"))),
                Tm::Sel("g".into(), 1, Box::new(v("v"))),
            )),
        ]);
        let bases = qf_to_struct_base(&phi1, &sig, &m).unwrap();
        assert!(!bases.is_empty());
        for b in &bases {
            b.validate(&sig, &m).unwrap();
        }
        // some base has a composed shape node (the shape of g(v,z))
        assert!(bases.iter().any(|b| b
            .shapes
            .nodes
            .iter()
            .any(|n| matches!(n, Some((f, _)) if f == "g"))));
    }

    #[test]
    fn qe_is_idempotent_on_samples() {
        let (sig, m) = two_const();
        let samples = vec![
            Formula::exists("y", Sort::Term, rel("leq", vec![v("x"), v("y")])),
            Formula::exists(
                "y",
                Sort::Term,
                Formula::and(vec![
                    rel("leq", vec![v("x"), v("y")]),
                    Formula::not(eq(v("x"), v("y"))),
                ]),
            ),
            Formula::exists("s", Sort::Shape, eq(sh(v("x")), v("s"))),
        ];
        for f in samples {
            let once = power_qe(&f, &sig, &m).unwrap();
            assert!(once.is_quantifier_free());
            let twice = power_qe(&once, &sig, &m).unwrap();
            assert_eq!(once, twice);
        }
    }
}
