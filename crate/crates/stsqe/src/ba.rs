//! Quantifier elimination for boolean algebras of finite sets with
//! cardinality constraints |t| = k and |t| ≥ k.  The eliminator works
//! conjunct by conjunct: atoms mentioning the quantified variable y are
//! rewritten over the partition induced by their other variables, the
//! constraints on |s∩y| and |s∩yᶜ| are merged per cell, and the pair is
//! collapsed into a constraint on |s| alone.

use crate::lang::Cmp;
use crate::logic::{
    conj_to_formula, AtomOps, ExistsElim, Formula, Lit, Sort, Var,
};
use anyhow::Result;
use itertools::Itertools;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Set-algebra terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SetTm {
    Var(Var),
    Zero,
    One,
    Inter(Box<SetTm>, Box<SetTm>),
    Union(Box<SetTm>, Box<SetTm>),
    Compl(Box<SetTm>),
}

impl SetTm {
    pub fn inter(a: SetTm, b: SetTm) -> SetTm {
        match (a, b) {
            (SetTm::Zero, _) | (_, SetTm::Zero) => SetTm::Zero,
            (SetTm::One, t) | (t, SetTm::One) => t,
            (a, b) => SetTm::Inter(Box::new(a), Box::new(b)),
        }
    }
    pub fn union(a: SetTm, b: SetTm) -> SetTm {
        match (a, b) {
            (SetTm::One, _) | (_, SetTm::One) => SetTm::One,
            (SetTm::Zero, t) | (t, SetTm::Zero) => t,
            (a, b) => SetTm::Union(Box::new(a), Box::new(b)),
        }
    }
    pub fn compl(a: SetTm) -> SetTm {
        match a {
            SetTm::Zero => SetTm::One,
            SetTm::One => SetTm::Zero,
            SetTm::Compl(t) => *t,
            t => SetTm::Compl(Box::new(t)),
        }
    }

    pub fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            SetTm::Var(v) => f(v),
            SetTm::Zero | SetTm::One => {}
            SetTm::Inter(a, b) | SetTm::Union(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            SetTm::Compl(a) => a.for_each_var(f),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.for_each_var(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    fn rename(&self, map: &HashMap<Var, Var>) -> SetTm {
        match self {
            SetTm::Var(v) => SetTm::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            SetTm::Zero => SetTm::Zero,
            SetTm::One => SetTm::One,
            SetTm::Inter(a, b) => {
                SetTm::Inter(Box::new(a.rename(map)), Box::new(b.rename(map)))
            }
            SetTm::Union(a, b) => {
                SetTm::Union(Box::new(a.rename(map)), Box::new(b.rename(map)))
            }
            SetTm::Compl(a) => SetTm::Compl(Box::new(a.rename(map))),
        }
    }

    /// Substitute set terms for variables.
    pub fn subst(&self, map: &HashMap<Var, SetTm>) -> SetTm {
        match self {
            SetTm::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            SetTm::Zero => SetTm::Zero,
            SetTm::One => SetTm::One,
            SetTm::Inter(a, b) => SetTm::inter(a.subst(map), b.subst(map)),
            SetTm::Union(a, b) => SetTm::union(a.subst(map), b.subst(map)),
            SetTm::Compl(a) => SetTm::compl(a.subst(map)),
        }
    }

    /// Constant-fold a variable-free term to Zero or One, if possible.
    pub fn const_value(&self) -> Option<bool> {
        match self {
            SetTm::Var(_) => None,
            SetTm::Zero => Some(false),
            SetTm::One => Some(true),
            SetTm::Inter(a, b) => Some(a.const_value()? && b.const_value()?),
            SetTm::Union(a, b) => Some(a.const_value()? || b.const_value()?),
            SetTm::Compl(a) => Some(!a.const_value()?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaAtom {
    Card(SetTm, Cmp, u64),
    Subset(SetTm, SetTm),
    SetEq(SetTm, SetTm),
}

impl AtomOps for BaAtom {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            BaAtom::Card(t, _, _) => t.for_each_var(f),
            BaAtom::Subset(a, b) | BaAtom::SetEq(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }
    fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        match self {
            BaAtom::Card(t, c, k) => BaAtom::Card(t.rename(map), *c, *k),
            BaAtom::Subset(a, b) => BaAtom::Subset(a.rename(map), b.rename(map)),
            BaAtom::SetEq(a, b) => BaAtom::SetEq(a.rename(map), b.rename(map)),
        }
    }
}

pub type BaFormula = Formula<BaAtom>;

pub fn card(t: SetTm, cmp: Cmp, k: u64) -> BaFormula {
    Formula::Atom(BaAtom::Card(t, cmp, k))
}

/// Rewrite ⊆ and set equality into cardinality form and eliminate
/// negative literals, leaving a positive combination of Card atoms.
/// Variable-free set terms are constant-folded on the way.
pub fn normalize_literals(f: &BaFormula) -> BaFormula {
    fn pos_card(t: SetTm, cmp: Cmp, k: u64) -> BaFormula {
        if let Some(b) = t.const_value() {
            if !b {
                // |0| = 0
                return match cmp {
                    Cmp::Eq => Formula::from_bool(k == 0),
                    Cmp::Ge => Formula::from_bool(k == 0),
                };
            }
        }
        if cmp == Cmp::Ge && k == 0 {
            return Formula::True;
        }
        card(t, cmp, k)
    }
    fn neg_card(t: SetTm, cmp: Cmp, k: u64) -> BaFormula {
        // ¬|t|=k → |t|=0 ∨ … ∨ |t|=k−1 ∨ |t|≥k+1
        // ¬|t|≥k → |t|=0 ∨ … ∨ |t|=k−1
        let mut parts: Vec<BaFormula> = (0..k).map(|i| pos_card(t.clone(), Cmp::Eq, i)).collect();
        if cmp == Cmp::Eq {
            parts.push(pos_card(t, Cmp::Ge, k + 1));
        }
        Formula::or(parts)
    }
    fn diff(a: &SetTm, b: &SetTm) -> SetTm {
        SetTm::inter(a.clone(), SetTm::compl(b.clone()))
    }
    fn symdiff(a: &SetTm, b: &SetTm) -> SetTm {
        SetTm::union(diff(a, b), diff(b, a))
    }
    fn go(f: &BaFormula, neg: bool) -> BaFormula {
        match f {
            Formula::True => Formula::from_bool(!neg),
            Formula::False => Formula::from_bool(neg),
            Formula::Undef => Formula::Undef,
            Formula::Not(g) => go(g, !neg),
            Formula::And(gs) => {
                let parts = gs.iter().map(|g| go(g, neg)).collect();
                if neg {
                    Formula::or(parts)
                } else {
                    Formula::and(parts)
                }
            }
            Formula::Or(gs) => {
                let parts = gs.iter().map(|g| go(g, neg)).collect();
                if neg {
                    Formula::and(parts)
                } else {
                    Formula::or(parts)
                }
            }
            Formula::Quantified(q, x, s, g) => {
                let q2 = if neg {
                    match q {
                        crate::logic::Quant::Exists => crate::logic::Quant::Forall,
                        crate::logic::Quant::Forall => crate::logic::Quant::Exists,
                    }
                } else {
                    *q
                };
                Formula::Quantified(q2, x.clone(), *s, Box::new(go(g, neg)))
            }
            Formula::Atom(a) => match a {
                BaAtom::Card(t, c, k) => {
                    if neg {
                        neg_card(t.clone(), *c, *k)
                    } else {
                        pos_card(t.clone(), *c, *k)
                    }
                }
                BaAtom::Subset(a, b) => {
                    if neg {
                        pos_card(diff(a, b), Cmp::Ge, 1)
                    } else {
                        pos_card(diff(a, b), Cmp::Eq, 0)
                    }
                }
                BaAtom::SetEq(a, b) => {
                    if neg {
                        pos_card(symdiff(a, b), Cmp::Ge, 1)
                    } else {
                        pos_card(symdiff(a, b), Cmp::Eq, 0)
                    }
                }
            },
        }
    }
    go(f, false)
}

impl<A: AtomOps> Formula<A> {
    pub fn from_bool(b: bool) -> Formula<A> {
        if b {
            Formula::True
        } else {
            Formula::False
        }
    }
}

/// A per-part constraint during elimination.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Constr {
    cmp: Cmp,
    k: u64,
}

/// Merge two constraints on the same quantity; None = contradictory.
fn merge(a: Constr, b: Constr) -> Option<Constr> {
    match (a.cmp, b.cmp) {
        (Cmp::Eq, Cmp::Eq) => (a.k == b.k).then_some(a),
        (Cmp::Eq, Cmp::Ge) => (a.k >= b.k).then_some(a),
        (Cmp::Ge, Cmp::Eq) => (b.k >= a.k).then_some(b),
        (Cmp::Ge, Cmp::Ge) => Some(Constr {
            cmp: Cmp::Ge,
            k: a.k.max(b.k),
        }),
    }
}

/// Reduction of a set term inside one partition cell: membership when
/// the point is in y / not in y.
fn restrict(t: &SetTm, y: &Var, signs: &BTreeMap<Var, bool>) -> (bool, bool) {
    match t {
        SetTm::Var(v) if v == y => (true, false),
        SetTm::Var(v) => {
            let b = *signs.get(v).expect("cell covers all variables");
            (b, b)
        }
        SetTm::Zero => (false, false),
        SetTm::One => (true, true),
        SetTm::Inter(a, b) => {
            let (a1, a0) = restrict(a, y, signs);
            let (b1, b0) = restrict(b, y, signs);
            (a1 && b1, a0 && b0)
        }
        SetTm::Union(a, b) => {
            let (a1, a0) = restrict(a, y, signs);
            let (b1, b0) = restrict(b, y, signs);
            (a1 || b1, a0 || b0)
        }
        SetTm::Compl(a) => {
            let (a1, a0) = restrict(a, y, signs);
            (!a1, !a0)
        }
    }
}

fn cell_term(xs: &[Var], mask: usize) -> SetTm {
    let mut t = SetTm::One;
    for (i, x) in xs.iter().enumerate() {
        let lit = if mask & (1 << i) != 0 {
            SetTm::Var(x.clone())
        } else {
            SetTm::compl(SetTm::Var(x.clone()))
        };
        t = SetTm::inter(t, lit);
    }
    t
}

/// All ways to write k as an ordered sum of `parts` nonnegative values.
fn compositions(k: u64, parts: usize) -> Vec<Vec<u64>> {
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

/// One part of a y-atom's decomposition: cell index and which side of y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    InY,
    OutY,
}

/// Eliminate ∃y from a conjunction of positive Card literals.
fn eliminate_conj(y: &Var, conj: &[Lit<BaAtom>]) -> BaFormula {
    debug_assert!(conj.iter().all(|l| l.pos));
    let mut keep = Vec::new();
    let mut yatoms: Vec<(SetTm, Cmp, u64)> = Vec::new();
    for l in conj {
        match &l.atom {
            BaAtom::Card(t, c, k) if t.vars().contains(y) => {
                yatoms.push((t.clone(), *c, *k))
            }
            _ => keep.push(l.clone()),
        }
    }
    if yatoms.is_empty() {
        return conj_to_formula(&keep);
    }
    // partition over the other variables co-occurring with y
    let mut xs: BTreeSet<Var> = BTreeSet::new();
    for (t, _, _) in &yatoms {
        for v in t.vars() {
            if &v != y {
                xs.insert(v);
            }
        }
    }
    let xs: Vec<Var> = xs.into_iter().collect();
    let m = xs.len();
    let ncells = 1usize << m;

    // per atom: the list of parts |cell∩y| / |cell∩yᶜ| it sums over
    let atom_parts: Vec<(Vec<(usize, Side)>, Cmp, u64)> = yatoms
        .iter()
        .map(|(t, c, k)| {
            let mut parts = Vec::new();
            for mask in 0..ncells {
                let signs: BTreeMap<Var, bool> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (x.clone(), mask & (1 << i) != 0))
                    .collect();
                let (in_y, out_y) = restrict(t, y, &signs);
                if in_y {
                    parts.push((mask, Side::InY));
                }
                if out_y {
                    parts.push((mask, Side::OutY));
                }
            }
            (parts, *c, *k)
        })
        .collect();

    // an = atom over no parts is |0| ⋈ k
    for (parts, c, k) in &atom_parts {
        if parts.is_empty() {
            let sat = match c {
                Cmp::Eq => *k == 0,
                Cmp::Ge => *k == 0,
            };
            if !sat {
                return Formula::False;
            }
        }
    }
    // parts pinned empty by |·| = 0 atoms never receive weight;
    // removing them up front keeps the composition enumeration small
    let mut pinned: BTreeSet<(usize, Side)> = BTreeSet::new();
    for (parts, c, k) in &atom_parts {
        if *c == Cmp::Eq && *k == 0 {
            pinned.extend(parts.iter().copied());
        }
    }
    // |·| = 0 atoms not mentioning y pin cells too, when their
    // variables all occur in the decomposition
    let xset: BTreeSet<Var> = xs.iter().cloned().collect();
    let ctx_zero: Vec<&SetTm> = keep
        .iter()
        .filter_map(|l| match &l.atom {
            BaAtom::Card(t, Cmp::Eq, 0) if t.vars().iter().all(|v| xset.contains(v)) => {
                Some(t)
            }
            _ => None,
        })
        .collect();
    if !ctx_zero.is_empty() {
        for mask in 0..ncells {
            let signs: BTreeMap<Var, bool> = xs
                .iter()
                .enumerate()
                .map(|(i, x)| (x.clone(), mask & (1 << i) != 0))
                .collect();
            for t in &ctx_zero {
                if restrict(t, y, &signs).0 {
                    pinned.insert((mask, Side::InY));
                    pinned.insert((mask, Side::OutY));
                }
            }
        }
    }
    let mut reduced: Vec<(Vec<(usize, Side)>, Cmp, u64)> = Vec::new();
    for (parts, c, k) in atom_parts {
        if k == 0 && (c == Cmp::Ge || c == Cmp::Eq) {
            continue; // ≥0 is trivial, =0 was folded into the pinned set
        }
        let parts: Vec<_> = parts.into_iter().filter(|p| !pinned.contains(p)).collect();
        if parts.is_empty() {
            return Formula::False; // a positive bound over an empty sum
        }
        reduced.push((parts, c, k));
    }
    if reduced.is_empty() {
        // only the pinned set remains; a single empty choice below
        reduced.push((Vec::new(), Cmp::Eq, 0));
    }

    eprintln!(
        "[ba] m={m} yatoms={} reduced={:?} pinned={}",
        keep.len(),
        reduced.iter().map(|(p, c, k)| (p.len(), *c, *k)).collect::<Vec<_>>(),
        pinned.len()
    );
    // cartesian product of the per-atom composition choices
    let mut disjuncts: Vec<BaFormula> = Vec::new();
    let choice_sets: Vec<Vec<Vec<(usize, Side, Constr)>>> = reduced
        .iter()
        .map(|(parts, c, k)| {
            match c {
                // |t| = k: parts sum exactly; every part pinned
                Cmp::Eq => compositions(*k, parts.len())
                    .into_iter()
                    .map(|comp| {
                        parts
                            .iter()
                            .zip(comp)
                            .map(|(&(m, s), ki)| (m, s, Constr { cmp: Cmp::Eq, k: ki }))
                            .collect()
                    })
                    .collect(),
                // |t| ≥ k: distribute the lower bound
                Cmp::Ge => compositions(*k, parts.len())
                    .into_iter()
                    .map(|comp| {
                        parts
                            .iter()
                            .zip(comp)
                            .map(|(&(m, s), ki)| (m, s, Constr { cmp: Cmp::Ge, k: ki }))
                            .collect()
                    })
                    .collect(),
            }
        })
        .collect();

    'branch: for branch in choice_sets.iter().multi_cartesian_product() {
        // merge all constraints per (cell, side)
        let mut per: BTreeMap<(usize, Side), Constr> = pinned
            .iter()
            .map(|&p| (p, Constr { cmp: Cmp::Eq, k: 0 }))
            .collect();
        for choice in branch {
            for &(mask, side, c) in choice {
                match per.get(&(mask, side)) {
                    None => {
                        per.insert((mask, side), c);
                    }
                    Some(&old) => match merge(old, c) {
                        Some(mrg) => {
                            per.insert((mask, side), mrg);
                        }
                        None => continue 'branch,
                    },
                }
            }
        }
        // collapse the two sides of each cell into a |cell| constraint;
        // the cells pinned to zero merge into one |union| = 0 atom so
        // the output stays small
        let mut lits = keep.clone();
        let mut zero_union: Option<SetTm> = None;
        let cells: BTreeSet<usize> = per.keys().map(|&(m, _)| m).collect();
        for mask in cells {
            let a = per
                .get(&(mask, Side::InY))
                .copied()
                .unwrap_or(Constr { cmp: Cmp::Ge, k: 0 });
            let b = per
                .get(&(mask, Side::OutY))
                .copied()
                .unwrap_or(Constr { cmp: Cmp::Ge, k: 0 });
            // sum is exact only when both sides are exact
            let cmp = if a.cmp == Cmp::Eq && b.cmp == Cmp::Eq {
                Cmp::Eq
            } else {
                Cmp::Ge
            };
            let k = a.k + b.k;
            if cmp == Cmp::Ge && k == 0 {
                continue; // trivial
            }
            if cmp == Cmp::Eq && k == 0 {
                let c = cell_term(&xs, mask);
                zero_union = Some(match zero_union {
                    None => c,
                    Some(u) => SetTm::union(u, c),
                });
                continue;
            }
            lits.push(Lit {
                pos: true,
                atom: BaAtom::Card(cell_term(&xs, mask), cmp, k),
            });
        }
        if let Some(u) = zero_union {
            lits.push(Lit {
                pos: true,
                atom: BaAtom::Card(u, Cmp::Eq, 0),
            });
        }
        disjuncts.push(conj_to_formula(&lits));
    }
    Formula::or(disjuncts)
}

pub struct BaElim;

impl ExistsElim<BaAtom> for BaElim {
    fn eliminate_exists(
        &self,
        y: &Var,
        _sort: Sort,
        matrix: Formula<BaAtom>,
    ) -> Result<Formula<BaAtom>> {
        // normalization leaves only positive Card atoms, so the DNF
        // below produces purely positive conjuncts
        let norm = normalize_literals(&matrix);
        let mut out = Vec::new();
        for conj in norm.dnf() {
            out.push(eliminate_conj(y, &conj));
        }
        Ok(Formula::or(out).simplify())
    }
}

/// Full quantifier elimination for the set-algebra language.
pub fn ba_qe(f: &BaFormula) -> Result<BaFormula> {
    let out = crate::logic::qe_drive(f, &BaElim)?;
    Ok(normalize_literals(&out).simplify())
}

/// The set of domain cardinalities satisfying a closed quantifier-free
/// formula, as a finite set plus an optional upward ray.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeSet {
    pub finite: BTreeSet<u64>,
    pub ray: Option<u64>,
}

impl SizeSet {
    pub fn contains(&self, n: u64) -> bool {
        self.finite.contains(&n) || self.ray.is_some_and(|r| n >= r)
    }
}

/// Evaluate a closed Card formula at domain size n (|1| = n, |0| = 0).
fn eval_closed_at(f: &BaFormula, n: u64) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Undef => panic!("undefined in closed evaluation"),
        Formula::Not(g) => !eval_closed_at(g, n),
        Formula::And(gs) => gs.iter().all(|g| eval_closed_at(g, n)),
        Formula::Or(gs) => gs.iter().any(|g| eval_closed_at(g, n)),
        Formula::Quantified(..) => panic!("closed qf formula expected"),
        Formula::Atom(BaAtom::Card(t, c, k)) => {
            let size = match t.const_value() {
                Some(true) => n,
                Some(false) => 0,
                None => panic!("domain_size_set: variable in closed formula"),
            };
            match c {
                Cmp::Eq => size == *k,
                Cmp::Ge => size >= *k,
            }
        }
        Formula::Atom(_) => panic!("domain_size_set: normalize first"),
    }
}

/// For a closed quantifier-free formula over |1|-atoms: the set of
/// domain sizes making it true.  Truth is eventually constant beyond
/// the largest constant, which bounds the ray.
pub fn domain_size_set(f: &BaFormula) -> SizeSet {
    let norm = normalize_literals(f);
    let mut maxk = 0;
    for a in norm.atoms() {
        let BaAtom::Card(_, _, k) = a else {
            unreachable!()
        };
        maxk = maxk.max(k);
    }
    let cutoff = maxk + 1;
    let mut finite = BTreeSet::new();
    for n in 0..cutoff {
        if eval_closed_at(&norm, n) {
            finite.insert(n);
        }
    }
    let mut ray = eval_closed_at(&norm, cutoff).then_some(cutoff);
    // fold contiguous finite elements into the ray
    while let Some(r) = ray {
        if r > 0 && finite.contains(&(r - 1)) {
            finite.remove(&(r - 1));
            ray = Some(r - 1);
        } else {
            break;
        }
    }
    SizeSet { finite, ray }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> SetTm {
        SetTm::Var(s.into())
    }

    #[test]
    fn subset_to_cardinality() {
        let f = Formula::Atom(BaAtom::Subset(v("t1"), v("t2")));
        let n = normalize_literals(&f);
        assert_eq!(
            n,
            card(
                SetTm::inter(v("t1"), SetTm::compl(v("t2"))),
                Cmp::Eq,
                0
            )
        );
    }

    #[test]
    fn negative_literals_eliminated() {
        // ¬|t|≥1 → |t|=0
        let f = Formula::not(card(v("t"), Cmp::Ge, 1));
        assert_eq!(normalize_literals(&f), card(v("t"), Cmp::Eq, 0));
        // ¬|t|=0 → |t|≥1
        let g = Formula::not(card(v("t"), Cmp::Eq, 0));
        assert_eq!(normalize_literals(&g), card(v("t"), Cmp::Ge, 1));
        // ¬|t|=1 → |t|=0 ∨ |t|≥2
        let h = Formula::not(card(v("t"), Cmp::Eq, 1));
        assert_eq!(
            normalize_literals(&h),
            Formula::or(vec![card(v("t"), Cmp::Eq, 0), card(v("t"), Cmp::Ge, 2)])
        );
    }

    #[test]
    fn exists_rows() {
        // ∃y. |s∩y|≥1 ∧ |s∩yᶜ|≥1  →  |s| ≥ 2
        let s = v("s");
        let f = Formula::exists(
            "y",
            Sort::Term,
            Formula::and(vec![
                card(SetTm::inter(s.clone(), v("y")), Cmp::Ge, 1),
                card(SetTm::inter(s.clone(), SetTm::compl(v("y"))), Cmp::Ge, 1),
            ]),
        );
        let out = ba_qe(&f).unwrap();
        assert_eq!(out, card(v("s"), Cmp::Ge, 2));

        // ∃y. |s∩y|=1 ∧ |s∩yᶜ|=2  →  |s| = 3
        let g = Formula::exists(
            "y",
            Sort::Term,
            Formula::and(vec![
                card(SetTm::inter(s.clone(), v("y")), Cmp::Eq, 1),
                card(SetTm::inter(s.clone(), SetTm::compl(v("y"))), Cmp::Eq, 2),
            ]),
        );
        let out = ba_qe(&g).unwrap();
        assert_eq!(out, card(v("s"), Cmp::Eq, 3));

        // ∃y. |y| ≥ 0 → true
        let h = Formula::exists("y", Sort::Term, card(v("y"), Cmp::Ge, 0));
        assert_eq!(ba_qe(&h).unwrap(), Formula::True);
    }

    #[test]
    fn closed_example() {
        // ∃x. |x|=1 ∧ |xᶜ|=0  →  |1|=1
        let f = Formula::exists(
            "x",
            Sort::Term,
            Formula::and(vec![
                card(v("x"), Cmp::Eq, 1),
                card(SetTm::compl(v("x")), Cmp::Eq, 0),
            ]),
        );
        let out = ba_qe(&f).unwrap();
        assert_eq!(out, card(SetTm::One, Cmp::Eq, 1));
    }

    #[test]
    fn free_vars_never_grow() {
        let f = Formula::exists(
            "y",
            Sort::Term,
            Formula::and(vec![
                card(SetTm::inter(v("x1"), v("y")), Cmp::Ge, 1),
                card(SetTm::inter(v("x2"), SetTm::compl(v("y"))), Cmp::Eq, 1),
            ]),
        );
        let out = ba_qe(&f).unwrap();
        assert!(out.free_vars().is_subset(&f.free_vars()));
        assert!(out.is_quantifier_free());
    }

    #[test]
    fn domain_sizes() {
        // |1|=1 → {1}
        let s = domain_size_set(&card(SetTm::One, Cmp::Eq, 1));
        assert_eq!(s.finite, BTreeSet::from([1]));
        assert_eq!(s.ray, None);
        // |1|≥2 ∨ |1|=0 → {0} ∪ ray(2)
        let s = domain_size_set(&Formula::or(vec![
            card(SetTm::One, Cmp::Ge, 2),
            card(SetTm::One, Cmp::Eq, 0),
        ]));
        assert_eq!(s.finite, BTreeSet::from([0]));
        assert_eq!(s.ray, Some(2));
        // ¬(|1|≥1) → {0}
        let s = domain_size_set(&Formula::not(card(SetTm::One, Cmp::Ge, 1)));
        assert_eq!(s.finite, BTreeSet::from([0]));
        assert_eq!(s.ray, None);
        // |1|≥0 → ray(0)
        let s = domain_size_set(&card(SetTm::One, Cmp::Ge, 0));
        assert!(s.finite.is_empty());
        assert_eq!(s.ray, Some(0));
    }
}
