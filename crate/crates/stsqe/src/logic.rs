//! Multi-sorted first-order formulas, generic over the atom language,
//! with strong-Kleene three-valued semantics and the normalization
//! passes (NNF, DNF, prenex, well-defined DNF) shared by every
//! quantifier eliminator in this crate.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

pub type Var = String;

static FRESH: AtomicU64 = AtomicU64::new(0);

/// Globally fresh variable with the given prefix.  The `%` separator is
/// rejected by the surface parser, so generated names can never collide
/// with user input.
pub fn fresh(prefix: &str) -> Var {
    let n = FRESH.fetch_add(1, Ordering::Relaxed);
    format!("{prefix}%{n}")
}

/// Sorts of quantified variables.  Formulas themselves live in the
/// three-valued boolean sort and are never quantified over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sort {
    Term,
    Shape,
}

/// Strong Kleene truth values, ordered F < U < T so that ∧ is meet and
/// ∨ is join on the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bool3 {
    F,
    U,
    T,
}

impl Bool3 {
    pub fn from_bool(b: bool) -> Bool3 {
        if b {
            Bool3::T
        } else {
            Bool3::F
        }
    }
    pub fn and(self, other: Bool3) -> Bool3 {
        self.min(other)
    }
    pub fn or(self, other: Bool3) -> Bool3 {
        self.max(other)
    }
    pub fn not(self) -> Bool3 {
        match self {
            Bool3::T => Bool3::F,
            Bool3::F => Bool3::T,
            Bool3::U => Bool3::U,
        }
    }
    pub fn is_true(self) -> bool {
        self == Bool3::T
    }
}

/// Operations every atom language must provide.
pub trait AtomOps: Clone + PartialEq + fmt::Debug {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var));

    /// Rename free variables.  Implementations must be capture-avoiding
    /// with respect to any binders internal to the atom.
    fn rename(&self, map: &HashMap<Var, Var>) -> Self;

    /// Guard atoms whose conjunction is the domain formula of this atom:
    /// total atoms that hold exactly where this atom is defined.  The
    /// returned set is transitively closed (guards of guards included).
    fn guards(&self) -> Vec<Self> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quant {
    Exists,
    Forall,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula<A> {
    True,
    False,
    /// The undefined literal of the well-defined-DNF rewrite.  Never
    /// accepted in user input; only produced and consumed internally.
    Undef,
    Atom(A),
    Not(Box<Formula<A>>),
    And(Vec<Formula<A>>),
    Or(Vec<Formula<A>>),
    Quantified(Quant, Var, Sort, Box<Formula<A>>),
}

/// A signed atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Lit<A> {
    pub pos: bool,
    pub atom: A,
}

impl<A: AtomOps> Lit<A> {
    pub fn to_formula(&self) -> Formula<A> {
        if self.pos {
            Formula::Atom(self.atom.clone())
        } else {
            Formula::not(Formula::Atom(self.atom.clone()))
        }
    }
}

impl<A: AtomOps> Formula<A> {
    pub fn not(f: Formula<A>) -> Formula<A> {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(g) => *g,
            other => Formula::Not(Box::new(other)),
        }
    }

    pub fn and(fs: Vec<Formula<A>>) -> Formula<A> {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(gs) => out.extend(gs),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(fs: Vec<Formula<A>>) -> Formula<A> {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(gs) => out.extend(gs),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(p: Formula<A>, q: Formula<A>) -> Formula<A> {
        Formula::or(vec![Formula::not(p), q])
    }

    pub fn iff(p: Formula<A>, q: Formula<A>) -> Formula<A> {
        Formula::and(vec![
            Formula::implies(p.clone(), q.clone()),
            Formula::implies(q, p),
        ])
    }

    pub fn exists(x: impl Into<Var>, s: Sort, body: Formula<A>) -> Formula<A> {
        Formula::Quantified(Quant::Exists, x.into(), s, Box::new(body))
    }

    pub fn forall(x: impl Into<Var>, s: Sort, body: Formula<A>) -> Formula<A> {
        Formula::Quantified(Quant::Forall, x.into(), s, Box::new(body))
    }

    pub fn for_each_free_var(&self, f: &mut dyn FnMut(&Var)) {
        match self {
            Formula::True | Formula::False | Formula::Undef => {}
            Formula::Atom(a) => a.for_each_var(f),
            Formula::Not(g) => g.for_each_free_var(f),
            Formula::And(gs) | Formula::Or(gs) => {
                for g in gs {
                    g.for_each_free_var(f);
                }
            }
            Formula::Quantified(_, x, _, g) => {
                g.for_each_free_var(&mut |v| {
                    if v != x {
                        f(v)
                    }
                });
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.for_each_free_var(&mut |v| {
            out.insert(v.clone());
        });
        out
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Undef | Formula::Atom(_) => true,
            Formula::Not(g) => g.is_quantifier_free(),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().all(|g| g.is_quantifier_free()),
            Formula::Quantified(..) => false,
        }
    }

    /// Capture-avoiding renaming of free variables.
    pub fn rename(&self, map: &HashMap<Var, Var>) -> Formula<A> {
        match self {
            Formula::True | Formula::False | Formula::Undef => self.clone(),
            Formula::Atom(a) => Formula::Atom(a.rename(map)),
            Formula::Not(g) => Formula::Not(Box::new(g.rename(map))),
            Formula::And(gs) => Formula::And(gs.iter().map(|g| g.rename(map)).collect()),
            Formula::Or(gs) => Formula::Or(gs.iter().map(|g| g.rename(map)).collect()),
            Formula::Quantified(q, x, s, g) => {
                let mut inner = map.clone();
                inner.remove(x);
                // a binder capturing a renamed-to name would be unsound;
                // callers only rename to fresh names, so just assert.
                debug_assert!(!inner.values().any(|v| v == x));
                Formula::Quantified(*q, x.clone(), *s, Box::new(g.rename(&inner)))
            }
        }
    }

    /// Rename every bound variable to a globally fresh name.
    pub fn rename_bound_apart(&self) -> Formula<A> {
        match self {
            Formula::True | Formula::False | Formula::Undef | Formula::Atom(_) => self.clone(),
            Formula::Not(g) => Formula::Not(Box::new(g.rename_bound_apart())),
            Formula::And(gs) => {
                Formula::And(gs.iter().map(|g| g.rename_bound_apart()).collect())
            }
            Formula::Or(gs) => Formula::Or(gs.iter().map(|g| g.rename_bound_apart()).collect()),
            Formula::Quantified(q, x, s, g) => {
                let x2 = fresh(x.split('%').next().unwrap_or(x));
                let mut map = HashMap::new();
                map.insert(x.clone(), x2.clone());
                Formula::Quantified(*q, x2, *s, Box::new(g.rename_bound_apart().rename(&map)))
            }
        }
    }

    /// Constant folding, flattening, and removal of vacuous binders.
    pub fn simplify(&self) -> Formula<A> {
        match self {
            Formula::True | Formula::False | Formula::Undef | Formula::Atom(_) => self.clone(),
            Formula::Not(g) => Formula::not(g.simplify()),
            Formula::And(gs) => {
                let mut parts: Vec<Formula<A>> = Vec::new();
                for g in gs {
                    let g = g.simplify();
                    match g {
                        Formula::True => {}
                        Formula::False => return Formula::False,
                        Formula::And(hs) => {
                            for h in hs {
                                if !parts.contains(&h) {
                                    parts.push(h);
                                }
                            }
                        }
                        other => {
                            if !parts.contains(&other) {
                                parts.push(other);
                            }
                        }
                    }
                }
                Formula::and(parts)
            }
            Formula::Or(gs) => {
                let mut parts: Vec<Formula<A>> = Vec::new();
                for g in gs {
                    let g = g.simplify();
                    match g {
                        Formula::False => {}
                        Formula::True => return Formula::True,
                        Formula::Or(hs) => {
                            for h in hs {
                                if !parts.contains(&h) {
                                    parts.push(h);
                                }
                            }
                        }
                        other => {
                            if !parts.contains(&other) {
                                parts.push(other);
                            }
                        }
                    }
                }
                Formula::or(parts)
            }
            Formula::Quantified(q, x, s, g) => {
                let g = g.simplify();
                match g {
                    Formula::True => Formula::True,
                    Formula::False => Formula::False,
                    g if !g.free_vars().contains(x) => g,
                    g => Formula::Quantified(*q, x.clone(), *s, Box::new(g)),
                }
            }
        }
    }

    /// Negation normal form: `Not` pushed down to atoms.  `Undef` is
    /// self-dual (¬U = U).
    pub fn nnf(&self) -> Formula<A> {
        fn go<A: AtomOps>(f: &Formula<A>, neg: bool) -> Formula<A> {
            match f {
                Formula::True => {
                    if neg {
                        Formula::False
                    } else {
                        Formula::True
                    }
                }
                Formula::False => {
                    if neg {
                        Formula::True
                    } else {
                        Formula::False
                    }
                }
                Formula::Undef => Formula::Undef,
                Formula::Atom(a) => {
                    if neg {
                        Formula::Not(Box::new(Formula::Atom(a.clone())))
                    } else {
                        Formula::Atom(a.clone())
                    }
                }
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
                    let q2 = match (q, neg) {
                        (Quant::Exists, false) | (Quant::Forall, true) => Quant::Exists,
                        _ => Quant::Forall,
                    };
                    Formula::Quantified(q2, x.clone(), *s, Box::new(go(g, neg)))
                }
            }
        }
        go(self, false)
    }

    /// Prenex normal form.  Returns the quantifier prefix (outermost
    /// first) and a quantifier-free matrix; bound variables are renamed
    /// apart first.
    pub fn prenex(&self) -> (Vec<(Quant, Var, Sort)>, Formula<A>) {
        fn pull<A: AtomOps>(f: Formula<A>) -> (Vec<(Quant, Var, Sort)>, Formula<A>) {
            match f {
                Formula::Not(g) => {
                    let (mut pre, m) = pull(*g);
                    for q in pre.iter_mut() {
                        q.0 = match q.0 {
                            Quant::Exists => Quant::Forall,
                            Quant::Forall => Quant::Exists,
                        };
                    }
                    (pre, Formula::not(m))
                }
                Formula::And(gs) => {
                    let mut pre = Vec::new();
                    let mut ms = Vec::new();
                    for g in gs {
                        let (p, m) = pull(g);
                        pre.extend(p);
                        ms.push(m);
                    }
                    (pre, Formula::and(ms))
                }
                Formula::Or(gs) => {
                    let mut pre = Vec::new();
                    let mut ms = Vec::new();
                    for g in gs {
                        let (p, m) = pull(g);
                        pre.extend(p);
                        ms.push(m);
                    }
                    (pre, Formula::or(ms))
                }
                Formula::Quantified(q, x, s, g) => {
                    let (mut pre, m) = pull(*g);
                    pre.insert(0, (q, x, s));
                    (pre, m)
                }
                leaf => (Vec::new(), leaf),
            }
        }
        pull(self.rename_bound_apart())
    }

    /// Disjunctive normal form of a quantifier-free formula.  Conjuncts
    /// containing the undefined literal are dropped, which is sound
    /// exactly when the input is well-defined (the branches dropped can
    /// never be the deciding ones).
    pub fn dnf(&self) -> Vec<Vec<Lit<A>>> {
        // Literals are interned as integers (atom id doubled, low bit =
        // sign) so that conjuncts are sorted id sets with cheap
        // equality, complement and absorption checks; the distribution
        // step would otherwise blow up on formulas with much sharing.
        struct Interner<A> {
            atoms: Vec<A>,
            ids: HashMap<String, u32>,
        }
        impl<A: AtomOps> Interner<A> {
            fn lit(&mut self, pos: bool, a: &A) -> u32 {
                let key = format!("{a:?}");
                let id = match self.ids.get(&key) {
                    Some(&id) => id,
                    None => {
                        let id = self.atoms.len() as u32;
                        self.atoms.push(a.clone());
                        self.ids.insert(key, id);
                        id
                    }
                };
                id << 1 | u32::from(pos)
            }
        }
        // a conjunct is a sorted literal-id set; None is the conjunct
        // poisoned by Undef
        type Conj = Option<Vec<u32>>;
        fn insert_lit(c: &mut Vec<u32>, l: u32) -> bool {
            match c.binary_search(&l) {
                Ok(_) => true,
                Err(i) => {
                    if c.binary_search(&(l ^ 1)).is_ok() {
                        return false; // contradictory
                    }
                    c.insert(i, l);
                    true
                }
            }
        }
        fn push_conj(out: &mut Vec<Conj>, seen: &mut BTreeSet<Vec<u32>>, c: Conj) {
            match c {
                Some(c) => {
                    if seen.insert(c.clone()) {
                        out.push(Some(c));
                    }
                }
                None => {
                    if out.iter().all(|x| x.is_some()) {
                        out.push(None);
                    }
                }
            }
        }
        fn go<A: AtomOps>(f: &Formula<A>, int: &mut Interner<A>) -> Vec<Conj> {
            match f {
                Formula::True => vec![Some(Vec::new())],
                Formula::False => vec![],
                Formula::Undef => vec![None],
                Formula::Atom(a) => vec![Some(vec![int.lit(true, a)])],
                Formula::Not(g) => match g.as_ref() {
                    Formula::Atom(a) => vec![Some(vec![int.lit(false, a)])],
                    Formula::Undef => vec![None],
                    _ => panic!("dnf: input not in negation normal form"),
                },
                Formula::And(gs) => {
                    let mut acc: Vec<Conj> = vec![Some(Vec::new())];
                    for g in gs {
                        let branch = go(g, int);
                        let mut next: Vec<Conj> = Vec::new();
                        let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
                        for a in &acc {
                            if let Some(x) = a {
                                // absorption: a conjunct containing one of
                                // the branches passes unchanged
                                let absorbed = branch.iter().any(|b| match b {
                                    Some(y) => {
                                        y.iter().all(|l| x.binary_search(l).is_ok())
                                    }
                                    None => false,
                                });
                                if absorbed {
                                    push_conj(&mut next, &mut seen, a.clone());
                                    continue;
                                }
                            }
                            'pair: for b in &branch {
                                match (a, b) {
                                    (Some(x), Some(y)) => {
                                        let mut c = x.clone();
                                        for &l in y {
                                            if !insert_lit(&mut c, l) {
                                                continue 'pair; // contradictory: False
                                            }
                                        }
                                        push_conj(&mut next, &mut seen, Some(c));
                                    }
                                    _ => push_conj(&mut next, &mut seen, None),
                                }
                            }
                        }
                        acc = next;
                        if acc.len() > 2000 {
                            eprintln!("[dnf] acc={}", acc.len());
                        }
                    }
                    acc
                }
                Formula::Or(gs) => {
                    let mut out = Vec::new();
                    let mut seen = BTreeSet::new();
                    for g in gs {
                        for c in go(g, int) {
                            push_conj(&mut out, &mut seen, c);
                        }
                    }
                    out
                }
                Formula::Quantified(..) => panic!("dnf: input not quantifier-free"),
            }
        }
        let mut int = Interner {
            atoms: Vec::new(),
            ids: HashMap::new(),
        };
        let mut conjs: Vec<Vec<u32>> = go(&self.nnf(), &mut int).into_iter().flatten().collect();
        // subsumption: a conjunct implied by a shorter one is redundant
        conjs.sort_by_key(|c| c.len());
        let mut kept: Vec<Vec<u32>> = Vec::new();
        'cand: for c in conjs {
            for k in &kept {
                if k.iter().all(|l| c.binary_search(l).is_ok()) {
                    continue 'cand;
                }
            }
            kept.push(c);
        }
        kept.into_iter()
            .map(|c| {
                c.into_iter()
                    .map(|l| Lit {
                        pos: l & 1 == 1,
                        atom: int.atoms[(l >> 1) as usize].clone(),
                    })
                    .collect()
            })
            .collect()
    }

    /// Well-defined DNF: DNF with every conjunct closed under the domain
    /// guards of its literals.  Precondition: the input as a whole is
    /// well-defined; the undefined branches of the underlying rewrite
    /// are dropped.
    pub fn to_welldefined_dnf(&self) -> Vec<Vec<Lit<A>>> {
        let mut out = Vec::new();
        'conj: for mut conj in self.dnf() {
            let mut guards: Vec<A> = Vec::new();
            for l in &conj {
                for g in l.atom.guards() {
                    if !guards.contains(&g) {
                        guards.push(g);
                    }
                }
            }
            for g in guards {
                if conj.iter().any(|l| !l.pos && l.atom == g) {
                    continue 'conj; // guard contradicted: undefined branch
                }
                if !conj.iter().any(|l| l.pos && l.atom == g) {
                    conj.push(Lit {
                        pos: true,
                        atom: g,
                    });
                }
            }
            out.push(conj);
        }
        out
    }

    pub fn map_atoms<B: AtomOps>(&self, f: &mut impl FnMut(&A) -> Formula<B>) -> Formula<B> {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Undef => Formula::Undef,
            Formula::Atom(a) => f(a),
            Formula::Not(g) => Formula::not(g.map_atoms(f)),
            Formula::And(gs) => Formula::and(gs.iter().map(|g| g.map_atoms(f)).collect()),
            Formula::Or(gs) => Formula::or(gs.iter().map(|g| g.map_atoms(f)).collect()),
            Formula::Quantified(q, x, s, g) => {
                Formula::Quantified(*q, x.clone(), *s, Box::new(g.map_atoms(f)))
            }
        }
    }

    pub fn atoms(&self) -> Vec<A> {
        let mut out = Vec::new();
        fn go<A: Clone + PartialEq>(f: &Formula<A>, out: &mut Vec<A>) {
            match f {
                Formula::Atom(a) => {
                    if !out.contains(a) {
                        out.push(a.clone());
                    }
                }
                Formula::Not(g) | Formula::Quantified(_, _, _, g) => go(g, out),
                Formula::And(gs) | Formula::Or(gs) => {
                    for g in gs {
                        go(g, out);
                    }
                }
                _ => {}
            }
        }
        go(self, &mut out);
        out
    }
}

pub fn conj_to_formula<A: AtomOps>(conj: &[Lit<A>]) -> Formula<A> {
    Formula::and(conj.iter().map(|l| l.to_formula()).collect())
}

pub fn dnf_to_formula<A: AtomOps>(dnf: &[Vec<Lit<A>>]) -> Formula<A> {
    Formula::or(dnf.iter().map(|c| conj_to_formula(c)).collect())
}

/// Domain description of a partial function symbol: the guard that must
/// hold of the arguments for an application to be defined.
#[derive(Clone, Debug)]
pub struct DomainDescription<A> {
    pub symbol: String,
    pub params: Vec<Var>,
    pub guard: Vec<A>,
}

/// Domain formula of a single literal: conjunction of the guard
/// instances over all partial-function subterms (empty ⇒ `true`).
pub fn domain_formula<A: AtomOps>(lit: &Lit<A>) -> Formula<A> {
    Formula::and(lit.atom.guards().into_iter().map(Formula::Atom).collect())
}

/// Three-valued evaluation interface: how atoms evaluate under a
/// valuation and what finite range each quantifier sort runs over.
pub trait Interp3<A> {
    type Val: Clone;
    fn atom(&self, a: &A, env: &HashMap<Var, Self::Val>) -> Bool3;
    fn range(&self, sort: Sort) -> Vec<Self::Val>;
}

/// Strong-Kleene evaluation with quantifiers as regular (best)
/// extensions over the interface's finite ranges.
pub fn eval3<A: AtomOps, I: Interp3<A>>(
    f: &Formula<A>,
    env: &HashMap<Var, I::Val>,
    it: &I,
) -> Bool3 {
    match f {
        Formula::True => Bool3::T,
        Formula::False => Bool3::F,
        Formula::Undef => Bool3::U,
        Formula::Atom(a) => it.atom(a, env),
        Formula::Not(g) => eval3(g, env, it).not(),
        Formula::And(gs) => gs
            .iter()
            .map(|g| eval3(g, env, it))
            .fold(Bool3::T, Bool3::and),
        Formula::Or(gs) => gs
            .iter()
            .map(|g| eval3(g, env, it))
            .fold(Bool3::F, Bool3::or),
        Formula::Quantified(q, x, s, g) => {
            let mut env = env.clone();
            let mut acc = match q {
                Quant::Exists => Bool3::F,
                Quant::Forall => Bool3::T,
            };
            for v in it.range(*s) {
                env.insert(x.clone(), v);
                let r = eval3(g, &env, it);
                acc = match q {
                    Quant::Exists => acc.or(r),
                    Quant::Forall => acc.and(r),
                };
            }
            acc
        }
    }
}

/// Per-theory innermost-∃ eliminator plugged into [`qe_drive`].
pub trait ExistsElim<A: AtomOps> {
    fn eliminate_exists(
        &self,
        x: &Var,
        sort: Sort,
        matrix: Formula<A>,
    ) -> anyhow::Result<Formula<A>>;
}

/// Generic quantifier-elimination driver: prenex, then eliminate the
/// innermost quantifier repeatedly, handling ∀ by double negation.
pub fn qe_drive<A: AtomOps>(
    f: &Formula<A>,
    elim: &impl ExistsElim<A>,
) -> anyhow::Result<Formula<A>> {
    let (prefix, mut m) = f.prenex();
    for (q, x, s) in prefix.into_iter().rev() {
        m = match q {
            Quant::Exists => elim.eliminate_exists(&x, s, m)?,
            Quant::Forall => {
                Formula::not(elim.eliminate_exists(&x, s, Formula::not(m))?)
            }
        };
        m = m.simplify();
        debug_assert!(m.is_quantifier_free());
    }
    Ok(m)
}

/// Remove `(U ∧ φ₀)`-shaped disjuncts under a quantifier prefix.  Sound
/// when the quantified formula as a whole is well-defined.
pub fn drop_undef_under_quantifiers<A: AtomOps>(
    prefix: &[(Quant, Var, Sort)],
    matrix: &Formula<A>,
) -> Formula<A> {
    fn contains_undef<A>(f: &Formula<A>) -> bool {
        match f {
            Formula::Undef => true,
            Formula::Not(g) => contains_undef(g),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().any(contains_undef),
            Formula::Quantified(_, _, _, g) => contains_undef(g),
            _ => false,
        }
    }
    let cleaned = match matrix {
        Formula::Or(gs) => {
            Formula::or(gs.iter().filter(|g| !contains_undef(g)).cloned().collect())
        }
        Formula::And(gs) if gs.iter().any(|g| matches!(g, Formula::Undef)) => Formula::False,
        other => other.clone(),
    };
    let mut out = cleaned;
    for (q, x, s) in prefix.iter().rev() {
        out = Formula::Quantified(*q, x.clone(), *s, Box::new(out));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct P(&'static str);
    impl AtomOps for P {
        fn for_each_var(&self, _f: &mut dyn FnMut(&Var)) {}
        fn rename(&self, _m: &HashMap<Var, Var>) -> Self {
            self.clone()
        }
    }

    #[test]
    fn kleene_tables() {
        use Bool3::*;
        // exhaustive over all 3x3 combinations: De Morgan and double negation
        for a in [T, U, F] {
            for b in [T, U, F] {
                assert_eq!(a.and(b).not(), a.not().or(b.not()));
                assert_eq!(a.or(b).not(), a.not().and(b.not()));
            }
            assert_eq!(a.not().not(), a);
        }
        assert_eq!(U.and(F), F);
        assert_eq!(U.or(T), T);
        assert_eq!(U.not(), U);
    }

    #[test]
    fn prenex_basic() {
        let f: Formula<P> = Formula::and(vec![
            Formula::exists("x", Sort::Term, Formula::Atom(P("p"))),
            Formula::forall("y", Sort::Term, Formula::Atom(P("q"))),
        ]);
        let (pre, m) = f.prenex();
        assert_eq!(pre.len(), 2);
        assert_eq!(pre[0].0, Quant::Exists);
        assert_eq!(pre[1].0, Quant::Forall);
        assert!(m.is_quantifier_free());

        let g: Formula<P> =
            Formula::not(Formula::exists("x", Sort::Term, Formula::Atom(P("p"))));
        let (pre, m) = g.prenex();
        assert_eq!(pre[0].0, Quant::Forall);
        assert_eq!(m, Formula::not(Formula::Atom(P("p"))));
    }

    #[test]
    fn dnf_drops_contradictions() {
        let f: Formula<P> = Formula::and(vec![
            Formula::Atom(P("p")),
            Formula::not(Formula::Atom(P("p"))),
        ]);
        assert!(f.dnf().is_empty());
    }

    #[test]
    fn undef_branches_dropped() {
        let matrix: Formula<P> = Formula::Or(vec![
            Formula::And(vec![Formula::Undef, Formula::Atom(P("p"))]),
            Formula::Atom(P("q")),
        ]);
        let out = drop_undef_under_quantifiers(&[], &matrix);
        assert_eq!(out, Formula::Atom(P("q")));
    }
}
