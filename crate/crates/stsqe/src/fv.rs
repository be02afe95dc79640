//! Quantifier elimination for finite direct powers of a finite
//! structure.  Atoms are cardinality constraints |φ| ⋈ k on the
//! index-set value of an inner formula φ; tuple quantifiers are
//! eliminated by the partition construction (cells of the labeled inner
//! subformulas, with the index-set layer handed to the set-algebra
//! eliminator), after which a closed sentence is decided by evaluating
//! the remaining closed inner formulas on the base structure.

use crate::ba::{ba_qe, normalize_literals, BaAtom, SetTm};
use crate::lang::{Cmp, Inner, InnerAtom, Tm};
use crate::logic::{
    conj_to_formula, fresh, AtomOps, Formula, Lit, Quant, Sort, Var,
};
use crate::model::{eval_fo, FiniteStructure, FoAtom, FoFormula};
use anyhow::{bail, ensure, Context, Result};
use std::collections::HashMap;

/// |expr| ⋈ k over the index set: `expr` denotes the set of indices
/// where the inner formula holds.
#[derive(Clone, Debug, PartialEq)]
pub struct FvAtom {
    pub expr: Inner,
    pub cmp: Cmp,
    pub k: u64,
}

impl AtomOps for FvAtom {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        self.expr.for_each_free_var(f);
    }
    fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        FvAtom {
            expr: self.expr.rename(map),
            cmp: self.cmp,
            k: self.k,
        }
    }
}

pub type FvFormula = Formula<FvAtom>;

/// r(t̄) holds at every index, i.e. |¬ᴵ r(t̄)| = 0.
pub fn lifted(rel: &str, args: Vec<Var>) -> FvFormula {
    Formula::Atom(FvAtom {
        expr: Formula::not(Formula::Atom(InnerAtom::Rel(
            rel.to_string(),
            args.into_iter().map(Tm::Var).collect(),
        ))),
        cmp: Cmp::Eq,
        k: 0,
    })
}

/// The 2ⁿ sign-complete conjunctions over the labeled inner formulas,
/// in lexicographic order of the sign vector; bit i of the cell index
/// set means label i occurs positively.
pub fn partition_cells(labels: &[Inner]) -> Vec<Inner> {
    let n = labels.len();
    (0..1usize << n)
        .map(|j| {
            Formula::and(
                labels
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        if j & (1 << i) != 0 {
                            a.clone()
                        } else {
                            Formula::not(a.clone())
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// ¬(|e| ⋈ k) as a positive disjunction.
fn neg_card(a: &FvAtom) -> FvFormula {
    let at = |cmp, k| {
        Formula::Atom(FvAtom {
            expr: a.expr.clone(),
            cmp,
            k,
        })
    };
    match a.cmp {
        Cmp::Eq => {
            let mut ds = vec![at(Cmp::Ge, a.k + 1)];
            ds.extend((0..a.k).map(|j| at(Cmp::Eq, j)));
            Formula::or(ds)
        }
        Cmp::Ge => Formula::or((0..a.k).map(|j| at(Cmp::Eq, j)).collect()),
    }
}

/// Replace negated cardinality atoms by positive ones; expects negation
/// normal form.
fn expand_negations(f: &FvFormula) -> FvFormula {
    match f {
        Formula::Not(g) => match &**g {
            Formula::Atom(a) => neg_card(a),
            _ => unreachable!("negation normal form"),
        },
        Formula::And(gs) => Formula::and(gs.iter().map(expand_negations).collect()),
        Formula::Or(gs) => Formula::or(gs.iter().map(expand_negations).collect()),
        other => other.clone(),
    }
}

fn settm_to_inner(t: &SetTm, defs: &HashMap<Var, Inner>) -> Inner {
    match t {
        SetTm::Var(v) => defs
            .get(v)
            .cloned()
            .expect("all set variables have inner definitions"),
        SetTm::Zero => Formula::False,
        SetTm::One => Formula::True,
        SetTm::Inter(a, b) => Formula::and(vec![
            settm_to_inner(a, defs),
            settm_to_inner(b, defs),
        ]),
        SetTm::Union(a, b) => Formula::or(vec![
            settm_to_inner(a, defs),
            settm_to_inner(b, defs),
        ]),
        SetTm::Compl(a) => Formula::not(settm_to_inner(a, defs)),
    }
}

/// Eliminate ∃t from a tuple-quantifier-free matrix.
///
/// The matrix is put in disjunctive normal form and the partition
/// construction runs once per conjunct with just that conjunct's atoms:
/// the |·|=0 atoms on t are first merged into one (⋀|eᵢ|=0 ⟺ |⋁eᵢ|=0),
/// the 2^m cells over the remaining labeled inner formulas become set
/// variables B_j constrained to partition the index set with
/// B_j ⊆ D_j ≐ ∃ᴵt.cell_j, the cells under the merged zero label are
/// dropped outright, and the set-algebra eliminator removes the rest.
pub fn eliminate_tuple_quantifier(t: &Var, matrix: &FvFormula) -> Result<FvFormula> {
    let matrix = expand_negations(&matrix.nnf());
    let mut disjuncts: Vec<FvFormula> = Vec::new();
    for conj in matrix.dnf() {
        let mut keeps: Vec<Lit<FvAtom>> = Vec::new();
        let mut zeros: Vec<Inner> = Vec::new();
        let mut pos: Vec<FvAtom> = Vec::new();
        for l in conj {
            debug_assert!(l.pos, "negations were expanded away");
            if l.atom.cmp == Cmp::Ge && l.atom.k == 0 {
                continue; // trivially true
            }
            if !l.atom.expr.free_vars().contains(t) {
                if !keeps.contains(&l) {
                    keeps.push(l);
                }
            } else if l.atom.cmp == Cmp::Eq && l.atom.k == 0 {
                if !zeros.contains(&l.atom.expr) {
                    zeros.push(l.atom.expr);
                }
            } else if !pos.contains(&l.atom) {
                pos.push(l.atom);
            }
        }
        let mut labels: Vec<Inner> = Vec::new();
        let zero_label = !zeros.is_empty();
        if zero_label {
            labels.push(Formula::or(zeros).simplify());
        }
        for a in &pos {
            if !labels.contains(&a.expr) {
                labels.push(a.expr.clone());
            }
        }
        if labels.is_empty() {
            // t does not occur in this conjunct
            disjuncts.push(conj_to_formula(&keeps));
            continue;
        }
        let m = labels.len();
        if m >= 3 {
            eprintln!("[fv] m={m} labels={labels:?}");
        }
        ensure!(
            m <= 8,
            "tuple-quantifier elimination: a conjunct constrains {m} distinct \
             inner formulas on the quantified variable; the 2^{m} partition \
             cells are too many"
        );
        // cells whose sign on the merged zero label is positive are
        // forced empty and never introduced
        let cells: Vec<usize> = (0..1usize << m)
            .filter(|j| !(zero_label && j & 1 != 0))
            .collect();
        ensure!(
            cells.len() <= 8,
            "tuple-quantifier elimination: {} partition cells remain after \
             discarding the empty ones",
            cells.len()
        );
        let all_cells = partition_cells(&labels);
        let b_vars: HashMap<usize, Var> =
            cells.iter().map(|&j| (j, fresh("B"))).collect();
        let d_vars: HashMap<usize, Var> =
            cells.iter().map(|&j| (j, fresh("D"))).collect();
        // D_j ≐ ∃ᴵt. cell_j
        let d_defs: HashMap<Var, Inner> = cells
            .iter()
            .map(|&j| {
                (
                    d_vars[&j].clone(),
                    Formula::exists(t.clone(), Sort::Term, all_cells[j].clone()),
                )
            })
            .collect();
        let union_of = |js: &dyn Fn(usize) -> bool| {
            cells.iter().filter(|&&j| js(j)).fold(SetTm::Zero, |acc, j| {
                SetTm::union(acc, SetTm::Var(b_vars[j].clone()))
            })
        };

        let mut block: Vec<Lit<BaAtom>> = Vec::new();
        let lit = |atom| Lit { pos: true, atom };
        // the conjunct's constraints, each label as the union of its
        // positive cells
        for a in &pos {
            let i = labels.iter().position(|l| l == &a.expr).unwrap();
            block.push(lit(BaAtom::Card(union_of(&|j| j & (1 << i) != 0), a.cmp, a.k)));
        }
        // partition predicate and availability
        block.push(lit(BaAtom::SetEq(union_of(&|_| true), SetTm::One)));
        for (a, &ja) in cells.iter().enumerate() {
            for &jb in &cells[a + 1..] {
                block.push(lit(BaAtom::SetEq(
                    SetTm::inter(
                        SetTm::Var(b_vars[&ja].clone()),
                        SetTm::Var(b_vars[&jb].clone()),
                    ),
                    SetTm::Zero,
                )));
            }
        }
        for &j in &cells {
            block.push(lit(BaAtom::Subset(
                SetTm::Var(b_vars[&j].clone()),
                SetTm::Var(d_vars[&j].clone()),
            )));
        }
        let mut f = conj_to_formula(&block);
        for &j in cells.iter().rev() {
            f = Formula::exists(b_vars[&j].clone(), Sort::Term, f);
        }
        let out = ba_qe(&f)?;
        // back to inner-formula atoms, folding each conjunct's |·|=0
        // atoms into one so the atom count stays small across rounds
        for conj in normalize_literals(&out).dnf() {
            let mut zero_union = SetTm::Zero;
            let mut lits: Vec<Lit<FvAtom>> = keeps.clone();
            let mut saw_zero = false;
            for l in conj {
                debug_assert!(l.pos);
                let BaAtom::Card(tm, c, k) = l.atom else {
                    unreachable!("normalized output")
                };
                if c == Cmp::Eq && k == 0 {
                    zero_union = SetTm::union(zero_union, tm);
                    saw_zero = true;
                } else {
                    lits.push(Lit {
                        pos: true,
                        atom: FvAtom {
                            expr: settm_to_inner(&tm, &d_defs).simplify(),
                            cmp: c,
                            k,
                        },
                    });
                }
            }
            if saw_zero {
                lits.push(Lit {
                    pos: true,
                    atom: FvAtom {
                        expr: settm_to_inner(&zero_union, &d_defs).simplify(),
                        cmp: Cmp::Eq,
                        k: 0,
                    },
                });
            }
            disjuncts.push(conj_to_formula(&lits));
        }
    }
    Ok(Formula::or(disjuncts).simplify())
}

/// Eliminate every tuple quantifier, leaving a propositional
/// combination of cardinality atoms (on closed inner formulas when the
/// input is a sentence).
pub fn fv_reduce(f: &FvFormula) -> Result<FvFormula> {
    let (prefix, mut m) = f.prenex();
    for (q, x, _) in prefix.into_iter().rev() {
        m = match q {
            Quant::Exists => eliminate_tuple_quantifier(&x, &m)?,
            Quant::Forall => Formula::not(eliminate_tuple_quantifier(
                &x,
                &Formula::not(m),
            )?),
        };
        m = m.simplify();
    }
    Ok(m)
}

/// Translate a closed inner formula to a first-order formula over the
/// base language.
pub fn inner_to_fo(f: &Inner) -> Result<FoFormula> {
    let mut err = None;
    let out = f.map_atoms(&mut |a: &InnerAtom| {
        let InnerAtom::Rel(r, ts) = a;
        let mut args = Vec::new();
        for t in ts {
            match t {
                Tm::Var(v) => args.push(v.clone()),
                other => {
                    err = Some(format!("non-variable argument {other:?} in inner formula"));
                    args.push(String::new());
                }
            }
        }
        Formula::Atom(FoAtom {
            rel: r.clone(),
            args,
        })
    });
    match err {
        Some(e) => bail!("{e}"),
        None => Ok(out),
    }
}

/// Decide a closed sentence over the n-fold power of M by reduction to
/// cardinality atoms on closed inner formulas: each evaluates to the
/// full index set or the empty set according to its truth on M.
pub fn decide_power(m: &FiniteStructure, n: usize, f: &FvFormula) -> Result<bool> {
    ensure!(n >= 1, "power exponent must be at least 1");
    let free = f.free_vars();
    ensure!(free.is_empty(), "sentence expected; free variables: {free:?}");
    let reduced = fv_reduce(f)?;
    eval_closed(m, n, &reduced)
}

fn eval_closed(m: &FiniteStructure, n: usize, f: &FvFormula) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Undef => bail!("undefined value in a total language"),
        Formula::Not(g) => !eval_closed(m, n, g)?,
        Formula::And(gs) => {
            let mut acc = true;
            for g in gs {
                acc = acc && eval_closed(m, n, g)?;
            }
            acc
        }
        Formula::Or(gs) => {
            let mut acc = false;
            for g in gs {
                acc = acc || eval_closed(m, n, g)?;
            }
            acc
        }
        Formula::Quantified(..) => bail!("tuple quantifier survived reduction"),
        Formula::Atom(a) => {
            let fo = inner_to_fo(&a.expr)?;
            let size = if eval_fo(m, &fo, &HashMap::new())? {
                n as u64
            } else {
                0
            };
            match a.cmp {
                Cmp::Eq => size == a.k,
                Cmp::Ge => size >= a.k,
            }
        }
    })
}

// ---------------------------------------------------------------------
// Direct semantics over an explicit finite power (reference evaluator)
// ---------------------------------------------------------------------

/// Evaluate a formula under the direct product semantics: tuple
/// variables range over Cⁿ, index-set expressions over subsets of
/// {1..n}.  Used to cross-check the symbolic elimination.
pub fn eval_fv(
    m: &FiniteStructure,
    n: usize,
    f: &FvFormula,
    env: &HashMap<Var, Vec<usize>>,
) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Undef => bail!("undefined value in a total language"),
        Formula::Not(g) => !eval_fv(m, n, g, env)?,
        Formula::And(gs) => {
            let mut acc = true;
            for g in gs {
                acc = acc && eval_fv(m, n, g, env)?;
            }
            acc
        }
        Formula::Or(gs) => {
            let mut acc = false;
            for g in gs {
                acc = acc || eval_fv(m, n, g, env)?;
            }
            acc
        }
        Formula::Quantified(q, x, _, g) => {
            let mut any = false;
            let mut all = true;
            for tuple in all_tuples(m.size(), n) {
                let mut env2 = env.clone();
                env2.insert(x.clone(), tuple);
                let r = eval_fv(m, n, g, &env2)?;
                any = any || r;
                all = all && r;
            }
            match q {
                Quant::Exists => any,
                Quant::Forall => all,
            }
        }
        Formula::Atom(a) => {
            let mut size = 0u64;
            for i in 0..n {
                if inner_at(m, n, &a.expr, env, &mut HashMap::new(), i)? {
                    size += 1;
                }
            }
            match a.cmp {
                Cmp::Eq => size == a.k,
                Cmp::Ge => size >= a.k,
            }
        }
    })
}

fn all_tuples(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..k).map(move |c| {
                    let mut t2 = t.clone();
                    t2.push(c);
                    t2
                })
            })
            .collect();
    }
    out
}

/// Membership of index i in the index set denoted by an inner formula.
/// Inner quantifiers act pointwise, so at index i they range over the
/// base carrier.
fn inner_at(
    m: &FiniteStructure,
    n: usize,
    f: &Inner,
    env: &HashMap<Var, Vec<usize>>,
    ienv: &mut HashMap<Var, usize>,
    i: usize,
) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Undef => bail!("undefined value in a total language"),
        Formula::Not(g) => !inner_at(m, n, g, env, ienv, i)?,
        Formula::And(gs) => {
            let mut acc = true;
            for g in gs {
                acc = acc && inner_at(m, n, g, env, ienv, i)?;
            }
            acc
        }
        Formula::Or(gs) => {
            let mut acc = false;
            for g in gs {
                acc = acc || inner_at(m, n, g, env, ienv, i)?;
            }
            acc
        }
        Formula::Quantified(q, x, _, g) => {
            let old = ienv.get(x).copied();
            let mut any = false;
            let mut all = true;
            for c in 0..m.size() {
                ienv.insert(x.clone(), c);
                let r = inner_at(m, n, g, env, ienv, i)?;
                any = any || r;
                all = all && r;
            }
            match old {
                Some(v) => {
                    ienv.insert(x.clone(), v);
                }
                None => {
                    ienv.remove(x);
                }
            }
            match q {
                Quant::Exists => any,
                Quant::Forall => all,
            }
        }
        Formula::Atom(InnerAtom::Rel(r, ts)) => {
            let mut tuple = Vec::new();
            for t in ts {
                let Tm::Var(v) = t else {
                    bail!("non-variable argument in inner formula")
                };
                let e = match ienv.get(v) {
                    Some(&c) => c,
                    None => *env
                        .get(v)
                        .with_context(|| format!("unbound tuple variable {v}"))?
                        .get(i)
                        .expect("tuple length"),
                };
                tuple.push(e);
            }
            m.holds(r, &tuple)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::chain2;

    fn rel(r: &str, args: &[&str]) -> Inner {
        Formula::Atom(InnerAtom::Rel(
            r.into(),
            args.iter().map(|v| Tm::Var(v.to_string())).collect(),
        ))
    }

    #[test]
    fn cells_count_and_partition() {
        let labels = vec![rel("r", &["t", "t1"])];
        let cells = partition_cells(&labels);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0], Formula::not(labels[0].clone()));
        assert_eq!(cells[1], labels[0].clone());

        let labels = vec![
            rel("leq", &["t", "t1"]),
            rel("leq", &["t1", "t"]),
            rel("leq", &["t2", "t"]),
        ];
        let cells = partition_cells(&labels);
        assert_eq!(cells.len(), 8);
        // pairwise inconsistent, jointly exhaustive: at every index and
        // valuation exactly one cell holds
        let m = chain2();
        let n = 2;
        for t in all_tuples(2, n) {
            for t1 in all_tuples(2, n) {
                for t2 in all_tuples(2, n) {
                    let env: HashMap<Var, Vec<usize>> = HashMap::from([
                        ("t".to_string(), t.clone()),
                        ("t1".to_string(), t1.clone()),
                        ("t2".to_string(), t2.clone()),
                    ]);
                    for i in 0..n {
                        let holding = cells
                            .iter()
                            .filter(|c| {
                                inner_at(&m, n, c, &env, &mut HashMap::new(), i).unwrap()
                            })
                            .count();
                        assert_eq!(holding, 1);
                    }
                }
            }
        }
    }

    /// The worked elimination: ∃t. |¬r(t,t₁)|=0 ∧ |¬r(t₁,t)|=0 ∧
    /// |¬r(t₂,t)|≥1, checked semantically against both the direct
    /// evaluation of the input and the stated result |D₄|≥1 ∧
    /// |¬D₀ ∧ ¬D₄|=0.
    #[test]
    fn worked_example() {
        let atom = |e: Inner, cmp, k| Formula::Atom(FvAtom { expr: e, cmp, k });
        let input: FvFormula = Formula::exists(
            "t",
            Sort::Term,
            Formula::and(vec![
                atom(Formula::not(rel("leq", &["t", "t1"])), Cmp::Eq, 0),
                atom(Formula::not(rel("leq", &["t1", "t"])), Cmp::Eq, 0),
                atom(Formula::not(rel("leq", &["t2", "t"])), Cmp::Ge, 1),
            ]),
        );
        let (prefix, matrix) = input.prenex();
        assert_eq!(prefix.len(), 1);
        let out = eliminate_tuple_quantifier(&prefix[0].1, &matrix).unwrap();
        assert!(out.is_quantifier_free());

        let cell = |s1: bool, s2: bool, s3: bool| {
            let sgn = |b, f: Inner| if b { f } else { Formula::not(f) };
            Formula::exists(
                "t",
                Sort::Term,
                Formula::and(vec![
                    sgn(s1, rel("leq", &["t", "t1"])),
                    sgn(s2, rel("leq", &["t1", "t"])),
                    sgn(s3, rel("leq", &["t2", "t"])),
                ]),
            )
        };
        // D₀ has all labels positive; D₄ flips the third
        let d0 = cell(true, true, true);
        let d4 = cell(true, true, false);
        let expected = Formula::and(vec![
            atom(d4.clone(), Cmp::Ge, 1),
            atom(
                Formula::and(vec![Formula::not(d0), Formula::not(d4)]),
                Cmp::Eq,
                0,
            ),
        ]);

        let m = chain2();
        for n in 1..=3 {
            for t1 in all_tuples(2, n) {
                for t2 in all_tuples(2, n) {
                    let env: HashMap<Var, Vec<usize>> = HashMap::from([
                        ("t1".to_string(), t1.clone()),
                        ("t2".to_string(), t2.clone()),
                    ]);
                    let direct = eval_fv(&m, n, &input, &env).unwrap();
                    let elim = eval_fv(&m, n, &out, &env).unwrap();
                    let expct = eval_fv(&m, n, &expected, &env).unwrap();
                    assert_eq!(direct, elim, "elimination wrong at n={n} {env:?}");
                    assert_eq!(direct, expct, "stated result wrong at n={n} {env:?}");
                }
            }
        }
    }

    #[test]
    fn decide_power_basics() {
        let m = chain2();
        // ∀t. eq(t,t) ≐ ⊤ᴵ
        let f = Formula::forall(
            "t",
            Sort::Term,
            lifted("eqc", vec!["t".into(), "t".into()]),
        );
        for n in 1..=3 {
            assert!(decide_power(&m, n, &f).unwrap());
        }
        // ∃t ∀u. leq(t,u) ≐ ⊤ᴵ: witnessed by the constant-a tuple
        let g = Formula::exists(
            "t",
            Sort::Term,
            Formula::forall(
                "u",
                Sort::Term,
                lifted("leq", vec!["t".into(), "u".into()]),
            ),
        );
        assert!(decide_power(&m, 2, &g).unwrap());
        // ∃t ∀u. leq(u,t) ∧ ¬eq(u,t) is false (t itself refutes)
        let h = Formula::exists(
            "t",
            Sort::Term,
            Formula::forall(
                "u",
                Sort::Term,
                Formula::and(vec![
                    lifted("leq", vec!["u".into(), "t".into()]),
                    Formula::not(lifted("eqc", vec!["u".into(), "t".into()])),
                ]),
            ),
        );
        assert!(!decide_power(&m, 2, &h).unwrap());
    }

    fn rand_fv(rng: &mut impl rand::Rng, bound: &[Var], depth: usize) -> FvFormula {
        if depth == 0 && bound.is_empty() {
            return Formula::True;
        }
        let pick = if depth == 0 { 5 } else { rng.gen_range(0..6) };
        match pick {
            0 | 1 => {
                let v = format!("q{}", bound.len());
                let mut b2 = bound.to_vec();
                b2.push(v.clone());
                let body = rand_fv(rng, &b2, depth.saturating_sub(1));
                if pick == 0 {
                    Formula::exists(v, Sort::Term, body)
                } else {
                    Formula::forall(v, Sort::Term, body)
                }
            }
            2 => Formula::not(rand_fv(rng, bound, depth - 1)),
            3 => Formula::and(vec![
                rand_fv(rng, bound, depth - 1),
                rand_fv(rng, bound, depth - 1),
            ]),
            4 => Formula::or(vec![
                rand_fv(rng, bound, depth - 1),
                rand_fv(rng, bound, depth - 1),
            ]),
            _ => {
                if bound.is_empty() {
                    let v = "q0".to_string();
                    let body = rand_fv(rng, &[v.clone()], 0);
                    return Formula::exists(v, Sort::Term, body);
                }
                let x = bound[rng.gen_range(0..bound.len())].clone();
                let y = bound[rng.gen_range(0..bound.len())].clone();
                let rel = if rng.gen_bool(0.5) { "leq" } else { "eqc" };
                let inner = Formula::Atom(InnerAtom::Rel(
                    rel.into(),
                    vec![Tm::Var(x), Tm::Var(y)],
                ));
                let expr = if rng.gen_bool(0.5) {
                    Formula::not(inner)
                } else {
                    inner
                };
                let (cmp, k) = match rng.gen_range(0..4) {
                    0 => (Cmp::Eq, 0),
                    1 => (Cmp::Ge, 1),
                    2 => (Cmp::Eq, rng.gen_range(0..4)),
                    _ => (Cmp::Ge, rng.gen_range(0..4)),
                };
                Formula::Atom(FvAtom { expr, cmp, k })
            }
        }
    }

    /// The symbolic decision must agree with brute-force evaluation of
    /// the direct power.
    #[test]
    fn random_sentence_agreement() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = chain2();
        for case in 0..60 {
            let f = rand_fv(&mut rng, &[], 3);
            for n in 1..=3 {
                let symbolic = decide_power(&m, n, &f).unwrap();
                let direct = eval_fv(&m, n, &f, &HashMap::new()).unwrap();
                assert_eq!(symbolic, direct, "case {case}, n={n}: {f:?}");
            }
        }
    }

    #[test]
    fn no_tuple_vars_is_ba_layer() {
        let m = chain2();
        // |⊤ᴵ| over index size n: full set
        let f: FvFormula = Formula::Atom(FvAtom {
            expr: Formula::True,
            cmp: Cmp::Eq,
            k: 2,
        });
        assert!(decide_power(&m, 2, &f).unwrap());
        assert!(!decide_power(&m, 3, &f).unwrap());
        // a closed inner formula: ∀ᴵv. leq(v,v)
        let g: FvFormula = Formula::Atom(FvAtom {
            expr: Formula::forall("v", Sort::Term, rel("leq", &["v", "v"])),
            cmp: Cmp::Ge,
            k: 2,
        });
        assert!(decide_power(&m, 2, &g).unwrap());
        assert!(!decide_power(&m, 1, &g).unwrap());
    }
}
