//! Brute-force reference procedures used to cross-check the
//! eliminators: ground-term enumeration, bounded three-valued
//! evaluation with quantifiers ranging over a finite term universe,
//! randomized equivalence checking, shape enumeration, and a
//! subset-enumeration evaluator for set-algebra formulas.

use crate::ba::{BaAtom, BaFormula, SetTm};
use crate::lang::{Cmp, PAtom, PFormula, TermSignature, VarianceSignature, GS, GT};
use crate::logic::{Bool3, Formula, Quant, Var};
use crate::term::eval_ground;
use anyhow::{bail, ensure, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// All ground terms of height at most `max_height`, stratified so the
/// order is deterministic.
pub fn enum_terms(sig: &TermSignature, max_height: usize) -> Vec<GT> {
    let mut by_height: Vec<Vec<GT>> = vec![sig
        .constants()
        .map(|c| GT::C(c.to_string()))
        .collect()];
    for h in 1..=max_height {
        // a term of height exactly h has some argument of height h-1
        let lower: Vec<&GT> = by_height[..h - 1].iter().flatten().collect();
        let exact = &by_height[h - 1];
        let mut level = Vec::new();
        for (f, a) in sig.constructors() {
            if *a == 0 {
                continue;
            }
            let mut stack: Vec<Vec<GT>> = vec![vec![]];
            for _ in 0..*a {
                stack = stack
                    .into_iter()
                    .flat_map(|args| {
                        lower
                            .iter()
                            .map(|t| (*t).clone())
                            .chain(exact.iter().cloned())
                            .map(move |t| {
                                let mut a2 = args.clone();
                                a2.push(t);
                                a2
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect();
            }
            for args in stack {
                if args.iter().any(|t| t.height() == h - 1) {
                    level.push(GT::F(f.clone(), args));
                }
            }
        }
        by_height.push(level);
    }
    by_height.into_iter().flatten().collect()
}

/// All ground shapes with at most `max_leaves` leaves.
pub fn enum_shapes(sig: &VarianceSignature, max_leaves: usize) -> Vec<GS> {
    // exact[l] = shapes with exactly l leaves
    let mut exact: Vec<Vec<GS>> = vec![vec![], vec![GS::C]];
    loop {
        let l = exact.len();
        if l > max_leaves {
            break;
        }
        let mut level = Vec::new();
        for (f, vs) in sig.constructors() {
            let k = vs.len();
            // distribute l leaves over k children, each at least one
            let mut parts: Vec<Vec<usize>> = vec![vec![]];
            for i in 0..k {
                let left = k - i - 1;
                parts = parts
                    .into_iter()
                    .flat_map(|p| {
                        let used: usize = p.iter().sum();
                        (1..=l.saturating_sub(used + left))
                            .map(move |c| {
                                let mut p2 = p.clone();
                                p2.push(c);
                                p2
                            })
                            .collect::<Vec<_>>()
                    })
                    .collect();
            }
            for p in parts {
                if p.iter().sum::<usize>() != l {
                    continue;
                }
                let mut combos: Vec<Vec<GS>> = vec![vec![]];
                for &c in &p {
                    combos = combos
                        .into_iter()
                        .flat_map(|args| {
                            exact[c]
                                .iter()
                                .map(move |s| {
                                    let mut a2 = args.clone();
                                    a2.push(s.clone());
                                    a2
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect();
                }
                for args in combos {
                    level.push(GS::F(f.clone(), args));
                }
            }
        }
        exact.push(level);
    }
    exact.into_iter().flatten().collect()
}

/// Three-valued evaluation of a term-algebra formula with quantifiers
/// restricted to the ground terms of height at most `height`.
pub fn eval_term_bounded(
    f: &PFormula,
    sig: &TermSignature,
    height: usize,
    env: &BTreeMap<Var, GT>,
) -> Result<Bool3> {
    match f {
        Formula::Quantified(q, x, _, g) => {
            let mut acc = match q {
                Quant::Exists => Bool3::F,
                Quant::Forall => Bool3::T,
            };
            let mut env = env.clone();
            for t in enum_terms(sig, height) {
                env.insert(x.clone(), t);
                let r = eval_term_bounded(g, sig, height, &env)?;
                acc = match q {
                    Quant::Exists => acc.or(r),
                    Quant::Forall => acc.and(r),
                };
            }
            Ok(acc)
        }
        Formula::Not(g) => Ok(eval_term_bounded(g, sig, height, env)?.not()),
        Formula::And(gs) => {
            let mut acc = Bool3::T;
            for g in gs {
                acc = acc.and(eval_term_bounded(g, sig, height, env)?);
            }
            Ok(acc)
        }
        Formula::Or(gs) => {
            let mut acc = Bool3::F;
            for g in gs {
                acc = acc.or(eval_term_bounded(g, sig, height, env)?);
            }
            Ok(acc)
        }
        qf => eval_ground(qf, env),
    }
}

pub fn free_term_vars(f: &PFormula) -> Vec<Var> {
    let mut free = Vec::new();
    f.for_each_free_var(&mut |v| {
        if !free.contains(v) {
            free.push(v.clone());
        }
    });
    free
}

/// Check two term-algebra formulas agree over all ground valuations
/// from the height-bounded universe — exhaustively when the valuation
/// space is small, otherwise on `samples` seeded random draws.  Returns
/// a counterexample valuation if one exists.  `strict` compares all
/// three truth values; otherwise only truth is compared, which is the
/// right notion when one side has been rewritten to well-defined form.
pub fn ground_equiv(
    f: &PFormula,
    g: &PFormula,
    sig: &TermSignature,
    height: usize,
    samples: usize,
    seed: u64,
    strict: bool,
) -> Result<Option<BTreeMap<Var, GT>>> {
    let mut vars = free_term_vars(f);
    for v in free_term_vars(g) {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    let universe = enum_terms(sig, height);
    ensure!(!universe.is_empty(), "empty term universe");
    let total = universe.len().checked_pow(vars.len() as u32);
    let check = |env: &BTreeMap<Var, GT>| -> Result<bool> {
        let (a, b) = (
            eval_term_bounded(f, sig, height, env)?,
            eval_term_bounded(g, sig, height, env)?,
        );
        Ok(if strict {
            a == b
        } else {
            a.is_true() == b.is_true()
        })
    };
    match total {
        Some(t) if t <= 100_000 => {
            let mut idx = vec![0usize; vars.len()];
            loop {
                let env: BTreeMap<Var, GT> = vars
                    .iter()
                    .zip(&idx)
                    .map(|(v, &i)| (v.clone(), universe[i].clone()))
                    .collect();
                if !check(&env)? {
                    return Ok(Some(env));
                }
                // odometer increment
                let mut d = 0;
                loop {
                    if d == vars.len() {
                        return Ok(None);
                    }
                    idx[d] += 1;
                    if idx[d] < universe.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let env: BTreeMap<Var, GT> = vars
                    .iter()
                    .map(|v| {
                        (
                            v.clone(),
                            universe.choose(&mut rng).unwrap().clone(),
                        )
                    })
                    .collect();
                if !check(&env)? {
                    return Ok(Some(env));
                }
            }
            Ok(None)
        }
    }
}

/// Search the bounded universe for a valuation making the formula true.
pub fn bounded_witness(
    f: &PFormula,
    sig: &TermSignature,
    height: usize,
) -> Result<Option<BTreeMap<Var, GT>>> {
    let vars = free_term_vars(f);
    let universe = enum_terms(sig, height);
    let mut idx = vec![0usize; vars.len()];
    loop {
        let env: BTreeMap<Var, GT> = vars
            .iter()
            .zip(&idx)
            .map(|(v, &i)| (v.clone(), universe[i].clone()))
            .collect();
        if eval_term_bounded(f, sig, height, &env)?.is_true() {
            return Ok(Some(env));
        }
        let mut d = 0;
        loop {
            if d == vars.len() {
                return Ok(None);
            }
            idx[d] += 1;
            if idx[d] < universe.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

// ---------------------------------------------------------------------
// Set algebra by subset enumeration
// ---------------------------------------------------------------------

fn set_value(t: &SetTm, env: &BTreeMap<Var, u64>, full: u64) -> Result<u64> {
    Ok(match t {
        SetTm::Var(v) => *env
            .get(v)
            .ok_or_else(|| anyhow::anyhow!("unbound set variable {v}"))?,
        SetTm::Zero => 0,
        SetTm::One => full,
        SetTm::Inter(a, b) => set_value(a, env, full)? & set_value(b, env, full)?,
        SetTm::Union(a, b) => set_value(a, env, full)? | set_value(b, env, full)?,
        SetTm::Compl(a) => !set_value(a, env, full)? & full,
    })
}

/// Evaluate a set-algebra formula over a universe of `n` elements by
/// enumerating all subsets at each quantifier (sets as bitmasks).
pub fn eval_ba_brute(
    f: &BaFormula,
    n: u32,
    env: &BTreeMap<Var, u64>,
) -> Result<Bool3> {
    ensure!(n <= 16, "brute-force set universe capped at 16 elements");
    let full: u64 = if n == 64 { !0 } else { (1u64 << n) - 1 };
    Ok(match f {
        Formula::True => Bool3::T,
        Formula::False => Bool3::F,
        Formula::Undef => Bool3::U,
        Formula::Not(g) => eval_ba_brute(g, n, env)?.not(),
        Formula::And(gs) => {
            let mut acc = Bool3::T;
            for g in gs {
                acc = acc.and(eval_ba_brute(g, n, env)?);
            }
            acc
        }
        Formula::Or(gs) => {
            let mut acc = Bool3::F;
            for g in gs {
                acc = acc.or(eval_ba_brute(g, n, env)?);
            }
            acc
        }
        Formula::Quantified(q, x, _, g) => {
            let mut acc = match q {
                Quant::Exists => Bool3::F,
                Quant::Forall => Bool3::T,
            };
            let mut env = env.clone();
            for s in 0..=full {
                env.insert(x.clone(), s);
                let r = eval_ba_brute(g, n, &env)?;
                acc = match q {
                    Quant::Exists => acc.or(r),
                    Quant::Forall => acc.and(r),
                };
            }
            acc
        }
        Formula::Atom(a) => match a {
            BaAtom::Card(t, cmp, k) => {
                let c = set_value(t, env, full)?.count_ones() as u64;
                Bool3::from_bool(match cmp {
                    Cmp::Eq => c == *k,
                    Cmp::Ge => c >= *k,
                })
            }
            BaAtom::Subset(a, b) => {
                let (x, y) = (set_value(a, env, full)?, set_value(b, env, full)?);
                Bool3::from_bool(x & !y == 0)
            }
            BaAtom::SetEq(a, b) => {
                Bool3::from_bool(set_value(a, env, full)? == set_value(b, env, full)?)
            }
        },
    })
}

// ---------------------------------------------------------------------
// Random formula generators
// ---------------------------------------------------------------------

/// Random set-algebra formula over the given variables.
pub fn rand_ba(rng: &mut ChaCha8Rng, vars: &[Var], depth: usize) -> BaFormula {
    fn tm(rng: &mut ChaCha8Rng, vars: &[Var], depth: usize) -> SetTm {
        if depth == 0 || rng.gen_bool(0.5) {
            match rng.gen_range(0..6) {
                0 => SetTm::Zero,
                1 => SetTm::One,
                _ => SetTm::Var(vars.choose(rng).unwrap().clone()),
            }
        } else {
            let a = tm(rng, vars, depth - 1);
            match rng.gen_range(0..3) {
                0 => SetTm::compl(a),
                1 => SetTm::inter(a, tm(rng, vars, depth - 1)),
                _ => SetTm::union(a, tm(rng, vars, depth - 1)),
            }
        }
    }
    if depth == 0 || rng.gen_bool(0.4) {
        let t = tm(rng, vars, 2);
        let atom = match rng.gen_range(0..4) {
            0 => BaAtom::Card(t, Cmp::Eq, rng.gen_range(0..4)),
            1 => BaAtom::Card(t, Cmp::Ge, rng.gen_range(0..4)),
            2 => BaAtom::Subset(t, tm(rng, vars, 2)),
            _ => BaAtom::SetEq(t, tm(rng, vars, 2)),
        };
        Formula::Atom(atom)
    } else {
        match rng.gen_range(0..3) {
            0 => Formula::not(rand_ba(rng, vars, depth - 1)),
            1 => Formula::and(vec![
                rand_ba(rng, vars, depth - 1),
                rand_ba(rng, vars, depth - 1),
            ]),
            _ => Formula::or(vec![
                rand_ba(rng, vars, depth - 1),
                rand_ba(rng, vars, depth - 1),
            ]),
        }
    }
}

/// Random term-algebra formula: equalities and testers over variables,
/// constructors and selectors, with boolean structure and quantifiers.
pub fn rand_term_formula(
    rng: &mut ChaCha8Rng,
    sig: &TermSignature,
    vars: &[Var],
    depth: usize,
    quantify: bool,
) -> PFormula {
    use crate::lang::Tm;
    fn tm(rng: &mut ChaCha8Rng, sig: &TermSignature, vars: &[Var], depth: usize) -> Tm {
        if depth == 0 || rng.gen_bool(0.45) {
            Tm::Var(vars.choose(rng).unwrap().clone())
        } else {
            let cons = sig.constructors();
            let (f, a) = &cons[rng.gen_range(0..cons.len())];
            if rng.gen_bool(0.5) && *a >= 1 {
                Tm::Sel(
                    f.clone(),
                    rng.gen_range(1..=*a),
                    Box::new(tm(rng, sig, vars, depth - 1)),
                )
            } else {
                Tm::Cons(
                    f.clone(),
                    (0..*a).map(|_| tm(rng, sig, vars, depth - 1)).collect(),
                )
            }
        }
    }
    if depth == 0 || rng.gen_bool(0.35) {
        let t = tm(rng, sig, vars, 2);
        if rng.gen_bool(0.3) {
            let cons = sig.constructors();
            let (f, _) = &cons[rng.gen_range(0..cons.len())];
            Formula::Atom(PAtom::Is(f.clone(), t))
        } else {
            Formula::Atom(PAtom::Eq(t, tm(rng, sig, vars, 2)))
        }
    } else if quantify && rng.gen_bool(0.25) {
        let x = format!("q{}", rng.gen_range(0..1000));
        let mut inner: Vec<Var> = vars.to_vec();
        inner.push(x.clone());
        let body = rand_term_formula(rng, sig, &inner, depth - 1, quantify);
        if rng.gen_bool(0.5) {
            Formula::exists(x, crate::logic::Sort::Term, body)
        } else {
            Formula::forall(x, crate::logic::Sort::Term, body)
        }
    } else {
        match rng.gen_range(0..3) {
            0 => Formula::not(rand_term_formula(rng, sig, vars, depth - 1, quantify)),
            1 => Formula::and(vec![
                rand_term_formula(rng, sig, vars, depth - 1, quantify),
                rand_term_formula(rng, sig, vars, depth - 1, quantify),
            ]),
            _ => Formula::or(vec![
                rand_term_formula(rng, sig, vars, depth - 1, quantify),
                rand_term_formula(rng, sig, vars, depth - 1, quantify),
            ]),
        }
    }
}

/// Guard against generators drifting into other sorts.
pub fn assert_term_only(f: &PFormula) -> Result<()> {
    for a in f.atoms() {
        match a {
            PAtom::Eq(..) | PAtom::Is(..) => {}
            _ => bail!("non-term atom from generator"),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> TermSignature {
        TermSignature::new(vec![("a".into(), 0), ("b".into(), 0), ("g".into(), 2)])
            .unwrap()
    }

    #[test]
    fn term_counts() {
        let s = sig();
        // height 0: a, b; height ≤1 adds g over {a,b}²: 4 more
        assert_eq!(enum_terms(&s, 0).len(), 2);
        assert_eq!(enum_terms(&s, 1).len(), 6);
        // height ≤2: g over {6 terms}² minus pure height-≤0 pairs
        assert_eq!(enum_terms(&s, 2).len(), 6 + 32);
        for t in enum_terms(&s, 2) {
            assert!(t.height() <= 2);
        }
    }

    #[test]
    fn shape_counts() {
        let s = VarianceSignature::new(vec![("g".into(), vec![1, 1])]).unwrap();
        // binary trees by leaf count: Catalan numbers 1, 1, 2, 5
        let shapes = enum_shapes(&s, 4);
        assert_eq!(shapes.len(), 1 + 1 + 2 + 5);
    }

    #[test]
    fn ba_brute_basics() {
        use crate::ba::card;
        // |X| = 2 is satisfiable over a 3-element universe
        let f = Formula::exists(
            "X",
            crate::logic::Sort::Term,
            card(SetTm::Var("X".into()), Cmp::Eq, 2),
        );
        assert_eq!(eval_ba_brute(&f, 3, &BTreeMap::new()).unwrap(), Bool3::T);
        let g = Formula::forall(
            "X",
            crate::logic::Sort::Term,
            card(SetTm::Var("X".into()), Cmp::Ge, 1),
        );
        assert_eq!(eval_ba_brute(&g, 3, &BTreeMap::new()).unwrap(), Bool3::F);
    }
}
