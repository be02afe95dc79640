//! Finite relational structures with exact Tarskian evaluation, plus
//! direct powers and order-inverted copies.  This is the ground truth
//! the symbolic eliminators are cross-checked against.

use crate::logic::{eval3, AtomOps, Bool3, Formula, Interp3, Sort, Var};
use anyhow::{bail, ensure, Context, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// A finite structure: ordered carrier, named relations, and two
/// distinguished relations (equality, which must be the diagonal, and a
/// binary order).  Tuples are stored as carrier indices in sorted sets
/// so iteration order is deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteStructure {
    carrier: Vec<String>,
    relations: BTreeMap<String, (usize, BTreeSet<Vec<usize>>)>,
    equality: String,
    order: String,
}

impl FiniteStructure {
    pub fn new(
        carrier: Vec<String>,
        named_relations: Vec<(String, usize, Vec<Vec<String>>)>,
        equality: String,
        order: String,
    ) -> Result<FiniteStructure> {
        ensure!(!carrier.is_empty(), "carrier must be nonempty");
        let mut index = HashMap::new();
        for (i, e) in carrier.iter().enumerate() {
            ensure!(
                index.insert(e.clone(), i).is_none(),
                "duplicate carrier element {e}"
            );
        }
        let mut relations = BTreeMap::new();
        for (name, arity, tuples) in named_relations {
            let mut set = BTreeSet::new();
            for t in tuples {
                ensure!(
                    t.len() == arity,
                    "relation {name}: tuple of length {} but arity {arity}",
                    t.len()
                );
                let row: Vec<usize> = t
                    .iter()
                    .map(|e| {
                        index
                            .get(e)
                            .copied()
                            .with_context(|| format!("relation {name}: unknown element {e}"))
                    })
                    .collect::<Result<_>>()?;
                set.insert(row);
            }
            ensure!(
                relations.insert(name.clone(), (arity, set)).is_none(),
                "duplicate relation {name}"
            );
        }
        let m = FiniteStructure {
            carrier,
            relations,
            equality,
            order,
        };
        let (ea, eq) = m
            .relations
            .get(&m.equality)
            .with_context(|| format!("equality relation {} not declared", m.equality))?;
        ensure!(*ea == 2, "equality relation must be binary");
        let diagonal: BTreeSet<Vec<usize>> =
            (0..m.carrier.len()).map(|i| vec![i, i]).collect();
        ensure!(
            *eq == diagonal,
            "equality relation must be exactly the diagonal"
        );
        let (oa, _) = m
            .relations
            .get(&m.order)
            .with_context(|| format!("order relation {} not declared", m.order))?;
        ensure!(*oa == 2, "order relation must be binary");
        Ok(m)
    }

    pub fn carrier(&self) -> &[String] {
        &self.carrier
    }

    pub fn size(&self) -> usize {
        self.carrier.len()
    }

    pub fn elem_index(&self, e: &str) -> Option<usize> {
        self.carrier.iter().position(|x| x == e)
    }

    pub fn equality_name(&self) -> &str {
        &self.equality
    }

    pub fn order_name(&self) -> &str {
        &self.order
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(|s| s.as_str())
    }

    pub fn arity(&self, rel: &str) -> Option<usize> {
        self.relations.get(rel).map(|(a, _)| *a)
    }

    pub fn holds(&self, rel: &str, tuple: &[usize]) -> Result<bool> {
        let (a, set) = self
            .relations
            .get(rel)
            .with_context(|| format!("unknown relation {rel}"))?;
        ensure!(tuple.len() == *a, "relation {rel}: arity mismatch");
        Ok(set.contains(tuple))
    }

    /// Same structure with the order relation transposed; all other
    /// relations (including equality) untouched.
    pub fn inverted(&self) -> FiniteStructure {
        let mut m = self.clone();
        let (a, set) = m.relations.get_mut(&m.order).expect("order exists");
        debug_assert_eq!(*a, 2);
        *set = set.iter().map(|t| vec![t[1], t[0]]).collect();
        m
    }

    /// n-fold direct power: carrier is all n-tuples, every relation
    /// holds iff it holds at every index.
    pub fn power(&self, n: usize) -> Result<FiniteStructure> {
        ensure!(n >= 1, "power: index set must be nonempty");
        self.product(&vec![self.clone(); n])
    }

    /// Product of `p` forward copies and `n` order-inverted copies.
    pub fn mixed_power(&self, p: usize, n: usize) -> Result<FiniteStructure> {
        ensure!(p + n >= 1, "mixed_power: index set must be nonempty");
        let mut factors = vec![self.clone(); p];
        factors.extend(std::iter::repeat(self.inverted()).take(n));
        self.product(&factors)
    }

    fn product(&self, factors: &[FiniteStructure]) -> Result<FiniteStructure> {
        let n = factors.len();
        let k = self.carrier.len();
        let count = k.checked_pow(n as u32).context("product too large")?;
        let tuple_of = |mut idx: usize| -> Vec<usize> {
            let mut t = vec![0; n];
            for j in (0..n).rev() {
                t[j] = idx % k;
                idx /= k;
            }
            t
        };
        let carrier: Vec<String> = (0..count)
            .map(|i| {
                tuple_of(i)
                    .iter()
                    .map(|&e| self.carrier[e].as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        let mut relations = BTreeMap::new();
        for (name, (arity, _)) in &self.relations {
            let mut set = BTreeSet::new();
            let mut tuple = vec![0usize; *arity];
            loop {
                let rows: Vec<Vec<usize>> = tuple.iter().map(|&i| tuple_of(i)).collect();
                let all = (0..n).try_fold(true, |acc, j| -> Result<bool> {
                    let col: Vec<usize> = rows.iter().map(|r| r[j]).collect();
                    Ok(acc && factors[j].holds(name, &col)?)
                })?;
                if all {
                    set.insert(tuple.clone());
                }
                // odometer over arity-many product indices
                let mut pos = *arity;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    tuple[pos] += 1;
                    if tuple[pos] < count {
                        break;
                    }
                    tuple[pos] = 0;
                }
                if tuple.iter().all(|&x| x == 0) {
                    break;
                }
                if *arity == 0 {
                    break;
                }
            }
            if *arity == 0 {
                // 0-ary relation: holds iff it holds in every factor
                let all = (0..n).try_fold(true, |acc, j| -> Result<bool> {
                    Ok(acc && factors[j].holds(name, &[])?)
                })?;
                set.clear();
                if all {
                    set.insert(Vec::new());
                }
            }
            relations.insert(name.clone(), (*arity, set));
        }
        Ok(FiniteStructure {
            carrier,
            relations,
            equality: self.equality.clone(),
            order: self.order.clone(),
        })
    }
}

/// Atoms of plain first-order formulas over a finite structure:
/// relation applied to variables.
#[derive(Clone, Debug, PartialEq)]
pub struct FoAtom {
    pub rel: String,
    pub args: Vec<Var>,
}

impl AtomOps for FoAtom {
    fn for_each_var(&self, f: &mut dyn FnMut(&Var)) {
        for v in &self.args {
            f(v);
        }
    }
    fn rename(&self, map: &HashMap<Var, Var>) -> Self {
        FoAtom {
            rel: self.rel.clone(),
            args: self
                .args
                .iter()
                .map(|v| map.get(v).cloned().unwrap_or_else(|| v.clone()))
                .collect(),
        }
    }
}

pub type FoFormula = Formula<FoAtom>;

struct FoInterp<'a> {
    m: &'a FiniteStructure,
}

impl Interp3<FoAtom> for FoInterp<'_> {
    type Val = usize;
    fn atom(&self, a: &FoAtom, env: &HashMap<Var, usize>) -> Bool3 {
        let tuple: Vec<usize> = a
            .args
            .iter()
            .map(|v| *env.get(v).expect("unbound variable"))
            .collect();
        Bool3::from_bool(self.m.holds(&a.rel, &tuple).expect("validated"))
    }
    fn range(&self, _sort: Sort) -> Vec<usize> {
        (0..self.m.size()).collect()
    }
}

/// Exact evaluation of a first-order formula by exhaustive quantifier
/// expansion over the carrier.  `env` maps free variables to carrier
/// indices.
pub fn eval_fo(
    m: &FiniteStructure,
    f: &FoFormula,
    env: &HashMap<Var, usize>,
) -> Result<bool> {
    for a in f.atoms() {
        let arity = m
            .arity(&a.rel)
            .with_context(|| format!("unknown relation {}", a.rel))?;
        ensure!(
            a.args.len() == arity,
            "relation {}: {} args but arity {arity}",
            a.rel,
            a.args.len()
        );
    }
    for v in f.free_vars() {
        if !env.contains_key(&v) {
            bail!("free variable {v} not bound by the valuation");
        }
    }
    Ok(eval3(f, env, &FoInterp { m }).is_true())
}

/// The two-element chain a ≤ b used throughout the test suites.
#[cfg(test)]
pub fn chain2() -> FiniteStructure {
    FiniteStructure::new(
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
                vec![vec!["a".into(), "a".into()], vec!["b".into(), "b".into()]],
            ),
        ],
        "eqc".into(),
        "leq".into(),
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Quant;

    fn atom(rel: &str, args: &[&str]) -> FoFormula {
        Formula::Atom(FoAtom {
            rel: rel.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        })
    }

    #[test]
    fn reflexivity_and_least_element() {
        let m = chain2();
        // ∀x. x = x
        let f = Formula::forall("x", Sort::Term, atom("eqc", &["x", "x"]));
        assert!(eval_fo(&m, &f, &HashMap::new()).unwrap());
        // ∃x ∀y. x ≤ y (witness a)
        let g = Formula::exists(
            "x",
            Sort::Term,
            Formula::forall("y", Sort::Term, atom("leq", &["x", "y"])),
        );
        assert!(eval_fo(&m, &g, &HashMap::new()).unwrap());
        // ∃x ∀y. y ≤ x also true here (greatest element b)
        let h = Formula::exists(
            "x",
            Sort::Term,
            Formula::forall("y", Sort::Term, atom("leq", &["y", "x"])),
        );
        assert!(eval_fo(&m, &h, &HashMap::new()).unwrap());
    }

    #[test]
    fn power_componentwise() {
        let m = chain2();
        let p = m.power(2).unwrap();
        assert_eq!(p.size(), 4);
        let idx = |s: &str| p.elem_index(s).unwrap();
        assert!(p.holds("leq", &[idx("a,a"), idx("b,b")]).unwrap());
        assert!(!p.holds("leq", &[idx("a,b"), idx("b,a")]).unwrap());
        // n = 1 is an isomorphic copy (here: identical tables up to names)
        let p1 = m.power(1).unwrap();
        assert_eq!(p1.size(), m.size());
        assert!(m.power(0).is_err());
        assert_eq!(m.power(3).unwrap().size(), 8);
    }

    #[test]
    fn inverted_is_involutive() {
        let m = chain2();
        assert_ne!(m.inverted(), m);
        assert_eq!(m.inverted().inverted(), m);
        // non-order relations untouched
        assert!(m
            .inverted()
            .holds("eqc", &[0, 0])
            .unwrap());
        assert!(m.inverted().holds("leq", &[1, 0]).unwrap());
        assert!(!m.inverted().holds("leq", &[0, 1]).unwrap());
    }

    #[test]
    fn mixed_power_first_forward_second_reversed() {
        let m = chain2();
        let p = m.mixed_power(1, 1).unwrap();
        let idx = |s: &str| p.elem_index(s).unwrap();
        // first index forward (a ≤ b), second reversed (b ≥ a)
        assert!(p.holds("leq", &[idx("a,b"), idx("b,a")]).unwrap());
        assert!(!p.holds("leq", &[idx("a,a"), idx("b,b")]).unwrap());
        assert_eq!(m.mixed_power(2, 0).unwrap(), m.power(2).unwrap());
        assert!(m.mixed_power(0, 0).is_err());
    }

    /// A second, independently written evaluator used to cross-check
    /// `eval_fo` (direct bool recursion, no three-valued layer).
    fn eval_direct(
        m: &FiniteStructure,
        f: &FoFormula,
        env: &mut HashMap<Var, usize>,
    ) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Undef => unreachable!(),
            Formula::Atom(a) => {
                let t: Vec<usize> = a.args.iter().map(|v| env[v]).collect();
                m.holds(&a.rel, &t).unwrap()
            }
            Formula::Not(g) => !eval_direct(m, g, env),
            Formula::And(gs) => gs.iter().all(|g| eval_direct(m, g, env)),
            Formula::Or(gs) => gs.iter().any(|g| eval_direct(m, g, env)),
            Formula::Quantified(q, x, _, g) => {
                let old = env.get(x).copied();
                let mut vals = (0..m.size()).map(|i| {
                    env.insert(x.clone(), i);
                    eval_direct(m, g, env)
                });
                let r = match q {
                    Quant::Exists => vals.any(|b| b),
                    Quant::Forall => vals.all(|b| b),
                };
                drop(vals);
                match old {
                    Some(v) => {
                        env.insert(x.clone(), v);
                    }
                    None => {
                        env.remove(x);
                    }
                }
                r
            }
        }
    }

    #[test]
    fn dual_evaluator_agreement() {
        use rand::prelude::*;
        let m = chain2();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let f = random_sentence(&mut rng, &["x", "y", "z"], 0, 3);
            let a = eval_fo(&m, &f, &HashMap::new()).unwrap();
            let b = eval_direct(&m, &f, &mut HashMap::new());
            assert_eq!(a, b, "disagree on {f:?}");
        }
    }

    fn random_sentence(
        rng: &mut impl rand::Rng,
        vars: &[&str],
        depth_in_scope: usize,
        fuel: usize,
    ) -> FoFormula {
        if fuel == 0 || depth_in_scope == vars.len() {
            if depth_in_scope == 0 {
                // force a closed leaf
                return Formula::forall(
                    vars[0],
                    Sort::Term,
                    Formula::Atom(FoAtom {
                        rel: "leq".into(),
                        args: vec![vars[0].into(), vars[0].into()],
                    }),
                );
            }
            let rel = if rng.gen_bool(0.5) { "leq" } else { "eqc" };
            let a = vars[rng.gen_range(0..depth_in_scope)];
            let b = vars[rng.gen_range(0..depth_in_scope)];
            return Formula::Atom(FoAtom {
                rel: rel.into(),
                args: vec![a.into(), b.into()],
            });
        }
        match rng.gen_range(0..5) {
            0 => Formula::not(random_sentence(rng, vars, depth_in_scope, fuel - 1)),
            1 => Formula::and(vec![
                random_sentence(rng, vars, depth_in_scope, fuel - 1),
                random_sentence(rng, vars, depth_in_scope, fuel - 1),
            ]),
            2 => Formula::or(vec![
                random_sentence(rng, vars, depth_in_scope, fuel - 1),
                random_sentence(rng, vars, depth_in_scope, fuel - 1),
            ]),
            3 => Formula::exists(
                vars[depth_in_scope],
                Sort::Term,
                random_sentence(rng, vars, depth_in_scope + 1, fuel - 1),
            ),
            _ => Formula::forall(
                vars[depth_in_scope],
                Sort::Term,
                random_sentence(rng, vars, depth_in_scope + 1, fuel - 1),
            ),
        }
    }
}
