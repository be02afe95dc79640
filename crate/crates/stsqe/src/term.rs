//! Quantifier elimination for finite term algebras in
//! constructor–selector language.  Quantifier-free formulas are turned
//! into disjunctions of base formulas (acyclic congruence-closed graphs
//! of pairwise-distinct internal variables); existential quantifiers
//! drop a label; base formulas convert back to quantifier-free form
//! either with constructors (first construction) or selectors only
//! (second construction, via parameter expansion).

use crate::lang::{PAtom, PFormula, TermSignature, Tm, GT};
use crate::logic::{AtomOps, Bool3, ExistsElim, Formula, Lit, Sort, Var};
use anyhow::{bail, ensure, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

/// A base formula as a labelled directed acyclic graph.  Node indices
/// stand for the internal (existentially quantified) variables, which
/// are implicitly pairwise distinct.  A node is either a parameter
/// (no entry) or carries a constructor with its ordered successors;
/// parameter and constant nodes are the sinks.  `labels` ties each free
/// variable to the node it equals.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseFormulaGraph {
    pub nodes: Vec<Option<(String, Vec<usize>)>>,
    pub labels: BTreeMap<Var, usize>,
}

impl BaseFormulaGraph {
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for d in self.nodes.iter().flatten() {
            ensure!(d.1.iter().all(|&s| s < n), "successor out of range");
        }
        ensure!(!self.cyclic(), "base formula graph must be acyclic");
        let mut sigs = BTreeSet::new();
        for d in self.nodes.iter().flatten() {
            ensure!(
                sigs.insert(d.clone()),
                "two nodes share constructor {} with identical successors",
                d.0
            );
        }
        for (x, &u) in &self.labels {
            ensure!(u < n, "label {x} out of range");
        }
        Ok(())
    }

    fn cyclic(&self) -> bool {
        // colors: 0 unvisited, 1 on stack, 2 done
        fn visit(g: &BaseFormulaGraph, u: usize, color: &mut [u8]) -> bool {
            if color[u] == 1 {
                return true;
            }
            if color[u] == 2 {
                return false;
            }
            color[u] = 1;
            if let Some((_, succs)) = &g.nodes[u] {
                for &s in succs {
                    if visit(g, s, color) {
                        return true;
                    }
                }
            }
            color[u] = 2;
            false
        }
        let mut color = vec![0u8; self.nodes.len()];
        (0..self.nodes.len()).any(|u| visit(self, u, &mut color))
    }

    pub fn is_parameter(&self, u: usize) -> bool {
        self.nodes[u].is_none()
    }

    /// Length of the longest path in the graph.
    pub fn longest_path(&self) -> usize {
        fn h(g: &BaseFormulaGraph, u: usize, memo: &mut [Option<usize>]) -> usize {
            if let Some(v) = memo[u] {
                return v;
            }
            let v = match &g.nodes[u] {
                None => 0,
                Some((_, succs)) => {
                    succs.iter().map(|&s| 1 + h(g, s, memo)).max().unwrap_or(0)
                }
            };
            memo[u] = Some(v);
            v
        }
        let mut memo = vec![None; self.nodes.len()];
        (0..self.nodes.len())
            .map(|u| h(self, u, &mut memo))
            .max()
            .unwrap_or(0)
    }

    /// Nodes reachable from a labelled node, i.e. components of a term
    /// denoted by a free variable.
    pub fn covered(&self) -> Vec<bool> {
        let mut cov = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = self.labels.values().copied().collect();
        while let Some(u) = queue.pop_front() {
            if cov[u] {
                continue;
            }
            cov[u] = true;
            if let Some((_, succs)) = &self.nodes[u] {
                queue.extend(succs.iter().copied());
            }
        }
        cov
    }

    /// Covered nodes, closed under "all successors determined": these
    /// are the nodes whose value is a function of the free variables.
    pub fn determined(&self) -> Vec<bool> {
        let mut det = self.covered();
        loop {
            let mut changed = false;
            for u in 0..self.nodes.len() {
                if det[u] {
                    continue;
                }
                if let Some((_, succs)) = &self.nodes[u] {
                    if succs.iter().all(|&s| det[s]) {
                        det[u] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return det;
            }
        }
    }
}

/// Drop the label of `x`: the resulting graph is equivalent to ∃x.β.
pub fn exists_on_base(beta: &BaseFormulaGraph, x: &Var) -> BaseFormulaGraph {
    let mut b = beta.clone();
    b.labels.remove(x);
    b
}

/// Remove all nodes whose value is not determined by the free
/// variables; the result is equivalent (undetermined nodes can always
/// be instantiated with fresh large terms).
pub fn drop_undetermined(beta: &BaseFormulaGraph) -> BaseFormulaGraph {
    let det = beta.determined();
    let mut remap = vec![usize::MAX; beta.nodes.len()];
    let mut nodes = Vec::new();
    for u in 0..beta.nodes.len() {
        if det[u] {
            remap[u] = nodes.len();
            nodes.push(beta.nodes[u].clone());
        }
    }
    let nodes = nodes
        .into_iter()
        .map(|d| d.map(|(f, succs)| (f, succs.into_iter().map(|s| remap[s]).collect())))
        .collect();
    let labels = beta
        .labels
        .iter()
        .map(|(x, &u)| (x.clone(), remap[u]))
        .collect();
    BaseFormulaGraph { nodes, labels }
}

// ---------------------------------------------------------------------
// Congruence closure
// ---------------------------------------------------------------------

/// Union-find over variable slots with constructor definitions,
/// downward closure (constructors are injective), upward closure
/// (signature table), occur check and disequality tracking.
#[derive(Clone, Debug, Default)]
pub(crate) struct Closure {
    pub(crate) parent: Vec<usize>,
    pub(crate) def: Vec<Option<(String, Vec<usize>)>>,
    pub(crate) diseq: Vec<(usize, usize)>,
}

impl Closure {
    pub(crate) fn slot(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.def.push(None);
        self.parent.len() - 1
    }

    pub(crate) fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    /// Merge two classes; fails on a constructor clash.  The lowest
    /// slot index stays representative.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> Result<(), ()> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        let (keep, gone) = (ra.min(rb), ra.max(rb));
        self.parent[gone] = keep;
        match (self.def[keep].take(), self.def[gone].take()) {
            (None, None) => {}
            (Some(d), None) | (None, Some(d)) => self.def[keep] = Some(d),
            (Some((f, fs)), Some((g, gs))) => {
                if f != g {
                    return Err(());
                }
                self.def[keep] = Some((f, fs.clone()));
                for (x, y) in fs.iter().zip(&gs) {
                    self.union(*x, *y)?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn add_def(&mut self, slot: usize, f: &str, args: Vec<usize>) -> Result<(), ()> {
        let r = self.find(slot);
        match self.def[r].clone() {
            None => {
                self.def[r] = Some((f.to_string(), args));
                Ok(())
            }
            Some((g, gs)) => {
                if f != g {
                    return Err(());
                }
                for (x, y) in args.iter().zip(&gs) {
                    self.union(*x, *y)?;
                }
                Ok(())
            }
        }
    }

    pub(crate) fn roots(&mut self) -> Vec<usize> {
        let mut rs: Vec<usize> = (0..self.parent.len()).map(|i| self.find(i)).collect();
        rs.sort_unstable();
        rs.dedup();
        rs
    }

    /// Upward congruence to a fixpoint, then occur check and
    /// disequality check.
    pub(crate) fn close(&mut self) -> Result<(), ()> {
        loop {
            let mut table: HashMap<(String, Vec<usize>), usize> = HashMap::new();
            let mut merges = Vec::new();
            for r in self.roots() {
                if let Some((f, args)) = self.def[r].clone() {
                    let key = (f, args.iter().map(|&a| self.find(a)).collect());
                    if let Some(&prev) = table.get(&key) {
                        merges.push((prev, r));
                    } else {
                        table.insert(key, r);
                    }
                }
            }
            if merges.is_empty() {
                break;
            }
            for (a, b) in merges {
                self.union(a, b)?;
            }
        }
        if self.cyclic() {
            return Err(());
        }
        for (a, b) in self.diseq.clone() {
            if self.find(a) == self.find(b) {
                return Err(());
            }
        }
        Ok(())
    }

    fn cyclic(&mut self) -> bool {
        let roots = self.roots();
        let mut color: HashMap<usize, u8> = HashMap::new();
        fn visit(c: &mut Closure, u: usize, color: &mut HashMap<usize, u8>) -> bool {
            match color.get(&u) {
                Some(1) => return true,
                Some(2) => return false,
                _ => {}
            }
            color.insert(u, 1);
            if let Some((_, args)) = c.def[u].clone() {
                for a in args {
                    let ra = c.find(a);
                    if visit(c, ra, color) {
                        return true;
                    }
                }
            }
            color.insert(u, 2);
            false
        }
        roots.into_iter().any(|r| visit(self, r, &mut color))
    }

    pub(crate) fn has_diseq(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        self.diseq
            .clone()
            .into_iter()
            .any(|(x, y)| {
                let (rx, ry) = (self.find(x), self.find(y));
                (rx, ry) == (ra, rb) || (rx, ry) == (rb, ra)
            })
    }
}

#[derive(Clone, Copy, PartialEq)]
pub(crate) enum Status {
    Equal,
    Distinct,
    Unknown,
}

/// Whether two classes are forced equal, forced distinct, or undecided.
/// Distinctness propagates through equal constructor labels to
/// successor pairs.
pub(crate) fn status(c: &mut Closure, a: usize, b: usize) -> Status {
    let (ra, rb) = (c.find(a), c.find(b));
    if ra == rb {
        return Status::Equal;
    }
    if c.has_diseq(ra, rb) {
        return Status::Distinct;
    }
    match (c.def[ra].clone(), c.def[rb].clone()) {
        (Some((f, fs)), Some((g, gs))) => {
            if f != g {
                return Status::Distinct;
            }
            let mut unknown = false;
            for (x, y) in fs.iter().zip(&gs) {
                match status(c, *x, *y) {
                    Status::Distinct => return Status::Distinct,
                    Status::Unknown => unknown = true,
                    Status::Equal => {}
                }
            }
            if unknown {
                Status::Unknown
            } else {
                // congruent classes are merged during close()
                Status::Equal
            }
        }
        _ => Status::Unknown,
    }
}

/// Case-split on every undecided class pair until the closure decides
/// equality totally, collecting the saturated closures.  The budget
/// bounds the exponential case analysis; exhausting it is an error for
/// the caller to surface.
fn saturate(mut c: Closure, out: &mut Vec<Closure>, budget: &mut usize) -> Result<()> {
    ensure!(*budget > 0, "case analysis on equalities is too large");
    *budget -= 1;
    if c.close().is_err() {
        return Ok(());
    }
    let roots = c.roots();
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if status(&mut c, roots[i], roots[j]) == Status::Unknown {
                let mut eq = c.clone();
                if eq.union(roots[i], roots[j]).is_ok() {
                    saturate(eq, out, budget)?;
                }
                c.diseq.push((roots[i], roots[j]));
                return saturate(c, out, budget);
            }
        }
    }
    out.push(c);
    Ok(())
}

fn graph_of(c: &mut Closure, vars: &HashMap<Var, usize>, free: &BTreeSet<Var>) -> BaseFormulaGraph {
    let roots = c.roots();
    let index: HashMap<usize, usize> =
        roots.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let nodes = roots
        .iter()
        .map(|&r| {
            c.def[r].clone().map(|(f, args)| {
                let succs = args.iter().map(|&a| index[&c.find(a)]).collect();
                (f, succs)
            })
        })
        .collect();
    let labels = free
        .iter()
        .filter_map(|x| {
            let s = *vars.get(x)?;
            Some((x.clone(), index[&c.find(s)]))
        })
        .collect();
    BaseFormulaGraph { nodes, labels }
}

/// Every constructor, selector and tester symbol must come from the
/// signature, with matching arity, and the formula must stay at the
/// term sort (no shapes, lifted relations or cardinality atoms).
pub fn validate_term_formula(f: &PFormula, sig: &TermSignature) -> Result<()> {
    fn check_tm(t: &Tm, sig: &TermSignature) -> Result<()> {
        match t {
            Tm::Var(_) => Ok(()),
            Tm::Cons(f, ts) => {
                let a = sig
                    .arity(f)
                    .ok_or_else(|| anyhow::anyhow!("unknown constructor {f}"))?;
                ensure!(a == ts.len(), "constructor {f} expects {a} arguments");
                ts.iter().try_for_each(|t| check_tm(t, sig))
            }
            Tm::Sel(f, i, t) => {
                let a = sig
                    .arity(f)
                    .ok_or_else(|| anyhow::anyhow!("unknown constructor {f}"))?;
                ensure!(
                    *i >= 1 && *i <= a,
                    "selector index {i} out of range for {f}/{a}"
                );
                check_tm(t, sig)
            }
            _ => bail!("shape syntax is not part of the term-algebra language"),
        }
    }
    for a in f.atoms() {
        match &a {
            PAtom::Eq(s, t) => {
                check_tm(s, sig)?;
                check_tm(t, sig)?;
            }
            PAtom::Is(f, t) => {
                ensure!(sig.arity(f).is_some(), "unknown constructor {f}");
                check_tm(t, sig)?;
            }
            _ => bail!("only equality and tester atoms exist in the term-algebra language"),
        }
    }
    Ok(())
}

/// Write a well-defined quantifier-free formula as a disjunction of
/// base formulas (empty = false; a graph with no nodes = true).
pub fn qf_to_base_disjunction(
    f: &PFormula,
    sig: &TermSignature,
) -> Result<Vec<BaseFormulaGraph>> {
    validate_term_formula(f, sig)?;
    let arities = |g: &str| sig.arity(g).expect("validated constructor");
    let mut stack: Vec<Vec<Lit<PAtom>>> = f.to_welldefined_dnf();
    let mut graphs = Vec::new();
    while let Some(conj) = stack.pop() {
        // expand one negative tester into its positive alternatives
        if let Some(i) = conj
            .iter()
            .position(|l| !l.pos && matches!(l.atom, PAtom::Is(..)))
        {
            let PAtom::Is(g, t) = &conj[i].atom else {
                unreachable!()
            };
            for (h, _) in sig.constructors() {
                if h != g {
                    let mut c = conj.clone();
                    c[i] = Lit {
                        pos: true,
                        atom: PAtom::Is(h.clone(), t.clone()),
                    };
                    stack.push(c);
                }
            }
            continue;
        }
        let free: BTreeSet<Var> = {
            let mut s = BTreeSet::new();
            for l in &conj {
                l.atom.for_each_var(&mut |v| {
                    s.insert(v.clone());
                });
            }
            s
        };
        let un = crate::lang::unnest(&conj, &arities);
        let mut c = Closure::default();
        let mut vars: HashMap<Var, usize> = HashMap::new();
        let slot_of = |c: &mut Closure, vars: &mut HashMap<Var, usize>, v: &Var| {
            *vars.entry(v.clone()).or_insert_with(|| c.slot())
        };
        let mut ok = true;
        for l in &un.lits {
            let r = match (&l.pos, &l.atom) {
                (true, PAtom::Eq(Tm::Var(a), Tm::Var(b))) => {
                    let (sa, sb) = (slot_of(&mut c, &mut vars, a), slot_of(&mut c, &mut vars, b));
                    c.union(sa, sb)
                }
                (true, PAtom::Eq(Tm::Var(a), Tm::Cons(g, ts))) => {
                    let sa = slot_of(&mut c, &mut vars, a);
                    let args: Vec<usize> = ts
                        .iter()
                        .map(|t| {
                            let Tm::Var(v) = t else {
                                unreachable!("unnested")
                            };
                            slot_of(&mut c, &mut vars, v)
                        })
                        .collect();
                    c.add_def(sa, g, args)
                }
                (false, PAtom::Eq(Tm::Var(a), Tm::Var(b))) => {
                    let (sa, sb) = (slot_of(&mut c, &mut vars, a), slot_of(&mut c, &mut vars, b));
                    c.diseq.push((sa, sb));
                    Ok(())
                }
                (true, PAtom::Is(g, Tm::Var(a))) => {
                    let sa = slot_of(&mut c, &mut vars, a);
                    let args = (0..arities(g)).map(|_| c.slot()).collect();
                    c.add_def(sa, g, args)
                }
                _ => bail!("unexpected literal after unnesting: {:?}", l),
            };
            if r.is_err() {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        ensure!(
            c.parent.len() <= 24,
            "conjunct names too many distinct subterms"
        );
        let mut sat = Vec::new();
        let mut budget = 20_000;
        saturate(c, &mut sat, &mut budget)?;
        ensure!(
            graphs.len() + sat.len() <= 2_000,
            "disjunction of base formulas is too large"
        );
        for mut s in sat {
            let g = graph_of(&mut s, &vars, &free);
            g.validate()?;
            graphs.push(g);
        }
    }
    Ok(graphs)
}

// ---------------------------------------------------------------------
// Base formula back to quantifier-free form
// ---------------------------------------------------------------------

/// Selector-term witnesses for covered nodes: breadth-first from the
/// labelled nodes, in label order.
fn covered_terms(beta: &BaseFormulaGraph) -> HashMap<usize, Tm> {
    let mut terms: HashMap<usize, Tm> = HashMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (x, &u) in &beta.labels {
        if !terms.contains_key(&u) {
            terms.insert(u, Tm::Var(x.clone()));
            queue.push_back(u);
        }
    }
    while let Some(u) = queue.pop_front() {
        let t = terms[&u].clone();
        if let Some((f, succs)) = &beta.nodes[u] {
            for (i, &s) in succs.iter().enumerate() {
                if !terms.contains_key(&s) {
                    terms.insert(s, Tm::Sel(f.clone(), i + 1, Box::new(t.clone())));
                    queue.push_back(s);
                }
            }
        }
    }
    terms
}

/// τ(u): selector chain for covered nodes, constructor composition for
/// the rest.  Defined exactly on the determined nodes.
pub(crate) fn tau(beta: &BaseFormulaGraph) -> HashMap<usize, Tm> {
    let mut terms = covered_terms(beta);
    loop {
        let mut changed = false;
        for u in 0..beta.nodes.len() {
            if terms.contains_key(&u) {
                continue;
            }
            if let Some((f, succs)) = &beta.nodes[u] {
                if let Some(args) = succs
                    .iter()
                    .map(|s| terms.get(s).cloned())
                    .collect::<Option<Vec<Tm>>>()
                {
                    terms.insert(u, Tm::Cons(f.clone(), args));
                    changed = true;
                }
            }
        }
        if !changed {
            return terms;
        }
    }
}

pub(crate) fn conj_with_guards(atoms: Vec<Lit<PAtom>>) -> PFormula {
    let mut out: Vec<Lit<PAtom>> = Vec::new();
    for l in atoms {
        for g in l.atom.guards() {
            let gl = Lit { pos: true, atom: g };
            if !out.contains(&gl) {
                out.push(gl);
            }
        }
        if !out.contains(&l) {
            out.push(l);
        }
    }
    crate::logic::conj_to_formula(&out)
}

/// First construction: substitute τ(u) everywhere; constructor terms
/// keep disequalities compact.
pub fn base_to_qf_cons_sel(beta: &BaseFormulaGraph) -> PFormula {
    let b = drop_undetermined(beta);
    let t = tau(&b);
    let mut lits: Vec<Lit<PAtom>> = Vec::new();
    let mut push = |pos: bool, atom: PAtom| {
        let l = Lit { pos, atom };
        if !lits.contains(&l) {
            lits.push(l);
        }
    };
    for (x, &u) in &b.labels {
        if t[&u] != Tm::Var(x.clone()) {
            push(true, PAtom::Eq(Tm::Var(x.clone()), t[&u].clone()));
        }
    }
    for u in 0..b.nodes.len() {
        if let Some((f, succs)) = &b.nodes[u] {
            let cons = Tm::Cons(f.clone(), succs.iter().map(|s| t[s].clone()).collect());
            if t[&u] != cons {
                push(true, PAtom::Eq(t[&u].clone(), cons));
            }
        }
    }
    for u in 0..b.nodes.len() {
        for v in u + 1..b.nodes.len() {
            push(false, PAtom::Eq(t[&u].clone(), t[&v].clone()));
        }
    }
    conj_with_guards(lits)
}

/// Expand a parameter node by case analysis on its top constructor and
/// on which nodes its components are; branches violating congruence,
/// acyclicity or distinctness are discarded.
pub fn param_expand(
    beta: &BaseFormulaGraph,
    w: usize,
    sig: &TermSignature,
) -> Vec<BaseFormulaGraph> {
    assert!(beta.is_parameter(w), "only parameter nodes expand");
    let n = beta.nodes.len();
    let mut out = Vec::new();
    for (f, arity) in sig.constructors() {
        // successor choice per position: an existing node, or a fresh
        // one identified by the first position that introduced it
        let mut choices: Vec<Vec<usize>> = vec![vec![]];
        for pos in 0..*arity {
            choices = choices
                .into_iter()
                .flat_map(|c| {
                    // existing nodes, fresh nodes opened by earlier
                    // positions of this expansion, or a new fresh node
                    let top = c.iter().copied().max().map(|m| m + 1).unwrap_or(n).max(n);
                    (0..=top).map(move |s| {
                        let mut c2 = c.clone();
                        c2.push(s);
                        c2
                    })
                })
                .collect();
            let _ = pos;
        }
        for succs in choices {
            // rebuild as a closure: defs, all-pairs distinctness
            let mut c = Closure::default();
            let total = n + succs.iter().copied().max().map(|m| (m + 1).saturating_sub(n)).unwrap_or(0);
            let slots: Vec<usize> = (0..total).map(|_| c.slot()).collect();
            let mut ok = true;
            for u in 0..n {
                if let Some((g, ss)) = &beta.nodes[u] {
                    let args = ss.iter().map(|&s| slots[s]).collect();
                    if c.add_def(slots[u], g, args).is_err() {
                        ok = false;
                        break;
                    }
                }
            }
            if ok
                && c.add_def(slots[w], f, succs.iter().map(|&s| slots[s]).collect())
                    .is_err()
            {
                ok = false;
            }
            if !ok {
                continue;
            }
            for a in 0..total {
                for b in a + 1..total {
                    c.diseq.push((slots[a], slots[b]));
                }
            }
            if c.close().is_err() {
                continue;
            }
            let vars: HashMap<Var, usize> = beta
                .labels
                .keys()
                .map(|x| (x.clone(), slots[beta.labels[x]]))
                .collect();
            let free: BTreeSet<Var> = beta.labels.keys().cloned().collect();
            let g = graph_of(&mut c, &vars, &free);
            debug_assert!(g.validate().is_ok());
            out.push(g);
        }
    }
    out
}

/// Second construction: eliminate uncovered nodes via parameter
/// expansion until everything is covered, then substitute the selector
/// chains.  The output mentions no constructor applications.
pub fn base_to_qf_sel(beta: &BaseFormulaGraph, sig: &TermSignature) -> Result<PFormula> {
    let mut work = vec![drop_undetermined(beta)];
    let mut outs: Vec<PFormula> = Vec::new();
    let mut budget = 10_000usize;
    while let Some(b) = work.pop() {
        ensure!(budget > 0, "parameter expansion is too large");
        budget -= 1;
        if b.covered().iter().all(|&c| c) {
            outs.push(covered_to_sel(&b));
            continue;
        }
        // one elimination round: expand every parameter present now so
        // distinctness against the node we remove becomes deducible
        // (the fresh successors this introduces are covered and need no
        // expansion), then drop an uncovered source in each branch.
        // Expansion keeps existing node indices, so the parameter list
        // stays meaningful across branches.
        let params: Vec<usize> = (0..b.nodes.len()).filter(|&u| b.is_parameter(u)).collect();
        let mut branches = vec![b];
        for &w in &params {
            branches = branches
                .into_iter()
                .flat_map(|g| {
                    if g.is_parameter(w) {
                        param_expand(&g, w, sig)
                    } else {
                        vec![g]
                    }
                })
                .collect();
            ensure!(
                branches.len() <= 4_000,
                "parameter expansion is too large"
            );
        }
        for g in branches {
            let cov = g.covered();
            if cov.iter().all(|&c| c) {
                outs.push(covered_to_sel(&g));
                continue;
            }
            let u0 = (0..g.nodes.len())
                .find(|&u| {
                    !cov[u]
                        && !g
                            .nodes
                            .iter()
                            .flatten()
                            .any(|(_, succs)| succs.contains(&u))
                })
                .expect("some uncovered node is a source");
            let mut remap = vec![usize::MAX; g.nodes.len()];
            let mut nodes = Vec::new();
            for u in 0..g.nodes.len() {
                if u != u0 {
                    remap[u] = nodes.len();
                    nodes.push(g.nodes[u].clone());
                }
            }
            let nodes = nodes
                .into_iter()
                .map(|d| d.map(|(f, ss)| (f, ss.into_iter().map(|s| remap[s]).collect())))
                .collect();
            let labels = g
                .labels
                .iter()
                .map(|(x, &u)| (x.clone(), remap[u]))
                .collect();
            work.push(BaseFormulaGraph { nodes, labels });
        }
    }
    Ok(Formula::or(outs))
}

/// All nodes covered: the matrix rewritten over selector chains only.
fn covered_to_sel(b: &BaseFormulaGraph) -> PFormula {
    let t = covered_terms(b);
    let mut lits: Vec<Lit<PAtom>> = Vec::new();
    let mut push = |pos: bool, atom: PAtom| {
        let l = Lit { pos, atom };
        if !lits.contains(&l) {
            lits.push(l);
        }
    };
    for (x, &u) in &b.labels {
        if t[&u] != Tm::Var(x.clone()) {
            push(true, PAtom::Eq(Tm::Var(x.clone()), t[&u].clone()));
        }
    }
    for u in 0..b.nodes.len() {
        if let Some((f, succs)) = &b.nodes[u] {
            push(true, PAtom::Is(f.clone(), t[&u].clone()));
            for (i, &s) in succs.iter().enumerate() {
                let sel = Tm::Sel(f.clone(), i + 1, Box::new(t[&u].clone()));
                if t[&s] != sel {
                    push(true, PAtom::Eq(t[&s].clone(), sel));
                }
            }
        }
    }
    for u in 0..b.nodes.len() {
        for v in u + 1..b.nodes.len() {
            push(false, PAtom::Eq(t[&u].clone(), t[&v].clone()));
        }
    }
    conj_with_guards(lits)
}

// ---------------------------------------------------------------------
// Witness construction
// ---------------------------------------------------------------------

/// A ground term of exactly the given height over the signature.
pub fn tower(sig: &TermSignature, h: usize) -> GT {
    let c = sig.constants().next().expect("signature has a constant");
    let (f, a) = sig
        .constructors()
        .iter()
        .find(|(_, a)| *a >= 1)
        .expect("signature has a proper constructor");
    let mut t = GT::C(c.to_string());
    for _ in 0..h {
        let mut args = vec![t];
        args.extend((1..*a).map(|_| GT::C(c.to_string())));
        t = GT::F(f.clone(), args);
    }
    t
}

/// Satisfying valuation for the matrix of a base formula.  Parameter
/// values are drawn from `pick(ordinal, min_height)` (default: towers),
/// with heights climbing by more than the longest path each time so all
/// node values come out pairwise distinct.
pub fn base_witness(
    beta: &BaseFormulaGraph,
    sig: &TermSignature,
    pick: Option<&dyn Fn(usize, usize) -> GT>,
) -> (Vec<GT>, BTreeMap<Var, GT>) {
    let hg = beta.longest_path();
    let mut values: Vec<Option<GT>> = vec![None; beta.nodes.len()];
    let mut prev_height: Option<usize> = None;
    let mut ordinal = 0;
    for u in 0..beta.nodes.len() {
        if beta.is_parameter(u) {
            let min = match prev_height {
                None => hg + 1,
                Some(h) => h + hg + 1,
            };
            let t = match pick {
                Some(p) => p(ordinal, min),
                None => tower(sig, min),
            };
            assert!(t.height() >= min, "picked parameter value too small");
            prev_height = Some(t.height());
            ordinal += 1;
            values[u] = Some(t);
        }
    }
    // non-parameters bottom-up
    loop {
        let mut changed = false;
        for u in 0..beta.nodes.len() {
            if values[u].is_some() {
                continue;
            }
            let Some((f, succs)) = &beta.nodes[u] else {
                unreachable!()
            };
            if let Some(args) = succs
                .iter()
                .map(|s| values[*s].clone())
                .collect::<Option<Vec<GT>>>()
            {
                values[u] = Some(if args.is_empty() {
                    GT::C(f.clone())
                } else {
                    GT::F(f.clone(), args)
                });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let values: Vec<GT> = values.into_iter().map(|v| v.expect("acyclic")).collect();
    let env = beta
        .labels
        .iter()
        .map(|(x, &u)| (x.clone(), values[u].clone()))
        .collect();
    (values, env)
}

// ---------------------------------------------------------------------
// Constructor/selector surface conversions and ground evaluation
// ---------------------------------------------------------------------

/// Rewrite constructor equalities into tester plus selector equations.
pub fn cons_to_sel(f: &PFormula) -> PFormula {
    f.map_atoms(&mut |a| match a {
        PAtom::Eq(s, t) => {
            let (y, cons) = match (s, t) {
                (y, Tm::Cons(..)) => (y, t),
                (Tm::Cons(..), y) => (y, s),
                _ => return Formula::Atom(a.clone()),
            };
            let Tm::Cons(g, args) = cons else { unreachable!() };
            let mut parts = vec![Formula::Atom(PAtom::Is(g.clone(), y.clone()))];
            for (i, arg) in args.iter().enumerate() {
                parts.push(Formula::Atom(PAtom::Eq(
                    arg.clone(),
                    Tm::Sel(g.clone(), i + 1, Box::new(y.clone())),
                )));
            }
            Formula::and(parts)
        }
        other => Formula::Atom(other.clone()),
    })
}

/// Rewrite tester-plus-complete-selector groups back into constructor
/// equalities; groups missing selector equations stay as they are.
pub fn sel_to_cons(f: &PFormula, sig: &TermSignature) -> PFormula {
    let conjs = f.to_welldefined_dnf();
    let mut disjuncts = Vec::new();
    for mut conj in conjs {
        loop {
            // a positive tester whose selector components all appear
            let mut applied = false;
            for i in 0..conj.len() {
                let Lit {
                    pos: true,
                    atom: PAtom::Is(g, y),
                } = &conj[i]
                else {
                    continue;
                };
                let arity = match sig.arity(g) {
                    Some(a) => a,
                    None => continue,
                };
                let mut comps: Vec<Option<Tm>> = vec![None; arity];
                let mut used: Vec<usize> = vec![i];
                for (j, l) in conj.iter().enumerate() {
                    if !l.pos {
                        continue;
                    }
                    if let PAtom::Eq(a, b) = &l.atom {
                        for (x, sel) in [(a, b), (b, a)] {
                            if let Tm::Sel(h, ix, base) = sel {
                                if h == g && **base == *y && comps[ix - 1].is_none() {
                                    comps[ix - 1] = Some(x.clone());
                                    used.push(j);
                                }
                            }
                        }
                    }
                }
                if let Some(args) = comps.into_iter().collect::<Option<Vec<Tm>>>() {
                    let eq = Lit {
                        pos: true,
                        atom: PAtom::Eq(y.clone(), Tm::Cons(g.clone(), args)),
                    };
                    let mut c2: Vec<Lit<PAtom>> = conj
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| !used.contains(j))
                        .map(|(_, l)| l.clone())
                        .collect();
                    c2.push(eq);
                    conj = c2;
                    applied = true;
                    break;
                }
            }
            if !applied {
                break;
            }
        }
        disjuncts.push(crate::logic::conj_to_formula(&conj));
    }
    Formula::or(disjuncts)
}

/// Evaluate a term to a ground term; selectors are partial.
pub fn eval_tm(t: &Tm, env: &BTreeMap<Var, GT>) -> Result<Option<GT>> {
    Ok(match t {
        Tm::Var(v) => Some(
            env.get(v)
                .ok_or_else(|| anyhow::anyhow!("unbound variable {v}"))?
                .clone(),
        ),
        Tm::Cons(f, ts) => {
            let mut args = Vec::new();
            for s in ts {
                match eval_tm(s, env)? {
                    Some(g) => args.push(g),
                    None => return Ok(None),
                }
            }
            Some(if args.is_empty() {
                GT::C(f.clone())
            } else {
                GT::F(f.clone(), args)
            })
        }
        Tm::Sel(f, i, s) => match eval_tm(s, env)? {
            Some(GT::F(g, args)) if g == *f => Some(args[*i - 1].clone()),
            Some(_) => None,
            None => None,
        },
        _ => bail!("shape syntax in a term-algebra formula"),
    })
}

/// Three-valued ground evaluation of a quantifier-free term-algebra
/// formula: atoms on undefined selector chains are undefined.
pub fn eval_ground(f: &PFormula, env: &BTreeMap<Var, GT>) -> Result<Bool3> {
    Ok(match f {
        Formula::True => Bool3::T,
        Formula::False => Bool3::F,
        Formula::Undef => Bool3::U,
        Formula::Not(g) => eval_ground(g, env)?.not(),
        Formula::And(gs) => {
            let mut acc = Bool3::T;
            for g in gs {
                acc = acc.and(eval_ground(g, env)?);
            }
            acc
        }
        Formula::Or(gs) => {
            let mut acc = Bool3::F;
            for g in gs {
                acc = acc.or(eval_ground(g, env)?);
            }
            acc
        }
        Formula::Quantified(..) => bail!("ground evaluation expects a quantifier-free formula"),
        Formula::Atom(a) => match a {
            PAtom::Eq(s, t) => match (eval_tm(s, env)?, eval_tm(t, env)?) {
                (Some(x), Some(y)) => Bool3::from_bool(x == y),
                _ => Bool3::U,
            },
            PAtom::Is(g, t) => match eval_tm(t, env)? {
                Some(GT::F(h, _)) => Bool3::from_bool(h == *g),
                Some(GT::C(c)) => Bool3::from_bool(c == *g),
                None => Bool3::U,
            },
            _ => bail!("not a term-algebra atom"),
        },
    })
}

// ---------------------------------------------------------------------
// The eliminator
// ---------------------------------------------------------------------

/// Output language of the back conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    ConsSel,
    Sel,
}

pub struct TermElim<'a> {
    pub sig: &'a TermSignature,
    pub mode: Mode,
}

impl ExistsElim<PAtom> for TermElim<'_> {
    fn eliminate_exists(&self, x: &Var, sort: Sort, f: PFormula) -> Result<PFormula> {
        ensure!(sort == Sort::Term, "term algebra quantifies terms only");
        let graphs = qf_to_base_disjunction(&f, self.sig)?;
        let mut outs = Vec::new();
        for g in graphs {
            let g = exists_on_base(&g, x);
            outs.push(match self.mode {
                Mode::ConsSel => base_to_qf_cons_sel(&g),
                Mode::Sel => base_to_qf_sel(&g, self.sig)?,
            });
        }
        Ok(Formula::or(outs).simplify())
    }
}

/// Full quantifier elimination over the term algebra of `sig`.
pub fn term_qe(f: &PFormula, sig: &TermSignature, mode: Mode) -> Result<PFormula> {
    ensure!(
        sig.has_constant() && sig.has_proper(),
        "the term model must be infinite: need a constant and a proper constructor"
    );
    validate_term_formula(f, sig)?;
    crate::logic::qe_drive(f, &TermElim { sig, mode })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> TermSignature {
        TermSignature::new(vec![
            ("a".into(), 0),
            ("b".into(), 0),
            ("g".into(), 2),
        ])
        .unwrap()
    }

    fn v(n: &str) -> Tm {
        Tm::Var(n.into())
    }

    fn eq(a: Tm, b: Tm) -> PFormula {
        Formula::Atom(PAtom::Eq(a, b))
    }

    #[test]
    fn cyclic_is_false() {
        let f = eq(v("x"), Tm::Cons("g".into(), vec![v("x"), v("x")]));
        assert!(qf_to_base_disjunction(&f, &sig()).unwrap().is_empty());
    }

    #[test]
    fn equality_is_one_graph() {
        let gs = qf_to_base_disjunction(&eq(v("x"), v("y")), &sig()).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].nodes, vec![None]);
        assert_eq!(gs[0].labels.len(), 2);
        assert_eq!(gs[0].labels["x"], 0);
        assert_eq!(gs[0].labels["y"], 0);
    }

    fn matrix_holds(b: &BaseFormulaGraph, values: &[GT]) -> bool {
        for u in 0..b.nodes.len() {
            for w in u + 1..b.nodes.len() {
                if values[u] == values[w] {
                    return false;
                }
            }
        }
        for u in 0..b.nodes.len() {
            if let Some((f, succs)) = &b.nodes[u] {
                let built = if succs.is_empty() {
                    GT::C(f.clone())
                } else {
                    GT::F(f.clone(), succs.iter().map(|&s| values[s].clone()).collect())
                };
                if values[u] != built {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn witness_heights_staircase() {
        // two unrelated parameters, one labeled
        let b = BaseFormulaGraph {
            nodes: vec![None, None],
            labels: BTreeMap::from([("x".to_string(), 0)]),
        };
        let (values, env) = base_witness(&b, &sig(), None);
        assert!(matrix_holds(&b, &values));
        assert_ne!(values[0].height(), values[1].height());
        assert_eq!(env["x"], values[0]);
    }

    #[test]
    fn random_base_formulas_have_witnesses() {
        use rand::{Rng, SeedableRng};
        let s = sig();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut made = 0;
        'outer: for _ in 0..400 {
            if made >= 100 {
                break;
            }
            let n = rng.gen_range(1..6);
            let mut nodes: Vec<Option<(String, Vec<usize>)>> = Vec::new();
            for u in 0..n {
                // successors only among later nodes keeps it acyclic
                if u + 1 < n && rng.gen_bool(0.6) {
                    let ss = vec![rng.gen_range(u + 1..n), rng.gen_range(u + 1..n)];
                    nodes.push(Some(("g".to_string(), ss)));
                } else if rng.gen_bool(0.4) {
                    nodes.push(Some((
                        if rng.gen_bool(0.5) { "a" } else { "b" }.to_string(),
                        vec![],
                    )));
                } else {
                    nodes.push(None);
                }
            }
            let mut labels = BTreeMap::new();
            for u in 0..n {
                if rng.gen_bool(0.5) {
                    labels.insert(format!("x{u}"), u);
                }
            }
            let b = BaseFormulaGraph { nodes, labels };
            if b.validate().is_err() {
                continue 'outer; // duplicate signature; skip
            }
            let (values, _) = base_witness(&b, &s, None);
            assert!(matrix_holds(&b, &values), "witness fails for {b:?}");
            made += 1;
        }
        assert!(made >= 100);
    }

    #[test]
    fn qe_sentences() {
        let s = sig();
        // ∃x. x ≠ a
        let f = Formula::exists(
            "x",
            Sort::Term,
            Formula::not(eq(v("x"), Tm::Cons("a".into(), vec![]))),
        );
        assert_eq!(term_qe(&f, &s, Mode::ConsSel).unwrap(), Formula::True);
        // ∃x ∀y. x = y
        let g = Formula::exists(
            "x",
            Sort::Term,
            Formula::forall("y", Sort::Term, eq(v("x"), v("y"))),
        );
        assert_eq!(term_qe(&g, &s, Mode::ConsSel).unwrap(), Formula::False);
        // ∀x ∃y. x = g₁(y) ∧ Is_g(y)
        let h = Formula::forall(
            "x",
            Sort::Term,
            Formula::exists(
                "y",
                Sort::Term,
                Formula::and(vec![
                    eq(v("x"), Tm::Sel("g".into(), 1, Box::new(v("y")))),
                    Formula::Atom(PAtom::Is("g".into(), v("y"))),
                ]),
            ),
        );
        assert_eq!(term_qe(&h, &s, Mode::Sel).unwrap(), Formula::True);
    }

    #[test]
    fn random_qf_base_round_trip() {
        use rand::SeedableRng;
        let s = sig();
        let vars: Vec<Var> = vec!["x".into(), "y".into(), "z".into()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for case in 0..40 {
            let f = crate::oracle::rand_term_formula(&mut rng, &s, &vars, 3, false);
            let graphs = match qf_to_base_disjunction(&f, &s) {
                Ok(g) => g,
                Err(_) => continue,
            };
            for mode in [Mode::ConsSel, Mode::Sel] {
                let parts: Result<Vec<PFormula>> = graphs
                    .iter()
                    .map(|g| match mode {
                        Mode::ConsSel => Ok(base_to_qf_cons_sel(g)),
                        Mode::Sel => base_to_qf_sel(g, &s),
                    })
                    .collect();
                let out = match parts {
                    Ok(p) => Formula::or(p),
                    Err(_) => continue,
                };
                let cex =
                    crate::oracle::ground_equiv(&f, &out, &s, 1, 500, 77, false).unwrap();
                assert!(
                    cex.is_none(),
                    "case {case} mode {mode:?}: {f:?} vs {out:?} differ at {cex:?}"
                );
            }
        }
    }

    #[test]
    fn exists_elimination_sound() {
        use crate::oracle::{enum_terms, eval_term_bounded};
        use rand::SeedableRng;
        let s = sig();
        let vars: Vec<Var> = vec!["x".into(), "y".into(), "z".into()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let outer = enum_terms(&s, 1);
        for case in 0..25 {
            let f = crate::oracle::rand_term_formula(&mut rng, &s, &vars, 2, false);
            let ex = Formula::exists("x", Sort::Term, f.clone());
            for mode in [Mode::ConsSel, Mode::Sel] {
                let out = term_qe(&ex, &s, mode).unwrap();
                for yt in &outer {
                    for zt in &outer {
                        let env = BTreeMap::from([
                            ("y".to_string(), yt.clone()),
                            ("z".to_string(), zt.clone()),
                        ]);
                        // a bounded witness for x means the eliminated
                        // formula must be true (the converse may need
                        // terms beyond the bounded universe)
                        if eval_term_bounded(&ex, &s, 2, &env).unwrap().is_true() {
                            assert!(
                                eval_ground(&out, &env).unwrap().is_true(),
                                "case {case} mode {mode:?}: lost witness at {env:?}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cons_sel_round_trip() {
        let s = sig();
        let f = eq(v("z"), Tm::Cons("g".into(), vec![v("x"), v("y")]));
        let g = cons_to_sel(&f);
        assert!(g
            .atoms()
            .iter()
            .all(|a| !matches!(a, PAtom::Eq(_, Tm::Cons(..)) | PAtom::Eq(Tm::Cons(..), _))));
        let back = sel_to_cons(&g, &s);
        // equivalent on ground valuations over a small universe
        let terms = crate::oracle::enum_terms(&s, 2);
        for x in terms.iter().take(6) {
            for y in terms.iter().take(6) {
                for z in terms.iter().take(12) {
                    let env = BTreeMap::from([
                        ("x".to_string(), x.clone()),
                        ("y".to_string(), y.clone()),
                        ("z".to_string(), z.clone()),
                    ]);
                    let a = eval_ground(&f, &env).unwrap();
                    let b = eval_ground(&g, &env).unwrap();
                    let c = eval_ground(&back, &env).unwrap();
                    assert_eq!(a, b);
                    assert_eq!(a, c);
                }
            }
        }
    }
}
