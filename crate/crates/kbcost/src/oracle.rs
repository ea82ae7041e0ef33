//! Reference implementations used to cross-check the core algorithms.
//!
//! Everything here is deliberately naive and shares no code with the core
//! closure, depth or search modules: full Herbrand grounding, round-by-round
//! fixpoint stages, recursive depth, and exhaustive subset enumeration.

use std::collections::{BTreeMap, BTreeSet};

use kbcost_core::kbmodel::Binding;
use kbcost_core::{Formula, GroundAtom, KnowledgeBase, PremiseBase, ProofSystem, Symbol};

/// Ground rule instance as `(head, body)`.
pub type Instance = (GroundAtom, Vec<GroundAtom>);

/// Every instance of every rule over `constants`, by exhaustive assignment.
pub fn herbrand_instances(system: &ProofSystem, constants: &BTreeSet<Symbol>) -> Vec<Instance> {
    let consts: Vec<&Symbol> = constants.iter().collect();
    let mut out = Vec::new();
    for rule in system.rules() {
        let vars = rule.variables();
        if !vars.is_empty() && consts.is_empty() {
            continue;
        }
        let mut choice = vec![0usize; vars.len()];
        loop {
            let binding: Binding = vars
                .iter()
                .cloned()
                .zip(choice.iter().map(|&i| consts[i].clone()))
                .collect();
            let head = rule.head.ground(&binding).expect("range restricted");
            let body = rule
                .body
                .iter()
                .map(|t| t.ground(&binding).expect("all variables bound"))
                .collect();
            out.push((head, body));
            // Odometer over assignments.
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < consts.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Constants of a system together with those of a premise base.
pub fn constants_of(system: &ProofSystem, base: &PremiseBase) -> BTreeSet<Symbol> {
    let mut c = system.constants();
    for a in base.atoms() {
        c.extend(a.args.iter().cloned());
    }
    c
}

/// Naive bottom-up evaluation over a fixed premise base.
#[derive(Clone, Debug)]
pub struct Oracle {
    base: BTreeSet<Formula>,
    instances: Vec<Instance>,
    stages: BTreeMap<GroundAtom, u32>,
}

impl Oracle {
    pub fn new(system: &ProofSystem, base: &PremiseBase) -> Self {
        Self::with_constants(system, base, &constants_of(system, base))
    }

    pub fn with_constants(
        system: &ProofSystem,
        base: &PremiseBase,
        constants: &BTreeSet<Symbol>,
    ) -> Self {
        let instances = herbrand_instances(system, constants);
        let base: BTreeSet<Formula> = base.iter().cloned().collect();
        let mut stages: BTreeMap<GroundAtom, u32> = base
            .iter()
            .filter_map(|f| f.as_atom().cloned())
            .map(|a| (a, 0))
            .collect();
        let mut round = 0;
        loop {
            round += 1;
            let fresh: BTreeSet<GroundAtom> = instances
                .iter()
                .filter(|(h, b)| {
                    !stages.contains_key(h) && b.iter().all(|x| stages.contains_key(x))
                })
                .map(|(h, _)| h.clone())
                .collect();
            if fresh.is_empty() {
                break;
            }
            for a in fresh {
                stages.insert(a, round);
            }
        }
        Oracle {
            base,
            instances,
            stages,
        }
    }

    pub fn for_kb(kb: &KnowledgeBase) -> Self {
        Self::with_constants(&kb.system, &kb.operational_base(), &kb.constants)
    }

    /// Fixpoint round in which the atom first appears.
    pub fn stage(&self, a: &GroundAtom) -> Option<u32> {
        self.stages.get(a).copied()
    }

    pub fn derivable_atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.stages.keys()
    }

    /// Depth by structural recursion; `None` when not derivable.
    pub fn depth(&self, f: &Formula) -> Option<u32> {
        if self.base.contains(f) {
            return Some(0);
        }
        match f.split_last() {
            None => self.stage(&f.conjuncts()[0]),
            Some((left, right)) => {
                let l = self.depth(&left)?;
                let r = self.depth(&Formula::atom(right))?;
                Some(1 + l.max(r))
            }
        }
    }

    pub fn entails(&self, f: &Formula) -> bool {
        self.depth(f).is_some()
    }

    /// Alternative justifications of a derived formula, each a list of
    /// required formulas.
    fn justifications(&self, f: &Formula) -> Vec<Vec<Formula>> {
        match f.split_last() {
            Some((left, right)) => vec![vec![left, Formula::atom(right)]],
            None => self
                .instances
                .iter()
                .filter(|(h, _)| *h == f.conjuncts()[0])
                .map(|(_, b)| b.iter().cloned().map(Formula::atom).collect())
                .collect(),
        }
    }

    /// Universe of formulas a shortest derivation of `q` may produce:
    /// derivable non-base atoms and derivable non-base prefixes of `q`.
    fn universe(&self, q: &Formula) -> Vec<Formula> {
        let mut u: BTreeSet<Formula> = self
            .stages
            .iter()
            .filter(|(_, &s)| s > 0)
            .map(|(a, _)| Formula::atom(a.clone()))
            .filter(|f| !self.base.contains(f))
            .collect();
        for t in 2..=q.len() {
            let p = q.prefix(t);
            if !self.base.contains(&p) && self.entails(&p) {
                u.insert(p);
            }
        }
        u.into_iter().collect()
    }

    /// Every minimum-size derivation set of `q`, by enumerating subsets of
    /// the universe in order of size. `None` when `q` is not derivable.
    pub fn min_derivation_sets(&self, q: &Formula) -> Option<(usize, Vec<Vec<Formula>>)> {
        if self.base.contains(q) {
            return Some((0, vec![Vec::new()]));
        }
        if !self.entails(q) {
            return None;
        }
        let u = self.universe(q);
        assert!(u.len() < 64, "oracle universe too large");
        let index: BTreeMap<&Formula, usize> = u.iter().enumerate().map(|(i, f)| (f, i)).collect();
        // Requirements per justification as a bitmask over the universe.
        let reqs: Vec<Vec<u64>> = u
            .iter()
            .map(|f| {
                self.justifications(f)
                    .into_iter()
                    .filter_map(|need| {
                        need.iter().try_fold(0u64, |mask, g| {
                            if self.base.contains(g) {
                                Some(mask)
                            } else {
                                index.get(g).map(|&i| mask | 1 << i)
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        let qi = index[q];
        let n = u.len();
        for k in 1..=n {
            let mut found = Vec::new();
            for_each_combination(n, k, &mut |mask| {
                if mask & (1 << qi) != 0 && well_founded(mask, &reqs) {
                    found.push(
                        (0..n)
                            .filter(|i| mask & (1 << i) != 0)
                            .map(|i| u[i].clone())
                            .collect(),
                    );
                }
            });
            if !found.is_empty() {
                return Some((k, found));
            }
        }
        unreachable!("an entailed query has a derivation set")
    }

    /// `N(q|B)` by exhaustive enumeration.
    pub fn min_trace_length(&self, q: &Formula) -> Option<usize> {
        self.min_derivation_sets(q).map(|(n, _)| n)
    }

    /// Base premises referenced by some shortest trace, over every minimum
    /// derivation set and every acyclic choice of justifications.
    pub fn ess_plus(&self, q: &Formula) -> Option<BTreeSet<Formula>> {
        let (n, sets) = self.min_derivation_sets(q)?;
        if n == 0 {
            return Some([q.clone()].into_iter().collect());
        }
        let mut out = BTreeSet::new();
        for d in sets {
            let avail: BTreeSet<&Formula> = d.iter().chain(self.base.iter()).collect();
            let options: Vec<Vec<Vec<Formula>>> = d
                .iter()
                .map(|f| {
                    self.justifications(f)
                        .into_iter()
                        .filter(|need| need.iter().all(|g| avail.contains(g)))
                        .collect()
                })
                .collect();
            let mut choice = vec![0usize; d.len()];
            loop {
                let picked: Vec<&Vec<Formula>> =
                    options.iter().zip(&choice).map(|(o, &c)| &o[c]).collect();
                if acyclic(&d, &picked) {
                    for need in &picked {
                        out.extend(need.iter().filter(|g| self.base.contains(*g)).cloned());
                    }
                }
                let mut k = 0;
                while k < choice.len() {
                    choice[k] += 1;
                    if choice[k] < options[k].len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == choice.len() {
                    break;
                }
            }
        }
        Some(out)
    }
}

/// Every element of `mask` becomes available by repeatedly applying a
/// justification whose requirements are already available.
fn well_founded(mask: u64, reqs: &[Vec<u64>]) -> bool {
    let mut done = 0u64;
    loop {
        let mut progress = false;
        for (i, rs) in reqs.iter().enumerate() {
            let bit = 1 << i;
            if mask & bit == 0 || done & bit != 0 {
                continue;
            }
            if rs.iter().any(|&r| r & mask == r && r & done == r) {
                done |= bit;
                progress = true;
            }
        }
        if done == mask {
            return true;
        }
        if !progress {
            return false;
        }
    }
}

fn acyclic(d: &[Formula], picked: &[&Vec<Formula>]) -> bool {
    let pos: BTreeMap<&Formula, usize> = d.iter().enumerate().map(|(i, f)| (f, i)).collect();
    let mut done = vec![false; d.len()];
    for _ in 0..d.len() {
        for i in 0..d.len() {
            if !done[i]
                && picked[i]
                    .iter()
                    .all(|g| pos.get(g).is_none_or(|&j| done[j]))
            {
                done[i] = true;
            }
        }
    }
    done.iter().all(|&x| x)
}

fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(u64)) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(idx.iter().fold(0u64, |m, &i| m | 1 << i));
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Herbrand atoms over the predicates (with their arities) and constants of a KB.
pub fn herbrand_atoms(kb: &KnowledgeBase) -> Vec<GroundAtom> {
    let mut sig: BTreeSet<(Symbol, usize)> = BTreeSet::new();
    for a in kb
        .facts
        .iter()
        .chain(kb.stored.iter().flat_map(|f| f.conjuncts()))
    {
        sig.insert((a.predicate.clone(), a.arity()));
    }
    for r in kb.system.rules() {
        for t in std::iter::once(&r.head).chain(&r.body) {
            sig.insert((t.predicate.clone(), t.terms.len()));
        }
    }
    let consts: Vec<&Symbol> = kb.constants.iter().collect();
    let mut out = Vec::new();
    for (p, arity) in sig {
        let total = consts.len().pow(arity as u32);
        for mut code in 0..total {
            let mut args = Vec::with_capacity(arity);
            for _ in 0..arity {
                args.push(consts[code % consts.len()].clone());
                code /= consts.len();
            }
            out.push(GroundAtom::new(p.clone(), args));
        }
    }
    out
}

/// Outcome of the core checks against the naive oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreCheck {
    pub queries: usize,
    /// Queries whose entailment differs between `S_O` and the core.
    pub mismatches: Vec<Formula>,
    /// Core members entailed by the rest of the core.
    pub redundant: Vec<Formula>,
}

impl CoreCheck {
    pub fn holds(&self) -> bool {
        self.mismatches.is_empty() && self.redundant.is_empty()
    }
}

/// Closure equivalence on every Herbrand atom, every `S_O` member and
/// every ordered pair of distinct Herbrand atoms, plus irredundancy.
pub fn check_core(kb: &KnowledgeBase, core: &PremiseBase) -> CoreCheck {
    let s_o = kb.operational_base();
    let full = Oracle::with_constants(&kb.system, &s_o, &kb.constants);
    let reduced = Oracle::with_constants(&kb.system, core, &kb.constants);
    let atoms = herbrand_atoms(kb);
    let mut queries: Vec<Formula> = atoms.iter().cloned().map(Formula::atom).collect();
    queries.extend(s_o.iter().cloned());
    for a in &atoms {
        for b in &atoms {
            if a != b {
                queries.push(Formula::new(vec![a.clone(), b.clone()]).expect("nonempty"));
            }
        }
    }
    let mismatches = queries
        .iter()
        .filter(|q| full.entails(q) != reduced.entails(q))
        .cloned()
        .collect();
    let redundant = core
        .iter()
        .filter(|s| {
            let rest = core.without([*s]);
            Oracle::with_constants(&kb.system, &rest, &kb.constants).entails(s)
        })
        .cloned()
        .collect();
    CoreCheck {
        queries: queries.len(),
        mismatches,
        redundant,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kbcost_core::{parse_formula, parse_kb};

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn stages_and_depths() {
        let kb =
            parse_kb("e(a,b).\ne(b,c).\np(X,Y) :- e(X,Y).\np(X,Z) :- p(X,Y), e(Y,Z).").unwrap();
        let o = Oracle::for_kb(&kb);
        assert_eq!(o.stage(&GroundAtom::parse("p(a,b)").unwrap()), Some(1));
        assert_eq!(o.stage(&GroundAtom::parse("p(a,c)").unwrap()), Some(2));
        assert_eq!(o.depth(&f("p(a,c) & e(a,b)")), Some(3));
        assert_eq!(o.depth(&f("p(c,a)")), None);
    }

    #[test]
    fn stored_prefix_resets_depth() {
        let kb = parse_kb("x(a).\ny(a).\nz(X) :- y(X).\n%stored\nx(a) & y(a)").unwrap();
        let o = Oracle::for_kb(&kb);
        assert_eq!(o.depth(&f("x(a) & y(a)")), Some(0));
        assert_eq!(o.depth(&f("x(a) & y(a) & z(a)")), Some(2));
    }

    #[test]
    fn derivation_sets_count_reuse_once() {
        let kb = parse_kb("x(a).\np(X) :- x(X).\nq(X) :- p(X).\nr(X) :- p(X), q(X).").unwrap();
        let o = Oracle::for_kb(&kb);
        assert_eq!(o.min_trace_length(&f("r(a)")), Some(3));
        assert_eq!(o.min_trace_length(&f("x(a)")), Some(0));
        assert_eq!(o.min_trace_length(&f("p(a) & q(a)")), Some(3));
        assert_eq!(o.min_trace_length(&f("x(a) & x(a)")), Some(1));
    }

    #[test]
    fn ess_plus_unions_alternatives() {
        let kb = parse_kb("x(a).\ny(a).\nz(a).\np(X) :- x(X).\np(X) :- y(X).").unwrap();
        let o = Oracle::for_kb(&kb);
        let e = o.ess_plus(&f("p(a)")).unwrap();
        assert_eq!(e, [f("x(a)"), f("y(a)")].into_iter().collect());
    }

    #[test]
    fn core_check_flags_redundancy() {
        let kb = parse_kb("x(a).\np(a).\np(X) :- x(X).").unwrap();
        let bad = kb.operational_base();
        let c = check_core(&kb, &bad);
        assert_eq!(c.redundant, vec![f("p(a)")]);
        let good = PremiseBase::new([f("x(a)")]);
        assert!(check_core(&kb, &good).holds());
    }

    #[test]
    fn combinations_are_complete() {
        let mut n = 0;
        for_each_combination(6, 3, &mut |_| n += 1);
        assert_eq!(n, 20);
    }
}
