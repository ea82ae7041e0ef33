//! Base-relative derivation depth.
//!
//! Base members have depth 0. A derived atom's depth is its closure stage,
//! i.e. one more than the largest body depth of its shallowest deriving
//! instance. A conjunction `φ ∧ a` outside the base has depth
//! `1 + max(depth φ, depth a)`.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

use crate::closure::{ClosureResult, Reasoner};
use crate::error::{Error, Result};
use crate::kbmodel::{Formula, GroundAtom, KnowledgeBase, PremiseBase, ProofSystem, RuleInstance};

/// Derivation depth or the unreachable sentinel, which orders last.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Depth {
    Finite(u32),
    Unreachable,
}

impl Depth {
    pub const ZERO: Depth = Depth::Finite(0);

    pub fn is_finite(self) -> bool {
        matches!(self, Depth::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Depth::Finite(d) => Some(d),
            Depth::Unreachable => None,
        }
    }

    fn from_stage(s: Option<u32>) -> Self {
        s.map_or(Depth::Unreachable, Depth::Finite)
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Finite(d) => write!(f, "{d}"),
            Depth::Unreachable => f.write_str("unreachable"),
        }
    }
}

/// How a formula in a depth witness is obtained.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Justification {
    Premise,
    Rule(RuleInstance),
    Conj { left: Formula, right: GroundAtom },
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DepthResult {
    pub depth: Depth,
    /// Chosen justification for every formula in the unfolding of the query;
    /// empty when unreachable.
    pub witness: BTreeMap<Formula, Justification>,
}

impl ClosureResult {
    /// `Dd(f | base)`.
    pub fn depth(&self, f: &Formula) -> Depth {
        if self.base().contains(f) {
            return Depth::ZERO;
        }
        let atoms = f.conjuncts();
        let mut d = Depth::from_stage(self.stage(&atoms[0]));
        for t in 2..=atoms.len() {
            // Stored prefixes reset the running depth.
            if t < atoms.len() && self.base().contains(&f.prefix(t)) {
                d = Depth::ZERO;
                continue;
            }
            let last = Depth::from_stage(self.stage(&atoms[t - 1]));
            d = match d.max(last) {
                Depth::Finite(x) => Depth::Finite(x + 1),
                Depth::Unreachable => return Depth::Unreachable,
            };
        }
        d
    }

    /// Immediate premises `P(s)` of a derivable non-member `s`.
    pub fn predecessors(&self, s: &Formula) -> Result<Vec<Formula>> {
        if self.base().contains(s) || !self.entails(s) {
            return Err(Error::UndefinedPredecessor(s.to_string()));
        }
        match s.split_last() {
            Some((left, right)) => Ok(alloc::vec![left, Formula::atom(right)]),
            None => {
                let inst = self
                    .via(&s.conjuncts()[0])
                    .ok_or_else(|| Error::UndefinedPredecessor(s.to_string()))?;
                Ok(inst.body.into_iter().map(Formula::atom).collect())
            }
        }
    }

    /// Depth together with the justification of every formula it unfolds to.
    pub fn depth_result(&self, q: &Formula) -> DepthResult {
        let depth = self.depth(q);
        let mut witness = BTreeMap::new();
        if depth.is_finite() {
            let mut stack = alloc::vec![q.clone()];
            while let Some(f) = stack.pop() {
                if witness.contains_key(&f) {
                    continue;
                }
                let j = if self.base().contains(&f) {
                    Justification::Premise
                } else if let Some((left, right)) = f.split_last() {
                    stack.push(left.clone());
                    stack.push(Formula::atom(right.clone()));
                    Justification::Conj { left, right }
                } else {
                    let inst = self
                        .via(&f.conjuncts()[0])
                        .expect("derivable atom has a witness");
                    stack.extend(inst.body.iter().cloned().map(Formula::atom));
                    Justification::Rule(inst)
                };
                witness.insert(f, j);
            }
        }
        DepthResult { depth, witness }
    }
}

/// `Dd(q | base)` with its witness.
pub fn derivation_depth(q: &Formula, base: &PremiseBase, system: &ProofSystem) -> DepthResult {
    Reasoner::new(system, base).closure(base).depth_result(q)
}

/// `P(s)` relative to `base`.
pub fn predecessors(s: &Formula, base: &PremiseBase, system: &ProofSystem) -> Result<Vec<Formula>> {
    Reasoner::new(system, base).closure(base).predecessors(s)
}

/// Intrinsic, operational and cache-augmented depths of one query.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DepthProfile {
    pub n_int: u32,
    pub n_op: u32,
    pub n_cached: u32,
}

/// `(Dd(q|A), Dd(q|S_O), Dd(q|S_O ∪ cache))` with `A = Atom(S_O)`.
pub fn depth_profile<'a>(
    kb: &KnowledgeBase,
    q: &Formula,
    cache: impl IntoIterator<Item = &'a Formula>,
) -> Result<DepthProfile> {
    let s_o = kb.operational_base();
    let reasoner = Reasoner::new(&kb.system, &s_o);
    let (core, _) = reasoner.atom_core(&s_o);
    let n_int = reasoner
        .closure(&core)
        .depth(q)
        .finite()
        .ok_or(Error::UnreachableQuery)?;
    let n_op = reasoner
        .closure(&s_o)
        .depth(q)
        .finite()
        .ok_or(Error::UnreachableQuery)?;
    let cached = s_o.with(cache);
    let n_cached = reasoner
        .closure(&cached)
        .depth(q)
        .finite()
        .ok_or(Error::UnreachableQuery)?;
    Ok(DepthProfile {
        n_int,
        n_op,
        n_cached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbmodel::parse_kb;
    use proptest::prelude::*;

    fn f(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    const PATH: &str =
        "e(1,2).\ne(2,3).\ne(3,4).\npath(X,Y) :- e(X,Y).\npath(X,Z) :- path(X,Y), e(Y,Z).";

    #[test]
    fn depth_examples() {
        let kb = parse_kb(PATH).unwrap();
        let base = kb.operational_base();
        assert_eq!(
            derivation_depth(&f("e(1,2)"), &base, &kb.system).depth,
            Depth::ZERO
        );
        assert_eq!(
            derivation_depth(&f("path(1,4)"), &base, &kb.system).depth,
            Depth::Finite(3)
        );
        assert_eq!(
            derivation_depth(&f("path(4,1)"), &base, &kb.system).depth,
            Depth::Unreachable
        );
        // n+1 distinct base atoms in a left-associated conjunction.
        let kb = parse_kb("a(1).\na(2).\na(3).\na(4).").unwrap();
        let base = kb.operational_base();
        let q = f("a(3) & a(1) & a(4) & a(2)");
        assert_eq!(
            derivation_depth(&q, &base, &kb.system).depth,
            Depth::Finite(3)
        );
    }

    #[test]
    fn conjunction_depth_uses_both_sides() {
        let kb = parse_kb(PATH).unwrap();
        let base = kb.operational_base();
        let q = f("e(1,2) & path(1,4)");
        assert_eq!(
            derivation_depth(&q, &base, &kb.system).depth,
            Depth::Finite(4)
        );
        let stored = base.with([&f("e(1,2) & e(2,3)")]);
        let q = f("e(1,2) & e(2,3) & e(3,4)");
        assert_eq!(
            derivation_depth(&q, &stored, &kb.system).depth,
            Depth::Finite(1)
        );
        assert_eq!(
            derivation_depth(&q, &base, &kb.system).depth,
            Depth::Finite(2)
        );
    }

    #[test]
    fn predecessor_examples() {
        let kb = parse_kb("q(a).\nr(a).\np(X) :- q(X).").unwrap();
        let base = kb.operational_base();
        assert_eq!(
            predecessors(&f("p(a)"), &base, &kb.system).unwrap(),
            alloc::vec![f("q(a)")]
        );
        assert_eq!(
            predecessors(&f("q(a) & r(a)"), &base, &kb.system).unwrap(),
            alloc::vec![f("q(a)"), f("r(a)")]
        );
        assert!(predecessors(&f("q(a)"), &base, &kb.system).is_err());
        assert!(predecessors(&f("z(a)"), &base, &kb.system).is_err());

        // Two rules for p(a): via s (body stage 1) and via t (body stage 3).
        let kb = parse_kb("b(a).\ns(X) :- b(X).\nt1(X) :- b(X).\nt2(X) :- t1(X).\nt(X) :- t2(X).\np(X) :- t(X).\np(X) :- s(X).").unwrap();
        let base = kb.operational_base();
        assert_eq!(
            predecessors(&f("p(a)"), &base, &kb.system).unwrap(),
            alloc::vec![f("s(a)")]
        );
    }

    #[test]
    fn profile_examples() {
        let kb =
            parse_kb("r(a).\nq(X) :- r(X).\np(X) :- q(X).\ns(X) :- p(X).\n%stored\np(a)").unwrap();
        let q = f("s(a)");
        let p = depth_profile(&kb, &q, []).unwrap();
        assert_eq!((p.n_int, p.n_op, p.n_cached), (3, 1, 1));
        let p = depth_profile(&kb, &q, [&q]).unwrap();
        assert_eq!(p.n_cached, 0);
        assert!(matches!(
            depth_profile(&kb, &f("z(a)"), []),
            Err(Error::UnreachableQuery)
        ));
    }

    /// Height of a witness unfolding, replaying every justification.
    fn replay_height(w: &BTreeMap<Formula, Justification>, f: &Formula) -> u32 {
        match &w[f] {
            Justification::Premise => 0,
            Justification::Conj { left, right } => {
                assert_eq!(&left.conj(right), f);
                1 + replay_height(w, left).max(replay_height(w, &Formula::atom(right.clone())))
            }
            Justification::Rule(inst) => {
                assert_eq!(Formula::atom(inst.head.clone()), *f);
                1 + inst
                    .body
                    .iter()
                    .map(|b| replay_height(w, &Formula::atom(b.clone())))
                    .max()
                    .unwrap()
            }
        }
    }

    fn arb_kb_text() -> impl Strategy<Value = String> {
        let atom = ("[pqrs]", "[abc]").prop_map(|(p, x)| alloc::format!("{p}({x})"));
        let rules = proptest::sample::subsequence(
            alloc::vec![
                "p(X) :- q(X).",
                "q(X) :- r(X), s(X).",
                "r(X) :- p(X).",
                "s(b) :- q(a).",
                "p(X) :- s(X), r(X).",
                "s(X) :- p(X).",
            ],
            0..6,
        );
        (
            proptest::collection::vec(atom, 0..6),
            rules,
            proptest::collection::vec(("[pqrs]", "[abc]"), 0..2),
        )
            .prop_map(|(facts, rules, stored)| {
                let mut text = String::new();
                for a in facts {
                    text += &a;
                    text += ".\n";
                }
                for r in rules {
                    text += r;
                    text += "\n";
                }
                text += "%stored\n";
                for (p, x) in stored {
                    text += &alloc::format!("{p}({x}) & q(a)\n");
                }
                text
            })
    }

    proptest! {
        #[test]
        fn witness_replays_to_depth(text in arb_kb_text(), preds in proptest::collection::vec(("[pqrs]", "[abc]"), 1..4)) {
            let kb = parse_kb(&text).unwrap();
            let base = kb.operational_base();
            let q = Formula::new(preds.iter().map(|(p, x)| GroundAtom::parse(&alloc::format!("{p}({x})")).unwrap()).collect()).unwrap();
            let r = derivation_depth(&q, &base, &kb.system);
            if let Depth::Finite(d) = r.depth {
                prop_assert_eq!(replay_height(&r.witness, &q), d);
            } else {
                prop_assert!(r.witness.is_empty());
            }
        }

        #[test]
        fn depth_is_antitone_in_base(text in arb_kb_text(), mask in any::<u16>(), p in "[pqrs]", x in "[abc]") {
            let kb = parse_kb(&text).unwrap();
            let big = kb.operational_base();
            let small = PremiseBase::new(big.iter().enumerate().filter(|(i, _)| mask >> (i % 16) & 1 == 1).map(|(_, f)| f.clone()));
            let q = f(&alloc::format!("{p}({x})"));
            let reasoner = Reasoner::new(&kb.system, &big);
            prop_assert!(reasoner.closure(&big).depth(&q) <= reasoner.closure(&small).depth(&q));
        }
    }
}
