//! Seeded instance generators for the verification suites.

use std::collections::BTreeSet;

use kbcost_core::allocation::{dr_check_exhaustive, CandidateSet, DepthObjective};
use kbcost_core::noise::NoiseSpec;
use kbcost_core::trace::{DerivationTrace, Step};
use kbcost_core::tradeoff::Workload;
use kbcost_core::{parse_formula, parse_kb, Formula, GroundAtom, KnowledgeBase, PremiseBase};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::{herbrand_atoms, Oracle};

pub type Rng8 = ChaCha8Rng;

fn f(s: &str) -> Formula {
    parse_formula(s).expect("generated formula parses")
}

/// A random KB with at most 12 Herbrand atoms, with its source text.
#[derive(Clone, Debug)]
pub struct SmallKb {
    pub text: String,
    pub kb: KnowledgeBase,
    pub atoms: Vec<GroundAtom>,
}

/// Unary predicates `p0..`, an optional binary `e`, and 1 to 3 constants.
pub fn small_kb(rng: &mut Rng8) -> SmallKb {
    const CONSTS: [&str; 3] = ["a", "b", "c"];
    let nc = rng.gen_range(1..=3usize);
    let consts = &CONSTS[..nc];
    let binary = nc <= 2 && rng.gen_bool(0.4);
    let room = 12 - if binary { nc * nc } else { 0 };
    let nu = rng.gen_range(2..=(room / nc).min(6));
    let unary: Vec<String> = (0..nu).map(|i| format!("p{i}")).collect();

    let mut lines = Vec::new();
    let mut herbrand: Vec<String> = Vec::new();
    for p in &unary {
        for c in consts {
            herbrand.push(format!("{p}({c})"));
        }
    }
    if binary {
        for x in consts {
            for y in consts {
                herbrand.push(format!("e({x},{y})"));
            }
        }
    }
    let mut facts: Vec<&String> = herbrand.iter().filter(|_| rng.gen_bool(0.3)).collect();
    if facts.is_empty() {
        facts.push(herbrand.choose(rng).expect("nonempty"));
    }
    for a in &facts {
        lines.push(format!("{a}."));
    }
    for _ in 0..rng.gen_range(1..=6) {
        let head = unary.choose(rng).expect("nonempty");
        let rule = if binary && rng.gen_bool(0.3) {
            let p = unary.choose(rng).expect("nonempty");
            format!("{head}(X) :- e(X,Y), {p}(Y).")
        } else {
            let body: Vec<String> = (0..rng.gen_range(1..=2))
                .map(|_| format!("{}(X)", unary.choose(rng).expect("nonempty")))
                .collect();
            format!("{head}(X) :- {}.", body.join(", "))
        };
        lines.push(rule);
    }
    if rng.gen_bool(0.3) {
        lines.push("%stored".into());
        for _ in 0..rng.gen_range(1..=2) {
            let a = herbrand.choose(rng).expect("nonempty");
            let b = herbrand.choose(rng).expect("nonempty");
            lines.push(format!("{a} & {b}"));
        }
    }
    let text = lines.join("\n") + "\n";
    let kb = parse_kb(&text).expect("generated KB parses");
    let atoms = herbrand_atoms(&kb);
    debug_assert!(atoms.len() <= 12);
    SmallKb { text, kb, atoms }
}

/// Derivable atoms, all stored formulas, and a few derivable conjunctions
/// of two or three atoms (stored prefixes included where present).
pub fn small_queries(kb: &SmallKb, rng: &mut Rng8) -> Vec<Formula> {
    let o = Oracle::for_kb(&kb.kb);
    let derivable: Vec<GroundAtom> = o.derivable_atoms().cloned().collect();
    let mut out: BTreeSet<Formula> = derivable.iter().cloned().map(Formula::atom).collect();
    out.extend(kb.kb.stored.iter().cloned());
    if !derivable.is_empty() {
        for _ in 0..3 {
            let t = rng.gen_range(2..=3);
            let atoms = (0..t)
                .map(|_| derivable.choose(rng).expect("nonempty").clone())
                .collect();
            out.insert(Formula::new(atoms).expect("nonempty"));
        }
        for s in &kb.kb.stored {
            let a = derivable.choose(rng).expect("nonempty");
            out.insert(s.conj(a));
        }
    }
    out.into_iter().collect()
}

/// Proof system for random traces: conjunction introduction plus rules of
/// arity 1 to 3 that accept any atom.
pub const TRACE_SYSTEM: &str = "a(X) :- a(X).\na(X) :- a(X), a(Y).\na(X) :- a(X), a(Y), a(Z).\n";

/// Base `a(c0..c{m-1})` for [`TRACE_SYSTEM`].
pub fn trace_base(m: usize) -> PremiseBase {
    PremiseBase::new((0..m).map(|i| f(&format!("a(c{i})"))))
}

/// A random replayable trace with `1 <= m <= max_m` and `n <= max_n` steps.
pub fn random_trace(
    system: &kbcost_core::ProofSystem,
    max_m: usize,
    max_n: usize,
    rng: &mut Rng8,
) -> DerivationTrace {
    let m = rng.gen_range(1..=max_m);
    let n = rng.gen_range(0..=max_n);
    let mut is_atom = vec![true; m];
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let pool = m + i;
        let atoms: Vec<usize> = (0..pool).filter(|&p| is_atom[p]).collect();
        let rule_id = rng.gen_range(0..system.rule_count() as u32);
        let premises: Vec<usize> = if rule_id == 0 {
            vec![
                rng.gen_range(0..pool),
                *atoms.choose(rng).expect("base atoms"),
            ]
        } else {
            let arity = system.arity(rule_id).expect("rule exists");
            (0..arity)
                .map(|_| *atoms.choose(rng).expect("base atoms"))
                .collect()
        };
        is_atom.push(rule_id != 0);
        steps.push(Step { rule_id, premises });
    }
    let output = rng.gen_range(0..m + n);
    DerivationTrace { m, steps, output }
}

/// A budgeted allocation instance.
#[derive(Clone, Debug)]
pub struct AllocInstance {
    pub kb: KnowledgeBase,
    pub workload: Workload,
    pub candidates: CandidateSet,
    pub budget: u64,
}

/// Random DAG of single-body rules over nodes `v0..v{k-1}`; every query
/// depth is then a shortest-path distance, so caching acts like a facility
/// location objective.
fn single_body_instance(rng: &mut Rng8, candidates: usize) -> AllocInstance {
    let nodes: usize = 18;
    let mut lines = vec!["v0(c).".to_string()];
    for j in 1..nodes {
        let parents: BTreeSet<usize> = (0..rng.gen_range(1..=2))
            .map(|_| rng.gen_range(j.saturating_sub(4)..j))
            .collect();
        for i in parents {
            lines.push(format!("v{j}(X) :- v{i}(X)."));
        }
    }
    let kb = parse_kb(&lines.join("\n")).expect("generated KB parses");
    let mut qnodes: Vec<usize> = (8..nodes).collect();
    qnodes.shuffle(rng);
    qnodes.truncate(rng.gen_range(2..=5));
    let weights: Vec<f64> = qnodes.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let entries = normalized(
        qnodes
            .iter()
            .map(|j| f(&format!("v{j}(c)")))
            .zip(weights)
            .collect(),
    );
    let workload = Workload::new(entries, 1000).expect("valid workload");
    let mut cnodes: Vec<usize> = (1..nodes).collect();
    cnodes.shuffle(rng);
    cnodes.truncate(candidates);
    let candidates = CandidateSet::new(
        cnodes
            .iter()
            .map(|j| (f(&format!("v{j}(c)")), rng.gen_range(1..=6u64))),
    )
    .expect("distinct candidates");
    AllocInstance {
        kb,
        workload,
        candidates,
        budget: rng.gen_range(4..=14),
    }
}

/// Scales weights to sum to one, absorbing rounding in the last entry.
pub fn normalized<T>(mut entries: Vec<(T, f64)>) -> Vec<(T, f64)> {
    let total: f64 = entries.iter().map(|(_, w)| w).sum();
    for e in entries.iter_mut() {
        e.1 /= total;
    }
    // The rounding residual goes to the largest entry so no weight hits zero.
    let top = (0..entries.len())
        .max_by(|&a, &b| entries[a].1.total_cmp(&entries[b].1))
        .expect("non-empty");
    let rest: f64 = entries
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != top)
        .map(|(_, (_, w))| w)
        .sum();
    entries[top].1 = 1.0 - rest;
    entries
}

/// A random 10-candidate instance whose objective passes the exhaustive
/// diminishing-returns check, with the number of rejected draws.
pub fn dr_instance(rng: &mut Rng8) -> (AllocInstance, usize) {
    let mut rejected = 0;
    loop {
        let inst = single_body_instance(rng, 10);
        let mut obj = DepthObjective::new(&inst.kb, &inst.workload, &inst.candidates);
        let r = dr_check_exhaustive(&mut obj).expect("10 candidates");
        if r.violations == 0 && r.component_violations == 0 {
            return (inst, rejected);
        }
        rejected += 1;
    }
}

/// Two depth-5 chains joined by one conjunctive query: caching either end
/// alone saves nothing, caching both saves 5.
pub fn supermodular_instance() -> AllocInstance {
    let mut lines = vec!["x(c).".to_string()];
    for p in ["a", "b"] {
        lines.push(format!("{p}1(X) :- x(X)."));
        for i in 2..=4 {
            lines.push(format!("{p}{i}(X) :- {p}{}(X).", i - 1));
        }
        lines.push(format!("{p}(X) :- {p}4(X)."));
    }
    let kb = parse_kb(&lines.join("\n")).expect("fixed KB parses");
    let workload = Workload::new(vec![(f("a(c) & b(c)"), 1.0)], 100).expect("valid");
    let candidates = CandidateSet::new([(f("a(c)"), 1), (f("b(c)"), 1)]).expect("valid");
    AllocInstance {
        kb,
        workload,
        candidates,
        budget: 2,
    }
}

/// A noisy-base instance.
#[derive(Clone, Debug)]
pub struct NoiseInstance {
    pub kb: KnowledgeBase,
    pub spec: NoiseSpec,
    pub query: Formula,
}

/// Loss-only, pollution-only or mixed noise on a random small KB, with a
/// query derivable from the baseline.
pub fn noise_instance(rng: &mut Rng8) -> Option<NoiseInstance> {
    let skb = small_kb(rng);
    let queries = small_queries(&skb, rng);
    let query = queries.choose(rng)?.clone();
    let base = skb.kb.operational_base();
    let mode = rng.gen_range(0..3);
    let lost: BTreeSet<Formula> = if mode == 1 {
        BTreeSet::new()
    } else {
        let mut l: BTreeSet<Formula> = base
            .iter()
            .filter(|_| rng.gen_bool(0.35))
            .cloned()
            .collect();
        if l.is_empty() {
            l.insert(base.as_slice().choose(rng)?.clone());
        }
        l
    };
    let spurious: BTreeSet<Formula> = if mode == 0 {
        BTreeSet::new()
    } else {
        let pool: Vec<Formula> = skb
            .atoms
            .iter()
            .cloned()
            .map(Formula::atom)
            .filter(|a| !base.contains(a))
            .collect();
        let mut s: BTreeSet<Formula> = pool
            .iter()
            .filter(|_| rng.gen_bool(0.25))
            .cloned()
            .collect();
        if s.is_empty() {
            s.insert(pool.choose(rng)?.clone());
        }
        s
    };
    Some(NoiseInstance {
        kb: skb.kb,
        spec: NoiseSpec::new(lost, spurious),
        query,
    })
}

/// Chain `x0 -> x1 -> ... -> x{len}` with `x{mid}` stored; losing it makes
/// the depth of `x{len}` grow by exactly the reconstruction depth.
pub fn chain_equality_instance(len: usize, mid: usize) -> NoiseInstance {
    assert!(0 < mid && mid < len);
    let mut lines = vec!["x0(c).".to_string(), format!("x{mid}(c).")];
    for i in 1..=len {
        lines.push(format!("x{i}(X) :- x{}(X).", i - 1));
    }
    let kb = parse_kb(&lines.join("\n")).expect("fixed KB parses");
    let spec = NoiseSpec::new([f(&format!("x{mid}(c)"))].into(), BTreeSet::new());
    NoiseInstance {
        kb,
        spec,
        query: f(&format!("x{len}(c)")),
    }
}

/// A two-phase SLA instance: a shared hub `m(a)` is stored and then lost.
#[derive(Clone, Debug)]
pub struct SlaInstance {
    pub kb: KnowledgeBase,
    pub spec: NoiseSpec,
    pub queries: Vec<(Formula, f64)>,
    pub candidates: CandidateSet,
    pub h: u32,
    pub budget: u64,
}

/// `branches` goals hang off the hub at depth 2; the hub is rebuilt by a
/// chain of length `chain`. Each branch shortcut costs 3 and the budget
/// affords compensation plus all but one shortcut, so only restoring the
/// hub meets the SLA.
pub fn sla_instance(branches: usize, chain: usize) -> SlaInstance {
    assert!(branches >= 2 && chain >= 2);
    let mut lines = vec!["x(a).".to_string(), "m(a).".to_string()];
    lines.push("k1(X) :- x(X).".into());
    for i in 2..=chain {
        lines.push(format!("k{i}(X) :- k{}(X).", i - 1));
    }
    lines.push(format!("m(X) :- k{chain}(X)."));
    for b in 1..=branches {
        lines.push(format!("g{b}(X) :- m(X)."));
        lines.push(format!("goal{b}(X) :- g{b}(X)."));
    }
    let kb = parse_kb(&lines.join("\n")).expect("fixed KB parses");
    let spec = NoiseSpec::new([f("m(a)")].into(), BTreeSet::new());
    let queries = normalized(
        (1..=branches)
            .map(|b| (f(&format!("goal{b}(a)")), 1.0))
            .collect(),
    );
    let mut cands: Vec<(Formula, u64)> = (1..=branches)
        .map(|b| (f(&format!("g{b}(a)")), 3))
        .collect();
    cands.push((f(&format!("k{}(a)", chain / 2 + 1)), 2));
    let candidates = CandidateSet::new(cands).expect("distinct");
    // Index width over the two baseline premises is one bit.
    let budget = 1 + 3 * (branches as u64 - 1);
    SlaInstance {
        kb,
        spec,
        queries,
        candidates,
        h: 2,
        budget,
    }
}

/// A random distribution over `1..=64` outcomes: uniform, geometric-like
/// or irregular.
pub fn distribution(rng: &mut Rng8) -> Vec<f64> {
    let n = rng.gen_range(1..=64usize);
    let w: Vec<f64> = match rng.gen_range(0..3) {
        0 => vec![1.0; n],
        1 => {
            let r: f64 = rng.gen_range(0.3..0.95);
            (0..n).map(|i| r.powi(i as i32)).collect()
        }
        _ => (0..n).map(|_| rng.gen_range(0.001..1.0)).collect(),
    };
    normalized(w.into_iter().map(|x| ((), x)).collect())
        .into_iter()
        .map(|(_, p)| p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use kbcost_core::trace::replay_validate;
    use rand::SeedableRng;

    #[test]
    fn small_kbs_stay_small() {
        let mut rng = Rng8::seed_from_u64(1);
        for _ in 0..200 {
            let k = small_kb(&mut rng);
            assert!(k.atoms.len() <= 12, "{}", k.text);
        }
    }

    #[test]
    fn random_traces_replay() {
        let kb = parse_kb(TRACE_SYSTEM).unwrap();
        let mut rng = Rng8::seed_from_u64(2);
        for _ in 0..200 {
            let t = random_trace(&kb.system, 10, 12, &mut rng);
            replay_validate(&t, &trace_base(t.m), &kb.system).unwrap();
        }
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut rng = Rng8::seed_from_u64(3);
        for _ in 0..50 {
            let p = distribution(&mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }
}
