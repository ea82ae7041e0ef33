//! Shortest-trace search and essential premise sets.
//!
//! A trace of length `n` corresponds to a set `D` of `n` derived formulas
//! that can be ordered so that each has a rule option whose premises lie in
//! the base or earlier in `D`. Minimal sets only contain formulas reachable
//! backwards from the query, so the search runs over that finite AND/OR
//! graph: pick the least open goal, branch on its options, and accept a
//! closed state once a forward pass confirms that `D` is derivable. Bounds
//! grow from the query's depth up to the size of its depth witness, which is
//! always a valid set.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use super::{DerivationTrace, Step};
use crate::closure::{ClosureResult, Reasoner};
use crate::depth::{Depth, Justification};
use crate::error::{Error, Result};
use crate::kbmodel::{Formula, PremiseBase, ProofSystem, CONJ_INTRO};

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;
pub const DEFAULT_TRACE_CAP: usize = 100_000;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SearchConfig {
    /// Search states expanded before falling back to an upper bound.
    pub node_budget: u64,
    /// Shortest traces enumerated before an essential set is flagged approximate.
    pub trace_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            node_budget: DEFAULT_NODE_BUDGET,
            trace_cap: DEFAULT_TRACE_CAP,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ShortestTraceResult {
    /// `N(q|B)` when `exact`, otherwise an upper bound.
    pub n: usize,
    pub exact: bool,
    pub witness: DerivationTrace,
    pub atoms_used: BTreeSet<Formula>,
    pub depth: u32,
    pub nodes_expanded: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EssMode {
    Exact,
    /// Union over at most this many shortest derivation sets.
    Sampled(usize),
}

#[derive(Clone, PartialEq, Debug)]
pub struct EssPlus {
    pub atoms: BTreeSet<Formula>,
    pub n: usize,
    /// False when sampled, capped, or the shortest length is only bounded.
    pub exact: bool,
    pub traces_enumerated: usize,
    pub m_eff: usize,
    /// `m_eff / |B|`.
    pub lambda: f64,
}

type NodeId = usize;

#[derive(Debug)]
struct Opt {
    rule_id: u32,
    premises: Vec<NodeId>,
    distinct: Vec<NodeId>,
}

/// Backward-reachable formulas of a query with their derivation options.
#[derive(Debug)]
struct Graph {
    nodes: Vec<Formula>,
    index: BTreeMap<Formula, NodeId>,
    is_base: Vec<bool>,
    options: Vec<Vec<Opt>>,
}

impl Graph {
    fn build(c: &ClosureResult, q: &Formula) -> Graph {
        let mut g = Graph {
            nodes: Vec::new(),
            index: BTreeMap::new(),
            is_base: Vec::new(),
            options: Vec::new(),
        };
        let mut queue = VecDeque::new();
        queue.push_back(g.intern(c, q.clone()));
        while let Some(id) = queue.pop_front() {
            if g.is_base[id] {
                continue;
            }
            let f = g.nodes[id].clone();
            let mut opts = Vec::new();
            if let Some((left, right)) = f.split_last() {
                let premises = [left, Formula::atom(right)];
                if premises.iter().all(|p| c.entails(p)) {
                    let ids: Vec<NodeId> = premises
                        .into_iter()
                        .map(|p| g.intern_queued(c, p, &mut queue))
                        .collect();
                    opts.push(Opt {
                        rule_id: CONJ_INTRO,
                        distinct: dedup(&ids),
                        premises: ids,
                    });
                }
            } else if let Some(aid) = c.program().atom_id(&f.conjuncts()[0]) {
                for &k in c.program().deriving(aid) {
                    let body = c.program().instance_body(k);
                    if body.iter().all(|&b| c.stage_by_id(b).is_some()) {
                        let ids: Vec<NodeId> = body
                            .iter()
                            .map(|&b| {
                                g.intern_queued(
                                    c,
                                    Formula::atom(c.program().atom(b).clone()),
                                    &mut queue,
                                )
                            })
                            .collect();
                        opts.push(Opt {
                            rule_id: c.program().instance_rule(k),
                            distinct: dedup(&ids),
                            premises: ids,
                        });
                    }
                }
            }
            g.options[id] = opts;
        }
        g
    }

    fn intern(&mut self, c: &ClosureResult, f: Formula) -> NodeId {
        if let Some(&id) = self.index.get(&f) {
            return id;
        }
        let id = self.nodes.len();
        self.is_base.push(c.base().contains(&f));
        self.index.insert(f.clone(), id);
        self.nodes.push(f);
        self.options.push(Vec::new());
        id
    }

    fn intern_queued(
        &mut self,
        c: &ClosureResult,
        f: Formula,
        queue: &mut VecDeque<NodeId>,
    ) -> NodeId {
        let fresh = !self.index.contains_key(&f);
        let id = self.intern(c, f);
        if fresh {
            queue.push_back(id);
        }
        id
    }

    fn available(&self, p: NodeId, done: &BTreeSet<NodeId>) -> bool {
        self.is_base[p] || done.contains(&p)
    }

    /// Whether `d` can be ordered into a valid derivation.
    fn derivable(&self, d: &BTreeSet<NodeId>) -> bool {
        let mut done = BTreeSet::new();
        loop {
            let before = done.len();
            for &x in d {
                if !done.contains(&x)
                    && self.options[x]
                        .iter()
                        .any(|o| o.distinct.iter().all(|&p| self.available(p, &done)))
                {
                    done.insert(x);
                }
            }
            if done.len() == d.len() {
                return true;
            }
            if done.len() == before {
                return false;
            }
        }
    }

    /// Orders `d` by repeatedly taking the canonically least ready formula,
    /// each with its first ready option.
    fn to_trace(&self, d: &BTreeSet<NodeId>, root: NodeId, base: &PremiseBase) -> DerivationTrace {
        let m = base.len();
        let mut pos: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut remaining: Vec<NodeId> = d.iter().copied().collect();
        remaining.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        let mut done = BTreeSet::new();
        let mut steps = Vec::new();
        let pointer = |p: NodeId, pos: &BTreeMap<NodeId, usize>| {
            if self.is_base[p] {
                base.index_of(&self.nodes[p]).expect("base node")
            } else {
                pos[&p]
            }
        };
        while !remaining.is_empty() {
            let (k, opt) = remaining
                .iter()
                .enumerate()
                .find_map(|(k, &x)| {
                    self.options[x]
                        .iter()
                        .find(|o| o.distinct.iter().all(|&p| self.available(p, &done)))
                        .map(|o| (k, o))
                })
                .expect("derivable set");
            let x = remaining.remove(k);
            steps.push(Step {
                rule_id: opt.rule_id,
                premises: opt.premises.iter().map(|&p| pointer(p, &pos)).collect(),
            });
            pos.insert(x, m + steps.len() - 1);
            done.insert(x);
        }
        DerivationTrace {
            m,
            steps,
            output: pointer(root, &pos),
        }
    }
}

fn dedup(ids: &[NodeId]) -> Vec<NodeId> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

struct Search<'g> {
    g: &'g Graph,
    budget: u64,
    expanded: u64,
    exhausted: bool,
    visited: BTreeSet<(Vec<NodeId>, Vec<NodeId>)>,
    solutions: BTreeSet<Vec<NodeId>>,
    max_solutions: usize,
}

impl Search<'_> {
    /// Returns true when the search should stop.
    fn dfs(&mut self, d: &BTreeSet<NodeId>, open: &BTreeSet<NodeId>, bound: usize) -> bool {
        if self.expanded >= self.budget {
            self.exhausted = true;
            return true;
        }
        self.expanded += 1;
        if d.len() + open.len() > bound {
            return false;
        }
        let Some(&goal) = open.first() else {
            if self.g.derivable(d) {
                self.solutions.insert(d.iter().copied().collect());
                return self.solutions.len() >= self.max_solutions;
            }
            return false;
        };
        if !self
            .visited
            .insert((d.iter().copied().collect(), open.iter().copied().collect()))
        {
            return false;
        }
        for opt in &self.g.options[goal] {
            let mut d2 = d.clone();
            d2.insert(goal);
            let mut o2 = open.clone();
            o2.remove(&goal);
            for &p in &opt.distinct {
                if !self.g.is_base[p] && !d2.contains(&p) {
                    o2.insert(p);
                }
            }
            if self.dfs(&d2, &o2, bound) {
                return true;
            }
        }
        false
    }
}

fn witness_set(c: &ClosureResult, g: &Graph, q: &Formula) -> BTreeSet<NodeId> {
    c.depth_result(q)
        .witness
        .into_iter()
        .filter(|(_, j)| !matches!(j, Justification::Premise))
        .map(|(f, _)| g.index[&f])
        .collect()
}

struct Found {
    n: usize,
    /// `n` is the true minimum.
    exact: bool,
    /// Every minimum set was collected.
    complete: bool,
    sets: BTreeSet<Vec<NodeId>>,
    expanded: u64,
}

/// Finds the shortest derivation sets of the root (node 0), up to `max_solutions` of them.
fn shortest_sets(
    c: &ClosureResult,
    g: &Graph,
    q: &Formula,
    budget: u64,
    max_solutions: usize,
) -> Found {
    let lo = c.depth(q).finite().expect("entailed") as usize;
    let fallback = witness_set(c, g, q);
    let hi = fallback.len();
    let mut expanded = 0u64;
    for bound in lo..=hi {
        let mut s = Search {
            g,
            budget: budget.saturating_sub(expanded),
            expanded: 0,
            exhausted: false,
            visited: BTreeSet::new(),
            solutions: BTreeSet::new(),
            max_solutions,
        };
        let open: BTreeSet<NodeId> = [0].into_iter().collect();
        s.dfs(&BTreeSet::new(), &open, bound);
        expanded += s.expanded;
        if !s.solutions.is_empty() {
            let n = s.solutions.iter().next().map_or(bound, Vec::len);
            debug_assert!(s.solutions.iter().all(|d| d.len() == n));
            return Found {
                n,
                exact: true,
                complete: !s.exhausted,
                sets: s.solutions,
                expanded,
            };
        }
        if s.exhausted {
            break;
        }
    }
    Found {
        n: hi,
        exact: false,
        complete: false,
        sets: [fallback.into_iter().collect()].into_iter().collect(),
        expanded,
    }
}

/// `N(q|B)` with a canonical witness trace, given a closure of the base.
pub fn min_trace_length_in(
    c: &ClosureResult,
    q: &Formula,
    cfg: &SearchConfig,
) -> Result<ShortestTraceResult> {
    let base = c.base();
    if let Some(i) = base.index_of(q) {
        let witness = DerivationTrace {
            m: base.len(),
            steps: Vec::new(),
            output: i,
        };
        return Ok(ShortestTraceResult {
            n: 0,
            exact: true,
            atoms_used: witness.atoms_used(base),
            witness,
            depth: 0,
            nodes_expanded: 0,
        });
    }
    let Depth::Finite(depth) = c.depth(q) else {
        return Err(Error::UnreachableQuery);
    };
    let g = Graph::build(c, q);
    let found = shortest_sets(c, &g, q, cfg.node_budget, 1);
    let d: BTreeSet<NodeId> = found
        .sets
        .iter()
        .next()
        .expect("nonempty")
        .iter()
        .copied()
        .collect();
    let witness = g.to_trace(&d, 0, base);
    Ok(ShortestTraceResult {
        n: found.n,
        exact: found.exact,
        atoms_used: witness.atoms_used(base),
        witness,
        depth,
        nodes_expanded: found.expanded,
    })
}

pub fn min_trace_length(
    q: &Formula,
    base: &PremiseBase,
    system: &ProofSystem,
    cfg: &SearchConfig,
) -> Result<ShortestTraceResult> {
    min_trace_length_in(&Reasoner::new(system, base).closure(base), q, cfg)
}

/// Enumerates acyclic option choices for the members of `d`, adding the base
/// premises each choice references. Returns false once `cap` is reached.
fn enumerate_choices(
    g: &Graph,
    d: &[NodeId],
    k: usize,
    chosen: &mut Vec<usize>,
    atoms: &mut BTreeSet<NodeId>,
    count: &mut usize,
    cap: usize,
) -> bool {
    if k == d.len() {
        if acyclic(g, d, chosen) {
            for (x, &o) in d.iter().zip(chosen.iter()) {
                atoms.extend(
                    g.options[*x][o]
                        .distinct
                        .iter()
                        .copied()
                        .filter(|&p| g.is_base[p]),
                );
            }
            *count += 1;
        }
        return *count < cap;
    }
    let x = d[k];
    for (o, opt) in g.options[x].iter().enumerate() {
        if opt
            .distinct
            .iter()
            .all(|p| g.is_base[*p] || d.binary_search(p).is_ok())
        {
            chosen.push(o);
            let go_on = enumerate_choices(g, d, k + 1, chosen, atoms, count, cap);
            chosen.pop();
            if !go_on {
                return false;
            }
        }
    }
    true
}

fn acyclic(g: &Graph, d: &[NodeId], chosen: &[usize]) -> bool {
    let mut done = BTreeSet::new();
    loop {
        let before = done.len();
        for (x, &o) in d.iter().zip(chosen) {
            if !done.contains(x)
                && g.options[*x][o]
                    .distinct
                    .iter()
                    .all(|p| g.is_base[*p] || done.contains(p))
            {
                done.insert(*x);
            }
        }
        if done.len() == d.len() {
            return true;
        }
        if done.len() == before {
            return false;
        }
    }
}

/// Union of base premises referenced by shortest traces, given a closure of the base.
pub fn ess_plus_in(
    c: &ClosureResult,
    q: &Formula,
    mode: EssMode,
    cfg: &SearchConfig,
) -> Result<EssPlus> {
    let base = c.base();
    let finish = |atoms: BTreeSet<Formula>, n: usize, exact: bool, traces: usize| {
        let m_eff = atoms.len();
        let lambda = if base.is_empty() {
            0.0
        } else {
            m_eff as f64 / base.len() as f64
        };
        EssPlus {
            atoms,
            n,
            exact,
            traces_enumerated: traces,
            m_eff,
            lambda,
        }
    };
    if base.contains(q) {
        return Ok(finish([q.clone()].into_iter().collect(), 0, true, 1));
    }
    if !c.entails(q) {
        return Err(Error::UnreachableQuery);
    }
    let g = Graph::build(c, q);
    let max_solutions = match mode {
        EssMode::Exact => usize::MAX,
        EssMode::Sampled(k) => k.max(1),
    };
    let found = shortest_sets(c, &g, q, cfg.node_budget, max_solutions);
    let enumerate = found.exact && found.complete && mode == EssMode::Exact;
    let mut exact = enumerate;
    let mut atom_ids = BTreeSet::new();
    let mut count = 0usize;
    for d in &found.sets {
        if enumerate {
            if !enumerate_choices(
                &g,
                d,
                0,
                &mut Vec::new(),
                &mut atom_ids,
                &mut count,
                cfg.trace_cap,
            ) {
                exact = false;
                break;
            }
        } else {
            let set: BTreeSet<NodeId> = d.iter().copied().collect();
            let t = g.to_trace(&set, 0, base);
            atom_ids.extend(t.atoms_used(base).iter().map(|f| g.index[f]));
            count += 1;
        }
    }
    let atoms = atom_ids.into_iter().map(|id| g.nodes[id].clone()).collect();
    Ok(finish(atoms, found.n, exact, count))
}

pub fn ess_plus(
    q: &Formula,
    base: &PremiseBase,
    system: &ProofSystem,
    mode: EssMode,
) -> Result<EssPlus> {
    ess_plus_in(
        &Reasoner::new(system, base).closure(base),
        q,
        mode,
        &SearchConfig::default(),
    )
}
