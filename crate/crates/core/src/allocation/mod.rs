//! Budgeted cache allocation over a depth-reduction objective.
//!
//! Candidate sets are index lists into a canonically sorted ground set;
//! objectives see them sorted and duplicate-free.

pub mod cluster;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::closure::Reasoner;
use crate::depth::Depth;
use crate::error::{Error, Result};
use crate::kbmodel::{Formula, KnowledgeBase, PremiseBase, ProofSystem};
use crate::trace::search::SearchConfig;
use crate::tradeoff::{description_proxy_in, Workload};

pub use cluster::{
    cluster_aware_allocate, cluster_queries, d_sem, Cluster, ClusterAction, ClusterAudit,
    ClusterConfig, ClusterModel,
};

/// Largest ground set [`brute_force_opt`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;
/// Slack allowed when comparing marginals in the diminishing-returns check.
pub const DR_TOLERANCE: f64 = 1e-12;

/// Set function over `0..ground_size()`.
pub trait Objective {
    fn ground_size(&self) -> usize;

    /// Per-component contributions whose sum is the objective value.
    fn components(&mut self, set: &[usize]) -> Vec<f64>;

    fn value(&mut self, set: &[usize]) -> f64 {
        self.components(set).iter().sum()
    }
}

/// Objective given by a closure; a single component.
pub struct FnObjective<F> {
    pub size: usize,
    pub f: F,
}

impl<F: FnMut(&[usize]) -> f64> Objective for FnObjective<F> {
    fn ground_size(&self) -> usize {
        self.size
    }

    fn components(&mut self, set: &[usize]) -> Vec<f64> {
        alloc::vec![(self.f)(set)]
    }
}

/// Candidate cache items with their storage costs in bits.
#[derive(Clone, PartialEq, Debug)]
pub struct CandidateSet {
    items: Vec<Formula>,
    costs: Vec<u64>,
}

impl CandidateSet {
    /// Sorts canonically; rejects duplicates and zero costs.
    pub fn new(entries: impl IntoIterator<Item = (Formula, u64)>) -> Result<Self> {
        let mut entries: Vec<(Formula, u64)> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter("duplicate candidate".into()));
        }
        if let Some((f, _)) = entries.iter().find(|(_, c)| *c == 0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "candidate {f} has zero cost"
            )));
        }
        let (items, costs) = entries.into_iter().unzip();
        Ok(CandidateSet { items, costs })
    }

    /// Costs default to the description proxy relative to `base`; entries
    /// with `Some(cost)` override it. Every item must be derivable and not
    /// already in the base.
    pub fn with_proxy_costs(
        entries: impl IntoIterator<Item = (Formula, Option<u64>)>,
        base: &PremiseBase,
        system: &ProofSystem,
    ) -> Result<Self> {
        let c = Reasoner::new(system, base).closure(base);
        let cfg = SearchConfig::default();
        let mut out = Vec::new();
        for (f, cost) in entries {
            if base.contains(&f) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "candidate {f} is already a premise"
                )));
            }
            if !c.entails(&f) {
                return Err(Error::UnreachableQuery);
            }
            let cost = match cost {
                Some(c) => c,
                None => description_proxy_in(&c, system, &f, &cfg)?.bits as u64,
            };
            out.push((f, cost));
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Formula] {
        &self.items
    }

    pub fn costs(&self) -> &[u64] {
        &self.costs
    }

    pub fn item(&self, i: usize) -> &Formula {
        &self.items[i]
    }

    pub fn cost_of(&self, set: &[usize]) -> u64 {
        set.iter().map(|&i| self.costs[i]).sum()
    }
}

/// Expected depth reduction `Δ(S)` of a workload when `S` joins a base.
///
/// Queries unreachable from the base are excluded and listed separately.
/// Results are memoized per subset.
#[derive(Debug, Clone)]
pub struct DepthObjective {
    reasoner: Reasoner,
    base: PremiseBase,
    queries: Vec<(Formula, f64)>,
    excluded: Vec<Formula>,
    candidates: Vec<Formula>,
    baseline: Vec<u32>,
    memo: BTreeMap<Vec<usize>, Vec<Depth>>,
}

impl DepthObjective {
    pub fn new(kb: &KnowledgeBase, workload: &Workload, candidates: &CandidateSet) -> Self {
        Self::with_base(
            &kb.system,
            &kb.operational_base(),
            &workload.entries,
            candidates.items(),
        )
    }

    pub fn with_base(
        system: &ProofSystem,
        base: &PremiseBase,
        queries: &[(Formula, f64)],
        candidates: &[Formula],
    ) -> Self {
        let seeds = base.with(candidates);
        let reasoner = Reasoner::new(system, &seeds);
        let c = reasoner.closure(base);
        let mut kept = Vec::new();
        let mut excluded = Vec::new();
        let mut baseline = Vec::new();
        for (q, p) in queries {
            match c.depth(q) {
                Depth::Finite(d) => {
                    kept.push((q.clone(), *p));
                    baseline.push(d);
                }
                Depth::Unreachable => excluded.push(q.clone()),
            }
        }
        DepthObjective {
            reasoner,
            base: base.clone(),
            queries: kept,
            excluded,
            candidates: candidates.to_vec(),
            baseline,
            memo: BTreeMap::new(),
        }
    }

    pub fn queries(&self) -> &[(Formula, f64)] {
        &self.queries
    }

    pub fn excluded(&self) -> &[Formula] {
        &self.excluded
    }

    pub fn baseline_depths(&self) -> &[u32] {
        &self.baseline
    }

    pub fn base(&self) -> &PremiseBase {
        &self.base
    }

    /// `Dd(q_i | base ∪ S)` for every kept query.
    pub fn depths(&mut self, set: &[usize]) -> Vec<Depth> {
        if let Some(d) = self.memo.get(set) {
            return d.clone();
        }
        let b = self.base.with(set.iter().map(|&i| &self.candidates[i]));
        let c = self.reasoner.closure(&b);
        let d: Vec<Depth> = self.queries.iter().map(|(q, _)| c.depth(q)).collect();
        self.memo.insert(set.to_vec(), d.clone());
        d
    }

    /// Probability-weighted mean depth `n̄(S)` over kept queries.
    pub fn mean_depth(&mut self, set: &[usize]) -> f64 {
        let d = self.depths(set);
        self.queries
            .iter()
            .zip(d)
            .map(|((_, p), d)| p * f64::from(d.finite().expect("reachable")))
            .sum()
    }
}

impl Objective for DepthObjective {
    fn ground_size(&self) -> usize {
        self.candidates.len()
    }

    fn components(&mut self, set: &[usize]) -> Vec<f64> {
        let d = self.depths(set);
        self.queries
            .iter()
            .zip(&self.baseline)
            .zip(d)
            .map(|(((_, p), b), d)| p * (f64::from(*b) - f64::from(d.finite().expect("reachable"))))
            .collect()
    }
}

/// Objective restricted to a subset of another's ground set.
pub struct Restricted<'a, O: ?Sized> {
    pub inner: &'a mut O,
    /// Restricted index `i` is `map[i]` in the inner ground set; increasing.
    pub map: Vec<usize>,
}

impl<O: Objective + ?Sized> Objective for Restricted<'_, O> {
    fn ground_size(&self) -> usize {
        self.map.len()
    }

    fn components(&mut self, set: &[usize]) -> Vec<f64> {
        let mapped: Vec<usize> = set.iter().map(|&i| self.map[i]).collect();
        self.inner.components(&mapped)
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct Allocation {
    /// Sorted indices into the ground set.
    pub selected: Vec<usize>,
    pub total_cost: u64,
    pub objective_value: f64,
}

impl Allocation {
    fn empty() -> Self {
        Allocation {
            selected: Vec::new(),
            total_cost: 0,
            objective_value: 0.0,
        }
    }
}

fn insert_sorted(set: &[usize], u: usize) -> Vec<usize> {
    let mut s = set.to_vec();
    let pos = s.binary_search(&u).unwrap_err();
    s.insert(pos, u);
    s
}

/// Calls `visit` on every subset of `0..n` with at most `max` elements and
/// cost within `budget`, in lexicographic order.
fn for_each_seed(costs: &[u64], budget: u64, max: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(
        costs: &[u64],
        budget: u64,
        max: usize,
        start: usize,
        cur: &mut Vec<usize>,
        spent: u64,
        visit: &mut impl FnMut(&[usize]),
    ) {
        visit(cur);
        if cur.len() == max {
            return;
        }
        for u in start..costs.len() {
            if spent + costs[u] <= budget {
                cur.push(u);
                rec(costs, budget, max, u + 1, cur, spent + costs[u], visit);
                cur.pop();
            }
        }
    }
    rec(costs, budget, max, 0, &mut Vec::new(), 0, visit);
}

/// Density greedy from every affordable seed of at most `seed_size` items;
/// the best completed set wins. Ties keep the earlier candidate or seed.
pub fn greedy_knapsack<O: Objective + ?Sized>(
    costs: &[u64],
    budget: u64,
    objective: &mut O,
    seed_size: usize,
) -> Allocation {
    debug_assert_eq!(costs.len(), objective.ground_size());
    let mut best = Allocation::empty();
    for_each_seed(costs, budget, seed_size, &mut |seed| {
        let mut s = seed.to_vec();
        let mut spent: u64 = seed.iter().map(|&i| costs[i]).sum();
        let mut value = objective.value(&s);
        loop {
            let mut pick: Option<(usize, f64, f64)> = None;
            for (u, &cost) in costs.iter().enumerate() {
                if s.binary_search(&u).is_ok() || cost > budget - spent {
                    continue;
                }
                let v = objective.value(&insert_sorted(&s, u));
                let density = (v - value) / cost as f64;
                if pick.is_none_or(|(_, d, _)| density > d) {
                    pick = Some((u, density, v));
                }
            }
            // Zero-gain items only spend budget.
            let Some((u, _, v)) = pick.filter(|&(_, d, _)| d > 0.0) else {
                break;
            };
            s = insert_sorted(&s, u);
            spent += costs[u];
            value = v;
        }
        if value > best.objective_value {
            best = Allocation {
                selected: s,
                total_cost: spent,
                objective_value: value,
            };
        }
    });
    best
}

/// Exact optimum by subset enumeration. Ties prefer fewer items, then the
/// lexicographically smaller index list.
pub fn brute_force_opt<O: Objective + ?Sized>(
    costs: &[u64],
    budget: u64,
    objective: &mut O,
) -> Result<Allocation> {
    let n = costs.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyCandidates {
            count: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best = Allocation::empty();
    for mask in 1u32..(1u32 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let cost: u64 = set.iter().map(|&i| costs[i]).sum();
        if cost > budget {
            continue;
        }
        let v = objective.value(&set);
        let better = v > best.objective_value
            || (v == best.objective_value
                && (set.len(), &set) < (best.selected.len(), &best.selected));
        if better {
            best = Allocation {
                selected: set,
                total_cost: cost,
                objective_value: v,
            };
        }
    }
    Ok(best)
}

/// A triple `A ⊆ B`, `u ∉ B` whose marginal at `A` is smaller than at `B`.
#[derive(Clone, PartialEq, Debug)]
pub struct DrViolation {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub u: usize,
    /// Component index, or `None` for the aggregate objective.
    pub component: Option<usize>,
    pub marginal_a: f64,
    pub marginal_b: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct DrReport {
    pub samples: usize,
    /// Triples violating diminishing returns in the aggregate.
    pub violations: usize,
    pub rate: f64,
    /// Triples violating it in at least one component.
    pub component_violations: usize,
    pub counterexample: Option<DrViolation>,
}

struct DrTally {
    samples: usize,
    violations: usize,
    component_violations: usize,
    counterexample: Option<DrViolation>,
}

impl DrTally {
    fn new() -> Self {
        DrTally {
            samples: 0,
            violations: 0,
            component_violations: 0,
            counterexample: None,
        }
    }

    fn test<O: Objective + ?Sized>(&mut self, obj: &mut O, a: &[usize], b: &[usize], u: usize) {
        let ca = obj.components(a);
        let cau = obj.components(&insert_sorted(a, u));
        let cb = obj.components(b);
        let cbu = obj.components(&insert_sorted(b, u));
        self.samples += 1;
        let ma: Vec<f64> = cau.iter().zip(&ca).map(|(x, y)| x - y).collect();
        let mb: Vec<f64> = cbu.iter().zip(&cb).map(|(x, y)| x - y).collect();
        let (sa, sb): (f64, f64) = (ma.iter().sum(), mb.iter().sum());
        let bad_component = ma.iter().zip(&mb).position(|(x, y)| x + DR_TOLERANCE < *y);
        if bad_component.is_some() {
            self.component_violations += 1;
        }
        let aggregate = sa + DR_TOLERANCE < sb;
        if aggregate {
            self.violations += 1;
        }
        if self.counterexample.is_none() && (aggregate || bad_component.is_some()) {
            let component = if aggregate { None } else { bad_component };
            let (marginal_a, marginal_b) = match component {
                None => (sa, sb),
                Some(i) => (ma[i], mb[i]),
            };
            self.counterexample = Some(DrViolation {
                a: a.to_vec(),
                b: b.to_vec(),
                u,
                component,
                marginal_a,
                marginal_b,
            });
        }
    }

    fn finish(self) -> DrReport {
        let rate = if self.samples == 0 {
            0.0
        } else {
            self.violations as f64 / self.samples as f64
        };
        DrReport {
            samples: self.samples,
            violations: self.violations,
            rate,
            component_violations: self.component_violations,
            counterexample: self.counterexample,
        }
    }
}

/// Samples random triples `A ⊆ B ⊆ U`, `u ∉ B` and tests diminishing returns
/// per component and in aggregate.
pub fn dr_check<O: Objective + ?Sized>(objective: &mut O, samples: usize, seed: u64) -> DrReport {
    let n = objective.ground_size();
    let mut tally = DrTally::new();
    if n == 0 {
        return tally.finish();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let u = rng.gen_range(0..n);
        let b: Vec<usize> = (0..n).filter(|&i| i != u && rng.gen_bool(0.5)).collect();
        let a: Vec<usize> = b.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        tally.test(objective, &a, &b, u);
    }
    tally.finish()
}

/// Tests every triple; `3^(n−1)·n` of them, so only for small ground sets.
pub fn dr_check_exhaustive<O: Objective + ?Sized>(objective: &mut O) -> Result<DrReport> {
    let n = objective.ground_size();
    if n > BRUTE_FORCE_LIMIT / 2 + 2 {
        return Err(Error::TooManyCandidates {
            count: n,
            limit: BRUTE_FORCE_LIMIT / 2 + 2,
        });
    }
    let mut tally = DrTally::new();
    for u in 0..n {
        let rest: Vec<usize> = (0..n).filter(|&i| i != u).collect();
        for bmask in 0u32..(1 << rest.len()) {
            let b: Vec<usize> = (0..rest.len())
                .filter(|&i| bmask >> i & 1 == 1)
                .map(|i| rest[i])
                .collect();
            // Submasks of bmask, including zero.
            let mut amask = bmask;
            loop {
                let a: Vec<usize> = (0..rest.len())
                    .filter(|&i| amask >> i & 1 == 1)
                    .map(|i| rest[i])
                    .collect();
                tally.test(objective, &a, &b, u);
                if amask == 0 {
                    break;
                }
                amask = (amask - 1) & bmask;
            }
        }
    }
    Ok(tally.finish())
}
