//! Query clustering by essential-set Jaccard distance and cluster-aware allocation.
//!
//! Buckets come from MinHash/LSH; every retained cluster is then split until
//! all its pairs are within `δ_clust` by exact distance.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use super::{greedy_knapsack, Allocation, CandidateSet, DepthObjective, Restricted};
use crate::closure::Reasoner;
use crate::error::{Error, Result};
use crate::kbmodel::{canonical_encode, Formula, KnowledgeBase, Vocabulary};
use crate::trace::search::{ess_plus_in, EssMode, SearchConfig};
use crate::tradeoff::Workload;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ClusterConfig {
    pub hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub ess_mode: EssMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            hashes: 64,
            bands: 16,
            rows: 4,
            ess_mode: EssMode::Exact,
        }
    }
}

/// Jaccard distance with `d(∅, ∅) = 0` and distance 1 when exactly one side is empty.
pub fn d_sem<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let inter = a.intersection(b).count();
            1.0 - inter as f64 / (a.len() + b.len() - inter) as f64
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the canonical encoding (bit length, then bytes).
pub fn element_hash(f: &Formula, vocab: &Vocabulary) -> Result<u64> {
    let bits = canonical_encode(f, vocab)?;
    let mut h = FnvHasher::default();
    h.write_u64(bits.len() as u64);
    h.write(bits.as_bytes());
    Ok(h.finish())
}

/// MinHash signature; slot `j` mixes each element hash with seed `j`.
/// The empty set gets all-`u64::MAX` slots.
pub fn minhash_signature(hashes: &[u64], slots: usize) -> Vec<u64> {
    (0..slots as u64)
        .map(|j| {
            hashes
                .iter()
                .map(|&h| splitmix64(h ^ splitmix64(j)))
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect()
}

/// Fraction of agreeing slots.
pub fn minhash_similarity(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

#[derive(Clone, PartialEq, Debug)]
pub struct Cluster {
    /// Workload indices, increasing.
    pub queries: Vec<usize>,
    pub core: BTreeSet<Formula>,
    pub ext: BTreeSet<Formula>,
    pub supp: BTreeSet<Formula>,
    pub kappa: f64,
    pub mass: f64,
    pub avg_depth: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct ClusterModel {
    pub clusters: Vec<Cluster>,
    /// Essential sets per workload query.
    pub ess: Vec<BTreeSet<Formula>>,
    pub delta_clust: f64,
}

fn make_cluster(
    queries: Vec<usize>,
    ess: &[BTreeSet<Formula>],
    probs: &[f64],
    depths: &[f64],
) -> Cluster {
    let mut core = ess[queries[0]].clone();
    let mut ext = BTreeSet::new();
    for &q in &queries {
        core.retain(|a| ess[q].contains(a));
        ext.extend(ess[q].iter().cloned());
    }
    let supp = ext.difference(&core).cloned().collect();
    let min_size = queries
        .iter()
        .map(|&q| ess[q].len())
        .min()
        .unwrap_or(0)
        .max(1);
    let mass: f64 = queries.iter().map(|&q| probs[q]).sum();
    let avg_depth = if mass > 0.0 {
        queries.iter().map(|&q| probs[q] * depths[q]).sum::<f64>() / mass
    } else {
        0.0
    };
    Cluster {
        kappa: core.len() as f64 / min_size as f64,
        core,
        ext,
        supp,
        mass,
        avg_depth,
        queries,
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Clusters queries with the given essential sets, masses and baseline depths.
pub fn cluster_sets(
    ess: Vec<BTreeSet<Formula>>,
    probs: &[f64],
    depths: &[f64],
    vocab: &Vocabulary,
    delta_clust: f64,
    cfg: &ClusterConfig,
) -> Result<ClusterModel> {
    if !(0.0..=1.0).contains(&delta_clust) {
        return Err(Error::InvalidParameter(
            "delta_clust must lie in [0, 1]".into(),
        ));
    }
    if cfg.bands * cfg.rows != cfg.hashes || cfg.hashes == 0 {
        return Err(Error::InvalidParameter(
            "bands × rows must equal the number of hash functions".into(),
        ));
    }
    let n = ess.len();
    let mut sigs = Vec::with_capacity(n);
    for set in &ess {
        let hashes = set
            .iter()
            .map(|f| element_hash(f, vocab))
            .collect::<Result<Vec<_>>>()?;
        sigs.push(minhash_signature(&hashes, cfg.hashes));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut buckets: BTreeMap<(usize, &[u64]), usize> = BTreeMap::new();
    for (i, sig) in sigs.iter().enumerate() {
        for band in 0..cfg.bands {
            let key = (band, &sig[band * cfg.rows..(band + 1) * cfg.rows]);
            match buckets.get(&key) {
                Some(&j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
                None => {
                    buckets.insert(key, i);
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        components.entry(r).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for members in components.into_values() {
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for q in members {
            match parts
                .iter_mut()
                .find(|p| p.iter().all(|&o| d_sem(&ess[o], &ess[q]) <= delta_clust))
            {
                Some(p) => p.push(q),
                None => parts.push(alloc::vec![q]),
            }
        }
        groups.extend(parts);
    }
    groups.sort();
    let clusters = groups
        .into_iter()
        .map(|g| make_cluster(g, &ess, probs, depths))
        .collect();
    Ok(ClusterModel {
        clusters,
        ess,
        delta_clust,
    })
}

/// Essential sets relative to the operational base, then [`cluster_sets`].
pub fn cluster_queries(
    workload: &Workload,
    kb: &KnowledgeBase,
    delta_clust: f64,
    cfg: &ClusterConfig,
) -> Result<ClusterModel> {
    let base = kb.operational_base();
    let c = Reasoner::for_kb(kb).closure(&base);
    let search = SearchConfig::default();
    let mut ess = Vec::new();
    let mut depths = Vec::new();
    for (q, _) in &workload.entries {
        let d = c.depth(q).finite().ok_or(Error::UnreachableQuery)?;
        ess.push(ess_plus_in(&c, q, cfg.ess_mode, &search)?.atoms);
        depths.push(f64::from(d));
    }
    let vocab = Vocabulary::of_formulas(base.iter());
    cluster_sets(
        ess,
        &workload.probabilities(),
        &depths,
        &vocab,
        delta_clust,
        cfg,
    )
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ClusterAction {
    Kept,
    /// Split by greedy minimum-distance matching.
    SplitPairs,
    SplitSingletons,
}

impl ClusterAction {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterAction::Kept => "kept",
            ClusterAction::SplitPairs => "split_pairs",
            ClusterAction::SplitSingletons => "split_singletons",
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct ClusterAuditEntry {
    pub queries: Vec<usize>,
    pub kappa: f64,
    pub core_size: usize,
    pub action: ClusterAction,
    /// Query groups whose cores generated candidates.
    pub parts: Vec<Vec<usize>>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct ClusterAudit {
    pub entries: Vec<ClusterAuditEntry>,
    /// Reduced ground set as candidate indices.
    pub reduced: Vec<usize>,
    pub model: ClusterModel,
}

/// Pairs queries by increasing distance; an odd one out stays alone.
fn pair_split(queries: &[usize], ess: &[BTreeSet<Formula>]) -> Vec<Vec<usize>> {
    let mut pairs = Vec::new();
    for (x, &i) in queries.iter().enumerate() {
        for &j in &queries[x + 1..] {
            pairs.push((d_sem(&ess[i], &ess[j]), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used.contains(&i) && !used.contains(&j) {
            used.insert(i);
            used.insert(j);
            out.push(alloc::vec![i, j]);
        }
    }
    out.extend(
        queries
            .iter()
            .filter(|q| !used.contains(q))
            .map(|&q| alloc::vec![q]),
    );
    out.sort();
    out
}

fn core_of(part: &[usize], ess: &[BTreeSet<Formula>]) -> BTreeSet<Formula> {
    let mut core = ess[part[0]].clone();
    for &q in &part[1..] {
        core.retain(|a| ess[q].contains(a));
    }
    core
}

/// Clusters the workload, keeps candidates whose essential sets fit inside
/// some cluster core, and runs greedy on that reduced set. Clusters with an
/// empty core, or with more than two queries and centrality below
/// `kappa_threshold`, are split into pairs first (singletons if a pair's
/// core is still empty). Any guarantee holds relative to the reduced set only.
#[allow(clippy::too_many_arguments)]
pub fn cluster_aware_allocate(
    workload: &Workload,
    kb: &KnowledgeBase,
    candidates: &CandidateSet,
    budget: u64,
    delta_clust: f64,
    kappa_threshold: f64,
    seed_size: usize,
    cfg: &ClusterConfig,
) -> Result<(Allocation, ClusterAudit)> {
    let model = cluster_queries(workload, kb, delta_clust, cfg)?;
    let base = kb.operational_base();
    let c = Reasoner::for_kb(kb).closure(&base);
    let search = SearchConfig::default();
    let cand_ess = candidates
        .items()
        .iter()
        .map(|u| ess_plus_in(&c, u, cfg.ess_mode, &search).map(|e| e.atoms))
        .collect::<Result<Vec<_>>>()?;
    let mut cores: Vec<BTreeSet<Formula>> = Vec::new();
    let mut entries = Vec::new();
    for cl in &model.clusters {
        let split = cl.core.is_empty() || (cl.queries.len() > 2 && cl.kappa < kappa_threshold);
        let (action, parts) = if !split {
            (ClusterAction::Kept, alloc::vec![cl.queries.clone()])
        } else if cl.queries.len() > 2 {
            (
                ClusterAction::SplitPairs,
                pair_split(&cl.queries, &model.ess),
            )
        } else {
            (
                ClusterAction::SplitSingletons,
                cl.queries.iter().map(|&q| alloc::vec![q]).collect(),
            )
        };
        let mut kept_parts = Vec::new();
        for part in parts {
            let core = core_of(&part, &model.ess);
            if core.is_empty() {
                for &q in &part {
                    cores.push(model.ess[q].clone());
                    kept_parts.push(alloc::vec![q]);
                }
            } else {
                cores.push(core);
                kept_parts.push(part);
            }
        }
        entries.push(ClusterAuditEntry {
            queries: cl.queries.clone(),
            kappa: cl.kappa,
            core_size: cl.core.len(),
            action,
            parts: kept_parts,
        });
    }
    let reduced: Vec<usize> = (0..candidates.len())
        .filter(|&u| cores.iter().any(|core| cand_ess[u].is_subset(core)))
        .collect();
    let mut objective = DepthObjective::new(kb, workload, candidates);
    let costs: Vec<u64> = reduced.iter().map(|&u| candidates.costs()[u]).collect();
    let mut restricted = Restricted {
        inner: &mut objective,
        map: reduced.clone(),
    };
    let mut alloc = greedy_knapsack(&costs, budget, &mut restricted, seed_size);
    alloc.selected = alloc.selected.iter().map(|&i| reduced[i]).collect();
    Ok((
        alloc,
        ClusterAudit {
            entries,
            reduced,
            model,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbmodel::parse_kb;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<Formula> {
        items.iter().map(|s| f(s)).collect()
    }

    #[test]
    fn distance_examples() {
        let a = set(&["x(a)", "x(b)", "x(c)"]);
        let b = set(&["x(a)", "x(b)", "x(d)"]);
        assert_eq!(d_sem(&a, &b), 0.5);
        assert_eq!(d_sem(&a, &a), 0.0);
        assert_eq!(d_sem(&BTreeSet::<Formula>::new(), &BTreeSet::new()), 0.0);
        assert_eq!(d_sem(&a, &BTreeSet::new()), 1.0);
        let pair = make_cluster(alloc::vec![0, 1], &[a, b], &[0.5, 0.5], &[1.0, 3.0]);
        assert!((pair.kappa - 2.0 / 3.0).abs() < 1e-12);
        assert!(pair.kappa >= 1.0 - 0.5);
        assert_eq!(pair.avg_depth, 2.0);
    }

    #[test]
    fn minhash_estimates_jaccard() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut close = 0;
        for _ in 0..200 {
            let a: BTreeSet<u64> = (0..40u64).filter(|_| rng.gen_bool(0.5)).collect();
            let b: BTreeSet<u64> = (0..40u64).filter(|_| rng.gen_bool(0.5)).collect();
            let ha: Vec<u64> = a.iter().map(|&x| splitmix64(x)).collect();
            let hb: Vec<u64> = b.iter().map(|&x| splitmix64(x)).collect();
            let est = minhash_similarity(&minhash_signature(&ha, 64), &minhash_signature(&hb, 64));
            if (est - (1.0 - d_sem(&a, &b))).abs() <= 0.15 {
                close += 1;
            }
        }
        assert!(close >= 190, "{close}");
    }

    fn triangle_kb() -> KnowledgeBase {
        parse_kb("x(a).\nx(b).\nx(c).\nx(d).\ny(X) :- x(X).").unwrap()
    }

    #[test]
    fn clusters_are_cohesive_partitions() {
        let kb = triangle_kb();
        let w = Workload::new(
            alloc::vec![
                (f("x(a) & x(b) & x(c)"), 0.25),
                (f("x(a) & x(b) & x(d)"), 0.25),
                (f("y(a) & x(b)"), 0.25),
                (f("y(d)"), 0.25),
            ],
            100,
        )
        .unwrap();
        for delta in [0.0, 0.3, 0.6, 1.0] {
            let m = cluster_queries(&w, &kb, delta, &ClusterConfig::default()).unwrap();
            let mut seen: Vec<usize> = m
                .clusters
                .iter()
                .flat_map(|c| c.queries.iter().copied())
                .collect();
            seen.sort();
            assert_eq!(seen, alloc::vec![0, 1, 2, 3]);
            let mass: f64 = m.clusters.iter().map(|c| c.mass).sum();
            assert!((mass - 1.0).abs() < 1e-12);
            for c in &m.clusters {
                assert!((0.0..=1.0).contains(&c.kappa));
                for &i in &c.queries {
                    for &j in &c.queries {
                        assert!(d_sem(&m.ess[i], &m.ess[j]) <= delta);
                    }
                }
            }
        }
    }

    #[test]
    fn low_centrality_triple_is_split() {
        let kb = triangle_kb();
        let w = Workload::new(
            alloc::vec![
                (f("x(a) & x(b)"), 0.4),
                (f("x(b) & x(c)"), 0.3),
                (f("x(a) & x(c)"), 0.3)
            ],
            100,
        )
        .unwrap();
        let cfg = ClusterConfig {
            hashes: 64,
            bands: 64,
            rows: 1,
            ess_mode: EssMode::Exact,
        };
        let model = cluster_queries(&w, &kb, 0.7, &cfg).unwrap();
        assert_eq!(model.clusters.len(), 1);
        assert_eq!(model.clusters[0].kappa, 0.0);
        let cands =
            CandidateSet::new([(f("x(a) & x(b)"), 4), (f("x(b) & x(c)"), 4), (f("y(d)"), 1)])
                .unwrap();
        let (alloc, audit) = cluster_aware_allocate(&w, &kb, &cands, 8, 0.7, 0.5, 3, &cfg).unwrap();
        assert_eq!(audit.entries[0].action, ClusterAction::SplitPairs);
        assert!(audit.reduced.iter().all(|&u| cands.item(u) != &f("y(d)")));
        assert!(alloc.total_cost <= 8);
        assert!(alloc.selected.iter().all(|u| audit.reduced.contains(u)));
    }

    #[test]
    fn single_query_matches_plain_greedy() {
        let kb =
            parse_kb("p0(a).\np1(X) :- p0(X).\np2(X) :- p1(X).\np3(X) :- p2(X).\nz(a).").unwrap();
        let w = Workload::new(alloc::vec![(f("p3(a)"), 1.0)], 10).unwrap();
        let cands = CandidateSet::new([(f("p1(a)"), 2), (f("p2(a)"), 3), (f("p3(a)"), 5)]).unwrap();
        let (alloc, audit) =
            cluster_aware_allocate(&w, &kb, &cands, 5, 0.3, 0.5, 3, &ClusterConfig::default())
                .unwrap();
        assert_eq!(audit.model.clusters.len(), 1);
        assert_eq!(audit.reduced, alloc::vec![0, 1, 2]);
        let mut obj = DepthObjective::new(&kb, &w, &cands);
        assert_eq!(alloc, greedy_knapsack(cands.costs(), 5, &mut obj, 3));
    }

    proptest! {
        #[test]
        fn d_sem_is_a_pseudometric(
            a in prop::collection::btree_set(0u8..12, 0..6),
            b in prop::collection::btree_set(0u8..12, 0..6),
            c in prop::collection::btree_set(0u8..12, 0..6),
        ) {
            prop_assert_eq!(d_sem(&a, &b), d_sem(&b, &a));
            prop_assert!(d_sem(&a, &c) <= d_sem(&a, &b) + d_sem(&b, &c) + 1e-12);
            prop_assert!((0.0..=1.0).contains(&d_sem(&a, &b)));
        }
    }
}
