//! Acceptance criteria and invariant suites.
//!
//! Each acceptance criterion is a function returning its measurements and
//! a pass flag. The invariant suite runs one named check per property of
//! every module; [`COVERAGE`] lists them so that completeness is itself
//! checked.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use kbcost_core::allocation::cluster::{cluster_sets, d_sem, ClusterConfig};
use kbcost_core::allocation::{
    brute_force_opt, dr_check, greedy_knapsack, CandidateSet, DepthObjective, Objective,
};
use kbcost_core::bits::BitString;
use kbcost_core::closure::Reasoner;
use kbcost_core::depth::{derivation_depth, DepthResult, Justification};
use kbcost_core::noise::{
    apply_noise, noisy_tradeoff, perturbation_report, reconstruction_depth, two_phase_allocate,
    InfeasibleReason, NoiseSpec, SlaConfig, TwoPhaseOutcome, CONVERSION_PREAMBLE_BITS,
};
use kbcost_core::trace::census::{enumerate_census, tightness_base, tightness_query};
use kbcost_core::trace::codec::decode_bytes;
use kbcost_core::trace::{
    decode_trace, encode_trace, encoded_len, ess_plus, length_bound, replay_validate,
    richness_census, tightness_suite, EssMode, SearchConfig,
};
use kbcost_core::tradeoff::{
    amortized_costs, coding_entropy_check, critical_frequency, critical_frequency_bisect,
    fc_window, locality_symbolic, CostModel, Winner,
};
use kbcost_core::{
    canonical_encode, parse_kb, Depth, Formula, KnowledgeBase, PremiseBase, ProofSystem,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::gen::{self, Rng8};
use crate::oracle::{check_core, Oracle};
use crate::report::num;

pub const DEFAULT_SEED: u64 = 20240501;

/// Default flag threshold for `N(q|B)/Dd(q|B)` on the small-instance suite.
pub const DEFAULT_SERIAL_BOUND: f64 = 16.0;

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub elapsed: Duration,
    pub limit: Duration,
    pub measurements: Value,
}

impl Criterion {
    pub fn within_limit(&self) -> bool {
        self.elapsed <= self.limit
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<28} {} ({:.2}s, limit {}s)",
            self.id,
            self.name,
            if self.passed && self.within_limit() {
                "PASS"
            } else {
                "FAIL"
            },
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "name": self.name,
            "passed": self.passed,
            "within_limit": self.within_limit(),
            "elapsed_s": self.elapsed.as_secs_f64(),
            "limit_s": self.limit.as_secs(),
            "measurements": self.measurements,
        })
    }
}

fn timed(
    id: u8,
    name: &'static str,
    limit_s: u64,
    body: impl FnOnce() -> (bool, Value),
) -> Criterion {
    let t = Instant::now();
    let (passed, measurements) = body();
    Criterion {
        id,
        name,
        passed,
        elapsed: t.elapsed(),
        limit: Duration::from_secs(limit_s),
        measurements,
    }
}

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

pub fn criterion(id: u8, seed: u64) -> Criterion {
    match id {
        1 => c1_locality(),
        2 => c2_tightness(seed),
        3 => c3_richness(),
        4 => c4_codec(seed),
        5 => c5_oracles(seed),
        6 => c6_critical_frequency(seed),
        7 => c7_greedy(seed),
        8 => c8_noise(seed),
        9 => c9_two_phase(seed),
        10 => c10_shannon(seed),
        _ => panic!("no criterion {id}"),
    }
}

pub fn c1_locality() -> Criterion {
    timed(1, "locality example", 1, || {
        let r = locality_symbolic(1e6, 1e3, 100.0);
        let ok = (r.l_full - 19.93).abs() <= 0.05
            && (r.l_eff - 10.10).abs() <= 0.05
            && (r.improvement - 1.97).abs() <= 0.02;
        (
            ok,
            json!({"l_full": num(r.l_full), "l_eff": num(r.l_eff), "improvement": num(r.improvement)}),
        )
    })
}

/// Tightness samples for `m ∈ {16, 64, 256}`, 50 each.
const TIGHTNESS_MS: [usize; 3] = [16, 64, 256];

pub fn c2_tightness(seed: u64) -> Criterion {
    timed(2, "tightness family", 30, || {
        let mut rows = Vec::new();
        let mut all_depths = true;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for m in TIGHTNESS_MS {
            let r = tightness_suite(m, 50, seed ^ m as u64).expect("m >= 4");
            all_depths &= r.depths_match && r.samples.len() == 50;
            lo = lo.min(r.ratio_min);
            hi = hi.max(r.ratio_max);
            rows.push(json!({
                "m": m, "n": r.n, "depths_match": r.depths_match,
                "ratio_min": num(r.ratio_min), "ratio_max": num(r.ratio_max),
            }));
        }
        let band = hi / lo;
        (
            all_depths && band <= 4.0,
            json!({"per_m": rows, "band_max_over_min": num(band)}),
        )
    })
}

pub fn c3_richness() -> Criterion {
    timed(3, "richness census", 60, || {
        let mut rows = Vec::new();
        let mut ok = true;
        for (m, n, want) in [(5u64, 2u64, 60u128), (6, 2, 120), (7, 3, 840)] {
            let closed = richness_census(m, n, 0.0).expect("m >= 1").count;
            let counted = enumerate_census(m as usize, n as usize).expect("small");
            ok &= closed == Some(want) && counted == want;
            rows.push(json!({
                "m": m, "n": n, "closed_form": closed.map(|c| c as u64),
                "enumerated": counted as u64, "expected": want as u64,
            }));
        }
        (ok, Value::Array(rows))
    })
}

pub fn c4_codec(seed: u64) -> Criterion {
    timed(4, "codec exactness", 30, || {
        let system = parse_kb(gen::TRACE_SYSTEM).expect("fixed system").system;
        let mut rng = Rng8::seed_from_u64(seed);
        let (mut roundtrip, mut exact_len, mut bounded) = (0usize, 0usize, 0usize);
        let total = 10_000;
        for _ in 0..total {
            let t = gen::random_trace(&system, 40, 40, &mut rng);
            let enc = encode_trace(&t, &system).expect("valid trace");
            let back = decode_trace(&enc.bits, &system);
            let bytes = decode_bytes(&enc.to_bytes(), &system);
            if back.as_ref() == Ok(&t) && bytes.as_ref() == Ok(&t) {
                roundtrip += 1;
            }
            let arities = t.steps.iter().map(|s| s.premises.len());
            if enc.bits.len() == encoded_len(t.m, system.rule_count(), arities) {
                exact_len += 1;
            }
            if enc.bits.len() <= length_bound(t.m, t.len(), system.k(), system.rule_count()) {
                bounded += 1;
            }
        }
        (
            roundtrip == total && exact_len == total && bounded == total,
            json!({
                "traces": total, "roundtrip": roundtrip, "closed_form_length": exact_len,
                "within_bound": bounded, "k": system.k(), "rule_count": system.rule_count(),
            }),
        )
    })
}

pub fn c5_oracles(seed: u64) -> Criterion {
    timed(5, "oracle equivalence", 300, || {
        let mut rng = Rng8::seed_from_u64(seed);
        let kbs = 500;
        let (mut depth_checks, mut depth_bad) = (0usize, 0usize);
        let (mut n_checks, mut n_bad, mut n_inexact) = (0usize, 0usize, 0usize);
        let (mut core_bad, mut core_queries) = (0usize, 0usize);
        let cfg = SearchConfig::default();
        for _ in 0..kbs {
            let skb = gen::small_kb(&mut rng);
            let kb = &skb.kb;
            let base = kb.operational_base();
            let oracle = Oracle::for_kb(kb);
            let c = Reasoner::for_kb(kb).closure(&base);
            let mut queries: Vec<Formula> = skb.atoms.iter().cloned().map(Formula::atom).collect();
            queries.extend(gen::small_queries(&skb, &mut rng));
            for q in &queries {
                depth_checks += 1;
                if c.depth(q).finite() != oracle.depth(q) {
                    depth_bad += 1;
                }
                if let Some(want) = oracle.min_trace_length(q) {
                    n_checks += 1;
                    let got = kbcost_core::trace::search::min_trace_length_in(&c, q, &cfg)
                        .expect("derivable");
                    if !got.exact {
                        n_inexact += 1;
                    }
                    if got.n != want {
                        n_bad += 1;
                    }
                }
            }
            let (core, _) = Reasoner::for_kb(kb).atom_core(&base);
            let chk = check_core(kb, &core);
            core_queries += chk.queries;
            if !chk.holds() {
                core_bad += 1;
            }
        }
        (
            depth_bad == 0 && n_bad == 0 && n_inexact == 0 && core_bad == 0,
            json!({
                "kbs": kbs, "depth_checks": depth_checks, "depth_mismatches": depth_bad,
                "n_checks": n_checks, "n_mismatches": n_bad, "n_inexact": n_inexact,
                "core_queries": core_queries, "core_failures": core_bad,
            }),
        )
    })
}

pub fn c6_critical_frequency(seed: u64) -> Criterion {
    timed(6, "critical frequency scale", 60, || {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut worst_bisect = 0.0f64;
        let mut points = 0usize;
        let mut missing = 0usize;
        for m in TIGHTNESS_MS {
            let r = tightness_suite(m, 50, seed ^ m as u64).expect("m >= 4");
            for s in &r.samples {
                let d = s.depth.finite().expect("finite") as f64;
                for rho in [1.0, 2.0, 4.0, 8.0] {
                    let model = CostModel::new(rho, 1.0).expect("valid");
                    let cf = critical_frequency(s.proxy_bits as f64, d, m, &model);
                    let (Some(f), Some(ratio)) = (cf.f_star, cf.ratio) else {
                        missing += 1;
                        continue;
                    };
                    points += 1;
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                    match critical_frequency_bisect(s.proxy_bits as f64, d, &model, 1e-9) {
                        Some(b) => worst_bisect = worst_bisect.max((b - f).abs()),
                        None => worst_bisect = f64::INFINITY,
                    }
                }
            }
        }
        let band = hi / lo;
        (
            missing == 0 && band <= 4.0 && worst_bisect <= 1e-6,
            json!({
                "points": points, "without_crossover": missing, "ratio_min": num(lo),
                "ratio_max": num(hi), "band_max_over_min": num(band),
                "max_bisection_gap": num(worst_bisect),
            }),
        )
    })
}

pub fn c7_greedy(seed: u64) -> Criterion {
    timed(7, "greedy guarantee", 300, || {
        let mut rng = Rng8::seed_from_u64(seed);
        let bound = 1.0 - (-1.0f64).exp();
        let (mut ok, mut rejected) = (0usize, 0usize);
        let mut worst = f64::INFINITY;
        let total = 100;
        for _ in 0..total {
            let (inst, rej) = gen::dr_instance(&mut rng);
            rejected += rej;
            let mut obj = DepthObjective::new(&inst.kb, &inst.workload, &inst.candidates);
            let costs = inst.candidates.costs();
            let g = greedy_knapsack(costs, inst.budget, &mut obj, 3);
            let opt = brute_force_opt(costs, inst.budget, &mut obj).expect("10 candidates");
            let ratio = if opt.objective_value > 0.0 {
                g.objective_value / opt.objective_value
            } else {
                1.0
            };
            worst = worst.min(ratio);
            if g.objective_value >= bound * opt.objective_value - 1e-12
                && g.total_cost <= inst.budget
            {
                ok += 1;
            }
        }
        let sm = gen::supermodular_instance();
        let mut obj = DepthObjective::new(&sm.kb, &sm.workload, &sm.candidates);
        let dr = dr_check(&mut obj, 200, seed);
        let cx = dr.counterexample.as_ref().map(|v| {
            json!({"a": v.a, "b": v.b, "u": v.u, "marginal_a": num(v.marginal_a),
                   "marginal_b": num(v.marginal_b)})
        });
        (
            ok == total && dr.violations > 0 && cx.is_some(),
            json!({
                "instances": total, "meeting_bound": ok, "worst_ratio": num(worst),
                "bound": num(bound), "rejected_non_dr_draws": rejected,
                "supermodular_violations": dr.violations, "counterexample": cx,
            }),
        )
    })
}

pub fn c8_noise(seed: u64) -> Criterion {
    timed(8, "noise inequalities", 120, || {
        let mut rng = Rng8::seed_from_u64(seed);
        let target = 300;
        let (mut taken, mut drawn) = (0usize, 0usize);
        let (mut degrade_ok, mut loss_n, mut loss_ok, mut poll_n, mut poll_ok) =
            (0usize, 0usize, 0usize, 0usize, 0usize);
        let mut core_agrees = 0usize;
        while taken < target {
            drawn += 1;
            let Some(inst) = gen::noise_instance(&mut rng) else {
                continue;
            };
            let base = inst.kb.operational_base();
            let system = &inst.kb.system;
            let o0 = Oracle::new(system, &base);
            let Some(n) = o0.depth(&inst.query) else {
                continue;
            };
            let preserved = base.without(&inst.spec.lost);
            let op = Oracle::new(system, &preserved);
            let d_rec = inst
                .spec
                .lost
                .iter()
                .map(|b| op.depth(b))
                .try_fold(0u32, |acc, d| d.map(|d| acc.max(d)));
            let Some(d_rec) = d_rec else {
                continue;
            };
            taken += 1;
            let kept = op.depth(&inst.query);
            if kept.is_some_and(|k| k <= n + d_rec) {
                degrade_ok += 1;
            }
            let noisy = preserved.with(&inst.spec.spurious);
            let tilde = Oracle::new(system, &noisy).depth(&inst.query);
            if inst.spec.is_loss_only() {
                loss_n += 1;
                if tilde.is_none_or(|t| t >= n) {
                    loss_ok += 1;
                }
            }
            if inst.spec.is_pollution_only() {
                poll_n += 1;
                if tilde.is_some_and(|t| t <= n) {
                    poll_ok += 1;
                }
            }
            let r = perturbation_report(&inst.query, &base, &inst.spec, system).expect("derivable");
            if r.degrade_holds == Some(true)
                && r.preserved_depth.finite() == kept
                && r.noisy_depth.finite() == tilde
            {
                core_agrees += 1;
            }
        }
        let chain = gen::chain_equality_instance(6, 3);
        let base = chain.kb.operational_base();
        let r = perturbation_report(&chain.query, &base, &chain.spec, &chain.kb.system)
            .expect("derivable");
        let tight = match (r.preserved_depth, r.n, r.d_rec) {
            (Depth::Finite(p), Depth::Finite(n), Depth::Finite(d)) => p == n + d,
            _ => false,
        };
        (
            degrade_ok == taken
                && loss_ok == loss_n
                && poll_ok == poll_n
                && core_agrees == taken
                && tight
                && r.degrade_tight,
            json!({
                "instances": taken, "draws": drawn, "degrade_holds": degrade_ok,
                "loss_only": loss_n, "loss_inflation_holds": loss_ok,
                "pollution_only": poll_n, "pollution_deflation_holds": poll_ok,
                "core_matches_oracle": core_agrees,
                "chain_equality": {"n": r.n.finite(), "d_rec": r.d_rec.finite(),
                                   "preserved": r.preserved_depth.finite(), "tight": tight},
            }),
        )
    })
}

/// Max over queries of the oracle depth under `base`; `None` if any is unreachable.
fn oracle_max_depth(
    system: &ProofSystem,
    base: &PremiseBase,
    queries: &[(Formula, f64)],
) -> Option<u32> {
    let o = Oracle::new(system, base);
    queries
        .iter()
        .map(|(q, _)| o.depth(q))
        .try_fold(0u32, |acc, d| d.map(|d| acc.max(d)))
}

/// Whether some affordable subset of candidates meets the SLA on `base` alone.
fn sla_reachable_without(
    system: &ProofSystem,
    base: &PremiseBase,
    queries: &[(Formula, f64)],
    candidates: &CandidateSet,
    budget: u64,
    h: u32,
) -> bool {
    let n = candidates.len();
    (0u32..1 << n).any(|mask| {
        let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        candidates.cost_of(&set) <= budget && {
            let b = base.with(set.iter().map(|&i| candidates.item(i)));
            oracle_max_depth(system, &b, queries).is_some_and(|d| d <= h)
        }
    })
}

pub fn c9_two_phase(seed: u64) -> Criterion {
    timed(9, "two-phase SLA", 60, || {
        let mut rows = Vec::new();
        let mut ok = true;
        for branches in 2..=4 {
            for chain in 2..=5 {
                let inst = gen::sla_instance(branches, chain);
                let base = inst.kb.operational_base();
                let system = &inst.kb.system;
                let noisy = apply_noise(&base, &inst.spec).expect("valid spec");
                let only_comp = !sla_reachable_without(
                    system,
                    &noisy.base,
                    &inst.queries,
                    &inst.candidates,
                    inst.budget,
                    inst.h,
                );
                let out = two_phase_allocate(
                    &inst.queries,
                    &base,
                    &inst.spec,
                    system,
                    &inst.candidates,
                    SlaConfig {
                        h: inst.h,
                        budget: inst.budget,
                    },
                    3,
                    200,
                    seed,
                )
                .expect("valid instance");
                let (feasible, has_rec, recomputed) = match &out {
                    TwoPhaseOutcome::Feasible(a) => {
                        let sel: BTreeSet<&Formula> = a.selected.iter().collect();
                        let has_rec =
                            !a.sets.rec.is_empty() && a.sets.rec.iter().all(|b| sel.contains(b));
                        let d =
                            oracle_max_depth(system, &noisy.base.with(&a.selected), &inst.queries);
                        (a.total_cost <= inst.budget, has_rec, d)
                    }
                    TwoPhaseOutcome::Infeasible { .. } => (false, false, None),
                };
                let short = two_phase_allocate(
                    &inst.queries,
                    &base,
                    &inst.spec,
                    system,
                    &inst.candidates,
                    SlaConfig {
                        h: inst.h,
                        budget: 0,
                    },
                    3,
                    10,
                    seed,
                )
                .expect("valid instance");
                let structured = matches!(
                    &short,
                    TwoPhaseOutcome::Infeasible { reasons, .. }
                        if reasons.iter().any(|r| matches!(r, InfeasibleReason::BudgetShort { .. }))
                );
                let row_ok = only_comp
                    && feasible
                    && has_rec
                    && recomputed.is_some_and(|d| d <= inst.h)
                    && structured;
                ok &= row_ok;
                rows.push(json!({
                    "branches": branches, "chain": chain, "budget": inst.budget, "h": inst.h,
                    "only_compensation_feasible": only_comp, "feasible": feasible,
                    "contains_rec": has_rec, "recomputed_max_depth": recomputed,
                    "budget_short_reported": structured, "passed": row_ok,
                }));
            }
        }
        (ok, Value::Array(rows))
    })
}

pub fn c10_shannon(seed: u64) -> Criterion {
    timed(10, "Shannon desk check", 10, || {
        let mut rng = Rng8::seed_from_u64(seed);
        let total = 50;
        let mut ok = 0usize;
        let (mut min_gap, mut max_gap) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..total {
            let p = gen::distribution(&mut rng);
            let r = coding_entropy_check(&p).expect("valid distribution");
            // Independent recomputation from the reported codewords.
            let h: f64 = p.iter().map(|&x| -x * x.log2()).sum();
            let len: f64 = p
                .iter()
                .zip(&r.codewords)
                .map(|(&x, c)| x * c.len() as f64)
                .sum();
            let gap = len - h;
            min_gap = min_gap.min(gap);
            max_gap = max_gap.max(gap);
            if (0.0..1.0).contains(&(gap + 1e-12))
                && (gap - r.gap).abs() < 1e-9
                && prefix_free(&r.codewords)
            {
                ok += 1;
            }
        }
        (
            ok == total,
            json!({"distributions": total, "passing": ok, "min_gap": num(min_gap),
                   "max_gap": num(max_gap)}),
        )
    })
}

fn prefix_free(codes: &[BitString]) -> bool {
    let words: Vec<Vec<bool>> = codes.iter().map(|c| c.iter().collect()).collect();
    words.iter().enumerate().all(|(i, a)| {
        words
            .iter()
            .enumerate()
            .all(|(j, b)| i == j || !(a.len() <= b.len() && b.starts_with(a)))
    })
}

// Invariant suites

/// One invariant check.
#[derive(Clone, Debug)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: Value,
}

impl Check {
    pub fn to_json(&self) -> Value {
        json!({"module": self.module, "name": self.name, "passed": self.passed,
               "detail": self.detail})
    }
}

/// Every property the suite must cover, as `(module, check name)`.
pub const COVERAGE: &[(&str, &str)] = &[
    ("kbmodel", "encode_injective"),
    ("kbmodel", "parse_serialize_roundtrip"),
    ("kbmodel", "shuffle_invariance"),
    ("closure", "core_closure_equivalence"),
    ("closure", "core_irredundancy"),
    ("closure", "entails_monotone"),
    ("depth", "depth_monotone"),
    ("depth", "depth_matches_oracle"),
    ("depth", "witness_validity"),
    ("depth", "depth_determinism"),
    ("trace", "depth_le_trace_length"),
    ("trace", "bcq_aggregation"),
    ("trace", "serializability_ratio"),
    ("trace", "codec_roundtrip_exact_length"),
    ("tradeoff", "cache_cost_unique_crossover"),
    ("tradeoff", "fc_window"),
    ("tradeoff", "shannon_gap"),
    ("alloc", "delta_normalized_monotone"),
    ("alloc", "dsem_pseudometric"),
    ("alloc", "cluster_cohesion"),
    ("alloc", "greedy_determinism"),
    ("noise", "monotonicity_transfer"),
    ("noise", "depth_shift"),
    ("noise", "proxy_perturbation"),
    ("noise", "two_phase_feasibility"),
    ("cli", "proxy_disclaimer"),
    ("cli", "verify_coverage"),
];

/// Suite sizes; `quick` shrinks every sample for use in unit tests.
#[derive(Clone, Copy, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    pub quick: bool,
    pub serial_bound: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: DEFAULT_SEED,
            quick: false,
            serial_bound: DEFAULT_SERIAL_BOUND,
        }
    }
}

impl SuiteConfig {
    fn n(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }

    fn rng(&self, salt: u64) -> Rng8 {
        Rng8::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn check(module: &'static str, name: &'static str, passed: bool, detail: Value) -> Check {
    Check {
        module,
        name,
        passed,
        detail,
    }
}

pub fn invariant_suite(cfg: &SuiteConfig) -> Vec<Check> {
    let mut out = Vec::new();
    out.extend(kbmodel_checks(cfg));
    out.extend(closure_checks(cfg));
    out.extend(depth_checks(cfg));
    out.extend(trace_checks(cfg));
    out.extend(tradeoff_checks(cfg));
    out.extend(alloc_checks(cfg));
    out.extend(noise_checks(cfg));
    out.push(cli_disclaimer_check());
    let names: BTreeSet<(&str, &str)> = out.iter().map(|c| (c.module, c.name)).collect();
    let missing: Vec<String> = COVERAGE
        .iter()
        .filter(|(m, n)| *n != "verify_coverage" && !names.contains(&(*m, *n)))
        .map(|(m, n)| format!("{m}/{n}"))
        .collect();
    out.push(check(
        "cli",
        "verify_coverage",
        missing.is_empty() && out.len() + 1 == COVERAGE.len(),
        json!({"entries": COVERAGE.len(), "missing": missing}),
    ));
    out
}

fn kbmodel_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(1);
    let kbs = cfg.n(200, 20);
    let (mut encoded, mut collisions) = (0usize, 0usize);
    let (mut roundtrip_bad, mut shuffle_bad) = (0usize, 0usize);
    for _ in 0..kbs {
        let skb = gen::small_kb(&mut rng);
        let kb = &skb.kb;
        let vocab = kb.vocabulary();
        let mut formulas: BTreeSet<Formula> =
            skb.atoms.iter().cloned().map(Formula::atom).collect();
        for a in &skb.atoms {
            for b in &skb.atoms {
                formulas.insert(Formula::new(vec![a.clone(), b.clone()]).expect("nonempty"));
            }
        }
        formulas.extend(kb.stored.iter().cloned());
        let codes: BTreeSet<Vec<bool>> = formulas
            .iter()
            .map(|f| {
                canonical_encode(f, &vocab)
                    .expect("in vocabulary")
                    .iter()
                    .collect()
            })
            .collect();
        encoded += formulas.len();
        collisions += formulas.len() - codes.len();

        if parse_kb(&kb.to_string()).as_ref() != Ok(kb) {
            roundtrip_bad += 1;
        }
        let (head, stored) = match skb.text.split_once("%stored\n") {
            Some((h, s)) => (h, Some(s)),
            None => (skb.text.as_str(), None),
        };
        let mut h: Vec<&str> = head.lines().collect();
        h.shuffle(&mut rng);
        let mut text = h.join("\n") + "\n";
        if let Some(s) = stored {
            let mut s: Vec<&str> = s.lines().collect();
            s.shuffle(&mut rng);
            text += "%stored\n";
            text += &s.join("\n");
        }
        let shuffled = parse_kb(&text).expect("shuffled KB parses");
        if shuffled != *kb
            || shuffled.operational_base().as_slice() != kb.operational_base().as_slice()
        {
            shuffle_bad += 1;
        }
    }
    vec![
        check(
            "kbmodel",
            "encode_injective",
            collisions == 0,
            json!({"kbs": kbs, "formulas": encoded, "collisions": collisions}),
        ),
        check(
            "kbmodel",
            "parse_serialize_roundtrip",
            roundtrip_bad == 0,
            json!({"kbs": kbs, "failures": roundtrip_bad}),
        ),
        check(
            "kbmodel",
            "shuffle_invariance",
            shuffle_bad == 0,
            json!({"kbs": kbs, "failures": shuffle_bad}),
        ),
    ]
}

fn closure_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(2);
    let kbs = cfg.n(200, 20);
    let (mut mismatched, mut redundant, mut queries) = (0usize, 0usize, 0usize);
    let (mut mono_checks, mut mono_bad) = (0usize, 0usize);
    for _ in 0..kbs {
        let skb = gen::small_kb(&mut rng);
        let kb = &skb.kb;
        let s_o = kb.operational_base();
        let reasoner = Reasoner::for_kb(kb);
        let (core, _) = reasoner.atom_core(&s_o);
        let c = check_core(kb, &core);
        queries += c.queries;
        mismatched += c.mismatches.len();
        redundant += c.redundant.len();

        let b1 = PremiseBase::new(s_o.iter().filter(|_| rng.gen_bool(0.5)).cloned());
        let c1 = reasoner.closure(&b1);
        let c2 = reasoner.closure(&s_o);
        for q in gen::small_queries(&skb, &mut rng)
            .into_iter()
            .chain(skb.atoms.iter().cloned().map(Formula::atom))
        {
            mono_checks += 1;
            if c1.entails(&q) && !c2.entails(&q) {
                mono_bad += 1;
            }
        }
    }
    vec![
        check(
            "closure",
            "core_closure_equivalence",
            mismatched == 0,
            json!({"kbs": kbs, "queries": queries, "mismatches": mismatched}),
        ),
        check(
            "closure",
            "core_irredundancy",
            redundant == 0,
            json!({"kbs": kbs, "redundant_members": redundant}),
        ),
        check(
            "closure",
            "entails_monotone",
            mono_bad == 0,
            json!({"checks": mono_checks, "violations": mono_bad}),
        ),
    ]
}

/// Replays the witness structure bottom-up: every justification must be
/// checkable and the height must equal the reported depth.
pub fn witness_valid(
    r: &DepthResult,
    q: &Formula,
    base: &PremiseBase,
    system: &ProofSystem,
) -> bool {
    fn height(
        f: &Formula,
        r: &DepthResult,
        base: &PremiseBase,
        system: &ProofSystem,
        fuel: usize,
    ) -> Option<u32> {
        if fuel == 0 {
            return None;
        }
        match r.witness.get(f)? {
            Justification::Premise => base.contains(f).then_some(0),
            Justification::Conj { left, right } => {
                if left.conj(right) != *f {
                    return None;
                }
                let l = height(left, r, base, system, fuel - 1)?;
                let rr = height(&Formula::atom(right.clone()), r, base, system, fuel - 1)?;
                Some(1 + l.max(rr))
            }
            Justification::Rule(inst) => {
                let rule = system.rule(inst.rule_id)?;
                let body: Vec<&_> = inst.body.iter().collect();
                if f.as_atom() != Some(&inst.head) || rule.apply(&body).as_ref() != Some(&inst.head)
                {
                    return None;
                }
                inst.body
                    .iter()
                    .map(|b| height(&Formula::atom(b.clone()), r, base, system, fuel - 1))
                    .try_fold(0u32, |acc, h| h.map(|h| acc.max(h)))
                    .map(|h| h + 1)
            }
        }
    }
    match r.depth {
        Depth::Finite(d) => height(q, r, base, system, r.witness.len() + 1) == Some(d),
        Depth::Unreachable => r.witness.is_empty(),
    }
}

fn depth_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(3);
    let kbs = cfg.n(300, 25);
    let (mut mono, mut mono_bad) = (0usize, 0usize);
    let (mut oracle_n, mut oracle_bad) = (0usize, 0usize);
    let (mut wit_n, mut wit_bad, mut det_bad) = (0usize, 0usize, 0usize);
    for _ in 0..kbs {
        let skb = gen::small_kb(&mut rng);
        let kb = &skb.kb;
        let s_o = kb.operational_base();
        let reasoner = Reasoner::for_kb(kb);
        let oracle = Oracle::for_kb(kb);
        let b1 = PremiseBase::new(s_o.iter().filter(|_| rng.gen_bool(0.6)).cloned());
        let c1 = reasoner.closure(&b1);
        let c2 = reasoner.closure(&s_o);
        let mut queries = gen::small_queries(&skb, &mut rng);
        queries.extend(skb.atoms.iter().cloned().map(Formula::atom));
        for q in &queries {
            mono += 1;
            if c2.depth(q) > c1.depth(q) {
                mono_bad += 1;
            }
            oracle_n += 1;
            if c2.depth(q).finite() != oracle.depth(q) {
                oracle_bad += 1;
            }
            let r = derivation_depth(q, &s_o, &kb.system);
            wit_n += 1;
            if !witness_valid(&r, q, &s_o, &kb.system) {
                wit_bad += 1;
            }
            if derivation_depth(q, &s_o, &kb.system) != r || c2.depth_result(q) != r {
                det_bad += 1;
            }
        }
    }
    vec![
        check(
            "depth",
            "depth_monotone",
            mono_bad == 0,
            json!({"checks": mono, "violations": mono_bad}),
        ),
        check(
            "depth",
            "depth_matches_oracle",
            oracle_bad == 0,
            json!({"kbs": kbs, "checks": oracle_n, "mismatches": oracle_bad}),
        ),
        check(
            "depth",
            "witness_validity",
            wit_bad == 0,
            json!({"checks": wit_n, "invalid": wit_bad}),
        ),
        check(
            "depth",
            "depth_determinism",
            det_bad == 0,
            json!({"checks": wit_n, "differences": det_bad}),
        ),
    ]
}

fn trace_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(4);
    // Every valid trace bounds the depth of its output.
    let system = parse_kb(gen::TRACE_SYSTEM).expect("fixed system").system;
    let traces = cfg.n(2000, 200);
    let mut leq_bad = 0usize;
    for _ in 0..traces {
        let t = gen::random_trace(&system, 12, 16, &mut rng);
        let base = gen::trace_base(t.m);
        let out = replay_validate(&t, &base, &system).expect("valid trace");
        let d = derivation_depth(&out, &base, &system).depth;
        if d > Depth::Finite(t.len() as u32) {
            leq_bad += 1;
        }
    }
    // Shortest-trace witnesses on small KBs, plus aggregation and the ratio.
    let kbs = cfg.n(200, 20);
    let search = SearchConfig::default();
    let (mut witnesses, mut witness_bad) = (0usize, 0usize);
    let (mut bcqs, mut agg_bad) = (0usize, 0usize);
    let (mut lo, mut hi, mut flagged, mut ratios) =
        (f64::INFINITY, f64::NEG_INFINITY, 0usize, 0usize);
    for _ in 0..kbs {
        let skb = gen::small_kb(&mut rng);
        let kb = &skb.kb;
        let s_o = kb.operational_base();
        let c = Reasoner::for_kb(kb).closure(&s_o);
        let queries = gen::small_queries(&skb, &mut rng);
        for q in &queries {
            let Ok(r) = kbcost_core::trace::search::min_trace_length_in(&c, q, &search) else {
                continue;
            };
            witnesses += 1;
            let replayed = replay_validate(&r.witness, &s_o, &kb.system);
            let d = c.depth(q);
            if replayed.as_ref() != Ok(q) || r.witness.len() != r.n || d > Depth::Finite(r.n as u32)
            {
                witness_bad += 1;
            }
            if let Depth::Finite(d) = d {
                if d > 0 {
                    let ratio = r.n as f64 / d as f64;
                    ratios += 1;
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                    if ratio > cfg.serial_bound {
                        flagged += 1;
                    }
                }
            }
            if q.len() > 1 && !s_o.contains(q) {
                let parts: Option<usize> = q
                    .conjuncts()
                    .iter()
                    .map(|a| {
                        kbcost_core::trace::search::min_trace_length_in(
                            &c,
                            &Formula::atom(a.clone()),
                            &search,
                        )
                        .ok()
                        .map(|r| r.n)
                    })
                    .sum();
                // A stored conjunction can entail q without entailing each conjunct.
                let Some(parts) = parts else { continue };
                bcqs += 1;
                if r.n > parts + q.len() - 1 {
                    agg_bad += 1;
                }
            }
        }
    }
    // Codec.
    let codec_n = cfg.n(2000, 200);
    let (mut rt_bad, mut len_bad) = (0usize, 0usize);
    for _ in 0..codec_n {
        let t = gen::random_trace(&system, 30, 30, &mut rng);
        let enc = encode_trace(&t, &system).expect("valid trace");
        if decode_trace(&enc.bits, &system).as_ref() != Ok(&t) {
            rt_bad += 1;
        }
        let arities = t.steps.iter().map(|s| s.premises.len());
        if enc.bits.len() != encoded_len(t.m, system.rule_count(), arities) {
            len_bad += 1;
        }
    }
    vec![
        check(
            "trace",
            "depth_le_trace_length",
            leq_bad == 0 && witness_bad == 0,
            json!({"random_traces": traces, "random_violations": leq_bad,
                   "search_witnesses": witnesses, "witness_failures": witness_bad}),
        ),
        check(
            "trace",
            "bcq_aggregation",
            agg_bad == 0,
            json!({"bcqs": bcqs, "violations": agg_bad}),
        ),
        check(
            "trace",
            "serializability_ratio",
            ratios > 0 && lo >= 1.0 && flagged == 0,
            json!({"instances": ratios, "ratio_min": num(lo), "ratio_max": num(hi),
                   "bound": num(cfg.serial_bound), "flagged": flagged}),
        ),
        check(
            "trace",
            "codec_roundtrip_exact_length",
            rt_bad == 0 && len_bad == 0,
            json!({"traces": codec_n, "roundtrip_failures": rt_bad, "length_mismatches": len_bad}),
        ),
    ]
}

fn tradeoff_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(5);
    // Sign-change scan on a geometric grid.
    let cases = cfg.n(500, 50);
    let (mut scan_bad, mut crossings) = (0usize, 0usize);
    for _ in 0..cases {
        let proxy = rng.gen_range(1.0..400.0);
        let depth = rng.gen_range(0.0..40.0f64).round();
        let model =
            CostModel::new(rng.gen_range(0.25..8.0), rng.gen_range(0.0..3.0)).expect("valid");
        let cf = critical_frequency(proxy, depth, 64, &model);
        let grid: Vec<f64> = (0..120).map(|k| 2f64.powf(k as f64 / 6.0)).collect();
        let costs: Vec<_> = grid
            .iter()
            .map(|&f| amortized_costs(proxy, depth, f, &model).expect("f > 0"))
            .collect();
        let decreasing = costs.windows(2).all(|w| w[1].cost_cache < w[0].cost_cache);
        let constant = costs.iter().all(|c| c.cost_derive == depth);
        let sign: Vec<bool> = costs.iter().map(|c| c.cost_cache < c.cost_derive).collect();
        let changes = sign.windows(2).filter(|w| w[0] != w[1]).count();
        let brackets = match cf.f_star {
            Some(f) => grid
                .iter()
                .zip(&sign)
                .all(|(&g, &s)| (g > f) == s || (g - f).abs() < 1e-9 * f),
            None => sign.iter().all(|s| !s),
        };
        if changes == 1 {
            crossings += 1;
        }
        if !(decreasing && constant && changes <= 1 && brackets) {
            scan_bad += 1;
        }
    }

    // Window: constants from the calibration sweep, tested on held-out sizes.
    let model = CostModel::default();
    let calibrate = |ms: &[usize], seed: u64| -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &m in ms {
            let r = tightness_suite(m, 20, seed ^ m as u64).expect("m >= 4");
            for s in r.samples {
                out.push((
                    m,
                    s.proxy_bits as f64,
                    s.depth.finite().expect("finite") as f64,
                ));
            }
        }
        out
    };
    let ratio_of = |(m, p, d): &(usize, f64, f64)| critical_frequency(*p, *d, *m, &model).ratio;
    let calib = calibrate(&TIGHTNESS_MS, cfg.seed);
    let ratios: Vec<f64> = calib.iter().filter_map(ratio_of).collect();
    let c_lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c_hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let held = calibrate(&[32, 128], cfg.seed ^ 7);
    let mut window_bad = 0usize;
    for (m, p, d) in calib.iter().chain(&held) {
        let (f_lo, f_hi) = fc_window(c_lo, c_hi, *m, *d, &model);
        let at = |f: f64| amortized_costs(*p, *d, f, &model).expect("f > 0");
        let hi_ok =
            at(f_hi).cost_cache <= at(f_hi).cost_derive && at(f_hi * 1.01).winner == Winner::Cache;
        let lo_ok =
            at(f_lo).cost_cache >= at(f_lo).cost_derive && at(f_lo * 0.99).winner == Winner::Derive;
        if !(hi_ok && lo_ok) {
            window_bad += 1;
        }
    }

    let dists = cfg.n(200, 30);
    let mut gap_bad = 0usize;
    let mut max_gap = f64::NEG_INFINITY;
    for _ in 0..dists {
        let p = gen::distribution(&mut rng);
        let r = coding_entropy_check(&p).expect("valid distribution");
        max_gap = max_gap.max(r.gap);
        if !(r.gap >= -1e-12 && r.gap < 1.0 && r.kraft_sum <= 1.0 + 1e-12) {
            gap_bad += 1;
        }
    }
    vec![
        check(
            "tradeoff",
            "cache_cost_unique_crossover",
            scan_bad == 0,
            json!({"cases": cases, "with_crossover": crossings, "failures": scan_bad}),
        ),
        check(
            "tradeoff",
            "fc_window",
            window_bad == 0,
            json!({"c_lo": num(c_lo), "c_hi": num(c_hi), "calibration": calib.len(),
                   "held_out": held.len(), "failures": window_bad}),
        ),
        check(
            "tradeoff",
            "shannon_gap",
            gap_bad == 0,
            json!({"distributions": dists, "max_gap": num(max_gap), "failures": gap_bad}),
        ),
    ]
}

/// Essential sets of random BCQs over a 12-atom base.
fn ess_sample(rng: &mut Rng8, count: usize) -> Vec<BTreeSet<Formula>> {
    let base = tightness_base(12);
    let system = ProofSystem::default();
    (0..count)
        .map(|_| {
            let t = rng.gen_range(1..=4);
            let mut idx = rand::seq::index::sample(rng, 12, t).into_vec();
            idx.sort_unstable();
            let q = tightness_query(12, &idx);
            ess_plus(&q, &base, &system, EssMode::Exact)
                .expect("derivable")
                .atoms
        })
        .collect()
}

fn alloc_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(6);
    let instances = cfg.n(40, 6);
    let (mut chains, mut mono_bad, mut norm_bad, mut det_bad) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..instances {
        let (inst, _) = gen::dr_instance(&mut rng);
        let mut obj = DepthObjective::new(&inst.kb, &inst.workload, &inst.candidates);
        if obj.value(&[]) != 0.0 {
            norm_bad += 1;
        }
        for _ in 0..10 {
            let mut order: Vec<usize> = (0..inst.candidates.len()).collect();
            order.shuffle(&mut rng);
            let mut set: Vec<usize> = Vec::new();
            let mut prev = 0.0;
            for u in order {
                set.push(u);
                set.sort_unstable();
                let v = obj.value(&set);
                if v + 1e-12 < prev {
                    mono_bad += 1;
                }
                prev = v;
            }
            chains += 1;
        }
        let costs = inst.candidates.costs();
        let a = greedy_knapsack(costs, inst.budget, &mut obj, 2);
        let mut fresh = DepthObjective::new(&inst.kb, &inst.workload, &inst.candidates);
        let b = greedy_knapsack(costs, inst.budget, &mut fresh, 2);
        if a != b {
            det_bad += 1;
        }
    }
    let sample = ess_sample(&mut rng, 50);
    let (mut triples, mut metric_bad) = (0usize, 0usize);
    for x in &sample {
        if d_sem(x, x) != 0.0 {
            metric_bad += 1;
        }
        for y in &sample {
            if d_sem(x, y) != d_sem(y, x) {
                metric_bad += 1;
            }
            for z in &sample {
                triples += 1;
                if d_sem(x, z) > d_sem(x, y) + d_sem(y, z) + 1e-12 {
                    metric_bad += 1;
                }
            }
        }
    }
    let vocab = kbcost_core::Vocabulary::of_formulas(tightness_base(12).iter());
    let probs = vec![1.0 / sample.len() as f64; sample.len()];
    let depths = vec![1.0; sample.len()];
    let (mut clusters, mut cohesion_bad) = (0usize, 0usize);
    for delta in [0.3, 0.5, 0.7] {
        let model = cluster_sets(
            sample.clone(),
            &probs,
            &depths,
            &vocab,
            delta,
            &ClusterConfig::default(),
        )
        .expect("valid sample");
        for c in &model.clusters {
            clusters += 1;
            for &i in &c.queries {
                for &j in &c.queries {
                    if d_sem(&sample[i], &sample[j]) > delta + 1e-12 {
                        cohesion_bad += 1;
                    }
                }
            }
        }
    }
    vec![
        check(
            "alloc",
            "delta_normalized_monotone",
            norm_bad == 0 && mono_bad == 0,
            json!({"instances": instances, "chains": chains, "normalization_failures": norm_bad,
                   "monotonicity_violations": mono_bad}),
        ),
        check(
            "alloc",
            "dsem_pseudometric",
            metric_bad == 0,
            json!({"queries": sample.len(), "triples": triples, "violations": metric_bad}),
        ),
        check(
            "alloc",
            "cluster_cohesion",
            cohesion_bad == 0,
            json!({"clusters": clusters, "violating_pairs": cohesion_bad}),
        ),
        check(
            "alloc",
            "greedy_determinism",
            det_bad == 0,
            json!({"instances": instances, "differences": det_bad}),
        ),
    ]
}

fn noise_checks(cfg: &SuiteConfig) -> Vec<Check> {
    let mut rng = cfg.rng(7);
    // Monotonicity transfer.
    let draws = cfg.n(400, 40);
    let (mut loss_n, mut loss_bad, mut poll_n, mut poll_bad) = (0usize, 0usize, 0usize, 0usize);
    let (mut pert_n, mut pert_bad) = (0usize, 0usize);
    for _ in 0..draws {
        let Some(inst) = gen::noise_instance(&mut rng) else {
            continue;
        };
        let base = inst.kb.operational_base();
        let Ok(r) = perturbation_report(&inst.query, &base, &inst.spec, &inst.kb.system) else {
            continue;
        };
        if let Some(h) = r.loss_inflation_holds {
            loss_n += 1;
            loss_bad += usize::from(!h);
        }
        if let Some(h) = r.pollution_deflation_holds {
            poll_n += 1;
            poll_bad += usize::from(!h);
        }
        let model = CostModel::default();
        if let Ok(t) = noisy_tradeoff(
            &inst.query,
            &base,
            &inst.spec,
            &inst.kb.system,
            &model,
            10.0,
        ) {
            if let Some(clean) = t.clean_proxy {
                pert_n += 1;
                let diff = (t.noisy_proxy as i64 - clean as i64).unsigned_abs() as usize;
                if diff > t.conversion.bits + CONVERSION_PREAMBLE_BITS {
                    pert_bad += 1;
                }
            }
        }
    }

    // Depth shift over every loss subset of small KBs.
    let kbs = cfg.n(40, 6);
    let (mut shift_n, mut shift_bad) = (0usize, 0usize);
    for _ in 0..kbs {
        let skb = gen::small_kb(&mut rng);
        let kb = &skb.kb;
        let base = kb.operational_base();
        if base.len() > 8 {
            continue;
        }
        let reasoner = Reasoner::for_kb(kb);
        let c0 = reasoner.closure(&base);
        let mut queries = gen::small_queries(&skb, &mut rng);
        queries.extend(skb.atoms.iter().cloned().map(Formula::atom));
        for mask in 0u32..1 << base.len() {
            let lost: BTreeSet<Formula> = base
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            let spec = NoiseSpec::new(lost, BTreeSet::new());
            let Depth::Finite(d_rec) =
                reconstruction_depth(&base, &spec, &kb.system).expect("valid spec")
            else {
                continue;
            };
            let cp = reasoner.closure(&base.without(&spec.lost));
            for s in &queries {
                let Depth::Finite(n) = c0.depth(s) else {
                    continue;
                };
                shift_n += 1;
                if cp.depth(s) > Depth::Finite(n + d_rec) {
                    shift_bad += 1;
                }
            }
        }
    }

    // Two-phase feasibility on SLA instances and random loss instances.
    let mut tp_feasible = 0usize;
    let mut tp_bad = 0usize;
    let mut runs = 0usize;
    let mut tp_check = |kb: &KnowledgeBase,
                        spec: &NoiseSpec,
                        queries: &[(Formula, f64)],
                        cands: &CandidateSet,
                        h: u32,
                        budget: u64| {
        let base = kb.operational_base();
        let Ok(out) = two_phase_allocate(
            queries,
            &base,
            spec,
            &kb.system,
            cands,
            SlaConfig { h, budget },
            2,
            50,
            cfg.seed,
        ) else {
            return;
        };
        runs += 1;
        if let TwoPhaseOutcome::Feasible(a) = out {
            tp_feasible += 1;
            let noisy = apply_noise(&base, spec).expect("valid spec");
            let d = oracle_max_depth(&kb.system, &noisy.base.with(&a.selected), queries);
            if !(d.is_some_and(|d| d <= h) && d == Some(a.max_depth) && a.total_cost <= budget) {
                tp_bad += 1;
            }
        }
    };
    for branches in 2..=3 {
        for chain in 2..=4 {
            let s = gen::sla_instance(branches, chain);
            tp_check(&s.kb, &s.spec, &s.queries, &s.candidates, s.h, s.budget);
        }
    }
    for _ in 0..cfg.n(150, 20) {
        let skb = gen::small_kb(&mut rng);
        let o = Oracle::for_kb(&skb.kb);
        let derivable: Vec<Formula> = o.derivable_atoms().cloned().map(Formula::atom).collect();
        if derivable.is_empty() {
            continue;
        }
        let base = skb.kb.operational_base();
        let lost: BTreeSet<Formula> = base.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        let spec = NoiseSpec::new(lost, BTreeSet::new());
        let queries = gen::normalized(
            derivable
                .choose_multiple(&mut rng, derivable.len().min(3))
                .map(|q| (q.clone(), 1.0))
                .collect(),
        );
        let cand: Vec<(Formula, u64)> = derivable
            .iter()
            .filter(|f| !base.contains(f))
            .map(|f| (f.clone(), rng.gen_range(1..4)))
            .collect();
        let Ok(cands) = CandidateSet::new(cand) else {
            continue;
        };
        tp_check(
            &skb.kb,
            &spec,
            &queries,
            &cands,
            rng.gen_range(0..4),
            rng.gen_range(0..10),
        );
    }

    vec![
        check(
            "noise",
            "monotonicity_transfer",
            loss_bad == 0 && poll_bad == 0,
            json!({"loss_only": loss_n, "loss_violations": loss_bad,
                   "pollution_only": poll_n, "pollution_violations": poll_bad}),
        ),
        check(
            "noise",
            "depth_shift",
            shift_bad == 0 && shift_n > 0,
            json!({"checks": shift_n, "violations": shift_bad}),
        ),
        check(
            "noise",
            "proxy_perturbation",
            pert_bad == 0 && pert_n > 0,
            json!({"instances": pert_n, "violations": pert_bad,
                   "format_constant": CONVERSION_PREAMBLE_BITS}),
        ),
        check(
            "noise",
            "two_phase_feasibility",
            tp_bad == 0 && tp_feasible > 0,
            json!({"runs": runs, "feasible": tp_feasible, "recomputation_failures": tp_bad}),
        ),
    ]
}

fn cli_disclaimer_check() -> Check {
    let reports = crate::commands::proxy_report_samples();
    let missing: Vec<String> = reports
        .iter()
        .filter(|r| {
            let v = r.to_json();
            v["proxy_disclaimer"].as_str() != Some(crate::report::PROXY_DISCLAIMER)
        })
        .map(|r| r.command.clone())
        .collect();
    check(
        "cli",
        "proxy_disclaimer",
        missing.is_empty() && !reports.is_empty(),
        json!({"reports": reports.len(), "missing": missing}),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes_and_covers_everything() {
        let checks = invariant_suite(&SuiteConfig {
            quick: true,
            ..SuiteConfig::default()
        });
        for c in &checks {
            assert!(c.passed, "{}/{}: {}", c.module, c.name, c.detail);
        }
        assert_eq!(checks.len(), COVERAGE.len());
    }

    #[test]
    fn witness_checker_rejects_tampering() {
        let kb = parse_kb("x(a).\np(X) :- x(X).\nq(X) :- p(X).").unwrap();
        let base = kb.operational_base();
        let q = kbcost_core::parse_formula("q(a) & x(a)").unwrap();
        let mut r = derivation_depth(&q, &base, &kb.system);
        assert!(witness_valid(&r, &q, &base, &kb.system));
        r.depth = Depth::Finite(1);
        assert!(!witness_valid(&r, &q, &base, &kb.system));
    }

    #[test]
    fn prefix_free_detects_prefixes() {
        let mut a = BitString::new();
        a.push(true);
        let mut b = a.clone();
        b.push(false);
        assert!(!prefix_free(&[a.clone(), b]));
        let mut c = BitString::new();
        c.push(false);
        assert!(prefix_free(&[a, c]));
    }
}
