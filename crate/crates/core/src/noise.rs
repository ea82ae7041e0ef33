//! Noisy premise bases: loss, pollution, and what they cost.
//!
//! A noisy base is `(B0 \ lost) ∪ spurious`. Reconstruction depth is the
//! depth of the lost premises over the preserved part `B∩ = B0 \ lost`, and
//! `Unreachable` stands in for an unbounded reconstruction.

use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::{
    dr_check, greedy_knapsack, Allocation, CandidateSet, DepthObjective, DrReport, Objective,
};
use crate::bits::{field_width, gamma_len};
use crate::closure::Reasoner;
use crate::depth::Depth;
use crate::error::{Error, Result};
use crate::kbmodel::{Formula, GroundAtom, PremiseBase, ProofSystem, Symbol};
use crate::trace::search::{ess_plus_in, EssMode, SearchConfig};
use crate::tradeoff::{
    amortized_costs, critical_frequency, description_proxy_in, AmortizedCosts, CostModel,
    CriticalFrequency,
};

/// Fixed constants of the no-worse audit: `C1` scales the base-conversion
/// term and `C2` the reconstruction term.
pub const NO_WORSE_C1: f64 = 4.0;
pub const NO_WORSE_C2: f64 = 4.0;
/// Bits that mark a proxy description routed through the other base.
pub const CONVERSION_PREAMBLE_BITS: usize = 2;

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct NoiseSpec {
    pub lost: BTreeSet<Formula>,
    pub spurious: BTreeSet<Formula>,
    pub seed: Option<u64>,
}

impl NoiseSpec {
    pub fn new(lost: BTreeSet<Formula>, spurious: BTreeSet<Formula>) -> Self {
        NoiseSpec {
            lost,
            spurious,
            seed: None,
        }
    }

    /// `𝓝 = |lost| + |spurious|`.
    pub fn size(&self) -> usize {
        self.lost.len() + self.spurious.len()
    }

    pub fn is_loss_only(&self) -> bool {
        self.spurious.is_empty()
    }

    pub fn is_pollution_only(&self) -> bool {
        self.lost.is_empty()
    }

    pub fn validate(&self, baseline: &PremiseBase) -> Result<()> {
        if let Some(f) = self.lost.iter().find(|f| !baseline.contains(f)) {
            return Err(Error::LostNotSubset(f.to_string()));
        }
        if let Some(f) = self.spurious.iter().find(|f| baseline.contains(f)) {
            return Err(Error::SpuriousInBaseline(f.to_string()));
        }
        Ok(())
    }

    /// Loses `round(loss_rate·m)` baseline members and adds
    /// `round(pollution_rate·m)` atoms drawn from the Herbrand universe over
    /// the predicates and constants of the baseline and rules, minus the baseline.
    pub fn generate(
        baseline: &PremiseBase,
        system: &ProofSystem,
        loss_rate: f64,
        pollution_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        for r in [loss_rate, pollution_rate] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter(
                    "noise rates must lie in [0, 1]".into(),
                ));
            }
        }
        let m = baseline.len();
        let n_lost = libm::round(loss_rate * m as f64) as usize;
        let n_spur = libm::round(pollution_rate * m as f64) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lost: BTreeSet<Formula> = baseline
            .as_slice()
            .choose_multiple(&mut rng, n_lost)
            .cloned()
            .collect();

        let mut signature: BTreeSet<(Symbol, usize)> = BTreeSet::new();
        let mut constants: BTreeSet<Symbol> = system.constants();
        for a in baseline.atoms() {
            signature.insert((a.predicate.clone(), a.arity()));
            constants.extend(a.args.iter().cloned());
        }
        for r in system.rules() {
            for t in core::iter::once(&r.head).chain(&r.body) {
                signature.insert((t.predicate.clone(), t.terms.len()));
            }
        }
        let signature: Vec<(Symbol, usize)> = signature.into_iter().collect();
        let constants: Vec<Symbol> = constants.into_iter().collect();
        let universe: u128 = signature
            .iter()
            .map(|(_, k)| {
                (constants.len() as u128)
                    .checked_pow(*k as u32)
                    .unwrap_or(u128::MAX)
            })
            .fold(0u128, |a, b| a.saturating_add(b));
        let taken = baseline
            .atoms()
            .filter(|a| {
                signature
                    .binary_search(&(a.predicate.clone(), a.arity()))
                    .is_ok()
            })
            .count() as u128;
        if (n_spur as u128) > universe.saturating_sub(taken) {
            return Err(Error::InvalidParameter(
                "pollution rate exceeds the available universe".into(),
            ));
        }
        let mut spurious = BTreeSet::new();
        while spurious.len() < n_spur {
            let (p, k) = &signature[rng.gen_range(0..signature.len())];
            let args: Vec<Symbol> = (0..*k)
                .map(|_| constants[rng.gen_range(0..constants.len())].clone())
                .collect();
            let f = Formula::atom(GroundAtom::new(p.clone(), args));
            if !baseline.contains(&f) {
                spurious.insert(f);
            }
        }
        Ok(NoiseSpec {
            lost,
            spurious,
            seed: Some(seed),
        })
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct NoisyBase {
    pub base: PremiseBase,
    pub spec: NoiseSpec,
    pub baseline_handle: u64,
    /// `|B0|`.
    pub m: usize,
    /// `|B̃0|`.
    pub m_tilde: usize,
}

pub fn apply_noise(baseline: &PremiseBase, spec: &NoiseSpec) -> Result<NoisyBase> {
    spec.validate(baseline)?;
    let base = baseline.without(&spec.lost).with(&spec.spurious);
    Ok(NoisyBase {
        m: baseline.len(),
        m_tilde: base.len(),
        base,
        spec: spec.clone(),
        baseline_handle: baseline.handle(),
    })
}

/// `max_{b ∈ lost} Dd(b | B0 \ lost)`, 0 for no loss.
pub fn reconstruction_depth(
    baseline: &PremiseBase,
    spec: &NoiseSpec,
    system: &ProofSystem,
) -> Result<Depth> {
    spec.validate(baseline)?;
    let preserved = baseline.without(&spec.lost);
    let c = Reasoner::new(system, baseline).closure(&preserved);
    Ok(spec
        .lost
        .iter()
        .map(|b| c.depth(b))
        .max()
        .unwrap_or(Depth::ZERO))
}

#[derive(Clone, PartialEq, Debug)]
pub struct PerturbationReport {
    /// `Dd(q|B0)`.
    pub n: Depth,
    /// `Dd(q|B∩)`.
    pub preserved_depth: Depth,
    /// `Dd(q|B̃0)`.
    pub noisy_depth: Depth,
    pub d_rec: Depth,
    /// `Dd(q|B∩) ≤ n + d_rec`; `None` when `d_rec` is unbounded.
    pub degrade_holds: Option<bool>,
    /// Equality in the degradation bound.
    pub degrade_tight: bool,
    /// `ñ ≤ Dd(q|B∩)`.
    pub noisy_le_preserved: bool,
    /// `ñ ≥ n`, checked for loss-only specs.
    pub loss_inflation_holds: Option<bool>,
    /// `ñ ≤ n`, checked for pollution-only specs.
    pub pollution_deflation_holds: Option<bool>,
    /// `ñ / n` when both are finite and `n > 0`.
    pub relative_inflation: Option<f64>,
}

impl PerturbationReport {
    /// Every applicable check passed.
    pub fn all_hold(&self) -> bool {
        self.degrade_holds != Some(false)
            && self.noisy_le_preserved
            && self.loss_inflation_holds != Some(false)
            && self.pollution_deflation_holds != Some(false)
    }
}

pub fn perturbation_report(
    q: &Formula,
    baseline: &PremiseBase,
    spec: &NoiseSpec,
    system: &ProofSystem,
) -> Result<PerturbationReport> {
    spec.validate(baseline)?;
    let noisy = apply_noise(baseline, spec)?;
    let reasoner = Reasoner::new(system, &baseline.with(&spec.spurious));
    let c0 = reasoner.closure(baseline);
    let n = c0.depth(q);
    if !n.is_finite() {
        return Err(Error::UnreachableQuery);
    }
    let preserved = baseline.without(&spec.lost);
    let cp = reasoner.closure(&preserved);
    let preserved_depth = cp.depth(q);
    let d_rec = spec
        .lost
        .iter()
        .map(|b| cp.depth(b))
        .max()
        .unwrap_or(Depth::ZERO);
    let noisy_depth = reasoner.closure(&noisy.base).depth(q);
    let (degrade_holds, degrade_tight) = match (n, d_rec, preserved_depth) {
        (Depth::Finite(n), Depth::Finite(r), p) => {
            (Some(p <= Depth::Finite(n + r)), p == Depth::Finite(n + r))
        }
        _ => (None, false),
    };
    let relative_inflation = match (n, noisy_depth) {
        (Depth::Finite(n), Depth::Finite(t)) if n > 0 => Some(f64::from(t) / f64::from(n)),
        _ => None,
    };
    Ok(PerturbationReport {
        n,
        preserved_depth,
        noisy_depth,
        d_rec,
        degrade_holds,
        degrade_tight,
        noisy_le_preserved: noisy_depth <= preserved_depth,
        loss_inflation_holds: spec.is_loss_only().then_some(noisy_depth >= n),
        pollution_deflation_holds: spec.is_pollution_only().then_some(noisy_depth <= n),
        relative_inflation,
    })
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct BaseConversion {
    pub bits: usize,
    pub header_bits: usize,
    /// `|B0 ∪ spurious|`, the index pool.
    pub universe: usize,
    pub index_width: u32,
    /// `bits ≤ 2·𝓝·log2(m+𝓝) + header`.
    pub bound_holds: bool,
}

/// Both index lists over `B0 ∪ spurious`: gamma-coded lengths, then one
/// fixed-width index per element.
pub fn base_conversion_bits(baseline: &PremiseBase, spec: &NoiseSpec) -> Result<BaseConversion> {
    spec.validate(baseline)?;
    let m = baseline.len();
    let universe = m + spec.spurious.len();
    let index_width = field_width(universe as u64);
    let header_bits =
        gamma_len(spec.lost.len() as u64 + 1) + gamma_len(spec.spurious.len() as u64 + 1);
    let noise = spec.size();
    let bits = header_bits + noise * index_width as usize;
    let scale = if m + noise > 0 {
        libm::log2((m + noise) as f64)
    } else {
        0.0
    };
    let bound_holds = bits as f64 <= 2.0 * noise as f64 * scale + header_bits as f64 + 1e-9;
    Ok(BaseConversion {
        bits,
        header_bits,
        universe,
        index_width,
        bound_holds,
    })
}

#[derive(Clone, PartialEq, Debug)]
pub struct NoWorse {
    pub noisy_optimum: f64,
    pub clean_optimum: f64,
    pub allowance: f64,
    pub holds: bool,
}

#[derive(Clone, PartialEq, Debug)]
pub struct NoisyTradeoff {
    pub noisy_depth: u32,
    /// Proxy of `q` given the noisy base, allowed to route through the baseline.
    pub noisy_proxy: usize,
    pub noisy_costs: AmortizedCosts,
    pub noisy_critical: CriticalFrequency,
    pub clean_depth: Option<u32>,
    pub clean_proxy: Option<usize>,
    pub clean_costs: Option<AmortizedCosts>,
    pub clean_critical: Option<CriticalFrequency>,
    pub conversion: BaseConversion,
    pub d_rec: Depth,
    /// `None` when `q` is not derivable from the baseline or `d_rec` is unbounded.
    pub no_worse: Option<NoWorse>,
}

/// Tradeoff of `q` against the noisy base, audited against the baseline.
///
/// Each base's proxy is the shorter of its direct description and the
/// other base's direct description behind the conversion index lists.
pub fn noisy_tradeoff(
    q: &Formula,
    baseline: &PremiseBase,
    spec: &NoiseSpec,
    system: &ProofSystem,
    model: &CostModel,
    frequency: f64,
) -> Result<NoisyTradeoff> {
    let noisy = apply_noise(baseline, spec)?;
    let reasoner = Reasoner::new(system, &baseline.with(&spec.spurious));
    let cfg = SearchConfig::default();
    let cn = reasoner.closure(&noisy.base);
    let noisy_depth = cn.depth(q).finite().ok_or(Error::UnreachableQuery)?;
    let direct_noisy = description_proxy_in(&cn, system, q, &cfg)?.bits;
    let c0 = reasoner.closure(baseline);
    let clean_depth = c0.depth(q).finite();
    let direct_clean = match clean_depth {
        Some(_) => Some(description_proxy_in(&c0, system, q, &cfg)?.bits),
        None => None,
    };
    let conversion = base_conversion_bits(baseline, spec)?;
    let detour = conversion.bits + CONVERSION_PREAMBLE_BITS;
    let noisy_proxy = direct_clean.map_or(direct_noisy, |c| direct_noisy.min(detour + c));
    let clean_proxy = direct_clean.map(|c| c.min(detour + direct_noisy));
    let noisy_costs =
        amortized_costs(noisy_proxy as f64, f64::from(noisy_depth), frequency, model)?;
    let noisy_critical = critical_frequency(
        noisy_proxy as f64,
        f64::from(noisy_depth),
        noisy.m_tilde,
        model,
    );
    let (clean_costs, clean_critical) = match (clean_depth, clean_proxy) {
        (Some(d), Some(p)) => (
            Some(amortized_costs(p as f64, f64::from(d), frequency, model)?),
            Some(critical_frequency(p as f64, f64::from(d), noisy.m, model)),
        ),
        _ => (None, None),
    };
    let d_rec = reconstruction_depth(baseline, spec, system)?;
    let no_worse = match (clean_costs, d_rec) {
        (Some(clean), Depth::Finite(r)) => {
            let noisy_optimum = noisy_costs.cost_cache.min(noisy_costs.cost_derive);
            let clean_optimum = clean.cost_cache.min(clean.cost_derive);
            let allowance = NO_WORSE_C1 * model.rho * conversion.bits as f64 / frequency
                + NO_WORSE_C2 * f64::from(r);
            Some(NoWorse {
                noisy_optimum,
                clean_optimum,
                allowance,
                holds: noisy_optimum <= clean_optimum + allowance + 1e-9,
            })
        }
        _ => None,
    };
    Ok(NoisyTradeoff {
        noisy_depth,
        noisy_proxy,
        noisy_costs,
        noisy_critical,
        clean_depth,
        clean_proxy,
        clean_costs,
        clean_critical,
        conversion,
        d_rec,
        no_worse,
    })
}

/// `Δ̃(S) − λ·Σ_{u∈S} σ(u)·π(u)` over the noisy base.
#[derive(Debug, Clone)]
pub struct RobustObjective {
    pub inner: DepthObjective,
    /// Pollution exposure `π(u)` per candidate.
    pub exposure: Vec<f64>,
    pub costs: Vec<u64>,
    pub lambda: f64,
}

impl RobustObjective {
    pub fn new(
        queries: &[(Formula, f64)],
        noisy: &NoisyBase,
        system: &ProofSystem,
        candidates: &CandidateSet,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
        }
        let inner = DepthObjective::with_base(system, &noisy.base, queries, candidates.items());
        let c = Reasoner::new(system, &noisy.base.with(candidates.items())).closure(&noisy.base);
        let cfg = SearchConfig::default();
        let exposure = candidates
            .items()
            .iter()
            .map(|u| {
                let ess = ess_plus_in(&c, u, EssMode::Exact, &cfg)?.atoms;
                let hit = ess
                    .iter()
                    .filter(|a| noisy.spec.spurious.contains(*a))
                    .count();
                Ok(hit as f64 / ess.len().max(1) as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RobustObjective {
            inner,
            exposure,
            costs: candidates.costs().to_vec(),
            lambda,
        })
    }

    pub fn penalty(&self, set: &[usize]) -> f64 {
        set.iter()
            .map(|&u| self.costs[u] as f64 * self.exposure[u])
            .sum::<f64>()
            * self.lambda
    }
}

impl Objective for RobustObjective {
    fn ground_size(&self) -> usize {
        self.inner.ground_size()
    }

    /// Noisy per-query reductions, then the penalty as a last component.
    fn components(&mut self, set: &[usize]) -> Vec<f64> {
        let mut c = self.inner.components(set);
        c.push(-self.penalty(set));
        c
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SlaConfig {
    pub h: u32,
    pub budget: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Guarantee {
    /// Phase-2 diminishing-returns sampling found no violation.
    Reported,
    Conditional,
}

impl Guarantee {
    pub fn as_str(self) -> &'static str {
        match self {
            Guarantee::Reported => "reported",
            Guarantee::Conditional => "conditional",
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct CriticalSets {
    pub crit: BTreeSet<Formula>,
    pub rec: BTreeSet<Formula>,
    pub irr: BTreeSet<Formula>,
    /// Workload queries not derivable from the baseline; they add no critical premises.
    pub skipped: Vec<Formula>,
}

#[derive(Clone, PartialEq, Debug)]
pub struct TwoPhaseAllocation {
    pub sets: CriticalSets,
    pub comp_cost: u64,
    /// `σ(S_comp) ≤ |B_rec|·(log2(m+𝓝) + 1)`.
    pub comp_bound_holds: bool,
    /// Phase-2 choice, as candidate indices.
    pub phase2: Allocation,
    pub selected: Vec<Formula>,
    pub total_cost: u64,
    pub depths: Vec<Depth>,
    pub max_depth: u32,
    pub dr: DrReport,
    pub guarantee: Guarantee,
}

#[derive(Clone, PartialEq, Debug)]
pub enum InfeasibleReason {
    Irrecoverable(Vec<Formula>),
    BudgetShort {
        needed: u64,
        budget: u64,
    },
    SlaUnmet {
        query: Formula,
        depth: Depth,
        h: u32,
    },
}

#[derive(Clone, PartialEq, Debug)]
pub enum TwoPhaseOutcome {
    Feasible(TwoPhaseAllocation),
    Infeasible {
        sets: CriticalSets,
        comp_cost: u64,
        reasons: Vec<InfeasibleReason>,
    },
}

/// Critical, reconstructible and irrecoverable lost premises for a workload.
pub fn critical_sets(
    queries: &[(Formula, f64)],
    baseline: &PremiseBase,
    spec: &NoiseSpec,
    system: &ProofSystem,
) -> Result<CriticalSets> {
    let noisy = apply_noise(baseline, spec)?;
    let reasoner = Reasoner::new(system, &baseline.with(&spec.spurious));
    let c0 = reasoner.closure(baseline);
    let cfg = SearchConfig::default();
    let mut essential = BTreeSet::new();
    let mut skipped = Vec::new();
    for (q, _) in queries {
        if c0.entails(q) {
            essential.extend(ess_plus_in(&c0, q, EssMode::Exact, &cfg)?.atoms);
        } else {
            skipped.push(q.clone());
        }
    }
    let crit: BTreeSet<Formula> = spec.lost.intersection(&essential).cloned().collect();
    let cn = reasoner.closure(&noisy.base);
    let (rec, irr) = crit.iter().cloned().partition(|b| cn.entails(b));
    Ok(CriticalSets {
        crit,
        rec,
        irr,
        skipped,
    })
}

/// Phase 1 restores reconstructible critical premises at index cost; phase 2
/// runs greedy on the remaining budget against the reduction beyond phase 1.
#[allow(clippy::too_many_arguments)]
pub fn two_phase_allocate(
    queries: &[(Formula, f64)],
    baseline: &PremiseBase,
    spec: &NoiseSpec,
    system: &ProofSystem,
    candidates: &CandidateSet,
    sla: SlaConfig,
    seed_size: usize,
    dr_samples: usize,
    seed: u64,
) -> Result<TwoPhaseOutcome> {
    let noisy = apply_noise(baseline, spec)?;
    let sets = critical_sets(queries, baseline, spec, system)?;
    let index_cost = u64::from(field_width((baseline.len() + spec.spurious.len()) as u64)).max(1);
    let comp_cost = index_cost * sets.rec.len() as u64;
    let mut reasons = Vec::new();
    if !sets.irr.is_empty() {
        reasons.push(InfeasibleReason::Irrecoverable(
            sets.irr.iter().cloned().collect(),
        ));
    }
    if comp_cost > sla.budget {
        reasons.push(InfeasibleReason::BudgetShort {
            needed: comp_cost,
            budget: sla.budget,
        });
    }
    let comp_base = noisy.base.with(&sets.rec);
    let reasoner = Reasoner::new(system, &comp_base.with(candidates.items()).with(&spec.lost));
    let after_comp = reasoner.closure(&comp_base);
    if let Some((q, d)) = queries
        .iter()
        .map(|(q, _)| (q, after_comp.depth(q)))
        .find(|(_, d)| *d > Depth::Finite(sla.h))
    {
        reasons.push(InfeasibleReason::SlaUnmet {
            query: q.clone(),
            depth: d,
            h: sla.h,
        });
    }
    if !reasons.is_empty() {
        return Ok(TwoPhaseOutcome::Infeasible {
            sets,
            comp_cost,
            reasons,
        });
    }

    let m = baseline.len();
    let scale = libm::log2((m + spec.size()).max(1) as f64) + 1.0;
    let comp_bound_holds = comp_cost as f64 <= sets.rec.len() as f64 * scale.max(1.0) + 1e-9;

    let mut objective = DepthObjective::with_base(system, &comp_base, queries, candidates.items());
    let remaining = sla.budget - comp_cost;
    let phase2 = greedy_knapsack(candidates.costs(), remaining, &mut objective, seed_size);
    let dr = dr_check(&mut objective, dr_samples, seed);
    let guarantee = if dr.violations == 0 && dr.component_violations == 0 && dr.samples > 0 {
        Guarantee::Reported
    } else {
        Guarantee::Conditional
    };
    let mut selected: Vec<Formula> = sets.rec.iter().cloned().collect();
    selected.extend(phase2.selected.iter().map(|&i| candidates.item(i).clone()));
    let final_base = noisy.base.with(&selected);
    let c = reasoner.closure(&final_base);
    let depths: Vec<Depth> = queries.iter().map(|(q, _)| c.depth(q)).collect();
    let max_depth = depths.iter().copied().max().unwrap_or(Depth::ZERO);
    let Depth::Finite(max_depth) = max_depth else {
        unreachable!("compensated base already met the threshold")
    };
    Ok(TwoPhaseOutcome::Feasible(TwoPhaseAllocation {
        total_cost: comp_cost + phase2.total_cost,
        sets,
        comp_cost,
        comp_bound_holds,
        phase2,
        selected,
        depths,
        max_depth,
        dr,
        guarantee,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::dr_check_exhaustive;
    use crate::kbmodel::parse_kb;
    use proptest::prelude::*;

    fn f(s: &str) -> Formula {
        Formula::parse(s).unwrap()
    }

    fn set(items: &[&str]) -> BTreeSet<Formula> {
        items.iter().map(|s| f(s)).collect()
    }

    fn chain(len: usize) -> (PremiseBase, ProofSystem) {
        let mut text = alloc::string::String::from("p0(a).\n");
        for i in 1..=len {
            text += &alloc::format!("p{i}(X) :- p{}(X).\n", i - 1);
        }
        let kb = parse_kb(&text).unwrap();
        (kb.operational_base(), kb.system)
    }

    #[test]
    fn apply_examples() {
        let base = PremiseBase::new((0..10).map(|i| f(&alloc::format!("a(c{i})"))));
        let n = apply_noise(&base, &NoiseSpec::default()).unwrap();
        assert_eq!((n.m, n.m_tilde), (10, 10));
        assert_eq!(n.base, base);
        let spec = NoiseSpec::new(set(&["a(c1)", "a(c2)"]), set(&["b(c1)"]));
        let n = apply_noise(&base, &spec).unwrap();
        assert_eq!(n.m_tilde, 9);
        assert!(n.m.abs_diff(n.m_tilde) <= spec.size());
        let bad = NoiseSpec::new(set(&["z(c1)"]), BTreeSet::new());
        assert!(matches!(
            apply_noise(&base, &bad),
            Err(Error::LostNotSubset(_))
        ));
        let bad = NoiseSpec::new(BTreeSet::new(), set(&["a(c1)"]));
        assert!(matches!(
            apply_noise(&base, &bad),
            Err(Error::SpuriousInBaseline(_))
        ));
    }

    #[test]
    fn reconstruction_examples() {
        let kb = parse_kb("q(a).\nr(a).\nq(X) :- r(X).").unwrap();
        let base = kb.operational_base();
        let spec = NoiseSpec::new(set(&["q(a)"]), BTreeSet::new());
        assert_eq!(
            reconstruction_depth(&base, &spec, &kb.system).unwrap(),
            Depth::Finite(1)
        );
        assert_eq!(
            reconstruction_depth(&base, &NoiseSpec::default(), &kb.system).unwrap(),
            Depth::ZERO
        );
        let spec = NoiseSpec::new(set(&["r(a)"]), BTreeSet::new());
        assert_eq!(
            reconstruction_depth(&base, &spec, &kb.system).unwrap(),
            Depth::Unreachable
        );
    }

    #[test]
    fn chain_loss_is_tight() {
        // p0 → ... → p6 with p3 also stored; losing p3 costs exactly its own rebuild.
        let (base, system) = chain(6);
        let base = base.with(&[f("p3(a)")]);
        let spec = NoiseSpec::new(set(&["p3(a)"]), BTreeSet::new());
        let r = perturbation_report(&f("p6(a)"), &base, &spec, &system).unwrap();
        assert_eq!(
            (r.n, r.d_rec, r.preserved_depth),
            (Depth::Finite(3), Depth::Finite(3), Depth::Finite(6))
        );
        assert!(r.degrade_tight && r.all_hold());
        assert_eq!(r.relative_inflation, Some(2.0));
    }

    #[test]
    fn perturbation_edge_cases() {
        let (base, system) = chain(4);
        let r = perturbation_report(&f("p4(a)"), &base, &NoiseSpec::default(), &system).unwrap();
        assert_eq!(
            (r.n, r.noisy_depth, r.preserved_depth, r.d_rec),
            (
                Depth::Finite(4),
                Depth::Finite(4),
                Depth::Finite(4),
                Depth::ZERO
            )
        );
        let spec = NoiseSpec::new(BTreeSet::new(), set(&["p4(a)"]));
        let r = perturbation_report(&f("p4(a)"), &base, &spec, &system).unwrap();
        assert_eq!(r.noisy_depth, Depth::ZERO);
        assert_eq!(r.pollution_deflation_holds, Some(true));
        let spec = NoiseSpec::new(set(&["p0(a)"]), BTreeSet::new());
        let r = perturbation_report(&f("p4(a)"), &base, &spec, &system).unwrap();
        assert_eq!(
            (r.noisy_depth, r.d_rec, r.degrade_holds),
            (Depth::Unreachable, Depth::Unreachable, None)
        );
        assert_eq!(r.loss_inflation_holds, Some(true));
    }

    #[test]
    fn conversion_examples() {
        let base = PremiseBase::new((0..13).map(|i| f(&alloc::format!("a(c{i:02})"))));
        let empty = base_conversion_bits(&base, &NoiseSpec::default()).unwrap();
        assert_eq!((empty.bits, empty.header_bits), (2, 2));
        let spec = NoiseSpec::new(set(&["a(c00)", "a(c01)", "a(c02)"]), BTreeSet::new());
        let c = base_conversion_bits(&base, &spec).unwrap();
        // gamma(4) + gamma(1) + 3 × 4
        assert_eq!(c.bits, 5 + 1 + 12);
        assert!(c.bound_holds);
        let mut prev = empty.bits;
        for k in 1..=8 {
            let lost = (0..k).map(|i| f(&alloc::format!("a(c{i:02})"))).collect();
            let c = base_conversion_bits(&base, &NoiseSpec::new(lost, BTreeSet::new())).unwrap();
            assert!(c.bits > prev && c.bound_holds);
            prev = c.bits;
        }
    }

    #[test]
    fn noisy_tradeoff_without_noise_matches_clean() {
        let (base, system) = chain(5);
        let model = CostModel::new(2.0, 1.0).unwrap();
        let t = noisy_tradeoff(
            &f("p5(a)"),
            &base,
            &NoiseSpec::default(),
            &system,
            &model,
            20.0,
        )
        .unwrap();
        assert_eq!(t.noisy_costs, t.clean_costs.unwrap());
        assert_eq!(t.noisy_critical, t.clean_critical.unwrap());
        let direct = crate::tradeoff::description_proxy(&f("p5(a)"), &base, &system).unwrap();
        let clean =
            crate::tradeoff::critical_frequency(direct.bits as f64, 5.0, base.len(), &model);
        assert_eq!(t.clean_critical.unwrap(), clean);
        assert!(t.no_worse.unwrap().holds);
    }

    #[test]
    fn exposure_and_penalty() {
        let kb = parse_kb("r(a).\ns(a).\nt(X) :- r(X), s(X).").unwrap();
        let baseline = kb.operational_base().without(&[f("s(a)")]);
        let spec = NoiseSpec::new(BTreeSet::new(), set(&["s(a)"]));
        let noisy = apply_noise(&baseline, &spec).unwrap();
        let cands = CandidateSet::new([(f("t(a)"), 10)]).unwrap();
        let w = [(f("t(a)"), 1.0)];
        let mut obj = RobustObjective::new(&w, &noisy, &kb.system, &cands, 0.0).unwrap();
        assert_eq!(obj.exposure, alloc::vec![0.5]);
        assert_eq!(obj.value(&[0]), obj.inner.value(&[0]));
        obj.lambda = 0.2;
        assert!((obj.value(&[0]) - (1.0 - 0.2 * 10.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn penalty_preserves_diminishing_returns() {
        let (base, system) = chain(6);
        let spec = NoiseSpec::new(BTreeSet::new(), set(&["p2(a)"]));
        let noisy = apply_noise(&base, &spec).unwrap();
        let cands = CandidateSet::new((3..6).map(|i| (f(&alloc::format!("p{i}(a)")), 2))).unwrap();
        let w = [(f("p6(a)"), 1.0)];
        let mut plain = RobustObjective::new(&w, &noisy, &system, &cands, 0.0).unwrap();
        let mut robust = RobustObjective::new(&w, &noisy, &system, &cands, 0.7).unwrap();
        assert_eq!(dr_check_exhaustive(&mut plain.inner).unwrap().violations, 0);
        assert_eq!(dr_check_exhaustive(&mut robust).unwrap().violations, 0);
    }

    fn sla_instance() -> (KnowledgeBase, NoiseSpec, CandidateSet) {
        // `m(a)` is stored; losing it pushes `goal(a)` from depth 2 to 5.
        let kb = parse_kb(
            "x(a).\nm(a).\nk1(X) :- x(X).\nk2(X) :- k1(X).\nk3(X) :- k2(X).\nm(X) :- k3(X).\n\
             g1(X) :- m(X).\ngoal(X) :- g1(X).",
        )
        .unwrap();
        let spec = NoiseSpec::new(set(&["m(a)"]), BTreeSet::new());
        let cands = CandidateSet::new([(f("k2(a)"), 3), (f("g1(a)"), 3)]).unwrap();
        (kb, spec, cands)
    }

    use crate::kbmodel::KnowledgeBase;

    #[test]
    fn two_phase_restores_the_sla() {
        let (kb, spec, cands) = sla_instance();
        let base = kb.operational_base();
        let w = [(f("goal(a)"), 1.0)];
        let out = two_phase_allocate(
            &w,
            &base,
            &spec,
            &kb.system,
            &cands,
            SlaConfig { h: 2, budget: 20 },
            3,
            200,
            1,
        )
        .unwrap();
        let TwoPhaseOutcome::Feasible(a) = out else {
            panic!("expected feasible: {out:?}")
        };
        assert!(a.selected.contains(&f("m(a)")));
        assert_eq!(a.comp_cost, 1);
        assert!(a.comp_bound_holds && a.total_cost <= 20);
        let noisy = apply_noise(&base, &spec).unwrap();
        let check =
            crate::closure::entails(&noisy.base.with(&a.selected), &kb.system, &f("goal(a)"));
        assert!(check && a.max_depth <= 2);
        // Without compensation the best candidate alone does not reach depth 2.
        let only = noisy.base.with(&[f("k2(a)")]);
        let d = Reasoner::new(&kb.system, &only)
            .closure(&only)
            .depth(&f("goal(a)"));
        assert!(d > Depth::Finite(2));
    }

    #[test]
    fn two_phase_infeasibility() {
        let (kb, spec, cands) = sla_instance();
        let base = kb.operational_base();
        let w = [(f("goal(a)"), 1.0)];
        let out = two_phase_allocate(
            &w,
            &base,
            &spec,
            &kb.system,
            &cands,
            SlaConfig { h: 2, budget: 0 },
            3,
            10,
            1,
        )
        .unwrap();
        let TwoPhaseOutcome::Infeasible {
            reasons, comp_cost, ..
        } = out
        else {
            panic!()
        };
        assert_eq!(comp_cost, 1);
        assert!(reasons.contains(&InfeasibleReason::BudgetShort {
            needed: 1,
            budget: 0
        }));
        let lose_root = NoiseSpec::new(set(&["x(a)", "m(a)"]), BTreeSet::new());
        let out = two_phase_allocate(
            &w,
            &base,
            &lose_root,
            &kb.system,
            &cands,
            SlaConfig { h: 9, budget: 99 },
            3,
            10,
            1,
        )
        .unwrap();
        let TwoPhaseOutcome::Infeasible { reasons, .. } = out else {
            panic!()
        };
        assert!(matches!(reasons[0], InfeasibleReason::Irrecoverable(_)));
    }

    #[test]
    fn no_loss_equals_plain_greedy() {
        let (kb, _, cands) = sla_instance();
        let base = kb.operational_base();
        let w = [(f("goal(a)"), 1.0)];
        let out = two_phase_allocate(
            &w,
            &base,
            &NoiseSpec::default(),
            &kb.system,
            &cands,
            SlaConfig { h: 9, budget: 3 },
            3,
            10,
            1,
        )
        .unwrap();
        let TwoPhaseOutcome::Feasible(a) = out else {
            panic!()
        };
        assert!(a.sets.rec.is_empty() && a.comp_cost == 0);
        let mut obj = DepthObjective::with_base(&kb.system, &base, &w, cands.items());
        assert_eq!(a.phase2, greedy_knapsack(cands.costs(), 3, &mut obj, 3));
    }

    #[test]
    fn generated_specs_respect_rates() {
        let (base, system) = chain(3);
        let base = base.with(&[
            f("p1(b)"),
            f("p2(b)"),
            f("p0(b)"),
            f("p0(c)"),
            f("p1(c)"),
            f("p3(c)"),
        ]);
        let s = NoiseSpec::generate(&base, &system, 0.3, 0.2, 5).unwrap();
        assert_eq!((s.lost.len(), s.spurious.len()), (2, 1));
        assert!(s.validate(&base).is_ok());
        assert_eq!(s, NoiseSpec::generate(&base, &system, 0.3, 0.2, 5).unwrap());
        assert!(NoiseSpec::generate(&base, &system, 1.5, 0.0, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn depth_shift_and_monotonicity(seed in any::<u64>(), loss in 0.0f64..0.5, pollution in 0.0f64..0.5) {
            let kb = parse_kb(
                "e(a,b).\ne(b,c).\ne(c,d).\ne(d,a).\nn(a).\nr(X) :- n(X).\nr(Y) :- r(X), e(X,Y).\ns(X,Y) :- r(X), r(Y).",
            )
            .unwrap();
            let base = kb.operational_base();
            let spec = NoiseSpec::generate(&base, &kb.system, loss, pollution, seed).unwrap();
            for q in ["r(c)", "s(a,d)", "r(b) & n(a)"] {
                let r = perturbation_report(&f(q), &base, &spec, &kb.system).unwrap();
                prop_assert!(r.all_hold(), "{q}: {r:?}");
            }
        }
    }
}
