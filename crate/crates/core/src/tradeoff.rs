//! Storage/computation tradeoff.
//!
//! Description lengths are computable proxies: the shortest of a base
//! pointer, an encoded shortest-found trace, and the raw canonical encoding
//! behind a short preamble. They are upper-bound surrogates, never the
//! algorithmic complexity itself.

use alloc::vec::Vec;

use crate::bits::BitString;
use crate::closure::{ClosureResult, Reasoner};
use crate::error::{Error, Result};
use crate::kbmodel::{
    canonical_encode, Formula, KnowledgeBase, PremiseBase, ProofSystem, Vocabulary,
};
use crate::trace::codec::encode_trace;
use crate::trace::search::{ess_plus_in, min_trace_length_in, EssMode, SearchConfig};

/// Bits that tag a raw-formula description so it is distinguishable from a trace.
pub const RAW_PREAMBLE_BITS: usize = 2;

/// Price of storage relative to computation and the per-access lookup cost.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CostModel {
    pub rho: f64,
    pub c_hit: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            rho: 1.0,
            c_hit: 1.0,
        }
    }
}

impl CostModel {
    pub fn new(rho: f64, c_hit: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter("rho must be positive".into()));
        }
        if !(c_hit >= 0.0 && c_hit.is_finite()) {
            return Err(Error::InvalidParameter("c_hit must be nonnegative".into()));
        }
        Ok(CostModel { rho, c_hit })
    }
}

/// Query distribution over a horizon of `horizon` accesses.
#[derive(Clone, PartialEq, Debug)]
pub struct Workload {
    pub entries: Vec<(Formula, f64)>,
    pub horizon: u64,
}

impl Workload {
    pub fn new(entries: Vec<(Formula, f64)>, horizon: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("workload is empty".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        if entries.iter().any(|(_, p)| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidParameter(
                "probabilities must be positive".into(),
            ));
        }
        let total: f64 = entries.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(alloc::format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Workload { entries, horizon })
    }

    /// Expected access count `N·p`.
    pub fn frequency(&self, i: usize) -> f64 {
        self.horizon as f64 * self.entries[i].1
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProxySource {
    Pointer,
    Trace,
    Raw,
}

impl ProxySource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProxySource::Pointer => "pointer",
            ProxySource::Trace => "trace",
            ProxySource::Raw => "raw",
        }
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct DescriptionProxy {
    pub bits: usize,
    pub source: ProxySource,
    pub trace_bits: usize,
    pub raw_bits: usize,
    /// Length of the encoded trace; `N(q|B)` when `trace_exact`.
    pub trace_len: usize,
    pub trace_exact: bool,
}

/// Proxy description length of `q` relative to the base of `c`.
pub fn description_proxy_in(
    c: &ClosureResult,
    system: &ProofSystem,
    q: &Formula,
    cfg: &SearchConfig,
) -> Result<DescriptionProxy> {
    let base = c.base();
    let shortest = min_trace_length_in(c, q, cfg)?;
    let trace_bits = encode_trace(&shortest.witness, system)?.bits.len();
    let vocab = Vocabulary::of_formulas(base.iter().chain(core::iter::once(q)));
    let raw_bits = canonical_encode(q, &vocab)?.len() + RAW_PREAMBLE_BITS;
    let (bits, source) = if raw_bits < trace_bits {
        (raw_bits, ProxySource::Raw)
    } else if shortest.n == 0 {
        (trace_bits, ProxySource::Pointer)
    } else {
        (trace_bits, ProxySource::Trace)
    };
    Ok(DescriptionProxy {
        bits,
        source,
        trace_bits,
        raw_bits,
        trace_len: shortest.n,
        trace_exact: shortest.exact,
    })
}

pub fn description_proxy(
    q: &Formula,
    base: &PremiseBase,
    system: &ProofSystem,
) -> Result<DescriptionProxy> {
    description_proxy_in(
        &Reasoner::new(system, base).closure(base),
        system,
        q,
        &SearchConfig::default(),
    )
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Winner {
    Cache,
    Derive,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::Cache => "cache",
            Winner::Derive => "derive",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct AmortizedCosts {
    pub cost_cache: f64,
    pub cost_derive: f64,
    pub winner: Winner,
}

/// Per-access cost of caching (storage and one population spread over `f`
/// accesses, plus lookups) against deriving every time. Ties go to deriving.
pub fn amortized_costs(
    proxy_bits: f64,
    depth: f64,
    frequency: f64,
    model: &CostModel,
) -> Result<AmortizedCosts> {
    if frequency.is_nan() || frequency <= 0.0 {
        return Err(Error::InvalidParameter("frequency must be positive".into()));
    }
    let cost_cache = model.rho * proxy_bits / frequency + depth / frequency + model.c_hit;
    let cost_derive = depth;
    let winner = if cost_cache < cost_derive {
        Winner::Cache
    } else {
        Winner::Derive
    };
    Ok(AmortizedCosts {
        cost_cache,
        cost_derive,
        winner,
    })
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct CriticalFrequency {
    /// Frequency at which both costs are equal; `None` when caching never wins.
    pub f_star: Option<f64>,
    /// `ρ·log2(m+d)`.
    pub theory_scale: f64,
    pub ratio: Option<f64>,
}

/// Solves `cost_cache(f) = d` for `f`.
pub fn critical_frequency(
    proxy_bits: f64,
    depth: f64,
    m: usize,
    model: &CostModel,
) -> CriticalFrequency {
    let f_star =
        (depth > model.c_hit).then(|| (model.rho * proxy_bits + depth) / (depth - model.c_hit));
    let theory_scale = model.rho * libm::log2(m as f64 + depth);
    let ratio = f_star
        .filter(|_| theory_scale > 0.0)
        .map(|f| f / theory_scale);
    CriticalFrequency {
        f_star,
        theory_scale,
        ratio,
    }
}

/// Independent crossover by bisection on the sign of `cost_cache − cost_derive`.
pub fn critical_frequency_bisect(
    proxy_bits: f64,
    depth: f64,
    model: &CostModel,
    tol: f64,
) -> Option<f64> {
    let gap = |f: f64| model.rho * proxy_bits / f + depth / f + model.c_hit - depth;
    let mut lo = 1e-9;
    let mut hi = 1.0;
    if gap(lo) <= 0.0 {
        return Some(lo);
    }
    while gap(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Frequencies below `f_lo` favour deriving and above `f_hi` caching, for
/// band constants `c_lo ≤ c_hi` measured on a suite.
pub fn fc_window(c_lo: f64, c_hi: f64, m: usize, depth: f64, model: &CostModel) -> (f64, f64) {
    let scale = model.rho * libm::log2(m as f64 + depth);
    (c_lo * scale, c_hi * scale)
}

/// Entropy-style report fields in nats: depth·ln 2 and proxy·ln 2.
pub fn entropy_fields(depth: u32, proxy_bits: usize) -> (f64, f64) {
    (
        depth as f64 * core::f64::consts::LN_2,
        proxy_bits as f64 * core::f64::consts::LN_2,
    )
}

#[derive(Clone, PartialEq, Debug)]
pub struct ShannonCheck {
    pub entropy: f64,
    pub expected_len: f64,
    pub gap: f64,
    pub lengths: Vec<u32>,
    pub codewords: Vec<BitString>,
    pub kraft_sum: f64,
}

/// Shannon-Fano code with lengths `⌈−log2 p⌉`, assigned canonically.
pub fn coding_entropy_check(probabilities: &[f64]) -> Result<ShannonCheck> {
    if probabilities.is_empty() || probabilities.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::InvalidParameter(
            "probabilities must lie in (0, 1]".into(),
        ));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "probabilities must sum to 1".into(),
        ));
    }
    // The epsilon keeps exact powers of two from rounding up.
    let lengths: Vec<u32> = probabilities
        .iter()
        .map(|&p| libm::ceil(-libm::log2(p) - 1e-12).max(0.0) as u32)
        .collect();
    let kraft_sum: f64 = lengths.iter().map(|&l| libm::exp2(-(l as f64))).sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut codewords = alloc::vec![BitString::new(); lengths.len()];
    let mut code: u128 = 0;
    let mut prev_len = 0u32;
    for (k, &i) in order.iter().enumerate() {
        let l = lengths[i];
        if k > 0 {
            code = (code + 1) << (l - prev_len);
        }
        let mut w = BitString::new();
        for b in (0..l).rev() {
            w.push((code >> b) & 1 == 1);
        }
        codewords[i] = w;
        prev_len = l;
    }
    let entropy: f64 = probabilities.iter().map(|&p| -p * libm::log2(p)).sum();
    let expected_len: f64 = probabilities
        .iter()
        .zip(&lengths)
        .map(|(&p, &l)| p * l as f64)
        .sum();
    Ok(ShannonCheck {
        entropy,
        expected_len,
        gap: expected_len - entropy,
        lengths,
        codewords,
        kraft_sum,
    })
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct LocalityReport {
    pub a_size: f64,
    pub m_eff: f64,
    pub n: f64,
    pub l_full: f64,
    pub l_eff: f64,
    pub improvement: f64,
    pub lambda: f64,
    /// Whether `m_eff` came from an exact essential-set enumeration.
    pub exact: bool,
}

/// Locality factors from `(|A|, m_eff, n)`.
pub fn locality_symbolic(a_size: f64, m_eff: f64, n: f64) -> LocalityReport {
    let l_full = libm::log2(a_size + n);
    let l_eff = libm::log2(m_eff + n);
    LocalityReport {
        a_size,
        m_eff,
        n,
        l_full,
        l_eff,
        improvement: l_full / l_eff,
        lambda: if a_size > 0.0 { m_eff / a_size } else { 0.0 },
        exact: true,
    }
}

/// Locality factors of `q` against the atom core of `kb`.
pub fn locality_report(kb: &KnowledgeBase, q: &Formula) -> Result<LocalityReport> {
    let reasoner = Reasoner::for_kb(kb);
    let (core, _) = reasoner.atom_core(&kb.operational_base());
    let c = reasoner.closure(&core);
    let n = c.depth(q).finite().ok_or(Error::UnreachableQuery)?;
    let ess = ess_plus_in(&c, q, EssMode::Exact, &SearchConfig::default())?;
    let mut r = locality_symbolic(core.len() as f64, ess.m_eff as f64, n as f64);
    r.exact = ess.exact;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbmodel::parse_kb;
    use crate::trace::census::{tightness_base, tightness_query};

    #[test]
    fn amortized_examples() {
        let model = CostModel::new(4.0, 1.0).unwrap();
        let a = amortized_costs(120.0, 10.0, 100.0, &model).unwrap();
        assert!((a.cost_cache - 5.9).abs() < 1e-12);
        assert_eq!(a.winner, Winner::Cache);
        let a = amortized_costs(120.0, 10.0, 10.0, &model).unwrap();
        assert!((a.cost_cache - 50.0).abs() < 1e-12);
        assert_eq!(a.winner, Winner::Derive);
        let a = amortized_costs(120.0, 10.0, 1e9, &model).unwrap();
        assert!((a.cost_cache - 1.0).abs() < 1e-6);
        // Exact tie goes to deriving.
        let a = amortized_costs(0.0, 2.0, 2.0, &CostModel::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(a.winner, Winner::Derive);
    }

    #[test]
    fn critical_frequency_examples() {
        let model = CostModel::new(4.0, 1.0).unwrap();
        let c = critical_frequency(120.0, 10.0, 16, &model);
        assert!((c.f_star.unwrap() - 490.0 / 9.0).abs() < 1e-12);
        let b = critical_frequency_bisect(120.0, 10.0, &model, 1e-12).unwrap();
        assert!((b - 490.0 / 9.0).abs() < 1e-6);
        assert_eq!(critical_frequency(120.0, 0.0, 16, &model).f_star, None);
        assert_eq!(critical_frequency_bisect(120.0, 0.0, &model, 1e-9), None);
    }

    #[test]
    fn cache_cost_is_strictly_decreasing() {
        let model = CostModel::new(2.0, 1.0).unwrap();
        let f_star = critical_frequency(50.0, 6.0, 10, &model).f_star.unwrap();
        let mut prev = f64::INFINITY;
        let mut sign_changes = 0;
        let mut last_winner = None;
        for k in 1..400 {
            let f = k as f64 * 0.5;
            let a = amortized_costs(50.0, 6.0, f, &model).unwrap();
            assert!(a.cost_cache < prev);
            prev = a.cost_cache;
            if last_winner.is_some_and(|w| w != a.winner) {
                sign_changes += 1;
                assert!((f - f_star).abs() <= 0.5);
            }
            last_winner = Some(a.winner);
        }
        assert_eq!(sign_changes, 1);
    }

    #[test]
    fn shannon_examples() {
        let c = coding_entropy_check(&[0.125; 8]).unwrap();
        assert!((c.entropy - 3.0).abs() < 1e-12 && (c.expected_len - 3.0).abs() < 1e-12);
        let c = coding_entropy_check(&[1.0]).unwrap();
        assert_eq!(c.entropy, 0.0);
        assert!(c.expected_len <= 1.0);
        let c = coding_entropy_check(&[0.5, 0.25, 0.25]).unwrap();
        assert_eq!(c.lengths, alloc::vec![1, 2, 2]);
        assert!((c.expected_len - 1.5).abs() < 1e-12);
        assert_eq!(c.codewords[0].to_string(), "0");
        assert_eq!(c.codewords[1].to_string(), "10");
        assert_eq!(c.codewords[2].to_string(), "11");
    }

    #[test]
    fn locality_symbolic_example() {
        let r = locality_symbolic(1e6, 1e3, 100.0);
        assert!((r.l_full - 19.93).abs() < 0.05);
        assert!((r.l_eff - 10.10).abs() < 0.05);
        assert!((r.improvement - 1.97).abs() < 0.02);
        let r = locality_symbolic(500.0, 500.0, 7.0);
        assert_eq!(r.lambda, 1.0);
        assert!((r.improvement - 1.0).abs() < 1e-12);
    }

    #[test]
    fn locality_on_a_kb() {
        let kb = parse_kb("a(1).\na(2).\na(3).\na(4).\nb(X) :- a(X).").unwrap();
        let q = Formula::parse("b(1) & a(2)").unwrap();
        let r = locality_report(&kb, &q).unwrap();
        assert_eq!((r.a_size, r.m_eff, r.n), (4.0, 2.0, 2.0));
        assert!((r.l_eff - 2.0).abs() < 1e-12);
        assert!(r.exact);
    }

    #[test]
    fn proxy_branches() {
        let kb = parse_kb("q(a).\nq(b).\nq(c).\np(X) :- q(X).").unwrap();
        let base = kb.operational_base();
        let p = description_proxy(&Formula::parse("q(b)").unwrap(), &base, &kb.system).unwrap();
        assert_eq!(p.source, ProxySource::Pointer);
        // gamma(4) + gamma(1) + width(3)
        assert_eq!(p.bits, 5 + 1 + 2);
        let p = description_proxy(&Formula::parse("p(a)").unwrap(), &base, &kb.system).unwrap();
        assert!(p.bits <= p.raw_bits && p.bits <= p.trace_bits);
        assert!(description_proxy(&Formula::parse("z(a)").unwrap(), &base, &kb.system).is_err());
    }

    #[test]
    fn proxy_grows_with_m_along_the_family() {
        let mut prev = 0;
        for m in [16usize, 64, 256, 1024] {
            let base = tightness_base(m);
            // High indices: raw encodings of low-rank constants are short at any m.
            let idx: Vec<usize> = (m - 5..m).collect();
            let q = tightness_query(m, &idx);
            let p = description_proxy(&q, &base, &ProofSystem::default()).unwrap();
            assert!(p.bits > prev, "m = {m}: {} <= {prev}", p.bits);
            prev = p.bits;
        }
    }
}
