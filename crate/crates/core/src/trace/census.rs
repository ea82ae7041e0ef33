//! BCQ richness census and the tightness instance family.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::search::{min_trace_length_in, SearchConfig};
use crate::closure::Reasoner;
use crate::depth::Depth;
use crate::error::{Error, Result};
use crate::kbmodel::{Formula, GroundAtom, PremiseBase, ProofSystem, Symbol};
use crate::tradeoff::{description_proxy_in, ProxySource};

#[derive(Clone, PartialEq, Debug)]
pub struct RichnessCensus {
    pub m: u64,
    pub n: u64,
    pub delta0: f64,
    /// `m·(m−1)···(m−n)`; `None` if it overflows 128 bits.
    pub count: Option<u128>,
    pub log2_count: f64,
    /// `(1−δ0)·n·log2(m+n)`, the base-2 logarithm of the bound.
    pub log2_bound: f64,
    pub satisfied: bool,
}

impl RichnessCensus {
    pub fn bound(&self) -> f64 {
        libm::exp2(self.log2_bound)
    }
}

/// Counts distinct-conjunct left-associated BCQs of length `n+1` over `m`
/// atoms and compares with `2^((1−δ0)·n·log2(m+n))` in the log domain.
pub fn richness_census(m: u64, n: u64, delta0: f64) -> Result<RichnessCensus> {
    if m < 1 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let (count, log2_count) = if n >= m {
        (Some(0), f64::NEG_INFINITY)
    } else {
        let count = (0..=n).try_fold(1u128, |acc, i| acc.checked_mul(u128::from(m - i)));
        let log2 = (0..=n).map(|i| libm::log2((m - i) as f64)).sum();
        (count, log2)
    };
    let log2_bound = (1.0 - delta0) * n as f64 * libm::log2((m + n) as f64);
    Ok(RichnessCensus {
        m,
        n,
        delta0,
        count,
        log2_count,
        log2_bound,
        satisfied: log2_count >= log2_bound,
    })
}

/// Base of `m` unary facts `a(cNNN)`, zero-padded so canonical order follows the index.
pub fn tightness_base(m: usize) -> PremiseBase {
    let digits = format!("{}", m.saturating_sub(1)).len();
    PremiseBase::new((0..m).map(|i| Formula::atom(tightness_atom(i, digits))))
}

fn tightness_atom(i: usize, digits: usize) -> GroundAtom {
    GroundAtom::new("a", [Symbol::new(&format!("c{i:0digits$}"))])
}

/// Left-associated conjunction of the base atoms at `indices`, in order.
pub fn tightness_query(m: usize, indices: &[usize]) -> Formula {
    let digits = format!("{}", m.saturating_sub(1)).len();
    Formula::new(indices.iter().map(|&i| tightness_atom(i, digits)).collect()).expect("nonempty")
}

/// Exhaustively counts distinct-conjunct BCQs of length `n+1` over the
/// tightness base of size `m` whose shortest trace has exactly `n` steps.
pub fn enumerate_census(m: usize, n: usize) -> Result<u128> {
    let base = tightness_base(m);
    let system = ProofSystem::default();
    let c = Reasoner::new(&system, &base).closure(&base);
    let mut idx = alloc::vec![0usize; n + 1];
    let mut count = 0u128;
    if m == 0 {
        return Ok(0);
    }
    'all: loop {
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == idx.len() {
            let q = tightness_query(m, &idx);
            let r = min_trace_length_in(&c, &q, &SearchConfig::default())?;
            if r.exact && r.n == n {
                count += 1;
            }
        }
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                break 'all;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
        }
    }
    Ok(count)
}

#[derive(Clone, PartialEq, Debug)]
pub struct TightnessSample {
    pub indices: Vec<usize>,
    pub depth: Depth,
    pub trace_len: usize,
    pub proxy_bits: usize,
    pub proxy_source: ProxySource,
    /// `proxy / (n·log2 m)`.
    pub ratio: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct TightnessReport {
    pub m: usize,
    pub n: usize,
    pub samples: Vec<TightnessSample>,
    /// Every sampled query has depth exactly `n`.
    pub depths_match: bool,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

/// Samples `count` queries `q_I` with `|I| = ⌊√m⌋ + 1` over a base of `m` atoms.
pub fn tightness_suite(m: usize, count: usize, seed: u64) -> Result<TightnessReport> {
    if m < 4 {
        return Err(Error::InvalidParameter(
            "tightness family needs m >= 4".into(),
        ));
    }
    let n = libm::floor(libm::sqrt(m as f64)) as usize;
    let base = tightness_base(m);
    let system = ProofSystem::default();
    let c = Reasoner::new(&system, &base).closure(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = n as f64 * libm::log2(m as f64);
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut indices = rand::seq::index::sample(&mut rng, m, n + 1).into_vec();
        indices.sort_unstable();
        let q = tightness_query(m, &indices);
        let depth = c.depth(&q);
        let proxy = description_proxy_in(&c, &system, &q, &SearchConfig::default())?;
        samples.push(TightnessSample {
            indices,
            depth,
            trace_len: proxy.trace_len,
            proxy_bits: proxy.bits,
            proxy_source: proxy.source,
            ratio: proxy.bits as f64 / scale,
        });
    }
    let depths_match = samples.iter().all(|s| s.depth == Depth::Finite(n as u32));
    let ratio_min = samples
        .iter()
        .map(|s| s.ratio)
        .fold(f64::INFINITY, f64::min);
    let ratio_max = samples
        .iter()
        .map(|s| s.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(TightnessReport {
        m,
        n,
        samples,
        depths_match,
        ratio_min,
        ratio_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_counts() {
        assert_eq!(richness_census(5, 2, 0.1).unwrap().count, Some(60));
        assert_eq!(richness_census(9, 0, 0.1).unwrap().count, Some(9));
        let c = richness_census(3, 3, 0.1).unwrap();
        assert_eq!(c.count, Some(0));
        assert!(!c.satisfied);
        assert!(richness_census(9, 0, 0.5).unwrap().satisfied);
        assert_eq!(richness_census(200, 60, 0.1).unwrap().count, None);
    }

    #[test]
    fn census_enumeration_matches() {
        assert_eq!(enumerate_census(5, 2).unwrap(), 60);
        assert_eq!(enumerate_census(6, 2).unwrap(), 120);
    }

    #[test]
    fn tightness_family() {
        let base = tightness_base(16);
        assert_eq!(base.get(0).unwrap().to_string(), "a(c00)");
        assert_eq!(base.get(15).unwrap().to_string(), "a(c15)");
        let r = tightness_suite(16, 10, 7).unwrap();
        assert_eq!(r.n, 4);
        assert!(r.depths_match);
        assert!(r
            .samples
            .iter()
            .all(|s| s.indices.len() == 5 && s.trace_len == 4));
        let r = tightness_suite(4, 3, 1).unwrap();
        assert_eq!(r.n, 2);
        assert!(r.depths_match && !r.samples.is_empty());
        assert!(tightness_suite(3, 1, 0).is_err());
    }
}
