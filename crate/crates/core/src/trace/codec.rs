//! Self-delimiting trace codec.
//!
//! Layout, MSB first: `gamma(m+1)`, `gamma(n+1)`; per step `i` the rule id in
//! `width(|R'|)` bits followed by one `width(m+i−1)`-bit pointer per premise;
//! finally the output pointer in `width(m+n)` bits. `width(r)` is
//! `⌈log2 r⌉`, and zero when `r ≤ 1`.

use alloc::vec::Vec;

use super::{DerivationTrace, Step};
use crate::bits::{field_width, gamma_len, BitString};
use crate::error::{Error, Result};
use crate::kbmodel::ProofSystem;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TraceEncoding {
    pub bits: BitString,
    pub declared_m: usize,
    pub declared_n: usize,
}

impl TraceEncoding {
    /// Big-endian bytes, zero-padded to a byte boundary.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits.as_bytes().to_vec()
    }
}

/// Closed-form encoded length for a trace with the given per-step arities.
pub fn encoded_len(m: usize, rule_count: usize, arities: impl IntoIterator<Item = usize>) -> usize {
    let rule_w = field_width(rule_count as u64) as usize;
    let mut n = 0usize;
    let mut body = 0usize;
    for (i, a) in arities.into_iter().enumerate() {
        body += rule_w + a * field_width((m + i) as u64) as usize;
        n += 1;
    }
    gamma_len(m as u64 + 1) + gamma_len(n as u64 + 1) + body + field_width((m + n) as u64) as usize
}

/// Header bits: both gamma fields plus the output pointer.
pub fn header_len(m: usize, n: usize) -> usize {
    gamma_len(m as u64 + 1) + gamma_len(n as u64 + 1) + field_width((m + n) as u64) as usize
}

/// `k·n·⌈log2(m+n+1)⌉ + c1·n + header` with `c1 = width(|R'|)`.
pub fn length_bound(m: usize, n: usize, k: usize, rule_count: usize) -> usize {
    let c1 = field_width(rule_count as u64) as usize;
    k * n * field_width((m + n + 1) as u64) as usize + c1 * n + header_len(m, n)
}

pub fn encode_trace(trace: &DerivationTrace, system: &ProofSystem) -> Result<TraceEncoding> {
    trace.check_ranges()?;
    let m = trace.m;
    let n = trace.steps.len();
    let rule_w = field_width(system.rule_count() as u64);
    let mut bits = BitString::new();
    bits.push_gamma(m as u64 + 1);
    bits.push_gamma(n as u64 + 1);
    for (i, s) in trace.steps.iter().enumerate() {
        let step = i + 1;
        let arity = system.arity(s.rule_id).ok_or(Error::UnknownRule {
            step,
            rule: s.rule_id,
        })?;
        if arity != s.premises.len() {
            return Err(Error::RuleInapplicable {
                step,
                rule: s.rule_id,
            });
        }
        bits.push_bits(u64::from(s.rule_id), rule_w);
        let w = field_width((m + i) as u64);
        for &p in &s.premises {
            bits.push_bits(p as u64, w);
        }
    }
    bits.push_bits(trace.output as u64, field_width((m + n) as u64));
    Ok(TraceEncoding {
        bits,
        declared_m: m,
        declared_n: n,
    })
}

/// Inverts [`encode_trace`]. Up to seven trailing zero bits of byte padding are accepted.
pub fn decode_trace(bits: &BitString, system: &ProofSystem) -> Result<DerivationTrace> {
    let mut r = bits.reader();
    let m = r.read_gamma().ok_or(Error::Truncated)? as usize - 1;
    let n = r.read_gamma().ok_or(Error::Truncated)? as usize - 1;
    let rule_w = field_width(system.rule_count() as u64);
    let mut steps = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let step = i + 1;
        let rule_id = r.read_bits(rule_w).ok_or(Error::Truncated)? as u32;
        let arity = system.arity(rule_id).ok_or(Error::UnknownRule {
            step,
            rule: rule_id,
        })?;
        let pool = m + i;
        let w = field_width(pool as u64);
        let mut premises = Vec::with_capacity(arity);
        for _ in 0..arity {
            let p = r.read_bits(w).ok_or(Error::Truncated)? as usize;
            if p >= pool {
                return Err(Error::PointerOutOfRange {
                    step,
                    pointer: p,
                    pool,
                });
            }
            premises.push(p);
        }
        steps.push(Step { rule_id, premises });
    }
    let pool = m + n;
    let output = r
        .read_bits(field_width(pool as u64))
        .ok_or(Error::Truncated)? as usize;
    if output >= pool {
        return Err(Error::PointerOutOfRange {
            step: n + 1,
            pointer: output,
            pool,
        });
    }
    if r.remaining() >= 8 || (0..r.remaining()).any(|_| r.read_bit() == Some(true)) {
        return Err(Error::InvalidParameter(
            "trailing data after trace encoding".into(),
        ));
    }
    Ok(DerivationTrace { m, steps, output })
}

/// Decodes from zero-padded bytes.
pub fn decode_bytes(bytes: &[u8], system: &ProofSystem) -> Result<DerivationTrace> {
    let bits = BitString::from_bytes(bytes, bytes.len() * 8).ok_or(Error::Truncated)?;
    decode_trace(&bits, system)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbmodel::parse_kb;
    use proptest::prelude::*;

    fn conj_only() -> ProofSystem {
        ProofSystem::default()
    }

    #[test]
    fn worked_example_is_fifteen_bits() {
        let t = DerivationTrace {
            m: 4,
            steps: alloc::vec![Step {
                rule_id: 0,
                premises: alloc::vec![0, 1]
            }],
            output: 4,
        };
        let e = encode_trace(&t, &conj_only()).unwrap();
        assert_eq!(e.bits.len(), 15);
        // gamma(5) | gamma(2) | 00 01 | 100
        assert_eq!(e.bits.to_string(), "001010100001100");
        assert_eq!(encoded_len(4, 1, [2]), 15);
        assert_eq!(decode_trace(&e.bits, &conj_only()).unwrap(), t);
        assert_eq!(decode_bytes(&e.to_bytes(), &conj_only()).unwrap(), t);
    }

    #[test]
    fn decode_errors() {
        let t = DerivationTrace {
            m: 4,
            steps: alloc::vec![Step {
                rule_id: 0,
                premises: alloc::vec![0, 1]
            }],
            output: 4,
        };
        let e = encode_trace(&t, &conj_only()).unwrap();
        let cut = BitString::from_bytes(e.bits.as_bytes(), 12).unwrap();
        assert_eq!(decode_trace(&cut, &conj_only()), Err(Error::Truncated));
        // m = 2 with one step: pointer width 1 covers only the pool of size 2,
        // but the output pointer field of width 2 can name 3.
        let mut b = BitString::new();
        b.push_gamma(3);
        b.push_gamma(2);
        b.push_bits(0, 1);
        b.push_bits(1, 1);
        b.push_bits(3, 2);
        assert!(matches!(
            decode_trace(&b, &conj_only()),
            Err(Error::PointerOutOfRange { pointer: 3, .. })
        ));
    }

    #[test]
    fn user_rules_widen_the_rule_field() {
        let kb = parse_kb("q(a).\np(X) :- q(X).\nr(X) :- p(X), q(X).").unwrap();
        let t = DerivationTrace {
            m: 1,
            steps: alloc::vec![
                Step {
                    rule_id: 1,
                    premises: alloc::vec![0]
                },
                Step {
                    rule_id: 2,
                    premises: alloc::vec![1, 0]
                }
            ],
            output: 2,
        };
        let e = encode_trace(&t, &kb.system).unwrap();
        assert_eq!(e.bits.len(), encoded_len(1, 3, [1, 2]));
        assert_eq!(decode_trace(&e.bits, &kb.system).unwrap(), t);
    }

    fn arb_conj_trace() -> impl Strategy<Value = DerivationTrace> {
        (1usize..40, 0usize..30).prop_flat_map(|(m, n)| {
            let steps: Vec<_> = (0..n)
                .map(|i| {
                    (0..m + i, 0..m + i).prop_map(|(a, b)| Step {
                        rule_id: 0,
                        premises: alloc::vec![a, b],
                    })
                })
                .collect();
            (steps, 0..m + n).prop_map(move |(steps, output)| DerivationTrace { m, steps, output })
        })
    }

    proptest! {
        #[test]
        fn roundtrip_and_length(t in arb_conj_trace()) {
            let sys = conj_only();
            let e = encode_trace(&t, &sys).unwrap();
            prop_assert_eq!(e.bits.len(), encoded_len(t.m, 1, t.steps.iter().map(|s| s.premises.len())));
            prop_assert!(e.bits.len() <= length_bound(t.m, t.len(), 2, 1));
            prop_assert_eq!(decode_trace(&e.bits, &sys).unwrap(), t);
        }
    }
}
