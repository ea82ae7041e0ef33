//! Derivation traces over a growing formula pool.
//!
//! The pool starts as the premise base in canonical order; step `i`
//! (1-based) reads premises from the first `m + i − 1` pool entries and
//! appends its conclusion. The output pointer selects the derived formula.

pub mod census;
pub mod codec;
pub mod search;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kbmodel::{Formula, GroundAtom, PremiseBase, ProofSystem, CONJ_INTRO};

pub use census::{
    richness_census, tightness_base, tightness_suite, RichnessCensus, TightnessReport,
};
pub use codec::{decode_trace, encode_trace, encoded_len, length_bound, TraceEncoding};
pub use search::{ess_plus, min_trace_length, EssMode, EssPlus, SearchConfig, ShortestTraceResult};

/// One rule application: rule id and pool pointers, one per premise.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Step {
    pub rule_id: u32,
    pub premises: Vec<usize>,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct DerivationTrace {
    /// Size of the premise base the pointers refer to.
    pub m: usize,
    pub steps: Vec<Step>,
    pub output: usize,
}

impl DerivationTrace {
    /// Number of steps `|π|`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Pointers outside the pool they may address, as an error.
    pub fn check_ranges(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            let pool = self.m + i;
            if let Some(&p) = s.premises.iter().find(|&&p| p >= pool) {
                return Err(Error::PointerOutOfRange {
                    step: i + 1,
                    pointer: p,
                    pool,
                });
            }
        }
        let pool = self.m + self.steps.len();
        if self.output >= pool {
            return Err(Error::PointerOutOfRange {
                step: self.steps.len() + 1,
                pointer: self.output,
                pool,
            });
        }
        Ok(())
    }

    /// Base premises referenced by any pointer, including a base output pointer.
    pub fn atoms_used(&self, base: &PremiseBase) -> BTreeSet<Formula> {
        self.steps
            .iter()
            .flat_map(|s| s.premises.iter().copied())
            .chain(core::iter::once(self.output))
            .filter(|&p| p < self.m)
            .filter_map(|p| base.get(p).cloned())
            .collect()
    }
}

/// Runs the trace and returns the full final pool.
pub fn replay(
    trace: &DerivationTrace,
    base: &PremiseBase,
    system: &ProofSystem,
) -> Result<Vec<Formula>> {
    if trace.m != base.len() {
        return Err(Error::InvalidParameter(alloc::format!(
            "trace declares m = {} but the base has {} members",
            trace.m,
            base.len()
        )));
    }
    trace.check_ranges()?;
    let mut pool: Vec<Formula> = base.iter().cloned().collect();
    for (i, s) in trace.steps.iter().enumerate() {
        let step = i + 1;
        let arity = system.arity(s.rule_id).ok_or(Error::UnknownRule {
            step,
            rule: s.rule_id,
        })?;
        if s.premises.len() != arity {
            return Err(Error::RuleInapplicable {
                step,
                rule: s.rule_id,
            });
        }
        let out = if s.rule_id == CONJ_INTRO {
            let right = pool[s.premises[1]]
                .as_atom()
                .ok_or(Error::Structural { step })?;
            pool[s.premises[0]].conj(right)
        } else {
            let premises: Vec<&GroundAtom> = s
                .premises
                .iter()
                .map(|&p| pool[p].as_atom())
                .collect::<Option<_>>()
                .ok_or(Error::RuleInapplicable {
                    step,
                    rule: s.rule_id,
                })?;
            let rule = system.rule(s.rule_id).ok_or(Error::UnknownRule {
                step,
                rule: s.rule_id,
            })?;
            Formula::atom(rule.apply(&premises).ok_or(Error::RuleInapplicable {
                step,
                rule: s.rule_id,
            })?)
        };
        pool.push(out);
    }
    Ok(pool)
}

/// Replays the trace and returns the formula under the output pointer.
pub fn replay_validate(
    trace: &DerivationTrace,
    base: &PremiseBase,
    system: &ProofSystem,
) -> Result<Formula> {
    let mut pool = replay(trace, base, system)?;
    Ok(pool.swap_remove(trace.output))
}
