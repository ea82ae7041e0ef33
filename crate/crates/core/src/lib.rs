//! Inference-cost toolkit for ground Horn knowledge bases.
//!
//! The crate is `no_std` (with `alloc`). It covers:
//!
//! - [`kbmodel`]: ground atoms, left-associated conjunctions, rules, the text
//!   grammar, and the canonical bit encoding that fixes every ordering.
//! - [`closure`]: grounding, bottom-up closure, entailment and the canonical
//!   irredundant core of a knowledge base.
//! - [`depth`]: base-relative derivation depth with witnesses.
//! - [`trace`]: pool-replay derivation traces, their bit-exact codec, shortest
//!   trace search, essential premise sets, and the BCQ census/tightness family.
//! - [`tradeoff`]: description-length proxy, amortized cache/derive costs and
//!   critical frequency, Shannon-Fano desk check, locality factors.
//! - [`allocation`]: the expected depth-reduction objective, greedy knapsack
//!   with partial enumeration, brute-force optimum, diminishing-returns
//!   checks and cluster-aware candidate reduction.
//! - [`noise`]: lossy/polluted premise bases and the two-phase allocator.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod allocation;
pub mod bits;
pub mod closure;
pub mod depth;
pub mod error;
pub mod kbmodel;
pub mod noise;
pub mod trace;
pub mod tradeoff;

pub use closure::Reasoner;
pub use depth::Depth;
pub use error::{Error, ParseError};
pub use kbmodel::{
    canonical_encode, parse_formula, parse_kb, Formula, GroundAtom, KnowledgeBase, PremiseBase,
    ProofSystem, Rule, RuleInstance, Symbol, Vocabulary,
};
