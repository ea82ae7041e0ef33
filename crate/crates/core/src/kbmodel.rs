//! Knowledge-base model: symbols, ground atoms, left-associated conjunctions,
//! range-restricted rules, the text grammar, and the canonical encoding.
//!
//! The derived orders on [`GroundAtom`] and [`Formula`] coincide with the
//! lexicographic order of [`canonical_encode`] under any vocabulary that
//! contains their symbols, so sorted containers iterate in canonical order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};

use crate::bits::BitString;
use crate::error::{Error, ParseError, Result};

/// Default cap on rule body length.
pub const DEFAULT_K_MAX: usize = 8;

/// Interned identifier. Ordered by its text.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(s: &str) -> Self {
        Symbol(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

/// A predicate applied to constants. Ordered by (predicate, arity, args).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroundAtom {
    pub predicate: Symbol,
    pub args: Vec<Symbol>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<Symbol>, args: impl IntoIterator<Item = Symbol>) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.into_iter().collect(),
        }
    }

    /// Parses `p(a,b)` or `p`.
    pub fn parse(text: &str) -> Result<Self> {
        let f = parse_formula(text)?;
        if f.len() != 1 {
            return Err(ParseError {
                line: 1,
                column: 1,
                message: "expected a single atom".into(),
            }
            .into());
        }
        Ok(f.into_conjuncts().remove(0))
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl Ord for GroundAtom {
    fn cmp(&self, other: &Self) -> Ordering {
        self.predicate
            .cmp(&other.predicate)
            .then(self.args.len().cmp(&other.args.len()))
            .then_with(|| self.args.cmp(&other.args))
    }
}

impl PartialOrd for GroundAtom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Debug for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Left-associated conjunction `((a1 ∧ a2) ∧ …) ∧ at` with `t ≥ 1`.
/// Ordered by conjunct count, then conjuncts lexicographically.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Formula {
    conjuncts: Vec<GroundAtom>,
}

impl Formula {
    /// Returns `None` for an empty conjunct list.
    pub fn new(conjuncts: Vec<GroundAtom>) -> Option<Self> {
        (!conjuncts.is_empty()).then_some(Formula { conjuncts })
    }

    pub fn atom(a: GroundAtom) -> Self {
        Formula {
            conjuncts: alloc::vec![a],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_formula(text)
    }

    /// Conjunct count `t`.
    pub fn len(&self) -> usize {
        self.conjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_atom(&self) -> bool {
        self.conjuncts.len() == 1
    }

    pub fn as_atom(&self) -> Option<&GroundAtom> {
        self.is_atom().then(|| &self.conjuncts[0])
    }

    pub fn conjuncts(&self) -> &[GroundAtom] {
        &self.conjuncts
    }

    pub fn into_conjuncts(self) -> Vec<GroundAtom> {
        self.conjuncts
    }

    /// For `t ≥ 2`, the immediate parts `(prefix, last)` of the outermost `∧`.
    pub fn split_last(&self) -> Option<(Formula, GroundAtom)> {
        if self.conjuncts.len() < 2 {
            return None;
        }
        let (last, prefix) = self.conjuncts.split_last()?;
        Some((
            Formula {
                conjuncts: prefix.to_vec(),
            },
            last.clone(),
        ))
    }

    /// The prefix of the first `t` conjuncts, `1 ≤ t ≤ len`.
    pub fn prefix(&self, t: usize) -> Formula {
        Formula {
            conjuncts: self.conjuncts[..t].to_vec(),
        }
    }

    /// `self ∧ a`.
    pub fn conj(&self, a: &GroundAtom) -> Formula {
        let mut conjuncts = self.conjuncts.clone();
        conjuncts.push(a.clone());
        Formula { conjuncts }
    }

    fn cmp_atom(&self, a: &GroundAtom) -> Ordering {
        self.conjuncts
            .len()
            .cmp(&1)
            .then_with(|| self.conjuncts[0].cmp(a))
    }
}

impl Ord for Formula {
    fn cmp(&self, other: &Self) -> Ordering {
        self.conjuncts
            .len()
            .cmp(&other.conjuncts.len())
            .then_with(|| self.conjuncts.cmp(&other.conjuncts))
    }
}

impl PartialOrd for Formula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<GroundAtom> for Formula {
    fn from(a: GroundAtom) -> Self {
        Formula::atom(a)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Argument position of a rule atom.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Const(Symbol),
    Var(Symbol),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(s) | Term::Var(s) => write!(f, "{s}"),
        }
    }
}

/// Predicate applied to terms.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AtomTemplate {
    pub predicate: Symbol,
    pub terms: Vec<Term>,
}

pub type Binding = BTreeMap<Symbol, Symbol>;

impl AtomTemplate {
    pub fn is_ground(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, Term::Const(_)))
    }

    pub fn variables(&self) -> impl Iterator<Item = &Symbol> {
        self.terms.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
    }

    /// Extends `binding` so that the template equals `atom`; restores it on failure.
    pub fn unify(&self, atom: &GroundAtom, binding: &mut Binding) -> bool {
        if self.predicate != atom.predicate || self.terms.len() != atom.args.len() {
            return false;
        }
        let mut added: Vec<Symbol> = Vec::new();
        for (t, c) in self.terms.iter().zip(&atom.args) {
            let ok = match t {
                Term::Const(k) => k == c,
                Term::Var(v) => match binding.get(v) {
                    Some(bound) => bound == c,
                    None => {
                        binding.insert(v.clone(), c.clone());
                        added.push(v.clone());
                        true
                    }
                },
            };
            if !ok {
                for v in &added {
                    binding.remove(v);
                }
                return false;
            }
        }
        true
    }

    /// Substitutes `binding`; `None` if a variable is unbound.
    pub fn ground(&self, binding: &Binding) -> Option<GroundAtom> {
        let args = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(v) => binding.get(v).cloned(),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(GroundAtom {
            predicate: self.predicate.clone(),
            args,
        })
    }
}

impl fmt::Display for AtomTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.terms.is_empty() {
            f.write_str("(")?;
            for (i, t) in self.terms.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// A range-restricted Horn rule `head :- body`. Ids start at 1; id 0 is
/// reserved for conjunction introduction.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Rule {
    pub id: u32,
    pub head: AtomTemplate,
    pub body: Vec<AtomTemplate>,
}

impl Rule {
    /// Distinct variables in first-occurrence order over the body.
    pub fn variables(&self) -> Vec<Symbol> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.body.iter().flat_map(|b| b.variables()) {
            if seen.insert(v.clone()) {
                out.push(v.clone());
            }
        }
        out
    }

    pub fn instantiate(&self, binding: &Binding) -> Option<RuleInstance> {
        Some(RuleInstance {
            rule_id: self.id,
            head: self.head.ground(binding)?,
            body: self
                .body
                .iter()
                .map(|b| b.ground(binding))
                .collect::<Option<Vec<_>>>()?,
        })
    }

    /// Matches ground premises against the body under one substitution.
    pub fn apply(&self, premises: &[&GroundAtom]) -> Option<GroundAtom> {
        if premises.len() != self.body.len() {
            return None;
        }
        let mut binding = Binding::new();
        for (t, a) in self.body.iter().zip(premises) {
            if !t.unify(a, &mut binding) {
                return None;
            }
        }
        self.head.ground(&binding)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, b) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{b}")?;
        }
        f.write_str(".")
    }
}

/// Ground instance of a user rule. Ordered by (rule id, body, head).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct RuleInstance {
    pub rule_id: u32,
    pub head: GroundAtom,
    pub body: Vec<GroundAtom>,
}

impl Ord for RuleInstance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rule_id
            .cmp(&other.rule_id)
            .then_with(|| self.body.cmp(&other.body))
            .then_with(|| self.head.cmp(&other.head))
    }
}

impl PartialOrd for RuleInstance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// User rules plus the built-in binary conjunction introduction (id 0).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ProofSystem {
    rules: Vec<Rule>,
    k_max: usize,
}

/// Rule id of conjunction introduction.
pub const CONJ_INTRO: u32 = 0;

impl Default for ProofSystem {
    fn default() -> Self {
        ProofSystem {
            rules: Vec::new(),
            k_max: DEFAULT_K_MAX,
        }
    }
}

impl ProofSystem {
    /// Validates, deduplicates and sorts `(head, body)` pairs, then numbers them from 1.
    pub fn new(rules: Vec<(AtomTemplate, Vec<AtomTemplate>)>, k_max: usize) -> Result<Self> {
        for (head, body) in &rules {
            check_rule(head, body, k_max).map_err(|message| ParseError {
                line: 0,
                column: 0,
                message,
            })?;
        }
        let set: BTreeSet<_> = rules.into_iter().collect();
        let rules = set
            .into_iter()
            .enumerate()
            .map(|(i, (head, body))| Rule {
                id: i as u32 + 1,
                head,
                body,
            })
            .collect();
        Ok(ProofSystem { rules, k_max })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: u32) -> Option<&Rule> {
        id.checked_sub(1).and_then(|i| self.rules.get(i as usize))
    }

    /// `|R'|`: user rules plus conjunction introduction.
    pub fn rule_count(&self) -> usize {
        self.rules.len() + 1
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Maximum premise count over all rules, at least 2.
    pub fn k(&self) -> usize {
        self.rules
            .iter()
            .map(|r| r.body.len())
            .max()
            .unwrap_or(0)
            .max(2)
    }

    pub fn arity(&self, id: u32) -> Option<usize> {
        if id == CONJ_INTRO {
            Some(2)
        } else {
            self.rule(id).map(|r| r.body.len())
        }
    }

    /// Constants mentioned in rule templates.
    pub fn constants(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            for t in core::iter::once(&r.head).chain(&r.body) {
                for term in &t.terms {
                    if let Term::Const(c) = term {
                        out.insert(c.clone());
                    }
                }
            }
        }
        out
    }

    pub fn predicates(&self) -> BTreeSet<Symbol> {
        self.rules
            .iter()
            .flat_map(|r| core::iter::once(&r.head).chain(&r.body))
            .map(|t| t.predicate.clone())
            .collect()
    }
}

fn check_rule(
    head: &AtomTemplate,
    body: &[AtomTemplate],
    k_max: usize,
) -> core::result::Result<(), String> {
    if body.is_empty() {
        return Err("rule body is empty".into());
    }
    if body.len() > k_max {
        return Err(format!(
            "rule body has {} atoms, limit is {k_max}",
            body.len()
        ));
    }
    let body_vars: BTreeSet<&Symbol> = body.iter().flat_map(|b| b.variables()).collect();
    if let Some(v) = head.variables().find(|v| !body_vars.contains(v)) {
        return Err(format!("head variable {v} does not occur in the body"));
    }
    Ok(())
}

/// Every substitution instance of every user rule over `constants`, sorted.
pub fn ground_rules(system: &ProofSystem, constants: &BTreeSet<Symbol>) -> Vec<RuleInstance> {
    let consts: Vec<&Symbol> = constants.iter().collect();
    let mut out = Vec::new();
    for rule in system.rules() {
        let vars = rule.variables();
        if !vars.is_empty() && consts.is_empty() {
            continue;
        }
        let mut odometer = alloc::vec![0usize; vars.len()];
        'enumerate: loop {
            let binding: Binding = vars
                .iter()
                .cloned()
                .zip(odometer.iter().map(|&i| consts[i].clone()))
                .collect();
            out.extend(rule.instantiate(&binding));
            let mut pos = vars.len();
            loop {
                if pos == 0 {
                    break 'enumerate;
                }
                pos -= 1;
                odometer[pos] += 1;
                if odometer[pos] < consts.len() {
                    break;
                }
                odometer[pos] = 0;
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Finite premise set iterated in canonical order. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct PremiseBase {
    members: Arc<[Formula]>,
}

impl PremiseBase {
    pub fn new(members: impl IntoIterator<Item = Formula>) -> Self {
        let set: BTreeSet<Formula> = members.into_iter().collect();
        PremiseBase {
            members: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, f: &Formula) -> bool {
        self.members.binary_search(f).is_ok()
    }

    pub fn contains_atom(&self, a: &GroundAtom) -> bool {
        self.members.binary_search_by(|f| f.cmp_atom(a)).is_ok()
    }

    /// Position in canonical order.
    pub fn index_of(&self, f: &Formula) -> Option<usize> {
        self.members.binary_search(f).ok()
    }

    pub fn get(&self, i: usize) -> Option<&Formula> {
        self.members.get(i)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Formula> {
        self.members.iter()
    }

    pub fn as_slice(&self) -> &[Formula] {
        &self.members
    }

    /// Single-atom members.
    pub fn atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.members
            .iter()
            .take_while(|f| f.is_atom())
            .map(|f| &f.conjuncts[0])
    }

    pub fn with<'a>(&self, extra: impl IntoIterator<Item = &'a Formula>) -> Self {
        PremiseBase::new(
            self.members
                .iter()
                .cloned()
                .chain(extra.into_iter().cloned()),
        )
    }

    pub fn without<'a>(&self, removed: impl IntoIterator<Item = &'a Formula>) -> Self {
        let removed: BTreeSet<&Formula> = removed.into_iter().collect();
        PremiseBase::new(
            self.members
                .iter()
                .filter(|f| !removed.contains(f))
                .cloned(),
        )
    }

    pub fn is_subset(&self, other: &PremiseBase) -> bool {
        self.members.iter().all(|f| other.contains(f))
    }

    /// Stable 64-bit identity of the member set.
    pub fn handle(&self) -> u64 {
        let mut h = fnv::FnvHasher::default();
        self.members.len().hash(&mut h);
        for f in self.members.iter() {
            f.hash(&mut h);
        }
        h.finish()
    }
}

impl fmt::Debug for PremiseBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members.iter()).finish()
    }
}

impl<'a> IntoIterator for &'a PremiseBase {
    type Item = &'a Formula;
    type IntoIter = core::slice::Iter<'a, Formula>;
    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

impl FromIterator<Formula> for PremiseBase {
    fn from_iter<I: IntoIterator<Item = Formula>>(iter: I) -> Self {
        PremiseBase::new(iter)
    }
}

/// Facts, stored formulas and rules. `S_O` is facts ∪ stored.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct KnowledgeBase {
    pub facts: BTreeSet<GroundAtom>,
    pub stored: BTreeSet<Formula>,
    pub system: ProofSystem,
    pub constants: BTreeSet<Symbol>,
}

impl KnowledgeBase {
    pub fn new(
        facts: BTreeSet<GroundAtom>,
        stored: BTreeSet<Formula>,
        system: ProofSystem,
    ) -> Self {
        let mut constants = system.constants();
        for a in facts
            .iter()
            .chain(stored.iter().flat_map(|f| f.conjuncts()))
        {
            constants.extend(a.args.iter().cloned());
        }
        KnowledgeBase {
            facts,
            stored,
            system,
            constants,
        }
    }

    /// `S_O` as a premise base.
    pub fn operational_base(&self) -> PremiseBase {
        PremiseBase::new(
            self.facts
                .iter()
                .cloned()
                .map(Formula::atom)
                .chain(self.stored.iter().cloned()),
        )
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut preds = self.system.predicates();
        for a in self
            .facts
            .iter()
            .chain(self.stored.iter().flat_map(|f| f.conjuncts()))
        {
            preds.insert(a.predicate.clone());
        }
        Vocabulary::new(preds, self.constants.iter().cloned())
    }
}

impl fmt::Display for KnowledgeBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.facts {
            writeln!(f, "{a}.")?;
        }
        for r in self.system.rules() {
            writeln!(f, "{r}")?;
        }
        if !self.stored.is_empty() {
            writeln!(f, "%stored")?;
            for s in &self.stored {
                writeln!(f, "{s}.")?;
            }
        }
        Ok(())
    }
}

/// Sorted predicate and constant tables; a symbol's index is its rank.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Vocabulary {
    predicates: Vec<Symbol>,
    constants: Vec<Symbol>,
}

impl Vocabulary {
    pub fn new(
        predicates: impl IntoIterator<Item = Symbol>,
        constants: impl IntoIterator<Item = Symbol>,
    ) -> Self {
        let predicates: BTreeSet<Symbol> = predicates.into_iter().collect();
        let constants: BTreeSet<Symbol> = constants.into_iter().collect();
        Vocabulary {
            predicates: predicates.into_iter().collect(),
            constants: constants.into_iter().collect(),
        }
    }

    pub fn of_formulas<'a>(formulas: impl IntoIterator<Item = &'a Formula>) -> Self {
        let mut preds = BTreeSet::new();
        let mut consts = BTreeSet::new();
        for a in formulas.into_iter().flat_map(|f| f.conjuncts()) {
            preds.insert(a.predicate.clone());
            consts.extend(a.args.iter().cloned());
        }
        Vocabulary::new(preds, consts)
    }

    pub fn merged(&self, other: &Vocabulary) -> Self {
        Vocabulary::new(
            self.predicates.iter().chain(&other.predicates).cloned(),
            self.constants.iter().chain(&other.constants).cloned(),
        )
    }

    pub fn predicates(&self) -> &[Symbol] {
        &self.predicates
    }

    pub fn constants(&self) -> &[Symbol] {
        &self.constants
    }

    fn predicate_rank(&self, s: &Symbol) -> Result<usize> {
        self.predicates
            .binary_search(s)
            .map_err(|_| Error::UnknownSymbol(s.to_string()))
    }

    fn constant_rank(&self, s: &Symbol) -> Result<usize> {
        self.constants
            .binary_search(s)
            .map_err(|_| Error::UnknownSymbol(s.to_string()))
    }
}

/// Canonical bit encoding of `f`: conjunct count, then per atom predicate
/// rank, arity and argument ranks, each in the order-preserving integer code
/// (offset by one). Fails only for symbols outside `vocab`.
pub fn canonical_encode(f: &Formula, vocab: &Vocabulary) -> Result<BitString> {
    let mut bits = BitString::new();
    bits.push_ordered(f.len() as u64);
    for a in f.conjuncts() {
        bits.push_ordered(vocab.predicate_rank(&a.predicate)? as u64 + 1);
        bits.push_ordered(a.arity() as u64 + 1);
        for c in &a.args {
            bits.push_ordered(vocab.constant_rank(c)? as u64 + 1);
        }
    }
    Ok(bits)
}

/// Inverse of [`canonical_encode`]; `None` unless `bits` is exactly one codeword.
pub fn canonical_decode(bits: &BitString, vocab: &Vocabulary) -> Option<Formula> {
    let mut r = bits.reader();
    let t = r.read_ordered()? as usize;
    let mut conjuncts = Vec::with_capacity(t.min(1024));
    for _ in 0..t {
        let p = vocab
            .predicates
            .get(r.read_ordered()? as usize - 1)?
            .clone();
        let arity = r.read_ordered()? as usize - 1;
        let mut args = Vec::with_capacity(arity.min(1024));
        for _ in 0..arity {
            args.push(vocab.constants.get(r.read_ordered()? as usize - 1)?.clone());
        }
        conjuncts.push(GroundAtom { predicate: p, args });
    }
    (r.remaining() == 0).then_some(())?;
    Formula::new(conjuncts)
}

// Parsing

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> core::result::Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn ident(&mut self) -> core::result::Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && (self.text[self.pos].is_ascii_alphanumeric() || self.text[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an identifier"));
        }
        // Safe: the slice holds only ASCII bytes.
        Ok(core::str::from_utf8(&self.text[start..self.pos]).unwrap_or_default())
    }

    fn template(&mut self) -> core::result::Result<AtomTemplate, ParseError> {
        let col = self.pos;
        let name = self.ident()?;
        if !name.as_bytes()[0].is_ascii_lowercase() {
            self.pos = col;
            self.skip_ws();
            return Err(self.err("predicate must start with a lowercase letter"));
        }
        let mut terms = Vec::new();
        if self.eat("(") && !self.eat(")") {
            loop {
                let t = self.ident()?;
                let first = t.as_bytes()[0];
                terms.push(if first.is_ascii_uppercase() || first == b'_' {
                    Term::Var(Symbol::new(t))
                } else {
                    Term::Const(Symbol::new(t))
                });
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(AtomTemplate {
            predicate: Symbol::new(name),
            terms,
        })
    }

    fn ground(&mut self) -> core::result::Result<GroundAtom, ParseError> {
        let start = self.pos;
        let t = self.template()?;
        if !t.is_ground() {
            self.pos = start;
            self.skip_ws();
            return Err(self.err("variables are not allowed in ground formulas"));
        }
        t.ground(&Binding::new())
            .ok_or_else(|| self.err("variables are not allowed in ground formulas"))
    }

    fn conjunction(&mut self) -> core::result::Result<Formula, ParseError> {
        let mut conjuncts = alloc::vec![self.ground()?];
        while self.eat("&") {
            conjuncts.push(self.ground()?);
        }
        Ok(Formula { conjuncts })
    }
}

fn check_ascii(line: &str, line_no: usize) -> core::result::Result<(), ParseError> {
    match line.bytes().position(|b| !b.is_ascii()) {
        Some(i) => Err(ParseError {
            line: line_no,
            column: i + 1,
            message: "non-ASCII character".into(),
        }),
        None => Ok(()),
    }
}

/// Parses a single left-associated conjunction, with optional trailing `.`.
pub fn parse_formula(text: &str) -> Result<Formula> {
    check_ascii(text, 1)?;
    let mut cur = Cursor {
        text: text.as_bytes(),
        pos: 0,
        line: 1,
    };
    let f = cur.conjunction()?;
    cur.eat(".");
    if !cur.at_end() {
        return Err(cur.err("unexpected trailing input").into());
    }
    Ok(f)
}

/// Parses KB text with the default body-length cap.
pub fn parse_kb(text: &str) -> Result<KnowledgeBase> {
    parse_kb_with(text, DEFAULT_K_MAX)
}

/// Parses KB text: one fact or rule per line, then an optional `%stored`
/// section with one conjunction per line. `#` starts a comment.
pub fn parse_kb_with(text: &str, k_max: usize) -> Result<KnowledgeBase> {
    let mut facts = BTreeSet::new();
    let mut stored = BTreeSet::new();
    let mut rules = Vec::new();
    let mut in_stored = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        check_ascii(line, line_no)?;
        if line.trim().is_empty() {
            continue;
        }
        if line.trim() == "%stored" {
            in_stored = true;
            continue;
        }
        let mut cur = Cursor {
            text: line.as_bytes(),
            pos: 0,
            line: line_no,
        };
        if in_stored {
            stored.insert(cur.conjunction()?);
            cur.eat(".");
        } else {
            let head = cur.template()?;
            if cur.eat(":-") {
                let mut body = alloc::vec![cur.template()?];
                while cur.eat(",") {
                    body.push(cur.template()?);
                }
                cur.expect(".")?;
                check_rule(&head, &body, k_max).map_err(|m| ParseError {
                    line: line_no,
                    column: 1,
                    message: m,
                })?;
                rules.push((head, body));
            } else {
                cur.expect(".")?;
                let fact = head.ground(&Binding::new()).ok_or_else(|| ParseError {
                    line: line_no,
                    column: 1,
                    message: "fact contains a variable".into(),
                })?;
                facts.insert(fact);
            }
        }
        if !cur.at_end() {
            return Err(cur.err("unexpected trailing input").into());
        }
    }
    Ok(KnowledgeBase::new(
        facts,
        stored,
        ProofSystem::new(rules, k_max)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atom(s: &str) -> GroundAtom {
        GroundAtom::parse(s).unwrap()
    }

    #[test]
    fn empty_input() {
        let kb = parse_kb("").unwrap();
        assert!(kb.facts.is_empty() && kb.stored.is_empty());
        assert_eq!(kb.system.rule_count(), 1);
        assert!(kb.system.rules().is_empty());
    }

    #[test]
    fn facts_rules_stored() {
        let kb = parse_kb("q(a).\np(X) :- q(X).\n%stored\np(a) & q(a).").unwrap();
        assert_eq!(kb.facts.len(), 1);
        assert_eq!(kb.system.rules().len(), 1);
        assert_eq!(kb.system.rules()[0].id, 1);
        assert_eq!(kb.stored.len(), 1);
        assert_eq!(kb.stored.iter().next().unwrap().len(), 2);
    }

    #[test]
    fn set_semantics() {
        let kb = parse_kb("q(a).\nq(a).").unwrap();
        assert_eq!(kb.facts.len(), 1);
        let kb = parse_kb("p(X) :- q(X).\np(X) :- q(X).").unwrap();
        assert_eq!(kb.system.rules().len(), 1);
    }

    #[test]
    fn comments_nullary_and_digits() {
        let kb = parse_kb("# header\nrain.  # nullary\ne(1,2).\nwet :- rain.\n").unwrap();
        assert_eq!(kb.facts.len(), 2);
        assert!(kb.facts.contains(&atom("rain")));
        assert!(kb.facts.contains(&atom("e(1,2)")));
        assert_eq!(kb.system.rules()[0].to_string(), "wet :- rain.");
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_kb("q(a).\np(X) :- .").unwrap_err();
        assert!(
            matches!(e, Error::Parse(ParseError { line: 2, .. })),
            "{e:?}"
        );
        let e = parse_kb("p(X, Y) :- q(X).").unwrap_err();
        assert!(matches!(e, Error::Parse(ParseError { line: 1, .. })));
        let e = parse_kb("q(X).").unwrap_err();
        assert!(matches!(e, Error::Parse(_)));
        let e = parse_kb("ok(a).\nQ(a).").unwrap_err();
        assert!(
            matches!(
                e,
                Error::Parse(ParseError {
                    line: 2,
                    column: 1,
                    ..
                })
            ),
            "{e:?}"
        );
        let e = parse_kb("q(a) extra.").unwrap_err();
        assert!(matches!(e, Error::Parse(_)));
    }

    #[test]
    fn body_length_cap() {
        let body: Vec<String> = (0..9).map(|i| format!("b{i}(X)")).collect();
        let text = format!("h(X) :- {}.", body.join(", "));
        assert!(parse_kb(&text).is_err());
        assert!(parse_kb_with(&text, 9).is_ok());
    }

    #[test]
    fn grounding_counts() {
        let kb = parse_kb("p(X) :- q(X).\nq(a).\nq(b).").unwrap();
        assert_eq!(ground_rules(&kb.system, &kb.constants).len(), 2);
        let kb = parse_kb("p(a) :- q(b).").unwrap();
        let inst = ground_rules(&kb.system, &kb.constants);
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].head, atom("p(a)"));
        assert_eq!(inst[0].body, alloc::vec![atom("q(b)")]);
        let kb = parse_kb("r(X,Y) :- s(X), t(Y).\ns(a).\ns(b).\nt(c).").unwrap();
        assert_eq!(ground_rules(&kb.system, &kb.constants).len(), 9);
        let kb = parse_kb("p(X) :- q(X).").unwrap();
        assert!(ground_rules(&kb.system, &kb.constants).is_empty());
    }

    #[test]
    fn encoding_is_order_sensitive_and_deterministic() {
        let v = Vocabulary::new(["p".into(), "q".into()], ["a".into(), "b".into()]);
        let f1 = parse_formula("p(a) & q(b)").unwrap();
        let f2 = parse_formula("q(b) & p(a)").unwrap();
        let e1 = canonical_encode(&f1, &v).unwrap();
        assert_eq!(e1, canonical_encode(&f1, &v).unwrap());
        assert_ne!(e1, canonical_encode(&f2, &v).unwrap());
        assert!(matches!(
            canonical_encode(&parse_formula("z(a)").unwrap(), &v),
            Err(Error::UnknownSymbol(_))
        ));
    }

    #[test]
    fn encoding_injective_on_small_vocabulary() {
        let preds = ["p", "q", "r"];
        let consts = ["a", "b", "c"];
        let v = Vocabulary::new(preds.map(Symbol::new), consts.map(Symbol::new));
        let mut atoms = Vec::new();
        for p in preds {
            atoms.push(GroundAtom::new(p, []));
            for c in consts {
                atoms.push(GroundAtom::new(p, [Symbol::new(c)]));
                for d in consts {
                    atoms.push(GroundAtom::new(p, [Symbol::new(c), Symbol::new(d)]));
                }
            }
        }
        let mut formulas: Vec<Formula> = atoms.iter().cloned().map(Formula::atom).collect();
        for a in &atoms {
            for b in &atoms {
                formulas.push(Formula::atom(a.clone()).conj(b));
            }
        }
        let encodings: BTreeSet<BitString> = formulas
            .iter()
            .map(|f| canonical_encode(f, &v).unwrap())
            .collect();
        assert_eq!(encodings.len(), formulas.len());
    }

    #[test]
    fn premise_base_order_ignores_input_order() {
        let a = parse_kb("q(b).\nq(a).\n%stored\np(a) & q(a)\nr(c)").unwrap();
        let b = parse_kb("%stored\nr(c)\np(a) & q(a)").unwrap();
        let b = KnowledgeBase {
            facts: [atom("q(a)"), atom("q(b)")].into_iter().collect(),
            ..b
        };
        assert_eq!(
            a.operational_base().as_slice(),
            b.operational_base().as_slice()
        );
        assert_eq!(a.operational_base().handle(), b.operational_base().handle());
        let base = a.operational_base();
        assert!(base.contains_atom(&atom("r(c)")));
        assert!(!base.contains_atom(&atom("p(a)")));
        assert_eq!(base.atoms().count(), 3);
    }

    fn arb_atom() -> impl Strategy<Value = GroundAtom> {
        ("[a-e]", proptest::collection::vec("[a-e][0-9]?", 0..3))
            .prop_map(|(p, args)| GroundAtom::new(p.as_str(), args.iter().map(|s| Symbol::new(s))))
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        proptest::collection::vec(arb_atom(), 1..4).prop_map(|c| Formula::new(c).unwrap())
    }

    fn arb_template(vars: bool) -> impl Strategy<Value = AtomTemplate> {
        let term = if vars { "[a-cXY]" } else { "[a-c]" };
        ("[p-s]", proptest::collection::vec(term, 0..3)).prop_map(|(p, ts)| AtomTemplate {
            predicate: Symbol::new(&p),
            terms: ts
                .iter()
                .map(|t| {
                    if t.as_bytes()[0].is_ascii_uppercase() {
                        Term::Var(Symbol::new(t))
                    } else {
                        Term::Const(Symbol::new(t))
                    }
                })
                .collect(),
        })
    }

    fn arb_kb() -> impl Strategy<Value = KnowledgeBase> {
        let rule = (
            arb_template(true),
            proptest::collection::vec(arb_template(true), 1..4),
        )
            .prop_filter("range restricted", |(h, b)| {
                check_rule(h, b, DEFAULT_K_MAX).is_ok()
            });
        (
            proptest::collection::btree_set(arb_atom(), 0..6),
            proptest::collection::btree_set(arb_formula(), 0..4),
            proptest::collection::vec(rule, 0..4),
        )
            .prop_map(|(facts, stored, rules)| {
                KnowledgeBase::new(
                    facts,
                    stored,
                    ProofSystem::new(rules, DEFAULT_K_MAX).unwrap(),
                )
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(kb in arb_kb()) {
            let text = kb.to_string();
            let back = parse_kb(&text).unwrap();
            prop_assert_eq!(&back.facts, &kb.facts);
            prop_assert_eq!(&back.stored, &kb.stored);
            prop_assert_eq!(back.system.rules(), kb.system.rules());
            prop_assert_eq!(&back.constants, &kb.constants);
        }

        #[test]
        fn encoding_order_matches_formula_order(a in arb_formula(), b in arb_formula()) {
            let v = Vocabulary::of_formulas([&a, &b]);
            let ea = canonical_encode(&a, &v).unwrap();
            let eb = canonical_encode(&b, &v).unwrap();
            prop_assert_eq!(ea.cmp(&eb), a.cmp(&b));
            prop_assert_eq!(canonical_decode(&ea, &v), Some(a));
        }

        #[test]
        fn shuffled_lines_give_same_base(kb in arb_kb(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let text = kb.to_string();
            let (head, stored) = match text.split_once("%stored\n") {
                Some((h, s)) => (h.to_string(), s.to_string()),
                None => (text.clone(), String::new()),
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut h: Vec<&str> = head.lines().collect();
            let mut s: Vec<&str> = stored.lines().collect();
            h.shuffle(&mut rng);
            s.shuffle(&mut rng);
            let shuffled = format!("{}\n%stored\n{}\n", h.join("\n"), s.join("\n"));
            let back = parse_kb(&shuffled).unwrap();
            prop_assert_eq!(back.operational_base(), kb.operational_base());
            prop_assert_eq!(back.system.rules(), kb.system.rules());
        }
    }
}
