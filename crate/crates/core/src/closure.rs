//! Grounding and bottom-up closure.
//!
//! A [`GroundProgram`] holds the rule instances whose bodies are derivable
//! from a seed set of atoms, interned and sorted so that instance ids follow
//! (rule id, ground body) order. [`Reasoner::closure`] evaluates any premise
//! base level by level; the level at which an atom first appears is its
//! stage, and the least instance id completing at that level is its witness.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::kbmodel::{
    AtomTemplate, Binding, Formula, GroundAtom, KnowledgeBase, PremiseBase, ProofSystem,
    RuleInstance, Symbol,
};

pub type AtomId = u32;
pub type InstId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Inst {
    rule_id: u32,
    head: AtomId,
    body: Vec<AtomId>,
    distinct: Vec<AtomId>,
}

/// Interned ground rule instances with head and body indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundProgram {
    atoms: Vec<GroundAtom>,
    instances: Vec<Inst>,
    by_head: Vec<Vec<InstId>>,
    by_body: Vec<Vec<InstId>>,
}

impl GroundProgram {
    /// Grounds exactly the instances whose body atoms lie in the closure of
    /// `seeds` (semi-naive join over derived atoms).
    pub fn relevant<'a>(
        system: &ProofSystem,
        seeds: impl IntoIterator<Item = &'a GroundAtom>,
    ) -> Self {
        // Round in which each atom was first derived; seeds are round 0.
        let mut round: BTreeMap<GroundAtom, u32> =
            seeds.into_iter().map(|a| (a.clone(), 0)).collect();
        let mut by_pred: BTreeMap<(Symbol, usize), Vec<GroundAtom>> = BTreeMap::new();
        let mut instances: BTreeSet<RuleInstance> = BTreeSet::new();
        let mut owned_keys: Vec<GroundAtom> = round.keys().cloned().collect();
        let mut r = 0u32;
        loop {
            by_pred.clear();
            for a in &owned_keys {
                by_pred
                    .entry((a.predicate.clone(), a.arity()))
                    .or_default()
                    .push(a.clone());
            }
            let mut fresh: Vec<RuleInstance> = Vec::new();
            for rule in system.rules() {
                for delta_pos in 0..rule.body.len() {
                    let mut binding = Binding::new();
                    join(
                        &rule.body,
                        0,
                        delta_pos,
                        r,
                        &round,
                        &by_pred,
                        &mut binding,
                        &mut |b| {
                            if let Some(inst) = rule.instantiate(b) {
                                fresh.push(inst);
                            }
                        },
                    );
                }
            }
            r += 1;
            let mut grew = false;
            for inst in fresh {
                if !round.contains_key(&inst.head) {
                    round.insert(inst.head.clone(), r);
                    owned_keys.push(inst.head.clone());
                    grew = true;
                }
                instances.insert(inst);
            }
            if !grew {
                break;
            }
        }
        Self::from_instances(instances, round.into_keys())
    }

    /// Builds a program from explicit instances plus any extra atoms to intern.
    pub fn from_instances(
        instances: impl IntoIterator<Item = RuleInstance>,
        extra_atoms: impl IntoIterator<Item = GroundAtom>,
    ) -> Self {
        let instances: BTreeSet<RuleInstance> = instances.into_iter().collect();
        let mut atoms: BTreeSet<GroundAtom> = extra_atoms.into_iter().collect();
        for i in &instances {
            atoms.insert(i.head.clone());
            atoms.extend(i.body.iter().cloned());
        }
        let atoms: Vec<GroundAtom> = atoms.into_iter().collect();
        let id = |a: &GroundAtom| atoms.binary_search(a).expect("interned") as AtomId;
        let mut insts: Vec<Inst> = instances
            .iter()
            .map(|i| {
                let body: Vec<AtomId> = i.body.iter().map(id).collect();
                let mut distinct = body.clone();
                distinct.sort_unstable();
                distinct.dedup();
                Inst {
                    rule_id: i.rule_id,
                    head: id(&i.head),
                    body,
                    distinct,
                }
            })
            .collect();
        // Atom ids follow canonical order, so this matches (rule id, ground body).
        insts.sort_by(|a, b| (a.rule_id, &a.body, a.head).cmp(&(b.rule_id, &b.body, b.head)));
        let mut by_head = alloc::vec![Vec::new(); atoms.len()];
        let mut by_body = alloc::vec![Vec::new(); atoms.len()];
        for (k, inst) in insts.iter().enumerate() {
            by_head[inst.head as usize].push(k as InstId);
            for &b in &inst.distinct {
                by_body[b as usize].push(k as InstId);
            }
        }
        GroundProgram {
            atoms,
            instances: insts,
            by_head,
            by_body,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn atom_id(&self, a: &GroundAtom) -> Option<AtomId> {
        self.atoms.binary_search(a).ok().map(|i| i as AtomId)
    }

    pub fn atom(&self, id: AtomId) -> &GroundAtom {
        &self.atoms[id as usize]
    }

    pub fn atoms(&self) -> &[GroundAtom] {
        &self.atoms
    }

    pub fn instance(&self, id: InstId) -> RuleInstance {
        let i = &self.instances[id as usize];
        RuleInstance {
            rule_id: i.rule_id,
            head: self.atom(i.head).clone(),
            body: i.body.iter().map(|&b| self.atom(b).clone()).collect(),
        }
    }

    pub fn instance_head(&self, id: InstId) -> AtomId {
        self.instances[id as usize].head
    }

    pub fn instance_body(&self, id: InstId) -> &[AtomId] {
        &self.instances[id as usize].body
    }

    pub fn instance_rule(&self, id: InstId) -> u32 {
        self.instances[id as usize].rule_id
    }

    /// Instances with head `a`, in id order.
    pub fn deriving(&self, a: AtomId) -> &[InstId] {
        &self.by_head[a as usize]
    }

    /// Instances whose body mentions `a`, in id order.
    pub fn using(&self, a: AtomId) -> &[InstId] {
        &self.by_body[a as usize]
    }

    /// Level-by-level closure of `atoms`: stage and witness instance per atom.
    fn stages(&self, seeds: &[AtomId]) -> (Vec<Option<u32>>, Vec<Option<InstId>>) {
        let mut stage = alloc::vec![None; self.atoms.len()];
        let mut via = alloc::vec![None; self.atoms.len()];
        let mut remaining: Vec<u32> = self
            .instances
            .iter()
            .map(|i| i.distinct.len() as u32)
            .collect();
        let mut frontier: Vec<AtomId> = Vec::new();
        for &a in seeds {
            if stage[a as usize].is_none() {
                stage[a as usize] = Some(0);
                frontier.push(a);
            }
        }
        let mut level = 0u32;
        while !frontier.is_empty() {
            let mut fired: Vec<InstId> = Vec::new();
            for &a in &frontier {
                for &k in &self.by_body[a as usize] {
                    remaining[k as usize] -= 1;
                    if remaining[k as usize] == 0 {
                        fired.push(k);
                    }
                }
            }
            fired.sort_unstable();
            level += 1;
            let mut next = Vec::new();
            for k in fired {
                let h = self.instances[k as usize].head as usize;
                if stage[h].is_none() {
                    stage[h] = Some(level);
                    via[h] = Some(k);
                    next.push(h as AtomId);
                }
            }
            frontier = next;
        }
        (stage, via)
    }
}

#[allow(clippy::too_many_arguments)]
fn join(
    body: &[AtomTemplate],
    pos: usize,
    delta_pos: usize,
    round_now: u32,
    round: &BTreeMap<GroundAtom, u32>,
    by_pred: &BTreeMap<(Symbol, usize), Vec<GroundAtom>>,
    binding: &mut Binding,
    emit: &mut dyn FnMut(&Binding),
) {
    let Some(t) = body.get(pos) else {
        emit(binding);
        return;
    };
    let Some(candidates) = by_pred.get(&(t.predicate.clone(), t.terms.len())) else {
        return;
    };
    for a in candidates {
        let r = round[a];
        // Semi-naive split: positions before the delta use old atoms, the
        // delta position uses atoms from the latest round, later ones use any.
        let admissible = match pos.cmp(&delta_pos) {
            core::cmp::Ordering::Less => r < round_now,
            core::cmp::Ordering::Equal => r == round_now,
            core::cmp::Ordering::Greater => true,
        };
        if !admissible {
            continue;
        }
        let saved = binding.clone();
        if t.unify(a, binding) {
            join(
                body,
                pos + 1,
                delta_pos,
                round_now,
                round,
                by_pred,
                binding,
                emit,
            );
        }
        *binding = saved;
    }
}

/// Result of closing a premise base under the user rules.
#[derive(Debug, Clone)]
pub struct ClosureResult {
    program: Arc<GroundProgram>,
    base: PremiseBase,
    stage: Vec<Option<u32>>,
    via: Vec<Option<InstId>>,
}

impl ClosureResult {
    pub fn base(&self) -> &PremiseBase {
        &self.base
    }

    pub fn program(&self) -> &GroundProgram {
        &self.program
    }

    /// First derivation stage of `a`; 0 iff `a` is a base member.
    pub fn stage(&self, a: &GroundAtom) -> Option<u32> {
        match self.program.atom_id(a) {
            Some(id) => self.stage[id as usize],
            None => self.base.contains_atom(a).then_some(0),
        }
    }

    pub fn stage_by_id(&self, id: AtomId) -> Option<u32> {
        self.stage[id as usize]
    }

    /// Derivable atoms in canonical order.
    pub fn derivable_atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.program
            .atoms
            .iter()
            .zip(&self.stage)
            .filter(|(_, s)| s.is_some())
            .map(|(a, _)| a)
    }

    /// The least-id instance completing at `a`'s stage; `None` for base atoms.
    pub fn via(&self, a: &GroundAtom) -> Option<RuleInstance> {
        let id = self.program.atom_id(a)?;
        self.via[id as usize].map(|k| self.program.instance(k))
    }

    pub fn via_by_id(&self, id: AtomId) -> Option<InstId> {
        self.via[id as usize]
    }

    /// `f ∈ Cn(base)`.
    pub fn entails(&self, f: &Formula) -> bool {
        self.depth(f).is_finite()
    }
}

/// Closure engine over a fixed grounding. Bases whose atoms fall outside the
/// grounding's closure are handled by regrounding on demand.
#[derive(Debug, Clone)]
pub struct Reasoner {
    system: ProofSystem,
    program: Arc<GroundProgram>,
}

impl Reasoner {
    /// Grounds relative to the atoms of `seeds`.
    pub fn new(system: &ProofSystem, seeds: &PremiseBase) -> Self {
        Reasoner {
            system: system.clone(),
            program: Arc::new(GroundProgram::relevant(system, seeds.atoms())),
        }
    }

    pub fn for_kb(kb: &KnowledgeBase) -> Self {
        Self::new(&kb.system, &kb.operational_base())
    }

    /// Uses a caller-supplied grounding, such as the full Herbrand one.
    pub fn with_program(system: &ProofSystem, program: GroundProgram) -> Self {
        Reasoner {
            system: system.clone(),
            program: Arc::new(program),
        }
    }

    pub fn system(&self) -> &ProofSystem {
        &self.system
    }

    pub fn program(&self) -> &GroundProgram {
        &self.program
    }

    /// Whether the grounding is complete for `base`.
    pub fn covers(&self, base: &PremiseBase) -> bool {
        base.atoms().all(|a| self.program.atom_id(a).is_some())
    }

    /// A reasoner whose grounding also covers `base`.
    pub fn extended(&self, base: &PremiseBase) -> Reasoner {
        if self.covers(base) {
            return self.clone();
        }
        let seeds: BTreeSet<&GroundAtom> = self.program.atoms.iter().chain(base.atoms()).collect();
        Reasoner {
            system: self.system.clone(),
            program: Arc::new(GroundProgram::relevant(&self.system, seeds)),
        }
    }

    pub fn closure(&self, base: &PremiseBase) -> ClosureResult {
        let program = if self.covers(base) {
            self.program.clone()
        } else {
            self.extended(base).program
        };
        let seeds: Vec<AtomId> = base.atoms().filter_map(|a| program.atom_id(a)).collect();
        let (stage, via) = program.stages(&seeds);
        ClosureResult {
            program,
            base: base.clone(),
            stage,
            via,
        }
    }

    pub fn entails(&self, base: &PremiseBase, f: &Formula) -> bool {
        self.closure(base).entails(f)
    }

    /// Canonical irredundant core of `s_o`: scan in canonical order and drop
    /// each member derivable from the remaining ones.
    pub fn atom_core(&self, s_o: &PremiseBase) -> (PremiseBase, BTreeSet<Formula>) {
        let mut current: BTreeSet<Formula> = s_o.iter().cloned().collect();
        let mut shortcuts = BTreeSet::new();
        for s in s_o {
            current.remove(s);
            let rest = PremiseBase::new(current.iter().cloned());
            if self.entails(&rest, s) {
                shortcuts.insert(s.clone());
            } else {
                current.insert(s.clone());
            }
        }
        (PremiseBase::new(current), shortcuts)
    }
}

/// `f ∈ Cn(base)` under `system`.
pub fn entails(base: &PremiseBase, system: &ProofSystem, f: &Formula) -> bool {
    Reasoner::new(system, base).entails(base, f)
}

/// `(Atom(S_O), S_O \ Atom(S_O))`.
pub fn atom_core(kb: &KnowledgeBase) -> (PremiseBase, BTreeSet<Formula>) {
    Reasoner::for_kb(kb).atom_core(&kb.operational_base())
}
