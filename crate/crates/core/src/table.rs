//! Abstract interpreter: per-group exact machine-state fragments.
//!
//! Qubits are partitioned into entanglement groups; each group carries either
//! an exact local machine state (amplitudes over the group's qubits plus bit
//! values for the registers that have become correlated with them) or the
//! overflow value ⊤. Registers start in a pool meaning "constant 0" and join
//! a group when a measurement writes into them or a guard reads them.
//!
//! Two capacity limits bound the local states: a group whose state would need
//! more than `max_hybrid_states` weighted branches, or more than
//! `max_amplitudes` nonzero amplitudes in any branch, becomes ⊤. ⊤ absorbs
//! merges; the only escape is `reset`, whose output is known regardless of
//! input, so the reset qubit leaves for a fresh |0⟩ group.
//!
//! Queries over non-⊤ groups feed the rewrite passes; every answer is a fact
//! about the concrete machine state at that program point.

use crate::circuit::{Ctrl, GateKind, Instruction, Polarity};
use crate::linalg::C64;
use crate::sim::{HybridState, MachineState, QuantumState, AMP_EPS, PROB_EPS};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

/// Default cap on nonzero amplitudes per branch.
pub const DEFAULT_MAX_AMPLITUDES: usize = 16;
/// Default cap on weighted branches per group.
pub const DEFAULT_MAX_HYBRID_STATES: usize = 4;
/// Tolerance when comparing phase factors.
pub const PHASE_EPS: f64 = 1e-9;

pub type GroupId = usize;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("uniform-phase query on a non-diagonal gate {0:?}")]
    NotDiagonal(GateKind),
}

/// A control or guard site for satisfiability queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Qubit(usize),
    Register(usize),
}

/// Outcome of an implication query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Implication {
    pub holds: bool,
    /// True when no reachable assignment satisfies the premise.
    pub vacuous: bool,
}

/// Exact local distribution or overflow.
#[derive(Clone, Debug)]
pub enum GroupState {
    Top,
    Known(MachineState),
}

/// One entanglement group: sorted member lists plus the local state. Local
/// qubit `k` is global qubit `qubits[k]`; local register bit `k` is global
/// register `regs[k]`.
#[derive(Clone, Debug)]
pub struct Group {
    pub qubits: Vec<usize>,
    pub regs: Vec<usize>,
    pub state: GroupState,
}

impl Group {
    pub fn is_top(&self) -> bool {
        matches!(self.state, GroupState::Top)
    }

    fn local_qubit(&self, q: usize) -> usize {
        self.qubits.binary_search(&q).expect("qubit not in group")
    }

    fn local_reg(&self, r: usize) -> usize {
        self.regs.binary_search(&r).expect("register not in group")
    }
}

/// What one abstract step did, for trace output.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    /// Distinct groups (or a pooled register) were joined.
    pub merged: bool,
    /// Some touched group overflowed to ⊤ during this step.
    pub became_top: bool,
}

#[derive(Clone, Debug)]
pub struct UnionTable {
    n: usize,
    m: usize,
    max_amplitudes: usize,
    max_hybrid_states: usize,
    qubit_group: Vec<GroupId>,
    reg_group: Vec<Option<GroupId>>,
    groups: BTreeMap<GroupId, Group>,
    next_id: GroupId,
}

impl UnionTable {
    /// Fresh table: singleton |0⟩ groups, all registers pooled at 0.
    pub fn with_limits(n: usize, m: usize, max_amplitudes: usize, max_hybrid_states: usize) -> UnionTable {
        assert!(max_amplitudes >= 1 && max_hybrid_states >= 1, "limits must be at least 1");
        let mut groups = BTreeMap::new();
        for q in 0..n {
            groups.insert(
                q,
                Group {
                    qubits: vec![q],
                    regs: Vec::new(),
                    state: GroupState::Known(MachineState::initial(1, 0)),
                },
            );
        }
        UnionTable {
            n,
            m,
            max_amplitudes,
            max_hybrid_states,
            qubit_group: (0..n).collect(),
            reg_group: vec![None; m],
            groups,
            next_id: n,
        }
    }

    pub fn new(n: usize, m: usize) -> UnionTable {
        Self::with_limits(n, m, DEFAULT_MAX_AMPLITUDES, DEFAULT_MAX_HYBRID_STATES)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn limits(&self) -> (usize, usize) {
        (self.max_amplitudes, self.max_hybrid_states)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn group_of_qubit(&self, q: usize) -> &Group {
        &self.groups[&self.qubit_group[q]]
    }

    pub fn group_of_register(&self, r: usize) -> Option<&Group> {
        self.reg_group[r].map(|id| &self.groups[&id])
    }

    fn over_caps(&self, ms: &MachineState) -> bool {
        over_caps(ms, self.max_amplitudes, self.max_hybrid_states)
    }

    /// Tensors two groups into one; ⊤ absorbs, and cap overflow yields ⊤.
    fn merge_two(&self, a: &Group, b: &Group) -> Group {
        let qubits: Vec<usize> = a.qubits.iter().chain(&b.qubits).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let regs: Vec<usize> = a.regs.iter().chain(&b.regs).copied().collect::<BTreeSet<_>>().into_iter().collect();
        if qubits.len() > 64 || regs.len() > 64 {
            return Group { qubits, regs, state: GroupState::Top };
        }
        let (GroupState::Known(sa), GroupState::Known(sb)) = (&a.state, &b.state) else {
            return Group { qubits, regs, state: GroupState::Top };
        };
        let qmap_a: Vec<usize> = a.qubits.iter().map(|q| qubits.binary_search(q).unwrap()).collect();
        let qmap_b: Vec<usize> = b.qubits.iter().map(|q| qubits.binary_search(q).unwrap()).collect();
        let rmap_a: Vec<usize> = a.regs.iter().map(|r| regs.binary_search(r).unwrap()).collect();
        let rmap_b: Vec<usize> = b.regs.iter().map(|r| regs.binary_search(r).unwrap()).collect();
        let scatter = |key: u64, map: &[usize]| -> u64 {
            map.iter().enumerate().fold(0u64, |acc, (l, &g)| acc | (((key >> l) & 1) << g))
        };
        let mut entries = Vec::new();
        for (ha, pa) in sa.entries() {
            for (hb, pb) in sb.entries() {
                let mut amps: BTreeMap<u64, C64> = BTreeMap::new();
                for (ka, va) in ha.psi.amplitudes() {
                    for (kb, vb) in hb.psi.amplitudes() {
                        amps.insert(scatter(ka, &qmap_a) | scatter(kb, &qmap_b), va * vb);
                    }
                }
                let psi = QuantumState::from_amplitudes(qubits.len(), amps);
                let beta = scatter(ha.beta, &rmap_a) | scatter(hb.beta, &rmap_b);
                entries.push((HybridState { psi, beta }, pa * pb));
            }
        }
        let ms = MachineState::from_entries(qubits.len(), regs.len(), entries);
        let state = if self.over_caps(&ms) { GroupState::Top } else { GroupState::Known(ms) };
        Group { qubits, regs, state }
    }

    /// Merges the given groups (and pooled registers `pool_regs`) into one
    /// group, reassigning memberships. Returns the merged id and whether any
    /// joining happened.
    fn merge_ids(&mut self, ids: &BTreeSet<GroupId>, pool_regs: &BTreeSet<usize>) -> (GroupId, bool) {
        debug_assert!(!ids.is_empty());
        let mut iter = ids.iter();
        let first = *iter.next().unwrap();
        if ids.len() == 1 && pool_regs.is_empty() {
            return (first, false);
        }
        let mut acc = self.groups[&first].clone();
        for id in iter {
            acc = self.merge_two(&acc, &self.groups[id]);
        }
        // adjoin pooled registers (constant 0): a zero bit in every branch
        for &r in pool_regs {
            acc = self.adjoin_pooled_register(acc, r);
        }
        for id in ids {
            self.groups.remove(id);
        }
        let new_id = self.next_id;
        self.next_id += 1;
        for &q in &acc.qubits {
            self.qubit_group[q] = new_id;
        }
        for &r in &acc.regs {
            self.reg_group[r] = Some(new_id);
        }
        self.groups.insert(new_id, acc);
        (new_id, true)
    }

    fn adjoin_pooled_register(&self, mut g: Group, r: usize) -> Group {
        debug_assert!(!g.regs.contains(&r));
        let pos = g.regs.binary_search(&r).unwrap_err();
        g.regs.insert(pos, r);
        if g.regs.len() > 64 {
            g.state = GroupState::Top;
            return g;
        }
        if let GroupState::Known(ms) = &g.state {
            let low_mask = (1u64 << pos) - 1;
            let entries = ms
                .entries()
                .iter()
                .map(|(h, p)| {
                    let beta = ((h.beta & !low_mask) << 1) | (h.beta & low_mask);
                    (HybridState { psi: h.psi.clone(), beta }, *p)
                })
                .collect();
            g.state = GroupState::Known(MachineState::from_entries(g.qubits.len(), g.regs.len(), entries));
        }
        g
    }

    /// Groups touched by the instruction parts, plus pooled registers that
    /// must join. Guard registers still in the pool do not appear here (they
    /// resolve against the constant 0 without joining).
    fn touched(&self, instr: &Instruction) -> (BTreeSet<GroupId>, BTreeSet<usize>) {
        let mut ids = BTreeSet::new();
        let mut pool = BTreeSet::new();
        match instr {
            Instruction::Apply { targets, controls, guards, .. } => {
                for &q in targets {
                    ids.insert(self.qubit_group[q]);
                }
                for c in controls {
                    ids.insert(self.qubit_group[c.index]);
                }
                for g in guards {
                    if let Some(id) = self.reg_group[g.index] {
                        ids.insert(id);
                    }
                }
            }
            Instruction::Measure { qubit, register } => {
                ids.insert(self.qubit_group[*qubit]);
                match self.reg_group[*register] {
                    Some(id) => {
                        ids.insert(id);
                    }
                    None => {
                        pool.insert(*register);
                    }
                }
            }
            Instruction::Reset { qubit } => {
                ids.insert(self.qubit_group[*qubit]);
            }
        }
        (ids, pool)
    }

    /// Advances the table over one instruction.
    pub fn step(&mut self, instr: &Instruction) -> StepInfo {
        let mut info = StepInfo::default();
        match instr {
            Instruction::Apply { gate, targets, controls, guards } => {
                // pooled guards resolve against the constant 0 immediately
                let mut live_guards: Vec<Ctrl> = Vec::new();
                for g in guards {
                    if self.reg_group[g.index].is_none() {
                        if g.pol == Polarity::Pos {
                            return info; // requires a 1 that can never be there
                        }
                        // negative guard on constant 0 always passes: drop it
                    } else {
                        live_guards.push(*g);
                    }
                }
                if targets.is_empty() && controls.is_empty() && live_guards.is_empty() {
                    return info; // overall phase only; nothing tracked here
                }
                let (ids, pool) = self.touched(instr);
                let was_top = ids.iter().any(|id| self.groups[id].is_top());
                let (gid, merged) = self.merge_ids(&ids, &pool);
                info.merged = merged;
                let group = self.groups.get_mut(&gid).unwrap();
                let GroupState::Known(ms) = &group.state else {
                    info.became_top = !was_top;
                    return info;
                };
                let lt: Vec<usize> = targets.iter().map(|&q| group.local_qubit(q)).collect();
                let lc: Vec<Ctrl> = controls
                    .iter()
                    .map(|c| Ctrl { index: group.local_qubit(c.index), pol: c.pol })
                    .collect();
                let lg: Vec<Ctrl> = live_guards
                    .iter()
                    .map(|g| Ctrl { index: group.local_reg(g.index), pol: g.pol })
                    .collect();
                let next = ms.apply_gate(*gate, &lt, &lc, &lg);
                if self.over_caps(&next) {
                    self.groups.get_mut(&gid).unwrap().state = GroupState::Top;
                    info.became_top = true;
                } else {
                    self.groups.get_mut(&gid).unwrap().state = GroupState::Known(next);
                }
            }
            Instruction::Measure { qubit, register } => {
                let (ids, pool) = self.touched(instr);
                let was_top = ids.iter().any(|id| self.groups[id].is_top());
                let (gid, merged) = self.merge_ids(&ids, &pool);
                info.merged = merged;
                let group = self.groups.get_mut(&gid).unwrap();
                if !group.regs.contains(register) {
                    // register came from the pool into a ⊤ group
                    let pos = group.regs.binary_search(register).unwrap_err();
                    group.regs.insert(pos, *register);
                    self.reg_group[*register] = Some(gid);
                }
                let GroupState::Known(ms) = &group.state else {
                    info.became_top = !was_top;
                    return info;
                };
                let li = group.local_qubit(*qubit);
                let lj = group.local_reg(*register);
                let next = ms.measure(li, lj);
                if self.over_caps(&next) {
                    self.groups.get_mut(&gid).unwrap().state = GroupState::Top;
                    info.became_top = true;
                } else {
                    self.groups.get_mut(&gid).unwrap().state = GroupState::Known(next);
                }
            }
            Instruction::Reset { qubit } => {
                let gid = self.qubit_group[*qubit];
                let (max_a, max_h) = (self.max_amplitudes, self.max_hybrid_states);
                let group = self.groups.get_mut(&gid).unwrap();
                if group.is_top() {
                    // output of reset is known no matter the input: the
                    // qubit leaves for a fresh |0⟩ singleton group
                    group.qubits.retain(|&q| q != *qubit);
                    if group.qubits.is_empty() && group.regs.is_empty() {
                        self.groups.remove(&gid);
                    }
                    let new_id = self.next_id;
                    self.next_id += 1;
                    self.qubit_group[*qubit] = new_id;
                    self.groups.insert(
                        new_id,
                        Group {
                            qubits: vec![*qubit],
                            regs: Vec::new(),
                            state: GroupState::Known(MachineState::initial(1, 0)),
                        },
                    );
                } else if let GroupState::Known(ms) = &group.state {
                    let li = group.local_qubit(*qubit);
                    let next = ms.reset(li).expect("reset branches cannot cancel");
                    if over_caps(&next, max_a, max_h) {
                        group.state = GroupState::Top;
                        info.became_top = true;
                    } else {
                        group.state = GroupState::Known(next);
                    }
                }
            }
        }
        info
    }

    // -- queries ------------------------------------------------------------

    /// `Some(b)` iff qubit `i` is `b` in every reachable branch.
    pub fn query_qubit(&self, i: usize) -> Option<u8> {
        let group = self.group_of_qubit(i);
        let GroupState::Known(ms) = &group.state else { return None };
        let li = group.local_qubit(i);
        let mut value = None;
        for (h, _) in ms.entries() {
            let b = h.psi.determined(li)?;
            match value {
                None => value = Some(b),
                Some(prev) if prev != b => return None,
                _ => {}
            }
        }
        value
    }

    /// `Some(b)` iff register `j` is `b` in every reachable branch; pooled
    /// registers are the constant 0.
    pub fn query_register(&self, j: usize) -> Option<u8> {
        let Some(gid) = self.reg_group[j] else { return Some(0) };
        let group = &self.groups[&gid];
        let GroupState::Known(ms) = &group.state else { return None };
        let lj = group.local_reg(j);
        let mut value = None;
        for (h, _) in ms.entries() {
            let b = ((h.beta >> lj) & 1) as u8;
            match value {
                None => value = Some(b),
                Some(prev) if prev != b => return None,
                _ => {}
            }
        }
        value
    }

    /// `Some((b, b′))` iff qubit `i` and register `j` share a group, qubit `i`
    /// is determined in every branch, and `qᵢ = b ⇔ rⱼ = b′` across branches.
    /// Normalized so `b = 1`.
    pub fn query_correlation(&self, i: usize, j: usize) -> Option<(u8, u8)> {
        let gid = self.qubit_group[i];
        if self.reg_group[j] != Some(gid) {
            return None;
        }
        let group = &self.groups[&gid];
        let GroupState::Known(ms) = &group.state else { return None };
        let li = group.local_qubit(i);
        let lj = group.local_reg(j);
        let mut when_one: Option<u8> = None;
        let mut when_zero: Option<u8> = None;
        for (h, _) in ms.entries() {
            let qb = h.psi.determined(li)?;
            let rb = ((h.beta >> lj) & 1) as u8;
            let slot = if qb == 1 { &mut when_one } else { &mut when_zero };
            match slot {
                None => *slot = Some(rb),
                Some(prev) if *prev != rb => return None,
                _ => {}
            }
        }
        match (when_one, when_zero) {
            (Some(r1), Some(r0)) if r1 != r0 => Some((1, r1)),
            (Some(r1), None) => Some((1, r1)),
            (None, Some(r0)) => Some((1, 1 - r0)),
            _ => None,
        }
    }

    /// Does `premise` force `conclusion` on every reachable branch and basis
    /// string? Requires both sites in one non-⊤ group; `vacuous` reports that
    /// nothing satisfies the premise.
    pub fn query_implication(
        &self,
        premise: (Site, u8),
        conclusion: (usize, u8),
    ) -> Implication {
        const FALSE: Implication = Implication { holds: false, vacuous: false };
        let (psite, pb) = premise;
        let (ci, cb) = conclusion;
        let cgid = self.qubit_group[ci];
        let pgid = match psite {
            Site::Qubit(q) => self.qubit_group[q],
            Site::Register(r) => match self.reg_group[r] {
                Some(id) => id,
                None => return FALSE,
            },
        };
        if pgid != cgid {
            return FALSE;
        }
        let group = &self.groups[&cgid];
        let GroupState::Known(ms) = &group.state else { return FALSE };
        let lc = group.local_qubit(ci);
        let mut any_premise = false;
        for (h, _) in ms.entries() {
            for (key, _) in h.psi.amplitudes() {
                let premise_sat = match psite {
                    Site::Qubit(q) => ((key >> group.local_qubit(q)) & 1) as u8 == pb,
                    Site::Register(r) => ((h.beta >> group.local_reg(r)) & 1) as u8 == pb,
                };
                if !premise_sat {
                    continue;
                }
                any_premise = true;
                if ((key >> lc) & 1) as u8 != cb {
                    return FALSE;
                }
            }
        }
        Implication { holds: true, vacuous: !any_premise }
    }

    /// Can all controls/guards be met at once in some reachable branch and
    /// basis string? Conservatively `true` when any site sits in a ⊤ group.
    pub fn query_satisfiable(&self, requirements: &[(Site, Polarity)]) -> bool {
        let mut by_group: BTreeMap<GroupId, Vec<(Site, Polarity)>> = BTreeMap::new();
        for &(site, pol) in requirements {
            match site {
                Site::Qubit(q) => {
                    by_group.entry(self.qubit_group[q]).or_default().push((site, pol));
                }
                Site::Register(r) => match self.reg_group[r] {
                    Some(id) => by_group.entry(id).or_default().push((site, pol)),
                    None => {
                        if pol == Polarity::Pos {
                            return false; // pooled register is the constant 0
                        }
                    }
                },
            }
        }
        for (gid, reqs) in &by_group {
            let group = &self.groups[gid];
            let GroupState::Known(ms) = &group.state else {
                // unknown group: assume satisfiable
                continue;
            };
            let satisfiable = ms.entries().iter().any(|(h, _)| {
                let regs_ok = reqs.iter().all(|&(site, pol)| match site {
                    Site::Register(r) => {
                        ((h.beta >> group.local_reg(r)) & 1) as u8 == pol.required_bit()
                    }
                    Site::Qubit(_) => true,
                });
                if !regs_ok {
                    return false;
                }
                h.psi.amplitudes().any(|(key, _)| {
                    reqs.iter().all(|&(site, pol)| match site {
                        Site::Qubit(q) => {
                            ((key >> group.local_qubit(q)) & 1) as u8 == pol.required_bit()
                        }
                        Site::Register(_) => true,
                    })
                })
            });
            if !satisfiable {
                return false;
            }
        }
        true
    }

    /// If the (controlled, guarded) diagonal gate would multiply every
    /// reachable amplitude by one common factor `e^{iθ}`, returns `θ`.
    /// Evaluates on a scratch merge of the touched groups; `None` when any
    /// of them is ⊤ or the merge overflows.
    pub fn query_uniform_phase(&self, instr: &Instruction) -> Result<Option<f64>, TableError> {
        let Instruction::Apply { gate, targets, controls, guards } = instr else {
            panic!("uniform-phase query expects a gate application");
        };
        if !gate.is_diagonal() {
            return Err(TableError::NotDiagonal(*gate));
        }
        let mat = gate.matrix();
        // pooled guards resolve immediately
        let mut live_guards: Vec<Ctrl> = Vec::new();
        for g in guards {
            if self.reg_group[g.index].is_none() {
                if g.pol == Polarity::Pos {
                    return Ok(Some(0.0)); // gate can never fire
                }
            } else {
                live_guards.push(*g);
            }
        }
        let mut ids = BTreeSet::new();
        for &q in targets {
            ids.insert(self.qubit_group[q]);
        }
        for c in controls {
            ids.insert(self.qubit_group[c.index]);
        }
        for g in &live_guards {
            ids.insert(self.reg_group[g.index].unwrap());
        }
        if ids.is_empty() {
            // bare overall-phase site
            return Ok(Some(mat.get(0, 0).arg()));
        }
        let mut iter = ids.iter();
        let mut scratch = self.groups[iter.next().unwrap()].clone();
        for id in iter {
            scratch = self.merge_two(&scratch, &self.groups[id]);
        }
        let GroupState::Known(ms) = &scratch.state else { return Ok(None) };
        let lt: Vec<usize> = targets.iter().map(|&q| scratch.local_qubit(q)).collect();
        let lc: Vec<Ctrl> = controls
            .iter()
            .map(|c| Ctrl { index: scratch.local_qubit(c.index), pol: c.pol })
            .collect();
        let lg: Vec<Ctrl> = live_guards
            .iter()
            .map(|g| Ctrl { index: scratch.local_reg(g.index), pol: g.pol })
            .collect();
        let t = lt.len();
        let mut factor: Option<C64> = None;
        let mut fold = |f: C64| -> bool {
            match factor {
                None => {
                    factor = Some(f);
                    true
                }
                Some(f0) => (f - f0).norm() <= PHASE_EPS,
            }
        };
        for (h, p) in ms.entries() {
            if *p < PROB_EPS {
                continue;
            }
            let guards_pass = lg
                .iter()
                .all(|g| ((h.beta >> g.index) & 1) as u8 == g.pol.required_bit());
            for (key, amp) in h.psi.amplitudes() {
                if amp.norm() < AMP_EPS {
                    continue;
                }
                let fires = guards_pass
                    && lc.iter().all(|c| ((key >> c.index) & 1) as u8 == c.pol.required_bit());
                let f = if fires {
                    let mut idx = 0usize;
                    for (k, &tq) in lt.iter().enumerate() {
                        idx |= (((key >> tq) & 1) as usize) << (t - 1 - k);
                    }
                    mat.get(idx, idx)
                } else {
                    C64::new(1.0, 0.0)
                };
                if !fold(f) {
                    return Ok(None);
                }
            }
        }
        Ok(factor.map(|f| f.arg()))
    }

    /// Reconstructs the full concrete machine state, or `None` if any group
    /// is ⊤. Pooled registers contribute constant 0 bits.
    pub fn expand(&self) -> Option<MachineState> {
        let mut acc = Group {
            qubits: Vec::new(),
            regs: Vec::new(),
            state: GroupState::Known(MachineState::initial(0, 0)),
        };
        // lift caps for the expansion: fold with an uncapped clone
        let uncapped = UnionTable { max_amplitudes: usize::MAX, max_hybrid_states: usize::MAX, ..self.clone() };
        for g in self.groups.values() {
            if g.is_top() {
                return None;
            }
            acc = uncapped.merge_two(&acc, g);
        }
        let GroupState::Known(local) = &acc.state else { return None };
        let qmap: Vec<usize> = acc.qubits.clone();
        let rmap: Vec<usize> = acc.regs.clone();
        let scatter = |key: u64, map: &[usize]| -> u64 {
            map.iter().enumerate().fold(0u64, |a, (l, &g)| a | (((key >> l) & 1) << g))
        };
        let entries = local
            .entries()
            .iter()
            .map(|(h, p)| {
                let amps = h
                    .psi
                    .amplitudes()
                    .map(|(k, v)| (scatter(k, &qmap), v))
                    .collect::<Vec<_>>();
                let psi = QuantumState::from_amplitudes(self.n, amps);
                let beta = scatter(h.beta, &rmap);
                (HybridState { psi, beta }, *p)
            })
            .collect();
        Some(MachineState::from_entries(self.n, self.m, entries))
    }

    /// Human-readable table: one block per group, entries with local basis
    /// strings (leftmost = lowest qubit index), register bits, probability.
    pub fn dump(&self) -> String {
        let mut order: Vec<&Group> = self.groups.values().collect();
        order.sort_by_key(|g| (g.qubits.first().copied(), g.regs.first().copied()));
        let mut out = String::new();
        for g in order {
            let qs: Vec<String> = g.qubits.iter().map(|q| format!("q{q}")).collect();
            let rs: Vec<String> = g.regs.iter().map(|r| format!("r{r}")).collect();
            let members = if rs.is_empty() {
                format!("{{{}}}", qs.join(", "))
            } else {
                format!("{{{}; {}}}", qs.join(", "), rs.join(", "))
            };
            match &g.state {
                GroupState::Top => {
                    let _ = writeln!(out, "group {members}: ⊤");
                }
                GroupState::Known(ms) => {
                    let _ = writeln!(out, "group {members}: {} entries", ms.entries().len());
                    for (h, p) in ms.entries() {
                        let amps: Vec<String> = h
                            .psi
                            .amplitudes()
                            .map(|(k, v)| {
                                let bits: String = (0..g.qubits.len())
                                    .map(|l| if (k >> l) & 1 == 1 { '1' } else { '0' })
                                    .collect();
                                format!("|{bits}⟩→{}", fmt_c(v))
                            })
                            .collect();
                        let beta: String = (0..g.regs.len())
                            .map(|l| if (h.beta >> l) & 1 == 1 { '1' } else { '0' })
                            .collect();
                        let beta = if beta.is_empty() { "-".to_string() } else { beta };
                        let _ = writeln!(out, "  {}  β={}  p={}", amps.join(", "), beta, fmt_f(*p));
                    }
                }
            }
        }
        out
    }
}

fn over_caps(ms: &MachineState, max_amplitudes: usize, max_hybrid_states: usize) -> bool {
    ms.entries().len() > max_hybrid_states
        || ms.entries().iter().any(|(h, _)| h.psi.num_amplitudes() > max_amplitudes)
}

fn fmt_f(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn fmt_c(c: C64) -> String {
    if c.im.abs() < 1e-9 {
        fmt_f(c.re)
    } else if c.re.abs() < 1e-9 {
        format!("{}i", fmt_f(c.im))
    } else if c.im < 0.0 {
        format!("{}-{}i", fmt_f(c.re), fmt_f(-c.im))
    } else {
        format!("{}+{}i", fmt_f(c.re), fmt_f(c.im))
    }
}

/// Runs a whole circuit through a fresh table with the given limits.
pub fn analyze(circuit: &crate::circuit::Circuit, max_amplitudes: usize, max_hybrid_states: usize) -> UnionTable {
    let mut t = UnionTable::with_limits(circuit.n, circuit.m, max_amplitudes, max_hybrid_states);
    for instr in &circuit.body {
        t.step(instr);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::sim;
    use std::f64::consts::FRAC_1_SQRT_2;

    /// The worked five-qubit example: three eventual groups.
    fn figure_circuit() -> Circuit {
        let mut c = Circuit::new(5, 2);
        c.h(0)
            .h(2)
            .h(4)
            .measure(0, 0)
            .guarded(GateKind::X, 0, 3)
            .measure(2, 1)
            .guarded(GateKind::X, 1, 2)
            .h(2)
            .gate(GateKind::Z, 4)
            .cx(2, 1);
        c
    }

    #[test]
    fn fresh_table_knows_all_zeros() {
        let t = UnionTable::new(3, 2);
        for q in 0..3 {
            assert_eq!(t.query_qubit(q), Some(0));
        }
        for r in 0..2 {
            assert_eq!(t.query_register(r), Some(0));
        }
        assert_eq!(t.groups().count(), 3);
    }

    #[test]
    fn empty_table_is_fine() {
        let t = UnionTable::new(0, 0);
        assert_eq!(t.groups().count(), 0);
        assert!(t.expand().is_some());
    }

    #[test]
    fn hadamard_releases_constancy() {
        let mut t = UnionTable::new(1, 0);
        t.step(&Instruction::apply(GateKind::H, vec![0]));
        assert_eq!(t.query_qubit(0), None);
    }

    #[test]
    fn figure_trace_reaches_golden_table() {
        let c = figure_circuit();
        let t = analyze(&c, 16, 4);

        // group {q0, q3; r0}: (|00⟩, β=0, ½), (|11⟩, β=1, ½)
        let g = t.group_of_qubit(0);
        assert_eq!(g.qubits, vec![0, 3]);
        assert_eq!(g.regs, vec![0]);
        let GroupState::Known(ms) = &g.state else { panic!("⊤") };
        assert_eq!(ms.entries().len(), 2);
        for (h, p) in ms.entries() {
            assert!((p - 0.5).abs() < 1e-9);
            match h.beta {
                0 => assert!((h.psi.amplitude(0b00).norm() - 1.0).abs() < 1e-9),
                1 => assert!((h.psi.amplitude(0b11).norm() - 1.0).abs() < 1e-9),
                other => panic!("unexpected β {other}"),
            }
        }

        // group {q1, q2; r1}: Bell state in both branches, β ∈ {0, 1}
        let g = t.group_of_qubit(1);
        assert_eq!(g.qubits, vec![1, 2]);
        assert_eq!(g.regs, vec![1]);
        let GroupState::Known(ms) = &g.state else { panic!("⊤") };
        assert_eq!(ms.entries().len(), 2);
        let mut betas = Vec::new();
        for (h, p) in ms.entries() {
            assert!((p - 0.5).abs() < 1e-9);
            betas.push(h.beta);
            assert!((h.psi.amplitude(0b00).re - FRAC_1_SQRT_2).abs() < 1e-9);
            assert!((h.psi.amplitude(0b11).re - FRAC_1_SQRT_2).abs() < 1e-9);
        }
        betas.sort();
        assert_eq!(betas, vec![0, 1]);

        // group {q4}: (|0⟩ − |1⟩)/√2
        let g = t.group_of_qubit(4);
        assert_eq!(g.qubits, vec![4]);
        assert!(g.regs.is_empty());
        let GroupState::Known(ms) = &g.state else { panic!("⊤") };
        assert_eq!(ms.entries().len(), 1);
        let psi = &ms.entries()[0].0.psi;
        assert!((psi.amplitude(0).re - FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((psi.amplitude(1).re + FRAC_1_SQRT_2).abs() < 1e-9);

        // dump shape
        let dump = t.dump();
        assert!(dump.contains("group {q0, q3; r0}: 2 entries"), "{dump}");
        assert!(dump.contains("group {q1, q2; r1}: 2 entries"), "{dump}");
        assert!(dump.contains("group {q4}: 1 entries"), "{dump}");
    }

    #[test]
    fn figure_correlations() {
        let t = analyze(&figure_circuit(), 16, 4);
        assert_eq!(t.query_correlation(0, 0), Some((1, 1)));
        assert_eq!(t.query_correlation(3, 0), Some((1, 1)));
        // Bell-group qubits are not determined per branch
        assert_eq!(t.query_correlation(1, 1), None);
        // different groups
        assert_eq!(t.query_correlation(4, 0), None);
        // register value queries: both measured registers are undetermined
        assert_eq!(t.query_register(0), None);
        assert_eq!(t.query_register(1), None);
        assert_eq!(t.query_qubit(4), None);
    }

    #[test]
    fn figure_implications() {
        let t = analyze(&figure_circuit(), 16, 4);
        // within the Bell group: q1 = 1 forces q2 = 1 on every basis string
        let imp = t.query_implication((Site::Qubit(1), 1), (2, 1));
        assert!(imp.holds && !imp.vacuous);
        let imp = t.query_implication((Site::Qubit(1), 0), (2, 0));
        assert!(imp.holds && !imp.vacuous);
        // register premise: r0 = 1 forces q3 = 1
        let imp = t.query_implication((Site::Register(0), 1), (3, 1));
        assert!(imp.holds && !imp.vacuous);
        // cross-group: no shared entries
        let imp = t.query_implication((Site::Qubit(0), 1), (4, 1));
        assert!(!imp.holds);
    }

    #[test]
    fn vacuous_implication_is_flagged() {
        let mut c = Circuit::new(2, 0);
        c.cx(0, 1); // merges the groups, state stays |00⟩
        let t = analyze(&c, 16, 4);
        let imp = t.query_implication((Site::Qubit(0), 1), (1, 1));
        assert!(imp.holds && imp.vacuous);
    }

    #[test]
    fn satisfiability_answers() {
        let t = UnionTable::new(2, 1);
        assert!(!t.query_satisfiable(&[(Site::Qubit(0), Polarity::Pos)]));
        assert!(t.query_satisfiable(&[(Site::Qubit(0), Polarity::Neg)]));
        assert!(!t.query_satisfiable(&[(Site::Register(0), Polarity::Pos)]));
        assert!(t.query_satisfiable(&[(Site::Register(0), Polarity::Neg)]));
        assert!(t.query_satisfiable(&[]));

        let t = analyze(&figure_circuit(), 16, 4);
        // Bell support is |00⟩, |11⟩ only
        assert!(!t.query_satisfiable(&[
            (Site::Qubit(1), Polarity::Pos),
            (Site::Qubit(2), Polarity::Neg),
        ]));
        assert!(t.query_satisfiable(&[
            (Site::Qubit(1), Polarity::Pos),
            (Site::Qubit(2), Polarity::Pos),
        ]));
        // cross-group mixes multiply supports
        assert!(t.query_satisfiable(&[
            (Site::Qubit(0), Polarity::Pos),
            (Site::Qubit(4), Polarity::Neg),
        ]));
    }

    #[test]
    fn top_group_is_conservatively_satisfiable() {
        // measurement needs 2 branches but the cap is 1 → ⊤
        let mut t2 = UnionTable::with_limits(1, 1, 16, 1);
        t2.step(&Instruction::apply(GateKind::H, vec![0]));
        let info = t2.step(&Instruction::Measure { qubit: 0, register: 0 });
        assert!(info.became_top);
        assert!(t2.group_of_qubit(0).is_top());
        assert!(t2.query_satisfiable(&[(Site::Qubit(0), Polarity::Pos)]));
        assert_eq!(t2.query_qubit(0), None);
        assert_eq!(t2.query_register(0), None);

    }

    #[test]
    fn single_qubit_hadamards_never_overflow() {
        let mut t = UnionTable::with_limits(1, 0, 16, 4);
        for _ in 0..5 {
            let info = t.step(&Instruction::apply(GateKind::H, vec![0]));
            assert!(!info.became_top);
        }
        assert!(!t.group_of_qubit(0).is_top());
    }

    #[test]
    fn five_qubit_group_overflows_at_32_amplitudes() {
        let mut c = Circuit::new(5, 0);
        c.cx(0, 1).cx(0, 2).cx(0, 3).cx(0, 4); // one group, still |00000⟩
        let mut t = UnionTable::with_limits(5, 0, 16, 4);
        for i in &c.body {
            t.step(i);
        }
        assert_eq!(t.groups().count(), 1);
        for q in 0..4 {
            let info = t.step(&Instruction::apply(GateKind::H, vec![q]));
            assert!(!info.became_top, "H q{q} must fit: {} amps expected", 1 << (q + 1));
        }
        let info = t.step(&Instruction::apply(GateKind::H, vec![4]));
        assert!(info.became_top, "32 amplitudes exceed the cap of 16");
        assert!(t.group_of_qubit(0).is_top());
    }

    #[test]
    fn pooled_positive_guard_is_a_no_op_without_merging() {
        let mut t = UnionTable::new(2, 1);
        let instr = Instruction::Apply {
            gate: GateKind::X,
            targets: vec![1],
            controls: vec![],
            guards: vec![Ctrl::pos(0)],
        };
        let info = t.step(&instr);
        assert!(!info.merged);
        assert_eq!(t.query_qubit(1), Some(0));
        assert!(t.group_of_register(0).is_none(), "register must stay pooled");
    }

    #[test]
    fn pooled_negative_guard_fires_without_joining() {
        let mut t = UnionTable::new(2, 1);
        let instr = Instruction::Apply {
            gate: GateKind::X,
            targets: vec![1],
            controls: vec![],
            guards: vec![Ctrl::neg(0)],
        };
        t.step(&instr);
        assert_eq!(t.query_qubit(1), Some(1));
        assert!(t.group_of_register(0).is_none(), "register must stay pooled");
    }

    #[test]
    fn in_group_guard_merges_groups() {
        let mut c = Circuit::new(2, 1);
        c.h(0).measure(0, 0).guarded(GateKind::X, 0, 1);
        let t = analyze(&c, 16, 4);
        let g = t.group_of_qubit(1);
        assert_eq!(g.qubits, vec![0, 1]);
        assert_eq!(g.regs, vec![0]);
        assert_eq!(t.query_correlation(1, 0), Some((1, 1)));
    }

    #[test]
    fn reset_escapes_top() {
        let mut t = UnionTable::with_limits(2, 1, 1, 4);
        t.step(&Instruction::apply(GateKind::H, vec![0])); // 2 amps > 1 → ⊤
        assert!(t.group_of_qubit(0).is_top());
        t.step(&Instruction::Apply {
            gate: GateKind::X,
            targets: vec![1],
            controls: vec![Ctrl::pos(0)],
            guards: vec![],
        }); // merges q1 into the ⊤ group
        assert!(t.group_of_qubit(1).is_top());
        t.step(&Instruction::Reset { qubit: 0 });
        assert_eq!(t.query_qubit(0), Some(0));
        assert!(t.group_of_qubit(1).is_top(), "the remaining group stays ⊤");
        assert_eq!(t.group_of_qubit(0).qubits, vec![0]);
    }

    #[test]
    fn measure_into_top_group_claims_register() {
        let mut t = UnionTable::with_limits(1, 1, 1, 4);
        t.step(&Instruction::apply(GateKind::H, vec![0]));
        assert!(t.group_of_qubit(0).is_top());
        t.step(&Instruction::Measure { qubit: 0, register: 0 });
        let g = t.group_of_register(0).expect("register joined");
        assert!(g.is_top());
        assert_eq!(t.query_register(0), None);
        assert!(t.dump().contains("⊤"), "{}", t.dump());
    }

    #[test]
    fn uniform_phase_cases() {
        // S on a determined |1⟩
        let mut c = Circuit::new(1, 0);
        c.x(0);
        let t = analyze(&c, 16, 4);
        let s_gate = Instruction::apply(GateKind::S, vec![0]);
        let theta = t.query_uniform_phase(&s_gate).unwrap().expect("uniform");
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-9);

        // T on a determined |0⟩: phase never touches the support
        let t0 = UnionTable::new(1, 0);
        let t_gate = Instruction::apply(GateKind::T, vec![0]);
        let theta = t0.query_uniform_phase(&t_gate).unwrap().expect("uniform");
        assert!(theta.abs() < 1e-12);

        // S on |+⟩: relative phase
        let mut c = Circuit::new(1, 0);
        c.h(0);
        let t = analyze(&c, 16, 4);
        assert_eq!(t.query_uniform_phase(&s_gate).unwrap(), None);

        // controlled Z with a dead control fires nowhere: θ = 0
        let t = UnionTable::new(2, 0);
        let cz = Instruction::Apply {
            gate: GateKind::Z,
            targets: vec![1],
            controls: vec![Ctrl::pos(0)],
            guards: vec![],
        };
        let theta = t.query_uniform_phase(&cz).unwrap().expect("uniform");
        assert!(theta.abs() < 1e-12);

        // non-diagonal gate is a caller error
        let h = Instruction::apply(GateKind::H, vec![0]);
        assert!(t.query_uniform_phase(&h).is_err());
    }

    #[test]
    fn uniform_phase_respects_guards() {
        // register in a group, undetermined: guarded S on determined |1⟩
        // applies e^{iπ/2} in one branch, 1 in the other → not uniform
        let mut c = Circuit::new(2, 1);
        c.h(0).measure(0, 0).x(1);
        let t = analyze(&c, 16, 4);
        let guarded_s = Instruction::Apply {
            gate: GateKind::S,
            targets: vec![1],
            controls: vec![],
            guards: vec![Ctrl::pos(0)],
        };
        assert_eq!(t.query_uniform_phase(&guarded_s).unwrap(), None);
    }

    #[test]
    fn expansion_matches_concrete_run() {
        let c = figure_circuit();
        let t = analyze(&c, 16, 4);
        let expanded = t.expand().expect("no ⊤ groups");
        let concrete = sim::run(&c).unwrap();
        assert!(expanded.approx_eq(&concrete, 1e-9), "expansion drifted from oracle");
    }

    #[test]
    fn expansion_covers_pooled_registers() {
        let mut c = Circuit::new(2, 3);
        c.h(0).measure(0, 1); // registers 0 and 2 stay pooled
        let t = analyze(&c, 16, 4);
        let expanded = t.expand().unwrap();
        let concrete = sim::run(&c).unwrap();
        assert!(expanded.approx_eq(&concrete, 1e-9));
    }

    #[test]
    fn partition_stays_consistent() {
        let c = figure_circuit();
        let mut t = UnionTable::new(c.n, c.m);
        for instr in &c.body {
            t.step(instr);
            // every qubit in exactly one group, membership agrees
            for q in 0..c.n {
                let g = t.group_of_qubit(q);
                assert!(g.qubits.contains(&q));
            }
            let mut seen_regs = BTreeSet::new();
            for g in t.groups() {
                for &r in &g.regs {
                    assert!(seen_regs.insert(r), "register {r} in two groups");
                }
            }
        }
    }
}
