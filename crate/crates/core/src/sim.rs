//! Reference interpreter with exact hybrid semantics.
//!
//! A machine state is a finite probability distribution over hybrid states
//! (sparse quantum state, register assignment). Gates push the quantum state
//! forward when their guards pass; measurements split each hybrid state into
//! at most two successors and collapse; resets measure and then force |0⟩.
//! Equal successors are merged, where quantum states are compared up to a
//! global phase.

use crate::circuit::{Circuit, Ctrl, GateKind, Instruction};
use crate::linalg::C64;
use std::collections::BTreeMap;
use thiserror::Error;

/// Amplitudes below this magnitude are dropped.
pub const AMP_EPS: f64 = 1e-12;
/// Branches below this probability are dropped.
pub const PROB_EPS: f64 = 1e-12;
/// Tolerance for state comparisons and distribution checks.
pub const CMP_EPS: f64 = 1e-9;
/// Default qubit bound for brute-force outcome distributions.
pub const DEFAULT_ORACLE_QUBIT_LIMIT: usize = 12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("collapse to a zero-probability branch (qubit {qubit} -> {bit})")]
    ZeroProbabilityBranch { qubit: usize, bit: u8 },
    #[error("setting qubit {qubit} -> {bit} produced the zero vector")]
    DegenerateSet { qubit: usize, bit: u8 },
    #[error("circuit has {n} qubits, oracle limit is {limit}")]
    QubitLimitExceeded { n: usize, limit: usize },
    #[error("circuits have different shapes: ({n_a},{m_a}) vs ({n_b},{m_b})")]
    ShapeMismatch { n_a: usize, m_a: usize, n_b: usize, m_b: usize },
    #[error("circuit uses more than 64 {0}s; u64 bit-packing limit")]
    WidthLimit(&'static str),
}

/// Sparse state vector over `n` qubits. Basis strings are packed into a
/// `u64` with qubit `i` at bit `i`.
#[derive(Clone, Debug)]
pub struct QuantumState {
    n: usize,
    amps: BTreeMap<u64, C64>,
}

impl QuantumState {
    /// |0…0⟩ over `n` qubits (`n = 0` gives the scalar state 1).
    pub fn zero(n: usize) -> QuantumState {
        let mut amps = BTreeMap::new();
        amps.insert(0u64, C64::new(1.0, 0.0));
        QuantumState { n, amps }
    }

    /// Builds a state from raw amplitudes, pruning tiny entries. The caller
    /// is responsible for normalization.
    pub fn from_amplitudes(n: usize, iter: impl IntoIterator<Item = (u64, C64)>) -> QuantumState {
        let mut amps = BTreeMap::new();
        for (k, v) in iter {
            if v.norm() >= AMP_EPS {
                amps.insert(k, v);
            }
        }
        QuantumState { n, amps }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_amplitudes(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitude(&self, basis: u64) -> C64 {
        self.amps.get(&basis).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = (u64, C64)> + '_ {
        self.amps.iter().map(|(&k, &v)| (k, v))
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn prune(&mut self) {
        self.amps.retain(|_, a| a.norm() >= AMP_EPS);
    }

    /// Rescales to unit 2-norm.
    fn normalized(mut self, qubit: usize, bit: u8) -> Result<QuantumState, SimError> {
        let norm = self.norm();
        if norm < AMP_EPS {
            return Err(SimError::DegenerateSet { qubit, bit });
        }
        for a in self.amps.values_mut() {
            *a /= norm;
        }
        self.prune();
        Ok(self)
    }

    /// Applies a (controlled) gate. `targets` and `controls` are qubit
    /// positions within this state. Components that fail a quantum control
    /// pass through unchanged.
    pub fn apply(&self, gate: GateKind, targets: &[usize], controls: &[Ctrl]) -> QuantumState {
        let mat = gate.matrix();
        let t = targets.len();
        let dim = 1usize << t;
        let mut out: BTreeMap<u64, C64> = BTreeMap::new();
        for (&basis, &amp) in &self.amps {
            let fired = controls
                .iter()
                .all(|c| ((basis >> c.index) & 1) as u8 == c.pol.required_bit());
            if !fired {
                *out.entry(basis).or_insert(C64::new(0.0, 0.0)) += amp;
                continue;
            }
            // column index: first target is the most significant bit
            let mut col = 0usize;
            for (k, &tq) in targets.iter().enumerate() {
                col |= (((basis >> tq) & 1) as usize) << (t - 1 - k);
            }
            for row in 0..dim {
                let coef = mat.get(row, col);
                if coef.norm() < 1e-300 {
                    continue;
                }
                let mut nb = basis;
                for (k, &tq) in targets.iter().enumerate() {
                    let bit = ((row >> (t - 1 - k)) & 1) as u64;
                    nb = (nb & !(1u64 << tq)) | (bit << tq);
                }
                *out.entry(nb).or_insert(C64::new(0.0, 0.0)) += coef * amp;
            }
        }
        let mut s = QuantumState { n: self.n, amps: out };
        s.prune();
        s
    }

    /// Probability that measuring qubit `i` yields `b`.
    pub fn prob_of(&self, i: usize, b: u8) -> f64 {
        self.amps
            .iter()
            .filter(|(&k, _)| ((k >> i) & 1) as u8 == b)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Post-measurement state for outcome `qubit i -> b`, together with the
    /// probability of that branch. Errors when the branch has no weight.
    pub fn collapse(&self, i: usize, b: u8) -> Result<(QuantumState, f64), SimError> {
        let p = self.prob_of(i, b);
        if p < PROB_EPS {
            return Err(SimError::ZeroProbabilityBranch { qubit: i, bit: b });
        }
        let kept = self
            .amps
            .iter()
            .filter(|(&k, _)| ((k >> i) & 1) as u8 == b)
            .map(|(&k, &a)| (k, a));
        let s = QuantumState::from_amplitudes(self.n, kept).normalized(i, b)?;
        Ok((s, p))
    }

    /// Forces qubit `i` to `b` by folding the opposite-branch amplitudes onto
    /// the kept branch and renormalizing. Errors if everything cancels.
    pub fn set_qubit(&self, i: usize, b: u8) -> Result<QuantumState, SimError> {
        let mut out: BTreeMap<u64, C64> = BTreeMap::new();
        for (&k, &a) in &self.amps {
            let nb = (k & !(1u64 << i)) | ((b as u64) << i);
            *out.entry(nb).or_insert(C64::new(0.0, 0.0)) += a;
        }
        QuantumState { n: self.n, amps: out }.normalized(i, b)
    }

    /// `Some(b)` when qubit `i` is `b` on every supported basis string.
    pub fn determined(&self, i: usize) -> Option<u8> {
        let mut seen = None;
        for &k in self.amps.keys() {
            let b = ((k >> i) & 1) as u8;
            match seen {
                None => seen = Some(b),
                Some(prev) if prev != b => return None,
                _ => {}
            }
        }
        seen
    }

    /// Canonical representative up to global phase: rotated so the amplitude
    /// at the smallest supported basis index is real and positive.
    pub fn canonical(&self) -> QuantumState {
        let reference = self.amps.iter().find(|(_, a)| a.norm() >= AMP_EPS);
        let Some((_, &a0)) = reference else {
            return self.clone();
        };
        let phase = a0.conj() / a0.norm();
        let amps = self.amps.iter().map(|(&k, &a)| (k, a * phase)).collect();
        QuantumState { n: self.n, amps }
    }

    /// Equality up to global phase, entrywise within `eps`.
    pub fn approx_eq(&self, other: &QuantumState, eps: f64) -> bool {
        if self.n != other.n {
            return false;
        }
        let a = self.canonical();
        let b = other.canonical();
        let keys: Vec<u64> = a.amps.keys().chain(b.amps.keys()).copied().collect();
        keys.into_iter().all(|k| (a.amplitude(k) - b.amplitude(k)).norm() <= eps)
    }

    /// Tensor product; `other`'s qubits occupy the positions above `self`'s.
    pub fn tensor(&self, other: &QuantumState) -> QuantumState {
        let mut amps = BTreeMap::new();
        for (&ka, &aa) in &self.amps {
            for (&kb, &ab) in &other.amps {
                amps.insert(ka | (kb << self.n), aa * ab);
            }
        }
        let mut s = QuantumState { n: self.n + other.n, amps };
        s.prune();
        s
    }

    /// Reindexes qubits: new qubit `i` is old qubit `map[i]`. `map` must be a
    /// permutation of `0..n`.
    pub fn permuted(&self, map: &[usize]) -> QuantumState {
        assert_eq!(map.len(), self.n);
        let amps = self
            .amps
            .iter()
            .map(|(&k, &a)| {
                let mut nk = 0u64;
                for (new, &old) in map.iter().enumerate() {
                    nk |= ((k >> old) & 1) << new;
                }
                (nk, a)
            })
            .collect();
        QuantumState { n: self.n, amps }
    }
}

/// One classical branch: a quantum state plus a register assignment
/// (register `j` at bit `j`).
#[derive(Clone, Debug)]
pub struct HybridState {
    pub psi: QuantumState,
    pub beta: u64,
}

impl HybridState {
    pub fn approx_eq(&self, other: &HybridState, eps: f64) -> bool {
        self.beta == other.beta && self.psi.approx_eq(&other.psi, eps)
    }
}

/// Finite probability distribution over hybrid states.
#[derive(Clone, Debug)]
pub struct MachineState {
    pub n: usize,
    pub m: usize,
    entries: Vec<(HybridState, f64)>,
}

impl MachineState {
    /// Point distribution on (|0…0⟩, all-zero registers).
    pub fn initial(n: usize, m: usize) -> MachineState {
        MachineState {
            n,
            m,
            entries: vec![(HybridState { psi: QuantumState::zero(n), beta: 0 }, 1.0)],
        }
    }

    pub fn from_entries(n: usize, m: usize, entries: Vec<(HybridState, f64)>) -> MachineState {
        let mut s = MachineState { n, m, entries: Vec::new() };
        for (h, p) in entries {
            s.merge_push(h, p);
        }
        s
    }

    pub fn entries(&self) -> &[(HybridState, f64)] {
        &self.entries
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    fn merge_push(&mut self, h: HybridState, p: f64) {
        if p < PROB_EPS {
            return;
        }
        for (existing, q) in &mut self.entries {
            if existing.beta == h.beta && existing.psi.approx_eq(&h.psi, CMP_EPS) {
                *q += p;
                return;
            }
        }
        self.entries.push((h, p));
    }

    fn guards_pass(beta: u64, guards: &[Ctrl]) -> bool {
        guards.iter().all(|g| ((beta >> g.index) & 1) as u8 == g.pol.required_bit())
    }

    /// Applies a guarded, controlled gate to every branch whose guards pass.
    pub fn apply_gate(
        &self,
        gate: GateKind,
        targets: &[usize],
        controls: &[Ctrl],
        guards: &[Ctrl],
    ) -> MachineState {
        let entries = self
            .entries
            .iter()
            .map(|(h, p)| {
                let psi = if Self::guards_pass(h.beta, guards) {
                    h.psi.apply(gate, targets, controls)
                } else {
                    h.psi.clone()
                };
                (HybridState { psi, beta: h.beta }, *p)
            })
            .collect();
        // a unitary keeps distinct branches distinct; no re-merge needed
        MachineState { n: self.n, m: self.m, entries }
    }

    /// Measures qubit `i` into register `j`, splitting each branch.
    pub fn measure(&self, i: usize, j: usize) -> MachineState {
        let mut out = MachineState { n: self.n, m: self.m, entries: Vec::new() };
        for (h, p) in &self.entries {
            for b in [0u8, 1u8] {
                if let Ok((psi, pb)) = h.psi.collapse(i, b) {
                    let beta = (h.beta & !(1u64 << j)) | ((b as u64) << j);
                    out.merge_push(HybridState { psi, beta }, p * pb);
                }
            }
        }
        out
    }

    /// Resets qubit `i` to |0⟩: measures it (register unchanged) and flips
    /// the 1-branch back down.
    pub fn reset(&self, i: usize) -> Result<MachineState, SimError> {
        let mut out = MachineState { n: self.n, m: self.m, entries: Vec::new() };
        for (h, p) in &self.entries {
            if let Ok((psi, pb)) = h.psi.collapse(i, 0) {
                out.merge_push(HybridState { psi, beta: h.beta }, p * pb);
            }
            if let Ok((psi1, pb)) = h.psi.collapse(i, 1) {
                let psi = psi1.set_qubit(i, 0)?;
                out.merge_push(HybridState { psi, beta: h.beta }, p * pb);
            }
        }
        Ok(out)
    }

    /// One instruction step.
    pub fn step(&self, instr: &Instruction) -> Result<MachineState, SimError> {
        match instr {
            Instruction::Apply { gate, targets, controls, guards } => {
                Ok(self.apply_gate(*gate, targets, controls, guards))
            }
            Instruction::Measure { qubit, register } => Ok(self.measure(*qubit, *register)),
            Instruction::Reset { qubit } => self.reset(*qubit),
        }
    }

    /// Marginal distribution over register assignments.
    pub fn register_distribution(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for (h, p) in &self.entries {
            *out.entry(h.beta).or_insert(0.0) += p;
        }
        out
    }

    /// Distribution equality within `eps`: entries matched up to phase, with
    /// probabilities compared pointwise.
    pub fn approx_eq(&self, other: &MachineState, eps: f64) -> bool {
        if self.n != other.n || self.m != other.m {
            return false;
        }
        let mut matched = vec![false; other.entries.len()];
        for (h, p) in &self.entries {
            let mut found = false;
            for (k, (oh, op)) in other.entries.iter().enumerate() {
                if !matched[k] && h.approx_eq(oh, eps) && (p - op).abs() <= eps {
                    matched[k] = true;
                    found = true;
                    break;
                }
            }
            if !found {
                return false;
            }
        }
        matched.into_iter().all(|x| x)
    }
}

/// Runs a circuit from the initial state. The circuit-level `global_phase`
/// is unobservable and ignored here.
pub fn run(circuit: &Circuit) -> Result<MachineState, SimError> {
    if circuit.n > 64 {
        return Err(SimError::WidthLimit("qubit"));
    }
    if circuit.m > 64 {
        return Err(SimError::WidthLimit("register"));
    }
    let diags = circuit.validate();
    if !diags.is_empty() {
        return Err(SimError::InvalidCircuit(diags[0].to_string()));
    }
    let mut state = MachineState::initial(circuit.n, circuit.m);
    for instr in &circuit.body {
        state = state.step(instr)?;
    }
    Ok(state)
}

/// Brute-force distribution over final register values, guarded by a qubit
/// limit so it stays a desk-scale oracle.
pub fn outcome_distribution(
    circuit: &Circuit,
    limit: usize,
) -> Result<BTreeMap<u64, f64>, SimError> {
    if circuit.n > limit {
        return Err(SimError::QubitLimitExceeded { n: circuit.n, limit });
    }
    Ok(run(circuit)?.register_distribution())
}

/// Total-variation distance between two register distributions.
pub fn tv_distance(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
    let keys: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    let mut sum = 0.0;
    for k in keys {
        sum += (a.get(&k).copied().unwrap_or(0.0) - b.get(&k).copied().unwrap_or(0.0)).abs();
    }
    sum / 2.0
}

/// Result of an equivalence check.
#[derive(Clone, Debug)]
pub struct EquivCheck {
    pub equivalent: bool,
    /// Worst total-variation distance across the base and extended checks.
    pub tv_distance: f64,
    /// Register assignment with the largest probability gap, if any gap.
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub beta: u64,
    pub probability_gap: f64,
    /// Whether the witness comes from the check with appended measurements.
    pub extended: bool,
}

/// Whether qubit `q`'s last use in `c` is something other than a measurement
/// of `q` (untouched qubits count as live).
/// A qubit is retired (not live) when, walking its wire backwards from the end
/// and skipping pure gate applications, the first event found is a measurement
/// of that qubit.  Trailing unitaries after a final measurement can never be
/// observed by the program, so they do not make the qubit live again; a reset
/// or a wire with no measurement at all leaves the qubit live.
fn live_at_end(c: &Circuit, q: usize) -> bool {
    for instr in c.body.iter().rev() {
        if instr.touches_qubit(q) {
            match instr {
                Instruction::Apply { .. } => continue,
                Instruction::Measure { qubit, .. } if *qubit == q => return false,
                _ => return true,
            }
        }
    }
    true
}

fn flip_mask(flips: &[usize]) -> u64 {
    flips.iter().fold(0u64, |acc, &r| acc | (1u64 << r))
}

fn worst_key(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> Option<(u64, f64)> {
    let keys: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    keys.into_iter()
        .map(|k| (k, (a.get(&k).copied().unwrap_or(0.0) - b.get(&k).copied().unwrap_or(0.0)).abs()))
        .filter(|(_, d)| *d > 0.0)
        .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
}

/// Observational equivalence modulo declared register flips: `b`'s final
/// value of each register in `flips` is the negation of `a`'s.
///
/// Two checks must both agree within `tol` total variation:
/// 1. the distributions over final register values;
/// 2. the same with a fresh measurement appended for every qubit still live
///    at the end of both circuits, making residual state differences on live
///    wires observable. Qubits whose last action in a circuit is their own
///    measurement have been read out and retired; their residual state is
///    not a program observable.
pub fn equivalent_with(
    a: &Circuit,
    b: &Circuit,
    flips: &[usize],
    tol: f64,
    limit: usize,
) -> Result<EquivCheck, SimError> {
    if a.n != b.n || a.m != b.m {
        return Err(SimError::ShapeMismatch { n_a: a.n, m_a: a.m, n_b: b.n, m_b: b.m });
    }
    let mask = flip_mask(flips);
    let dist_a = outcome_distribution(a, limit)?;
    let dist_b: BTreeMap<u64, f64> = outcome_distribution(b, limit)?
        .into_iter()
        .map(|(k, v)| (k ^ mask, v))
        .collect();
    let tv_base = tv_distance(&dist_a, &dist_b);

    let live: Vec<usize> = (0..a.n).filter(|&q| live_at_end(a, q) && live_at_end(b, q)).collect();
    if a.m + live.len() > 64 {
        return Err(SimError::WidthLimit("register"));
    }
    let extend = |c: &Circuit| {
        let mut e = c.clone();
        e.m += live.len();
        for (k, &q) in live.iter().enumerate() {
            e.measure(q, a.m + k);
        }
        e
    };
    let (tv_ext, ext_a, ext_b) = if live.is_empty() {
        (tv_base, dist_a.clone(), dist_b.clone())
    } else {
        let da = outcome_distribution(&extend(a), limit)?;
        let db: BTreeMap<u64, f64> = outcome_distribution(&extend(b), limit)?
            .into_iter()
            .map(|(k, v)| (k ^ mask, v))
            .collect();
        let tv = tv_distance(&da, &db);
        (tv, da, db)
    };

    let tv = tv_base.max(tv_ext);
    let witness = if tv_ext >= tv_base {
        worst_key(&ext_a, &ext_b).map(|(beta, gap)| Witness {
            beta,
            probability_gap: gap,
            extended: !live.is_empty(),
        })
    } else {
        worst_key(&dist_a, &dist_b).map(|(beta, gap)| Witness {
            beta,
            probability_gap: gap,
            extended: false,
        })
    };
    Ok(EquivCheck { equivalent: tv <= tol, tv_distance: tv, witness })
}

/// [`equivalent_with`] with no flips and the default oracle limit.
pub fn equivalent(a: &Circuit, b: &Circuit, tol: f64) -> Result<EquivCheck, SimError> {
    equivalent_with(a, b, &[], tol, DEFAULT_ORACLE_QUBIT_LIMIT)
}
