//! Instruction-level circuit representation.
//!
//! A circuit owns `n` qubits and `m` classical single-bit registers. Gate
//! applications may carry quantum controls (positive or negative) and
//! classical register guards (positive or negative); measurements write one
//! register; resets return a qubit to |0⟩. Multi-controlled gates are a
//! single [`Instruction::Apply`] with several controls.

use crate::linalg::{Matrix, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use thiserror::Error;

/// Tolerance used for structural matrix checks (diagonality, unitarity).
pub const MATRIX_EPS: f64 = 1e-12;

/// Gate alphabet. Every kind has a fixed unitary of dimension `2^arity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    /// diag(1, e^{iθ})
    Phase(f64),
    Rx(f64),
    Ry(f64),
    Rz(f64),
    Swap,
    /// Scalar e^{iθ}; with controls attached it acts as a relative phase.
    GlobalPhase(f64),
}

impl GateKind {
    /// Number of target qubits the gate acts on.
    pub fn arity(&self) -> usize {
        match self {
            GateKind::Swap => 2,
            GateKind::GlobalPhase(_) => 0,
            _ => 1,
        }
    }

    /// Base gate name as spelled in program text.
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Phase(_) => "p",
            GateKind::Rx(_) => "rx",
            GateKind::Ry(_) => "ry",
            GateKind::Rz(_) => "rz",
            GateKind::Swap => "swap",
            GateKind::GlobalPhase(_) => "gphase",
        }
    }

    /// The gate's unitary, row/column index ordered with the first target as
    /// the most significant bit.
    pub fn matrix(&self) -> Matrix {
        let c = |re: f64, im: f64| C64::new(re, im);
        let zero = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        match *self {
            GateKind::H => Matrix::from_rows(&[
                vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
                vec![c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
            ]),
            GateKind::X => Matrix::from_rows(&[vec![zero, one], vec![one, zero]]),
            GateKind::Y => {
                Matrix::from_rows(&[vec![zero, c(0.0, -1.0)], vec![c(0.0, 1.0), zero]])
            }
            GateKind::Z => Matrix::from_rows(&[vec![one, zero], vec![zero, c(-1.0, 0.0)]]),
            GateKind::S => Matrix::from_rows(&[vec![one, zero], vec![zero, c(0.0, 1.0)]]),
            GateKind::Sdg => Matrix::from_rows(&[vec![one, zero], vec![zero, c(0.0, -1.0)]]),
            GateKind::T => Matrix::from_rows(&[
                vec![one, zero],
                vec![zero, C64::from_polar(1.0, PI / 4.0)],
            ]),
            GateKind::Tdg => Matrix::from_rows(&[
                vec![one, zero],
                vec![zero, C64::from_polar(1.0, -PI / 4.0)],
            ]),
            GateKind::Phase(theta) => Matrix::from_rows(&[
                vec![one, zero],
                vec![zero, C64::from_polar(1.0, theta)],
            ]),
            GateKind::Rx(theta) => {
                let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                Matrix::from_rows(&[
                    vec![c(co, 0.0), c(0.0, -si)],
                    vec![c(0.0, -si), c(co, 0.0)],
                ])
            }
            GateKind::Ry(theta) => {
                let (co, si) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                Matrix::from_rows(&[vec![c(co, 0.0), c(-si, 0.0)], vec![c(si, 0.0), c(co, 0.0)]])
            }
            GateKind::Rz(theta) => Matrix::from_rows(&[
                vec![C64::from_polar(1.0, -theta / 2.0), zero],
                vec![zero, C64::from_polar(1.0, theta / 2.0)],
            ]),
            GateKind::Swap => Matrix::from_rows(&[
                vec![one, zero, zero, zero],
                vec![zero, zero, one, zero],
                vec![zero, one, zero, zero],
                vec![zero, zero, zero, one],
            ]),
            GateKind::GlobalPhase(theta) => {
                Matrix::from_rows(&[vec![C64::from_polar(1.0, theta)]])
            }
        }
    }

    /// Whether the gate's unitary is diagonal. A controlled diagonal gate is
    /// itself diagonal, so callers may ignore controls when using this.
    pub fn is_diagonal(&self) -> bool {
        self.matrix().is_diagonal(MATRIX_EPS)
    }
}

/// Polarity of a control or guard: `Pos` fires on 1, `Neg` fires on 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn required_bit(&self) -> u8 {
        match self {
            Polarity::Pos => 1,
            Polarity::Neg => 0,
        }
    }

    pub fn flipped(&self) -> Polarity {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }

    pub fn from_bit(b: u8) -> Polarity {
        if b == 1 {
            Polarity::Pos
        } else {
            Polarity::Neg
        }
    }
}

/// A control site: a qubit index (quantum control) or register index
/// (classical guard), with a polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ctrl {
    pub index: usize,
    pub pol: Polarity,
}

impl Ctrl {
    pub fn pos(index: usize) -> Ctrl {
        Ctrl { index, pol: Polarity::Pos }
    }

    pub fn neg(index: usize) -> Ctrl {
        Ctrl { index, pol: Polarity::Neg }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Apply {
        gate: GateKind,
        targets: Vec<usize>,
        /// Quantum controls: (qubit, polarity), at most one entry per qubit.
        controls: Vec<Ctrl>,
        /// Classical guards: (register, polarity), at most one per register.
        guards: Vec<Ctrl>,
    },
    Measure {
        qubit: usize,
        register: usize,
    },
    Reset {
        qubit: usize,
    },
}

impl Instruction {
    pub fn apply(gate: GateKind, targets: Vec<usize>) -> Instruction {
        Instruction::Apply { gate, targets, controls: Vec::new(), guards: Vec::new() }
    }

    /// All qubits the instruction touches (targets, control qubits,
    /// measured/reset qubit).
    pub fn touched_qubits(&self) -> Vec<usize> {
        match self {
            Instruction::Apply { targets, controls, .. } => {
                let mut qs = targets.clone();
                qs.extend(controls.iter().map(|c| c.index));
                qs
            }
            Instruction::Measure { qubit, .. } | Instruction::Reset { qubit } => vec![*qubit],
        }
    }

    pub fn touches_qubit(&self, q: usize) -> bool {
        match self {
            Instruction::Apply { targets, controls, .. } => {
                targets.contains(&q) || controls.iter().any(|c| c.index == q)
            }
            Instruction::Measure { qubit, .. } | Instruction::Reset { qubit } => *qubit == q,
        }
    }

    /// Registers read by the instruction (guards).
    pub fn reads_register(&self, r: usize) -> bool {
        match self {
            Instruction::Apply { guards, .. } => guards.iter().any(|g| g.index == r),
            _ => false,
        }
    }

    /// Registers written by the instruction (measurement destination).
    pub fn writes_register(&self, r: usize) -> bool {
        matches!(self, Instruction::Measure { register, .. } if *register == r)
    }

    pub fn touches_register(&self, r: usize) -> bool {
        self.reads_register(r) || self.writes_register(r)
    }
}

/// A hybrid circuit over `n` qubits and `m` single-bit registers.
///
/// `global_phase` accumulates phases factored out by rewrites; it is
/// physically unobservable but kept so rewrites are exact as unitaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub m: usize,
    pub body: Vec<Instruction>,
    pub global_phase: f64,
}

/// Gate/measurement counts and dependency depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    /// Number of `Apply` instructions.
    pub gates: usize,
    /// `Apply` instructions with at least one quantum control.
    pub qcontrolled_gates: usize,
    /// `Apply` instructions with at least one guard and no quantum control.
    pub cguarded_gates: usize,
    pub measurements: usize,
    pub resets: usize,
    /// Longest chain of instructions linked by a shared qubit or register.
    pub depth: usize,
}

/// A structural problem found by [`Circuit::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// Instruction index, or `None` for circuit-level issues.
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "instruction {}: {}", i, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("splice window {start}..{end} out of range for body of length {len}")]
    SpliceOutOfRange { start: usize, end: usize, len: usize },
}

impl Circuit {
    pub fn new(n: usize, m: usize) -> Circuit {
        Circuit { n, m, body: Vec::new(), global_phase: 0.0 }
    }

    pub fn push(&mut self, instr: Instruction) -> &mut Self {
        self.body.push(instr);
        self
    }

    // Small builder helpers used by generators and tests.

    pub fn gate(&mut self, gate: GateKind, q: usize) -> &mut Self {
        self.push(Instruction::apply(gate, vec![q]))
    }

    pub fn h(&mut self, q: usize) -> &mut Self {
        self.gate(GateKind::H, q)
    }

    pub fn x(&mut self, q: usize) -> &mut Self {
        self.gate(GateKind::X, q)
    }

    pub fn z(&mut self, q: usize) -> &mut Self {
        self.gate(GateKind::Z, q)
    }

    pub fn controlled(&mut self, gate: GateKind, ctrl: usize, target: usize) -> &mut Self {
        self.push(Instruction::Apply {
            gate,
            targets: vec![target],
            controls: vec![Ctrl::pos(ctrl)],
            guards: Vec::new(),
        })
    }

    pub fn cx(&mut self, ctrl: usize, target: usize) -> &mut Self {
        self.controlled(GateKind::X, ctrl, target)
    }

    pub fn ccx(&mut self, c1: usize, c2: usize, target: usize) -> &mut Self {
        self.push(Instruction::Apply {
            gate: GateKind::X,
            targets: vec![target],
            controls: vec![Ctrl::pos(c1), Ctrl::pos(c2)],
            guards: Vec::new(),
        })
    }

    pub fn guarded(&mut self, gate: GateKind, reg: usize, target: usize) -> &mut Self {
        self.push(Instruction::Apply {
            gate,
            targets: vec![target],
            controls: Vec::new(),
            guards: vec![Ctrl::pos(reg)],
        })
    }

    pub fn measure(&mut self, qubit: usize, register: usize) -> &mut Self {
        self.push(Instruction::Measure { qubit, register })
    }

    pub fn reset(&mut self, qubit: usize) -> &mut Self {
        self.push(Instruction::Reset { qubit })
    }

    /// Appends a measurement of every qubit, `q_i → c_{base+i}`.
    pub fn measure_all(&mut self) -> &mut Self {
        for q in 0..self.n {
            self.measure(q, q);
        }
        self
    }

    /// Structural well-formedness: indices in range, targets and controls
    /// disjoint, at most one polarity per site.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut fail = |index: Option<usize>, message: String| {
            out.push(Diagnostic { index, message });
        };
        for (i, instr) in self.body.iter().enumerate() {
            match instr {
                Instruction::Apply { gate, targets, controls, guards } => {
                    if targets.len() != gate.arity() {
                        fail(
                            Some(i),
                            format!(
                                "gate {} expects {} target(s), got {}",
                                gate.name(),
                                gate.arity(),
                                targets.len()
                            ),
                        );
                    }
                    for &t in targets {
                        if t >= self.n {
                            fail(Some(i), format!("target qubit {t} out of range (n = {})", self.n));
                        }
                    }
                    let mut tset = targets.clone();
                    tset.sort_unstable();
                    tset.dedup();
                    if tset.len() != targets.len() {
                        fail(Some(i), "duplicate target qubit".into());
                    }
                    let mut seen_q = Vec::new();
                    for c in controls {
                        if c.index >= self.n {
                            fail(
                                Some(i),
                                format!("control qubit {} out of range (n = {})", c.index, self.n),
                            );
                        }
                        if targets.contains(&c.index) {
                            fail(Some(i), format!("qubit {} is both target and control", c.index));
                        }
                        if seen_q.contains(&c.index) {
                            fail(Some(i), format!("qubit {} controlled twice", c.index));
                        }
                        seen_q.push(c.index);
                    }
                    let mut seen_r = Vec::new();
                    for g in guards {
                        if g.index >= self.m {
                            fail(
                                Some(i),
                                format!("guard register {} out of range (m = {})", g.index, self.m),
                            );
                        }
                        if seen_r.contains(&g.index) {
                            fail(Some(i), format!("register {} guards twice", g.index));
                        }
                        seen_r.push(g.index);
                    }
                }
                Instruction::Measure { qubit, register } => {
                    if *qubit >= self.n {
                        fail(Some(i), format!("measured qubit {qubit} out of range (n = {})", self.n));
                    }
                    if *register >= self.m {
                        fail(
                            Some(i),
                            format!("measurement register {register} out of range (m = {})", self.m),
                        );
                    }
                }
                Instruction::Reset { qubit } => {
                    if *qubit >= self.n {
                        fail(Some(i), format!("reset qubit {qubit} out of range (n = {})", self.n));
                    }
                }
            }
        }
        out
    }

    pub fn metrics(&self) -> Metrics {
        let mut m = Metrics::default();
        // level per resource: qubits then registers
        let mut level = vec![0usize; self.n + self.m];
        for instr in &self.body {
            match instr {
                Instruction::Apply { controls, guards, .. } => {
                    m.gates += 1;
                    if !controls.is_empty() {
                        m.qcontrolled_gates += 1;
                    } else if !guards.is_empty() {
                        m.cguarded_gates += 1;
                    }
                }
                Instruction::Measure { .. } => m.measurements += 1,
                Instruction::Reset { .. } => m.resets += 1,
            }
            let mut touched: Vec<usize> = instr.touched_qubits();
            match instr {
                Instruction::Apply { guards, .. } => {
                    touched.extend(guards.iter().map(|g| self.n + g.index));
                }
                Instruction::Measure { register, .. } => touched.push(self.n + register),
                Instruction::Reset { .. } => {}
            }
            let d = 1 + touched.iter().map(|&r| level[r]).max().unwrap_or(0);
            for &r in &touched {
                level[r] = d;
            }
            m.depth = m.depth.max(d);
        }
        m
    }

    /// Replaces `body[start..end]` with `replacement`, returning the new
    /// circuit. Inverse-splicing the removed window restores the original.
    pub fn splice(
        &self,
        start: usize,
        end: usize,
        replacement: Vec<Instruction>,
    ) -> Result<Circuit, CircuitError> {
        if start > end || end > self.body.len() {
            return Err(CircuitError::SpliceOutOfRange { start, end, len: self.body.len() });
        }
        let mut out = self.clone();
        out.body.splice(start..end, replacement);
        Ok(out)
    }
}

/// Normalizes an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut t = theta % two_pi;
    if t <= -PI {
        t += two_pi;
    } else if t > PI {
        t -= two_pi;
    }
    // map -0.0 to 0.0 so comparisons stay exact
    if t == 0.0 {
        0.0
    } else {
        t
    }
}

/// Whether an angle is ≡ 0 (mod 2π) within `eps`.
pub fn angle_is_zero(theta: f64, eps: f64) -> bool {
    normalize_angle(theta).abs() <= eps
}
