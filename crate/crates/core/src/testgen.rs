//! Deterministic random-circuit source for in-crate tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Ctrl, GateKind, Instruction, Polarity};

/// Build a valid random circuit with `len` instructions over `n >= 2` qubits
/// and `m` registers.  The same seed always yields the same circuit.
pub(crate) fn random_circuit(seed: u64, n: usize, m: usize, len: usize) -> Circuit {
    assert!(n >= 2, "need at least two qubits for two-qubit gates");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n, m);
    while c.body.len() < len {
        let roll: f64 = rng.gen();
        if m > 0 && roll < 0.20 {
            c.measure(rng.gen_range(0..n), rng.gen_range(0..m));
        } else if roll < 0.24 {
            c.reset(rng.gen_range(0..n));
        } else {
            let gate = match rng.gen_range(0..13) {
                0 => GateKind::H,
                1 => GateKind::X,
                2 => GateKind::Y,
                3 => GateKind::Z,
                4 => GateKind::S,
                5 => GateKind::Sdg,
                6 => GateKind::T,
                7 => GateKind::Tdg,
                8 => GateKind::Phase(rng.gen_range(-3.0..3.0)),
                9 => GateKind::Rz(rng.gen_range(-3.0..3.0)),
                10 => GateKind::Rx(rng.gen_range(-3.0..3.0)),
                11 => GateKind::Ry(rng.gen_range(-3.0..3.0)),
                12 => GateKind::Swap,
                _ => unreachable!(),
            };
            let mut free: Vec<usize> = (0..n).collect();
            free.shuffle(&mut rng);
            let targets: Vec<usize> = free.drain(..gate.arity()).collect();
            let mut controls = Vec::new();
            while !free.is_empty() && controls.len() < 2 && rng.gen_bool(0.4) {
                let pol = if rng.gen_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
                controls.push(Ctrl { index: free.remove(0), pol });
            }
            let mut guards = Vec::new();
            if m > 0 && rng.gen_bool(0.25) {
                let pol = if rng.gen_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
                guards.push(Ctrl { index: rng.gen_range(0..m), pol });
            }
            c.push(Instruction::Apply { gate, targets, controls, guards });
        }
    }
    debug_assert!(c.validate().is_empty(), "generator produced an invalid circuit");
    c
}
