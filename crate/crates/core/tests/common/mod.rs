//! Shared helpers for the integration suites: a seeded random-circuit
//! generator covering every instruction form, and a tiny timer.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dequant_core::circuit::{Circuit, Ctrl, GateKind, Instruction, Polarity};

/// Deterministic random hybrid circuit: gates from the full palette with up
/// to two controls of either polarity, optional register guards, plus
/// measurements and resets.
pub fn random_circuit(seed: u64, n: usize, m: usize, len: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n, m);
    for _ in 0..len {
        let roll: f64 = rng.gen();
        if m > 0 && roll < 0.20 {
            c.measure(rng.gen_range(0..n), rng.gen_range(0..m));
            continue;
        }
        if roll < 0.24 {
            c.reset(rng.gen_range(0..n));
            continue;
        }
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
            9 => GateKind::Rx(rng.gen_range(-3.0..3.0)),
            10 => GateKind::Ry(rng.gen_range(-3.0..3.0)),
            11 => GateKind::Rz(rng.gen_range(-3.0..3.0)),
            _ => GateKind::Swap,
        };
        let arity = gate.arity();
        if arity > n {
            continue;
        }
        let mut pool: Vec<usize> = (0..n).collect();
        pool.shuffle(&mut rng);
        let targets: Vec<usize> = pool.drain(..arity).collect();
        let mut controls = Vec::new();
        for _ in 0..2 {
            if !pool.is_empty() && rng.gen_bool(0.4) {
                let q = pool.remove(rng.gen_range(0..pool.len()));
                let pol = if rng.gen_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
                controls.push(Ctrl { index: q, pol });
            }
        }
        let mut guards = Vec::new();
        if m > 0 && rng.gen_bool(0.25) {
            let r = rng.gen_range(0..m);
            let pol = if rng.gen_bool(0.5) { Polarity::Pos } else { Polarity::Neg };
            guards.push(Ctrl { index: r, pol });
        }
        c.push(Instruction::Apply { gate, targets, controls, guards });
    }
    debug_assert!(c.validate().is_empty());
    c
}

/// Runs `f`, returning its result and the elapsed wall time in seconds.
#[allow(dead_code)] // each test target compiles this module separately; not all use it
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
