//! Property-based invariants: the text format round-trips, angle rendering
//! is lossless, and splice behaves like the equivalent Vec surgery.

mod common;

use proptest::prelude::*;

use dequant_core::circuit::{GateKind, Instruction};
use dequant_core::qasm;

use common::random_circuit;

proptest! {
    /// Emitting and re-parsing any generated circuit reproduces it exactly,
    /// including control polarities, guards, and the body order.
    #[test]
    fn qasm_round_trips(seed in any::<u64>(), n in 1..6usize, m in 0..4usize, len in 0..30usize) {
        let c = random_circuit(seed, n, m, len);
        let text = qasm::emit(&c);
        let back = qasm::parse(&text).unwrap_or_else(|e| panic!("re-parse failed: {e}\n{text}"));
        prop_assert!(back.warnings.is_empty(), "round trip warned: {:?}", back.warnings);
        prop_assert_eq!(back.circuit, c, "text:\n{}", text);
    }

    /// The accumulated global phase survives a round trip bit-exactly.
    #[test]
    fn global_phase_round_trips(seed in any::<u64>(), millis in -3141i32..=3141) {
        let mut c = random_circuit(seed, 2, 1, 6);
        c.global_phase = millis as f64 / 1000.0;
        let text = qasm::emit(&c);
        let back = qasm::parse(&text).unwrap().circuit;
        prop_assert_eq!(back.global_phase.to_bits(), c.global_phase.to_bits(), "text:\n{}", text);
    }

    /// Angle rendering re-evaluates to the same floating-point value, both
    /// for pi fractions and arbitrary reals.
    #[test]
    fn angle_strings_are_lossless(theta in -10.0f64..10.0) {
        for angle in [theta, theta * std::f64::consts::PI / 4.0] {
            let text = format!("qubit[1] q; p({}) q[0];", qasm::angle_string(angle));
            let c = qasm::parse(&text).unwrap().circuit;
            let Instruction::Apply { gate: GateKind::Phase(got), .. } = c.body[0] else {
                panic!("expected a phase gate from {text}")
            };
            prop_assert_eq!(got.to_bits(), angle.to_bits(), "text: {}", text);
        }
    }

    /// Splice agrees with performing the same surgery on the body vector,
    /// and out-of-range requests fail instead of truncating.
    #[test]
    fn splice_matches_vec_surgery(
        seed in any::<u64>(),
        len in 0..20usize,
        cut in any::<(u16, u16)>(),
        insert_x in proptest::bool::ANY,
    ) {
        let c = random_circuit(seed, 3, 2, len);
        let start = (cut.0 as usize) % (c.body.len() + 1);
        let end = start + (cut.1 as usize) % (c.body.len() - start + 1);
        let replacement = if insert_x {
            vec![Instruction::apply(GateKind::X, vec![0])]
        } else {
            Vec::new()
        };

        let spliced = c.splice(start, end, replacement.clone()).expect("in range");
        let mut want = c.body.clone();
        want.splice(start..end, replacement);
        prop_assert_eq!(&spliced.body, &want);
        prop_assert_eq!(spliced.n, c.n);
        prop_assert_eq!(spliced.m, c.m);
        prop_assert!(spliced.validate().is_empty());

        prop_assert!(c.splice(start, c.body.len() + 1, Vec::new()).is_err());
        prop_assert!(c.splice(c.body.len() + 1, c.body.len() + 1, Vec::new()).is_err());
        if start < end {
            prop_assert!(c.splice(end, start, Vec::new()).is_err());
        }
    }
}
