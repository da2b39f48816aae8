//! Deterministic benchmark circuit families.
//!
//! Every family is a pure function of `(family, size)`: pseudo-random choices
//! (oracle masks, phase patterns) come from a splitmix64 hash of the size, so
//! repeated runs and different machines see identical circuits.  All families
//! end by measuring every qubit into the register of the same index.

use thiserror::Error;

use crate::circuit::{Circuit, GateKind};

/// Families [`build`] understands, in canonical order.
pub const FAMILIES: &[&str] = &["ghz", "wstate", "bv", "dj", "qft", "qpe", "adder"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("unknown circuit family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` needs size >= {min}, got {size}")]
    SizeTooSmall { family: &'static str, size: usize, min: usize },
    #[error("family `adder` needs an even size (carry-in + two k-bit registers + carry-out)")]
    OddAdderSize { size: usize },
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Build the `family` circuit on `size` qubits (and as many registers).
pub fn build(family: &str, size: usize) -> Result<Circuit, GenError> {
    match family {
        "ghz" => ghz(size),
        "wstate" => wstate(size),
        "bv" => bv(size),
        "dj" => dj(size),
        "qft" => qft(size),
        "qpe" => qpe(size),
        "adder" => adder(size),
        other => Err(GenError::UnknownFamily(other.to_string())),
    }
}

fn need(family: &'static str, size: usize, min: usize) -> Result<(), GenError> {
    if size < min {
        Err(GenError::SizeTooSmall { family, size, min })
    } else {
        Ok(())
    }
}

/// Cat state: H then a CX chain, measured out.
fn ghz(n: usize) -> Result<Circuit, GenError> {
    need("ghz", n, 2)?;
    let mut c = Circuit::new(n, n);
    c.h(0);
    for i in 0..n - 1 {
        c.cx(i, i + 1);
    }
    c.measure_all();
    Ok(c)
}

/// Equal superposition of the n one-hot strings, built by a chain of
/// controlled Y-rotations that each split off amplitude 1/(n-i), followed by
/// a CX handing the excitation onward.
fn wstate(n: usize) -> Result<Circuit, GenError> {
    need("wstate", n, 2)?;
    let mut c = Circuit::new(n, n);
    c.x(0);
    for i in 0..n - 1 {
        let keep = (1.0 / (n - i) as f64).sqrt();
        let theta = 2.0 * keep.acos();
        c.controlled(GateKind::Ry(theta), i, i + 1);
        c.cx(i + 1, i);
    }
    c.measure_all();
    Ok(c)
}

/// Size-keyed nonzero bitmask over `bits` positions.
fn oracle_mask(bits: usize, seed: u64) -> u64 {
    let mask = splitmix64(seed) & ((1u64 << bits) - 1);
    if mask == 0 {
        1
    } else {
        mask
    }
}

/// Hidden-string circuit: phase-kickback oracle of CXs into a |-> ancilla
/// between two Hadamard layers on the data qubits.  The data measurement
/// reproduces the mask with certainty.
fn bv(n: usize) -> Result<Circuit, GenError> {
    need("bv", n, 2)?;
    let data = n - 1;
    let anc = n - 1;
    let mask = oracle_mask(data, n as u64);
    let mut c = Circuit::new(n, n);
    c.x(anc);
    for q in 0..n {
        c.h(q);
    }
    for i in 0..data {
        if (mask >> i) & 1 == 1 {
            c.cx(i, anc);
        }
    }
    for i in 0..data {
        c.h(i);
    }
    c.measure_all();
    Ok(c)
}

/// Constant-versus-balanced test instantiated with a balanced (linear,
/// nonzero-mask) oracle, so the all-zeros data outcome has probability zero.
fn dj(n: usize) -> Result<Circuit, GenError> {
    need("dj", n, 2)?;
    let data = n - 1;
    let anc = n - 1;
    let mask = oracle_mask(data, (n as u64) ^ 0xd1b5_4a32_d192_ed03);
    let mut c = Circuit::new(n, n);
    c.x(anc);
    for q in 0..n {
        c.h(q);
    }
    for i in 0..data {
        if (mask >> i) & 1 == 1 {
            c.cx(i, anc);
        }
    }
    for i in 0..data {
        c.h(i);
    }
    c.measure_all();
    Ok(c)
}

fn qft_block(c: &mut Circuit, qubits: &[usize]) {
    let k = qubits.len();
    for i in 0..k {
        c.h(qubits[i]);
        for j in (i + 1)..k {
            let theta = std::f64::consts::PI / (1u64 << (j - i)) as f64;
            c.controlled(GateKind::Phase(theta), qubits[j], qubits[i]);
        }
    }
    for i in 0..k / 2 {
        c.push(crate::circuit::Instruction::apply(
            GateKind::Swap,
            vec![qubits[i], qubits[k - 1 - i]],
        ));
    }
}

fn inverse_qft_block(c: &mut Circuit, qubits: &[usize]) {
    let k = qubits.len();
    for i in 0..k / 2 {
        c.push(crate::circuit::Instruction::apply(
            GateKind::Swap,
            vec![qubits[i], qubits[k - 1 - i]],
        ));
    }
    for i in (0..k).rev() {
        for j in ((i + 1)..k).rev() {
            let theta = -std::f64::consts::PI / (1u64 << (j - i)) as f64;
            c.controlled(GateKind::Phase(theta), qubits[j], qubits[i]);
        }
        c.h(qubits[i]);
    }
}

/// Fourier transform of the all-zeros state, measured out (uniform outcome).
fn qft(n: usize) -> Result<Circuit, GenError> {
    need("qft", n, 2)?;
    let mut c = Circuit::new(n, n);
    let qubits: Vec<usize> = (0..n).collect();
    qft_block(&mut c, &qubits);
    c.measure_all();
    Ok(c)
}

/// The (size-1)-bit pattern the phase-estimation family encodes; its counting
/// register measures to exactly this value.
pub(crate) fn qpe_pattern(size: usize) -> u64 {
    let k = size - 1;
    let p = splitmix64((size as u64) ^ 0x5851_f42d_4c95_7f2d) & ((1u64 << k) - 1);
    if p == 0 {
        1
    } else {
        p
    }
}

/// Phase estimation of a diagonal phase gate on a |1> eigenstate.  The phase
/// is an exact (size-1)-bit fraction, so the counting register peaks with
/// probability one.
fn qpe(size: usize) -> Result<Circuit, GenError> {
    need("qpe", size, 2)?;
    let k = size - 1;
    let eigen = k;
    let phi = qpe_pattern(size) as f64 / (1u64 << k) as f64;
    let mut c = Circuit::new(size, size);
    c.x(eigen);
    for q in 0..k {
        c.h(q);
    }
    for j in 0..k {
        let theta = 2.0 * std::f64::consts::PI * phi * (1u64 << j) as f64;
        c.controlled(GateKind::Phase(theta), j, eigen);
    }
    // The block conjugates the little-endian transform by wire reversal, so
    // handing it the reversed wire list yields the exact inverse of the
    // product-form state the controlled phases created.
    let counting: Vec<usize> = (0..k).rev().collect();
    inverse_qft_block(&mut c, &counting);
    c.measure_all();
    Ok(c)
}

/// Ripple-carry adder (majority/unmajority ladder) on two k-bit registers
/// plus carry-in and carry-out, k = (size - 2) / 2.  Layout: qubit 0 is the
/// carry-in, then b_i and a_i interleaved, with the carry-out last; the sum
/// lands in the b wires.
fn adder(size: usize) -> Result<Circuit, GenError> {
    need("adder", size, 4)?;
    if size % 2 != 0 {
        return Err(GenError::OddAdderSize { size });
    }
    let k = (size - 2) / 2;
    let b = |i: usize| 1 + 2 * i;
    let a = |i: usize| 2 + 2 * i;
    let cout = size - 1;
    let mut c = Circuit::new(size, size);

    let maj = |c: &mut Circuit, carry: usize, bi: usize, ai: usize| {
        c.cx(ai, bi);
        c.cx(ai, carry);
        c.ccx(carry, bi, ai);
    };
    let uma = |c: &mut Circuit, carry: usize, bi: usize, ai: usize| {
        c.ccx(carry, bi, ai);
        c.cx(ai, carry);
        c.cx(carry, bi);
    };

    maj(&mut c, 0, b(0), a(0));
    for i in 1..k {
        maj(&mut c, a(i - 1), b(i), a(i));
    }
    c.cx(a(k - 1), cout);
    for i in (1..k).rev() {
        uma(&mut c, a(i - 1), b(i), a(i));
    }
    uma(&mut c, 0, b(0), a(0));
    c.measure_all();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Instruction;
    use crate::sim::outcome_distribution;

    fn distribution(c: &Circuit) -> std::collections::BTreeMap<u64, f64> {
        outcome_distribution(c, 12).expect("oracle ran")
    }

    #[test]
    fn ghz_measures_all_zero_or_all_one() {
        let c = build("ghz", 4).unwrap();
        let d = distribution(&c);
        assert_eq!(d.len(), 2);
        assert!((d[&0b0000] - 0.5).abs() < 1e-12);
        assert!((d[&0b1111] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wstate_measures_one_hot_strings_uniformly() {
        let n = 4;
        let c = build("wstate", n).unwrap();
        let d = distribution(&c);
        assert_eq!(d.len(), n);
        for i in 0..n {
            let key = 1u64 << i;
            assert!((d[&key] - 1.0 / n as f64).abs() < 1e-9, "missing one-hot {i}");
        }
    }

    #[test]
    fn bv_data_bits_reveal_the_mask_with_certainty() {
        for n in [3usize, 5, 8] {
            let c = build("bv", n).unwrap();
            let data_bits = (n - 1) as u64;
            let mask = oracle_mask(n - 1, n as u64);
            let d = distribution(&c);
            let data_prob: f64 = d
                .iter()
                .filter(|(k, _)| *k & ((1u64 << data_bits) - 1) == mask)
                .map(|(_, p)| p)
                .sum();
            assert!((data_prob - 1.0).abs() < 1e-9, "size {n}: mask not certain");
        }
    }

    #[test]
    fn dj_never_reports_all_zero_data() {
        for n in [3usize, 4, 6] {
            let c = build("dj", n).unwrap();
            let data_bits = (n - 1) as u64;
            let d = distribution(&c);
            let zero_prob: f64 = d
                .iter()
                .filter(|(k, _)| *k & ((1u64 << data_bits) - 1) == 0)
                .map(|(_, p)| p)
                .sum();
            assert!(zero_prob < 1e-12, "balanced oracle must exclude all-zeros");
        }
    }

    #[test]
    fn qft_of_zeros_is_uniform() {
        let n = 4;
        let c = build("qft", n).unwrap();
        let d = distribution(&c);
        assert_eq!(d.len(), 1 << n);
        for (_, p) in d {
            assert!((p - 1.0 / (1 << n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn qpe_peaks_at_the_encoded_pattern() {
        for size in 2..=4usize {
            let c = build("qpe", size).unwrap();
            let k = size - 1;
            let want = qpe_pattern(size) | (1u64 << k); // eigen qubit reads 1
            let d = distribution(&c);
            let p = d.get(&want).copied().unwrap_or(0.0);
            assert!((p - 1.0).abs() < 1e-9, "size {size}: peak {p} at {want:#b}, dist {d:?}");
        }
    }

    #[test]
    fn adder_sums_into_the_b_wires() {
        // size 6 => k = 2. Prepare a = 3, b = 1 by prepending X gates, then
        // check b' = (a + b) mod 4 and carry-out = 1, with a restored.
        let mut c = build("adder", 6).unwrap();
        let xs = vec![
            Instruction::apply(GateKind::X, vec![2]), // a0
            Instruction::apply(GateKind::X, vec![4]), // a1
            Instruction::apply(GateKind::X, vec![1]), // b0
        ];
        for (i, x) in xs.into_iter().enumerate() {
            c.body.insert(i, x);
        }
        let d = distribution(&c);
        assert_eq!(d.len(), 1);
        let (&key, &p) = d.iter().next().unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        // 3 + 1 = 4 = carry 1, sum bits 00; a wires restored to 3.
        let bit = |q: usize| (key >> q) & 1;
        assert_eq!(bit(1), 0, "b0");
        assert_eq!(bit(3), 0, "b1");
        assert_eq!(bit(5), 1, "carry-out");
        assert_eq!(bit(2), 1, "a0 restored");
        assert_eq!(bit(4), 1, "a1 restored");
        assert_eq!(bit(0), 0, "carry-in restored");
    }

    #[test]
    fn families_are_deterministic_and_valid() {
        for family in FAMILIES {
            for size in 2..=8usize {
                match build(family, size) {
                    Ok(c) => {
                        assert!(c.validate().is_empty(), "{family}/{size} invalid");
                        let again = build(family, size).unwrap();
                        assert_eq!(c, again, "{family}/{size} not deterministic");
                        assert_eq!(c.metrics().measurements, c.n);
                    }
                    Err(GenError::SizeTooSmall { .. } | GenError::OddAdderSize { .. }) => {}
                    Err(e) => panic!("{family}/{size}: {e}"),
                }
            }
        }
    }

    #[test]
    fn unknown_family_is_rejected() {
        assert!(matches!(build("nope", 3), Err(GenError::UnknownFamily(_))));
    }
}
