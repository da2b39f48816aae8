//! De-quantization toolkit for hybrid quantum-classical circuits.
//!
//! The crate tracks an exact machine state (quantum amplitudes plus
//! correlated classical registers) through a circuit and uses the facts it
//! proves to delete gates, delete controls, and replace quantum controls
//! with classical register guards — turning static circuits into cheaper
//! dynamic ones without changing their observable behavior.
//!
//! Modules, bottom-up:
//! - [`linalg`]: small dense complex matrices for gate algebra.
//! - [`circuit`]: the instruction-level IR and resource metrics.
//! - [`qasm`]: OpenQASM 3 subset parser and emitter.
//! - [`sim`]: reference interpreter over distributions of hybrid states.
//! - [`table`]: the union table — a partition of qubits/registers into
//!   entanglement groups, each carrying a bounded local machine state.
//! - [`lifting`]: measurement lifting and Hadamard lifting peepholes.
//! - [`constprop`]: constant-propagation rewrites driven by the table.
//! - [`generators`]: deterministic benchmark circuit families.
//! - [`pipeline`]: pass alternation, verification, and reporting.

pub mod circuit;
pub mod constprop;
pub mod generators;
pub mod lifting;
pub mod linalg;
pub mod pipeline;
pub mod qasm;
pub mod sim;
pub mod table;

#[cfg(test)]
mod testgen;
