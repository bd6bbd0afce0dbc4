//! Dense statevector simulator.
//!
//! Qubit 0 is the least significant bit of a basis index, so basis state
//! `|q_{n-1} ... q_1 q_0>` lives at amplitude index `sum_i q_i * 2^i`.
//! States own `2^n` complex amplitudes and gates are applied in place.

mod circuit;
mod gate;
mod state;

pub use circuit::{Circuit, CircuitStep};
pub use gate::GateOp;
pub use state::{StateVector, MAX_QUBITS};
