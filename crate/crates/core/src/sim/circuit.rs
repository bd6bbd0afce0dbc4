//! Gate sequences with mid-circuit measurement and classical feedforward.

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::sim::{GateOp, StateVector};

/// One step of a circuit.
#[derive(Clone, Debug, PartialEq)]
pub enum CircuitStep {
    Gate(GateOp),
    /// Measures `target` in the computational basis, collapses the state and
    /// records the outcome bit in classical slot `slot`.
    Measure { target: usize, slot: usize },
    /// Applies `gate` only if classical slot `slot` currently holds `value`.
    IfBit { slot: usize, value: u8, gate: GateOp },
}

/// An ordered gate/measure/feedforward program over a fixed-width register
/// and a bank of classical bit slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    num_qubits: usize,
    num_classical: usize,
    steps: Vec<CircuitStep>,
}

impl Circuit {
    pub fn new(num_qubits: usize, num_classical: usize) -> Self {
        Circuit {
            num_qubits,
            num_classical,
            steps: Vec::new(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_classical(&self) -> usize {
        self.num_classical
    }

    pub fn steps(&self) -> &[CircuitStep] {
        &self.steps
    }

    pub fn push_gate(&mut self, gate: GateOp) {
        self.steps.push(CircuitStep::Gate(gate));
    }

    pub fn push(&mut self, step: CircuitStep) {
        self.steps.push(step);
    }

    /// Appends every step of `other`, which must agree on register widths.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::QubitCountMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        if other.num_classical > self.num_classical {
            return Err(Error::SlotIndex {
                slot: other.num_classical - 1,
                num_slots: self.num_classical,
            });
        }
        self.steps.extend(other.steps.iter().cloned());
        Ok(())
    }

    /// Static checks: every gate fits the register, every slot index is in
    /// range, and no `IfBit` reads a slot before some measurement writes it.
    pub fn validate(&self) -> Result<()> {
        let mut written = vec![false; self.num_classical];
        let check_slot = |slot: usize| {
            if slot < self.num_classical {
                Ok(())
            } else {
                Err(Error::SlotIndex {
                    slot,
                    num_slots: self.num_classical,
                })
            }
        };
        for step in &self.steps {
            match step {
                CircuitStep::Gate(gate) => gate.validate(self.num_qubits)?,
                CircuitStep::Measure { target, slot } => {
                    if *target >= self.num_qubits {
                        return Err(Error::QubitIndex {
                            index: *target,
                            num_qubits: self.num_qubits,
                        });
                    }
                    check_slot(*slot)?;
                    written[*slot] = true;
                }
                CircuitStep::IfBit { slot, value, gate } => {
                    check_slot(*slot)?;
                    if !written[*slot] {
                        return Err(Error::SlotUnwritten { slot: *slot });
                    }
                    if *value > 1 {
                        return Err(Error::InvalidValue {
                            what: "feedforward bit",
                            why: format!("slot {slot} compared against {value}, must be 0 or 1"),
                        });
                    }
                    gate.validate(self.num_qubits)?;
                }
            }
        }
        Ok(())
    }

    /// Runs every step in order against `state` and returns the classical
    /// slots after the final step. The rng is consumed only by `Measure`
    /// steps, so measurement-free circuits are deterministic.
    pub fn run(&self, state: &mut StateVector, rng: &mut impl Rng) -> Result<Vec<u8>> {
        if state.num_qubits() != self.num_qubits {
            return Err(Error::QubitCountMismatch {
                left: self.num_qubits,
                right: state.num_qubits(),
            });
        }
        self.validate()?;
        let mut bits = vec![0u8; self.num_classical];
        for step in &self.steps {
            match step {
                CircuitStep::Gate(gate) => state.apply(gate)?,
                CircuitStep::Measure { target, slot } => {
                    bits[*slot] = state.measure_collapse(*target, rng);
                }
                CircuitStep::IfBit { slot, value, gate } => {
                    if bits[*slot] == *value {
                        state.apply(gate)?;
                    }
                }
            }
        }
        Ok(bits)
    }

    /// Runs a measurement-free circuit on `|0...0>` and returns the final
    /// state. Rejects circuits containing `Measure` steps, since those would
    /// need a random source to be meaningful.
    pub fn run_pure(&self) -> Result<StateVector> {
        if self
            .steps
            .iter()
            .any(|step| matches!(step, CircuitStep::Measure { .. }))
        {
            return Err(Error::InvalidValue {
                what: "circuit",
                why: "run_pure requires a measurement-free circuit".into(),
            });
        }
        let mut state = StateVector::zero(self.num_qubits)?;
        // The rng is provably unused on a measurement-free circuit.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        self.run(&mut state, &mut rng)?;
        Ok(state)
    }
}
