//! Gate vocabulary.

use crate::error::{Error, Result};

/// A single gate acting on named qubits. Angles are in radians.
///
/// `RY(phi)` is `[[cos(phi/2), -sin(phi/2)], [sin(phi/2), cos(phi/2)]]`, so
/// `RY(phi)|0>` has all-real amplitudes `(cos(phi/2), sin(phi/2))`.
#[derive(Clone, Debug, PartialEq)]
pub enum GateOp {
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    H { target: usize },
    X { target: usize },
    Cnot { control: usize, target: usize },
    Cz { a: usize, b: usize },
    /// Multi-controlled RY. Each control is `(qubit, required_bit)` and the
    /// rotation fires only on basis states where every control qubit holds its
    /// required bit, so a `required_bit` of 0 is an anti-control.
    Cry {
        controls: Vec<(usize, u8)>,
        target: usize,
        angle: f64,
    },
}

impl GateOp {
    /// Checks all qubit indices against a register of `num_qubits` qubits and
    /// rejects overlapping operands and control bits outside {0, 1}.
    pub fn validate(&self, num_qubits: usize) -> Result<()> {
        let check = |index: usize| {
            if index < num_qubits {
                Ok(())
            } else {
                Err(Error::QubitIndex { index, num_qubits })
            }
        };
        match self {
            GateOp::Ry { target, .. }
            | GateOp::Rz { target, .. }
            | GateOp::H { target }
            | GateOp::X { target } => check(*target),
            GateOp::Cnot { control, target } => {
                check(*control)?;
                check(*target)?;
                if control == target {
                    return Err(Error::DuplicateQubit { index: *target });
                }
                Ok(())
            }
            GateOp::Cz { a, b } => {
                check(*a)?;
                check(*b)?;
                if a == b {
                    return Err(Error::DuplicateQubit { index: *a });
                }
                Ok(())
            }
            GateOp::Cry {
                controls, target, ..
            } => {
                check(*target)?;
                for (i, &(qubit, bit)) in controls.iter().enumerate() {
                    check(qubit)?;
                    if bit > 1 {
                        return Err(Error::InvalidValue {
                            what: "control bit",
                            why: format!("qubit {qubit} requires bit {bit}, must be 0 or 1"),
                        });
                    }
                    if qubit == *target || controls[..i].iter().any(|&(q, _)| q == qubit) {
                        return Err(Error::DuplicateQubit { index: qubit });
                    }
                }
                Ok(())
            }
        }
    }

    /// The inverse gate. Every member of this vocabulary is either
    /// self-inverse or inverted by negating its angle.
    pub fn inverse(&self) -> GateOp {
        match self {
            GateOp::Ry { target, angle } => GateOp::Ry {
                target: *target,
                angle: -angle,
            },
            GateOp::Rz { target, angle } => GateOp::Rz {
                target: *target,
                angle: -angle,
            },
            GateOp::Cry {
                controls,
                target,
                angle,
            } => GateOp::Cry {
                controls: controls.clone(),
                target: *target,
                angle: -angle,
            },
            other => other.clone(),
        }
    }
}
