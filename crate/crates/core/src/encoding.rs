//! Angle encoding of classical features and the controlled state preparation
//! that loads a whole triplet into one superposed register.
//!
//! Each scaled feature becomes one RY angle on one data qubit. The triplet
//! preparation drives two ancilla qubits into superposition and encodes
//! anchor, positive and negative under branch-selecting controls, so both
//! pair overlaps can later be read out from a single circuit.

use crate::error::{Error, Result};
use crate::sim::{Circuit, CircuitStep, GateOp, MAX_QUBITS};

/// A vector of per-qubit encoding angles (radians). Values are expected in
/// `[0, pi]` after scaling, but the type only enforces finiteness: gradient
/// and attack machinery legitimately shift individual angles outside that
/// window.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidValue {
                what: "feature vector",
                why: "must have at least one entry".into(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "feature vector",
                why: format!("non-finite entry {bad}"),
            });
        }
        Ok(FeatureVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with `values[k] += shift`; the shift acts on the stored angle.
    pub fn shifted(&self, k: usize, shift: f64) -> Result<Self> {
        if k >= self.values.len() {
            return Err(Error::InvalidValue {
                what: "feature index",
                why: format!("index {k} out of range for length {}", self.values.len()),
            });
        }
        let mut values = self.values.clone();
        values[k] += shift;
        FeatureVector::new(values)
    }
}

/// Qubit roles for the triplet circuit: `reg1` is the Hadamard-test ancilla,
/// `reg2` selects the positive/negative pair, `data` holds the sample
/// register. Spans exactly `d + 2` distinct qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct RegisterLayout {
    reg1: usize,
    reg2: usize,
    data: Vec<usize>,
}

impl RegisterLayout {
    /// The default packing: data on qubits `0..d`, ancillas on `d` and `d+1`.
    pub fn contiguous(num_data: usize) -> Result<Self> {
        if num_data == 0 || num_data + 2 > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: num_data + 2,
                max: MAX_QUBITS,
            });
        }
        Ok(RegisterLayout {
            reg1: num_data,
            reg2: num_data + 1,
            data: (0..num_data).collect(),
        })
    }

    pub fn new(reg1: usize, reg2: usize, data: Vec<usize>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidValue {
                what: "register layout",
                why: "data register must have at least one qubit".into(),
            });
        }
        let mut seen = vec![reg1, reg2];
        seen.extend_from_slice(&data);
        for (i, &q) in seen.iter().enumerate() {
            if seen[..i].contains(&q) {
                return Err(Error::DuplicateQubit { index: q });
            }
        }
        let layout = RegisterLayout { reg1, reg2, data };
        if layout.num_qubits() > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: layout.num_qubits(),
                max: MAX_QUBITS,
            });
        }
        Ok(layout)
    }

    pub fn reg1(&self) -> usize {
        self.reg1
    }

    pub fn reg2(&self) -> usize {
        self.reg2
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    pub fn num_data(&self) -> usize {
        self.data.len()
    }

    /// Register width needed to address every qubit in the layout.
    pub fn num_qubits(&self) -> usize {
        1 + *self
            .data
            .iter()
            .chain([&self.reg1, &self.reg2])
            .max()
            .expect("layout is nonempty")
    }

    /// Control pattern selecting the branch that carries `role`:
    /// anchor on reg1 = 0 (both reg2 branches), positive on (1, 0),
    /// negative on (1, 1).
    pub fn branch_controls(&self, role: TripletRole) -> Vec<(usize, u8)> {
        match role {
            TripletRole::Anchor => vec![(self.reg1, 0)],
            TripletRole::Positive => vec![(self.reg1, 1), (self.reg2, 0)],
            TripletRole::Negative => vec![(self.reg1, 1), (self.reg2, 1)],
        }
    }
}

/// The three roles a sample plays inside a triplet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripletRole {
    Anchor,
    Positive,
    Negative,
}

/// Appends one encoding pass: RY(x_j) on `data[j]`, promoted to CRY when
/// `controls` is nonempty. Shared by every builder in this module and by the
/// model's readout circuit.
pub(crate) fn push_encoding_gates(
    circuit: &mut Circuit,
    x: &FeatureVector,
    data: &[usize],
    controls: &[(usize, u8)],
) {
    for (&angle, &qubit) in x.values().iter().zip(data) {
        if controls.is_empty() {
            circuit.push_gate(GateOp::Ry {
                target: qubit,
                angle,
            });
        } else {
            circuit.push_gate(GateOp::Cry {
                controls: controls.to_vec(),
                target: qubit,
                angle,
            });
        }
    }
}

fn check_dimension(x: &FeatureVector, layout: &RegisterLayout) -> Result<()> {
    if x.len() != layout.num_data() {
        return Err(Error::DimensionMismatch {
            context: "feature map",
            expected: layout.num_data(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// The uncontrolled encoding pass U1(x): RY(x_j) on each data qubit. Applied
/// to `|0...0>` it prepares the product state with per-qubit amplitudes
/// `(cos(x_j/2), sin(x_j/2))`.
pub fn feature_map(x: &FeatureVector, layout: &RegisterLayout) -> Result<Circuit> {
    check_dimension(x, layout)?;
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    push_encoding_gates(&mut circuit, x, layout.data(), &[]);
    Ok(circuit)
}

/// The encoding pass with every RY promoted to a controlled rotation: acts as
/// `feature_map(x)` on branches where all controls match and as the identity
/// elsewhere. With no controls it degenerates to `feature_map` exactly.
pub fn controlled_feature_map(
    x: &FeatureVector,
    controls: &[(usize, u8)],
    layout: &RegisterLayout,
) -> Result<Circuit> {
    check_dimension(x, layout)?;
    for &(qubit, _) in controls {
        if layout.data().contains(&qubit) {
            return Err(Error::DuplicateQubit { index: qubit });
        }
    }
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    push_encoding_gates(&mut circuit, x, layout.data(), controls);
    Ok(circuit)
}

/// Loads a whole triplet into superposition: H on both ancillas, then each
/// sample encoded under its branch controls. On `|0...0>` this prepares
///
/// ```text
/// (1/2) (|r1=0,r2=0>|phi_a> + |r1=0,r2=1>|phi_a>
///      + |r1=1,r2=0>|phi_p> + |r1=1,r2=1>|phi_n>)
/// ```
///
/// where `|phi_x>` is the `feature_map(x)` state on the data register.
pub fn prepare_triplet_superposition(
    a: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    layout: &RegisterLayout,
) -> Result<Circuit> {
    for x in [a, p, n] {
        check_dimension(x, layout)?;
    }
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    circuit.push_gate(GateOp::H {
        target: layout.reg1(),
    });
    circuit.push_gate(GateOp::H {
        target: layout.reg2(),
    });
    for (x, role) in [
        (a, TripletRole::Anchor),
        (p, TripletRole::Positive),
        (n, TripletRole::Negative),
    ] {
        let controls = layout.branch_controls(role);
        push_encoding_gates(&mut circuit, x, layout.data(), &controls);
    }
    Ok(circuit)
}

/// The single-qubit unitary applied to the partner qubit when a
/// dimension-reduction measurement reads 1.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum CorrectionTemplate {
    #[default]
    X,
    Ry { angle: f64 },
    Rz { angle: f64 },
}

impl CorrectionTemplate {
    fn instantiate(&self, target: usize) -> GateOp {
        match self {
            CorrectionTemplate::X => GateOp::X { target },
            CorrectionTemplate::Ry { angle } => GateOp::Ry {
                target,
                angle: *angle,
            },
            CorrectionTemplate::Rz { angle } => GateOp::Rz {
                target,
                angle: *angle,
            },
        }
    }
}

/// Shrinks the data register by measuring one qubit of each pair and applying
/// a classically controlled correction to its partner when the outcome is 1.
/// Measured qubits must be dropped from any downstream data-qubit set.
pub fn dimension_reduction(
    layout: &RegisterLayout,
    pairs: &[(usize, usize)],
    correction: &CorrectionTemplate,
) -> Result<Circuit> {
    let mut used = Vec::new();
    for &(measured, partner) in pairs {
        for qubit in [measured, partner] {
            if !layout.data().contains(&qubit) {
                return Err(Error::QubitIndex {
                    index: qubit,
                    num_qubits: layout.num_qubits(),
                });
            }
            if used.contains(&qubit) {
                return Err(Error::DuplicateQubit { index: qubit });
            }
            used.push(qubit);
        }
    }
    let mut circuit = Circuit::new(layout.num_qubits(), pairs.len());
    for (slot, &(measured, partner)) in pairs.iter().enumerate() {
        circuit.push(CircuitStep::Measure {
            target: measured,
            slot,
        });
        circuit.push(CircuitStep::IfBit {
            slot,
            value: 1,
            gate: correction.instantiate(partner),
        });
    }
    Ok(circuit)
}
