//! The trainable metric: layered ansatz, repeated-encoding embedding,
//! superposed Hadamard-test readout of both pair overlaps, angular distances
//! and the triplet hinge loss.
//!
//! The readout runs one circuit per triplet. After the branch-controlled
//! encodings and the final Hadamard on reg1, the joint ancilla distribution
//! satisfies `P(0,b) - P(1,b) = Re<A|B_b>/2` and `P(0,b) + P(1,b) = 1/2`, so
//! the conditioned estimator `(P(0,b) - P(1,b)) / (P(0,b) + P(1,b))` equals
//! the embedding overlap exactly in exact mode and is consistent under shots.

use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{ScalingModel, TripletSet};
use crate::encoding::{push_encoding_gates, FeatureVector, RegisterLayout, TripletRole};
use crate::error::{Error, Result};
use crate::sim::{Circuit, GateOp, StateVector};

/// Entangling pattern appended after each rotation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    Ring,
    Line,
}

/// Shape of the trainable circuit W(theta): `num_layers` layers, each one RY
/// per data qubit followed by fixed entangling CNOTs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    #[serde(rename = "layers")]
    pub num_layers: usize,
    #[serde(rename = "qubits")]
    pub num_data_qubits: usize,
    pub entangler: Entangler,
}

impl AnsatzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::InvalidValue {
                what: "ansatz",
                why: "num_layers must be at least 1".into(),
            });
        }
        if self.num_data_qubits == 0 {
            return Err(Error::InvalidValue {
                what: "ansatz",
                why: "num_data_qubits must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.num_layers * self.num_data_qubits
    }
}

/// Flat parameter vector, row-major layer-then-qubit: theta[l][j] lives at
/// index `l * d + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "parameter vector",
                why: format!("non-finite entry {bad}"),
            });
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(len: usize) -> Self {
        ParamVector {
            values: vec![0.0; len],
        }
    }

    /// Random initialization uniform on [-pi/10, pi/10]: small angles keep
    /// the initial embedding close to the bare feature map and away from flat
    /// gradient regions.
    pub fn init_small(len: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = std::f64::consts::PI / 10.0;
        ParamVector {
            values: (0..len).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Copy with `values[k] += shift`.
    pub fn shifted(&self, k: usize, shift: f64) -> Result<Self> {
        if k >= self.values.len() {
            return Err(Error::InvalidValue {
                what: "parameter index",
                why: format!("index {k} out of range for length {}", self.values.len()),
            });
        }
        let mut values = self.values.clone();
        values[k] += shift;
        ParamVector::new(values)
    }
}

/// The full trainable metric.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricModel {
    pub ansatz: AnsatzConfig,
    pub theta: ParamVector,
    pub layout: RegisterLayout,
    pub margin: f64,
}

impl MetricModel {
    pub fn new(
        ansatz: AnsatzConfig,
        theta: ParamVector,
        layout: RegisterLayout,
        margin: f64,
    ) -> Result<Self> {
        ansatz.validate()?;
        if theta.len() != ansatz.param_count() {
            return Err(Error::DimensionMismatch {
                context: "ansatz parameters",
                expected: ansatz.param_count(),
                actual: theta.len(),
            });
        }
        if layout.num_data() != ansatz.num_data_qubits {
            return Err(Error::DimensionMismatch {
                context: "layout data register",
                expected: ansatz.num_data_qubits,
                actual: layout.num_data(),
            });
        }
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(Error::InvalidValue {
                what: "margin",
                why: format!("must be finite and >= 0, got {margin}"),
            });
        }
        Ok(MetricModel {
            ansatz,
            theta,
            layout,
            margin,
        })
    }

    /// Convenience constructor with the contiguous d-data-qubit layout.
    pub fn with_default_layout(
        ansatz: AnsatzConfig,
        theta: ParamVector,
        margin: f64,
    ) -> Result<Self> {
        let layout = RegisterLayout::contiguous(ansatz.num_data_qubits)?;
        MetricModel::new(ansatz, theta, layout, margin)
    }

    /// Same model with replaced parameters.
    pub fn with_theta(&self, theta: ParamVector) -> Result<Self> {
        MetricModel::new(self.ansatz.clone(), theta, self.layout.clone(), self.margin)
    }
}

/// Both pair readouts of one triplet: raw overlaps `s` and angular distances
/// `d = 1 - |s|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistancePair {
    pub d_p: f64,
    pub d_n: f64,
    pub s_p: f64,
    pub s_n: f64,
}

/// One triplet's contribution to a loss report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletTerm {
    pub d_p: f64,
    pub d_n: f64,
    pub active: bool,
}

/// Batch loss plus per-triplet diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub per_triplet: Vec<TripletTerm>,
}

/// How measurement statistics are extracted: exact probabilities from the
/// statevector, or frequencies from seeded shot sampling.
pub enum EvalMode<'a> {
    Exact,
    Shots {
        shots: usize,
        rng: &'a mut dyn RngCore,
    },
}

impl EvalMode<'_> {
    fn outcome_probs(&mut self, state: &StateVector, qubits: &[usize]) -> Result<Vec<f64>> {
        match self {
            EvalMode::Exact => state.probabilities(qubits),
            EvalMode::Shots { shots, rng } => {
                let counts = state.sample_shots(qubits, *shots, &mut **rng)?;
                let mut probs = vec![0.0; 1 << qubits.len()];
                for (outcome, count) in counts {
                    probs[outcome] = count as f64 / *shots as f64;
                }
                Ok(probs)
            }
        }
    }
}

/// Appends one ansatz pass: per layer, RY(theta[l][j]) on `data[j]` then the
/// entangler CNOTs. Ring entangling wraps around except at d = 2, where the
/// wrap gate would duplicate the (0, 1) pair; d = 1 has no entangler at all.
pub(crate) fn push_ansatz_gates(
    circuit: &mut Circuit,
    cfg: &AnsatzConfig,
    theta: &ParamVector,
    data: &[usize],
) {
    let d = data.len();
    for layer in 0..cfg.num_layers {
        for (j, &qubit) in data.iter().enumerate() {
            circuit.push_gate(GateOp::Ry {
                target: qubit,
                angle: theta.values()[layer * d + j],
            });
        }
        match cfg.entangler {
            Entangler::Ring => {
                if d == 2 {
                    circuit.push_gate(GateOp::Cnot {
                        control: data[0],
                        target: data[1],
                    });
                } else if d >= 3 {
                    for j in 0..d {
                        circuit.push_gate(GateOp::Cnot {
                            control: data[j],
                            target: data[(j + 1) % d],
                        });
                    }
                }
            }
            Entangler::Line => {
                for j in 0..d.saturating_sub(1) {
                    circuit.push_gate(GateOp::Cnot {
                        control: data[j],
                        target: data[j + 1],
                    });
                }
            }
        }
    }
}

/// The trainable circuit W(theta) on the layout's data qubits.
pub fn ansatz_circuit(
    cfg: &AnsatzConfig,
    theta: &ParamVector,
    layout: &RegisterLayout,
) -> Result<Circuit> {
    cfg.validate()?;
    if theta.len() != cfg.param_count() {
        return Err(Error::DimensionMismatch {
            context: "ansatz parameters",
            expected: cfg.param_count(),
            actual: theta.len(),
        });
    }
    if layout.num_data() != cfg.num_data_qubits {
        return Err(Error::DimensionMismatch {
            context: "layout data register",
            expected: cfg.num_data_qubits,
            actual: layout.num_data(),
        });
    }
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    push_ansatz_gates(&mut circuit, cfg, theta, layout.data());
    Ok(circuit)
}

/// The embedding g(x) = U1(x) W(theta) U1(x) |0>^d on a bare d-qubit
/// register (feature j on qubit j, no ancillas). The repeated encoding makes
/// embedding overlaps depend on theta.
pub fn embed(x: &FeatureVector, model: &MetricModel) -> Result<StateVector> {
    let d = model.ansatz.num_data_qubits;
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            context: "embedding input",
            expected: d,
            actual: x.len(),
        });
    }
    let data: Vec<usize> = (0..d).collect();
    let mut circuit = Circuit::new(d, 0);
    push_encoding_gates(&mut circuit, x, &data, &[]);
    push_ansatz_gates(&mut circuit, &model.ansatz, &model.theta, &data);
    push_encoding_gates(&mut circuit, x, &data, &[]);
    circuit.run_pure()
}

/// The full triplet circuit with independent anchor angles for the two
/// encoding passes. `triplet_readout` uses equal passes; the anchor-feature
/// gradient shifts one occurrence at a time.
pub(crate) fn readout_circuit_split_anchor(
    a_pass1: &FeatureVector,
    a_pass2: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    model: &MetricModel,
) -> Result<Circuit> {
    let layout = &model.layout;
    let d = layout.num_data();
    for x in [a_pass1, a_pass2, p, n] {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                context: "triplet readout",
                expected: d,
                actual: x.len(),
            });
        }
    }
    if model.theta.len() != model.ansatz.param_count() {
        return Err(Error::DimensionMismatch {
            context: "ansatz parameters",
            expected: model.ansatz.param_count(),
            actual: model.theta.len(),
        });
    }
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    circuit.push_gate(GateOp::H {
        target: layout.reg1(),
    });
    circuit.push_gate(GateOp::H {
        target: layout.reg2(),
    });
    for (x, role) in [
        (a_pass1, TripletRole::Anchor),
        (p, TripletRole::Positive),
        (n, TripletRole::Negative),
    ] {
        let controls = layout.branch_controls(role);
        push_encoding_gates(&mut circuit, x, layout.data(), &controls);
    }
    // W(theta) is branch-independent, so it runs unconditionally.
    push_ansatz_gates(&mut circuit, &model.ansatz, &model.theta, layout.data());
    for (x, role) in [
        (a_pass2, TripletRole::Anchor),
        (p, TripletRole::Positive),
        (n, TripletRole::Negative),
    ] {
        let controls = layout.branch_controls(role);
        push_encoding_gates(&mut circuit, x, layout.data(), &controls);
    }
    circuit.push_gate(GateOp::H {
        target: layout.reg1(),
    });
    Ok(circuit)
}

fn conditioned_estimate(p_plus: f64, p_minus: f64, branch: &'static str) -> Result<f64> {
    let denom = p_plus + p_minus;
    if denom <= 0.0 {
        return Err(Error::EmptyBranch { branch });
    }
    Ok(((p_plus - p_minus) / denom).clamp(-1.0, 1.0))
}

pub(crate) fn readout_split_anchor(
    a_pass1: &FeatureVector,
    a_pass2: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<DistancePair> {
    let circuit = readout_circuit_split_anchor(a_pass1, a_pass2, p, n, model)?;
    let state = circuit.run_pure()?;
    // Outcome index: bit 0 = reg1, bit 1 = reg2.
    let probs = mode.outcome_probs(&state, &[model.layout.reg1(), model.layout.reg2()])?;
    let s_p = conditioned_estimate(probs[0b00], probs[0b01], "positive-pair")?;
    let s_n = conditioned_estimate(probs[0b10], probs[0b11], "negative-pair")?;
    Ok(DistancePair {
        d_p: 1.0 - s_p.abs(),
        d_n: 1.0 - s_n.abs(),
        s_p,
        s_n,
    })
}

/// Reads both pair overlaps of one triplet from a single superposed circuit
/// and converts them to angular distances.
pub fn triplet_readout(
    a: &FeatureVector,
    p: &FeatureVector,
    n: &FeatureVector,
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<DistancePair> {
    readout_split_anchor(a, a, p, n, model, mode)
}

/// Two-branch Hadamard-test overlap of a single pair: prepares
/// `(|0>|emb(x1)> + |1>|emb(x2)>)/sqrt(2)` on reg1 and returns
/// `P(0) - P(1) = Re<emb(x1)|emb(x2)>`.
pub fn pair_inner(
    x1: &FeatureVector,
    x2: &FeatureVector,
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<f64> {
    let layout = &model.layout;
    let d = layout.num_data();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                context: "pair readout",
                expected: d,
                actual: x.len(),
            });
        }
    }
    let mut circuit = Circuit::new(layout.num_qubits(), 0);
    circuit.push_gate(GateOp::H {
        target: layout.reg1(),
    });
    for (x, bit) in [(x1, 0u8), (x2, 1u8)] {
        push_encoding_gates(&mut circuit, x, layout.data(), &[(layout.reg1(), bit)]);
    }
    push_ansatz_gates(&mut circuit, &model.ansatz, &model.theta, layout.data());
    for (x, bit) in [(x1, 0u8), (x2, 1u8)] {
        push_encoding_gates(&mut circuit, x, layout.data(), &[(layout.reg1(), bit)]);
    }
    circuit.push_gate(GateOp::H {
        target: layout.reg1(),
    });
    let state = circuit.run_pure()?;
    let probs = mode.outcome_probs(&state, &[layout.reg1()])?;
    Ok((probs[0] - probs[1]).clamp(-1.0, 1.0))
}

/// Hinge term of one triplet: `max(0, d_p - d_n + margin)` and whether it is
/// strictly active (the boundary counts as inactive).
pub(crate) fn hinge_term(d_p: f64, d_n: f64, margin: f64) -> (f64, bool) {
    let t = d_p - d_n + margin;
    if t > 0.0 { (t, true) } else { (0.0, false) }
}

/// Mean hinged triplet loss over a batch, reduced in batch index order.
pub fn triplet_loss(
    batch: &[TripletSet],
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut per_triplet = Vec::with_capacity(batch.len());
    let mut sum = 0.0;
    for triplet in batch {
        let pair = triplet_readout(
            &triplet.anchor,
            &triplet.positive,
            &triplet.negative,
            model,
            mode,
        )?;
        let (term, active) = hinge_term(pair.d_p, pair.d_n, model.margin);
        sum += term;
        per_triplet.push(TripletTerm {
            d_p: pair.d_p,
            d_n: pair.d_n,
            active,
        });
    }
    Ok(LossReport {
        loss: sum / batch.len() as f64,
        per_triplet,
    })
}

/// On-disk model format, version-gated.
pub const MODEL_FILE_VERSION: u32 = 1;

/// Serialized model: ansatz shape, flat parameters, margin, the feature
/// scaling fitted on the training split, and the training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub ansatz: AnsatzConfig,
    pub theta: Vec<f64>,
    pub margin: f64,
    pub feature_scaling: ScalingModel,
    pub seed: u64,
}

impl ModelFile {
    pub fn build(model: &MetricModel, scaling: &ScalingModel, seed: u64) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            ansatz: model.ansatz.clone(),
            theta: model.theta.values().to_vec(),
            margin: model.margin,
            feature_scaling: scaling.clone(),
            seed,
        }
    }

    /// Rebuilds the runtime model (contiguous layout) and the scaling.
    pub fn instantiate(&self) -> Result<(MetricModel, ScalingModel)> {
        if self.version != MODEL_FILE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.version,
                expected: MODEL_FILE_VERSION,
            });
        }
        let theta = ParamVector::new(self.theta.clone())?;
        let model = MetricModel::with_default_layout(self.ansatz.clone(), theta, self.margin)?;
        Ok((model, self.feature_scaling.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: file.version,
                expected: MODEL_FILE_VERSION,
            });
        }
        Ok(file)
    }
}
