//! Parameter-shift gradients of the triplet loss, both through the ansatz
//! parameters and through the anchor's encoding angles, with a
//! central-difference oracle used by the verification tests.

use std::f64::consts::FRAC_PI_2;

use crate::data::TripletSet;
use crate::error::{Error, Result};
use crate::model::{
    hinge_term, readout_split_anchor, triplet_readout, DistancePair, EvalMode, MetricModel,
};

/// What a gradient differentiates: the shared ansatz parameters, or the
/// anchor features of one triplet (tagged with its batch position).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientTarget {
    Params,
    AnchorFeatures { triplet_index: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub target: GradientTarget,
}

/// Evaluates `f` at `v` with `v[k]` moved by `shift`; `v` itself is left
/// untouched.
pub fn shift_eval(
    f: &mut impl FnMut(&[f64]) -> Result<f64>,
    v: &[f64],
    k: usize,
    shift: f64,
) -> Result<f64> {
    if shift == 0.0 {
        return Err(Error::InvalidValue {
            what: "shift",
            why: "must be nonzero".into(),
        });
    }
    if k >= v.len() {
        return Err(Error::InvalidValue {
            what: "shift index",
            why: format!("index {k} out of range for length {}", v.len()),
        });
    }
    let mut moved = v.to_vec();
    moved[k] += shift;
    f(&moved)
}

/// Central differences `[f(v + h e_k) - f(v - h e_k)] / 2h`. The result is
/// tagged `Params` regardless of what `v` holds; oracle comparisons read
/// `values` only.
pub fn finite_diff(
    f: &mut impl FnMut(&[f64]) -> Result<f64>,
    v: &[f64],
    h: f64,
) -> Result<GradientVector> {
    if h <= 0.0 {
        return Err(Error::InvalidValue {
            what: "finite-difference step",
            why: format!("must be positive, got {h}"),
        });
    }
    let mut values = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        let plus = shift_eval(f, v, k, h)?;
        let minus = shift_eval(f, v, k, -h)?;
        values.push((plus - minus) / (2.0 * h));
    }
    Ok(GradientVector {
        values,
        target: GradientTarget::Params,
    })
}

/// `sign` with the subgradient convention `sign(0) = 0`, so readouts sitting
/// exactly on the `|s|` kink contribute nothing.
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn readout_theta_shift(
    triplet: &TripletSet,
    model: &MetricModel,
    k: usize,
    shift: f64,
    mode: &mut EvalMode,
) -> Result<DistancePair> {
    let shifted = model.with_theta(model.theta.shifted(k, shift)?)?;
    triplet_readout(
        &triplet.anchor,
        &triplet.positive,
        &triplet.negative,
        &shifted,
        mode,
    )
}

/// Gradient of the batch triplet loss with respect to the ansatz parameters.
///
/// Every parameterized gate is an RY rotation, so the exact parameter-shift
/// rule applies: `ds/dtheta_k = [s(+pi/2) - s(-pi/2)] / 2` per overlap, then
/// `dd/ds = -sign(s)` and hinge gating. Inactive triplets are skipped before
/// accumulation, so a fully inactive batch returns exact zeros.
pub fn grad_params(
    batch: &[TripletSet],
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<GradientVector> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut values = vec![0.0; model.theta.len()];
    for triplet in batch {
        let base = triplet_readout(
            &triplet.anchor,
            &triplet.positive,
            &triplet.negative,
            model,
            mode,
        )?;
        let (_, active) = hinge_term(base.d_p, base.d_n, model.margin);
        if !active {
            continue;
        }
        let gate_p = -sign0(base.s_p);
        let gate_n = -sign0(base.s_n);
        for (k, value) in values.iter_mut().enumerate() {
            let plus = readout_theta_shift(triplet, model, k, FRAC_PI_2, mode)?;
            let minus = readout_theta_shift(triplet, model, k, -FRAC_PI_2, mode)?;
            let ds_p = (plus.s_p - minus.s_p) / 2.0;
            let ds_n = (plus.s_n - minus.s_n) / 2.0;
            *value += gate_p * ds_p - gate_n * ds_n;
        }
    }
    for value in &mut values {
        *value /= batch.len() as f64;
    }
    Ok(GradientVector {
        values,
        target: GradientTarget::Params,
    })
}

fn readout_anchor_shift(
    triplet: &TripletSet,
    model: &MetricModel,
    j: usize,
    shift: f64,
    pass: usize,
    mode: &mut EvalMode,
) -> Result<DistancePair> {
    let shifted = triplet.anchor.shifted(j, shift)?;
    let (a1, a2) = if pass == 0 {
        (&shifted, &triplet.anchor)
    } else {
        (&triplet.anchor, &shifted)
    };
    readout_split_anchor(a1, a2, &triplet.positive, &triplet.negative, model, mode)
}

/// Gradient of one triplet's hinge term with respect to its anchor features.
///
/// Each anchor angle drives an RY gate in both encoding passes; each pass is
/// shifted on its own and the two partial derivatives are summed (product
/// rule over the repeated encoding). Unlike a shared ansatz rotation, a
/// single-pass encoding gate sits in only one interference branch, so the
/// conditioned overlap is linear in its entries and oscillates at half
/// frequency: the +-pi/2 shift pair carries normalization
/// `1 / (4 sin(pi/4))` instead of `1/2`.
pub fn grad_anchor(
    triplet: &TripletSet,
    triplet_index: usize,
    model: &MetricModel,
    mode: &mut EvalMode,
) -> Result<GradientVector> {
    let mut values = vec![0.0; triplet.anchor.len()];
    let base = triplet_readout(
        &triplet.anchor,
        &triplet.positive,
        &triplet.negative,
        model,
        mode,
    )?;
    let (_, active) = hinge_term(base.d_p, base.d_n, model.margin);
    if active {
        let gate_p = -sign0(base.s_p);
        let gate_n = -sign0(base.s_n);
        // Half-frequency two-term rule: 1 / (4 sin(pi/4)) = 1 / (2 sqrt 2).
        let scale = 1.0 / (2.0 * std::f64::consts::SQRT_2);
        for (j, value) in values.iter_mut().enumerate() {
            let mut ds_p = 0.0;
            let mut ds_n = 0.0;
            for pass in 0..2 {
                let plus = readout_anchor_shift(triplet, model, j, FRAC_PI_2, pass, mode)?;
                let minus = readout_anchor_shift(triplet, model, j, -FRAC_PI_2, pass, mode)?;
                ds_p += (plus.s_p - minus.s_p) * scale;
                ds_n += (plus.s_n - minus.s_n) * scale;
            }
            *value = gate_p * ds_p - gate_n * ds_n;
        }
    }
    Ok(GradientVector {
        values,
        target: GradientTarget::AnchorFeatures { triplet_index },
    })
}
