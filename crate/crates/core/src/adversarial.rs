//! Gradient-ascent adversarial anchors: single-step perturbation, projected
//! multi-step (PGD) attacks, and the per-triplet robust-ordering predicate.
//!
//! Attacks run in exact evaluation mode; shot noise belongs to readout
//! benchmarks, not to the attack definition.

use serde::{Deserialize, Serialize};

use crate::data::TripletSet;
use crate::encoding::FeatureVector;
use crate::error::{Error, Result};
use crate::gradient::grad_anchor;
use crate::model::{hinge_term, triplet_readout, EvalMode, MetricModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    SingleStep,
    Pgd,
}

/// Attack hyperparameters. `lambda` is the ascent step in radians per unit
/// gradient; `epsilon` bounds the cumulative angle offset in the infinity
/// norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub mode: AttackMode,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidValue {
                what: "attack lambda",
                why: format!("must be finite and > 0, got {}", self.lambda),
            });
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidValue {
                what: "attack epsilon",
                why: format!("must be finite and >= 0, got {}", self.epsilon),
            });
        }
        if self.steps == 0 {
            return Err(Error::InvalidValue {
                what: "attack steps",
                why: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// An attacked triplet. `delta` holds the offsets actually applied, so
/// `perturbed_anchor = base.anchor + delta` exactly (budget and `[0, pi]`
/// clamps already folded in).
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialTriplet {
    pub base: TripletSet,
    pub perturbed_anchor: FeatureVector,
    pub delta: FeatureVector,
}

impl AdversarialTriplet {
    /// The triplet with the perturbed anchor swapped in.
    pub fn attacked_triplet(&self) -> TripletSet {
        TripletSet {
            anchor: self.perturbed_anchor.clone(),
            ..self.base.clone()
        }
    }
}

fn require_mode(cfg: &AttackConfig, mode: AttackMode, op: &'static str) -> Result<()> {
    cfg.validate()?;
    if cfg.mode != mode {
        return Err(Error::InvalidValue {
            what: op,
            why: format!("requires mode {mode:?}, got {:?}", cfg.mode),
        });
    }
    Ok(())
}

fn hinge_of(triplet: &TripletSet, model: &MetricModel) -> Result<f64> {
    let pair = triplet_readout(
        &triplet.anchor,
        &triplet.positive,
        &triplet.negative,
        model,
        &mut EvalMode::Exact,
    )?;
    Ok(hinge_term(pair.d_p, pair.d_n, model.margin).0)
}

fn build_result(triplet: &TripletSet, anchor: Vec<f64>) -> Result<AdversarialTriplet> {
    let delta = anchor
        .iter()
        .zip(triplet.anchor.values())
        .map(|(new, old)| new - old)
        .collect();
    Ok(AdversarialTriplet {
        base: triplet.clone(),
        perturbed_anchor: FeatureVector::new(anchor)?,
        delta: FeatureVector::new(delta)?,
    })
}

/// One ascent step on the anchor: `delta = clamp_inf(lambda * grad, epsilon)`
/// followed by the `[0, pi]` angle clamp. Appending RY(delta_j) after the
/// anchor's encoding gates realizes the same perturbation as a circuit-level
/// unitary, since RY angles on a shared qubit add.
pub fn perturb_anchor(
    triplet: &TripletSet,
    model: &MetricModel,
    cfg: &AttackConfig,
) -> Result<AdversarialTriplet> {
    require_mode(cfg, AttackMode::SingleStep, "perturb_anchor")?;
    let grad = grad_anchor(triplet, 0, model, &mut EvalMode::Exact)?;
    let anchor = triplet
        .anchor
        .values()
        .iter()
        .zip(&grad.values)
        .map(|(&a, &g)| {
            let delta = (cfg.lambda * g).clamp(-cfg.epsilon, cfg.epsilon);
            (a + delta).clamp(0.0, std::f64::consts::PI)
        })
        .collect();
    build_result(triplet, anchor)
}

/// Projected gradient ascent: `steps` rounds of recompute-gradient, ascend,
/// project the cumulative offset to the epsilon ball, clamp to `[0, pi]`.
/// Returns the iterate with the largest hinge term (first on ties), which
/// dominates the last iterate for the same budget.
pub fn pgd_attack(
    triplet: &TripletSet,
    model: &MetricModel,
    cfg: &AttackConfig,
) -> Result<AdversarialTriplet> {
    require_mode(cfg, AttackMode::Pgd, "pgd_attack")?;
    let base = triplet.anchor.values().to_vec();
    let mut current = base.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.steps {
        let work = TripletSet {
            anchor: FeatureVector::new(current.clone())?,
            ..triplet.clone()
        };
        let grad = grad_anchor(&work, 0, model, &mut EvalMode::Exact)?;
        for ((value, &origin), &g) in current.iter_mut().zip(&base).zip(&grad.values) {
            let stepped = *value + cfg.lambda * g;
            let delta = (stepped - origin).clamp(-cfg.epsilon, cfg.epsilon);
            *value = (origin + delta).clamp(0.0, std::f64::consts::PI);
        }
        let candidate = TripletSet {
            anchor: FeatureVector::new(current.clone())?,
            ..triplet.clone()
        };
        let term = hinge_of(&candidate, model)?;
        if best.as_ref().is_none_or(|(b, _)| term > *b) {
            best = Some((term, current.clone()));
        }
    }
    let (_, anchor) = best.expect("steps >= 1 guarantees an iterate");
    build_result(triplet, anchor)
}

/// True iff the triplet still orders correctly (`d_n > d_p`, strictly) after
/// the multi-step attack with this config's budget. The mode field is
/// ignored: robustness is always judged against the stronger PGD attack.
pub fn robust_ordering(
    triplet: &TripletSet,
    model: &MetricModel,
    cfg: &AttackConfig,
) -> Result<bool> {
    cfg.validate()?;
    let pgd_cfg = AttackConfig {
        mode: AttackMode::Pgd,
        ..*cfg
    };
    let attacked = pgd_attack(triplet, model, &pgd_cfg)?.attacked_triplet();
    let pair = triplet_readout(
        &attacked.anchor,
        &attacked.positive,
        &attacked.negative,
        model,
        &mut EvalMode::Exact,
    )?;
    Ok(pair.d_n > pair.d_p)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoding::{push_encoding_gates, RegisterLayout, TripletRole};
    use crate::model::{
        push_ansatz_gates, readout_circuit_split_anchor, AnsatzConfig, Entangler, ParamVector,
    };
    use crate::sim::{Circuit, GateOp};

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector::new(values.to_vec()).unwrap()
    }

    fn random_model(d: usize, layers: usize, margin: f64, rng: &mut impl Rng) -> MetricModel {
        let ansatz = AnsatzConfig {
            num_layers: layers,
            num_data_qubits: d,
            entangler: Entangler::Ring,
        };
        let theta = ParamVector::init_small(ansatz.param_count(), rng);
        MetricModel::with_default_layout(ansatz, theta, margin).unwrap()
    }

    fn random_triplet(d: usize, rng: &mut impl Rng) -> TripletSet {
        let mut draw = || {
            FeatureVector::new((0..d).map(|_| rng.random_range(0.4..2.7)).collect()).unwrap()
        };
        TripletSet {
            anchor: draw(),
            positive: draw(),
            negative: draw(),
            anchor_label: 0,
            negative_label: 1,
        }
    }

    fn single_step(lambda: f64, epsilon: f64) -> AttackConfig {
        AttackConfig {
            lambda,
            epsilon,
            steps: 1,
            mode: AttackMode::SingleStep,
        }
    }

    fn pgd(lambda: f64, epsilon: f64, steps: usize) -> AttackConfig {
        AttackConfig {
            lambda,
            epsilon,
            steps,
            mode: AttackMode::Pgd,
        }
    }

    #[test]
    fn config_validation_rejects_bad_hyperparameters() {
        assert!(single_step(0.0, 0.1).validate().is_err());
        assert!(single_step(-0.05, 0.1).validate().is_err());
        assert!(single_step(0.05, -0.1).validate().is_err());
        assert!(pgd(0.05, 0.1, 0).validate().is_err());
        assert!(pgd(0.05, 0.0, 3).validate().is_ok());
    }

    #[test]
    fn operations_check_their_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = random_model(2, 1, 0.5, &mut rng);
        let triplet = random_triplet(2, &mut rng);
        assert!(matches!(
            perturb_anchor(&triplet, &model, &pgd(0.05, 0.1, 3)),
            Err(Error::InvalidValue { .. })
        ));
        assert!(matches!(
            pgd_attack(&triplet, &model, &single_step(0.05, 0.1)),
            Err(Error::InvalidValue { .. })
        ));
    }

    #[test]
    fn inactive_triplet_is_left_untouched() {
        let ansatz = AnsatzConfig {
            num_layers: 1,
            num_data_qubits: 2,
            entangler: Entangler::Ring,
        };
        let theta = ParamVector::zeros(ansatz.param_count());
        let model = MetricModel::with_default_layout(ansatz, theta, 0.0).unwrap();
        let triplet = TripletSet {
            anchor: fv(&[0.4, 0.5]),
            positive: fv(&[0.41, 0.51]),
            negative: fv(&[2.6, 2.4]),
            anchor_label: 0,
            negative_label: 1,
        };
        let adv = perturb_anchor(&triplet, &model, &single_step(0.05, 0.1)).unwrap();
        assert_eq!(adv.perturbed_anchor, triplet.anchor);
        assert!(adv.delta.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_budget_attacks_are_no_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(2, 2, 1.2, &mut rng);
        let triplet = random_triplet(2, &mut rng);
        let adv = perturb_anchor(&triplet, &model, &single_step(0.5, 0.0)).unwrap();
        assert_eq!(adv.perturbed_anchor, triplet.anchor);
        let adv = pgd_attack(&triplet, &model, &pgd(0.5, 0.0, 4)).unwrap();
        assert_eq!(adv.perturbed_anchor, triplet.anchor);
        assert_eq!(adv.attacked_triplet(), triplet);
    }

    #[test]
    fn small_step_ascent_increases_the_hinge_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = random_model(3, 2, 0.8, &mut rng);
        let triplet = random_triplet(3, &mut rng);
        let base_term = hinge_of(&triplet, &model).unwrap();
        assert!(base_term > 0.0, "need an active triplet");
        let grad = grad_anchor(&triplet, 0, &model, &mut EvalMode::Exact).unwrap();
        let grad_inf = grad.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(grad_inf > 1e-4, "need a usable gradient, got {grad_inf}");

        // Budget wide enough that the projection never bites.
        let cfg = single_step(0.05, 0.5);
        assert!(0.05 * grad_inf < cfg.epsilon);
        let adv = perturb_anchor(&triplet, &model, &cfg).unwrap();
        let attacked_term = hinge_of(&adv.attacked_triplet(), &model).unwrap();
        assert!(attacked_term >= base_term - 1e-6);
        assert!(attacked_term > base_term, "{attacked_term} vs {base_term}");
    }

    #[test]
    fn budget_and_range_hold_even_under_huge_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = random_model(2, 2, 1.0, &mut rng);
        for _ in 0..5 {
            let triplet = random_triplet(2, &mut rng);
            for adv in [
                perturb_anchor(&triplet, &model, &single_step(5.0, 0.07)).unwrap(),
                pgd_attack(&triplet, &model, &pgd(5.0, 0.07, 4)).unwrap(),
            ] {
                for (&new, &old) in adv
                    .perturbed_anchor
                    .values()
                    .iter()
                    .zip(triplet.anchor.values())
                {
                    assert!((new - old).abs() <= 0.07 + 1e-12);
                    assert!((0.0..=std::f64::consts::PI).contains(&new));
                }
            }
        }
    }

    #[test]
    fn single_pgd_step_coincides_with_perturb_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let model = random_model(2, 2, 0.9, &mut rng);
        let triplet = random_triplet(2, &mut rng);
        let one = perturb_anchor(&triplet, &model, &single_step(0.08, 0.05)).unwrap();
        let via_pgd = pgd_attack(&triplet, &model, &pgd(0.08, 0.05, 1)).unwrap();
        assert_eq!(one.perturbed_anchor, via_pgd.perturbed_anchor);
        assert_eq!(one.delta, via_pgd.delta);
    }

    #[test]
    fn best_iterate_dominates_the_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = random_model(2, 1, 1.0, &mut rng);
        for _ in 0..20 {
            let triplet = random_triplet(2, &mut rng);
            let single = perturb_anchor(&triplet, &model, &single_step(0.06, 0.15)).unwrap();
            let multi = pgd_attack(&triplet, &model, &pgd(0.06, 0.15, 5)).unwrap();
            let single_term = hinge_of(&single.attacked_triplet(), &model).unwrap();
            let multi_term = hinge_of(&multi.attacked_triplet(), &model).unwrap();
            assert!(multi_term >= single_term - 1e-12);
        }
    }

    #[test]
    fn attacks_are_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let model = random_model(3, 2, 0.7, &mut rng);
        let triplet = random_triplet(3, &mut rng);
        let first = pgd_attack(&triplet, &model, &pgd(0.05, 0.1, 3)).unwrap();
        let second = pgd_attack(&triplet, &model, &pgd(0.05, 0.1, 3)).unwrap();
        assert_eq!(first, second);
        assert_eq!(
            perturb_anchor(&triplet, &model, &single_step(0.05, 0.1)).unwrap(),
            perturb_anchor(&triplet, &model, &single_step(0.05, 0.1)).unwrap()
        );
    }

    #[test]
    fn delta_rotations_in_the_circuit_reproduce_the_perturbed_anchor() {
        // Encoding angles add on a shared qubit, so composing RY(delta_j)
        // after the anchor's encoding gates in BOTH passes must equal
        // re-encoding with the perturbed angles.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let model = random_model(3, 2, 0.8, &mut rng);
        let triplet = random_triplet(3, &mut rng);
        let adv = perturb_anchor(&triplet, &model, &single_step(0.3, 0.25)).unwrap();
        assert!(adv.delta.values().iter().any(|&v| v != 0.0));

        let reference = readout_circuit_split_anchor(
            &adv.perturbed_anchor,
            &adv.perturbed_anchor,
            &triplet.positive,
            &triplet.negative,
            &model,
        )
        .unwrap()
        .run_pure()
        .unwrap();

        let layout = RegisterLayout::contiguous(3).unwrap();
        let anchor_controls = layout.branch_controls(TripletRole::Anchor);
        let mut composed = Circuit::new(layout.num_qubits(), 0);
        composed.push_gate(GateOp::H {
            target: layout.reg1(),
        });
        composed.push_gate(GateOp::H {
            target: layout.reg2(),
        });
        for pass in 0..2 {
            for (x, role) in [
                (&triplet.anchor, TripletRole::Anchor),
                (&triplet.positive, TripletRole::Positive),
                (&triplet.negative, TripletRole::Negative),
            ] {
                let controls = layout.branch_controls(role);
                push_encoding_gates(&mut composed, x, layout.data(), &controls);
                if role == TripletRole::Anchor {
                    // The V'(lambda grad) correction, one RY per feature.
                    push_encoding_gates(&mut composed, &adv.delta, layout.data(), &anchor_controls);
                }
            }
            if pass == 0 {
                push_ansatz_gates(&mut composed, &model.ansatz, &model.theta, layout.data());
            }
        }
        composed.push_gate(GateOp::H {
            target: layout.reg1(),
        });
        let state = composed.run_pure().unwrap();
        for (got, want) in state.amps().iter().zip(reference.amps()) {
            assert_abs_diff_eq!(got.re, want.re, epsilon = 1e-12);
            assert_abs_diff_eq!(got.im, want.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn robust_ordering_on_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let model = random_model(2, 1, 0.5, &mut rng);
        // Tight positive, distant negative: ordered, and a zero-budget
        // attack cannot change that.
        let ordered = TripletSet {
            anchor: fv(&[0.5, 0.6]),
            positive: fv(&[0.52, 0.61]),
            negative: fv(&[2.5, 2.6]),
            anchor_label: 0,
            negative_label: 1,
        };
        assert!(robust_ordering(&ordered, &model, &pgd(0.05, 0.0, 2)).unwrap());

        // Identical positive and negative can never satisfy the strict
        // ordering.
        let shared = fv(&[1.3, 0.9]);
        let degenerate = TripletSet {
            anchor: fv(&[0.8, 1.1]),
            positive: shared.clone(),
            negative: shared,
            anchor_label: 0,
            negative_label: 1,
        };
        assert!(!robust_ordering(&degenerate, &model, &pgd(0.05, 0.1, 2)).unwrap());
    }

    #[test]
    fn robustness_is_mostly_monotone_in_the_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let model = random_model(2, 1, 0.3, &mut rng);
        let epsilons = [0.02, 0.05, 0.1, 0.2];
        let mut comparisons = 0;
        let mut violations = 0;
        for _ in 0..10 {
            let triplet = random_triplet(2, &mut rng);
            let robust: Vec<bool> = epsilons
                .iter()
                .map(|&eps| robust_ordering(&triplet, &model, &pgd(0.05, eps, 3)).unwrap())
                .collect();
            for hi in 0..epsilons.len() {
                for lo in 0..hi {
                    comparisons += 1;
                    if robust[hi] && !robust[lo] {
                        violations += 1;
                    }
                }
            }
        }
        // PGD is a heuristic, not the exact worst case; allow 5% slack.
        assert!(
            (violations as f64) / (comparisons as f64) < 0.05,
            "{violations}/{comparisons} monotonicity violations"
        );
    }
}
