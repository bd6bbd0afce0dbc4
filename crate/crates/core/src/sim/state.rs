//! Statevector storage and in-place gate kernels.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::GateOp;

/// Hard cap on register width: 2^24 amplitudes is 256 MiB of complex doubles.
pub const MAX_QUBITS: usize = 24;

/// A pure state on `num_qubits` qubits, stored as `2^num_qubits` amplitudes
/// in little-endian basis order (qubit 0 is the least significant bit).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zeros computational basis state `|0...0>`.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(Error::Capacity {
                requested: num_qubits,
                max: MAX_QUBITS,
            });
        }
        let mut amps = vec![Complex64::ZERO; 1 << num_qubits];
        amps[0] = Complex64::ONE;
        Ok(StateVector { num_qubits, amps })
    }

    /// Builds a state from raw amplitudes. The length must be a power of two
    /// within capacity and the vector must be normalized to within 1e-8.
    pub fn from_amps(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() || len > (1 << MAX_QUBITS) {
            return Err(Error::InvalidValue {
                what: "amplitude vector",
                why: format!("length {len} is not a power of two in 2..=2^{MAX_QUBITS}"),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidValue {
                what: "amplitude vector",
                why: format!("norm is {norm}, expected 1"),
            });
        }
        Ok(StateVector {
            num_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    /// The l2 norm of the amplitude vector. Stays within 1e-12 of 1 under any
    /// sequence of gates; collapse renormalizes explicitly.
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies one gate in place.
    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.num_qubits)?;
        match gate {
            GateOp::Ry { target, angle } => {
                let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
                self.for_target_pairs(*target, |a0, a1| {
                    let new0 = c * *a0 - s * *a1;
                    let new1 = s * *a0 + c * *a1;
                    *a0 = new0;
                    *a1 = new1;
                });
            }
            GateOp::Rz { target, angle } => {
                let phase0 = Complex64::from_polar(1.0, -angle / 2.0);
                let phase1 = Complex64::from_polar(1.0, angle / 2.0);
                self.for_target_pairs(*target, |a0, a1| {
                    *a0 *= phase0;
                    *a1 *= phase1;
                });
            }
            GateOp::H { target } => {
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                self.for_target_pairs(*target, |a0, a1| {
                    let new0 = (*a0 + *a1) * inv_sqrt2;
                    let new1 = (*a0 - *a1) * inv_sqrt2;
                    *a0 = new0;
                    *a1 = new1;
                });
            }
            GateOp::X { target } => {
                self.for_target_pairs(*target, std::mem::swap);
            }
            GateOp::Cnot { control, target } => {
                let control_mask = 1usize << control;
                let step = 1usize << target;
                for base in (0..self.amps.len()).step_by(2 * step) {
                    for offset in 0..step {
                        let j = base + offset;
                        if j & control_mask != 0 {
                            self.amps.swap(j, j | step);
                        }
                    }
                }
            }
            GateOp::Cz { a, b } => {
                let mask = (1usize << a) | (1usize << b);
                for (index, amp) in self.amps.iter_mut().enumerate() {
                    if index & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
            GateOp::Cry {
                controls,
                target,
                angle,
            } => {
                let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
                let step = 1usize << target;
                for base in (0..self.amps.len()).step_by(2 * step) {
                    for offset in 0..step {
                        let j = base + offset;
                        // Controls never include the target, so checking the
                        // target-0 index j covers its partner j|step as well.
                        let active = controls
                            .iter()
                            .all(|&(qubit, bit)| ((j >> qubit) & 1) as u8 == bit);
                        if active {
                            let k = j | step;
                            let new0 = c * self.amps[j] - s * self.amps[k];
                            let new1 = s * self.amps[j] + c * self.amps[k];
                            self.amps[j] = new0;
                            self.amps[k] = new1;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Visits every (target=0, target=1) amplitude pair exactly once.
    fn for_target_pairs(&mut self, target: usize, mut f: impl FnMut(&mut Complex64, &mut Complex64)) {
        let step = 1usize << target;
        for base in (0..self.amps.len()).step_by(2 * step) {
            for offset in 0..step {
                let j = base + offset;
                let (lo, hi) = self.amps.split_at_mut(j | step);
                f(&mut lo[j], &mut hi[0]);
            }
        }
    }

    /// Marginal distribution over the named qubits, in the order given:
    /// outcome index `sum_m bit_m * 2^m` where `bit_m` is the measured value
    /// of `qubits[m]`. Does not disturb the state.
    pub fn probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        self.check_distinct(qubits)?;
        let mut out = vec![0.0; 1 << qubits.len()];
        for (index, amp) in self.amps.iter().enumerate() {
            let mut outcome = 0usize;
            for (m, &qubit) in qubits.iter().enumerate() {
                outcome |= ((index >> qubit) & 1) << m;
            }
            out[outcome] += amp.norm_sqr();
        }
        Ok(out)
    }

    /// `<self|other>` with self conjugated.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::QubitCountMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Draws `shots` independent samples from the marginal over `qubits` and
    /// returns outcome counts keyed by the same outcome index as
    /// [`probabilities`](Self::probabilities). Does not disturb the state.
    pub fn sample_shots(
        &self,
        qubits: &[usize],
        shots: usize,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<BTreeMap<usize, usize>> {
        if shots == 0 {
            return Err(Error::ZeroShots);
        }
        let probs = self.probabilities(qubits)?;
        let mut counts = BTreeMap::new();
        for _ in 0..shots {
            let mut u: f64 = rng.random();
            let mut drawn = probs.len() - 1;
            for (outcome, &p) in probs.iter().enumerate() {
                if u < p {
                    drawn = outcome;
                    break;
                }
                u -= p;
            }
            *counts.entry(drawn).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// Projective measurement of one qubit with collapse and renormalization.
    /// Consumes exactly one random draw.
    pub(crate) fn measure_collapse(&mut self, qubit: usize, rng: &mut impl Rng) -> u8 {
        let mask = 1usize << qubit;
        let p1: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(index, _)| index & mask != 0)
            .map(|(_, amp)| amp.norm_sqr())
            .sum();
        let u: f64 = rng.random();
        let mut outcome: u8 = if u < 1.0 - p1 { 0 } else { 1 };
        // Guard against collapsing onto a branch of negligible weight, which
        // can only happen through floating point rounding of the threshold.
        let p_outcome = if outcome == 1 { p1 } else { 1.0 - p1 };
        if p_outcome < 1e-15 {
            outcome ^= 1;
        }
        let keep = if outcome == 1 { mask } else { 0 };
        let mut kept_norm_sqr = 0.0;
        for (index, amp) in self.amps.iter_mut().enumerate() {
            if index & mask == keep {
                kept_norm_sqr += amp.norm_sqr();
            } else {
                *amp = Complex64::ZERO;
            }
        }
        let scale = 1.0 / kept_norm_sqr.sqrt();
        for amp in &mut self.amps {
            *amp *= scale;
        }
        outcome
    }

    fn check_distinct(&self, qubits: &[usize]) -> Result<()> {
        for (i, &index) in qubits.iter().enumerate() {
            if index >= self.num_qubits {
                return Err(Error::QubitIndex {
                    index,
                    num_qubits: self.num_qubits,
                });
            }
            if qubits[..i].contains(&index) {
                return Err(Error::DuplicateQubit { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn ry(target: usize, angle: f64) -> GateOp {
        GateOp::Ry { target, angle }
    }

    #[test]
    fn zero_state_is_basis_zero() {
        let state = StateVector::zero(3).unwrap();
        assert_eq!(state.num_qubits(), 3);
        assert_eq!(state.amps().len(), 8);
        assert_eq!(state.amps()[0], Complex64::ONE);
        assert!(state.amps()[1..].iter().all(|a| *a == Complex64::ZERO));
    }

    #[test]
    fn capacity_is_enforced() {
        assert!(matches!(
            StateVector::zero(0),
            Err(Error::Capacity { requested: 0, .. })
        ));
        assert!(matches!(
            StateVector::zero(MAX_QUBITS + 1),
            Err(Error::Capacity { .. })
        ));
        assert!(StateVector::zero(MAX_QUBITS.min(12)).is_ok());
    }

    #[test]
    fn from_amps_rejects_bad_shapes() {
        let third = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
        assert!(StateVector::from_amps(vec![third; 3]).is_err());
        assert!(StateVector::from_amps(vec![Complex64::ONE; 4]).is_err());
        let state = StateVector::from_amps(vec![Complex64::new(0.5, 0.0); 4]).unwrap();
        assert_eq!(state.num_qubits(), 2);
    }

    #[test]
    fn ry_on_zero_gives_half_angle_amplitudes() {
        let mut state = StateVector::zero(1).unwrap();
        state.apply(&ry(0, 0.7)).unwrap();
        assert_relative_eq!(state.amps()[0].re, (0.35f64).cos(), max_relative = 1e-14);
        assert_relative_eq!(state.amps()[1].re, (0.35f64).sin(), max_relative = 1e-14);
        assert_eq!(state.amps()[0].im, 0.0);
        assert_eq!(state.amps()[1].im, 0.0);
    }

    #[test]
    fn ry_acts_on_the_named_qubit_only() {
        // Qubit 1 of a 3-qubit register: |0> -> amplitude at index 2.
        let mut state = StateVector::zero(3).unwrap();
        state.apply(&ry(1, std::f64::consts::PI)).unwrap();
        assert_abs_diff_eq!(state.amps()[2].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[0].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rz_applies_half_angle_phases() {
        let mut state = StateVector::zero(1).unwrap();
        state.apply(&GateOp::H { target: 0 }).unwrap();
        state.apply(&GateOp::Rz {
            target: 0,
            angle: std::f64::consts::PI,
        })
        .unwrap();
        // (e^{-i pi/2}|0> + e^{i pi/2}|1>)/sqrt(2) = (-i|0> + i|1>)/sqrt(2)
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(state.amps()[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[0].im, -inv_sqrt2, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[1].im, inv_sqrt2, epsilon = 1e-15);
    }

    #[test]
    fn hadamard_is_self_inverse() {
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&ry(0, 0.4)).unwrap();
        state.apply(&ry(1, 1.1)).unwrap();
        let before = state.clone();
        state.apply(&GateOp::H { target: 1 }).unwrap();
        state.apply(&GateOp::H { target: 1 }).unwrap();
        for (a, b) in state.amps().iter().zip(before.amps()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-14);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-14);
        }
    }

    #[test]
    fn cnot_flips_target_when_control_is_set() {
        // |01> (qubit 0 set) with control 0, target 1 becomes |11>.
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::X { target: 0 }).unwrap();
        state.apply(&GateOp::Cnot {
            control: 0,
            target: 1,
        })
        .unwrap();
        assert_eq!(state.amps()[3], Complex64::ONE);

        // Control clear: |10> is untouched.
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::X { target: 1 }).unwrap();
        state.apply(&GateOp::Cnot {
            control: 0,
            target: 1,
        })
        .unwrap();
        assert_eq!(state.amps()[2], Complex64::ONE);
    }

    #[test]
    fn cz_flips_the_sign_of_the_both_set_component() {
        let mut state = StateVector::from_amps(vec![Complex64::new(0.5, 0.0); 4]).unwrap();
        state.apply(&GateOp::Cz { a: 0, b: 1 }).unwrap();
        assert_abs_diff_eq!(state.amps()[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[1].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[2].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(state.amps()[3].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn cry_honors_anti_controls() {
        // Anti-control on qubit 1: fires on |00>, not on |10>.
        let gate = GateOp::Cry {
            controls: vec![(1, 0)],
            target: 0,
            angle: std::f64::consts::PI,
        };
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&gate).unwrap();
        assert_abs_diff_eq!(state.amps()[1].re, 1.0, epsilon = 1e-15);

        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::X { target: 1 }).unwrap();
        state.apply(&gate).unwrap();
        assert_abs_diff_eq!(state.amps()[2].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cry_with_positive_control_matches_controlled_rotation() {
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::X { target: 1 }).unwrap();
        state.apply(&GateOp::Cry {
            controls: vec![(1, 1)],
            target: 0,
            angle: 0.9,
        })
        .unwrap();
        assert_relative_eq!(state.amps()[2].re, (0.45f64).cos(), max_relative = 1e-14);
        assert_relative_eq!(state.amps()[3].re, (0.45f64).sin(), max_relative = 1e-14);
    }

    #[test]
    fn probabilities_marginalize_a_bell_pair() {
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::H { target: 0 }).unwrap();
        state.apply(&GateOp::Cnot {
            control: 0,
            target: 1,
        })
        .unwrap();
        let joint = state.probabilities(&[0, 1]).unwrap();
        assert_abs_diff_eq!(joint[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(joint[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(joint[2], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(joint[3], 0.5, epsilon = 1e-14);
        let marginal = state.probabilities(&[1]).unwrap();
        assert_abs_diff_eq!(marginal[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(marginal[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn probabilities_outcome_index_follows_argument_order() {
        // |01> (qubit 0 set): querying [0, 1] puts the set qubit in bit 0,
        // querying [1, 0] puts it in bit 1.
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&GateOp::X { target: 0 }).unwrap();
        assert_abs_diff_eq!(state.probabilities(&[0, 1]).unwrap()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(state.probabilities(&[1, 0]).unwrap()[2], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_of_single_qubit_rotations() {
        let mut a = StateVector::zero(1).unwrap();
        a.apply(&ry(0, 0.7)).unwrap();
        let mut b = StateVector::zero(1).unwrap();
        b.apply(&ry(0, 1.3)).unwrap();
        // <RY(a)0|RY(b)0> = cos((b - a)/2)
        let ip = a.inner_product(&b).unwrap();
        assert_relative_eq!(ip.re, (0.3f64).cos(), max_relative = 1e-14);
        assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inner_product_conjugates_the_left_argument() {
        let zero = StateVector::zero(1).unwrap();
        let mut rotated = zero.clone();
        rotated.apply(&GateOp::H { target: 0 }).unwrap();
        rotated
            .apply(&GateOp::Rz {
                target: 0,
                angle: 1.0,
            })
            .unwrap();
        // <0|RZ(1) H|0> = e^{-i/2}/sqrt(2), which has a nonzero imaginary part.
        let forward = zero.inner_product(&rotated).unwrap();
        let backward = rotated.inner_product(&zero).unwrap();
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(forward.re, (0.5f64).cos() * inv_sqrt2, epsilon = 1e-14);
        assert_abs_diff_eq!(forward.im, -(0.5f64).sin() * inv_sqrt2, epsilon = 1e-14);
        assert_abs_diff_eq!(forward.re, backward.re, epsilon = 1e-14);
        assert_abs_diff_eq!(forward.im, -backward.im, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_rejects_width_mismatch() {
        let a = StateVector::zero(1).unwrap();
        let b = StateVector::zero(2).unwrap();
        assert!(matches!(
            a.inner_product(&b),
            Err(Error::QubitCountMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn sample_shots_is_seeded_and_conserves_shots() {
        let mut state = StateVector::zero(2).unwrap();
        state.apply(&ry(0, 1.0)).unwrap();
        state.apply(&ry(1, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let counts = state.sample_shots(&[0, 1], 10_000, &mut rng).unwrap();
        assert_eq!(counts.values().sum::<usize>(), 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let again = state.sample_shots(&[0, 1], 10_000, &mut rng).unwrap();
        assert_eq!(counts, again);

        let zero = StateVector::zero(2).unwrap();
        let counts = zero.sample_shots(&[0], 100, &mut rng).unwrap();
        assert_eq!(counts.get(&0), Some(&100));
        assert!(matches!(
            zero.sample_shots(&[0], 0, &mut rng),
            Err(Error::ZeroShots)
        ));
    }

    #[test]
    fn sample_shots_tracks_the_marginal() {
        let mut state = StateVector::zero(1).unwrap();
        state.apply(&ry(0, 1.2)).unwrap();
        let p1 = (0.6f64).sin().powi(2);
        let shots = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = state.sample_shots(&[0], shots, &mut rng).unwrap();
        let observed = *counts.get(&1).unwrap() as f64 / shots as f64;
        let sigma = (p1 * (1.0 - p1) / shots as f64).sqrt();
        assert!((observed - p1).abs() < 5.0 * sigma);
    }

    #[test]
    fn gate_validation_rejects_bad_operands() {
        let mut state = StateVector::zero(2).unwrap();
        assert!(matches!(
            state.apply(&ry(2, 0.1)),
            Err(Error::QubitIndex { index: 2, .. })
        ));
        assert!(matches!(
            state.apply(&GateOp::Cnot {
                control: 1,
                target: 1
            }),
            Err(Error::DuplicateQubit { index: 1 })
        ));
        assert!(matches!(
            state.apply(&GateOp::Cry {
                controls: vec![(0, 2)],
                target: 1,
                angle: 0.1
            }),
            Err(Error::InvalidValue { .. })
        ));
        assert!(matches!(
            state.probabilities(&[0, 0]),
            Err(Error::DuplicateQubit { index: 0 })
        ));
    }

    #[test]
    fn norm_is_preserved_by_a_long_gate_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut state = StateVector::zero(4).unwrap();
        for _ in 0..200 {
            let target = rng.random_range(0..4);
            let gate = match rng.random_range(0..5) {
                0 => ry(target, rng.random_range(-3.0..3.0)),
                1 => GateOp::Rz {
                    target,
                    angle: rng.random_range(-3.0..3.0),
                },
                2 => GateOp::H { target },
                3 => GateOp::X { target },
                _ => GateOp::Cnot {
                    control: target,
                    target: (target + 1) % 4,
                },
            };
            state.apply(&gate).unwrap();
        }
        assert_abs_diff_eq!(state.norm(), 1.0, epsilon = 1e-12);
    }
}
