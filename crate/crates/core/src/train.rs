//! Training loop with alternating natural/adversarial epochs, evaluation
//! metrics, and the optimizers driving the parameter updates.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{perturb_anchor, robust_ordering, AttackConfig, AttackMode};
use crate::data::{mine_triplets, Dataset};
use crate::error::{Error, Result};
use crate::gradient::grad_params;
use crate::model::{
    triplet_readout, AnsatzConfig, Entangler, EvalMode, MetricModel, ParamVector,
};

/// Wide-spaced seed streams for the independent RNG consumers; the constant
/// is the 64-bit golden ratio, so distinct tags land far apart.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const EVAL_STREAM: u64 = 0xE7A1;
const SHOT_STREAM: u64 = 0x5407;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps_hat")]
        eps_hat: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps_hat() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam_defaults() -> Self {
        OptimizerConfig::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_hat: default_eps_hat(),
        }
    }
}

/// First-order optimizer over a flat parameter vector.
pub struct Optimizer {
    config: OptimizerConfig,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, learning_rate: f64, len: usize) -> Self {
        Optimizer {
            config,
            learning_rate,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, values: &mut [f64], grad: &[f64]) {
        match self.config {
            OptimizerConfig::Sgd => {
                for (value, &g) in values.iter_mut().zip(grad) {
                    *value -= self.learning_rate * g;
                }
            }
            OptimizerConfig::Adam {
                beta1,
                beta2,
                eps_hat,
            } => {
                self.t += 1;
                let bias1 = 1.0 - beta1.powi(self.t as i32);
                let bias2 = 1.0 - beta2.powi(self.t as i32);
                for ((value, &g), (m, v)) in values
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut().zip(&mut self.v))
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *value -= self.learning_rate * m_hat / (v_hat.sqrt() + eps_hat);
                }
            }
        }
    }
}

/// How readout statistics are gathered, as configuration (the runtime
/// `EvalMode` additionally carries the RNG for shot sampling).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalModeConfig {
    Exact,
    Shots { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerConfig,
    pub adversarial: bool,
    pub attack: AttackConfig,
    pub eval_mode: EvalModeConfig,
    pub eval_triplets: usize,
    pub seed: u64,
    pub ansatz: AnsatzConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            margin: 0.5,
            learning_rate: 0.1,
            optimizer: OptimizerConfig::Sgd,
            adversarial: false,
            attack: AttackConfig {
                lambda: 0.05,
                epsilon: 0.1,
                steps: 1,
                mode: AttackMode::SingleStep,
            },
            eval_mode: EvalModeConfig::Exact,
            eval_triplets: 200,
            seed: 7,
            ansatz: AnsatzConfig {
                num_layers: 3,
                num_data_qubits: 4,
                entangler: Entangler::Ring,
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidValue {
                what: "epochs",
                why: "must be at least 1".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidValue {
                what: "batch size",
                why: "must be at least 1".into(),
            });
        }
        // 0 is allowed so a zero-step run can probe the initial loss.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidValue {
                what: "learning rate",
                why: format!("must be finite and >= 0, got {}", self.learning_rate),
            });
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidValue {
                what: "margin",
                why: format!("must be finite and >= 0, got {}", self.margin),
            });
        }
        if self.eval_triplets == 0 {
            return Err(Error::InvalidValue {
                what: "eval triplets",
                why: "must be at least 1".into(),
            });
        }
        if let EvalModeConfig::Shots { count } = self.eval_mode
            && count == 0
        {
            return Err(Error::ZeroShots);
        }
        self.attack.validate()?;
        self.ansatz.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: TrainConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochKind {
    Natural,
    Adversarial,
}

/// Aggregate triplet metrics of one evaluation pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mean_d_p: f64,
    pub mean_d_n: f64,
    pub ordering_accuracy: f64,
    pub margin_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub kind: EpochKind,
    pub loss_natural: f64,
    pub loss_adversarial: Option<f64>,
    /// Running minimum of `loss_natural`, non-increasing by construction.
    pub best_loss_natural: f64,
    pub mean_d_p: f64,
    pub mean_d_n: f64,
    pub ordering_accuracy: f64,
    pub margin_accuracy: f64,
    /// Not filled per epoch (a PGD sweep per epoch would dwarf the training
    /// cost); the attack command computes it on demand.
    pub robust_accuracy: Option<f64>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRecord>,
}

impl MetricsLog {
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
        Ok(serde_json::from_str(&text)?)
    }
}

fn runtime_mode<'a>(config: EvalModeConfig, rng: &'a mut ChaCha8Rng) -> EvalMode<'a> {
    match config {
        EvalModeConfig::Exact => EvalMode::Exact,
        EvalModeConfig::Shots { count } => EvalMode::Shots { shots: count, rng },
    }
}

/// Mean distances and accuracies over `count` triplets mined from `ds` with
/// their own seeded stream; a second call with the same arguments returns an
/// identical record.
pub fn evaluate(
    model: &MetricModel,
    ds: &Dataset,
    count: usize,
    seed: u64,
    mode: EvalModeConfig,
) -> Result<EvalRecord> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut mine_rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = mine_triplets(ds, count, &mut mine_rng)?;
    let mut shot_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SHOT_STREAM));
    let mut sum_d_p = 0.0;
    let mut sum_d_n = 0.0;
    let mut ordered = 0usize;
    let mut with_margin = 0usize;
    for triplet in &triplets {
        let pair = triplet_readout(
            &triplet.anchor,
            &triplet.positive,
            &triplet.negative,
            model,
            &mut runtime_mode(mode, &mut shot_rng),
        )?;
        sum_d_p += pair.d_p;
        sum_d_n += pair.d_n;
        if pair.d_n > pair.d_p {
            ordered += 1;
        }
        if pair.d_n - pair.d_p >= model.margin {
            with_margin += 1;
        }
    }
    let n = count as f64;
    Ok(EvalRecord {
        mean_d_p: sum_d_p / n,
        mean_d_n: sum_d_n / n,
        ordering_accuracy: ordered as f64 / n,
        margin_accuracy: with_margin as f64 / n,
    })
}

/// Fraction of `count` seeded triplets whose ordering survives the PGD
/// attack. Mining uses the same stream as `evaluate`, so at epsilon = 0 this
/// equals that call's ordering accuracy.
pub fn robust_accuracy(
    model: &MetricModel,
    ds: &Dataset,
    cfg: &AttackConfig,
    count: usize,
    seed: u64,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    cfg.validate()?;
    let mut mine_rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = mine_triplets(ds, count, &mut mine_rng)?;
    let mut robust = 0usize;
    for triplet in &triplets {
        if robust_ordering(triplet, model, cfg)? {
            robust += 1;
        }
    }
    Ok(robust as f64 / count as f64)
}

/// Trains a fresh model on `train_ds`, reporting per-epoch metrics against
/// `val_ds`.
///
/// Epochs are 1-based; with adversarial mode on, odd epochs train on the
/// natural batch and even epochs regenerate single-step adversarial anchors
/// against the current parameters and train on those. Losses are logged
/// before the update, so record 1 shows the initial loss.
pub fn train(
    cfg: &TrainConfig,
    train_ds: &Dataset,
    val_ds: &Dataset,
) -> Result<(MetricModel, MetricsLog)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta = ParamVector::init_small(cfg.ansatz.param_count(), &mut rng);
    let mut model = MetricModel::with_default_layout(cfg.ansatz.clone(), theta, cfg.margin)?;
    let mut optimizer = Optimizer::new(
        cfg.optimizer,
        cfg.learning_rate,
        cfg.ansatz.param_count(),
    );
    let training_attack = AttackConfig {
        mode: AttackMode::SingleStep,
        ..cfg.attack
    };
    let eval_seed = derive_seed(cfg.seed, EVAL_STREAM);
    let mut log = MetricsLog::default();
    let mut best_loss_natural = f64::INFINITY;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batch = mine_triplets(train_ds, cfg.batch_size, &mut rng)?;
        let kind = if cfg.adversarial && epoch % 2 == 0 {
            EpochKind::Adversarial
        } else {
            EpochKind::Natural
        };

        let loss_natural =
            crate::model::triplet_loss(&batch, &model, &mut runtime_mode(cfg.eval_mode, &mut rng))?
                .loss;
        let (gradient, loss_adversarial) = match kind {
            EpochKind::Natural => (
                grad_params(&batch, &model, &mut runtime_mode(cfg.eval_mode, &mut rng))?,
                None,
            ),
            EpochKind::Adversarial => {
                let attacked: Vec<_> = batch
                    .iter()
                    .map(|triplet| {
                        perturb_anchor(triplet, &model, &training_attack)
                            .map(|adv| adv.attacked_triplet())
                    })
                    .collect::<Result<_>>()?;
                let loss = crate::model::triplet_loss(
                    &attacked,
                    &model,
                    &mut runtime_mode(cfg.eval_mode, &mut rng),
                )?
                .loss;
                (
                    grad_params(&attacked, &model, &mut runtime_mode(cfg.eval_mode, &mut rng))?,
                    Some(loss),
                )
            }
        };
        if !loss_natural.is_finite() || loss_adversarial.is_some_and(|l| !l.is_finite()) {
            return Err(Error::Divergence { epoch });
        }

        optimizer.step(model.theta.values_mut(), &gradient.values);
        if model.theta.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }

        let eval = evaluate(&model, val_ds, cfg.eval_triplets, eval_seed, cfg.eval_mode)?;
        best_loss_natural = best_loss_natural.min(loss_natural);
        log.epochs.push(EpochRecord {
            epoch,
            kind,
            loss_natural,
            loss_adversarial,
            best_loss_natural,
            mean_d_p: eval.mean_d_p,
            mean_d_n: eval.mean_d_n,
            ordering_accuracy: eval.ordering_accuracy,
            margin_accuracy: eval.margin_accuracy,
            robust_accuracy: None,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}
