//! Per-bundle training with Adam.

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::eval::{evaluate, EvalMode};
use crate::data::{Dataset, EncodedBundle, InstanceBundle, Vocab};
use crate::error::{Error, Result};
use crate::losses::{interpolated_loss, mle_loss, LossSpec};
use crate::metrics::MetricsReport;
use crate::scorer::{init_params, CompatMode, Dims, Model, ScorerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub dims: Dims,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            loss: LossSpec::default(),
            learning_rate: adam.lr,
            epochs: 20,
            seed: 1,
            dims: Dims::default(),
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.dims.validate()?;
        self.loss.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-bundle value of the maximized objective.
    pub objective: f64,
    pub mle: f64,
    pub aux: f64,
    pub skipped: usize,
    /// Mean per-bundle gold log-likelihood under the end-of-epoch parameters.
    pub train_loglik: f64,
    /// Unlikelihood terms that hit the probability clamp.
    pub clamped: usize,
    pub dev: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
}

/// The bundles to train on: the dataset's bundles, or one single-pair
/// bundle per instance when there are none.
pub fn training_bundles(data: &Dataset) -> Vec<InstanceBundle> {
    if !data.bundles.is_empty() {
        return data.bundles.clone();
    }
    data.instances
        .iter()
        .map(|i| InstanceBundle {
            bundle_id: i.id.clone(),
            context: i.context.clone(),
            questions: vec![i.question.clone()],
            answers: vec![i.answer.clone()],
            gold: vec![(0, 0)],
            source: crate::data::BundleSource::Synthetic,
        })
        .collect()
}

/// Trains from `init` (or a fresh seeded initialization over `data.vocab`).
/// Bundles are visited in sorted-id order with one Adam step each. Bundles
/// the loss cannot use are skipped and counted; if every bundle is skipped
/// the run aborts. Dev metrics (independent mode) are recorded per epoch
/// when `dev` is given.
pub fn train(cfg: &TrainConfig, data: &Dataset, dev: Option<&Dataset>, init: Option<Model>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (mut params, vocab): (ScorerParams, Vocab) = match init {
        Some(m) => (m.params, m.vocab),
        None => (init_params(cfg.seed, cfg.dims, data.vocab.len())?, data.vocab.clone()),
    };
    let mut bundles = training_bundles(data);
    if bundles.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    bundles.sort_by(|a, b| a.bundle_id.cmp(&b.bundle_id));
    let encoded: Vec<EncodedBundle> = bundles.iter().map(|b| EncodedBundle::new(b, &vocab)).collect();
    let adam = cfg.adam();
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (mut obj, mut mle, mut aux) = (0.0, 0.0, 0.0);
        let (mut used, mut skipped, mut clamped) = (0usize, 0usize, 0usize);
        for (b, enc) in bundles.iter().zip(&encoded) {
            let eval = match interpolated_loss(&cfg.loss, &params, enc) {
                Ok(e) => e,
                Err(Error::UnsupportedBundle(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(Error::Aborted(format!("bundle {}: {e}", b.bundle_id))),
            };
            adam_step(&mut params, &eval.grad, &mut state, &adam)
                .map_err(|e| Error::Aborted(format!("bundle {}: {e}", b.bundle_id)))?;
            obj += eval.value;
            mle += eval.mle;
            aux += eval.aux;
            clamped += eval.clamped;
            used += 1;
        }
        if used == 0 {
            return Err(Error::Aborted(format!(
                "loss {} could not use any of the {} bundles",
                cfg.loss.variant,
                bundles.len()
            )));
        }
        let n = used as f64;
        let train_loglik = end_of_epoch_loglik(&params, &encoded)?;
        let dev = match dev {
            Some(d) => Some(evaluate(&params, &vocab, d, EvalMode::Independent, cfg.loss.compat)?.report),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            objective: obj / n,
            mle: mle / n,
            aux: aux / n,
            skipped,
            train_loglik,
            clamped,
            dev,
        });
    }
    Ok(TrainOutcome {
        model: Model { params, vocab },
        history,
    })
}

fn end_of_epoch_loglik(params: &ScorerParams, bundles: &[EncodedBundle]) -> Result<f64> {
    let mut total = 0.0;
    for b in bundles {
        for &(q, a) in &b.gold {
            total += mle_loss(params, &b.context, &b.questions[q], &b.answers[a], CompatMode::Ln)?;
        }
    }
    Ok(total / bundles.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::{generate_synthetic, GeneratorConfig};
    use crate::losses::LossVariant;

    fn tiny() -> (TrainConfig, Dataset) {
        let data = generate_synthetic(&GeneratorConfig {
            n_train_bundles: 20,
            n_dev_bundles: 0,
            ..Default::default()
        })
        .unwrap()
        .train;
        let cfg = TrainConfig {
            epochs: 2,
            dims: Dims {
                d: 4,
                d_pos: 2,
                hidden: 5,
                max_len: 3,
            },
            ..Default::default()
        };
        (cfg, data)
    }

    #[test]
    fn zero_alpha2_matches_mle() {
        let (cfg, data) = tiny();
        let mle = train(&cfg, &data, None, None).unwrap();
        let mut qc = cfg.clone();
        qc.loss = LossSpec {
            variant: LossVariant::CeQc,
            alpha2: 0.0,
            ..cfg.loss
        };
        let qc = train(&qc, &data, None, None).unwrap();
        assert_eq!(mle.model.params, qc.model.params);
        let obj = |h: &[EpochRecord]| h.iter().map(|r| r.objective.to_bits()).collect::<Vec<_>>();
        assert_eq!(obj(&mle.history), obj(&qc.history));
    }

    #[test]
    fn joint_loss_on_two_gold_bundles_skips_nothing() {
        let (mut cfg, data) = tiny();
        cfg.loss = LossSpec::new(LossVariant::CeJt);
        let out = train(&cfg, &data, None, None).unwrap();
        assert!(out.history.iter().all(|r| r.skipped == 0));
    }

    #[test]
    fn all_skipped_aborts() {
        let (mut cfg, mut data) = tiny();
        cfg.loss = LossSpec::new(LossVariant::CeJt);
        data.bundles.clear();
        assert!(matches!(train(&cfg, &data, None, None), Err(Error::Aborted(_))));
    }

    #[test]
    fn reproducible() {
        let (cfg, data) = tiny();
        let a = train(&cfg, &data, None, None).unwrap();
        let b = train(&cfg, &data, None, None).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn bad_config() {
        let (mut cfg, data) = tiny();
        cfg.learning_rate = 0.0;
        assert!(matches!(train(&cfg, &data, None, None), Err(Error::Config(_))));
    }
}
