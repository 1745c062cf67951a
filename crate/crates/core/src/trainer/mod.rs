//! Optimization loop, loss wiring, checkpointing and the cross-corpus
//! train/evaluate workflow.

mod adam;
mod checkpoint;

pub use adam::{adam_step, adam_update, AdamState};
pub use checkpoint::{
    config_hash, load_checkpoint, load_checkpoint_for_resume, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::FramePredictions;
use crate::dataio::ModalityBundle;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, AggregationMethod, EvalLevel, GoldLabel};
use crate::model::{forward, forward_graph, register_bundle, Mode, ModelConfig, ModelParams};
use crate::tensor::Graph;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// 0 is allowed and performs null updates (useful for dry runs).
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub seed: u64,
    /// Optional per-class loss weights (length K).
    pub class_weights: Option<Vec<f32>>,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            class_weights: None,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Parameter(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.patience < 1 {
            return Err(Error::Parameter("patience must be >= 1".into()));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != classes {
                return Err(Error::Parameter(format!(
                    "{} class weights for {classes} classes",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::Parameter("class weights must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_macro_f1: f64,
    /// Informational only; excluded from the emitted table so logs of equal
    /// runs stay byte-identical.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// Line-oriented table: epoch, mean loss, train frame accuracy,
    /// validation macro F1. Deterministic for equal runs.
    pub fn to_table(&self) -> String {
        let mut s = String::from("# epoch\tmean_loss\ttrain_acc\tval_macro_f1\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                e.epoch, e.mean_loss, e.train_accuracy, e.val_macro_f1
            );
        }
        s
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (last epoch when no
    /// validation set was given).
    pub params: ModelParams<f32>,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

fn check_labeled(set: &[ModalityBundle], classes: usize) -> Result<()> {
    for b in set {
        let targets = b.frame_targets()?;
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::Data {
                video_id: b.video_id.clone(),
                reason: format!("label {bad} outside [0, {classes})"),
            });
        }
    }
    Ok(())
}

/// Validation macro F1: frame-level when every bundle carries frame labels,
/// otherwise video-level with majority voting.
fn validation_macro_f1(
    val_set: &[ModalityBundle],
    params: &ModelParams<f32>,
    config: &ModelConfig,
) -> Result<f64> {
    let preds: Vec<FramePredictions> = val_set
        .iter()
        .map(|b| forward(b, params, config, Mode::Eval))
        .collect::<Result<_>>()?;
    let frame_level = val_set.iter().all(|b| b.frame_labels.is_some());
    let golds: Vec<(String, GoldLabel)> = val_set
        .iter()
        .map(|b| {
            let gold = match (&b.frame_labels, b.label) {
                (Some(f), _) if frame_level => GoldLabel::Frames(f.clone()),
                (_, Some(l)) => GoldLabel::Video(l),
                (Some(f), None) => GoldLabel::Frames(f.clone()),
                (None, None) => unreachable!("validated labeled"),
            };
            (b.video_id.clone(), gold)
        })
        .collect();
    let level = if frame_level { EvalLevel::Frame } else { EvalLevel::Video };
    let report = evaluate(&preds, &golds, config.classes, level, AggregationMethod::Vote)?;
    Ok(report.macro_f1)
}

/// Adam training, one video per optimization step. Deterministic for a given
/// (seed, data, configs) triple: shuffling and dropout share one seeded
/// stream, and the best-validation parameters are retained (ties keep the
/// earlier epoch).
pub fn train(
    train_set: &[ModalityBundle],
    val_set: &[ModalityBundle],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate(model_config.classes)?;
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    check_labeled(train_set, model_config.classes)?;
    check_labeled(val_set, model_config.classes)?;

    let mut params = ModelParams::<f32>::init(model_config, train_config.seed)?;
    let mut state = AdamState::new(&params);
    // Stream 1 keeps the loop's randomness independent of init's stream.
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    rng.set_stream(1);

    let class_weights = train_config.class_weights.as_deref();
    let mut log = TrainLog::default();
    let mut best: Option<(usize, f64, ModelParams<f32>)> = None;
    let mut stale_epochs = 0usize;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..train_config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut frames_seen = 0usize;
        let mut frames_correct = 0usize;
        for &i in &order {
            let bundle = &train_set[i];
            let targets = bundle.frame_targets()?;
            let mut g = Graph::<f32>::new();
            let vars = params.register(&mut g)?;
            let feats = register_bundle(&mut g, bundle)?;
            let trace = forward_graph(&mut g, &feats, &vars, model_config, &mut Mode::Train(&mut rng))?;
            let loss = g.cross_entropy(trace.logits, &targets, class_weights)?;
            loss_sum += g.value(loss)[0] as f64;

            let logits = g.value(trace.logits);
            for (t, &target) in targets.iter().enumerate() {
                let row = &logits[t * model_config.classes..(t + 1) * model_config.classes];
                if crate::aggregation::argmax(row) == target {
                    frames_correct += 1;
                }
            }
            frames_seen += targets.len();

            g.backward(loss)?;
            params.pull_grads(&g, &vars);
            adam_step(&mut params, &mut state, train_config)?;
        }

        let val_macro_f1 = if val_set.is_empty() {
            0.0
        } else {
            validation_macro_f1(val_set, &params, model_config)?
        };
        log.epochs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / train_set.len() as f64,
            train_accuracy: frames_correct as f64 / frames_seen as f64,
            val_macro_f1,
            wall_time_s: started.elapsed().as_secs_f64(),
        });

        if !val_set.is_empty() {
            let improved = best.as_ref().is_none_or(|(_, f1, _)| val_macro_f1 > *f1);
            if improved {
                best = Some((epoch, val_macro_f1, params.clone()));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= train_config.patience {
                    break;
                }
            }
        }
    }

    let (best_epoch, best_val_f1, best_params) = match best {
        Some((e, f1, p)) => (e, f1, p),
        None => (log.epochs.len().saturating_sub(1), 0.0, params),
    };
    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
        best_val_f1,
    })
}
