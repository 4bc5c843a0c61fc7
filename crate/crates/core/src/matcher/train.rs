use std::path::{Path, PathBuf};

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{cross_entropy, MatchPrediction};
use super::model::{EmCarModel, ModelConfig};
use crate::data::{compute_metrics, mean_std, DatasetBundle, EntityRecord, Metrics};
use crate::error::{Error, Result};
use crate::serializer::{SerializedPair, DEFAULT_MAX_LEN, MIN_MAX_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_seq_len: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `None` picks 10, 15 or 40 from the dataset size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub seed: u64,
    /// Requests fp16 autocasting; the CPU backend always trains in fp32.
    pub mixed_precision: bool,
    pub runs: usize,
    pub checkpoint_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_seq_len: DEFAULT_MAX_LEN,
            learning_rate: 3e-5,
            weight_decay: 0.01,
            epochs: None,
            batch_size: 32,
            eval_batch_size: 32,
            seed: 0,
            mixed_precision: true,
            runs: 6,
            checkpoint_dir: PathBuf::from("checkpoints"),
        }
    }
}

/// Epoch budget by dataset size: large sets need fewer passes.
pub fn epochs_for_size(pairs: usize) -> usize {
    match pairs {
        n if n > 15000 => 10,
        n if n >= 1000 => 15,
        _ => 40,
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == Some(0) {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.max_seq_len < MIN_MAX_LEN {
            return Err(Error::Config(format!("max_seq_len must be at least {MIN_MAX_LEN}")));
        }
        Ok(())
    }

    /// Explicit epochs, or the size rule applied to the full dataset size.
    pub fn resolved_epochs(&self, dataset_size: usize) -> usize {
        self.epochs.unwrap_or_else(|| epochs_for_size(dataset_size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_valid_f1: f64,
    pub epochs: Vec<EpochRecord>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

fn require_labeled(set: &DatasetBundle, what: &str) -> Result<Vec<u8>> {
    if set.is_empty() {
        return Err(Error::Argument(format!("{what} set is empty")));
    }
    set.labels()
}

/// Builds a fresh model for `model_cfg` (vocabulary learned from the
/// training pairs unless pretrained) and trains it.
pub fn train(
    config: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &DatasetBundle,
    valid_set: &DatasetBundle,
) -> Result<TrainReport> {
    config.validate()?;
    require_labeled(train_set, "training")?;
    let tokenizer = model_cfg.build_tokenizer(&[train_set])?;
    let model = EmCarModel::new(model_cfg, tokenizer, config.max_seq_len, config.seed)?;
    train_model(&model, config, train_set, valid_set)
}

/// Trains `model` in place and keeps the checkpoint with the best
/// validation F1 (the earliest epoch wins ties) in `config.checkpoint_dir`.
pub fn train_model(
    model: &EmCarModel,
    config: &TrainConfig,
    train_set: &DatasetBundle,
    valid_set: &DatasetBundle,
) -> Result<TrainReport> {
    config.validate()?;
    let labels = require_labeled(train_set, "training")?;
    let valid_labels = require_labeled(valid_set, "validation")?;
    if config.mixed_precision {
        log::debug!("mixed precision requested; the CPU backend trains in fp32");
    }
    // Train and valid are 4/5 of a 3:1:1 split.
    let epochs = config.resolved_epochs((train_set.len() + valid_set.len()) * 5 / 4);
    let encoded = model.encode_pairs(&train_set.pairs)?;
    let valid_encoded = model.encode_pairs(&valid_set.pairs)?;

    let steps_per_epoch = encoded.len().div_ceil(config.batch_size);
    let total_steps = epochs * steps_per_epoch;
    let mut opt = AdamW::new(
        model.params().vars(),
        ParamsAdamW {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..Default::default()
        },
    )?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d40f);

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut step = 0usize;
    let mut step_losses = Vec::with_capacity(total_steps);
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 1..=epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps as f64);
            opt.set_learning_rate(lr);
            let batch: Vec<&SerializedPair> = chunk.iter().map(|&i| &encoded[i]).collect();
            let targets: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = model.logits(&batch, Some(&mut dropout_rng))?;
            let loss = cross_entropy(&logits, &targets)?;
            let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                return Err(Error::Divergence { step, loss: value });
            }
            opt.backward_step(&loss)?;
            step_losses.push(value);
            epoch_loss += value;
            step += 1;
        }

        let preds: Vec<u8> = model
            .predict_serialized(&valid_encoded, config.eval_batch_size)?
            .iter()
            .map(|p| p.decision)
            .collect();
        let valid_f1 = compute_metrics(&preds, &valid_labels)?.f1;
        let mean_loss = epoch_loss / steps_per_epoch as f64;
        log::info!("epoch {epoch}/{epochs}: loss {mean_loss:.5}, valid F1 {valid_f1:.4}");
        history.push(EpochRecord {
            epoch,
            mean_loss,
            valid_f1,
        });
        if best.is_none_or(|(_, f)| valid_f1 > f) {
            best = Some((epoch, valid_f1));
            model.save(&config.checkpoint_dir, &model.manifest(epoch, valid_f1, Some(config)))?;
        }
    }

    let (best_epoch, best_valid_f1) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        checkpoint: config.checkpoint_dir.clone(),
        best_epoch,
        best_valid_f1,
        epochs: history,
        step_losses,
    })
}

pub fn evaluate_model(model: &EmCarModel, test_set: &DatasetBundle, batch_size: usize) -> Result<Metrics> {
    let labels = require_labeled(test_set, "test")?;
    let preds: Vec<u8> = model
        .predict_pairs(&test_set.pairs, batch_size)?
        .iter()
        .map(|p| p.decision)
        .collect();
    compute_metrics(&preds, &labels)
}

pub fn evaluate(checkpoint: &Path, test_set: &DatasetBundle) -> Result<Metrics> {
    let (model, manifest) = EmCarModel::load(checkpoint)?;
    let batch = manifest.train.map_or(32, |t| t.eval_batch_size);
    evaluate_model(&model, test_set, batch)
}

pub fn predict_pair(checkpoint: &Path, e1: &EntityRecord, e2: &EntityRecord) -> Result<MatchPrediction> {
    EmCarModel::load(checkpoint)?.0.predict(e1, e2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub best_epoch: usize,
    pub valid_f1: f64,
    pub checkpoint: PathBuf,
    #[serde(flatten)]
    pub test: Metrics,
}

/// Mean precision/recall/F1 over runs, summed confusion counts, and the
/// per-run results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    #[serde(flatten)]
    pub mean: Metrics,
    pub f1_std: f64,
    pub runs: Vec<RunReport>,
}

impl ProtocolReport {
    pub fn from_runs(runs: Vec<RunReport>) -> Self {
        let col = |f: fn(&Metrics) -> f64| runs.iter().map(|r| f(&r.test)).collect::<Vec<_>>();
        let (f1, f1_std) = mean_std(&col(|m| m.f1));
        let mean = Metrics {
            precision: mean_std(&col(|m| m.precision)).0,
            recall: mean_std(&col(|m| m.recall)).0,
            f1,
            true_pos: runs.iter().map(|r| r.test.true_pos).sum(),
            false_pos: runs.iter().map(|r| r.test.false_pos).sum(),
            false_neg: runs.iter().map(|r| r.test.false_neg).sum(),
        };
        Self { mean, f1_std, runs }
    }
}

/// `config.runs` seeded trainings (seeds `seed, seed+1, …`), each scored
/// on `test_set` from its validation-selected checkpoint in
/// `checkpoint_dir/run-K`.
pub fn run_protocol(
    config: &TrainConfig,
    model_cfg: &ModelConfig,
    train_set: &DatasetBundle,
    valid_set: &DatasetBundle,
    test_set: &DatasetBundle,
) -> Result<ProtocolReport> {
    config.validate()?;
    require_labeled(test_set, "test")?;
    let mut runs = Vec::with_capacity(config.runs);
    for k in 0..config.runs {
        let run_cfg = TrainConfig {
            seed: config.seed + k as u64,
            checkpoint_dir: config.checkpoint_dir.join(format!("run-{k}")),
            ..config.clone()
        };
        let report = train(&run_cfg, model_cfg, train_set, valid_set)?;
        let test = evaluate(&report.checkpoint, test_set)?;
        log::info!("run {k} (seed {}): test F1 {:.4}", run_cfg.seed, test.f1);
        runs.push(RunReport {
            seed: run_cfg.seed,
            best_epoch: report.best_epoch,
            valid_f1: report.best_valid_f1,
            checkpoint: report.checkpoint,
            test,
        });
    }
    Ok(ProtocolReport::from_runs(runs))
}
