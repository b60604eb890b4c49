use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::sub_seed;
use crate::error::{Error, Result};
use crate::evalx::{ConfusionMatrix, PrecisionRecall};
use crate::numkit::{AdamConfig, Tensor2D};
use crate::prep::WindowedDataset;

use super::input::SeriesInput;
use super::Classifier;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Index into `epochs` of the restored parameters, `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub peak_memory_bytes: u64,
    pub warnings: Vec<String>,
}

impl TrainLog {
    pub fn mean_epoch_secs(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.wall_secs).sum::<f64>() / self.epochs.len() as f64
    }
}

/// Early-stopping objective: precision once recall clears the floor,
/// otherwise `recall - 1` (always below any admissible precision).
pub fn selection_score(pr: &PrecisionRecall, recall_floor: f64) -> f64 {
    if pr.recall >= recall_floor && !pr.recall_undefined {
        pr.precision
    } else {
        pr.recall - 1.0
    }
}

/// Tracks the best score and decides when patience has run out.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub best: f64,
    pub best_epoch: Option<usize>,
    patience: usize,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            best: f64::NEG_INFINITY,
            best_epoch: None,
            patience,
            stale: 0,
        }
    }

    /// Records an epoch; returns `true` when it is the new best.
    pub fn record(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.stale >= self.patience
    }
}

/// Rough bytes held during one training step: parameters with gradients and
/// Adam moments, plus cached activations of one batch.
pub fn memory_estimate<C: Classifier>(model: &C, n_cells: usize) -> u64 {
    let cfg = model.config();
    let rows = (cfg.batch_size * n_cells) as u64;
    let params = model.param_count() as u64 * 4;
    let per_step = (cfg.n_features + cfg.n_gcn * 2 + (cfg.n_gcn + cfg.n_hidden) * 2 + cfg.n_hidden * 6) as u64;
    let steps = cfg.mb as u64 * cfg.n_gru_layers.max(1) as u64;
    8 * (params + rows * per_step * steps)
}

/// Probabilities for every window and cell, window-major.
pub fn predict_proba<C: Classifier>(model: &C, ds: &WindowedDataset) -> Result<Vec<f64>> {
    let input = model.prepare(ds)?;
    Ok(predict_prepared(model, &input, ds))
}

fn predict_prepared<C: Classifier>(model: &C, input: &SeriesInput, ds: &WindowedDataset) -> Vec<f64> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    idx.chunks(EVAL_BATCH).flat_map(|b| model.predict_batch(input, ds, b)).collect()
}

/// Hard labels at the model's decision threshold.
pub fn predict_labels<C: Classifier>(model: &C, ds: &WindowedDataset) -> Result<Vec<bool>> {
    let t = model.config().decision_threshold;
    Ok(predict_proba(model, ds)?.into_iter().map(|p| p >= t).collect())
}

pub fn labels_at(probs: &[f64], threshold: f64) -> Vec<bool> {
    probs.iter().map(|&p| p >= threshold).collect()
}

pub fn evaluate<C: Classifier>(model: &C, ds: &WindowedDataset) -> Result<ConfusionMatrix> {
    let labels = predict_labels(model, ds)?;
    crate::evalx::confusion(&labels, ds.all_targets())
}

/// Mini-batch Adam on the weighted BCE with early stopping on validation
/// precision subject to the recall floor. The best epoch's parameters are
/// restored and rounded to `f32`.
pub fn train_model<C: Classifier>(model: &mut C, train: &WindowedDataset, val: &WindowedDataset) -> Result<TrainLog> {
    let cfg = model.config().clone();
    cfg.validate()?;
    let train_input = model.prepare(train)?;
    let val_input = model.prepare(val)?;
    let mut warnings = Vec::new();
    if train.positive_count() == 0 {
        log::warn!("training set has no positive targets");
        warnings.push("training set has no positive targets".to_string());
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..train.len()).step_by(cfg.train_stride).collect();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<Vec<Tensor2D>> = None;
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            for p in model.params_mut() {
                p.zero_grad();
            }
            loss_sum += model.train_batch(&train_input, train, batch)?;
            batches += 1;
            for p in model.params_mut() {
                adam.step(p)?;
            }
        }
        let probs = predict_prepared(model, &val_input, val);
        let cm = crate::evalx::confusion(&labels_at(&probs, cfg.decision_threshold), val.all_targets())?;
        let pr = cm.scores();
        let train_loss = loss_sum / batches.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::numeric(format!("non-finite training loss at epoch {epoch}")));
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_precision: pr.precision,
            val_recall: pr.recall,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "{} epoch {epoch}: loss {train_loss:.5} val p {:.3} r {:.3}",
            cfg.kind.name(),
            pr.precision,
            pr.recall
        );
        if stopper.record(epoch, selection_score(&pr, cfg.recall_floor)) {
            best = Some(model.named_params().iter().map(|(_, p)| p.value.clone()).collect());
        }
        if stopper.should_stop() {
            break;
        }
    }
    if let Some(values) = best {
        for (p, v) in model.params_mut().into_iter().zip(values) {
            p.value = v;
        }
    }
    for p in model.params_mut() {
        p.zero_grad();
        p.snap_to_f32();
    }
    Ok(TrainLog {
        epochs,
        best_epoch: stopper.best_epoch,
        peak_memory_bytes: memory_estimate(model, train.n_cells()),
        warnings,
    })
}
