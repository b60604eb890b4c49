//! Hierarchical model over sub-classifier labels, and the fallback rule.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::sub_seed;
use crate::error::{Error, Result};
use crate::evalx::{confusion, ConfusionMatrix, PrecisionRecall};
use crate::models::layers::Dense;
use crate::models::{
    labels_at, selection_score, write_atomic, Container, EarlyStopper, EpochLog, Entry, TrainLog,
};
use crate::numkit::{bce_logit_grad, bce_term, sigmoid, AdamConfig, Param, Tensor2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmConfig {
    pub h1: usize,
    pub h2: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub pos_weight: f64,
    pub decision_threshold: f64,
    pub recall_floor: f64,
    /// After training, move `decision_threshold` to the cutoff that scores
    /// best on the training rows (precision once recall clears the floor).
    pub tune_threshold: bool,
    /// Feed sub-classifier probabilities instead of hard labels.
    pub probability_inputs: bool,
    pub seed: u64,
}

impl Default for HmConfig {
    fn default() -> Self {
        HmConfig {
            h1: 16,
            h2: 8,
            lr: 1e-2,
            epochs: 100,
            batch_size: 256,
            patience: 15,
            pos_weight: 1.0,
            decision_threshold: 0.5,
            recall_floor: 0.05,
            tune_threshold: true,
            probability_inputs: false,
            seed: 0,
        }
    }
}

impl HmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 || self.batch_size == 0 {
            return Err(Error::validation("hm: hidden sizes and batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return Err(Error::validation("hm: lr must be >= 0 and pos_weight > 0"));
        }
        if !(0.0..=1.0).contains(&self.recall_floor) || !self.decision_threshold.is_finite() {
            return Err(Error::validation("hm: recall_floor must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Rows of sub-classifier outputs (one column per sub-classifier) with the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct HmDataset {
    pub inputs: Tensor2D,
    pub truth: Vec<bool>,
}

impl HmDataset {
    /// `outputs[j]` holds sub-classifier j's labels (or probabilities) over
    /// the same flattened window×cell grid as `truth`.
    pub fn from_columns(outputs: &[Vec<f64>], truth: &[bool]) -> Result<HmDataset> {
        if outputs.is_empty() {
            return Err(Error::validation("hm: no sub-classifier outputs"));
        }
        if let Some(bad) = outputs.iter().find(|o| o.len() != truth.len()) {
            return Err(Error::validation(format!(
                "hm: output column has {} rows, truth has {}",
                bad.len(),
                truth.len()
            )));
        }
        let k = outputs.len();
        let mut data = vec![0.0; truth.len() * k];
        for (j, col) in outputs.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * k + j] = v;
            }
        }
        Ok(HmDataset {
            inputs: Tensor2D::new(truth.len(), k, data)?,
            truth: truth.to_vec(),
        })
    }

    pub fn from_labels(labels: &[Vec<bool>], truth: &[bool]) -> Result<HmDataset> {
        let cols: Vec<Vec<f64>> = labels
            .iter()
            .map(|l| l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        HmDataset::from_columns(&cols, truth)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn k(&self) -> usize {
        self.inputs.cols()
    }

    fn rows(&self, idx: &[usize]) -> (Tensor2D, Tensor2D) {
        let k = self.k();
        let mut x = Tensor2D::zeros(idx.len(), k);
        let mut y = Tensor2D::zeros(idx.len(), 1);
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.inputs.row(i));
            y.set(r, 0, if self.truth[i] { 1.0 } else { 0.0 });
        }
        (x, y)
    }
}

/// Three dense layers with ReLU between them and a sigmoid on top.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    pub config: HmConfig,
    pub fc1: Dense,
    pub fc2: Dense,
    pub fc3: Dense,
}

struct Pass {
    x: Tensor2D,
    a1: Tensor2D,
    a2: Tensor2D,
    logits: Tensor2D,
}

fn relu_mask(dy: &mut Tensor2D, act: &Tensor2D) {
    for (g, &a) in dy.data_mut().iter_mut().zip(act.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

impl HierarchicalModel {
    pub fn new(k: usize, config: HmConfig) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::validation("hm: needs at least one sub-classifier input"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut hm = HierarchicalModel {
            fc1: Dense::new(k, config.h1, &mut rng),
            fc2: Dense::new(config.h1, config.h2, &mut rng),
            fc3: Dense::new(config.h2, 1, &mut rng),
            config,
        };
        for p in hm.params_mut() {
            p.snap_to_f32();
        }
        Ok(hm)
    }

    pub fn k(&self) -> usize {
        self.fc1.w.shape().0
    }

    pub fn params(&self) -> [(&'static str, &Param); 6] {
        [
            ("hm.fc1.w", &self.fc1.w),
            ("hm.fc1.b", &self.fc1.b),
            ("hm.fc2.w", &self.fc2.w),
            ("hm.fc2.b", &self.fc2.b),
            ("hm.fc3.w", &self.fc3.w),
            ("hm.fc3.b", &self.fc3.b),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 6] {
        [
            &mut self.fc1.w,
            &mut self.fc1.b,
            &mut self.fc2.w,
            &mut self.fc2.b,
            &mut self.fc3.w,
            &mut self.fc3.b,
        ]
    }

    fn pass(&self, x: Tensor2D) -> Pass {
        let a1 = self.fc1.forward(&x).map(|v| v.max(0.0));
        let a2 = self.fc2.forward(&a1).map(|v| v.max(0.0));
        let logits = self.fc3.forward(&a2);
        Pass { x, a1, a2, logits }
    }

    /// Probability for one row of `k` sub-classifier outputs.
    pub fn forward(&self, labels: &[f64]) -> Result<f64> {
        if labels.len() != self.k() {
            return Err(Error::validation(format!(
                "hm: got {} inputs, model has k = {}",
                labels.len(),
                self.k()
            )));
        }
        let x = Tensor2D::new(1, labels.len(), labels.to_vec())?;
        Ok(sigmoid(self.pass(x).logits.get(0, 0)))
    }

    pub fn predict_proba(&self, ds: &HmDataset) -> Result<Vec<f64>> {
        if ds.k() != self.k() {
            return Err(Error::validation(format!("hm: dataset has k = {}, model {}", ds.k(), self.k())));
        }
        Ok(self.pass(ds.inputs.clone()).logits.data().iter().map(|&z| sigmoid(z)).collect())
    }

    pub fn predict_labels(&self, ds: &HmDataset) -> Result<Vec<bool>> {
        Ok(labels_at(&self.predict_proba(ds)?, self.config.decision_threshold))
    }

    pub fn evaluate(&self, ds: &HmDataset) -> Result<ConfusionMatrix> {
        confusion(&self.predict_labels(ds)?, &ds.truth)
    }

    /// Accumulates gradients of the mean weighted BCE over `idx` and returns the loss.
    pub fn train_batch(&mut self, ds: &HmDataset, idx: &[usize]) -> f64 {
        let (x, y) = ds.rows(idx);
        let pass = self.pass(x);
        let n = idx.len().max(1) as f64;
        let mut loss = 0.0;
        let mut d3 = Tensor2D::zeros(idx.len(), 1);
        for ((g, &z), &t) in d3.data_mut().iter_mut().zip(pass.logits.data()).zip(y.data()) {
            let p = sigmoid(z);
            loss += bce_term(p, t, self.config.pos_weight).0;
            *g = bce_logit_grad(p, t, self.config.pos_weight) / n;
        }
        let mut d2 = self.fc3.backward(&pass.a2, &d3);
        relu_mask(&mut d2, &pass.a2);
        let mut d1 = self.fc2.backward(&pass.a1, &d2);
        relu_mask(&mut d1, &pass.a1);
        self.fc1.backward(&pass.x, &d1);
        loss / n
    }

    /// Writes the model in the checkpoint container format.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_container()?.to_bytes())
    }

    pub fn to_container(&self) -> Result<Container> {
        let config_json = serde_json::to_string(&self.config).map_err(|e| Error::format(e.to_string()))?;
        let entries = self
            .params()
            .iter()
            .map(|(name, p)| Entry {
                name: name.to_string(),
                value: p.value.clone(),
            })
            .collect();
        Ok(Container { config_json, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_container(&Container::from_bytes(&bytes)?)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config: HmConfig =
            serde_json::from_str(&c.config_json).map_err(|e| Error::format(format!("hm checkpoint config: {e}")))?;
        let k = c.entry("hm.fc1.w")?.rows();
        let mut hm = HierarchicalModel::new(k, config).map_err(|e| Error::format(format!("hm checkpoint: {e}")))?;
        if c.entries.len() != 6 {
            return Err(Error::format(format!("hm checkpoint: {} entries, expected 6", c.entries.len())));
        }
        let names: Vec<&str> = hm.params().iter().map(|(n, _)| *n).collect();
        for (name, p) in names.into_iter().zip(hm.params_mut()) {
            let v = c.entry(name)?;
            if v.shape() != p.shape() {
                return Err(Error::format(format!("hm checkpoint: entry '{name}' has shape {:?}", v.shape())));
            }
            p.value = v.clone();
        }
        Ok(hm)
    }
}

/// Mini-batch Adam with early stopping on validation precision; restores the
/// best epoch, then tunes the decision threshold when configured to.
pub fn train_hm(hm: &mut HierarchicalModel, train: &HmDataset, val: &HmDataset) -> Result<TrainLog> {
    let cfg = hm.config.clone();
    if train.k() != hm.k() || val.k() != hm.k() {
        return Err(Error::validation("hm: dataset width differs from k"));
    }
    let mut warnings = Vec::new();
    if !train.truth.iter().any(|&t| t) {
        log::warn!("hm training set has no positive targets");
        warnings.push("hm training set has no positive targets".to_string());
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<Vec<Tensor2D>> = None;
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            for p in hm.params_mut() {
                p.zero_grad();
            }
            loss_sum += hm.train_batch(train, idx);
            batches += 1;
            for p in hm.params_mut() {
                adam.step(p)?;
            }
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::numeric(format!("hm: non-finite training loss at epoch {epoch}")));
        }
        let pr = hm.evaluate(val)?.scores();
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_precision: pr.precision,
            val_recall: pr.recall,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        if stopper.record(epoch, selection_score(&pr, cfg.recall_floor)) {
            best = Some(hm.params().iter().map(|(_, p)| p.value.clone()).collect());
        }
        if stopper.should_stop() {
            break;
        }
    }
    if let Some(values) = best {
        for (p, v) in hm.params_mut().into_iter().zip(values) {
            p.value = v;
        }
    }
    for p in hm.params_mut() {
        p.zero_grad();
        p.snap_to_f32();
    }
    if cfg.tune_threshold {
        hm.config.decision_threshold = tune_threshold(hm, train)?;
    }
    let peak_memory_bytes = (hm.params().iter().map(|(_, p)| p.value.data().len()).sum::<usize>() * 4 * 8) as u64;
    Ok(TrainLog {
        epochs,
        best_epoch: stopper.best_epoch,
        peak_memory_bytes,
        warnings,
    })
}

/// The lowest cutoff among the HM's distinct output probabilities that
/// maximises the early-stopping score on `ds`. Keeps the current cutoff
/// when `ds` has no positives.
pub fn tune_threshold(hm: &HierarchicalModel, ds: &HmDataset) -> Result<f64> {
    if !ds.truth.iter().any(|&t| t) {
        return Ok(hm.config.decision_threshold);
    }
    let probs = hm.predict_proba(ds)?;
    let mut cutoffs = probs.clone();
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();
    let mut best = (f64::NEG_INFINITY, hm.config.decision_threshold);
    for t in cutoffs {
        let score = selection_score(&confusion(&labels_at(&probs, t), &ds.truth)?.scores(), hm.config.recall_floor);
        if score > best.0 {
            best = (score, t);
        }
    }
    Ok(best.1)
}

/// Who makes the final call on a target sub-graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Predictor {
    Hierarchical,
    SubClassifier(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMetric {
    #[default]
    Precision,
    Recall,
}

impl SelectMetric {
    pub fn of(self, pr: &PrecisionRecall) -> f64 {
        match self {
            SelectMetric::Precision => pr.precision,
            SelectMetric::Recall => pr.recall,
        }
    }
}

/// HM unless some sub-classifier beats it strictly; among sub-classifiers
/// the lowest index wins ties.
pub fn fallback_select(hm: &PrecisionRecall, scs: &[PrecisionRecall], metric: SelectMetric) -> Result<Predictor> {
    if scs.is_empty() {
        return Err(Error::validation("fallback_select: no sub-classifier reports"));
    }
    let mut best = 0;
    for (j, pr) in scs.iter().enumerate().skip(1) {
        if metric.of(pr) > metric.of(&scs[best]) {
            best = j;
        }
    }
    if metric.of(hm) >= metric.of(&scs[best]) {
        Ok(Predictor::Hierarchical)
    } else {
        Ok(Predictor::SubClassifier(best))
    }
}
