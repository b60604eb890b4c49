use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// GCN layer, GRU stack, sigmoid head.
    Lightning,
    /// Per-cell LSTM, no graph term.
    Lstm,
    /// Two GCN layers on the latest hour only.
    Gcn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lightning => "lightning",
            ModelKind::Lstm => "lstm",
            ModelKind::Gcn => "gcn",
        }
    }
}

/// Architecture and training hyper-parameters shared by all classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub mb: usize,
    pub hz: usize,
    pub n_features: usize,
    pub n_gcn: usize,
    pub n_hidden: usize,
    pub n_gru_layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub pos_weight: f64,
    pub decision_threshold: f64,
    pub recall_floor: f64,
    /// Train on every `train_stride`-th window.
    pub train_stride: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Lightning,
            mb: 24,
            hz: 12,
            n_features: 35,
            n_gcn: 64,
            n_hidden: 64,
            n_gru_layers: 1,
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            patience: 10,
            pos_weight: 1.0,
            decision_threshold: 0.5,
            recall_floor: 0.05,
            train_stride: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mb", self.mb),
            ("hz", self.hz),
            ("n_features", self.n_features),
            ("n_gcn", self.n_gcn),
            ("n_hidden", self.n_hidden),
            ("batch_size", self.batch_size),
            ("train_stride", self.train_stride),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::validation(format!("model config: {name} must be >= 1")));
        }
        if !(1..=3).contains(&self.n_gru_layers) {
            return Err(Error::validation(format!(
                "model config: n_gru_layers = {} outside 1..=3",
                self.n_gru_layers
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("model config: lr must be finite and >= 0"));
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return Err(Error::validation("model config: pos_weight must be > 0"));
        }
        if !self.decision_threshold.is_finite() || !(0.0..=1.0).contains(&self.recall_floor) {
            return Err(Error::validation("model config: bad decision_threshold or recall_floor"));
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: ModelKind) -> ModelConfig {
        ModelConfig { kind, ..self.clone() }
    }
}
