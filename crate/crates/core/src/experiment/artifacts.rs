//! On-disk records exchanged between pipeline stages.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datagen::KpiPanel;
use crate::ensemble::Predictor;
use crate::error::{Error, Result};
use crate::evalx::{ConfusionMatrix, CrossEvalGrid, SimilarityStudy};
use crate::geo_graph::{PartitionMode, Spectrum};
use crate::models::{write_atomic, Container, Entry, ModelKind, TrainLog};
use crate::numkit::Tensor2D;

pub const CELLS_CSV: &str = "cells.csv";
pub const KPIS_CSV: &str = "kpis.csv";
pub const HOT_CSV: &str = "hot.csv";
pub const SCORE_CONFIG_JSON: &str = "score_config.json";
pub const GEN_SUMMARY_JSON: &str = "gen_summary.json";
pub const SELECTED_FEATURES_JSON: &str = "selected_features.json";
pub const PREP_STATS_JSON: &str = "prep_stats.json";
pub const PREPARED_LNET: &str = "prepared.lnet";
pub const PARTITION_JSON: &str = "partition.json";
pub const TRAIN_LOG_JSON: &str = "train_log.json";
pub const TRAIN_EVAL_JSON: &str = "train_eval.json";
pub const CROSS_EVAL_CSV: &str = "cross_eval.csv";
pub const SIMILARITY_CSV: &str = "similarity_study.csv";
pub const CROSS_EVAL_JSON: &str = "crosseval.json";
pub const ENSEMBLE_JSON: &str = "ensemble.json";
pub const REPORT_JSON: &str = "report.json";
pub const PROFILE_CSV: &str = "profile.csv";

/// Checkpoint path (relative to the run directory) of a trained model.
pub fn checkpoint_file(kind: ModelKind, sg: usize) -> String {
    let prefix = match kind {
        ModelKind::Lightning => "sc",
        ModelKind::Lstm => "lstm",
        ModelKind::Gcn => "gcn",
    };
    format!("checkpoints/{prefix}{sg}.lnet")
}

pub fn hm_checkpoint_file(sg: usize) -> String {
    format!("checkpoints/hm{sg}.lnet")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub congestion: usize,
    pub burst: usize,
    pub plateau: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub n_cells: usize,
    pub hours: usize,
    pub n_features: usize,
    pub hot_rate: f64,
    pub observed_fraction: f64,
    pub events: EventCounts,
    /// Features the generator drives during events (absent for external cells).
    pub sensitive_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatures {
    pub method: String,
    /// Selected raw feature indices, in selection order.
    pub features: Vec<usize>,
    /// Per-feature score of the method (|r|, |beta|), when it has one.
    pub feature_scores: Vec<f64>,
    /// In-sample R^2 of a least-squares fit on the selected features.
    pub score: f64,
    pub dropped_near_zero_variance: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepStatsFile {
    pub features: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub train_hours: usize,
    pub imputed_columns_zero_filled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PreparedHeader {
    hours: usize,
    n_cells: usize,
    features: Vec<usize>,
}

/// Stores the normalised, feature-selected panel with its hot labels.
pub fn save_prepared(panel: &KpiPanel, features: &[usize], path: &Path) -> Result<()> {
    let m = panel.n_cells();
    let header = PreparedHeader {
        hours: panel.hours,
        n_cells: m,
        features: features.to_vec(),
    };
    let hot = panel.hot.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect();
    let c = Container {
        config_json: serde_json::to_string(&header).map_err(|e| Error::format(e.to_string()))?,
        entries: vec![
            Entry {
                name: "kpis".into(),
                value: Tensor2D::new(panel.hours * m, panel.n_features, panel.kpis.clone())?,
            },
            Entry {
                name: "hot".into(),
                value: Tensor2D::new(panel.hours, m, hot)?,
            },
        ],
    };
    write_atomic(path, &c.to_bytes())
}

pub fn load_prepared(path: &Path, cell_ids: &[String]) -> Result<KpiPanel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let c = Container::from_bytes(&bytes)?;
    let header: PreparedHeader =
        serde_json::from_str(&c.config_json).map_err(|e| Error::format(format!("prepared panel: {e}")))?;
    if header.n_cells != cell_ids.len() {
        return Err(Error::data(format!(
            "prepared panel has {} cells, cells.csv has {}",
            header.n_cells,
            cell_ids.len()
        )));
    }
    let kpis = c.entry("kpis")?;
    let hot = c.entry("hot")?;
    if kpis.shape() != (header.hours * header.n_cells, header.features.len()) || hot.shape() != (header.hours, header.n_cells)
    {
        return Err(Error::format("prepared panel: entry shapes disagree with header"));
    }
    let mut panel = KpiPanel::new(
        cell_ids.to_vec(),
        header.hours,
        header.features.len(),
        kpis.data().to_vec(),
    )?;
    panel.hot = hot.data().iter().map(|&v| v > 0.5).collect();
    Ok(panel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphInfo {
    /// Index in the raw partition; sub-graphs are stored in rank order.
    pub partition_index: usize,
    pub cells: Vec<usize>,
    pub n_edges: usize,
    /// Hot cell-hours inside the training block, the ranking key.
    pub hot_cell_hours: usize,
    pub energy_rank: usize,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub k: usize,
    pub mode: PartitionMode,
    pub threshold_km: f64,
    pub subgraphs: Vec<SubgraphInfo>,
    pub similarity: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub sg: usize,
    pub kind: ModelKind,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub sg: usize,
    pub kind: ModelKind,
    pub best_epoch: Option<usize>,
    pub val: ConfusionMatrix,
    pub test: ConfusionMatrix,
    pub test_precision: f64,
    pub test_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalFile {
    pub grid: CrossEvalGrid,
    pub study: SimilarityStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub sg: usize,
    /// `None` when there is a single sub-graph and no hierarchical model.
    pub hm_best_epoch: Option<usize>,
    /// Confusions on the held-out half of validation used for the fallback.
    pub hm_select: Option<ConfusionMatrix>,
    pub sc_select: Vec<ConfusionMatrix>,
    pub chosen: Predictor,
    pub hm_test: Option<ConfusionMatrix>,
    pub sc_test: Vec<ConfusionMatrix>,
    pub chosen_test: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub rows: Vec<EnsembleRow>,
}
