use serde::{Deserialize, Serialize};

use crate::ensemble::Predictor;
use crate::error::Result;
use crate::evalx::{aggregate_confusion, AnchorTest, ConfusionMatrix};
use crate::models::ModelKind;

use super::artifacts::*;
use super::config::{GraphConfig, WindowConfig};
use super::pipeline::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub confusion: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
}

impl From<ConfusionMatrix> for Scored {
    fn from(cm: ConfusionMatrix) -> Self {
        let pr = cm.scores();
        Scored {
            confusion: cm,
            precision: pr.precision,
            recall: pr.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_cells: usize,
    pub hours: usize,
    pub raw_features: usize,
    pub hot_rate: f64,
    pub observed_fraction: f64,
    pub selection_method: String,
    pub selected_features: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphSummary {
    pub sg: usize,
    pub n_cells: usize,
    pub n_edges: usize,
    pub hot_cell_hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub sg: usize,
    pub kind: ModelKind,
    pub best_epoch: Option<usize>,
    pub test: Scored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSummary {
    pub kind: ModelKind,
    pub test: Scored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalSummary {
    pub precision: Vec<Vec<f64>>,
    pub recall: Vec<Vec<f64>>,
    /// Per sub-classifier, pooled over every target sub-graph.
    pub pooled: Vec<Scored>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub sg: usize,
    pub chosen: Predictor,
    pub hm_test: Option<Scored>,
    /// Best sub-classifier precision on this sub-graph's test windows.
    pub best_sc_test_precision: f64,
    pub chosen_test: Scored,
}

/// Everything a run produced, without timings, so identical runs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub seed: u64,
    pub windows: WindowConfig,
    pub graph: GraphConfig,
    pub data: DataSummary,
    pub subgraphs: Vec<SubgraphSummary>,
    pub models: Vec<ModelSummary>,
    pub pooled: Vec<PooledSummary>,
    pub cross_eval: CrossEvalSummary,
    pub similarity_tests: Vec<AnchorTest>,
    pub ensemble: Vec<EnsembleSummary>,
    pub ensemble_pooled: Scored,
}

pub fn build_report(exp: &Experiment) -> Result<Report> {
    let c = &exp.config;
    let gen: GenSummary = read_json(&exp.path(GEN_SUMMARY_JSON))?;
    let selected: SelectedFeatures = read_json(&exp.path(SELECTED_FEATURES_JSON))?;
    let part: PartitionFile = read_json(&exp.path(PARTITION_JSON))?;
    let evals: Vec<ModelEval> = read_json(&exp.path(TRAIN_EVAL_JSON))?;
    let cross: CrossEvalFile = read_json(&exp.path(CROSS_EVAL_JSON))?;
    let ens: EnsembleFile = read_json(&exp.path(ENSEMBLE_JSON))?;

    let kinds: Vec<ModelKind> = std::iter::once(ModelKind::Lightning).chain(c.baselines.iter().copied()).collect();
    let pooled = kinds
        .iter()
        .filter_map(|&kind| {
            let cms: Vec<ConfusionMatrix> = evals.iter().filter(|e| e.kind == kind).map(|e| e.test).collect();
            aggregate_confusion(&cms).ok().map(|cm| PooledSummary { kind, test: cm.into() })
        })
        .collect();
    let ensemble: Vec<EnsembleSummary> = ens
        .rows
        .iter()
        .map(|r| EnsembleSummary {
            sg: r.sg,
            chosen: r.chosen,
            hm_test: r.hm_test.map(Scored::from),
            best_sc_test_precision: r.sc_test.iter().map(|cm| cm.scores().precision).fold(0.0, f64::max),
            chosen_test: r.chosen_test.into(),
        })
        .collect();
    let chosen: Vec<ConfusionMatrix> = ens.rows.iter().map(|r| r.chosen_test).collect();
    Ok(Report {
        tool: format!("lightningnet {}", env!("CARGO_PKG_VERSION")),
        seed: c.seed,
        windows: c.windows,
        graph: c.graph,
        data: DataSummary {
            n_cells: gen.n_cells,
            hours: gen.hours,
            raw_features: gen.n_features,
            hot_rate: gen.hot_rate,
            observed_fraction: gen.observed_fraction,
            selection_method: selected.method,
            selected_features: selected.features,
        },
        subgraphs: part
            .subgraphs
            .iter()
            .enumerate()
            .map(|(sg, s)| SubgraphSummary {
                sg,
                n_cells: s.cells.len(),
                n_edges: s.n_edges,
                hot_cell_hours: s.hot_cell_hours,
            })
            .collect(),
        models: evals
            .iter()
            .map(|e| ModelSummary {
                sg: e.sg,
                kind: e.kind,
                best_epoch: e.best_epoch,
                test: e.test.into(),
            })
            .collect(),
        pooled,
        cross_eval: CrossEvalSummary {
            precision: cross.grid.precision.clone(),
            recall: cross.grid.recall.clone(),
            pooled: cross.grid.micro.iter().map(|&cm| cm.into()).collect(),
        },
        similarity_tests: cross.study.tests,
        ensemble,
        ensemble_pooled: aggregate_confusion(&chosen)?.into(),
    })
}
