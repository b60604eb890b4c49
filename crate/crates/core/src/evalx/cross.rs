use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_graph::Adjacency;
use crate::models::{evaluate, Classifier};
use crate::prep::WindowedDataset;

use super::{aggregate_confusion, ConfusionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
}

/// `cms[i][j]`: sub-classifier `i` evaluated on sub-graph `j`'s windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalGrid {
    pub cms: Vec<Vec<ConfusionMatrix>>,
    pub precision: Vec<Vec<f64>>,
    pub recall: Vec<Vec<f64>>,
    /// Per sub-classifier, pooled over all target sub-graphs.
    pub micro: Vec<ConfusionMatrix>,
    /// Per sub-classifier `(precision, recall)` averaged over targets.
    pub macro_avg: Vec<(f64, f64)>,
}

impl CrossEvalGrid {
    pub fn from_confusions(cms: Vec<Vec<ConfusionMatrix>>) -> Result<Self> {
        let k = cms.len();
        if k == 0 || cms.iter().any(|row| row.len() != k) {
            return Err(Error::validation("cross-evaluation grid must be k x k with k >= 1"));
        }
        let scores: Vec<Vec<_>> = cms.iter().map(|row| row.iter().map(|cm| cm.scores()).collect()).collect();
        let precision = scores.iter().map(|r| r.iter().map(|s| s.precision).collect()).collect();
        let recall = scores.iter().map(|r| r.iter().map(|s| s.recall).collect()).collect();
        let micro = cms.iter().map(|row| aggregate_confusion(row)).collect::<Result<_>>()?;
        let macro_avg = scores
            .iter()
            .map(|r| {
                let n = r.len() as f64;
                (
                    r.iter().map(|s| s.precision).sum::<f64>() / n,
                    r.iter().map(|s| s.recall).sum::<f64>() / n,
                )
            })
            .collect();
        Ok(CrossEvalGrid {
            cms,
            precision,
            recall,
            micro,
            macro_avg,
        })
    }

    pub fn k(&self) -> usize {
        self.cms.len()
    }

    pub fn value(&self, metric: Metric, i: usize, j: usize) -> f64 {
        match metric {
            Metric::Precision => self.precision[i][j],
            Metric::Recall => self.recall[i][j],
        }
    }
}

/// Evaluates every model on every sub-graph, re-binding model `i` to
/// sub-graph `j`'s graph first.
pub fn cross_evaluate<C: Classifier + Sync>(
    models: &[C],
    datasets: &[WindowedDataset],
    graphs: &[Adjacency],
) -> Result<CrossEvalGrid> {
    let k = models.len();
    if datasets.len() != k || graphs.len() != k {
        return Err(Error::validation(format!(
            "cross_evaluate: {k} models, {} datasets, {} graphs",
            datasets.len(),
            graphs.len()
        )));
    }
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let flat: Vec<ConfusionMatrix> = cells
        .par_iter()
        .map(|&(i, j)| {
            let model = models[i].rebind(&graphs[j]);
            evaluate(&model, &datasets[j])
                .map_err(|e| Error::validation(format!("cross_evaluate (SC{i} on SG{j}): {e}")))
        })
        .collect::<Result<_>>()?;
    CrossEvalGrid::from_confusions(flat.chunks(k).map(|r| r.to_vec()).collect())
}

/// `metric(SC_i on SG_i) / metric(SC_i on SG_j)`; `None` when the denominator is zero.
pub fn transfer_ratio(grid: &CrossEvalGrid, metric: Metric, i: usize, j: usize) -> Option<f64> {
    let den = grid.value(metric, i, j);
    if den > 0.0 {
        Some(grid.value(metric, i, i) / den)
    } else {
        None
    }
}
