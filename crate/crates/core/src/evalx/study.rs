use serde::{Deserialize, Serialize};

use crate::datagen::sub_seed;
use crate::error::{Error, Result};
use crate::geo_graph::{subgraph_similarity, Spectrum};

use super::{holm_adjust, spearman, transfer_ratio, CrossEvalGrid, Metric};

/// One (anchor, other) sub-graph pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub anchor: usize,
    pub other: usize,
    pub similarity: f64,
    pub precision_ratio: Option<f64>,
    pub recall_ratio: Option<f64>,
}

/// Correlation of similarity against one transfer ratio for one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTest {
    pub anchor: usize,
    pub metric: Metric,
    pub n_pairs: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub adjusted_p: Option<f64>,
    pub rejected: bool,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStudy {
    pub alpha: f64,
    pub pairs: Vec<PairRow>,
    pub tests: Vec<AnchorTest>,
}

/// For every anchor `i`, correlates `sim(SG_i, SG_j)` with the transfer ratio
/// over `j != i`, then Holm-corrects the `k` tests of each metric.
pub fn similarity_vs_transfer_study(
    spectra: &[Spectrum],
    grid: &CrossEvalGrid,
    alpha: f64,
    seed: u64,
) -> Result<SimilarityStudy> {
    let k = grid.k();
    if spectra.len() != k {
        return Err(Error::validation(format!(
            "similarity study: {} spectra for a {k}x{k} grid",
            spectra.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            pairs.push(PairRow {
                anchor: i,
                other: j,
                similarity: subgraph_similarity(&spectra[i], &spectra[j]),
                precision_ratio: transfer_ratio(grid, Metric::Precision, i, j),
                recall_ratio: transfer_ratio(grid, Metric::Recall, i, j),
            });
        }
    }
    let mut tests = Vec::new();
    for metric in [Metric::Precision, Metric::Recall] {
        let mut block = Vec::new();
        for i in 0..k {
            let pts: Vec<(f64, f64)> = pairs
                .iter()
                .filter(|p| p.anchor == i)
                .filter_map(|p| {
                    let r = match metric {
                        Metric::Precision => p.precision_ratio,
                        Metric::Recall => p.recall_ratio,
                    };
                    r.map(|r| (p.similarity, r))
                })
                .collect();
            let mut t = AnchorTest {
                anchor: i,
                metric,
                n_pairs: pts.len(),
                rho: None,
                p_value: None,
                adjusted_p: None,
                rejected: false,
                notice: None,
            };
            if pts.len() < 3 {
                t.notice = Some(format!("skipped: {} valid pairs, need 3", pts.len()));
            } else {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                let s = spearman(&xs, &ys, sub_seed(seed, i as u64))?;
                t.rho = s.rho;
                t.p_value = s.p_value;
                if s.rho.is_none() {
                    t.notice = Some("correlation undefined: constant input".into());
                }
            }
            block.push(t);
        }
        let tested: Vec<usize> = (0..block.len()).filter(|&b| block[b].p_value.is_some()).collect();
        let ps: Vec<f64> = tested.iter().map(|&b| block[b].p_value.unwrap()).collect();
        let holm = holm_adjust(&ps, alpha)?;
        for (n, &b) in tested.iter().enumerate() {
            block[b].adjusted_p = Some(holm.adjusted[n]);
            block[b].rejected = holm.rejected[n];
        }
        tests.extend(block);
    }
    Ok(SimilarityStudy { alpha, pairs, tests })
}
