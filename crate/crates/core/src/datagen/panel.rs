use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hourly KPI observations for every cell.
///
/// Values are stored hour-major: `kpis[(t * n_cells + m) * n_features + f]`.
/// Masked-out entries hold `NaN` and must never be read as data; `hot` is
/// indexed `t * n_cells + m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiPanel {
    pub cell_ids: Vec<String>,
    pub hours: usize,
    pub n_features: usize,
    pub kpis: Vec<f64>,
    pub mask: Vec<bool>,
    pub hot: Vec<bool>,
}

impl KpiPanel {
    /// Fully observed panel with no hot labels.
    pub fn new(cell_ids: Vec<String>, hours: usize, n_features: usize, kpis: Vec<f64>) -> Result<Self> {
        let n = hours * cell_ids.len() * n_features;
        if kpis.len() != n {
            return Err(Error::validation(format!(
                "panel: {} values for {} hours x {} cells x {} features",
                kpis.len(),
                hours,
                cell_ids.len(),
                n_features
            )));
        }
        let hot = vec![false; hours * cell_ids.len()];
        Ok(KpiPanel {
            cell_ids,
            hours,
            n_features,
            kpis,
            mask: vec![true; n],
            hot,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    #[inline]
    pub fn index(&self, t: usize, m: usize, f: usize) -> usize {
        (t * self.n_cells() + m) * self.n_features + f
    }

    #[inline]
    pub fn row(&self, t: usize, m: usize) -> &[f64] {
        let s = self.index(t, m, 0);
        &self.kpis[s..s + self.n_features]
    }

    #[inline]
    pub fn row_mask(&self, t: usize, m: usize) -> &[bool] {
        let s = self.index(t, m, 0);
        &self.mask[s..s + self.n_features]
    }

    /// `n_cells x n_features` block of hour `t`.
    pub fn hour_slice(&self, t: usize) -> &[f64] {
        let w = self.n_cells() * self.n_features;
        &self.kpis[t * w..(t + 1) * w]
    }

    #[inline]
    pub fn is_hot(&self, t: usize, m: usize) -> bool {
        self.hot[t * self.n_cells() + m]
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn observed_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len().max(1) as f64
    }

    pub fn hot_rate(&self) -> f64 {
        self.hot.iter().filter(|&&h| h).count() as f64 / self.hot.len().max(1) as f64
    }

    /// Panel restricted to `cells` (in that order) and to `features`.
    pub fn select(&self, cells: &[usize], features: &[usize]) -> KpiPanel {
        let nf = features.len();
        let mut kpis = Vec::with_capacity(self.hours * cells.len() * nf);
        let mut mask = Vec::with_capacity(kpis.capacity());
        let mut hot = Vec::with_capacity(self.hours * cells.len());
        for t in 0..self.hours {
            for &m in cells {
                let base = self.index(t, m, 0);
                for &f in features {
                    kpis.push(self.kpis[base + f]);
                    mask.push(self.mask[base + f]);
                }
                hot.push(self.is_hot(t, m));
            }
        }
        KpiPanel {
            cell_ids: cells.iter().map(|&c| self.cell_ids[c].clone()).collect(),
            hours: self.hours,
            n_features: nf,
            kpis,
            mask,
            hot,
        }
    }

    /// Panel restricted to hours `[start, end)`.
    pub fn slice_hours(&self, start: usize, end: usize) -> KpiPanel {
        let w = self.n_cells() * self.n_features;
        let m = self.n_cells();
        KpiPanel {
            cell_ids: self.cell_ids.clone(),
            hours: end - start,
            n_features: self.n_features,
            kpis: self.kpis[start * w..end * w].to_vec(),
            mask: self.mask[start * w..end * w].to_vec(),
            hot: self.hot[start * m..end * m].to_vec(),
        }
    }
}
