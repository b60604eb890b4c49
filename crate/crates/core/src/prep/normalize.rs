use serde::{Deserialize, Serialize};

use crate::datagen::KpiPanel;
use crate::error::{Error, Result};

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PrepStats {
    /// Statistics over hours `[0, hours)` of `panel`, pooled across cells.
    pub fn fit(panel: &KpiPanel, hours: usize) -> Result<PrepStats> {
        if hours == 0 || hours > panel.hours {
            return Err(Error::validation(format!(
                "normalisation window of {hours} hours for a {}-hour panel",
                panel.hours
            )));
        }
        let f = panel.n_features;
        let block = &panel.kpis[..hours * panel.n_cells() * f];
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("normalisation requires an imputed panel"));
        }
        let n = (block.len() / f) as f64;
        let mut mean = vec![0.0; f];
        for (i, v) in block.iter().enumerate() {
            mean[i % f] += v;
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for (i, v) in block.iter().enumerate() {
            var[i % f] += (v - mean[i % f]).powi(2);
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        Ok(PrepStats { mean, std })
    }

    pub fn apply(&self, panel: &KpiPanel) -> Result<KpiPanel> {
        let f = panel.n_features;
        if self.mean.len() != f {
            return Err(Error::validation(format!(
                "stats for {} features applied to a {f}-feature panel",
                self.mean.len()
            )));
        }
        let mut out = panel.clone();
        for (i, v) in out.kpis.iter_mut().enumerate() {
            let j = i % f;
            *v = if self.std[j] > 0.0 { (*v - self.mean[j]) / self.std[j] } else { 0.0 };
        }
        Ok(out)
    }

    pub fn select(&self, features: &[usize]) -> PrepStats {
        PrepStats {
            mean: features.iter().map(|&f| self.mean[f]).collect(),
            std: features.iter().map(|&f| self.std[f]).collect(),
        }
    }
}

/// Z-scores the whole panel with statistics from its first `train_hours`.
pub fn zscore_normalize(panel: &KpiPanel, train_hours: usize) -> Result<(KpiPanel, PrepStats)> {
    let stats = PrepStats::fit(panel, train_hours)?;
    Ok((stats.apply(panel)?, stats))
}
