use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::KpiPanel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Positive if any hour in the horizon is hot.
    #[default]
    Any,
    /// Positive if the last horizon hour is hot.
    AtHorizon,
}

/// Supervised windows over a panel. Windows are stored as start hours into a
/// shared series, so subsets and splits are cheap.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    series: Arc<[f64]>,
    n_cells: usize,
    n_features: usize,
    mb: usize,
    hz: usize,
    label_mode: LabelMode,
    starts: Vec<usize>,
    targets: Vec<bool>,
    cell_order: Arc<[String]>,
}

/// Builds every window `[s, s + mb)` with its horizon target over `[s + mb, s + mb + hz)`.
pub fn make_windows(panel: &KpiPanel, mb: usize, hz: usize, mode: LabelMode) -> Result<WindowedDataset> {
    if mb == 0 || hz == 0 {
        return Err(Error::validation("memory buffer and horizon must be >= 1 hour"));
    }
    if panel.hours < mb + hz {
        return Err(Error::validation(format!(
            "{} hours cannot hold a {mb}-hour buffer plus {hz}-hour horizon",
            panel.hours
        )));
    }
    let m = panel.n_cells();
    let n = panel.hours - mb - hz + 1;
    let mut targets = vec![false; n * m];
    for s in 0..n {
        let hours = match mode {
            LabelMode::Any => s + mb..s + mb + hz,
            LabelMode::AtHorizon => s + mb + hz - 1..s + mb + hz,
        };
        for t in hours {
            for c in 0..m {
                targets[s * m + c] |= panel.is_hot(t, c);
            }
        }
    }
    Ok(WindowedDataset {
        series: panel.kpis.clone().into(),
        n_cells: m,
        n_features: panel.n_features,
        mb,
        hz,
        label_mode: mode,
        starts: (0..n).collect(),
        targets,
        cell_order: panel.cell_ids.clone().into(),
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mb(&self) -> usize {
        self.mb
    }

    pub fn hz(&self) -> usize {
        self.hz
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn cell_order(&self) -> &[String] {
        &self.cell_order
    }

    pub fn start(&self, i: usize) -> usize {
        self.starts[i]
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Hours touched by window `i`: inputs and horizon, `[start, end)`.
    pub fn span(&self, i: usize) -> (usize, usize) {
        let s = self.starts[i];
        (s, s + self.mb + self.hz)
    }

    /// Window `i` as `mb` consecutive `n_cells x n_features` blocks.
    pub fn window(&self, i: usize) -> &[f64] {
        let w = self.n_cells * self.n_features;
        let s = self.starts[i];
        &self.series[s * w..(s + self.mb) * w]
    }

    /// Hour `step` (0-based within the buffer) of window `i`.
    pub fn step(&self, i: usize, step: usize) -> &[f64] {
        let w = self.n_cells * self.n_features;
        let s = self.starts[i] + step;
        &self.series[s * w..(s + 1) * w]
    }

    /// Absolute hour block of the underlying series.
    pub fn hour(&self, t: usize) -> &[f64] {
        let w = self.n_cells * self.n_features;
        &self.series[t * w..(t + 1) * w]
    }

    pub fn series_hours(&self) -> usize {
        self.series.len() / (self.n_cells * self.n_features).max(1)
    }

    pub fn targets(&self, i: usize) -> &[bool] {
        &self.targets[i * self.n_cells..(i + 1) * self.n_cells]
    }

    pub fn all_targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn positive_count(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }

    /// Windows `range` of this dataset.
    pub fn subset(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        let m = self.n_cells;
        WindowedDataset {
            starts: self.starts[range.clone()].to_vec(),
            targets: self.targets[range.start * m..range.end * m].to_vec(),
            ..self.clone_shared()
        }
    }

    /// Every `stride`-th window.
    pub fn strided(&self, stride: usize) -> WindowedDataset {
        let stride = stride.max(1);
        let m = self.n_cells;
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        WindowedDataset {
            starts: idx.iter().map(|&i| self.starts[i]).collect(),
            targets: idx.iter().flat_map(|&i| self.targets[i * m..(i + 1) * m].iter().copied()).collect(),
            ..self.clone_shared()
        }
    }

    fn clone_shared(&self) -> WindowedDataset {
        WindowedDataset {
            series: Arc::clone(&self.series),
            n_cells: self.n_cells,
            n_features: self.n_features,
            mb: self.mb,
            hz: self.hz,
            label_mode: self.label_mode,
            starts: Vec::new(),
            targets: Vec::new(),
            cell_order: Arc::clone(&self.cell_order),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "split fractions {:?} must be in (0, 1) and sum to 1",
                fr
            )));
        }
        Ok(())
    }

    /// Window indices where val and test begin for `n` windows.
    pub fn boundaries(&self, n: usize) -> [usize; 2] {
        let b1 = (n as f64 * self.train_frac + 1e-9).floor() as usize;
        let b2 = (n as f64 * (self.train_frac + self.val_frac) + 1e-9).floor() as usize;
        [b1, b2]
    }

    /// First hour of the validation and test blocks for a `hours`-long panel
    /// windowed with `mb`, `hz`; hours before the first bound are the
    /// training block (used for normalisation statistics).
    pub fn hour_boundaries(&self, hours: usize, mb: usize, hz: usize) -> [usize; 2] {
        let n = hours.saturating_sub(mb + hz) + 1;
        self.boundaries(n)
    }
}

/// Chronological split. Before each boundary `mb + hz - 1` windows are
/// dropped so no window's hours overlap a window in another split.
pub fn chronological_split(
    ds: &WindowedDataset,
    spec: &SplitSpec,
) -> Result<(WindowedDataset, WindowedDataset, WindowedDataset)> {
    spec.validate()?;
    let n = ds.len();
    let gap = ds.mb + ds.hz - 1;
    let [b1, b2] = spec.boundaries(n);
    let train_end = b1.checked_sub(gap);
    let val_end = b2.checked_sub(gap).filter(|&e| e > b1);
    match (train_end, val_end) {
        (Some(te), Some(ve)) if te > 0 && b2 < n => Ok((ds.subset(0..te), ds.subset(b1..ve), ds.subset(b2..n))),
        _ => Err(Error::validation(format!(
            "{n} windows too few to split {:?} with guard gaps of {gap}",
            [spec.train_frac, spec.val_frac, spec.test_frac]
        ))),
    }
}
