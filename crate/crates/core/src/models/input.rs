use crate::error::{Error, Result};
use crate::geo_graph::GraphOperator;
use crate::numkit::Tensor2D;
use crate::prep::WindowedDataset;

/// Hour-major model input aligned with a dataset's series: `T x cells x width`.
#[derive(Debug, Clone)]
pub struct SeriesInput {
    data: Vec<f64>,
    n_cells: usize,
    width: usize,
}

impl SeriesInput {
    /// The dataset's own features.
    pub fn raw(ds: &WindowedDataset) -> Result<SeriesInput> {
        let hours = ds.series_hours();
        let mut data = Vec::with_capacity(hours * ds.n_cells() * ds.n_features());
        for t in 0..hours {
            data.extend_from_slice(ds.hour(t));
        }
        check_finite(&data)?;
        Ok(SeriesInput {
            data,
            n_cells: ds.n_cells(),
            width: ds.n_features(),
        })
    }

    /// `Â·X_t` for every hour.
    pub fn propagated(ds: &WindowedDataset, op: &GraphOperator) -> Result<SeriesInput> {
        if op.len() != ds.n_cells() {
            return Err(Error::validation(format!(
                "graph operator over {} cells applied to a {}-cell dataset",
                op.len(),
                ds.n_cells()
            )));
        }
        let hours = ds.series_hours();
        let f = ds.n_features();
        let mut data = Vec::with_capacity(hours * ds.n_cells() * f);
        for t in 0..hours {
            data.extend_from_slice(op.apply_slice(ds.hour(t), f).data());
        }
        check_finite(&data)?;
        Ok(SeriesInput {
            data,
            n_cells: ds.n_cells(),
            width: f,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Stacks hour `start(b) + step` of every window in `batch`.
    pub fn gather(&self, ds: &WindowedDataset, batch: &[usize], step: usize) -> Tensor2D {
        let block = self.n_cells * self.width;
        let mut data = Vec::with_capacity(batch.len() * block);
        for &b in batch {
            let t = ds.start(b) + step;
            data.extend_from_slice(&self.data[t * block..(t + 1) * block]);
        }
        Tensor2D::new(batch.len() * self.n_cells, self.width, data).expect("gather shape")
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("model input contains non-finite values"));
    }
    Ok(())
}

/// Targets of `batch` as a column of 0/1.
pub fn batch_targets(ds: &WindowedDataset, batch: &[usize]) -> Tensor2D {
    let data = batch
        .iter()
        .flat_map(|&b| ds.targets(b).iter().map(|&t| if t { 1.0 } else { 0.0 }))
        .collect::<Vec<_>>();
    Tensor2D::new(data.len(), 1, data).expect("target shape")
}
