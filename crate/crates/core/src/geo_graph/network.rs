use crate::error::{Error, Result};
use crate::numkit::Tensor2D;

use super::{build_adjacency, distance_matrix, laplacian, symmetric_eigenvalues, Adjacency, Spectrum};

/// Cells with coordinates and the distance-threshold graph over them.
#[derive(Debug, Clone, PartialEq)]
pub struct CellNetwork {
    pub cell_ids: Vec<String>,
    pub lat_deg: Vec<f64>,
    pub lon_deg: Vec<f64>,
    pub adjacency: Adjacency,
    pub threshold_km: f64,
}

impl CellNetwork {
    pub fn new(cell_ids: Vec<String>, lat_deg: Vec<f64>, lon_deg: Vec<f64>, threshold_km: f64) -> Result<Self> {
        if cell_ids.len() != lat_deg.len() || lat_deg.len() != lon_deg.len() {
            return Err(Error::validation(format!(
                "network: {} ids, {} latitudes, {} longitudes",
                cell_ids.len(),
                lat_deg.len(),
                lon_deg.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = cell_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::validation(format!("network: duplicate cell id {dup:?}")));
        }
        let dist = distance_matrix(&lat_deg, &lon_deg)?;
        let adjacency = Adjacency::from_dense(&build_adjacency(&dist, threshold_km)?)?;
        Ok(CellNetwork {
            cell_ids,
            lat_deg,
            lon_deg,
            adjacency,
            threshold_km,
        })
    }

    /// Convenience constructor with generated ids `c0000`, `c0001`, ...
    pub fn from_coordinates(lat_deg: Vec<f64>, lon_deg: Vec<f64>, threshold_km: f64) -> Result<Self> {
        let ids = default_cell_ids(lat_deg.len());
        CellNetwork::new(ids, lat_deg, lon_deg, threshold_km)
    }

    pub fn len(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_ids.is_empty()
    }

    /// Rebuilds the adjacency for a different distance threshold.
    pub fn with_threshold(&self, threshold_km: f64) -> Result<Self> {
        CellNetwork::new(
            self.cell_ids.clone(),
            self.lat_deg.clone(),
            self.lon_deg.clone(),
            threshold_km,
        )
    }

    /// The induced network over `cells`; edges leaving the set are dropped.
    pub fn subnetwork(&self, cells: &[usize]) -> CellNetwork {
        CellNetwork {
            cell_ids: cells.iter().map(|&c| self.cell_ids[c].clone()).collect(),
            lat_deg: cells.iter().map(|&c| self.lat_deg[c]).collect(),
            lon_deg: cells.iter().map(|&c| self.lon_deg[c]).collect(),
            adjacency: self.adjacency.induced(cells),
            threshold_km: self.threshold_km,
        }
    }

    pub fn laplacian_spectrum(&self) -> Result<Spectrum> {
        symmetric_eigenvalues(&laplacian(&self.adjacency.to_dense())?)
    }

    pub fn dense_adjacency(&self) -> Tensor2D {
        self.adjacency.to_dense()
    }
}

pub fn default_cell_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i:04}")).collect()
}
