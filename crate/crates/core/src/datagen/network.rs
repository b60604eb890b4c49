use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_graph::{default_cell_ids, CellNetwork, EARTH_RADIUS_KM};

const KM_PER_DEG: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Synthetic topology: Gaussian clusters of cells around uniformly placed centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGenConfig {
    pub n_cells: usize,
    pub n_clusters: usize,
    pub cluster_radius_km: f64,
    #[serde(default = "default_lat_range")]
    pub lat_range: [f64; 2],
    #[serde(default = "default_lon_range")]
    pub lon_range: [f64; 2],
    /// Cluster centres are redrawn until pairwise at least this far apart.
    #[serde(default)]
    pub min_center_separation_km: f64,
}

fn default_lat_range() -> [f64; 2] {
    [37.90, 38.10]
}

fn default_lon_range() -> [f64; 2] {
    [23.60, 23.85]
}

impl NetworkGenConfig {
    pub fn new(n_cells: usize, n_clusters: usize, cluster_radius_km: f64) -> Self {
        NetworkGenConfig {
            n_cells,
            n_clusters,
            cluster_radius_km,
            lat_range: default_lat_range(),
            lon_range: default_lon_range(),
            min_center_separation_km: 0.0,
        }
    }
}

/// Generates cell coordinates and the threshold graph. Cells are split into
/// contiguous equal blocks, one block per cluster.
pub fn generate_network(cfg: &NetworkGenConfig, threshold_km: f64, seed: u64) -> Result<CellNetwork> {
    if cfg.n_clusters == 0 || cfg.n_cells < cfg.n_clusters {
        return Err(Error::validation(format!(
            "network generator needs n_cells >= n_clusters >= 1, got {} and {}",
            cfg.n_cells, cfg.n_clusters
        )));
    }
    if !(cfg.cluster_radius_km >= 0.0) {
        return Err(Error::validation("cluster_radius_km must be >= 0"));
    }
    let [lat_lo, lat_hi] = cfg.lat_range;
    let [lon_lo, lon_hi] = cfg.lon_range;
    if !(lat_lo <= lat_hi && lon_lo <= lon_hi) {
        return Err(Error::validation("bounding box ranges must be ordered"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(cfg.n_clusters);
    let mut attempts = 0;
    while centers.len() < cfg.n_clusters {
        let c = (rng.gen_range(lat_lo..=lat_hi), rng.gen_range(lon_lo..=lon_hi));
        let far_enough = centers.iter().all(|&(la, lo)| {
            let dy = (la - c.0) * KM_PER_DEG;
            let dx = (lo - c.1) * KM_PER_DEG * c.0.to_radians().cos();
            (dx * dx + dy * dy).sqrt() >= cfg.min_center_separation_km
        });
        attempts += 1;
        if far_enough || attempts > 10_000 {
            centers.push(c);
        }
    }

    let sigma = cfg.cluster_radius_km;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut lat = Vec::with_capacity(cfg.n_cells);
    let mut lon = Vec::with_capacity(cfg.n_cells);
    for i in 0..cfg.n_cells {
        let (clat, clon) = centers[i * cfg.n_clusters / cfg.n_cells];
        let dy = normal.sample(&mut rng) * sigma;
        let dx = normal.sample(&mut rng) * sigma;
        let la = (clat + dy / KM_PER_DEG).clamp(-90.0, 90.0);
        let lo = (clon + dx / (KM_PER_DEG * clat.to_radians().cos().max(1e-6))).clamp(-180.0, 180.0);
        lat.push(la);
        lon.push(lo);
    }
    CellNetwork::new(default_cell_ids(cfg.n_cells), lat, lon, threshold_km)
}
