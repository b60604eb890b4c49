//! Cell graph construction: geodesic distances, threshold adjacency, the
//! renormalised GCN operator, Laplacian spectra, partitioning, and spectral
//! sub-graph similarity.

mod adjacency;
mod cells_csv;
mod eigen;
mod geodesic;
mod network;
mod operator;
mod partition;
mod similarity;

pub use adjacency::{
    add_self_loops, build_adjacency, degree_matrix, laplacian, renormalize_adjacency, Adjacency,
};
pub use cells_csv::{cells_csv, parse_cells_csv, read_cells_csv};
pub use eigen::{symmetric_eigenvalues, Spectrum};
pub use geodesic::{distance_matrix, geodesic_distance, validate_coordinate, EARTH_RADIUS_KM};
pub use network::{default_cell_ids, CellNetwork};
pub use operator::GraphOperator;
pub use partition::{partition_graph, rank_subgraphs_by_hotspots, PartitionMode, SubGraphPartition};
pub use similarity::{energy_rank, subgraph_similarity};
