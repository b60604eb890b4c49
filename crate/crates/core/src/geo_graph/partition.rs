use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::CellNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// Recursive coordinate bisection into contiguous spatial blocks.
    #[default]
    Spatial,
    /// Seeded random balanced assignment, for ablations.
    Random,
}

/// Assignment of every cell to one of `k` near-equal sub-graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGraphPartition {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl SubGraphPartition {
    /// Cells of sub-graph `g`, in increasing global index.
    pub fn members(&self, g: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == g).then_some(i))
            .collect()
    }
}

fn balanced_sizes(n: usize, k: usize) -> Vec<usize> {
    let (q, r) = (n / k, n % k);
    (0..k).map(|i| if i < r { q + 1 } else { q }).collect()
}

/// Splits the network into `k` sub-graphs whose sizes differ by at most one.
///
/// In spatial mode the cell set is cut recursively along its longer axis
/// (cells ordered by that coordinate, then the other, then index), so each
/// block is a contiguous region. `seed` only affects random mode.
pub fn partition_graph(
    net: &CellNetwork,
    k: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<SubGraphPartition> {
    let n = net.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "partition: k = {k} must lie in [1, {n}]"
        )));
    }
    let sizes = balanced_sizes(n, k);
    let mut assignment = vec![0usize; n];
    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        PartitionMode::Spatial => bisect(net, &mut order, &sizes, 0, &mut assignment),
        PartitionMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let mut start = 0;
            for (g, &sz) in sizes.iter().enumerate() {
                for &c in &order[start..start + sz] {
                    assignment[c] = g;
                }
                start += sz;
            }
        }
    }
    Ok(SubGraphPartition {
        k,
        assignment,
        sizes,
    })
}

fn bisect(
    net: &CellNetwork,
    cells: &mut [usize],
    sizes: &[usize],
    first_part: usize,
    assignment: &mut [usize],
) {
    if sizes.len() == 1 {
        for &c in cells.iter() {
            assignment[c] = first_part;
        }
        return;
    }
    let (lat_min, lat_max) = extent(cells.iter().map(|&c| net.lat_deg[c]));
    let (lon_min, lon_max) = extent(cells.iter().map(|&c| net.lon_deg[c]));
    let mid_lat = (0.5 * (lat_min + lat_max)).to_radians();
    let lat_span = lat_max - lat_min;
    let lon_span = (lon_max - lon_min) * mid_lat.cos();
    let by_lat = lat_span >= lon_span;
    cells.sort_by(|&a, &b| {
        let (pa, sa, pb, sb) = if by_lat {
            (net.lat_deg[a], net.lon_deg[a], net.lat_deg[b], net.lon_deg[b])
        } else {
            (net.lon_deg[a], net.lat_deg[a], net.lon_deg[b], net.lat_deg[b])
        };
        pa.total_cmp(&pb).then(sa.total_cmp(&sb)).then(a.cmp(&b))
    });
    let split = sizes.len().div_ceil(2);
    let left_count: usize = sizes[..split].iter().sum();
    let (left, right) = cells.split_at_mut(left_count);
    bisect(net, left, &sizes[..split], first_part, assignment);
    bisect(net, right, &sizes[split..], first_part + split, assignment);
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Sub-graph indices ordered by descending count of hot cell-hours; ties keep
/// index order. `hot` is hour-major: `hot[t * n_cells + m]`.
pub fn rank_subgraphs_by_hotspots(partition: &SubGraphPartition, hot: &[bool]) -> Result<Vec<usize>> {
    let n = partition.assignment.len();
    if n == 0 || !hot.len().is_multiple_of(n) {
        return Err(Error::validation(format!(
            "rank_subgraphs: {} labels do not cover {n} cells",
            hot.len()
        )));
    }
    let mut counts = vec![0usize; partition.k];
    for (idx, &h) in hot.iter().enumerate() {
        if h {
            counts[partition.assignment[idx % n]] += 1;
        }
    }
    let mut order: Vec<usize> = (0..partition.k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(order)
}
