use crate::error::{Error, Result};
use crate::numkit::Tensor2D;

const SYM_TOL: f64 = 1e-9;

fn require_square(m: &Tensor2D, op: &str) -> Result<usize> {
    if m.rows() != m.cols() {
        return Err(Error::validation(format!(
            "{op}: expected a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m.rows())
}

/// Thresholds a strictly upper-triangular distance matrix into a symmetric
/// 0/1 adjacency with zero diagonal.
pub fn build_adjacency(dist: &Tensor2D, threshold_km: f64) -> Result<Tensor2D> {
    if !(threshold_km >= 0.0) {
        return Err(Error::validation(format!(
            "adjacency threshold must be >= 0 km, got {threshold_km}"
        )));
    }
    let n = require_square(dist, "build_adjacency")?;
    let mut a = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if dist.get(i, j) <= threshold_km {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    Ok(a)
}

/// `A + I`. The input must not already carry self-loops.
pub fn add_self_loops(a: &Tensor2D) -> Result<Tensor2D> {
    let n = require_square(a, "add_self_loops")?;
    let mut out = a.clone();
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(Error::validation(format!(
                "add_self_loops: diagonal entry {i} is already {}",
                a.get(i, i)
            )));
        }
        out.set(i, i, 1.0);
    }
    Ok(out)
}

/// Diagonal matrix of row sums.
pub fn degree_matrix(a: &Tensor2D) -> Result<Tensor2D> {
    let n = require_square(a, "degree_matrix")?;
    let mut d = Tensor2D::zeros(n, n);
    for i in 0..n {
        d.set(i, i, a.row(i).iter().sum());
    }
    Ok(d)
}

/// `D̃^(-1/2) Ã D̃^(-1/2)`, evaluated entrywise as `ã_ij / sqrt(d_i d_j)`.
pub fn renormalize_adjacency(a_tilde: &Tensor2D, degree: &Tensor2D) -> Result<Tensor2D> {
    let n = require_square(a_tilde, "renormalize_adjacency")?;
    if degree.shape() != (n, n) {
        return Err(Error::validation(format!(
            "renormalize_adjacency: degree matrix {}x{} does not match {n}x{n}",
            degree.rows(),
            degree.cols()
        )));
    }
    let d: Vec<f64> = (0..n).map(|i| degree.get(i, i)).collect();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::numeric(format!(
            "renormalize_adjacency: singular degree at node {i} ({})",
            d[i]
        )));
    }
    let mut out = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = a_tilde.get(i, j);
            if a != 0.0 {
                out.set(i, j, a / (d[i] * d[j]).sqrt());
            }
        }
    }
    Ok(out)
}

/// Combinatorial Laplacian `L = D - A` of a symmetric adjacency with zero diagonal.
pub fn laplacian(a: &Tensor2D) -> Result<Tensor2D> {
    let n = require_square(a, "laplacian")?;
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(Error::validation(format!(
                "laplacian: nonzero diagonal at {i}"
            )));
        }
        for j in (i + 1)..n {
            if (a.get(i, j) - a.get(j, i)).abs() > SYM_TOL {
                return Err(Error::validation(format!(
                    "laplacian: adjacency not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = a.map(|v| -v);
    for i in 0..n {
        let deg: f64 = a.row(i).iter().sum();
        l.set(i, i, deg);
    }
    Ok(l)
}

/// Undirected simple graph as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Reads a dense symmetric 0/1 matrix.
    pub fn from_dense(a: &Tensor2D) -> Result<Self> {
        let n = require_square(a, "adjacency")?;
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            if a.get(i, i) != 0.0 {
                return Err(Error::validation(format!("adjacency: self-loop at {i}")));
            }
            for j in 0..n {
                let v = a.get(i, j);
                if v != a.get(j, i) {
                    return Err(Error::validation(format!(
                        "adjacency: not symmetric at ({i}, {j})"
                    )));
                }
                if v == 1.0 {
                    neighbors[i].push(j);
                } else if v != 0.0 {
                    return Err(Error::validation(format!(
                        "adjacency: entry ({i}, {j}) = {v} is not 0/1"
                    )));
                }
            }
        }
        Ok(Adjacency { neighbors })
    }

    /// Builds from an undirected edge list; duplicates are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::validation(format!(
                    "adjacency: invalid edge ({i}, {j}) for {n} nodes"
                )));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Adjacency { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn to_dense(&self) -> Tensor2D {
        let n = self.len();
        let mut a = Tensor2D::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a.set(i, j, 1.0);
            }
        }
        a
    }

    /// Induced sub-graph over `nodes` (in the given order); edges leaving the set are dropped.
    pub fn induced(&self, nodes: &[usize]) -> Adjacency {
        let mut local = vec![usize::MAX; self.len()];
        for (k, &g) in nodes.iter().enumerate() {
            local[g] = k;
        }
        let neighbors = nodes
            .iter()
            .map(|&g| {
                let mut l: Vec<usize> = self.neighbors[g]
                    .iter()
                    .filter_map(|&h| (local[h] != usize::MAX).then_some(local[h]))
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        Adjacency { neighbors }
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}
