use crate::numkit::Tensor2D;

use super::Adjacency;

/// Sparse renormalised adjacency `D̃^(-1/2)(A + I)D̃^(-1/2)` in CSR form.
///
/// Entries are computed exactly as [`super::renormalize_adjacency`] does, so
/// `to_dense` matches the dense pipeline bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    adjacency: Adjacency,
}

impl GraphOperator {
    pub fn new(adjacency: &Adjacency) -> Self {
        let n = adjacency.len();
        let deg: Vec<f64> = (0..n).map(|i| adjacency.degree(i) as f64 + 1.0).collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let mut cols: Vec<usize> = adjacency.neighbors(i).to_vec();
            cols.push(i);
            cols.sort_unstable();
            for j in cols {
                col_idx.push(j);
                values.push(1.0 / (deg[i] * deg[j]).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        GraphOperator {
            n,
            row_ptr,
            col_idx,
            values,
            adjacency: adjacency.clone(),
        }
    }

    /// Operator over `n` isolated nodes (`Â = I`).
    pub fn isolated(n: usize) -> Self {
        GraphOperator::new(&Adjacency::empty(n))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn to_dense(&self) -> Tensor2D {
        let mut d = Tensor2D::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d.set(i, self.col_idx[k], self.values[k]);
            }
        }
        d
    }

    /// `Â · x` for an `n x c` input. `Â` is symmetric, so this also serves as `Âᵀ · x`.
    pub fn apply(&self, x: &Tensor2D) -> Tensor2D {
        debug_assert_eq!(x.rows(), self.n);
        let mut out = Tensor2D::zeros(self.n, x.cols());
        self.apply_acc(x, &mut out);
        out
    }

    /// `out += Â · x`.
    pub fn apply_acc(&self, x: &Tensor2D, out: &mut Tensor2D) {
        let c = x.cols();
        for i in 0..self.n {
            let orow = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[k];
                let xrow = &x.data()[self.col_idx[k] * c..(self.col_idx[k] + 1) * c];
                for (o, v) in orow.iter_mut().zip(xrow) {
                    *o += w * v;
                }
            }
        }
    }

    /// Applies the operator to a raw row-major `n x c` slice.
    pub fn apply_slice(&self, x: &[f64], c: usize) -> Tensor2D {
        let mut out = Tensor2D::zeros(self.n, c);
        for i in 0..self.n {
            let orow = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[k];
                let j = self.col_idx[k];
                for (o, v) in orow.iter_mut().zip(&x[j * c..(j + 1) * c]) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_graph::{add_self_loops, degree_matrix, renormalize_adjacency};
    use crate::numkit::matmul;

    #[test]
    fn matches_dense_pipeline() {
        let adj = Adjacency::from_edges(5, &[(0, 1), (1, 2), (2, 0), (3, 4)]).unwrap();
        let at = add_self_loops(&adj.to_dense()).unwrap();
        let dense = renormalize_adjacency(&at, &degree_matrix(&at).unwrap()).unwrap();
        let op = GraphOperator::new(&adj);
        assert_eq!(op.to_dense(), dense);

        let x = Tensor2D::from_rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0], &[-2.0, 1.0], &[0.0, 4.0]]);
        assert!(op.apply(&x).max_abs_diff(&matmul(&dense, &x).unwrap()) < 1e-15);
        assert_eq!(op.apply(&x), op.apply_slice(x.data(), 2));
    }

    #[test]
    fn two_node_graph_is_half() {
        let op = GraphOperator::new(&Adjacency::from_edges(2, &[(0, 1)]).unwrap());
        assert_eq!(op.to_dense(), Tensor2D::filled(2, 2, 0.5));
    }

    #[test]
    fn isolated_is_identity() {
        assert_eq!(GraphOperator::isolated(3).to_dense(), Tensor2D::identity(3));
    }
}
