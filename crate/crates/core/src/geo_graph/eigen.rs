use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Tensor2D;

const SYMMETRY_TOL: f64 = 1e-9;
const OFF_DIAGONAL_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// All eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps continue until the off-diagonal Frobenius norm drops below 1e-10;
/// after 100 sweeps without reaching it a numeric error carrying the residual
/// is returned.
pub fn symmetric_eigenvalues(m: &Tensor2D) -> Result<Spectrum> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::validation(format!(
            "symmetric_eigenvalues: matrix is {}x{}, not square",
            m.rows(),
            m.cols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m.get(i, j) - m.get(j, i)).abs() > SYMMETRY_TOL {
                return Err(Error::validation(format!(
                    "symmetric_eigenvalues: asymmetry {} at ({i}, {j})",
                    (m.get(i, j) - m.get(j, i)).abs()
                )));
            }
        }
    }
    let mut a = m.data().to_vec();
    // Work on the exactly symmetrised matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, n);
        if off < OFF_DIAGONAL_TOL {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::numeric(format!(
                "jacobi eigensolver did not converge after {MAX_SWEEPS} sweeps (off-diagonal norm {off:e})"
            )));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, n, p, q);
            }
        }
        sweeps += 1;
    }

    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(Spectrum { eigenvalues })
}

/// Annihilates `a[p][q]` with one plane rotation.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = c * apk - s * aqk;
        a[q * n + k] = s * apk + c * aqk;
    }
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_graph::laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn determinant(m: &Tensor2D) -> f64 {
        // Gaussian elimination with partial pivoting.
        let n = m.rows();
        let mut a = m.data().to_vec();
        let mut det = 1.0;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
                .unwrap();
            if a[piv * n + col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
            }
        }
        det
    }

    #[test]
    fn diagonal_input() {
        let m = Tensor2D::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        assert_eq!(symmetric_eigenvalues(&m).unwrap().eigenvalues, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn complete_graph_laplacian() {
        let k3 = Tensor2D::from_rows(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let s = symmetric_eigenvalues(&laplacian(&k3).unwrap()).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([3.0, 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn path_laplacian() {
        // det(L - λI) = -λ(λ-1)(λ-3) for P3.
        let p3 = Tensor2D::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let s = symmetric_eigenvalues(&laplacian(&p3).unwrap()).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([3.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_and_determinant_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let mut m = Tensor2D::zeros(8, 8);
            for i in 0..8 {
                for j in i..8 {
                    let v = rng.gen_range(-2.0..2.0);
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
            let s = symmetric_eigenvalues(&m).unwrap();
            let trace: f64 = (0..8).map(|i| m.get(i, i)).sum();
            assert!((trace - s.eigenvalues.iter().sum::<f64>()).abs() < 1e-8);
            let det = determinant(&m);
            let prod: f64 = s.eigenvalues.iter().product();
            assert!((det - prod).abs() <= 1e-6 * det.abs().max(1e-12), "{det} vs {prod}");
            assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Tensor2D::from_rows(&[&[1.0, 2.0], &[2.1, 1.0]]);
        assert!(matches!(symmetric_eigenvalues(&m), Err(Error::Validation(_))));
    }
}
