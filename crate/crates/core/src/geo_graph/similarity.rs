use super::Spectrum;

const MASS_FRACTION: f64 = 0.9;

/// Smallest `k` whose top-`k` eigenvalues carry at least 90% of the total.
/// An all-zero spectrum gets `k = 1`.
pub fn energy_rank(spec: &Spectrum) -> usize {
    let total: f64 = spec.eigenvalues.iter().sum();
    if spec.eigenvalues.is_empty() || total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, &v) in spec.eigenvalues.iter().enumerate() {
        acc += v;
        if acc / total >= MASS_FRACTION - 1e-12 {
            return i + 1;
        }
    }
    spec.eigenvalues.len()
}

/// Sum of squared differences of the leading Laplacian eigenvalues.
///
/// Uses the smaller of the two spectra's 90%-energy ranks. Missing entries
/// (a spectrum shorter than `k`) count as zero.
pub fn subgraph_similarity(a: &Spectrum, b: &Spectrum) -> f64 {
    let k = energy_rank(a).min(energy_rank(b));
    (0..k)
        .map(|i| {
            let x = a.eigenvalues.get(i).copied().unwrap_or(0.0);
            let y = b.eigenvalues.get(i).copied().unwrap_or(0.0);
            (x - y) * (x - y)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo_graph::{laplacian, symmetric_eigenvalues, Adjacency};

    fn spectrum(n: usize, edges: &[(usize, usize)]) -> Spectrum {
        let a = Adjacency::from_edges(n, edges).unwrap().to_dense();
        symmetric_eigenvalues(&laplacian(&a).unwrap()).unwrap()
    }

    #[test]
    fn path_versus_triangle() {
        let p3 = spectrum(3, &[(0, 1), (1, 2)]);
        let k3 = spectrum(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(energy_rank(&p3), 2);
        assert_eq!(energy_rank(&k3), 2);
        assert!((subgraph_similarity(&p3, &k3) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn identical_and_isomorphic() {
        let a = spectrum(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]);
        assert_eq!(subgraph_similarity(&a, &a), 0.0);
        // relabel 0..4 -> 4..0
        let b = spectrum(5, &[(4, 3), (3, 2), (2, 1), (1, 0), (4, 2)]);
        assert!(subgraph_similarity(&a, &b) < 1e-9);
    }

    #[test]
    fn empty_graphs() {
        let e = spectrum(4, &[]);
        assert_eq!(energy_rank(&e), 1);
        assert_eq!(subgraph_similarity(&e, &e), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn symmetric_nonnegative(xs in proptest::collection::vec(0.0f64..10.0, 1..8), ys in proptest::collection::vec(0.0f64..10.0, 1..8)) {
            let mut xs = xs;
            let mut ys = ys;
            xs.sort_by(|a, b| b.total_cmp(a));
            ys.sort_by(|a, b| b.total_cmp(a));
            let a = Spectrum { eigenvalues: xs };
            let b = Spectrum { eigenvalues: ys };
            let ab = subgraph_similarity(&a, &b);
            proptest::prop_assert!(ab >= 0.0);
            proptest::prop_assert_eq!(ab, subgraph_similarity(&b, &a));
        }
    }
}
