use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample size whose permutation distribution is enumerated exactly.
pub const EXACT_MAX_N: usize = 8;
pub const MONTE_CARLO_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    /// `None` when either input is constant.
    pub rho: Option<f64>,
    /// Two-sided permutation p-value.
    pub p_value: Option<f64>,
    pub exact: bool,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_centered(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let den = (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|y| y * y).sum::<f64>()).sqrt();
    num / den
}

fn centered(v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.into_iter().map(|x| x - mean).collect()
}

/// Visits every permutation of `v` (Heap's algorithm).
fn for_each_permutation(v: &mut [f64], mut f: impl FnMut(&[f64])) {
    let n = v.len();
    let mut c = vec![0usize; n];
    f(v);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                v.swap(0, i);
            } else {
                v.swap(c[i], i);
            }
            f(v);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Spearman's rank correlation with a permutation p-value: exact for
/// `n <= 8`, otherwise 10,000 seeded shuffles with the `(hits + 1) / (draws + 1)` estimate.
pub fn spearman(x: &[f64], y: &[f64], seed: u64) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::validation(format!("spearman: lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::validation("spearman: needs at least 3 points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::numeric("spearman: non-finite input"));
    }
    let rx = centered(average_ranks(x));
    let mut ry = centered(average_ranks(y));
    let constant = |r: &[f64]| r.iter().all(|&v| v == 0.0);
    if constant(&rx) || constant(&ry) {
        return Ok(Spearman {
            rho: None,
            p_value: None,
            exact: x.len() <= EXACT_MAX_N,
        });
    }
    let rho = pearson_centered(&rx, &ry);
    let target = rho.abs() - 1e-12;
    let (p, exact) = if x.len() <= EXACT_MAX_N {
        let (mut hits, mut total) = (0u64, 0u64);
        for_each_permutation(&mut ry, |perm| {
            total += 1;
            if pearson_centered(&rx, perm).abs() >= target {
                hits += 1;
            }
        });
        (hits as f64 / total as f64, true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0usize;
        for _ in 0..MONTE_CARLO_DRAWS {
            ry.shuffle(&mut rng);
            if pearson_centered(&rx, &ry).abs() >= target {
                hits += 1;
            }
        }
        ((hits + 1) as f64 / (MONTE_CARLO_DRAWS + 1) as f64, false)
    };
    Ok(Spearman {
        rho: Some(rho.clamp(-1.0, 1.0)),
        p_value: Some(p),
        exact,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holm {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Holm's step-down procedure, results in input order.
pub fn holm_adjust(p_values: &[f64], alpha: f64) -> Result<Holm> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation(format!("holm_adjust: p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut rejected = vec![false; m];
    let mut adjusted = vec![0.0; m];
    let mut still_rejecting = true;
    let mut running_max: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let factor = (m - rank) as f64;
        if still_rejecting && p_values[i] <= alpha / factor {
            rejected[i] = true;
        } else {
            still_rejecting = false;
        }
        running_max = running_max.max((factor * p_values[i]).min(1.0));
        adjusted[i] = running_max;
    }
    Ok(Holm { rejected, adjusted })
}
