use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sub_seed, KpiPanel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Zero,
    Mean,
    Median,
    MostFrequent,
    HotDeck,
    ColdDeck,
    Knn,
}

impl std::str::FromStr for ImputeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => ImputeMethod::Zero,
            "mean" => ImputeMethod::Mean,
            "median" => ImputeMethod::Median,
            "most_frequent" => ImputeMethod::MostFrequent,
            "hot_deck" => ImputeMethod::HotDeck,
            "cold_deck" => ImputeMethod::ColdDeck,
            "knn" => ImputeMethod::Knn,
            other => return Err(Error::validation(format!("unknown imputation method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeOptions {
    pub method: ImputeMethod,
    pub k_neighbors: usize,
    /// KNN donors are rows of the same cell within this many hours; `None` uses all rows.
    pub knn_window: Option<usize>,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            method: ImputeMethod::Knn,
            k_neighbors: 5,
            knn_window: Some(48),
        }
    }
}

/// A column that had nothing to impute from and was zero-filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeWarning {
    pub cell: String,
    pub feature: usize,
    pub message: String,
}

/// Row-major matrix with an observation mask, the unit of imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

impl MaskedMatrix {
    /// `None` marks a missing entry.
    pub fn from_options(rows: &[Vec<Option<f64>>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        let mut observed = Vec::with_capacity(values.capacity());
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            for v in r {
                values.push(v.unwrap_or(f64::NAN));
                observed.push(v.is_some());
            }
        }
        MaskedMatrix {
            rows: rows.len(),
            cols,
            values,
            observed,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[self.at(r, c)]
    }

    fn observed_column(&self, c: usize) -> Vec<f64> {
        (0..self.rows)
            .filter(|&r| self.observed[self.at(r, c)])
            .map(|r| self.values[self.at(r, c)])
            .collect()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Most common value; ties go to the smallest value.
pub fn most_frequent(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let (mut best, mut best_n) = (s[0], 0usize);
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        if j - i > best_n {
            best = s[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

/// Distance over co-observed columns, scaled by their count; `None` if no overlap.
fn knn_distance(m: &MaskedMatrix, a: usize, b: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in 0..m.cols {
        let (ia, ib) = (m.at(a, c), m.at(b, c));
        if m.observed[ia] && m.observed[ib] {
            let d = m.values[ia] - m.values[ib];
            sum += d * d;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Fills every missing entry of `m` in place and returns the columns that
/// had to be zero-filled. `donor_means` is required for cold deck.
pub fn impute_matrix(
    m: &mut MaskedMatrix,
    opts: &ImputeOptions,
    donor_means: Option<&[f64]>,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let mut zero_filled = Vec::new();
    if opts.method == ImputeMethod::Knn && opts.k_neighbors == 0 {
        return Err(Error::validation("knn imputation needs k_neighbors >= 1"));
    }
    if opts.method == ImputeMethod::ColdDeck {
        match donor_means {
            Some(d) if d.len() == m.cols => {}
            Some(d) => {
                return Err(Error::validation(format!(
                    "cold deck donor has {} features, panel has {}",
                    d.len(),
                    m.cols
                )))
            }
            None => return Err(Error::validation("cold deck imputation needs a donor panel")),
        }
    }
    let original = m.clone();
    for c in 0..m.cols {
        let missing: Vec<usize> = (0..m.rows).filter(|&r| !m.observed[m.at(r, c)]).collect();
        if missing.is_empty() {
            continue;
        }
        let col = original.observed_column(c);
        if col.is_empty() && !matches!(opts.method, ImputeMethod::Zero | ImputeMethod::ColdDeck) {
            for &r in &missing {
                let i = m.at(r, c);
                m.values[i] = 0.0;
            }
            zero_filled.push(c);
            continue;
        }
        match opts.method {
            ImputeMethod::Zero => fill(m, c, &missing, 0.0),
            ImputeMethod::Mean => fill(m, c, &missing, mean(&col)),
            ImputeMethod::Median => fill(m, c, &missing, median(&col)),
            ImputeMethod::MostFrequent => fill(m, c, &missing, most_frequent(&col)),
            ImputeMethod::ColdDeck => fill(m, c, &missing, donor_means.unwrap()[c]),
            ImputeMethod::HotDeck => {
                for &r in &missing {
                    let i = m.at(r, c);
                    m.values[i] = col[rng.gen_range(0..col.len())];
                }
            }
            ImputeMethod::Knn => {
                for &r in &missing {
                    let (lo, hi) = match opts.knn_window {
                        Some(w) => (r.saturating_sub(w), (r + w + 1).min(m.rows)),
                        None => (0, m.rows),
                    };
                    let mut cands: Vec<(f64, usize)> = (lo..hi)
                        .filter(|&d| d != r && original.observed[original.at(d, c)])
                        .filter_map(|d| knn_distance(&original, r, d).map(|dist| (dist, d)))
                        .collect();
                    let i = m.at(r, c);
                    if cands.is_empty() {
                        m.values[i] = mean(&col);
                        continue;
                    }
                    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let k = opts.k_neighbors.min(cands.len());
                    m.values[i] = cands[..k].iter().map(|&(_, d)| original.get(d, c)).sum::<f64>() / k as f64;
                }
            }
        }
    }
    Ok(zero_filled)
}

fn fill(m: &mut MaskedMatrix, c: usize, rows: &[usize], v: f64) {
    for &r in rows {
        let i = m.at(r, c);
        m.values[i] = v;
    }
}

fn cell_matrix(panel: &KpiPanel, cell: usize) -> MaskedMatrix {
    let f = panel.n_features;
    let mut values = Vec::with_capacity(panel.hours * f);
    let mut observed = Vec::with_capacity(panel.hours * f);
    for t in 0..panel.hours {
        values.extend_from_slice(panel.row(t, cell));
        observed.extend_from_slice(panel.row_mask(t, cell));
    }
    MaskedMatrix {
        rows: panel.hours,
        cols: f,
        values,
        observed,
    }
}

/// Pooled per-feature mean over the observed entries of a panel.
pub fn column_means(panel: &KpiPanel) -> Vec<f64> {
    let f = panel.n_features;
    let mut sum = vec![0.0; f];
    let mut n = vec![0usize; f];
    for (i, (v, &o)) in panel.kpis.iter().zip(&panel.mask).enumerate() {
        if o {
            sum[i % f] += v;
            n[i % f] += 1;
        }
    }
    sum.iter().zip(&n).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Fills item non-response per (cell, feature) column. Observed entries and
/// the mask are left untouched.
pub fn impute(
    panel: &KpiPanel,
    opts: &ImputeOptions,
    donor: Option<&KpiPanel>,
    seed: u64,
) -> Result<(KpiPanel, Vec<ImputeWarning>)> {
    let donor_means = match donor {
        Some(d) if d.n_features != panel.n_features => {
            return Err(Error::validation(format!(
                "donor panel has {} features, panel has {}",
                d.n_features, panel.n_features
            )))
        }
        Some(d) => Some(column_means(d)),
        None => None,
    };
    let mut out = panel.clone();
    let mut warnings = Vec::new();
    for cell in 0..panel.n_cells() {
        if (0..panel.hours).all(|t| panel.row_mask(t, cell).iter().all(|&o| o)) {
            continue;
        }
        let mut m = cell_matrix(panel, cell);
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, cell as u64));
        for c in impute_matrix(&mut m, opts, donor_means.as_deref(), &mut rng)? {
            warnings.push(ImputeWarning {
                cell: panel.cell_ids[cell].clone(),
                feature: c,
                message: "no observed entries; zero-filled".into(),
            });
        }
        for t in 0..panel.hours {
            let dst = out.index(t, cell, 0);
            out.kpis[dst..dst + panel.n_features].copy_from_slice(&m.values[t * m.cols..(t + 1) * m.cols]);
        }
    }
    Ok((out, warnings))
}

/// Forward-fills fully missing (hour, cell) rows from the last observed row of
/// the same cell; a leading gap takes the first observed row.
pub fn impute_unit_nonresponse(panel: &KpiPanel) -> Result<KpiPanel> {
    let mut out = panel.clone();
    let f = panel.n_features;
    for cell in 0..panel.n_cells() {
        let present = |t: usize| panel.row_mask(t, cell).iter().any(|&o| o);
        let Some(first) = (0..panel.hours).find(|&t| present(t)) else {
            return Err(Error::data(format!("cell '{}' has no observed rows", panel.cell_ids[cell])));
        };
        let mut last = first;
        for t in 0..panel.hours {
            if present(t) {
                last = t;
                continue;
            }
            let src = out.index(last, cell, 0);
            let dst = out.index(t, cell, 0);
            out.kpis.copy_within(src..src + f, dst);
            // the copied row inherits the donor row's observation pattern
            out.mask.copy_within(src..src + f, dst);
        }
    }
    Ok(out)
}

/// RMSE of imputed values against the clean panel over entries that were masked.
pub fn imputation_rmse(clean: &KpiPanel, masked: &KpiPanel, imputed: &KpiPanel) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..clean.kpis.len() {
        if !masked.mask[i] {
            let d = imputed.kpis[i] - clean.kpis[i];
            sum += d * d;
            n += 1;
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}
