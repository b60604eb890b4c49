use serde::{Deserialize, Serialize};

use crate::datagen::KpiPanel;
use crate::error::{Error, Result};
use crate::numkit::Tensor2D;

/// Coefficients with magnitude above this count as selected.
pub const SUPPORT_EPS: f64 = 1e-8;

/// Pooled population variance per feature (two-pass, finite entries only).
pub fn feature_variances(panel: &KpiPanel) -> Vec<f64> {
    let f = panel.n_features;
    let mut sum = vec![0.0; f];
    let mut n = vec![0usize; f];
    for (i, &v) in panel.kpis.iter().enumerate() {
        if v.is_finite() {
            sum[i % f] += v;
            n[i % f] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().zip(&n).map(|(s, &c)| s / c.max(1) as f64).collect();
    let mut ss = vec![0.0; f];
    for (i, &v) in panel.kpis.iter().enumerate() {
        if v.is_finite() {
            let d = v - mean[i % f];
            ss[i % f] += d * d;
        }
    }
    ss.iter().zip(&n).map(|(s, &c)| s / c.max(1) as f64).collect()
}

/// Indices of features whose pooled variance exceeds `threshold`, ascending.
pub fn near_zero_variance_filter(panel: &KpiPanel, threshold: f64) -> Vec<usize> {
    feature_variances(panel)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: usize,
    pub abs_corr: f64,
}

/// Features ranked by |Pearson r| with `y`, descending; ties and
/// zero-variance columns (r = 0) keep index order.
pub fn correlation_filter(x: &Tensor2D, y: &[f64]) -> Result<Vec<RankedFeature>> {
    if x.rows() < 2 || y.len() != x.rows() {
        return Err(Error::validation(format!(
            "correlation filter: {} rows and {} targets (need >= 2, equal)",
            x.rows(),
            y.len()
        )));
    }
    let t = x.transpose();
    let mut ranked: Vec<RankedFeature> = (0..x.cols())
        .map(|j| RankedFeature {
            feature: j,
            abs_corr: pearson(t.row(j), y).map_or(0.0, f64::abs),
        })
        .collect();
    ranked.sort_by(|a, b| b.abs_corr.total_cmp(&a.abs_corr).then(a.feature.cmp(&b.feature)));
    Ok(ranked)
}

/// Column-standardises `x` (population sd); constant columns become zero.
pub fn standardize_columns(x: &Tensor2D) -> Tensor2D {
    let (n, p) = x.shape();
    let mut out = x.clone();
    for j in 0..p {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n as f64;
        let sd = v.sqrt();
        for i in 0..n {
            out.set(i, j, if sd > 0.0 { (x.get(i, j) - m) / sd } else { 0.0 });
        }
    }
    out
}

fn lasso_objective(x: &Tensor2D, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let rss: f64 = (0..x.rows())
        .map(|i| {
            let pred: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            (y[i] - pred).powi(2)
        })
        .sum();
    rss / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

#[inline]
pub fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

impl LassoFit {
    pub fn support(&self) -> Vec<usize> {
        support(&self.beta)
    }
}

pub fn support(beta: &[f64]) -> Vec<usize> {
    beta.iter().enumerate().filter(|(_, b)| b.abs() > SUPPORT_EPS).map(|(i, _)| i).collect()
}

/// Cyclic coordinate descent for `(1/2n)|y - Xb|^2 + lambda |b|_1`.
pub fn lasso_fit(x: &Tensor2D, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<LassoFit> {
    let (n, p) = x.shape();
    if y.len() != n || n == 0 {
        return Err(Error::validation(format!("lasso: {} rows, {} targets", n, y.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::validation("lasso: lambda must be >= 0"));
    }
    let nf = n as f64;
    let t = x.transpose();
    let col_sq: Vec<f64> = (0..p).map(|j| t.row(j).iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut beta = vec![0.0; p];
    let mut resid = y.to_vec();
    let mut objective = Vec::new();
    for sweep in 1..=max_iter {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = t.row(j);
            let rho = xj.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + col_sq[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(xj) {
                    *r -= a * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        objective.push(lasso_objective(x, y, &beta, lambda));
        if max_change < tol {
            return Ok(LassoFit {
                beta,
                sweeps: sweep,
                objective,
            });
        }
    }
    let rss = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
    Err(Error::numeric(format!(
        "lasso did not converge in {max_iter} sweeps (residual norm {rss:.6e})"
    )))
}

/// Cholesky solve of a symmetric positive-definite system.
pub fn spd_solve(a: &Tensor2D, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 1e-12 * scale {
                    return Err(Error::numeric("system is singular or not positive definite"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    Ok(z)
}

/// Solves `(X^T X + n lambda I) b = X^T y`.
pub fn ridge_fit(x: &Tensor2D, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if y.len() != n || n == 0 {
        return Err(Error::validation(format!("ridge: {} rows, {} targets", n, y.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::validation("ridge: lambda must be >= 0"));
    }
    let mut gram = Tensor2D::zeros(p, p);
    crate::numkit::matmul_tn_acc(x, x, &mut gram);
    for j in 0..p {
        gram.set(j, j, gram.get(j, j) + n as f64 * lambda);
    }
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        for (j, r) in rhs.iter_mut().enumerate() {
            *r += x.get(i, j) * y[i];
        }
    }
    spd_solve(&gram, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapperMode {
    Forward,
    Backward,
    Stepwise,
}

fn best_move<F: FnMut(&[usize]) -> f64>(
    current: &[usize],
    candidates: impl Iterator<Item = usize>,
    adding: bool,
    scorer: &mut F,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        let trial: Vec<usize> = if adding {
            let mut v = current.to_vec();
            v.push(c);
            v.sort_unstable();
            v
        } else {
            current.iter().copied().filter(|&x| x != c).collect()
        };
        let s = scorer(&trial);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best
}

/// Greedy wrapper selection. Candidates are visited in index order and only
/// a strictly better score displaces the incumbent, so ties go to the lowest
/// index. Forward adds while the score strictly improves (at most `budget`
/// features); backward drops while the score does not decrease or the set is
/// above `budget`; stepwise alternates strict-improvement adds and drops.
pub fn wrapper_select<F: FnMut(&[usize]) -> f64>(
    n_features: usize,
    mode: WrapperMode,
    mut scorer: F,
    budget: usize,
) -> Result<Vec<usize>> {
    if budget > n_features {
        return Err(Error::validation(format!(
            "wrapper budget {budget} exceeds {n_features} features"
        )));
    }
    let outside = |set: &[usize]| (0..n_features).filter(|f| !set.contains(f)).collect::<Vec<_>>();
    match mode {
        WrapperMode::Forward => {
            let mut set = Vec::new();
            let mut score = scorer(&set);
            while set.len() < budget {
                match best_move(&set, outside(&set).into_iter(), true, &mut scorer) {
                    Some((c, s)) if s > score => {
                        set.push(c);
                        set.sort_unstable();
                        score = s;
                    }
                    _ => break,
                }
            }
            Ok(set)
        }
        WrapperMode::Backward => {
            let mut set: Vec<usize> = (0..n_features).collect();
            let mut score = scorer(&set);
            while !set.is_empty() {
                match best_move(&set, set.clone().into_iter(), false, &mut scorer) {
                    Some((c, s)) if s >= score || set.len() > budget => {
                        set.retain(|&x| x != c);
                        score = s;
                    }
                    _ => break,
                }
            }
            Ok(set)
        }
        WrapperMode::Stepwise => {
            let mut set: Vec<usize> = Vec::new();
            let mut score = scorer(&set);
            for _ in 0..(4 * n_features * n_features + 4) {
                let mut changed = false;
                if set.len() < budget {
                    if let Some((c, s)) = best_move(&set, outside(&set).into_iter(), true, &mut scorer) {
                        if s > score {
                            set.push(c);
                            set.sort_unstable();
                            score = s;
                            changed = true;
                        }
                    }
                }
                if set.len() > 1 {
                    if let Some((c, s)) = best_move(&set, set.clone().into_iter(), false, &mut scorer) {
                        if s > score {
                            set.retain(|&x| x != c);
                            score = s;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            Ok(set)
        }
    }
}

/// Coefficient of determination of an OLS fit on `features` (no intercept,
/// `y` assumed centred). Empty set scores 0.
pub fn ols_r2(x: &Tensor2D, y: &[f64], features: &[usize]) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let sub = select_columns(x, features);
    let Ok(beta) = ridge_fit(&sub, y, 0.0) else {
        return f64::NEG_INFINITY;
    };
    let tss: f64 = y.iter().map(|v| v * v).sum();
    let rss: f64 = (0..sub.rows())
        .map(|i| (y[i] - sub.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2))
        .sum();
    1.0 - rss / tss
}

pub fn select_columns(x: &Tensor2D, cols: &[usize]) -> Tensor2D {
    let mut out = Tensor2D::zeros(x.rows(), cols.len());
    for i in 0..x.rows() {
        for (k, &c) in cols.iter().enumerate() {
            out.set(i, k, x.get(i, c));
        }
    }
    out
}
