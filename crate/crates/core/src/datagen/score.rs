use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::KpiPanel;

/// Weights, thresholds, and the hot cutoff of the thresholded-KPI score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub hot_cutoff: f64,
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.thresholds.len() {
            return Err(Error::validation(format!(
                "score config: {} weights but {} thresholds",
                self.weights.len(),
                self.thresholds.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::validation(format!("score config: negative weight {w}")));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn max_score(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `Σ w_i · H(k_i - t_i)` with `H(0) = 1`: a KPI reaching its threshold triggers.
pub fn hotspot_score(kpi_row: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    if kpi_row.len() != cfg.weights.len() || kpi_row.len() != cfg.thresholds.len() {
        return Err(Error::validation(format!(
            "hotspot_score: row has {} KPIs, config has {}",
            kpi_row.len(),
            cfg.weights.len()
        )));
    }
    Ok(score_unchecked(kpi_row, cfg))
}

#[inline]
fn score_unchecked(kpi_row: &[f64], cfg: &ScoreConfig) -> f64 {
    kpi_row
        .iter()
        .zip(&cfg.thresholds)
        .zip(&cfg.weights)
        .map(|((k, t), w)| if k - t >= 0.0 { *w } else { 0.0 })
        .sum()
}

fn all_scores(panel: &KpiPanel, cfg: &ScoreConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if panel.n_features != cfg.n_features() {
        return Err(Error::validation(format!(
            "scoring: panel has {} features, score config {}",
            panel.n_features,
            cfg.n_features()
        )));
    }
    if !panel.is_complete() {
        return Err(Error::data(
            "scoring requires a fully observed panel; label before injecting missingness",
        ));
    }
    Ok(panel
        .kpis
        .chunks_exact(panel.n_features)
        .map(|row| score_unchecked(row, cfg))
        .collect())
}

/// Hot indicator per (hour, cell): score at or above the cutoff.
pub fn label_panel(panel: &KpiPanel, cfg: &ScoreConfig) -> Result<Vec<bool>> {
    Ok(all_scores(panel, cfg)?
        .into_iter()
        .map(|s| s >= cfg.hot_cutoff)
        .collect())
}

/// Picks the cutoff whose realised hot rate is closest to `target_rate`.
///
/// Bisection brackets the smallest cutoff with rate at or below the target;
/// the bracket ends are then snapped to attained score values and the closer
/// of the two rates wins (ties go to the lower rate). A positive target
/// always yields at least one hot entry.
pub fn calibrate_cutoff(panel: &KpiPanel, cfg: &ScoreConfig, target_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::validation(format!(
            "target hot rate {target_rate} outside [0, 1]"
        )));
    }
    let mut scores = all_scores(panel, cfg)?;
    scores.sort_by(|a, b| a.total_cmp(b));
    let n = scores.len().max(1) as f64;
    // fraction of scores >= c
    let rate = |c: f64| {
        let below = scores.partition_point(|&s| s < c);
        (scores.len() - below) as f64 / n
    };
    let mut lo = scores.first().copied().unwrap_or(0.0).min(0.0);
    let mut hi = cfg.max_score() + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rate(mid) <= target_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Snap to attained scores: `upper` is the smallest score >= hi, `lower` the largest < hi.
    let idx = scores.partition_point(|&s| s < hi);
    let upper = scores.get(idx).copied().unwrap_or(hi);
    let lower = if idx > 0 { scores[idx - 1] } else { upper };
    let (ru, rl) = (rate(upper), rate(lower));
    let nearest = if (rl - target_rate).abs() < (ru - target_rate).abs() { lower } else { upper };
    // A positive target never settles for an empty labelling while some
    // score is attained: fall back to the top score.
    match scores.last() {
        Some(&top) if target_rate > 0.0 && rate(nearest) == 0.0 => Ok(top),
        _ => Ok(nearest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(w: &[f64], t: &[f64], cutoff: f64) -> ScoreConfig {
        ScoreConfig {
            weights: w.to_vec(),
            thresholds: t.to_vec(),
            hot_cutoff: cutoff,
        }
    }

    #[test]
    fn one_trigger() {
        let c = cfg(&[0.5, 0.5], &[5.0, 10.0], 0.0);
        assert_eq!(hotspot_score(&[6.0, 9.0], &c).unwrap(), 0.5);
    }

    #[test]
    fn boundary_triggers() {
        let c = cfg(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], 0.0);
        assert_eq!(hotspot_score(&[1.0, 2.0, 3.0, 4.0], &c).unwrap(), 4.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(hotspot_score(&[1.0], &cfg(&[1.0, 1.0], &[0.0, 0.0], 0.0)).is_err());
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let k: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..10.0)).collect();
            let t: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..10.0)).collect();
            let w: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..2.0)).collect();
            let mut oracle = 0.0;
            for i in 0..10 {
                if k[i] >= t[i] {
                    oracle += w[i];
                }
            }
            let got = hotspot_score(&k, &cfg(&w, &t, 0.0)).unwrap();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    fn small_panel() -> KpiPanel {
        let kpis = vec![1.0, 5.0, 3.0, 3.0, 6.0, 0.0, 9.0, 9.0];
        KpiPanel::new(vec!["a".into(), "b".into()], 2, 2, kpis).unwrap()
    }

    #[test]
    fn cutoff_extremes() {
        let p = small_panel();
        let high = cfg(&[1.0, 1.0], &[2.0, 2.0], 3.0);
        assert!(label_panel(&p, &high).unwrap().iter().all(|&h| !h));
        let zero = cfg(&[1.0, 1.0], &[2.0, 2.0], 0.0);
        assert!(label_panel(&p, &zero).unwrap().iter().all(|&h| h));
    }

    #[test]
    fn labels_need_complete_panel() {
        let mut p = small_panel();
        p.mask[0] = false;
        assert!(matches!(label_panel(&p, &cfg(&[1.0, 1.0], &[0.0, 0.0], 1.0)), Err(Error::Data(_))));
    }

    #[test]
    fn calibration_hits_exact_rate() {
        // scores: rows (1,5)->1, (3,3)->2, (6,0)->1, (9,9)->2 with t = 2
        let p = small_panel();
        let c = cfg(&[1.0, 1.0], &[2.0, 2.0], 0.0);
        let cut = calibrate_cutoff(&p, &c, 0.5).unwrap();
        assert_eq!(cut, 2.0);
        let labels = label_panel(&p, &ScoreConfig { hot_cutoff: cut, ..c }).unwrap();
        assert_eq!(labels.iter().filter(|&&h| h).count(), 2);
    }

    #[test]
    fn positive_target_keeps_some_hot_entries() {
        let p = small_panel();
        let c = cfg(&[1.0, 1.0], &[2.0, 2.0], 0.0);
        assert_eq!(calibrate_cutoff(&p, &c, 0.1).unwrap(), 2.0);
        assert!(calibrate_cutoff(&p, &c, 0.0).unwrap() > 2.0);
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_kpis_and_weights(
            k in proptest::collection::vec(-5.0f64..5.0, 6),
            t in proptest::collection::vec(-5.0f64..5.0, 6),
            w in proptest::collection::vec(0.0f64..3.0, 6),
            i in 0usize..6,
            bump in 0.0f64..4.0,
        ) {
            let base = hotspot_score(&k, &cfg(&w, &t, 0.0)).unwrap();
            let mut k2 = k.clone();
            k2[i] += bump;
            proptest::prop_assert!(hotspot_score(&k2, &cfg(&w, &t, 0.0)).unwrap() >= base);
            let mut w2 = w.clone();
            w2[i] += bump;
            proptest::prop_assert!(hotspot_score(&k, &cfg(&w2, &t, 0.0)).unwrap() >= base);
        }

        #[test]
        fn scale_invariant_labels(
            k in proptest::collection::vec(-5.0f64..5.0, 4),
            t in proptest::collection::vec(-5.0f64..5.0, 4),
            s in 0.1f64..10.0,
            col in 0usize..4,
        ) {
            let w = [1.0, 0.5, 2.0, 0.25];
            let a = hotspot_score(&k, &cfg(&w, &t, 0.0)).unwrap();
            let mut k2 = k.clone();
            let mut t2 = t.clone();
            k2[col] *= s;
            t2[col] *= s;
            let b = hotspot_score(&k2, &cfg(&w, &t2, 0.0)).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
