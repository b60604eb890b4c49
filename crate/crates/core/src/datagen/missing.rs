use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{sub_seed, KpiPanel};

/// Masks entries to simulate item non-response (single KPI values) and unit
/// non-response (whole cell-hour rows). Masked values become `NaN`.
pub fn inject_missingness(panel: &KpiPanel, item_rate: f64, unit_rate: f64, seed: u64) -> Result<KpiPanel> {
    for (name, r) in [("item_rate", item_rate), ("unit_rate", unit_rate)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::validation(format!("{name} = {r} outside [0, 1]")));
        }
    }
    let mut out = panel.clone();
    let (cells, f) = (panel.n_cells(), panel.n_features);
    for m in 0..cells {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, m as u64));
        for t in 0..panel.hours {
            let base = out.index(t, m, 0);
            let unit = unit_rate > 0.0 && rng.gen_bool(unit_rate);
            for j in 0..f {
                let item = item_rate > 0.0 && rng.gen_bool(item_rate);
                if unit || item {
                    out.mask[base + j] = false;
                    out.kpis[base + j] = f64::NAN;
                }
            }
        }
    }
    Ok(out)
}
