use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo_graph::CellNetwork;

use super::{sub_seed, KpiPanel, ScoreConfig};

const HOURS_PER_DAY: usize = 24;
const HOURS_PER_WEEK: usize = 168;
const EVENT_STREAM: u64 = 0x6576_656e_7473;
const NOISE_STREAM: u64 = 0x6e_6f69_7365;

/// Reporting groups for the abstract KPI channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiCategory {
    Signaling,
    Voice,
    DataAvailability,
    Congestion,
    Radio,
}

impl KpiCategory {
    pub fn of_feature(f: usize) -> KpiCategory {
        match f % 5 {
            0 => KpiCategory::Signaling,
            1 => KpiCategory::Voice,
            2 => KpiCategory::DataAvailability,
            3 => KpiCategory::Congestion,
            _ => KpiCategory::Radio,
        }
    }
}

/// Parameters of the synthetic KPI feed.
///
/// Amplitudes are in units of each feature's scale. A congestion event ramps
/// up for `ramp_hours` to `precursor_level`, peaks at 1.0 for one hour, then
/// decays; neighbours receive the same profile times `event_spread`.
/// Burst decoys ramp on one cell without peaking; plateau decoys hold a flat
/// regional level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KpiGenConfig {
    pub hours: usize,
    pub n_features: usize,
    pub event_rate: f64,
    pub event_spread: f64,
    pub ramp_hours: usize,
    pub precursor_level: f64,
    pub decay_hours: f64,
    pub burst_rate: f64,
    pub plateau_rate: f64,
    pub plateau_hours: usize,
    pub n_sensitive: usize,
    pub noise_std: f64,
    pub noise_ar: f64,
    pub diurnal_amp: f64,
    pub weekly_amp: f64,
    pub cell_offset: f64,
    pub trigger_level: f64,
    /// Readings are rounded to this many decimals, as a device would report them.
    pub decimals: Option<u32>,
}

impl Default for KpiGenConfig {
    fn default() -> Self {
        KpiGenConfig {
            hours: 1440,
            n_features: 35,
            event_rate: 3e-4,
            event_spread: 1.0,
            ramp_hours: 12,
            precursor_level: 0.35,
            decay_hours: 3.0,
            burst_rate: 2e-3,
            plateau_rate: 4e-4,
            plateau_hours: 10,
            n_sensitive: 10,
            noise_std: 0.03,
            noise_ar: 0.6,
            diurnal_amp: 0.06,
            weekly_amp: 0.03,
            cell_offset: 0.02,
            trigger_level: 0.5,
            decimals: Some(4),
        }
    }
}

impl KpiGenConfig {
    /// Quiet feed: only the periodic components and noise.
    pub fn quiet(hours: usize, n_features: usize) -> Self {
        KpiGenConfig {
            hours,
            n_features,
            event_rate: 0.0,
            burst_rate: 0.0,
            plateau_rate: 0.0,
            n_sensitive: 10.min(n_features),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hours == 0 {
            return Err(Error::validation("kpi generator: hours must be >= 1"));
        }
        if self.n_features == 0 {
            return Err(Error::validation("kpi generator: n_features must be >= 1"));
        }
        if self.n_sensitive > self.n_features {
            return Err(Error::validation(format!(
                "kpi generator: n_sensitive {} exceeds n_features {}",
                self.n_sensitive, self.n_features
            )));
        }
        for (name, v) in [
            ("event_rate", self.event_rate),
            ("event_spread", self.event_spread),
            ("burst_rate", self.burst_rate),
            ("plateau_rate", self.plateau_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("kpi generator: {name} = {v} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return Err(Error::validation("kpi generator: noise_ar must be in [0, 1)"));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("decay_hours", self.decay_hours),
            ("precursor_level", self.precursor_level),
            ("diurnal_amp", self.diurnal_amp),
            ("weekly_amp", self.weekly_amp),
            ("cell_offset", self.cell_offset),
            ("trigger_level", self.trigger_level),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("kpi generator: {name} must be finite and >= 0")));
            }
        }
        if self.decimals.is_some_and(|d| d > 12) {
            return Err(Error::validation("kpi generator: decimals must be <= 12"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Congestion,
    Burst,
    Plateau,
}

/// A planted disturbance. `peak_hour` is only set for congestion events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub kind: EventKind,
    pub cell: usize,
    pub start_hour: usize,
    pub peak_hour: Option<usize>,
    pub amplitude: f64,
}

/// Per-feature constants of a generated feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub base: Vec<f64>,
    pub scale: Vec<f64>,
    pub loading: Vec<f64>,
    pub sensitive: Vec<usize>,
}

impl FeatureProfile {
    /// Score config with weight 1 on event-sensitive KPIs (threshold at the
    /// trigger level) and 0.25 on the rest (threshold far above normal range).
    /// The cutoff starts at the number of sensitive KPIs and is meant to be
    /// recalibrated.
    pub fn score_config(&self, trigger_level: f64) -> ScoreConfig {
        let n = self.base.len();
        let mut weights = vec![0.25; n];
        let mut thresholds: Vec<f64> = (0..n).map(|f| self.base[f] + self.scale[f]).collect();
        for &f in &self.sensitive {
            weights[f] = 1.0;
            thresholds[f] = self.base[f] + trigger_level * self.scale[f] * self.loading[f];
        }
        ScoreConfig {
            weights,
            thresholds,
            hot_cutoff: self.sensitive.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedKpis {
    pub panel: KpiPanel,
    pub events: Vec<PlantedEvent>,
    pub features: FeatureProfile,
}

impl GeneratedKpis {
    pub fn score_config(&self, cfg: &KpiGenConfig) -> ScoreConfig {
        self.features.score_config(cfg.trigger_level)
    }
}

fn event_profile(cfg: &KpiGenConfig, tau: usize, peaks: bool) -> f64 {
    let r = cfg.ramp_hours;
    if tau < r {
        cfg.precursor_level * (tau + 1) as f64 / r as f64
    } else if tau == r {
        if peaks {
            1.0
        } else {
            cfg.precursor_level
        }
    } else if cfg.decay_hours > 0.0 {
        cfg.precursor_level * (-((tau - r) as f64) / cfg.decay_hours).exp()
    } else {
        0.0
    }
}

fn event_len(cfg: &KpiGenConfig) -> usize {
    cfg.ramp_hours + 1 + (4.0 * cfg.decay_hours).ceil() as usize
}

/// Indices of the event-sensitive KPIs, spread evenly over the feature range.
pub fn sensitive_features(n_features: usize, n_sensitive: usize) -> Vec<usize> {
    (0..n_sensitive).map(|j| j * n_features / n_sensitive).collect()
}

/// Synthesises the KPI feed for `net`.
///
/// Event schedules use per-cell RNG streams; the event effect map is then
/// built from the shared adjacency, and per-cell series use their own noise
/// streams, so output does not depend on iteration order.
pub fn generate_kpi_series(net: &CellNetwork, cfg: &KpiGenConfig, seed: u64) -> Result<GeneratedKpis> {
    cfg.validate()?;
    let (t_len, m_len, f_len) = (cfg.hours, net.len(), cfg.n_features);

    let mut frng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..f_len).map(|_| frng.gen_range(10.0..100.0)).collect();
    let scale: Vec<f64> = (0..f_len).map(|_| frng.gen_range(1.0..10.0)).collect();
    let diurnal_phase: Vec<f64> = (0..f_len).map(|_| frng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let weekly_phase: Vec<f64> = (0..f_len).map(|_| frng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let sensitive = sensitive_features(f_len, cfg.n_sensitive);
    let mut loading = vec![0.0; f_len];
    for &f in &sensitive {
        loading[f] = frng.gen_range(0.9..1.1);
    }

    // Event schedule and effect map, indexed [m * T + t].
    let mut effect = vec![0.0; m_len * t_len];
    let mut events = Vec::new();
    let elen = event_len(cfg);
    let add_profile = |effect: &mut Vec<f64>, m: usize, start: usize, amp: f64, peaks: bool| {
        for tau in 0..elen {
            let t = start + tau;
            if t >= t_len {
                break;
            }
            effect[m * t_len + t] += amp * event_profile(cfg, tau, peaks);
        }
    };
    for m in 0..m_len {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed ^ EVENT_STREAM, m as u64));
        for t in 0..t_len {
            if cfg.event_rate > 0.0 && rng.gen_bool(cfg.event_rate) {
                events.push(PlantedEvent {
                    kind: EventKind::Congestion,
                    cell: m,
                    start_hour: t,
                    peak_hour: Some(t + cfg.ramp_hours).filter(|&p| p < t_len),
                    amplitude: 1.0,
                });
            }
            if cfg.burst_rate > 0.0 && rng.gen_bool(cfg.burst_rate) {
                let lo = cfg.event_spread.min(1.0);
                let amp = if lo < 1.0 { rng.gen_range(lo..=1.0) } else { 1.0 };
                events.push(PlantedEvent {
                    kind: EventKind::Burst,
                    cell: m,
                    start_hour: t,
                    peak_hour: None,
                    amplitude: amp,
                });
            }
            if cfg.plateau_rate > 0.0 && rng.gen_bool(cfg.plateau_rate) {
                let level = rng.gen_range(0.25..=1.0) * cfg.precursor_level;
                events.push(PlantedEvent {
                    kind: EventKind::Plateau,
                    cell: m,
                    start_hour: t,
                    peak_hour: None,
                    amplitude: level,
                });
            }
        }
    }
    for ev in &events {
        match ev.kind {
            EventKind::Congestion => {
                add_profile(&mut effect, ev.cell, ev.start_hour, ev.amplitude, true);
                for &nb in net.adjacency.neighbors(ev.cell) {
                    if cfg.event_spread > 0.0 {
                        add_profile(&mut effect, nb, ev.start_hour, ev.amplitude * cfg.event_spread, true);
                    }
                }
            }
            EventKind::Burst => add_profile(&mut effect, ev.cell, ev.start_hour, ev.amplitude, false),
            EventKind::Plateau => {
                let end = (ev.start_hour + cfg.plateau_hours).min(t_len);
                let mut cells = vec![(ev.cell, ev.amplitude)];
                if cfg.event_spread > 0.0 {
                    cells.extend(net.adjacency.neighbors(ev.cell).iter().map(|&nb| (nb, ev.amplitude * cfg.event_spread)));
                }
                for (m, level) in cells {
                    for t in ev.start_hour..end {
                        effect[m * t_len + t] += level;
                    }
                }
            }
        }
    }

    let mut kpis = vec![0.0; t_len * m_len * f_len];
    let innov = cfg.noise_std * (1.0 - cfg.noise_ar * cfg.noise_ar).sqrt();
    let diurnal: Vec<f64> = (0..HOURS_PER_DAY * f_len)
        .map(|i| {
            let (h, f) = (i / f_len, i % f_len);
            cfg.diurnal_amp * (std::f64::consts::TAU * h as f64 / HOURS_PER_DAY as f64 + diurnal_phase[f]).sin()
        })
        .collect();
    let weekly: Vec<f64> = (0..HOURS_PER_WEEK * f_len)
        .map(|i| {
            let (h, f) = (i / f_len, i % f_len);
            cfg.weekly_amp * (std::f64::consts::TAU * h as f64 / HOURS_PER_WEEK as f64 + weekly_phase[f]).sin()
        })
        .collect();
    let quantum = cfg.decimals.map(|d| 10f64.powi(d as i32));
    for m in 0..m_len {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed ^ NOISE_STREAM, m as u64));
        let offset: Vec<f64> = (0..f_len)
            .map(|_| if cfg.cell_offset > 0.0 { rng.gen_range(-cfg.cell_offset..=cfg.cell_offset) } else { 0.0 })
            .collect();
        let mut noise: Vec<f64> = (0..f_len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.noise_std * z
            })
            .collect();
        for t in 0..t_len {
            let e = effect[m * t_len + t];
            let d = (t % HOURS_PER_DAY) * f_len;
            let w = (t % HOURS_PER_WEEK) * f_len;
            let row = (t * m_len + m) * f_len;
            for f in 0..f_len {
                if t > 0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise[f] = cfg.noise_ar * noise[f] + innov * z;
                }
                let v = offset[f] + diurnal[d + f] + weekly[w + f] + noise[f] + loading[f] * e;
                kpis[row + f] = quantum.map_or(base[f] + scale[f] * v, |q| ((base[f] + scale[f] * v) * q).round() / q);
            }
        }
    }

    let panel = KpiPanel::new(net.cell_ids.clone(), t_len, f_len, kpis)?;
    Ok(GeneratedKpis {
        panel,
        events,
        features: FeatureProfile {
            base,
            scale,
            loading,
            sensitive,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{calibrate_cutoff, label_panel};
    use crate::geo_graph::Adjacency;

    fn line_net(n: usize) -> CellNetwork {
        // cells 0.5 km apart along a meridian, threshold 0.6 km -> a path
        let lat: Vec<f64> = (0..n).map(|i| 38.0 + i as f64 * 0.5 / 111.195).collect();
        CellNetwork::from_coordinates(lat, vec![23.7; n], 0.6).unwrap()
    }

    #[test]
    fn quiet_feed_is_weekly_periodic() {
        let net = line_net(3);
        let mut cfg = KpiGenConfig::quiet(400, 5);
        cfg.noise_std = 0.0;
        let g = generate_kpi_series(&net, &cfg, 7).unwrap();
        let p = &g.panel;
        for t in 0..(400 - 168) {
            for m in 0..3 {
                assert_eq!(p.row(t, m), p.row(t + 168, m));
            }
        }
    }

    #[test]
    fn zero_spread_keeps_events_local() {
        let net = line_net(5);
        let mut cfg = KpiGenConfig::quiet(300, 4);
        cfg.noise_std = 0.0;
        cfg.event_rate = 0.01;
        cfg.event_spread = 0.0;
        cfg.n_sensitive = 2;
        let quiet = generate_kpi_series(&net, &KpiGenConfig { event_rate: 0.0, ..cfg.clone() }, 3).unwrap();
        let g = generate_kpi_series(&net, &cfg, 3).unwrap();
        let elen = event_len(&cfg);
        let mut touched = vec![false; 5 * 300];
        for ev in &g.events {
            for t in ev.start_hour..(ev.start_hour + elen).min(300) {
                touched[ev.cell * 300 + t] = true;
            }
        }
        assert!(!g.events.is_empty());
        for m in 0..5 {
            for t in 0..300 {
                if !touched[m * 300 + t] {
                    assert_eq!(g.panel.row(t, m), quiet.panel.row(t, m), "cell {m} hour {t}");
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let net = line_net(4);
        let cfg = KpiGenConfig { hours: 200, ..Default::default() };
        let a = generate_kpi_series(&net, &cfg, 11).unwrap();
        let b = generate_kpi_series(&net, &cfg, 11).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.events, b.events);
        let c = generate_kpi_series(&net, &cfg, 12).unwrap();
        assert_ne!(a.panel.kpis, c.panel.kpis);
    }

    #[test]
    fn labels_land_on_planted_peaks() {
        let net = line_net(6);
        let mut cfg = KpiGenConfig::quiet(500, 6);
        cfg.noise_std = 0.0;
        cfg.event_rate = 0.004;
        cfg.n_sensitive = 3;
        let g = generate_kpi_series(&net, &cfg, 5).unwrap();
        let score = g.score_config(&cfg);
        let hot = label_panel(&g.panel, &score).unwrap();
        // oracle: centre and neighbours at every peak hour
        let mut expect = vec![false; 500 * 6];
        for ev in &g.events {
            if let Some(p) = ev.peak_hour {
                expect[p * 6 + ev.cell] = true;
                for &nb in net.adjacency.neighbors(ev.cell) {
                    expect[p * 6 + nb] = true;
                }
            }
        }
        assert!(expect.iter().any(|&h| h));
        // anything extra must come from overlapping event footprints
        let elen = event_len(&cfg);
        let footprints = |t: usize, c: usize| {
            g.events
                .iter()
                .filter(|ev| ev.peak_hour.is_some() && (ev.start_hour..ev.start_hour + elen).contains(&t))
                .filter(|ev| ev.cell == c || net.adjacency.neighbors(ev.cell).contains(&c))
                .count()
        };
        for (i, (&h, &e)) in hot.iter().zip(&expect).enumerate() {
            assert!(!e || h, "peak at hour {} cell {} unlabelled", i / 6, i % 6);
            assert!(!h || e || footprints(i / 6, i % 6) >= 2, "stray label at hour {} cell {}", i / 6, i % 6);
        }
    }

    #[test]
    fn isolated_cells_have_no_neighbours() {
        let net = line_net(2).with_threshold(0.0).unwrap();
        assert_eq!(net.adjacency, Adjacency::empty(2));
    }

    #[test]
    fn calibrated_rate_in_band() {
        let net = crate::datagen::generate_network(&crate::datagen::NetworkGenConfig::new(100, 1, 2.0), 1.0, 1).unwrap();
        let cfg = KpiGenConfig { hours: 720, ..Default::default() };
        let mut g = generate_kpi_series(&net, &cfg, 2).unwrap();
        let mut score = g.score_config(&cfg);
        score.hot_cutoff = calibrate_cutoff(&g.panel, &score, 0.0025).unwrap();
        g.panel.hot = label_panel(&g.panel, &score).unwrap();
        let rate = g.panel.hot_rate();
        assert!((0.001..=0.004).contains(&rate), "{rate}");
    }

    #[test]
    fn rejects_bad_config() {
        let net = line_net(2);
        for cfg in [
            KpiGenConfig { hours: 0, ..Default::default() },
            KpiGenConfig { n_features: 0, ..Default::default() },
            KpiGenConfig { event_spread: 1.5, ..Default::default() },
            KpiGenConfig { n_sensitive: 50, ..Default::default() },
        ] {
            assert!(matches!(generate_kpi_series(&net, &cfg, 0), Err(Error::Validation(_))));
        }
    }
}
