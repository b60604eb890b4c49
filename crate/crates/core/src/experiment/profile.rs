use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{calibrate_cutoff, generate_kpi_series, generate_network, label_panel, KpiGenConfig, NetworkGenConfig};
use crate::error::{Error, Result};
use crate::models::{memory_estimate, train_model, write_atomic, AnyClassifier, ModelKind};
use crate::prep::{chronological_split, make_windows, zscore_normalize, SplitSpec};

use super::alloc::{allocated_bytes, peak_bytes, reset_peak, tracking_active};
use super::config::ExperimentConfig;

/// Resources used by one stage at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceRecord {
    pub stage: String,
    pub nodes: usize,
    pub neurons: usize,
    pub mb: usize,
    pub wall_secs: f64,
    /// Mean training epoch time; zero for stages without epochs.
    pub epoch_secs: f64,
    /// Peak heap growth during the stage.
    pub peak_bytes: u64,
    /// `allocator` when measured, `estimate` otherwise.
    pub memory_source: String,
    /// Set when the run was skipped because its estimate exceeded the cap.
    pub capped: bool,
}

struct Meter {
    started: Instant,
    base: usize,
}

impl Meter {
    fn start() -> Meter {
        reset_peak();
        Meter {
            started: Instant::now(),
            base: allocated_bytes(),
        }
    }

    fn finish(self) -> (f64, u64) {
        (self.started.elapsed().as_secs_f64(), peak_bytes().saturating_sub(self.base) as u64)
    }
}

/// Trains a short fixed-epoch model on the whole graph for each grid point
/// (node count x neurons x memory buffer), recording generation and training
/// cost. Graphs are unpartitioned so the node count is the model's size.
pub fn run_profile(cfg: &ExperimentConfig) -> Result<Vec<ResourceRecord>> {
    let p = &cfg.profile;
    let hz = cfg.windows.hz;
    let tracked = tracking_active();
    let source = if tracked { "allocator" } else { "estimate" };
    let radius = cfg.network.as_ref().map_or(2.0, |n| n.cluster_radius_km);
    let mut records = Vec::new();
    for &nodes in &p.node_counts {
        for &neurons in &p.neurons {
            for &mb in &p.mbs {
                let hours = p.hours.max(min_profile_hours(&cfg.prep.split, mb, hz));
                let meter = Meter::start();
                let net_cfg = NetworkGenConfig::new(nodes, nodes.div_ceil(100), radius);
                let net = generate_network(&net_cfg, cfg.graph.threshold_km, cfg.seed)?;
                let kpi_cfg = KpiGenConfig {
                    hours,
                    n_features: p.n_features,
                    n_sensitive: p.n_features.min(cfg.kpis.n_sensitive),
                    ..cfg.kpis.clone()
                };
                let mut g = generate_kpi_series(&net, &kpi_cfg, cfg.seed)?;
                let mut score = g.score_config(&kpi_cfg);
                score.hot_cutoff = calibrate_cutoff(&g.panel, &score, cfg.labels.target_hot_rate.unwrap_or(0.0025))?;
                g.panel.hot = label_panel(&g.panel, &score)?;
                let (gen_secs, gen_peak) = meter.finish();
                records.push(ResourceRecord {
                    stage: "gen".into(),
                    nodes,
                    neurons,
                    mb,
                    wall_secs: gen_secs,
                    epoch_secs: 0.0,
                    peak_bytes: if tracked { gen_peak } else { (g.panel.kpis.len() * 9) as u64 },
                    memory_source: source.into(),
                    capped: false,
                });

                let model_cfg = crate::models::ModelConfig {
                    kind: ModelKind::Lightning,
                    mb,
                    hz,
                    n_features: p.n_features,
                    n_gcn: neurons,
                    n_hidden: neurons,
                    n_gru_layers: cfg.model.n_gru_layers,
                    lr: cfg.model.lr,
                    epochs: p.epochs,
                    batch_size: p.batch_size,
                    patience: 0,
                    pos_weight: cfg.model.pos_weight,
                    decision_threshold: cfg.model.decision_threshold,
                    recall_floor: cfg.model.recall_floor,
                    train_stride: 1,
                    seed: cfg.seed,
                };
                let meter = Meter::start();
                let mut model = AnyClassifier::new(model_cfg, &net.adjacency)?;
                let estimate = memory_estimate(&model, nodes);
                if estimate > p.memory_cap_bytes {
                    log::warn!("profile: {nodes} nodes x {neurons} neurons needs ~{estimate} bytes; capped");
                    records.push(ResourceRecord {
                        stage: "train".into(),
                        nodes,
                        neurons,
                        mb,
                        wall_secs: 0.0,
                        epoch_secs: 0.0,
                        peak_bytes: p.memory_cap_bytes,
                        memory_source: "cap".into(),
                        capped: true,
                    });
                    continue;
                }
                let [b1, _] = cfg.prep.split.hour_boundaries(hours, mb, hz);
                let (z, _) = zscore_normalize(&g.panel, b1)?;
                drop(g);
                let ds = make_windows(&z, mb, hz, cfg.windows.label_mode)?;
                drop(z);
                let (train, val, _) = chronological_split(&ds, &cfg.prep.split)?;
                let log = train_model(&mut model, &train, &val)?;
                let (wall, peak) = meter.finish();
                records.push(ResourceRecord {
                    stage: "train".into(),
                    nodes,
                    neurons,
                    mb,
                    wall_secs: wall,
                    epoch_secs: log.mean_epoch_secs(),
                    peak_bytes: if tracked { peak } else { estimate },
                    memory_source: source.into(),
                    capped: false,
                });
                log::info!("profile: {nodes} nodes, {neurons} neurons, mb {mb}: {:.2}s/epoch", log.mean_epoch_secs());
            }
        }
    }
    Ok(records)
}

/// Shortest panel whose split blocks all outlast the guard gaps.
fn min_profile_hours(split: &SplitSpec, mb: usize, hz: usize) -> usize {
    let gap = mb + hz - 1;
    (1..1 << 20)
        .find(|&n| {
            let [b1, b2] = split.boundaries(n);
            b1 > gap && b2 > b1 + gap && b2 < n
        })
        .map_or(1 << 20, |n| n + mb + hz - 1)
}

pub const PROFILE_HEADER: [&str; 9] =
    ["stage", "nodes", "neurons", "mb", "wall_secs", "epoch_secs", "peak_bytes", "memory_source", "capped"];

pub fn profile_csv(records: &[ResourceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::format(format!("profile.csv: {e}"));
    w.write_record(PROFILE_HEADER).map_err(err)?;
    for r in records {
        w.serialize(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::format(format!("profile.csv: {e}")))
}

pub fn write_profile_csv(records: &[ResourceRecord], path: &Path) -> Result<()> {
    write_atomic(path, &profile_csv(records)?)
}
