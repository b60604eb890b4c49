//! Synthetic cell networks and KPI feeds with planted congestion events.

mod files;
mod kpi;
mod missing;
mod network;
mod panel;
mod score;

pub use files::{apply_hot_csv, hot_csv, kpis_csv, parse_kpis_csv};
pub use kpi::{
    generate_kpi_series, sensitive_features, EventKind, FeatureProfile, GeneratedKpis, KpiCategory, KpiGenConfig,
    PlantedEvent,
};
pub use missing::inject_missingness;
pub use network::{generate_network, NetworkGenConfig};
pub use panel::KpiPanel;
pub use score::{calibrate_cutoff, hotspot_score, label_panel, ScoreConfig};

/// Mixes a seed with a stream index (splitmix64 finaliser).
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
