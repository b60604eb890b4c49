//! End-to-end experiment orchestration over a run directory: generation,
//! preparation, partitioning, training, cross-evaluation, ensembling,
//! reporting, and resource profiling. Every stage is resumable through the
//! run's manifest of content hashes.

mod alloc;
pub mod artifacts;
mod config;
mod manifest;
mod pipeline;
mod profile;
mod report;

pub use alloc::{allocated_bytes, peak_bytes, reset_peak, tracking_active, TrackingAllocator};
pub use config::{
    EnsembleConfig, ExperimentConfig, GraphConfig, LabelConfig, MissingConfig, Overrides, PrepConfig, ProfileConfig,
    SelectionMethod, StudyConfig, TrainingConfig, WindowConfig, STANDARD_HZ, STANDARD_MB, STANDARD_THRESHOLDS_KM,
};
pub use manifest::{fingerprint, sha256_file, sha256_hex, Manifest, StageRecord, MANIFEST_FILE};
pub use pipeline::{Experiment, Stage, StageStatus, SubgraphData};
pub use profile::{profile_csv, run_profile, write_profile_csv, ResourceRecord, PROFILE_HEADER};
pub use report::{build_report, Report};
