use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{KpiGenConfig, NetworkGenConfig};
use crate::ensemble::{HmConfig, SelectMetric};
use crate::error::{Error, Result};
use crate::geo_graph::PartitionMode;
use crate::models::{ModelConfig, ModelKind};
use crate::prep::{ImputeOptions, LabelMode, SplitSpec, WrapperMode};

pub const STANDARD_MB: [usize; 4] = [12, 24, 36, 48];
pub const STANDARD_HZ: [usize; 3] = [12, 24, 48];
pub const STANDARD_THRESHOLDS_KM: [f64; 6] = [0.0, 0.1, 0.5, 1.0, 1.5, 3.0];

/// Everything one experiment needs, loaded from a TOML file.
///
/// `seed`, `windows` and `graph` are required, as is one of `network` or
/// `cells_file`; every other section falls back to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Accept window sizes and thresholds outside the standard grids (with a warning).
    #[serde(default)]
    pub allow_nonstandard: bool,
    /// Existing `cell_id,lat,lon` file used instead of a generated network.
    #[serde(default)]
    pub cells_file: Option<PathBuf>,
    #[serde(default)]
    pub network: Option<NetworkGenConfig>,
    #[serde(default)]
    pub kpis: KpiGenConfig,
    #[serde(default)]
    pub labels: LabelConfig,
    #[serde(default)]
    pub missing: MissingConfig,
    pub windows: WindowConfig,
    pub graph: GraphConfig,
    #[serde(default)]
    pub prep: PrepConfig,
    #[serde(default)]
    pub model: TrainingConfig,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<ModelKind>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
}

fn default_baselines() -> Vec<ModelKind> {
    vec![ModelKind::Lstm, ModelKind::Gcn]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Calibrate the hot cutoff so this fraction of cell-hours is hot.
    pub target_hot_rate: Option<f64>,
    /// Fixed cutoff; used when no target rate is given.
    pub hot_cutoff: Option<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            target_hot_rate: Some(0.0025),
            hot_cutoff: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissingConfig {
    pub item_rate: f64,
    pub unit_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub mb: usize,
    pub hz: usize,
    #[serde(default)]
    pub label_mode: LabelMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub threshold_km: f64,
    pub k: usize,
    #[serde(default)]
    pub partition_mode: PartitionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    None,
    #[default]
    Correlation,
    Lasso,
    Ridge,
    Forward,
    Backward,
    Stepwise,
}

impl SelectionMethod {
    pub fn wrapper_mode(self) -> Option<WrapperMode> {
        match self {
            SelectionMethod::Forward => Some(WrapperMode::Forward),
            SelectionMethod::Backward => Some(WrapperMode::Backward),
            SelectionMethod::Stepwise => Some(WrapperMode::Stepwise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepConfig {
    pub impute: ImputeOptions,
    pub near_zero_variance: f64,
    pub selection: SelectionMethod,
    /// Number of features kept (an upper bound for lasso).
    pub n_selected: usize,
    pub lasso_lambda: f64,
    pub ridge_lambda: f64,
    /// Training rows used to fit the selector, taken at an even stride.
    pub selection_rows: usize,
    pub split: SplitSpec,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            impute: ImputeOptions::default(),
            near_zero_variance: 1e-8,
            selection: SelectionMethod::Correlation,
            n_selected: 10,
            lasso_lambda: 1e-3,
            ridge_lambda: 1e-3,
            selection_rows: 20_000,
            split: SplitSpec::default(),
        }
    }
}

/// Training hyper-parameters shared by the sub-classifiers and baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub n_gcn: usize,
    pub n_hidden: usize,
    pub n_gru_layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub pos_weight: f64,
    pub decision_threshold: f64,
    pub recall_floor: f64,
    pub train_stride: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        TrainingConfig {
            n_gcn: m.n_gcn,
            n_hidden: m.n_hidden,
            n_gru_layers: m.n_gru_layers,
            lr: m.lr,
            epochs: m.epochs,
            batch_size: m.batch_size,
            patience: m.patience,
            pos_weight: m.pos_weight,
            decision_threshold: m.decision_threshold,
            recall_floor: m.recall_floor,
            train_stride: m.train_stride,
        }
    }
}

impl TrainingConfig {
    pub fn model_config(&self, kind: ModelKind, windows: &WindowConfig, n_features: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            kind,
            mb: windows.mb,
            hz: windows.hz,
            n_features,
            n_gcn: self.n_gcn,
            n_hidden: self.n_hidden,
            n_gru_layers: self.n_gru_layers,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            pos_weight: self.pos_weight,
            decision_threshold: self.decision_threshold,
            recall_floor: self.recall_floor,
            train_stride: self.train_stride,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub hm: HmConfig,
    pub select_metric: SelectMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub alpha: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { alpha: 0.05 }
    }
}

/// Grid for the resource profile; every combination is one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub node_counts: Vec<usize>,
    pub neurons: Vec<usize>,
    pub mbs: Vec<usize>,
    /// Panel length; raised when needed so every split outlasts its guard gap.
    pub hours: usize,
    pub epochs: usize,
    pub n_features: usize,
    pub batch_size: usize,
    /// Runs whose estimated training memory exceeds this are recorded as capped.
    pub memory_cap_bytes: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            node_counts: vec![100, 300, 500, 700, 900],
            neurons: vec![32],
            mbs: vec![24],
            hours: 480,
            epochs: 1,
            n_features: 10,
            batch_size: 16,
            memory_cap_bytes: 8 << 30,
        }
    }
}

/// Command-line overrides; they win over the file, which wins over defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mb: Option<usize>,
    pub hz: Option<usize>,
    pub threshold_km: Option<f64>,
    pub k: Option<usize>,
}

impl Overrides {
    fn apply(&self, doc: &mut toml::Table) {
        fn section<'a>(doc: &'a mut toml::Table, name: &str) -> &'a mut toml::Table {
            let entry = doc.entry(name).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if !entry.is_table() {
                *entry = toml::Value::Table(toml::Table::new());
            }
            entry.as_table_mut().expect("just made a table")
        }
        if let Some(seed) = self.seed {
            doc.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(dir) = &self.out_dir {
            doc.insert("out_dir".into(), toml::Value::String(dir.to_string_lossy().into_owned()));
        }
        if let Some(mb) = self.mb {
            section(doc, "windows").insert("mb".into(), toml::Value::Integer(mb as i64));
        }
        if let Some(hz) = self.hz {
            section(doc, "windows").insert("hz".into(), toml::Value::Integer(hz as i64));
        }
        if let Some(t) = self.threshold_km {
            section(doc, "graph").insert("threshold_km".into(), toml::Value::Float(t));
        }
        if let Some(k) = self.k {
            section(doc, "graph").insert("k".into(), toml::Value::Integer(k as i64));
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text, applies overrides, and validates.
    ///
    /// Relative `cells_file` and `out_dir` paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, overrides: &Overrides, base_dir: Option<&Path>) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::validation(format!("config: {e}")))?;
        overrides.apply(&mut doc);
        let mut cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::validation(format!("config: {}", e.message())))?;
        if let Some(base) = base_dir {
            for p in [&mut cfg.cells_file, &mut cfg.out_dir].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml_str(&text, overrides, path.parent())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format(format!("config: {e}")))
    }

    /// Checks cross-field constraints; returns the warnings for accepted
    /// non-standard grid values.
    pub fn validate(&self) -> Result<Vec<String>> {
        match (&self.network, &self.cells_file) {
            (None, None) => return Err(Error::validation("config: missing field `network` (or `cells_file`)")),
            (Some(_), Some(_)) => return Err(Error::validation("config: give `network` or `cells_file`, not both")),
            (None, Some(p)) if !p.is_file() => {
                return Err(Error::validation(format!("config: cells_file {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(net) = &self.network {
            if net.n_cells == 0 || net.n_clusters == 0 {
                return Err(Error::validation("config: network.n_cells and network.n_clusters must be >= 1"));
            }
        }
        self.kpis.validate()?;
        let mut warnings = Vec::new();
        let mut grid_check = |ok: bool, what: String| -> Result<()> {
            match (ok, self.allow_nonstandard) {
                (true, _) => Ok(()),
                (false, true) => {
                    log::warn!("{what} (allowed by allow_nonstandard)");
                    warnings.push(what);
                    Ok(())
                }
                (false, false) => Err(Error::validation(format!("config: {what}; set allow_nonstandard = true to use it"))),
            }
        };
        let w = &self.windows;
        grid_check(STANDARD_MB.contains(&w.mb), format!("windows.mb = {} is not one of {:?}", w.mb, STANDARD_MB))?;
        grid_check(STANDARD_HZ.contains(&w.hz), format!("windows.hz = {} is not one of {:?}", w.hz, STANDARD_HZ))?;
        let t = self.graph.threshold_km;
        grid_check(
            STANDARD_THRESHOLDS_KM.iter().any(|s| (s - t).abs() < 1e-12),
            format!("graph.threshold_km = {t} is not one of {:?}", STANDARD_THRESHOLDS_KM),
        )?;
        if w.mb == 0 || w.hz == 0 {
            return Err(Error::validation("config: windows.mb and windows.hz must be >= 1"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::validation("config: graph.threshold_km must be finite and >= 0"));
        }
        if self.graph.k == 0 {
            return Err(Error::validation("config: graph.k must be >= 1"));
        }
        if let Some(n) = self.network.as_ref().map(|n| n.n_cells) {
            if self.graph.k > n {
                return Err(Error::validation(format!("config: graph.k = {} exceeds {n} cells", self.graph.k)));
            }
        }
        match (self.labels.target_hot_rate, self.labels.hot_cutoff) {
            (Some(r), _) if !(r > 0.0 && r < 1.0) => {
                return Err(Error::validation(format!("config: labels.target_hot_rate = {r} outside (0, 1)")))
            }
            (None, None) => return Err(Error::validation("config: labels needs target_hot_rate or hot_cutoff")),
            _ => {}
        }
        for (name, r) in [("item_rate", self.missing.item_rate), ("unit_rate", self.missing.unit_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::validation(format!("config: missing.{name} = {r} outside [0, 1)")));
            }
        }
        self.prep.split.validate()?;
        if self.prep.n_selected == 0 && self.prep.selection != SelectionMethod::None {
            return Err(Error::validation("config: prep.n_selected must be >= 1"));
        }
        if self.prep.impute.k_neighbors == 0 {
            return Err(Error::validation("config: prep.impute.k_neighbors must be >= 1"));
        }
        self.model.model_config(ModelKind::Lightning, w, 1, 0).validate()?;
        if self.baselines.contains(&ModelKind::Lightning) {
            return Err(Error::validation("config: baselines lists lightning, which always trains"));
        }
        self.ensemble.hm.validate()?;
        if !(self.study.alpha > 0.0 && self.study.alpha < 1.0) {
            return Err(Error::validation("config: study.alpha must be in (0, 1)"));
        }
        let p = &self.profile;
        if p.node_counts.is_empty() || p.neurons.is_empty() || p.mbs.is_empty() {
            return Err(Error::validation("config: profile grid lists must be non-empty"));
        }
        if p.node_counts.contains(&0) || p.neurons.contains(&0) || p.mbs.contains(&0) || p.epochs == 0 {
            return Err(Error::validation("config: profile grid values and epochs must be >= 1"));
        }
        Ok(warnings)
    }

    /// The sub-classifier configuration for `kind` on sub-graph `g`.
    pub fn model_config(&self, kind: ModelKind, n_features: usize, g: usize) -> ModelConfig {
        self.model.model_config(kind, &self.windows, n_features, crate::datagen::sub_seed(self.seed, 1000 + g as u64))
    }
}
