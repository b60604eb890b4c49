use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::datagen::{
    apply_hot_csv, calibrate_cutoff, generate_kpi_series, generate_network, hot_csv, inject_missingness, kpis_csv,
    label_panel, parse_kpis_csv, sub_seed, EventKind, KpiPanel,
};
use crate::ensemble::{fallback_select, train_hm, HierarchicalModel, HmConfig, HmDataset, Predictor};
use crate::error::{Error, Result};
use crate::evalx::{
    confusion, cross_evaluate, similarity_csv, cross_eval_csv, similarity_vs_transfer_study, ConfusionMatrix,
};
use crate::geo_graph::{
    cells_csv, energy_rank, partition_graph, read_cells_csv, subgraph_similarity, Adjacency, CellNetwork,
};
use crate::models::{
    evaluate, labels_at, load_checkpoint, predict_proba, save_checkpoint, train_model, write_atomic, AnyClassifier,
    Classifier, ModelKind,
};
use crate::prep::{
    chronological_split, correlation_filter, impute, impute_unit_nonresponse, lasso_fit, make_windows,
    near_zero_variance_filter, ols_r2, ridge_fit, standardize_columns, wrapper_select, ImputeMethod, PrepStats,
    WindowedDataset,
};
use crate::numkit::Tensor2D;

use super::artifacts::*;
use super::config::{ExperimentConfig, SelectionMethod};
use super::manifest::{fingerprint, sha256_file, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Gen,
    Prep,
    Partition,
    Train,
    CrossEval,
    Ensemble,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Gen,
        Stage::Prep,
        Stage::Partition,
        Stage::Train,
        Stage::CrossEval,
        Stage::Ensemble,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Prep => "prep",
            Stage::Partition => "partition",
            Stage::Train => "train",
            Stage::CrossEval => "crosseval",
            Stage::Ensemble => "ensemble",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// One sub-graph's graph and chronological splits.
pub struct SubgraphData {
    pub adjacency: Adjacency,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

/// A run directory plus the configuration that fills it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dir: PathBuf,
    /// Worker threads for training and evaluation; `None` uses every core.
    pub jobs: Option<usize>,
}

impl Experiment {
    /// Uses `config.out_dir`, or `./run` when none is set.
    pub fn new(config: ExperimentConfig) -> Self {
        let dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("run"));
        Experiment { config, dir, jobs: None }
    }

    pub fn with_dir(config: ExperimentConfig, dir: impl Into<PathBuf>) -> Self {
        Experiment {
            config,
            dir: dir.into(),
            jobs: None,
        }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Runs every stage in order, skipping the ones already up to date.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>> {
        Stage::ALL.iter().map(|&s| Ok((s, self.run_stage(s)?))).collect()
    }

    /// Runs one stage unless the manifest shows it already ran with the same
    /// configuration and inputs and its outputs are intact.
    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        self.run_stage_inner(stage).map_err(|e| {
            log::error!("stage {stage} failed");
            e.context(&format!("stage {stage}"))
        })
    }

    fn run_stage_inner(&self, stage: Stage) -> Result<StageStatus> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut manifest = Manifest::load_or_new(&self.dir, self.config.seed);
        let inputs = self.input_hashes(stage)?;
        let fp = fingerprint(stage.name(), &self.stage_config(stage), &inputs)?;
        if manifest.is_fresh(&self.dir, stage.name(), &fp) {
            log::info!("stage {stage}: up to date");
            return Ok(StageStatus::UpToDate);
        }
        log::info!("stage {stage}: running");
        let outputs = match stage {
            Stage::Gen => self.gen()?,
            Stage::Prep => self.prep()?,
            Stage::Partition => self.partition()?,
            Stage::Train => self.train()?,
            Stage::CrossEval => self.crosseval()?,
            Stage::Ensemble => self.ensemble()?,
            Stage::Report => self.report()?,
        };
        manifest.record(&self.dir, stage.name(), fp, &outputs)?;
        manifest.save(&self.dir)?;
        Ok(StageStatus::Ran)
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        match stage {
            Stage::Gen => json!({
                "seed": c.seed, "network": c.network, "kpis": c.kpis, "labels": c.labels,
                "missing": c.missing, "threshold_km": c.graph.threshold_km,
            }),
            Stage::Prep => json!({ "seed": c.seed, "prep": c.prep, "windows": c.windows }),
            Stage::Partition => json!({ "seed": c.seed, "graph": c.graph, "windows": c.windows, "split": c.prep.split }),
            Stage::Train => json!({
                "seed": c.seed, "model": c.model, "baselines": c.baselines, "windows": c.windows, "split": c.prep.split,
            }),
            Stage::CrossEval => json!({ "seed": c.seed, "study": c.study, "windows": c.windows, "split": c.prep.split }),
            Stage::Ensemble => json!({
                "seed": c.seed, "ensemble": c.ensemble, "windows": c.windows, "split": c.prep.split,
            }),
            Stage::Report => json!({ "seed": c.seed, "windows": c.windows, "graph": c.graph, "baselines": c.baselines }),
        }
    }

    fn stage_inputs(&self, stage: Stage) -> Vec<String> {
        let k = self.config.graph.k;
        let mut files: Vec<String> = match stage {
            Stage::Gen => vec![],
            Stage::Prep => vec![CELLS_CSV.into(), KPIS_CSV.into(), HOT_CSV.into()],
            Stage::Partition => vec![CELLS_CSV.into(), PREPARED_LNET.into()],
            Stage::Train | Stage::CrossEval | Stage::Ensemble => {
                vec![CELLS_CSV.into(), PREPARED_LNET.into(), PARTITION_JSON.into()]
            }
            Stage::Report => vec![
                GEN_SUMMARY_JSON.into(),
                SELECTED_FEATURES_JSON.into(),
                PARTITION_JSON.into(),
                TRAIN_EVAL_JSON.into(),
                CROSS_EVAL_JSON.into(),
                ENSEMBLE_JSON.into(),
            ],
        };
        if matches!(stage, Stage::CrossEval | Stage::Ensemble) {
            files.extend((0..k).map(|g| checkpoint_file(ModelKind::Lightning, g)));
        }
        files
    }

    fn input_hashes(&self, stage: Stage) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if stage == Stage::Gen {
            if let Some(p) = &self.config.cells_file {
                out.push(("cells_file".to_string(), sha256_file(p)?));
            }
        }
        for file in self.stage_inputs(stage) {
            let path = self.path(&file);
            if !path.is_file() {
                let producer = Stage::ALL
                    .iter()
                    .rev()
                    .find(|s| (**s as usize) < stage as usize)
                    .map_or("an earlier stage", |s| s.name());
                return Err(Error::data(format!(
                    "missing input {} (run `{producer}` or `run` first)",
                    path.display()
                )));
            }
            out.push((file.clone(), sha256_file(&path)?));
        }
        Ok(out)
    }

    fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<String> {
        write_json(&self.path(file), value)?;
        Ok(file.to_string())
    }

    fn write_bytes(&self, file: &str, bytes: &[u8]) -> Result<String> {
        write_atomic(&self.path(file), bytes)?;
        Ok(file.to_string())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::validation(format!("worker pool: {e}")))
    }

    fn gen(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let t = c.graph.threshold_km;
        let net = match (&c.cells_file, &c.network) {
            (Some(p), _) => read_cells_csv(p, t)?,
            (None, Some(n)) => generate_network(n, t, c.seed)?,
            (None, None) => return Err(Error::validation("no network source configured")),
        };
        let mut g = generate_kpi_series(&net, &c.kpis, c.seed)?;
        let mut score = g.score_config(&c.kpis);
        score.hot_cutoff = match (c.labels.target_hot_rate, c.labels.hot_cutoff) {
            (Some(rate), _) => calibrate_cutoff(&g.panel, &score, rate)?,
            (None, Some(cut)) => cut,
            (None, None) => return Err(Error::validation("labels needs target_hot_rate or hot_cutoff")),
        };
        g.panel.hot = label_panel(&g.panel, &score)?;
        if let Some(target) = c.labels.target_hot_rate {
            let realised = g.panel.hot.iter().filter(|&&h| h).count() as f64 / g.panel.hot.len().max(1) as f64;
            if (realised - target).abs() > 0.5 * target {
                log::warn!("hot rate {realised:.5} is far from the target {target}; too few planted events?");
            }
        }
        let panel = if c.missing.item_rate > 0.0 || c.missing.unit_rate > 0.0 {
            inject_missingness(&g.panel, c.missing.item_rate, c.missing.unit_rate, sub_seed(c.seed, 3))?
        } else {
            g.panel
        };
        let mut events = EventCounts::default();
        for ev in &g.events {
            match ev.kind {
                EventKind::Congestion => events.congestion += 1,
                EventKind::Burst => events.burst += 1,
                EventKind::Plateau => events.plateau += 1,
            }
        }
        let summary = GenSummary {
            n_cells: net.len(),
            hours: panel.hours,
            n_features: panel.n_features,
            hot_rate: panel.hot_rate(),
            observed_fraction: panel.observed_fraction(),
            events,
            sensitive_features: g.features.sensitive.clone(),
        };
        Ok(vec![
            self.write_bytes(CELLS_CSV, &cells_csv(&net))?,
            self.write_bytes(KPIS_CSV, &kpis_csv(&panel))?,
            self.write_bytes(HOT_CSV, &hot_csv(&panel))?,
            self.write_json(SCORE_CONFIG_JSON, &score)?,
            self.write_json(GEN_SUMMARY_JSON, &summary)?,
        ])
    }

    fn read_network(&self) -> Result<CellNetwork> {
        read_cells_csv(&self.path(CELLS_CSV), self.config.graph.threshold_km)
    }

    /// First hour of the validation block; hours before it are training hours.
    fn train_hours(&self, hours: usize) -> Result<usize> {
        let w = &self.config.windows;
        let [b1, _] = self.config.prep.split.hour_boundaries(hours, w.mb, w.hz);
        if b1 == 0 {
            return Err(Error::validation(format!(
                "{hours} hours leave no training block for mb = {}, hz = {}",
                w.mb, w.hz
            )));
        }
        Ok(b1)
    }

    fn prep(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let net = self.read_network()?;
        let kpi_path = self.path(KPIS_CSV);
        let kpi_bytes = std::fs::read(&kpi_path).map_err(|e| Error::io(&kpi_path, e))?;
        let mut panel = parse_kpis_csv(&kpi_bytes, &net.cell_ids)?;
        drop(kpi_bytes);
        let hot_path = self.path(HOT_CSV);
        apply_hot_csv(&std::fs::read(&hot_path).map_err(|e| Error::io(&hot_path, e))?, &mut panel)?;
        let train_hours = self.train_hours(panel.hours)?;

        let unit_filled = impute_unit_nonresponse(&panel)?;
        let (imputed, warnings) = if unit_filled.is_complete() {
            (unit_filled, Vec::new())
        } else {
            let donor = (c.prep.impute.method == ImputeMethod::ColdDeck).then(|| unit_filled.slice_hours(0, train_hours));
            impute(&unit_filled, &c.prep.impute, donor.as_ref(), sub_seed(c.seed, 4))?
        };
        for w in &warnings {
            log::warn!("cell {} feature {}: {}", w.cell, w.feature, w.message);
        }

        let train_block = imputed.slice_hours(0, train_hours);
        let kept = near_zero_variance_filter(&train_block, c.prep.near_zero_variance);
        if kept.is_empty() {
            return Err(Error::data("every feature has near-zero variance in the training block"));
        }
        let dropped: Vec<usize> = (0..panel.n_features).filter(|f| !kept.contains(f)).collect();
        let selection = select_features(&train_block, &kept, c)?;

        let all_cells: Vec<usize> = (0..imputed.n_cells()).collect();
        let chosen = imputed.select(&all_cells, &selection.features);
        let stats = PrepStats::fit(&chosen, train_hours)?;
        let normalized = stats.apply(&chosen)?;
        save_prepared(&normalized, &selection.features, &self.path(PREPARED_LNET))?;

        let stats_file = PrepStatsFile {
            features: selection.features.clone(),
            mean: stats.mean,
            std: stats.std,
            train_hours,
            imputed_columns_zero_filled: warnings.len(),
        };
        let selected = SelectedFeatures {
            dropped_near_zero_variance: dropped,
            ..selection
        };
        Ok(vec![
            self.write_json(SELECTED_FEATURES_JSON, &selected)?,
            self.write_json(PREP_STATS_JSON, &stats_file)?,
            PREPARED_LNET.to_string(),
        ])
    }

    fn load_prepared(&self, net: &CellNetwork) -> Result<KpiPanel> {
        load_prepared(&self.path(PREPARED_LNET), &net.cell_ids)
    }

    fn partition(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let net = self.read_network()?;
        let panel = self.load_prepared(&net)?;
        let train_hours = self.train_hours(panel.hours)?;
        let part = partition_graph(&net, c.graph.k, c.graph.partition_mode, sub_seed(c.seed, 5))?;
        let mut hot = vec![0usize; c.graph.k];
        for t in 0..train_hours {
            for m in 0..net.len() {
                if panel.is_hot(t, m) {
                    hot[part.assignment[m]] += 1;
                }
            }
        }
        // Descending hot count; ties keep partition order.
        let mut ranking: Vec<usize> = (0..c.graph.k).collect();
        ranking.sort_by(|&a, &b| hot[b].cmp(&hot[a]).then(a.cmp(&b)));
        let mut subgraphs = Vec::with_capacity(c.graph.k);
        for &p in &ranking {
            let cells = part.members(p);
            let sub = net.subnetwork(&cells);
            let spectrum = sub.laplacian_spectrum()?;
            subgraphs.push(SubgraphInfo {
                partition_index: p,
                n_edges: sub.adjacency.edge_count(),
                hot_cell_hours: hot[p],
                energy_rank: energy_rank(&spectrum),
                spectrum,
                cells,
            });
        }
        let similarity = subgraphs
            .iter()
            .map(|a| subgraphs.iter().map(|b| subgraph_similarity(&a.spectrum, &b.spectrum)).collect())
            .collect();
        let file = PartitionFile {
            k: c.graph.k,
            mode: c.graph.partition_mode,
            threshold_km: c.graph.threshold_km,
            subgraphs,
            similarity,
        };
        Ok(vec![self.write_json(PARTITION_JSON, &file)?])
    }

    /// Per-sub-graph graphs and splits, in rank order.
    pub fn load_subgraphs(&self) -> Result<Vec<SubgraphData>> {
        let c = &self.config;
        let net = self.read_network()?;
        let panel = self.load_prepared(&net)?;
        let part: PartitionFile = read_json(&self.path(PARTITION_JSON))?;
        if part.k != c.graph.k {
            return Err(Error::data(format!("partition.json has k = {}, config has {}", part.k, c.graph.k)));
        }
        let all_features: Vec<usize> = (0..panel.n_features).collect();
        part.subgraphs
            .iter()
            .enumerate()
            .map(|(g, sg)| {
                if sg.cells.iter().any(|&m| m >= net.len()) {
                    return Err(Error::data(format!("partition.json: sub-graph {g} names unknown cells")));
                }
                let ds = make_windows(&panel.select(&sg.cells, &all_features), c.windows.mb, c.windows.hz, c.windows.label_mode)?;
                let (train, val, test) = chronological_split(&ds, &c.prep.split)?;
                Ok(SubgraphData {
                    adjacency: net.subnetwork(&sg.cells).adjacency,
                    train,
                    val,
                    test,
                })
            })
            .collect()
    }

    fn train(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let sgs = self.load_subgraphs()?;
        let n_features = sgs[0].train.n_features();
        let kinds: Vec<ModelKind> = std::iter::once(ModelKind::Lightning).chain(c.baselines.iter().copied()).collect();
        let jobs: Vec<(usize, ModelKind)> = (0..sgs.len()).flat_map(|g| kinds.iter().map(move |&k| (g, k))).collect();
        let dir = &self.dir;
        let results: Vec<Result<(TrainLogEntry, ModelEval)>> = self.pool()?.install(|| {
            jobs.par_iter()
                .map(|&(g, kind)| {
                    let sg = &sgs[g];
                    let mut model = AnyClassifier::new(c.model_config(kind, n_features, g), &sg.adjacency)?;
                    let log = train_model(&mut model, &sg.train, &sg.val)
                        .map_err(|e| e.context(&format!("{} on SG{g}", kind.name())))?;
                    save_checkpoint(&model, &dir.join(checkpoint_file(kind, g)))?;
                    let val = evaluate(&model, &sg.val)?;
                    let test = evaluate(&model, &sg.test)?;
                    let pr = test.scores();
                    log::info!("{} SG{g}: test precision {:.3} recall {:.3}", kind.name(), pr.precision, pr.recall);
                    let eval = ModelEval {
                        sg: g,
                        kind,
                        best_epoch: log.best_epoch,
                        val,
                        test,
                        test_precision: pr.precision,
                        test_recall: pr.recall,
                    };
                    Ok((TrainLogEntry { sg: g, kind, log }, eval))
                })
                .collect()
        });
        let (logs, evals): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let mut outputs: Vec<String> = jobs.iter().map(|&(g, kind)| checkpoint_file(kind, g)).collect();
        outputs.push(self.write_json(TRAIN_LOG_JSON, &logs)?);
        outputs.push(self.write_json(TRAIN_EVAL_JSON, &evals)?);
        Ok(outputs)
    }

    fn load_subclassifiers(&self, k: usize) -> Result<Vec<AnyClassifier>> {
        (0..k)
            .map(|g| load_checkpoint(&self.path(&checkpoint_file(ModelKind::Lightning, g))))
            .collect()
    }

    fn crosseval(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let sgs = self.load_subgraphs()?;
        let models = self.load_subclassifiers(sgs.len())?;
        let tests: Vec<WindowedDataset> = sgs.iter().map(|s| s.test.clone()).collect();
        let graphs: Vec<Adjacency> = sgs.iter().map(|s| s.adjacency.clone()).collect();
        let grid = self.pool()?.install(|| cross_evaluate(&models, &tests, &graphs))?;
        let part: PartitionFile = read_json(&self.path(PARTITION_JSON))?;
        let spectra: Vec<_> = part.subgraphs.iter().map(|s| s.spectrum.clone()).collect();
        let study = similarity_vs_transfer_study(&spectra, &grid, c.study.alpha, sub_seed(c.seed, 6))?;
        Ok(vec![
            self.write_bytes(CROSS_EVAL_CSV, &cross_eval_csv(&grid)?)?,
            self.write_bytes(SIMILARITY_CSV, &similarity_csv(&study)?)?,
            self.write_json(CROSS_EVAL_JSON, &CrossEvalFile { grid, study })?,
        ])
    }

    fn ensemble(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let sgs = self.load_subgraphs()?;
        let k = sgs.len();
        let models = self.load_subclassifiers(k)?;
        let rows: Vec<Result<(EnsembleRow, Option<HierarchicalModel>)>> = self.pool()?.install(|| {
            (0..k)
                .into_par_iter()
                .map(|j| ensemble_for(&models, &sgs[j], j, &c.ensemble.hm, c))
                .collect()
        });
        let mut outputs = Vec::new();
        let mut table = Vec::with_capacity(k);
        for (row, hm) in rows.into_iter().collect::<Result<Vec<_>>>()? {
            if let Some(hm) = hm {
                let file = hm_checkpoint_file(row.sg);
                hm.save(&self.path(&file))?;
                outputs.push(file);
            }
            table.push(row);
        }
        outputs.push(self.write_json(ENSEMBLE_JSON, &EnsembleFile { rows: table })?);
        Ok(outputs)
    }

    fn report(&self) -> Result<Vec<String>> {
        let report = super::report::build_report(self)?;
        Ok(vec![self.write_json(REPORT_JSON, &report)?])
    }
}

fn split_halves(ds: &WindowedDataset) -> Result<(WindowedDataset, WindowedDataset)> {
    let half = ds.len() / 2;
    if half == 0 {
        return Err(Error::validation(format!(
            "validation split of {} windows is too small to split for the ensemble",
            ds.len()
        )));
    }
    Ok((ds.subset(0..half), ds.subset(half..ds.len())))
}

/// Trains and assesses the hierarchical model for target sub-graph `j`.
///
/// The HM learns from the sub-classifiers' labels on the training windows,
/// early-stops on the first half of the validation windows and is compared
/// against the sub-classifiers on the second half.
fn ensemble_for(
    models: &[AnyClassifier],
    sg: &SubgraphData,
    j: usize,
    hm_cfg: &HmConfig,
    c: &ExperimentConfig,
) -> Result<(EnsembleRow, Option<HierarchicalModel>)> {
    let k = models.len();
    let ctx = |e: Error| e.context(&format!("ensemble for SG{j}"));
    let (stop, select) = split_halves(&sg.val).map_err(ctx)?;
    let outputs = |ds: &WindowedDataset| -> Result<Vec<Vec<f64>>> {
        models.iter().map(|m| predict_proba(&m.rebind(&sg.adjacency), ds)).collect()
    };
    let thresholds: Vec<f64> = models.iter().map(|m| m.config().decision_threshold).collect();
    let as_labels = |probs: &[Vec<f64>]| -> Vec<Vec<bool>> {
        probs.iter().zip(&thresholds).map(|(p, &t)| labels_at(p, t)).collect()
    };
    let (stop_out, select_out, test_out) = (outputs(&stop)?, outputs(&select)?, outputs(&sg.test)?);
    let (select_labels, test_labels) = (as_labels(&select_out), as_labels(&test_out));
    let sc_select = select_labels
        .iter()
        .map(|l| confusion(l, select.all_targets()))
        .collect::<Result<Vec<_>>>()?;
    let sc_test = test_labels
        .iter()
        .map(|l| confusion(l, sg.test.all_targets()))
        .collect::<Result<Vec<_>>>()?;
    if k == 1 {
        return Ok((
            EnsembleRow {
                sg: j,
                hm_best_epoch: None,
                hm_select: None,
                sc_select,
                chosen: Predictor::SubClassifier(0),
                hm_test: None,
                chosen_test: sc_test[0],
                sc_test,
            },
            None,
        ));
    }
    let dataset = |probs: Vec<Vec<f64>>, ds: &WindowedDataset| -> Result<HmDataset> {
        if hm_cfg.probability_inputs {
            HmDataset::from_columns(&probs, ds.all_targets())
        } else {
            HmDataset::from_labels(&as_labels(&probs), ds.all_targets())
        }
    };
    let fit_ds = dataset(outputs(&sg.train)?, &sg.train)?;
    let stop_ds = dataset(stop_out, &stop)?;
    let select_ds = dataset(select_out, &select)?;
    let test_ds = dataset(test_out, &sg.test)?;
    let mut hm = HierarchicalModel::new(
        k,
        HmConfig {
            seed: sub_seed(c.seed, 2000 + j as u64),
            ..hm_cfg.clone()
        },
    )?;
    let log = train_hm(&mut hm, &fit_ds, &stop_ds).map_err(ctx)?;
    let hm_select = hm.evaluate(&select_ds)?;
    let sc_scores: Vec<_> = sc_select.iter().map(ConfusionMatrix::scores).collect();
    let chosen = fallback_select(&hm_select.scores(), &sc_scores, c.ensemble.select_metric)?;
    let hm_test = hm.evaluate(&test_ds)?;
    let chosen_test = match chosen {
        Predictor::Hierarchical => hm_test,
        Predictor::SubClassifier(i) => sc_test[i],
    };
    Ok((
        EnsembleRow {
            sg: j,
            hm_best_epoch: log.best_epoch,
            hm_select: Some(hm_select),
            sc_select,
            chosen,
            hm_test: Some(hm_test),
            sc_test,
            chosen_test,
        },
        Some(hm),
    ))
}

/// Raw-feature selection over the training block.
///
/// Rows are (hour, cell) pairs taken at an even stride; the target is the
/// cell's hot label at that hour.
fn select_features(block: &KpiPanel, kept: &[usize], c: &ExperimentConfig) -> Result<SelectedFeatures> {
    let p = &c.prep;
    let method = serde_json::to_value(p.selection)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let total = block.hours * block.n_cells();
    let stride = total.div_ceil(p.selection_rows.max(1)).max(1);
    let rows: Vec<usize> = (0..total).step_by(stride).collect();
    let mut x = Tensor2D::zeros(rows.len(), kept.len());
    let mut y = Vec::with_capacity(rows.len());
    for (r, &idx) in rows.iter().enumerate() {
        let (t, m) = (idx / block.n_cells(), idx % block.n_cells());
        let row = block.row(t, m);
        for (j, &f) in kept.iter().enumerate() {
            x.set(r, j, row[f]);
        }
        y.push(if block.is_hot(t, m) { 1.0 } else { 0.0 });
    }
    let xs = standardize_columns(&x);
    let mean_y = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean_y).collect();
    let budget = p.n_selected.min(kept.len());
    let top_by_magnitude = |beta: &[f64]| -> (Vec<usize>, Vec<f64>) {
        let mut order: Vec<usize> = (0..beta.len()).filter(|&j| beta[j].abs() > crate::prep::SUPPORT_EPS).collect();
        order.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
        order.truncate(budget);
        let scores = order.iter().map(|&j| beta[j].abs()).collect();
        (order, scores)
    };
    let (local, feature_scores): (Vec<usize>, Vec<f64>) = match p.selection {
        SelectionMethod::None => ((0..kept.len()).collect(), vec![]),
        SelectionMethod::Correlation => {
            if !y.iter().any(|&v| v > 0.0) {
                return Err(Error::data("correlation selection needs hot labels in the training block"));
            }
            let ranked = correlation_filter(&xs, &y)?;
            ranked.iter().take(budget).map(|r| (r.feature, r.abs_corr)).unzip()
        }
        SelectionMethod::Lasso => top_by_magnitude(&lasso_fit(&xs, &yc, p.lasso_lambda, 10_000, 1e-9)?.beta),
        SelectionMethod::Ridge => top_by_magnitude(&ridge_fit(&xs, &yc, p.ridge_lambda)?),
        SelectionMethod::Forward | SelectionMethod::Backward | SelectionMethod::Stepwise => {
            let mode = p.selection.wrapper_mode().expect("wrapper method");
            let set = wrapper_select(kept.len(), mode, |s| ols_r2(&xs, &yc, s), budget)?;
            (set, vec![])
        }
    };
    if local.is_empty() {
        return Err(Error::data(format!("{method} selection kept no features")));
    }
    let score = if yc.iter().any(|v| *v != 0.0) { ols_r2(&xs, &yc, &local) } else { 0.0 };
    Ok(SelectedFeatures {
        method,
        features: local.iter().map(|&j| kept[j]).collect(),
        feature_scores,
        score,
        dropped_near_zero_variance: vec![],
    })
}
