use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo_graph::{Adjacency, GraphOperator};
use crate::numkit::{bce_logit_grad, bce_term, sigmoid, Param, Tensor2D};
use crate::prep::WindowedDataset;

use super::input::{batch_targets, SeriesInput};
use super::layers::{Dense, GcnCache, GcnLayer, GruLayer, GruTrace, LstmLayer};
use super::{ModelConfig, ModelKind};

/// Common interface of the trainable per-cell classifiers.
pub trait Classifier: Clone + Send + Sync {
    fn config(&self) -> &ModelConfig;

    /// Model-specific input series for a dataset (validated).
    fn prepare(&self, ds: &WindowedDataset) -> Result<SeriesInput>;

    /// Probabilities for every (window, cell) of `batch`, window-major.
    fn predict_batch(&self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Vec<f64>;

    /// Accumulates gradients of the mean weighted BCE over the batch and returns the loss.
    fn train_batch(&mut self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Result<f64>;

    /// Parameters with their checkpoint names, in a fixed order.
    fn named_params(&self) -> Vec<(String, &Param)>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Graph the model is bound to, if it uses one.
    fn adjacency(&self) -> Option<&Adjacency>;

    /// Returns a copy bound to another sub-graph's graph.
    fn rebind(&self, adjacency: &Adjacency) -> Self;

    fn snap_to_f32(&mut self) {
        for p in self.params_mut() {
            p.snap_to_f32();
        }
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.data().len()).sum()
    }
}

fn check_dataset(cfg: &ModelConfig, ds: &WindowedDataset, cells: Option<usize>) -> Result<()> {
    if ds.mb() != cfg.mb {
        return Err(Error::validation(format!(
            "dataset memory buffer {} differs from model's {}",
            ds.mb(),
            cfg.mb
        )));
    }
    if ds.n_features() != cfg.n_features {
        return Err(Error::validation(format!(
            "dataset has {} features, model expects {}",
            ds.n_features(),
            cfg.n_features
        )));
    }
    if let Some(m) = cells {
        if ds.n_cells() != m {
            return Err(Error::validation(format!(
                "dataset has {} cells, model graph has {m}",
                ds.n_cells()
            )));
        }
    }
    Ok(())
}

/// Sigmoid head forward: probabilities and the logit gradient of the mean weighted BCE.
fn head_loss(logits: &Tensor2D, targets: &Tensor2D, pos_weight: f64) -> Result<(f64, Tensor2D)> {
    let n = logits.rows().max(1) as f64;
    let mut total = 0.0;
    let mut d = Tensor2D::zeros(logits.rows(), 1);
    for ((g, &z), &y) in d.data_mut().iter_mut().zip(logits.data()).zip(targets.data()) {
        let p = sigmoid(z);
        total += bce_term(p, y, pos_weight).0;
        *g = bce_logit_grad(p, y, pos_weight) / n;
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::numeric("training loss is not finite"));
    }
    Ok((loss, d))
}

fn seeded(cfg: &ModelConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

/// One GCN layer over each hour, a GRU stack over the hours, and a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct SubClassifier {
    pub config: ModelConfig,
    pub gcn: GcnLayer,
    pub gru: Vec<GruLayer>,
    pub fc: Dense,
    op: GraphOperator,
}

struct LightningPass {
    gcn: Vec<GcnCache>,
    traces: Vec<GruTrace>,
    logits: Tensor2D,
}

impl SubClassifier {
    pub fn new(config: ModelConfig, adjacency: &Adjacency) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(&config);
        let gcn = GcnLayer::new(config.n_features, config.n_gcn, &mut rng);
        let gru = (0..config.n_gru_layers)
            .map(|l| {
                let input = if l == 0 { config.n_gcn } else { config.n_hidden };
                GruLayer::new(input, config.n_hidden, &mut rng)
            })
            .collect();
        let fc = Dense::new(config.n_hidden, 1, &mut rng);
        let mut m = SubClassifier {
            config: ModelConfig {
                kind: ModelKind::Lightning,
                ..config
            },
            gcn,
            gru,
            fc,
            op: GraphOperator::new(adjacency),
        };
        m.snap_to_f32();
        Ok(m)
    }

    pub fn operator(&self) -> &GraphOperator {
        &self.op
    }

    fn run(&self, propagated: Vec<Tensor2D>) -> LightningPass {
        let gcn: Vec<GcnCache> = propagated.into_iter().map(|p| self.gcn.forward_propagated(p)).collect();
        let mut traces: Vec<GruTrace> = Vec::with_capacity(self.gru.len());
        for (l, layer) in self.gru.iter().enumerate() {
            let trace = if l == 0 {
                let xs: Vec<Tensor2D> = gcn.iter().map(|c| c.out.clone()).collect();
                layer.forward(&xs, None)
            } else {
                layer.forward(&traces[l - 1].outputs, None)
            };
            traces.push(trace);
        }
        let last = traces.last().and_then(|t| t.outputs.last()).expect("non-empty sequence");
        let logits = self.fc.forward(last);
        LightningPass { gcn, traces, logits }
    }

    /// Per-cell probabilities for one `mb x cells x features` window.
    pub fn forward_window(&self, window: &[f64]) -> Result<Vec<f64>> {
        let (m, f) = (self.op.len(), self.config.n_features);
        if window.len() != self.config.mb * m * f {
            return Err(Error::validation(format!(
                "window has {} values, expected {} x {m} x {f}",
                window.len(),
                self.config.mb
            )));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("window contains non-finite values"));
        }
        let ps = (0..self.config.mb).map(|h| self.op.apply_slice(&window[h * m * f..(h + 1) * m * f], f)).collect();
        Ok(self.run(ps).logits.data().iter().map(|&z| sigmoid(z)).collect())
    }
}

impl Classifier for SubClassifier {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn prepare(&self, ds: &WindowedDataset) -> Result<SeriesInput> {
        check_dataset(&self.config, ds, Some(self.op.len()))?;
        SeriesInput::propagated(ds, &self.op)
    }

    fn predict_batch(&self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Vec<f64> {
        let ps = (0..self.config.mb).map(|h| input.gather(ds, batch, h)).collect();
        self.run(ps).logits.data().iter().map(|&z| sigmoid(z)).collect()
    }

    fn train_batch(&mut self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Result<f64> {
        let ps = (0..self.config.mb).map(|h| input.gather(ds, batch, h)).collect();
        let pass = self.run(ps);
        let (loss, dlogit) = head_loss(&pass.logits, &batch_targets(ds, batch), self.config.pos_weight)?;
        let top = pass.traces.last().unwrap().outputs.last().unwrap();
        let dh = self.fc.backward(top, &dlogit);
        let steps = self.config.mb;
        let mut d_out: Vec<Option<Tensor2D>> = vec![None; steps];
        d_out[steps - 1] = Some(dh);
        for l in (0..self.gru.len()).rev() {
            let (dxs, _) = self.gru[l].backward(&pass.traces[l], &d_out);
            d_out = dxs.into_iter().map(Some).collect();
        }
        for (cache, dz) in pass.gcn.iter().zip(&d_out) {
            self.gcn.accumulate_weight_grad(cache, dz.as_ref().unwrap());
        }
        Ok(loss)
    }

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = vec![("gcn.w".to_string(), &self.gcn.w)];
        for (l, layer) in self.gru.iter().enumerate() {
            for (name, p) in ["wz", "bz", "wr", "br", "wh", "bh"].iter().zip(layer.params()) {
                v.push((format!("gru{l}.{name}"), p));
            }
        }
        v.push(("fc.w".into(), &self.fc.w));
        v.push(("fc.b".into(), &self.fc.b));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.gcn.w];
        for layer in self.gru.iter_mut() {
            v.extend(layer.params_mut());
        }
        v.push(&mut self.fc.w);
        v.push(&mut self.fc.b);
        v
    }

    fn adjacency(&self) -> Option<&Adjacency> {
        Some(self.op.adjacency())
    }

    fn rebind(&self, adjacency: &Adjacency) -> Self {
        SubClassifier {
            op: GraphOperator::new(adjacency),
            ..self.clone()
        }
    }
}

/// Per-cell LSTM over the raw features followed by a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmBaseline {
    pub config: ModelConfig,
    pub lstm: LstmLayer,
    pub fc: Dense,
}

impl LstmBaseline {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(&config);
        let lstm = LstmLayer::new(config.n_features, config.n_hidden, &mut rng);
        let fc = Dense::new(config.n_hidden, 1, &mut rng);
        let mut m = LstmBaseline {
            config: ModelConfig {
                kind: ModelKind::Lstm,
                ..config
            },
            lstm,
            fc,
        };
        m.snap_to_f32();
        Ok(m)
    }
}

impl Classifier for LstmBaseline {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn prepare(&self, ds: &WindowedDataset) -> Result<SeriesInput> {
        check_dataset(&self.config, ds, None)?;
        SeriesInput::raw(ds)
    }

    fn predict_batch(&self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Vec<f64> {
        let xs: Vec<Tensor2D> = (0..self.config.mb).map(|h| input.gather(ds, batch, h)).collect();
        let tr = self.lstm.forward(&xs);
        self.fc.forward(tr.outputs.last().unwrap()).data().iter().map(|&z| sigmoid(z)).collect()
    }

    fn train_batch(&mut self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Result<f64> {
        let xs: Vec<Tensor2D> = (0..self.config.mb).map(|h| input.gather(ds, batch, h)).collect();
        let tr = self.lstm.forward(&xs);
        let top = tr.outputs.last().unwrap();
        let logits = self.fc.forward(top);
        let (loss, dlogit) = head_loss(&logits, &batch_targets(ds, batch), self.config.pos_weight)?;
        let dh = self.fc.backward(top, &dlogit);
        let mut d_out: Vec<Option<Tensor2D>> = vec![None; self.config.mb];
        d_out[self.config.mb - 1] = Some(dh);
        self.lstm.backward(&tr, &d_out);
        Ok(loss)
    }

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v: Vec<(String, &Param)> = ["wi", "bi", "wf", "bf", "wo", "bo", "wg", "bg"]
            .iter()
            .zip(self.lstm.params())
            .map(|(n, p)| (format!("lstm.{n}"), p))
            .collect();
        v.push(("fc.w".into(), &self.fc.w));
        v.push(("fc.b".into(), &self.fc.b));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.lstm.params_mut().into_iter().collect();
        v.push(&mut self.fc.w);
        v.push(&mut self.fc.b);
        v
    }

    fn adjacency(&self) -> Option<&Adjacency> {
        None
    }

    fn rebind(&self, _adjacency: &Adjacency) -> Self {
        self.clone()
    }
}

/// Two graph convolutions over the latest hour and a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnBaseline {
    pub config: ModelConfig,
    pub gcn1: GcnLayer,
    pub gcn2: GcnLayer,
    pub fc: Dense,
    op: GraphOperator,
}

impl GcnBaseline {
    pub fn new(config: ModelConfig, adjacency: &Adjacency) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(&config);
        let gcn1 = GcnLayer::new(config.n_features, config.n_gcn, &mut rng);
        let gcn2 = GcnLayer::new(config.n_gcn, config.n_hidden, &mut rng);
        let fc = Dense::new(config.n_hidden, 1, &mut rng);
        let mut m = GcnBaseline {
            config: ModelConfig {
                kind: ModelKind::Gcn,
                ..config
            },
            gcn1,
            gcn2,
            fc,
            op: GraphOperator::new(adjacency),
        };
        m.snap_to_f32();
        Ok(m)
    }

    fn run(&self, p: Tensor2D) -> (GcnCache, GcnCache, Tensor2D) {
        let c1 = self.gcn1.forward_propagated(p);
        let c2 = self.gcn2.forward(&self.op, &c1.out);
        let logits = self.fc.forward(&c2.out);
        (c1, c2, logits)
    }
}

impl Classifier for GcnBaseline {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn prepare(&self, ds: &WindowedDataset) -> Result<SeriesInput> {
        check_dataset(&self.config, ds, Some(self.op.len()))?;
        SeriesInput::propagated(ds, &self.op)
    }

    fn predict_batch(&self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Vec<f64> {
        let (_, _, logits) = self.run(input.gather(ds, batch, self.config.mb - 1));
        logits.data().iter().map(|&z| sigmoid(z)).collect()
    }

    fn train_batch(&mut self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Result<f64> {
        let (c1, c2, logits) = self.run(input.gather(ds, batch, self.config.mb - 1));
        let (loss, dlogit) = head_loss(&logits, &batch_targets(ds, batch), self.config.pos_weight)?;
        let d2 = self.fc.backward(&c2.out, &dlogit);
        let op = self.op.clone();
        let d1 = self.gcn2.backward(&op, &c2, &d2);
        self.gcn1.accumulate_weight_grad(&c1, &d1);
        Ok(loss)
    }

    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![
            ("gcn1.w".into(), &self.gcn1.w),
            ("gcn2.w".into(), &self.gcn2.w),
            ("fc.w".into(), &self.fc.w),
            ("fc.b".into(), &self.fc.b),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gcn1.w, &mut self.gcn2.w, &mut self.fc.w, &mut self.fc.b]
    }

    fn adjacency(&self) -> Option<&Adjacency> {
        Some(self.op.adjacency())
    }

    fn rebind(&self, adjacency: &Adjacency) -> Self {
        GcnBaseline {
            op: GraphOperator::new(adjacency),
            ..self.clone()
        }
    }
}

/// Any of the three classifiers, e.g. as loaded from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyClassifier {
    Lightning(SubClassifier),
    Lstm(LstmBaseline),
    Gcn(GcnBaseline),
}

impl AnyClassifier {
    pub fn new(config: ModelConfig, adjacency: &Adjacency) -> Result<Self> {
        Ok(match config.kind {
            ModelKind::Lightning => AnyClassifier::Lightning(SubClassifier::new(config, adjacency)?),
            ModelKind::Lstm => AnyClassifier::Lstm(LstmBaseline::new(config)?),
            ModelKind::Gcn => AnyClassifier::Gcn(GcnBaseline::new(config, adjacency)?),
        })
    }
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $e:expr) => {
        match $self {
            AnyClassifier::Lightning($m) => $e,
            AnyClassifier::Lstm($m) => $e,
            AnyClassifier::Gcn($m) => $e,
        }
    };
}

impl Classifier for AnyClassifier {
    fn config(&self) -> &ModelConfig {
        dispatch!(self, m => m.config())
    }

    fn prepare(&self, ds: &WindowedDataset) -> Result<SeriesInput> {
        dispatch!(self, m => m.prepare(ds))
    }

    fn predict_batch(&self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Vec<f64> {
        dispatch!(self, m => m.predict_batch(input, ds, batch))
    }

    fn train_batch(&mut self, input: &SeriesInput, ds: &WindowedDataset, batch: &[usize]) -> Result<f64> {
        dispatch!(self, m => m.train_batch(input, ds, batch))
    }

    fn named_params(&self) -> Vec<(String, &Param)> {
        dispatch!(self, m => m.named_params())
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        dispatch!(self, m => m.params_mut())
    }

    fn adjacency(&self) -> Option<&Adjacency> {
        dispatch!(self, m => m.adjacency())
    }

    fn rebind(&self, adjacency: &Adjacency) -> Self {
        match self {
            AnyClassifier::Lightning(m) => AnyClassifier::Lightning(m.rebind(adjacency)),
            AnyClassifier::Lstm(m) => AnyClassifier::Lstm(m.rebind(adjacency)),
            AnyClassifier::Gcn(m) => AnyClassifier::Gcn(m.rebind(adjacency)),
        }
    }
}
