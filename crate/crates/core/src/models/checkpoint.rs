use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo_graph::Adjacency;
use crate::numkit::Tensor2D;

use super::{AnyClassifier, Classifier, ModelConfig};

pub const MAGIC: &[u8; 4] = b"LNET";
pub const FORMAT_VERSION: u16 = 1;

/// A named `f32` tensor of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub value: Tensor2D,
}

/// Decoded checkpoint: a JSON config block plus named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub config_json: String,
    pub entries: Vec<Entry>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.value.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(e.value.cols() as u32).to_le_bytes());
            for &v in e.value.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint: bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!("checkpoint: unknown format version {version}")));
        }
        let len = r.u32()? as usize;
        let config_json = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::format("checkpoint: config block is not UTF-8"))?;
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::format("checkpoint: entry name is not UTF-8"))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::format(format!("checkpoint: entry '{name}' has an impossible shape")))?;
            let raw = r.take(count * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            entries.push(Entry {
                name,
                value: Tensor2D::new(rows, cols, data)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint: trailing bytes"));
        }
        Ok(Container { config_json, entries })
    }

    pub fn entry(&self, name: &str) -> Result<&Tensor2D> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::format(format!("checkpoint: missing entry '{name}'")))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint: truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn graph_entries(adj: &Adjacency) -> Vec<Entry> {
    let edges = adj.edges();
    let mut data = Vec::with_capacity(edges.len() * 2);
    for (i, j) in &edges {
        data.push(*i as f64);
        data.push(*j as f64);
    }
    vec![
        Entry {
            name: "graph.nodes".into(),
            value: Tensor2D::filled(1, 1, adj.len() as f64),
        },
        Entry {
            name: "graph.edges".into(),
            value: Tensor2D::new(edges.len(), 2, data).expect("edge shape"),
        },
    ]
}

fn read_graph(c: &Container) -> Result<Adjacency> {
    let nodes = c.entry("graph.nodes")?;
    if nodes.shape() != (1, 1) {
        return Err(Error::format("checkpoint: graph.nodes must be 1x1"));
    }
    let n = nodes.get(0, 0) as usize;
    let e = c.entry("graph.edges")?;
    if e.cols() != 2 && e.rows() > 0 {
        return Err(Error::format("checkpoint: graph.edges must be Ex2"));
    }
    let edges: Vec<(usize, usize)> = (0..e.rows()).map(|k| (e.get(k, 0) as usize, e.get(k, 1) as usize)).collect();
    Adjacency::from_edges(n, &edges).map_err(|err| Error::format(format!("checkpoint: bad graph: {err}")))
}

pub fn to_container<C: Classifier>(model: &C) -> Result<Container> {
    let config_json = serde_json::to_string(model.config()).map_err(|e| Error::format(e.to_string()))?;
    let mut entries: Vec<Entry> = model
        .named_params()
        .into_iter()
        .map(|(name, p)| Entry {
            name,
            value: p.value.clone(),
        })
        .collect();
    if let Some(adj) = model.adjacency() {
        entries.extend(graph_entries(adj));
    }
    Ok(Container { config_json, entries })
}

pub fn from_container(c: &Container) -> Result<AnyClassifier> {
    let config: ModelConfig =
        serde_json::from_str(&c.config_json).map_err(|e| Error::format(format!("checkpoint config: {e}")))?;
    let adjacency = match config.kind {
        super::ModelKind::Lstm => Adjacency::empty(1),
        _ => read_graph(c)?,
    };
    let mut model = AnyClassifier::new(config, &adjacency).map_err(|e| Error::format(format!("checkpoint config: {e}")))?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let expected = names.len() + usize::from(model.adjacency().is_some()) * 2;
    if c.entries.len() != expected {
        return Err(Error::format(format!(
            "checkpoint: {} entries, expected {expected}",
            c.entries.len()
        )));
    }
    for (name, p) in names.iter().zip(model.params_mut()) {
        let v = c.entry(name)?;
        if v.shape() != p.shape() {
            return Err(Error::format(format!(
                "checkpoint: entry '{name}' has shape {:?}, expected {:?}",
                v.shape(),
                p.shape()
            )));
        }
        p.value = v.clone();
    }
    Ok(model)
}

pub fn save_checkpoint<C: Classifier>(model: &C, path: &Path) -> Result<()> {
    write_atomic(path, &to_container(model)?.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<AnyClassifier> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_container(&Container::from_bytes(&bytes)?)
}
