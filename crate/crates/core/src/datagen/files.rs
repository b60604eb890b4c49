use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::KpiPanel;

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory flush")
}

fn cell_index(cell_ids: &[String]) -> HashMap<&str, usize> {
    cell_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect()
}

fn field_str<'a>(rec: &'a csv::ByteRecord, k: usize, file: &str, line: u64) -> Result<&'a str> {
    std::str::from_utf8(&rec[k]).map_err(|_| Error::format(format!("{file} line {line}: invalid UTF-8")))
}

fn line_of(rec: &csv::ByteRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Serialises the panel as `cell_id,hour,f0..f{F-1}`; masked entries are empty.
pub fn kpis_csv(panel: &KpiPanel) -> Vec<u8> {
    let mut w = writer();
    let mut header = vec!["cell_id".to_string(), "hour".to_string()];
    header.extend((0..panel.n_features).map(|f| format!("f{f}")));
    w.write_record(&header).expect("in-memory write");
    let mut buf = String::new();
    for (m, id) in panel.cell_ids.iter().enumerate() {
        for t in 0..panel.hours {
            w.write_field(id).expect("in-memory write");
            w.write_field(t.to_string()).expect("in-memory write");
            for (v, observed) in panel.row(t, m).iter().zip(panel.row_mask(t, m)) {
                buf.clear();
                if *observed {
                    write!(buf, "{v}").expect("string write");
                }
                w.write_field(&buf).expect("in-memory write");
            }
            w.write_record(None::<&[u8]>).expect("in-memory write");
        }
    }
    finish(w)
}

/// Parses a `kpis.csv` body for the given cells.
///
/// Every (cell, hour) pair in `0..hours` must appear exactly once; hot labels
/// come back all false.
pub fn parse_kpis_csv(bytes: &[u8], cell_ids: &[String]) -> Result<KpiPanel> {
    const FILE: &str = "kpis.csv";
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.byte_headers().map_err(|e| Error::format(format!("{FILE}: {e}")))?.clone();
    let n_features = header.len().saturating_sub(2);
    let header_ok = header.len() >= 3
        && &header[0] == b"cell_id"
        && &header[1] == b"hour"
        && (0..n_features).all(|f| header[f + 2] == *format!("f{f}").as_bytes());
    if !header_ok {
        return Err(Error::format(format!("{FILE}: expected header cell_id,hour,f0..f{{F-1}}")));
    }
    let index = cell_index(cell_ids);
    let mut rows: Vec<(usize, usize, Vec<Option<f64>>)> = Vec::new();
    let mut rec = csv::ByteRecord::new();
    let mut hours = 0;
    while r.read_byte_record(&mut rec).map_err(|e| Error::format(format!("{FILE}: {e}")))? {
        let line = line_of(&rec);
        let id = field_str(&rec, 0, FILE, line)?;
        let m = *index
            .get(id)
            .ok_or_else(|| Error::data(format!("{FILE} line {line}: unknown cell {id:?}")))?;
        let t: usize = field_str(&rec, 1, FILE, line)?
            .parse()
            .map_err(|_| Error::data(format!("{FILE} line {line}: bad hour")))?;
        let mut vals = Vec::with_capacity(n_features);
        for k in 2..rec.len() {
            let s = field_str(&rec, k, FILE, line)?.trim();
            if s.is_empty() {
                vals.push(None);
            } else {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::data(format!("{FILE} line {line}: bad value {s:?} in f{}", k - 2)))?;
                if !v.is_finite() {
                    return Err(Error::data(format!("{FILE} line {line}: non-finite value in f{}", k - 2)));
                }
                vals.push(Some(v));
            }
        }
        hours = hours.max(t + 1);
        rows.push((m, t, vals));
    }
    let n_cells = cell_ids.len();
    if rows.len() != hours * n_cells {
        return Err(Error::data(format!(
            "{FILE}: {} rows, expected {} hours x {} cells",
            rows.len(),
            hours,
            n_cells
        )));
    }
    let mut kpis = vec![f64::NAN; hours * n_cells * n_features];
    let mut mask = vec![false; kpis.len()];
    let mut seen = vec![false; hours * n_cells];
    for (m, t, vals) in rows {
        if std::mem::replace(&mut seen[t * n_cells + m], true) {
            return Err(Error::data(format!("{FILE}: duplicate row for {} hour {t}", cell_ids[m])));
        }
        let base = (t * n_cells + m) * n_features;
        for (f, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                kpis[base + f] = v;
                mask[base + f] = true;
            }
        }
    }
    Ok(KpiPanel {
        cell_ids: cell_ids.to_vec(),
        hours,
        n_features,
        kpis,
        mask,
        hot: vec![false; hours * n_cells],
    })
}

/// Sparse hot labels: one `cell_id,hour` row per hot cell-hour.
pub fn hot_csv(panel: &KpiPanel) -> Vec<u8> {
    let mut w = writer();
    w.write_record(["cell_id", "hour"]).expect("in-memory write");
    for (m, id) in panel.cell_ids.iter().enumerate() {
        for t in (0..panel.hours).filter(|&t| panel.is_hot(t, m)) {
            w.write_record([id.as_str(), &t.to_string()]).expect("in-memory write");
        }
    }
    finish(w)
}

/// Reads sparse hot labels into `panel.hot`, replacing what was there.
pub fn apply_hot_csv(bytes: &[u8], panel: &mut KpiPanel) -> Result<()> {
    const FILE: &str = "hot.csv";
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.byte_headers().map_err(|e| Error::format(format!("{FILE}: {e}")))?;
    if header.iter().collect::<Vec<_>>() != [b"cell_id".as_slice(), b"hour"] {
        return Err(Error::format(format!("{FILE}: expected header cell_id,hour")));
    }
    let index = cell_index(&panel.cell_ids);
    let n_cells = panel.n_cells();
    let mut hot = vec![false; panel.hot.len()];
    let mut rec = csv::ByteRecord::new();
    while r.read_byte_record(&mut rec).map_err(|e| Error::format(format!("{FILE}: {e}")))? {
        let line = line_of(&rec);
        let id = field_str(&rec, 0, FILE, line)?;
        let m = *index
            .get(id)
            .ok_or_else(|| Error::data(format!("{FILE} line {line}: unknown cell {id:?}")))?;
        let t: usize = field_str(&rec, 1, FILE, line)?
            .parse()
            .ok()
            .filter(|&t| t < panel.hours)
            .ok_or_else(|| Error::data(format!("{FILE} line {line}: bad hour")))?;
        hot[t * n_cells + m] = true;
    }
    panel.hot = hot;
    Ok(())
}
