use std::path::Path;

use crate::error::{Error, Result};

use super::CellNetwork;

const HEADER: [&str; 3] = ["cell_id", "lat", "lon"];

/// Serialises cell coordinates as `cell_id,lat,lon`.
pub fn cells_csv(net: &CellNetwork) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for i in 0..net.len() {
        w.write_record([net.cell_ids[i].clone(), net.lat_deg[i].to_string(), net.lon_deg[i].to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parses a `cells.csv` body and builds the threshold graph over it.
pub fn parse_cells_csv(bytes: &[u8], threshold_km: f64) -> Result<CellNetwork> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers().map_err(|e| Error::format(format!("cells.csv: {e}")))?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::format(format!("cells.csv: expected header cell_id,lat,lon, found {:?}", header)));
    }
    let (mut ids, mut lat, mut lon) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("cells.csv: {e}")))?;
        let num = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|_| {
                Error::data(format!("cells.csv row {}: bad {} value {:?}", line + 1, HEADER[k], &rec[k]))
            })
        };
        ids.push(rec[0].to_string());
        lat.push(num(1)?);
        lon.push(num(2)?);
    }
    if ids.is_empty() {
        return Err(Error::data("cells.csv: no cells"));
    }
    CellNetwork::new(ids, lat, lon, threshold_km)
}

pub fn read_cells_csv(path: &Path, threshold_km: f64) -> Result<CellNetwork> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cells_csv(&bytes, threshold_km)
}
