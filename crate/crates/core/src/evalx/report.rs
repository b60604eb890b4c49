use std::path::Path;

use crate::error::{Error, Result};
use crate::models::write_atomic;

use super::{CrossEvalGrid, SimilarityStudy};

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::format(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::format(format!("csv: {e}")))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cross_eval_csv(grid: &CrossEvalGrid) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (i, row) in grid.cms.iter().enumerate() {
        for (j, cm) in row.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                cm.tp.to_string(),
                cm.fp.to_string(),
                cm.fn_.to_string(),
                cm.tn.to_string(),
                grid.precision[i][j].to_string(),
                grid.recall[i][j].to_string(),
            ]);
        }
    }
    csv_bytes(&["i", "j", "tp", "fp", "fn", "tn", "precision", "recall"], rows)
}

pub fn write_cross_eval_csv(grid: &CrossEvalGrid, path: &Path) -> Result<()> {
    write_atomic(path, &cross_eval_csv(grid)?)
}

pub fn similarity_csv(study: &SimilarityStudy) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for p in &study.pairs {
        let test = |metric| study.tests.iter().find(|t| t.anchor == p.anchor && t.metric == metric);
        let p_test = test(super::Metric::Precision);
        let r_test = test(super::Metric::Recall);
        rows.push(vec![
            p.anchor.to_string(),
            p.other.to_string(),
            p.similarity.to_string(),
            opt(p.precision_ratio),
            opt(p.recall_ratio),
            opt(p_test.and_then(|t| t.rho)),
            opt(p_test.and_then(|t| t.adjusted_p)),
            opt(r_test.and_then(|t| t.rho)),
            opt(r_test.and_then(|t| t.adjusted_p)),
        ]);
    }
    csv_bytes(
        &[
            "anchor",
            "other",
            "similarity",
            "precision_ratio",
            "recall_ratio",
            "rs_precision",
            "adj_p_precision",
            "rs_recall",
            "adj_p_recall",
        ],
        rows,
    )
}

pub fn write_similarity_csv(study: &SimilarityStudy, path: &Path) -> Result<()> {
    write_atomic(path, &similarity_csv(study)?)
}
