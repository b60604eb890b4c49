use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn scores(&self) -> PrecisionRecall {
        precision_recall(self)
    }
}

pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::validation(format!(
            "confusion: {} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in pred.iter().zip(truth) {
        cm.add(p, t);
    }
    Ok(cm)
}

/// Precision and recall; a zero denominator yields 0.0 and sets the flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

pub fn precision_recall(cm: &ConfusionMatrix) -> PrecisionRecall {
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
    PrecisionRecall {
        precision,
        recall,
        precision_undefined,
        recall_undefined,
    }
}

/// Micro-aggregation: componentwise sum.
pub fn aggregate_confusion(cms: &[ConfusionMatrix]) -> Result<ConfusionMatrix> {
    if cms.is_empty() {
        return Err(Error::validation("aggregate_confusion: empty list"));
    }
    let mut out = ConfusionMatrix::default();
    for cm in cms {
        out.merge(cm);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basic_counts() {
        let cm = confusion(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (2, 1, 0, 0));
        let inv = confusion(&[false, true, false], &[true, false, true]).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
        assert!(confusion(&[true], &[]).is_err());
    }

    #[test]
    fn loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<bool> = (0..500).map(|_| rng.gen()).collect();
        let t: Vec<bool> = (0..500).map(|_| rng.gen()).collect();
        let cm = confusion(&p, &t).unwrap();
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        let mut tn = 0;
        for i in 0..500 {
            if p[i] && t[i] {
                tp += 1
            } else if p[i] {
                fp += 1
            } else if t[i] {
                fn_ += 1
            } else {
                tn += 1
            }
        }
        assert_eq!(cm, ConfusionMatrix { tp, fp, fn_, tn });
    }

    #[test]
    fn precision_recall_cases() {
        let pr = precision_recall(&ConfusionMatrix { tp: 3, fp: 1, fn_: 2, tn: 0 });
        assert_eq!((pr.precision, pr.recall), (0.75, 0.6));
        let empty = precision_recall(&ConfusionMatrix::default());
        assert!(empty.precision_undefined && empty.precision == 0.0);
        let pooled = aggregate_confusion(&[
            ConfusionMatrix { tp: 1, fp: 1, fn_: 0, tn: 0 },
            ConfusionMatrix { tp: 3, fp: 0, fn_: 0, tn: 0 },
        ])
        .unwrap();
        assert_eq!(pooled.scores().precision, 0.8);
        assert!(aggregate_confusion(&[]).is_err());
    }
}
