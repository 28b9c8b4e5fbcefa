use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::MurmurLabel;
use crate::error::{Error, Result};

/// Class weights of the weighted accuracy, canonical order.
pub const WACC_WEIGHTS: [u64; 3] = [5, 3, 1];

/// Patient-level confusion matrix, `matrix[true][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionCounts {
    pub matrix: [[u64; 3]; 3],
}

impl ConfusionCounts {
    pub fn add(&mut self, truth: MurmurLabel, predicted: MurmurLabel) {
        self.matrix[truth.index()][predicted.index()] += 1;
    }

    /// `c_i`: correct predictions for true class `i`.
    pub fn correct(&self, class: MurmurLabel) -> u64 {
        self.matrix[class.index()][class.index()]
    }

    /// `t_i`: patients whose true class is `i`.
    pub fn total(&self, class: MurmurLabel) -> u64 {
        self.matrix[class.index()].iter().sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn recall(&self, class: MurmurLabel) -> Option<f64> {
        let t = self.total(class);
        (t > 0).then(|| self.correct(class) as f64 / t as f64)
    }

    pub fn merged(&self, other: &ConfusionCounts) -> ConfusionCounts {
        let mut out = *self;
        for (row, o) in out.matrix.iter_mut().zip(other.matrix) {
            for (a, b) in row.iter_mut().zip(o) {
                *a += b;
            }
        }
        out
    }
}

/// `(5c_p + 3c_u + c_a) / (5t_p + 3t_u + t_a)`.
pub fn weighted_accuracy(cc: &ConfusionCounts) -> Result<f64> {
    let mut num = 0;
    let mut den = 0;
    for (l, w) in MurmurLabel::ALL.into_iter().zip(WACC_WEIGHTS) {
        num += w * cc.correct(l);
        den += w * cc.total(l);
    }
    if den == 0 {
        return Err(Error::Precondition("weighted accuracy of an empty confusion matrix".into()));
    }
    Ok(num as f64 / den as f64)
}

/// Mean of the three per-class recalls; undefined when a class has no patients.
pub fn unweighted_average_recall(cc: &ConfusionCounts) -> Result<f64> {
    let mut sum = 0.0;
    for l in MurmurLabel::ALL {
        sum += cc.recall(l).ok_or_else(|| {
            Error::Precondition(format!("no {l} patients, recall undefined"))
        })?;
    }
    Ok(sum / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub w_acc: f64,
    /// `None` when some class has no patients in the scored set.
    pub uar: Option<f64>,
    pub recall_present: Option<f64>,
    pub recall_unknown: Option<f64>,
    pub recall_absent: Option<f64>,
    pub confusion: ConfusionCounts,
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionCounts) -> Result<Self> {
        Ok(Self {
            w_acc: weighted_accuracy(&confusion)?,
            uar: unweighted_average_recall(&confusion).ok(),
            recall_present: confusion.recall(MurmurLabel::Present),
            recall_unknown: confusion.recall(MurmurLabel::Unknown),
            recall_absent: confusion.recall(MurmurLabel::Absent),
            confusion,
        })
    }

    pub fn recalls(&self) -> [Option<f64>; 3] {
        [self.recall_present, self.recall_unknown, self.recall_absent]
    }
}

/// Scores patient-level predictions against the truth. Both maps must cover
/// the same patient ids.
pub fn score_patients(
    predicted: &BTreeMap<String, MurmurLabel>,
    truth: &BTreeMap<String, MurmurLabel>,
) -> Result<MetricsReport> {
    let missing: Vec<&str> = truth.keys().filter(|k| !predicted.contains_key(*k)).map(String::as_str).collect();
    let extra: Vec<&str> = predicted.keys().filter(|k| !truth.contains_key(*k)).map(String::as_str).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Data(format!(
            "patient ids differ: no prediction for {missing:?}, no label for {extra:?}"
        )));
    }
    let mut cc = ConfusionCounts::default();
    for (id, &t) in truth {
        cc.add(t, predicted[id]);
    }
    MetricsReport::from_confusion(cc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use MurmurLabel::*;

    fn counts(c: [u64; 3], t: [u64; 3]) -> ConfusionCounts {
        let mut cc = ConfusionCounts::default();
        for i in 0..3 {
            cc.matrix[i][i] = c[i];
            // misclassify the rest as the next class
            cc.matrix[i][(i + 1) % 3] = t[i] - c[i];
        }
        cc
    }

    #[test]
    fn wacc_examples() {
        assert_eq!(weighted_accuracy(&counts([10, 6, 100], [10, 6, 100])).unwrap(), 1.0);
        let w = weighted_accuracy(&counts([9, 3, 80], [10, 6, 100])).unwrap();
        assert_eq!(w, 134.0 / 168.0);
        assert!((w - 0.79762).abs() < 1e-5);
        assert_eq!(weighted_accuracy(&counts([0, 0, 0], [10, 6, 100])).unwrap(), 0.0);
        assert!(weighted_accuracy(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn uar_examples() {
        assert_eq!(unweighted_average_recall(&counts([1, 1, 1], [1, 1, 1])).unwrap(), 1.0);
        assert!((unweighted_average_recall(&counts([5, 0, 0], [5, 3, 2])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            unweighted_average_recall(&counts([1, 0, 1], [1, 0, 1])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn all_absent_predictions() {
        let mut truth = BTreeMap::new();
        let mut pred = BTreeMap::new();
        for (i, (l, n)) in [(Present, 10), (Unknown, 6), (Absent, 100)].into_iter().enumerate() {
            for k in 0..n {
                let id = format!("{i}-{k}");
                truth.insert(id.clone(), l);
                pred.insert(id, Absent);
            }
        }
        let r = score_patients(&pred, &truth).unwrap();
        assert!((r.w_acc - 100.0 / 168.0).abs() < 1e-15);
        assert!((r.uar.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion.grand_total(), 116);
    }

    #[test]
    fn id_mismatch_is_data_error() {
        let truth = BTreeMap::from([("a".to_string(), Present)]);
        let pred = BTreeMap::from([("b".to_string(), Present)]);
        assert!(matches!(score_patients(&pred, &truth), Err(Error::Data(_))));
    }
}
