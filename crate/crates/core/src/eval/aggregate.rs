use serde::{Deserialize, Serialize};

use crate::dataset::MurmurLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

/// Three class scores in canonical order (Present, Unknown, Absent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub values: [f64; 3],
    pub kind: ScoreKind,
}

impl ClassScores {
    pub fn logits(values: [f64; 3]) -> Self {
        Self { values, kind: ScoreKind::Logits }
    }

    /// Checks the probability invariant: entries ≥ 0 summing to 1 within 1e-6.
    pub fn probabilities(values: [f64; 3]) -> Result<Self> {
        let sum: f64 = values.iter().sum();
        if values.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("{values:?} is not a probability vector")));
        }
        Ok(Self { values, kind: ScoreKind::Probabilities })
    }

    pub fn argmax(&self) -> MurmurLabel {
        argmax(&self.values)
    }
}

/// Index of the largest score; ties go to the earlier class, so
/// Present > Unknown > Absent.
pub fn argmax(values: &[f64; 3]) -> MurmurLabel {
    let mut best = 0;
    for i in 1..3 {
        if values[i] > values[best] {
            best = i;
        }
    }
    MurmurLabel::from_index(best).expect("index below 3")
}

pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|v| (v - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

fn require_kind(scores: &[ClassScores], kind: ScoreKind) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Precondition("no scores to aggregate".into()));
    }
    if let Some(bad) = scores.iter().find(|s| s.kind != kind) {
        return Err(Error::Precondition(format!("expected {kind:?}, got {:?}", bad.kind)));
    }
    Ok(())
}

fn mean(scores: &[ClassScores]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for s in scores {
        for (a, v) in m.iter_mut().zip(s.values) {
            *a += v;
        }
    }
    m.map(|v| v / scores.len() as f64)
}

/// Softmax of the mean segment logit.
pub fn recording_probs(segment_logits: &[ClassScores]) -> Result<ClassScores> {
    require_kind(segment_logits, ScoreKind::Logits)?;
    Ok(ClassScores {
        values: softmax(&mean(segment_logits)),
        kind: ScoreKind::Probabilities,
    })
}

/// Present if any recording is classified Present, else Unknown if any is
/// Unknown, else Absent.
pub fn patient_label_rule(recording_probs: &[ClassScores]) -> Result<MurmurLabel> {
    require_kind(recording_probs, ScoreKind::Probabilities)?;
    let labels: Vec<MurmurLabel> = recording_probs.iter().map(ClassScores::argmax).collect();
    Ok(if labels.contains(&MurmurLabel::Present) {
        MurmurLabel::Present
    } else if labels.contains(&MurmurLabel::Unknown) {
        MurmurLabel::Unknown
    } else {
        MurmurLabel::Absent
    })
}

/// Argmax of the mean recording probability.
pub fn patient_prob_average(recording_probs: &[ClassScores]) -> Result<MurmurLabel> {
    require_kind(recording_probs, ScoreKind::Probabilities)?;
    Ok(argmax(&mean(recording_probs)))
}

/// How recordings are combined into a patient label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatientRule {
    #[default]
    Decision,
    ProbAverage,
}

impl PatientRule {
    pub fn apply(self, recording_probs: &[ClassScores]) -> Result<MurmurLabel> {
        match self {
            PatientRule::Decision => patient_label_rule(recording_probs),
            PatientRule::ProbAverage => patient_prob_average(recording_probs),
        }
    }
}

impl std::str::FromStr for PatientRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "decision" => Ok(PatientRule::Decision),
            "prob-average" => Ok(PatientRule::ProbAverage),
            other => Err(format!("unknown rule {other:?} (decision, prob-average)")),
        }
    }
}

impl std::fmt::Display for PatientRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PatientRule::Decision => "decision",
            PatientRule::ProbAverage => "prob-average",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MurmurLabel::*;

    fn probs(v: [f64; 3]) -> ClassScores {
        ClassScores::probabilities(v).unwrap()
    }

    fn one_hot(l: MurmurLabel) -> ClassScores {
        let mut v = [0.1; 3];
        v[l.index()] = 0.8;
        probs(v)
    }

    #[test]
    fn recording_probs_examples() {
        let p = recording_probs(&[ClassScores::logits([0.0; 3])]).unwrap();
        for v in p.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = recording_probs(&[ClassScores::logits([2.0, 0.0, 0.0]), ClassScores::logits([0.0, 2.0, 0.0])]).unwrap();
        let e = std::f64::consts::E;
        let want = [e / (2.0 * e + 1.0), e / (2.0 * e + 1.0), 1.0 / (2.0 * e + 1.0)];
        for (g, w) in p.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((p.values[0] - 0.4223).abs() < 1e-4 && (p.values[2] - 0.1554).abs() < 1e-4);
    }

    #[test]
    fn shift_invariance() {
        let segs = [ClassScores::logits([0.3, -1.2, 2.0]), ClassScores::logits([1.0, 0.5, -0.5])];
        let shifted: Vec<ClassScores> = segs.iter().map(|s| ClassScores::logits(s.values.map(|v| v + 17.5))).collect();
        let a = recording_probs(&segs).unwrap();
        let b = recording_probs(&shifted).unwrap();
        for (x, y) in a.values.iter().zip(b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_and_kind_mismatch() {
        assert!(matches!(recording_probs(&[]), Err(Error::Precondition(_))));
        assert!(matches!(patient_label_rule(&[]), Err(Error::Precondition(_))));
        assert!(matches!(patient_prob_average(&[]), Err(Error::Precondition(_))));
        assert!(recording_probs(&[probs([0.2, 0.3, 0.5])]).is_err());
        assert!(patient_label_rule(&[ClassScores::logits([0.0; 3])]).is_err());
    }

    #[test]
    fn rule_examples() {
        let r = |ls: &[MurmurLabel]| patient_label_rule(&ls.iter().map(|&l| one_hot(l)).collect::<Vec<_>>()).unwrap();
        assert_eq!(r(&[Absent, Present, Absent]), Present);
        assert_eq!(r(&[Absent, Unknown]), Unknown);
        assert_eq!(r(&[Absent, Absent]), Absent);
    }

    #[test]
    fn prob_average_differs_from_rule() {
        let recs = [probs([0.6, 0.0, 0.4]), probs([0.0, 0.1, 0.9])];
        assert_eq!(patient_prob_average(&recs).unwrap(), Absent);
        assert_eq!(patient_label_rule(&recs).unwrap(), Present);
        assert_eq!(patient_prob_average(&[probs([0.6, 0.2, 0.2])]).unwrap(), Present);
    }

    #[test]
    fn ties_prefer_present_then_unknown() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), Present);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Unknown);
        assert_eq!(argmax(&[0.4, 0.2, 0.4]), Present);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), Present);
    }

    #[test]
    fn probability_invariant_checked() {
        assert!(ClassScores::probabilities([0.5, 0.5, 0.1]).is_err());
        assert!(ClassScores::probabilities([1.2, -0.2, 0.0]).is_err());
    }
}
