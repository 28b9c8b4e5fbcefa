use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::{ClassScores, PatientRule, ScoreKind};
use crate::dataset::MurmurLabel;
use crate::error::{Error, Result};

/// One line of a prediction file: recording-level logits and probabilities
/// in canonical class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub recording_id: String,
    pub patient_id: String,
    pub logits: [f64; 3],
    pub probs: [f64; 3],
}

impl PredictionRecord {
    pub fn scores(&self) -> ClassScores {
        ClassScores {
            values: self.probs,
            kind: ScoreKind::Probabilities,
        }
    }
}

pub fn write_predictions(preds: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(preds)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let preds: Vec<PredictionRecord> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    for p in &preds {
        ClassScores::probabilities(p.probs)
            .map_err(|e| Error::Format(format!("{}: {}: {e}", path.display(), p.recording_id)))?;
        if !seen.insert(p.recording_id.as_str()) {
            return Err(Error::Format(format!(
                "{}: recording {} listed twice",
                path.display(),
                p.recording_id
            )));
        }
    }
    Ok(preds)
}

/// Patient labels from recording predictions under `rule`, keyed by patient id.
pub fn patient_predictions(preds: &[PredictionRecord], rule: PatientRule) -> Result<BTreeMap<String, MurmurLabel>> {
    let mut grouped: BTreeMap<&str, Vec<ClassScores>> = BTreeMap::new();
    for p in preds {
        grouped.entry(&p.patient_id).or_default().push(p.scores());
    }
    grouped
        .into_iter()
        .map(|(id, scores)| Ok((id.to_string(), rule.apply(&scores)?)))
        .collect()
}
