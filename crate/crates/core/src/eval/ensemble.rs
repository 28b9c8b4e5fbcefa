use std::collections::{BTreeMap, BTreeSet};

use super::predictions::PredictionRecord;
use crate::error::{Error, Result};

fn coverage(set: &[PredictionRecord]) -> BTreeSet<&str> {
    set.iter().map(|p| p.recording_id.as_str()).collect()
}

/// Averages, per recording, the pairwise means of every (A run, B run)
/// combination. With 5 runs a side that is the 25 predictions of a
/// two-model ensemble. Output logits are the log of the probabilities.
pub fn ensemble_two(runs_a: &[Vec<PredictionRecord>], runs_b: &[Vec<PredictionRecord>]) -> Result<Vec<PredictionRecord>> {
    if runs_a.is_empty() || runs_b.is_empty() {
        return Err(Error::Precondition("both models need at least one prediction set".into()));
    }
    let reference = coverage(&runs_a[0]);
    for (side, runs) in [("A", runs_a), ("B", runs_b)] {
        for (i, run) in runs.iter().enumerate() {
            let ids = coverage(run);
            if ids.len() != run.len() {
                return Err(Error::Data(format!("model {side} run {i} lists a recording twice")));
            }
            let diff: Vec<&str> = reference.symmetric_difference(&ids).copied().collect();
            if !diff.is_empty() {
                return Err(Error::Data(format!(
                    "model {side} run {i} covers different recordings; symmetric difference: {diff:?}"
                )));
            }
        }
    }

    let index = |run: &[PredictionRecord]| -> BTreeMap<String, [f64; 3]> {
        run.iter().map(|p| (p.recording_id.clone(), p.probs)).collect()
    };
    let a: Vec<_> = runs_a.iter().map(|r| index(r)).collect();
    let b: Vec<_> = runs_b.iter().map(|r| index(r)).collect();
    let pairs = (a.len() * b.len()) as f64;

    let mut out: Vec<PredictionRecord> = runs_a[0]
        .iter()
        .map(|rec| {
            let id = &rec.recording_id;
            let mut sum = [0.0; 3];
            for pa in &a {
                for pb in &b {
                    for c in 0..3 {
                        sum[c] += (pa[id][c] + pb[id][c]) / 2.0;
                    }
                }
            }
            let probs = sum.map(|s| s / pairs);
            PredictionRecord {
                recording_id: id.clone(),
                patient_id: rec.patient_id.clone(),
                logits: probs.map(f64::ln),
                probs,
            }
        })
        .collect();
    out.sort_by(|x, y| x.recording_id.cmp(&y.recording_id));
    Ok(out)
}
