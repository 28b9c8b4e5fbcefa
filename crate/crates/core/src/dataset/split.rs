use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MurmurLabel, PatientRecord};
use crate::error::{Error, Result};

/// Train/validation/test proportions used throughout.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.65, 0.10, 0.25];

const FRACTION_SCALE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fold {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for Fold {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Fold::Train),
            "validation" | "val" => Ok(Fold::Validation),
            "test" => Ok(Fold::Test),
            other => Err(format!("unknown fold {other:?} (train, validation, test)")),
        }
    }
}

/// Patient ids per fold; each list is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn fold(&self, fold: Fold) -> &[String] {
        match fold {
            Fold::Train => &self.train,
            Fold::Validation => &self.validation,
            Fold::Test => &self.test,
        }
    }

    /// Patients of `fold`, in id order.
    pub fn select<'a>(&self, fold: Fold, patients: &'a [PatientRecord]) -> Result<Vec<&'a PatientRecord>> {
        self.fold(fold)
            .iter()
            .map(|id| {
                patients
                    .iter()
                    .find(|p| &p.patient_id == id)
                    .ok_or_else(|| Error::Data(format!("split names unknown patient {id}")))
            })
            .collect()
    }

    /// Checks disjointness and that the folds cover exactly `patients`.
    pub fn validate(&self, patients: &[PatientRecord]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("patient {id} appears in two folds")));
            }
        }
        let all: BTreeSet<&str> = patients.iter().map(|p| p.patient_id.as_str()).collect();
        if seen != all {
            let missing: Vec<_> = all.difference(&seen).collect();
            let extra: Vec<_> = seen.difference(&all).collect();
            return Err(Error::Data(format!(
                "split does not match dataset: missing {missing:?}, unknown {extra:?}"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Splits `n` items by `fractions` with largest-remainder rounding; ties in the
/// remainder go to the earlier fold.
pub fn largest_remainder(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let parts = fractions.map(|f| (f * FRACTION_SCALE as f64).round() as u64);
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || parts.iter().sum::<u64>() != FRACTION_SCALE {
        return Err(Error::Precondition(format!(
            "fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let quotas = parts.map(|p| n as u64 * p);
    let mut sizes = quotas.map(|q| (q / FRACTION_SCALE) as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&i| (std::cmp::Reverse(quotas[i] % FRACTION_SCALE), i));
    let leftover = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(leftover) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Patient-level stratified split. Within each class (canonical order, ids
/// sorted) patients are shuffled by a ChaCha8 generator seeded with `seed` and
/// cut into train/validation/test by [`largest_remainder`].
pub fn stratified_split(
    patients: &[PatientRecord],
    seed: u64,
    fractions: [f64; 3],
) -> Result<SplitAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: [Vec<String>; 3] = Default::default();
    for label in MurmurLabel::ALL {
        let mut ids: Vec<String> = patients
            .iter()
            .filter(|p| p.label == label)
            .map(|p| p.patient_id.clone())
            .collect();
        if ids.is_empty() {
            continue;
        }
        if ids.len() < 3 {
            return Err(Error::Precondition(format!(
                "class {label} has {} patients; stratification needs at least 3",
                ids.len()
            )));
        }
        ids.sort();
        ids.shuffle(&mut rng);
        let sizes = largest_remainder(ids.len(), fractions)?;
        let mut rest = ids.as_slice();
        for (fold, size) in folds.iter_mut().zip(sizes) {
            let (head, tail) = rest.split_at(size);
            fold.extend_from_slice(head);
            rest = tail;
        }
    }
    let [mut train, mut validation, mut test] = folds;
    train.sort();
    validation.sort();
    test.sort();
    Ok(SplitAssignment {
        seed,
        train,
        validation,
        test,
    })
}

/// Patient counts per class in canonical order.
pub fn class_counts<'a>(patients: impl IntoIterator<Item = &'a PatientRecord>) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for p in patients {
        counts[p.label.index()] += 1;
    }
    counts
}

/// Inverse-frequency loss weights `N / (3 N_i)`, normalized so that the
/// weighted patient mass equals the unweighted mass.
pub fn class_weights<'a>(patients: impl IntoIterator<Item = &'a PatientRecord>) -> Result<[f64; 3]> {
    weights_from_counts(class_counts(patients))
}

pub fn weights_from_counts(counts: [usize; 3]) -> Result<[f64; 3]> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Precondition(format!(
            "class {} has no patients; cannot weight the loss",
            MurmurLabel::ALL[i]
        )));
    }
    let total: usize = counts.iter().sum();
    Ok(counts.map(|c| total as f64 / (3.0 * c as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Recording;

    fn patients(counts: [usize; 3]) -> Vec<PatientRecord> {
        let mut out = Vec::new();
        for (label, &n) in MurmurLabel::ALL.iter().zip(&counts) {
            for i in 0..n {
                let id = format!("{}{i:04}", label.name());
                out.push(PatientRecord {
                    patient_id: id.clone(),
                    label: *label,
                    recordings: vec![Recording {
                        id: format!("{id}_AV"),
                        path: format!("{id}_AV.wav").into(),
                    }],
                });
            }
        }
        out
    }

    #[test]
    fn remainder_rounding_matches_hand_arithmetic() {
        assert_eq!(largest_remainder(179, DEFAULT_FRACTIONS).unwrap(), [116, 18, 45]);
        assert_eq!(largest_remainder(68, DEFAULT_FRACTIONS).unwrap(), [44, 7, 17]);
        assert_eq!(largest_remainder(695, DEFAULT_FRACTIONS).unwrap(), [452, 69, 174]);
        assert_eq!(largest_remainder(100, DEFAULT_FRACTIONS).unwrap(), [65, 10, 25]);
        assert_eq!(largest_remainder(20, DEFAULT_FRACTIONS).unwrap(), [13, 2, 5]);
    }

    #[test]
    fn single_class_exact_fractions() {
        let s = stratified_split(&patients([100, 0, 0]), 1, DEFAULT_FRACTIONS).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (65, 10, 25));
    }

    #[test]
    fn deterministic_for_seed() {
        let p = patients([20, 20, 20]);
        let a = stratified_split(&p, 9, DEFAULT_FRACTIONS).unwrap();
        assert_eq!(a, stratified_split(&p, 9, DEFAULT_FRACTIONS).unwrap());
        assert_ne!(a, stratified_split(&p, 10, DEFAULT_FRACTIONS).unwrap());
        a.validate(&p).unwrap();
    }

    #[test]
    fn tiny_class_rejected() {
        let err = stratified_split(&patients([10, 2, 10]), 1, DEFAULT_FRACTIONS).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn weights_examples() {
        assert_eq!(weights_from_counts([10, 10, 10]).unwrap(), [1.0, 1.0, 1.0]);
        let w = weights_from_counts([179, 68, 695]).unwrap();
        for (got, want) in w.iter().zip([1.7542, 4.6176, 0.4518]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        let w = weights_from_counts([1, 1, 2]).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(weights_from_counts([0, 1, 1]), Err(Error::Precondition(_))));
    }

    #[test]
    fn split_json_layout() {
        let s = SplitAssignment {
            seed: 3,
            train: vec!["a".into()],
            validation: vec![],
            test: vec!["b".into()],
        };
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(v["train"][0], "a");
        assert!(v["validation"].as_array().unwrap().is_empty());
    }
}
