use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;

use crate::audio::{
    decode_wav, probe_wav, resample_to_16k, resampled_len, segment_test, segment_train, test_window_starts,
    train_window_starts, TRAIN_HOP,
};
use crate::dataset::{EmbeddingSet, MurmurLabel, PatientRecord};
use crate::error::{Error, Result};
use crate::features::{spec_augment, LogMelExtractor, LogMelSpec, MelConfig, SpecAugmentConfig};

/// Where segment features come from.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    /// Pooled log-mel statistics computed from the audio.
    LogMel(MelConfig),
    /// Precomputed embeddings keyed by (recording, segment index).
    Embeddings(EmbeddingSet),
}

/// Features of one training window. Spectrograms are kept only when the
/// run augments them; otherwise the pooled vector is stored directly.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainInput {
    Vector(Vec<f32>),
    Spectrogram(LogMelSpec),
}

impl TrainInput {
    /// Feature vector for one presentation, masking the spectrogram first
    /// when `augment` is given.
    pub fn features<R: Rng + ?Sized>(&self, augment: Option<(&SpecAugmentConfig, &mut R)>) -> Vec<f32> {
        match (self, augment) {
            (TrainInput::Vector(v), _) => v.clone(),
            (TrainInput::Spectrogram(s), Some((cfg, rng))) => spec_augment(s, cfg, rng).pooled_stats(),
            (TrainInput::Spectrogram(s), None) => s.pooled_stats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingFeatures {
    pub recording_id: String,
    pub patient_id: String,
    pub label: MurmurLabel,
    /// One entry per training window (2.5 s hop).
    pub train: Vec<TrainInput>,
    /// One vector per non-overlapping test window.
    pub test: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    LogMel,
    Embeddings,
}

#[derive(Debug, Clone)]
pub struct FeatureStore {
    pub input_dim: usize,
    pub kind: SourceKind,
    recordings: Vec<RecordingFeatures>,
    by_id: BTreeMap<String, usize>,
}

fn logmel_features(
    extractor: &LogMelExtractor,
    patient: &PatientRecord,
    rec: &crate::dataset::Recording,
    keep_spectrograms: bool,
) -> Result<RecordingFeatures> {
    let wave = resample_to_16k(&decode_wav(&rec.path)?)?;
    let train_segs = segment_train(&wave)?;
    let test_segs = segment_test(&wave)?;
    // Test windows coincide with every other training window; extract each
    // distinct window once.
    let mut specs: BTreeMap<usize, LogMelSpec> = BTreeMap::new();
    for seg in train_segs.iter().chain(&test_segs) {
        if let Entry::Vacant(e) = specs.entry(seg.start_sample) {
            e.insert(extractor.extract(seg)?);
        }
    }
    let train = train_segs
        .iter()
        .map(|s| {
            let spec = &specs[&s.start_sample];
            if keep_spectrograms {
                TrainInput::Spectrogram(spec.clone())
            } else {
                TrainInput::Vector(spec.pooled_stats())
            }
        })
        .collect();
    let test = test_segs.iter().map(|s| specs[&s.start_sample].pooled_stats()).collect();
    Ok(RecordingFeatures {
        recording_id: rec.id.clone(),
        patient_id: patient.patient_id.clone(),
        label: patient.label,
        train,
        test,
    })
}

fn embedding_features(
    set: &EmbeddingSet,
    patient: &PatientRecord,
    rec: &crate::dataset::Recording,
) -> Result<RecordingFeatures> {
    let info = probe_wav(&rec.path)?;
    let len = resampled_len(info.num_samples, info.sample_rate)?;
    let lookup = |start: usize| -> Result<Vec<f32>> {
        let index = (start / TRAIN_HOP) as u32;
        set.get(&rec.id, index).map(<[f32]>::to_vec).ok_or_else(|| {
            Error::Data(format!("no embedding for (recording {}, segment {index})", rec.id))
        })
    };
    let train = train_window_starts(len)
        .into_iter()
        .map(|s| lookup(s).map(TrainInput::Vector))
        .collect::<Result<_>>()?;
    let test = test_window_starts(len).into_iter().map(lookup).collect::<Result<_>>()?;
    Ok(RecordingFeatures {
        recording_id: rec.id.clone(),
        patient_id: patient.patient_id.clone(),
        label: patient.label,
        train,
        test,
    })
}

impl FeatureStore {
    /// Computes or looks up features for every recording of `patients`.
    /// Recordings are processed in parallel; the result does not depend on
    /// the thread count.
    pub fn build(patients: &[PatientRecord], source: &FeatureSource, keep_spectrograms: bool) -> Result<Self> {
        let jobs: Vec<_> = patients
            .iter()
            .flat_map(|p| p.recordings.iter().map(move |r| (p, r)))
            .collect();
        let (input_dim, kind, results): (usize, SourceKind, Vec<Result<RecordingFeatures>>) = match source {
            FeatureSource::LogMel(cfg) => {
                let extractor = LogMelExtractor::new(*cfg)?;
                let results = jobs
                    .par_iter()
                    .map(|(p, r)| logmel_features(&extractor, p, r, keep_spectrograms))
                    .collect();
                (2 * cfg.mel_bins, SourceKind::LogMel, results)
            }
            FeatureSource::Embeddings(set) => {
                let results = jobs.par_iter().map(|(p, r)| embedding_features(set, p, r)).collect();
                (set.dim(), SourceKind::Embeddings, results)
            }
        };
        let mut recordings = Vec::with_capacity(results.len());
        for r in results {
            recordings.push(r?);
        }
        recordings.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
        let by_id = recordings
            .iter()
            .enumerate()
            .map(|(i, r)| (r.recording_id.clone(), i))
            .collect();
        Ok(Self {
            input_dim,
            kind,
            recordings,
            by_id,
        })
    }

    pub fn recordings(&self) -> &[RecordingFeatures] {
        &self.recordings
    }

    pub fn get(&self, recording_id: &str) -> Option<&RecordingFeatures> {
        self.by_id.get(recording_id).map(|&i| &self.recordings[i])
    }

    pub fn has_spectrograms(&self) -> bool {
        self.recordings
            .iter()
            .flat_map(|r| &r.train)
            .any(|t| matches!(t, TrainInput::Spectrogram(_)))
    }

    fn require(&self, recording_id: &str) -> Result<(usize, &RecordingFeatures)> {
        let i = *self
            .by_id
            .get(recording_id)
            .ok_or_else(|| Error::Data(format!("no features for recording {recording_id}")))?;
        Ok((i, &self.recordings[i]))
    }
}

/// Pooled log-mel statistics of every training and test window, keyed by
/// (recording, start / 2.5 s), in the embedding bridge layout. Training on
/// the result in embedding mode matches training on log-mel features
/// without augmentation.
pub fn logmel_embeddings(patients: &[PatientRecord], cfg: MelConfig) -> Result<EmbeddingSet> {
    let extractor = LogMelExtractor::new(cfg)?;
    let jobs: Vec<_> = patients.iter().flat_map(|p| p.recordings.iter()).collect();
    let results: Vec<Result<Vec<(u32, Vec<f32>)>>> = jobs
        .par_iter()
        .map(|rec| {
            let wave = resample_to_16k(&decode_wav(&rec.path)?)?;
            let mut windows = BTreeMap::new();
            for seg in segment_train(&wave)?.iter().chain(&segment_test(&wave)?) {
                if let Entry::Vacant(e) = windows.entry(seg.index()) {
                    e.insert(extractor.extract(seg)?.pooled_stats());
                }
            }
            Ok(windows.into_iter().collect())
        })
        .collect();
    let mut set = EmbeddingSet::new(2 * cfg.mel_bins)?;
    for (rec, r) in jobs.iter().zip(results) {
        for (index, v) in r? {
            set.insert(&rec.id, index, v)?;
        }
    }
    Ok(set)
}

/// A training window: indices into a [`FeatureStore`] plus its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingExample {
    pub recording: usize,
    pub segment: usize,
    pub label: MurmurLabel,
}

/// One example per training window of every recording of `patients`, each
/// labelled with its patient's label.
pub fn build_training_set(patients: &[&PatientRecord], store: &FeatureStore) -> Result<Vec<TrainingExample>> {
    if patients.is_empty() {
        return Err(Error::Precondition("training fold is empty".into()));
    }
    let mut out = Vec::new();
    for p in patients {
        for id in p.recording_ids() {
            let (recording, feats) = store.require(id)?;
            out.extend((0..feats.train.len()).map(|segment| TrainingExample {
                recording,
                segment,
                label: p.label,
            }));
        }
    }
    if out.is_empty() {
        return Err(Error::Precondition("training fold has no segments".into()));
    }
    Ok(out)
}

/// Stacked test-window vectors of the given recordings, row-major, with the
/// row range of each recording.
pub(crate) fn stack_test_vectors<'a>(
    store: &'a FeatureStore,
    patients: &[&'a PatientRecord],
) -> Result<(Vec<f32>, Vec<(&'a RecordingFeatures, std::ops::Range<usize>)>)> {
    let mut data = Vec::new();
    let mut ranges = Vec::new();
    let mut seen = BTreeSet::new();
    let mut row = 0;
    for p in patients {
        for id in p.recording_ids() {
            if !seen.insert(id) {
                return Err(Error::Data(format!("recording {id} listed twice")));
            }
            let (_, feats) = store.require(id)?;
            if feats.test.is_empty() {
                return Err(Error::Data(format!("recording {id} has no test segments")));
            }
            for v in &feats.test {
                data.extend_from_slice(v);
            }
            ranges.push((feats, row..row + feats.test.len()));
            row += feats.test.len();
        }
    }
    Ok((data, ranges))
}
