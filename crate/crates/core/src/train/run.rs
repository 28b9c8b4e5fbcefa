use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Backbone, LossWeighting, SelectionMetric, TrainConfig};
use super::store::{build_training_set, stack_test_vectors, FeatureStore, SourceKind, TrainingExample};
use crate::dataset::{class_weights, stratified_split, Fold, MurmurLabel, PatientRecord, SplitAssignment, DEFAULT_FRACTIONS};
use crate::error::{Error, Result};
use crate::eval::{
    patient_predictions, recording_probs, score_patients, write_predictions, ClassScores, MetricsReport, PatientRule,
    PredictionRecord, ReportFile,
};
use crate::nn::{
    weighted_cross_entropy, AdamW, AdamWConfig, Checkpoint, Classifier, CosineSchedule, ModelSpec, Mode, Tape, Tensor,
};

// Independent random streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_AUGMENT: u64 = 2;

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index);
    rng
}

/// Example order for `epoch`; a function of `(seed, epoch)` only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, STREAM_SHUFFLE, epoch as u64));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetric {
    /// 1-based epoch number.
    pub epoch: usize,
    pub metric: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub checkpoint: Checkpoint,
    pub val_curve: Vec<EpochMetric>,
    pub test_predictions: Vec<PredictionRecord>,
    pub test_report: MetricsReport,
    pub seed: u64,
    pub split_seed: u64,
}

impl RunResult {
    /// Writes `checkpoint.hsck`, `val_curve.csv`, `test_predictions.json` and
    /// `report.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint.save(&dir.join("checkpoint.hsck"))?;
        let mut curve = String::from("epoch,metric\n");
        for e in &self.val_curve {
            let _ = writeln!(curve, "{},{}", e.epoch, e.metric);
        }
        let curve_path = dir.join("val_curve.csv");
        std::fs::write(&curve_path, curve).map_err(|e| Error::io(&curve_path, e))?;
        write_predictions(&self.test_predictions, dir.join("test_predictions.json"))?;
        ReportFile::from(&self.test_report).write(dir.join("report.json"))
    }
}

/// Recording-level predictions for every recording of `patients`: eval-mode
/// logits of each test window, averaged, then softmax.
pub fn predict_recordings(
    model: &Classifier<f32>,
    store: &FeatureStore,
    patients: &[&PatientRecord],
) -> Result<Vec<PredictionRecord>> {
    if store.input_dim != model.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} dimensions, checkpoint expects {}",
            store.input_dim,
            model.input_dim()
        )));
    }
    let (data, ranges) = stack_test_vectors(store, patients)?;
    let rows = data.len() / store.input_dim.max(1);
    let logits = model.predict(&Tensor::new(vec![rows, store.input_dim], data)?)?;
    let mut out = Vec::with_capacity(ranges.len());
    for (feats, range) in ranges {
        let segs: Vec<ClassScores> = range
            .map(|i| {
                let r = logits.row(i);
                ClassScores::logits([r[0] as f64, r[1] as f64, r[2] as f64])
            })
            .collect();
        let probs = recording_probs(&segs)?;
        let mut mean = [0.0; 3];
        for s in &segs {
            for c in 0..3 {
                mean[c] += s.values[c] / segs.len() as f64;
            }
        }
        out.push(PredictionRecord {
            recording_id: feats.recording_id.clone(),
            patient_id: feats.patient_id.clone(),
            logits: mean,
            probs: probs.values,
        });
    }
    out.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
    Ok(out)
}

/// Patient-level metrics of `preds` under `rule`.
pub fn score_predictions(
    preds: &[PredictionRecord],
    patients: &[&PatientRecord],
    rule: PatientRule,
) -> Result<MetricsReport> {
    let predicted = patient_predictions(preds, rule)?;
    let truth: BTreeMap<String, MurmurLabel> = patients.iter().map(|p| (p.patient_id.clone(), p.label)).collect();
    score_patients(&predicted, &truth)
}

pub fn evaluate_fold(
    model: &Classifier<f32>,
    store: &FeatureStore,
    patients: &[&PatientRecord],
    rule: PatientRule,
) -> Result<(Vec<PredictionRecord>, MetricsReport)> {
    let preds = predict_recordings(model, store, patients)?;
    let report = score_predictions(&preds, patients, rule)?;
    Ok((preds, report))
}

fn selection_value(report: &MetricsReport, metric: SelectionMetric) -> Result<f64> {
    match metric {
        SelectionMetric::Wacc => Ok(report.w_acc),
        SelectionMetric::Uar => report.uar.ok_or_else(|| {
            Error::Precondition("validation fold lacks a class; UAR cannot select checkpoints".into())
        }),
    }
}

fn at_batch(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numerics(m) => Error::Numerics(format!("epoch {epoch}, batch {batch}: {m}")),
        other => other,
    }
}

/// Trains one model on the train fold of `split`, validating after every
/// epoch, and tests the best checkpoint (ties go to the earlier epoch).
pub fn train_one(
    config: &TrainConfig,
    split: &SplitAssignment,
    patients: &[PatientRecord],
    store: &FeatureStore,
) -> Result<RunResult> {
    config.validate()?;
    let train = split.select(Fold::Train, patients)?;
    let val = split.select(Fold::Validation, patients)?;
    let test = split.select(Fold::Test, patients)?;
    for (name, fold) in [("train", &train), ("validation", &val), ("test", &test)] {
        if fold.is_empty() {
            return Err(Error::Precondition(format!("{name} fold is empty")));
        }
    }
    // Embeddings are computed after the spectrogram stage, so they are never masked.
    let augment = config.augments() && store.kind == SourceKind::LogMel;
    if augment && !store.has_spectrograms() {
        return Err(Error::Precondition(
            "SpecAugment is enabled but the feature store holds no spectrograms".into(),
        ));
    }
    let examples = build_training_set(&train, store)?;
    if examples.len() < 2 {
        return Err(Error::Precondition("need at least 2 training segments".into()));
    }
    let weights = match config.loss_weighting {
        LossWeighting::Proportional => class_weights(train.iter().copied())?,
        LossWeighting::None => [1.0; 3],
    };
    let weights = weights.map(|w| w as f32);

    let spec = ModelSpec {
        input_dim: store.input_dim,
        hidden: config.model_hidden(),
    };
    let mut model = Classifier::<f32>::new(spec, &mut stream(config.seed, STREAM_INIT, 0))?;
    let mut opt = AdamW::<f32>::new(AdamWConfig {
        lr: config.base_lr,
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    });
    let batch_size = config.batch_size.min(examples.len());
    // A trailing batch of one cannot be batch-normalized and is skipped.
    let steps_per_epoch = examples.len() / batch_size + usize::from(examples.len() % batch_size >= 2);
    let schedule = CosineSchedule {
        base_lr: config.base_lr,
        warmup_epochs: config.warmup_epochs,
        total_epochs: config.epochs,
        steps_per_epoch,
    };
    let config_json = serde_json::to_value(config)?;

    let mut step = 0;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    for epoch in 0..config.epochs {
        let order = epoch_order(examples.len(), config.seed, epoch);
        let mut aug_rng = stream(config.seed, STREAM_AUGMENT, epoch as u64);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let (x, labels) = assemble(store, &examples, chunk, augment.then_some((config, &mut aug_rng)))?;
            opt.set_lr(schedule.lr_at(step)?);
            let mut tape = Tape::new();
            let ctx = at_batch(epoch + 1, bi);
            let fwd = model.forward(&mut tape, &x, Mode::Train).map_err(&ctx)?;
            let loss = weighted_cross_entropy(&mut tape, fwd.logits, &labels, &weights).map_err(&ctx)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(ctx(Error::Numerics("loss is not finite".into())));
            }
            let mut grads = tape.backward(loss).map_err(&ctx)?;
            let g = fwd.param_grads(&tape, &mut grads);
            opt.step(&mut model.params_mut(), &g).map_err(&ctx)?;
            loss_sum += value as f64;
            batches += 1;
            step += 1;
        }

        let (_, report) = evaluate_fold(&model, store, &val, PatientRule::Decision)?;
        let metric = selection_value(&report, config.selection_metric)?;
        let mean_loss = loss_sum / batches.max(1) as f64;
        log::debug!("epoch {} loss {mean_loss:.4} validation {metric:.4}", epoch + 1);
        curve.push(EpochMetric { epoch: epoch + 1, metric, mean_loss });
        if best.as_ref().is_none_or(|b| metric > b.validation_metric) {
            best = Some(Checkpoint {
                model: model.clone(),
                config: config_json.clone(),
                epoch: epoch + 1,
                validation_metric: metric,
            });
        }
    }
    let checkpoint = best.expect("epochs > 0");
    let (test_predictions, test_report) = evaluate_fold(&checkpoint.model, store, &test, PatientRule::Decision)?;
    Ok(RunResult {
        checkpoint,
        val_curve: curve,
        test_predictions,
        test_report,
        seed: config.seed,
        split_seed: split.seed,
    })
}

fn assemble(
    store: &FeatureStore,
    examples: &[TrainingExample],
    chunk: &[usize],
    mut augment: Option<(&TrainConfig, &mut ChaCha8Rng)>,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let dim = store.input_dim;
    let mut data = Vec::with_capacity(chunk.len() * dim);
    let mut labels = Vec::with_capacity(chunk.len());
    for &i in chunk {
        let ex = examples[i];
        let input = &store.recordings()[ex.recording].train[ex.segment];
        let v = match augment.as_mut() {
            Some((cfg, rng)) => input.features(Some((&cfg.specaugment, &mut **rng))),
            None => input.features::<ChaCha8Rng>(None),
        };
        data.extend(v);
        labels.push(ex.label.index());
    }
    Ok((Tensor::new(vec![chunk.len(), dim], data)?, labels))
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub runs: Vec<RunResult>,
    pub mean: ReportFile,
}

/// `n_splits` stratified splits (seeds `split_seed`, `split_seed + 1`, …),
/// each trained `runs_per_split` times with run seeds
/// `config.seed + split_index · runs_per_split + run_index`. Runs execute in
/// parallel and are returned in (split, run) order.
pub fn run_protocol(
    config: &TrainConfig,
    patients: &[PatientRecord],
    store: &FeatureStore,
    n_splits: usize,
    runs_per_split: usize,
    split_seed: u64,
) -> Result<ProtocolResult> {
    if n_splits == 0 || runs_per_split == 0 {
        return Err(Error::Precondition("protocol needs at least one split and one run".into()));
    }
    let splits = (0..n_splits)
        .map(|s| stratified_split(patients, split_seed + s as u64, DEFAULT_FRACTIONS))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..n_splits).flat_map(|s| (0..runs_per_split).map(move |r| (s, r))).collect();
    let results: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let mut cfg = config.clone();
            cfg.seed = config.seed + (s * runs_per_split + r) as u64;
            train_one(&cfg, &splits[s], patients, store)
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<ReportFile> = runs.iter().map(|r| ReportFile::from(&r.test_report)).collect();
    Ok(ProtocolResult {
        mean: ReportFile::mean(&reports)?,
        runs,
    })
}

/// Backbone of a checkpoint's stored config, if recorded.
pub fn checkpoint_backbone(ck: &Checkpoint) -> Option<Backbone> {
    ck.config
        .get("backbone")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}
