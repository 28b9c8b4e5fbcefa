//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Thresholds are the stated targets; nothing is relaxed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use murmur_core::audio::{segment_test, segment_train, Waveform};
use murmur_core::dataset::{
    generate_synthetic, stratified_split, synthetic_embeddings, EmbeddingSet, MurmurLabel, PatientRecord,
    SyntheticSpec, DEFAULT_FRACTIONS,
};
use murmur_core::eval::{
    ensemble_two, patient_label_rule, unweighted_average_recall, weighted_accuracy, ClassScores, ConfusionCounts,
    PatientRule, PredictionRecord,
};
use murmur_core::features::MelConfig;
use murmur_core::nn::{gradcheck, AdamW, AdamWConfig, CosineSchedule, Param, Tensor};
use murmur_core::train::{score_predictions, train_one, Backbone, FeatureSource, FeatureStore, RunResult, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let took = t.elapsed();
    if took > limit {
        o.pass = false;
    }
    o.detail = format!("{}; {:.2?} (limit {:?})", o.detail, took, limit);
    o
}

fn metric_fidelity() -> Outcome {
    let mut cc = ConfusionCounts::default();
    for (i, c) in [911u64, 361, 868].into_iter().enumerate() {
        cc.matrix[i][i] = c;
        cc.matrix[i][(i + 1) % 3] = 1000 - c;
    }
    let uar = unweighted_average_recall(&cc).unwrap();
    let uar_ok = (uar - 0.713).abs() <= 5e-4;

    // Brute force: expand each matrix into individual patients and add up
    // class weights one patient at a time.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut cc = ConfusionCounts::default();
        for row in cc.matrix.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(0..40);
            }
        }
        if cc.grand_total() == 0 {
            cc.matrix[0][0] = 1;
        }
        let weight = |t: usize| [5u64, 3, 1][t];
        let (mut hit, mut all) = (0u64, 0u64);
        for t in 0..3 {
            for p in 0..3 {
                for _ in 0..cc.matrix[t][p] {
                    all += weight(t);
                    if t == p {
                        hit += weight(t);
                    }
                }
            }
        }
        if weighted_accuracy(&cc).unwrap() != hit as f64 / all as f64 {
            mismatches += 1;
        }
    }
    outcome(
        uar_ok && mismatches == 0,
        format!("UAR {uar:.6} vs 0.713; W.acc oracle mismatches {mismatches}/1000"),
    )
}

fn decision_rule() -> Outcome {
    use MurmurLabel::*;
    let mut cases = 0;
    let mut wrong = 0;
    for len in 1..=4u32 {
        for code in 0..3usize.pow(len) {
            let labels: Vec<MurmurLabel> = (0..len)
                .map(|i| MurmurLabel::from_index(code / 3usize.pow(i) % 3).unwrap())
                .collect();
            let probs: Vec<ClassScores> = labels
                .iter()
                .map(|l| {
                    let mut v = [0.2, 0.2, 0.2];
                    v[l.index()] = 0.6;
                    ClassScores::probabilities(v).unwrap()
                })
                .collect();
            // "Present if any recording is classified as Present, or Unknown
            // if any recording is classified as Unknown; otherwise Absent."
            let any = |x: MurmurLabel| labels.contains(&x);
            let want = if any(Present) {
                Present
            } else if any(Unknown) {
                Unknown
            } else {
                Absent
            };
            cases += 1;
            if patient_label_rule(&probs).unwrap() != want {
                wrong += 1;
            }
        }
    }
    outcome(cases == 120 && wrong == 0, format!("{cases} sequences, {wrong} disagreements"))
}

fn random_probs(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let raw: [f64; 3] = [rng.random_range(0.01..1.0), rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)];
    let s: f64 = raw.iter().sum();
    raw.map(|v| v / s)
}

fn ensemble_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ids: Vec<String> = (0..40).map(|i| format!("rec{i:03}")).collect();
    let make = |rng: &mut ChaCha8Rng| -> Vec<Vec<PredictionRecord>> {
        (0..5)
            .map(|_| {
                ids.iter()
                    .map(|id| {
                        let probs = random_probs(rng);
                        PredictionRecord {
                            recording_id: id.clone(),
                            patient_id: id[..5].to_string(),
                            logits: probs.map(f64::ln),
                            probs,
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let a = make(&mut rng);
    let b = make(&mut rng);
    let out = ensemble_two(&a, &b).unwrap();
    let mean = |runs: &[Vec<PredictionRecord>], i: usize, c: usize| runs.iter().map(|r| r[i].probs[c]).sum::<f64>() / 5.0;
    let mut worst = 0.0f64;
    for (i, rec) in out.iter().enumerate() {
        assert_eq!(rec.recording_id, ids[i]);
        for c in 0..3 {
            let want = (mean(&a, i, c) + mean(&b, i, c)) / 2.0;
            worst = worst.max((rec.probs[c] - want).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over {} recordings", out.len()))
}

fn gradient_correctness() -> Outcome {
    let r = gradcheck(50, 2024, None).unwrap();
    let mlp = r.cases.iter().filter(|c| !c.spec.hidden.is_empty()).count();
    outcome(
        r.cases.len() == 50 && r.max_rel_error < 1e-4,
        format!(
            "{} configs ({mlp} with MLP, {} redrawn), max relative error {:.2e}",
            r.cases.len(),
            r.rejected,
            r.max_rel_error
        ),
    )
}

fn schedule_and_optimizer() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for steps_per_epoch in [1, 7] {
        let s = CosineSchedule {
            base_lr: 0.001,
            warmup_epochs: 5,
            total_epochs: 50,
            steps_per_epoch,
        };
        let w = s.warmup_steps();
        let last = s.total_steps() - 1;
        let mid = w + (last - w) / 2;
        let peak = s.lr_at(w).unwrap();
        let half = s.lr_at(mid).unwrap();
        let end = s.lr_at(last).unwrap();
        ok &= peak == 0.001 && (half - 0.0005).abs() < 1e-15 && end < 1e-3 * 0.001;
        notes.push(format!("spe {steps_per_epoch}: peak {peak}, mid {half:.3e}, last {end:.2e}"));
    }
    let (lr, wd) = (0.1, 0.01);
    let mut p = Param::new("w", Tensor::vector(vec![1.0f64, -2.5, 0.3, 7.0]));
    let before = p.value.clone();
    let mut opt = AdamW::new(AdamWConfig { lr, weight_decay: wd, ..AdamWConfig::default() });
    opt.step(&mut [&mut p], &[Tensor::zeros(vec![4])]).unwrap();
    let exact = p
        .value
        .data()
        .iter()
        .zip(before.data())
        .all(|(&after, &b)| after == b * (1.0 - lr * wd));
    ok &= exact;
    notes.push(format!("pure decay exact: {exact}"));
    outcome(ok, notes.join("; "))
}

/// Times only the segmenter calls; building waveforms and the oracle are
/// excluded.
fn segmentation() -> Outcome {
    let mut spent = Duration::ZERO;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut bad = 0;
    let mut wave = Vec::new();
    for _ in 0..1000 {
        let secs: f64 = rng.random_range(0.1..=120.0);
        let n = (secs * 16_000.0).round() as usize;
        wave.clear();
        wave.extend((0..n).map(|i| (i % 1009) as f32 * 1e-3 - 0.5));
        let w = Waveform::new(std::mem::take(&mut wave), 16_000, "r");

        // Oracle: walk the 2.5 s grid, keep a window unless half or more of
        // it is padding, but always keep the first one.
        let mut want_train = Vec::new();
        let mut start = 0;
        while start < n {
            let pad = 80_000 - (n - start).min(80_000);
            if pad < 40_000 || start == 0 {
                want_train.push((start, pad));
            }
            start += 40_000;
        }
        let mut want_test = Vec::new();
        let mut start = 0;
        while start < n {
            want_test.push((start, 80_000 - (n - start).min(80_000)));
            start += 80_000;
        }

        let t = Instant::now();
        let train = segment_train(&w).unwrap();
        let test = segment_test(&w).unwrap();
        spent += t.elapsed();
        let got_train: Vec<(usize, usize)> = train.iter().map(|s| (s.start_sample, s.padded_samples)).collect();
        let got_test: Vec<(usize, usize)> = test.iter().map(|s| (s.start_sample, s.padded_samples)).collect();
        let rebuilt: Vec<f32> = test.iter().flat_map(|s| s.content().iter().copied()).collect();
        let lengths_ok = train.iter().chain(&test).all(|s| s.samples.len() == 80_000);
        if got_train != want_train || got_test != want_test || rebuilt != w.samples || !lengths_ok {
            bad += 1;
        }
        wave = w.samples;
    }
    outcome(
        bad == 0 && spent < Duration::from_secs(5),
        format!("1000 random durations, {bad} disagreements; segmenter {spent:.2?} (limit 5s)"),
    )
}

fn mlp_config(epochs: usize, warmup: usize) -> TrainConfig {
    let mut cfg = TrainConfig::defaults(Backbone::Mlp);
    cfg.seed = 7;
    cfg.epochs = epochs;
    cfg.warmup_epochs = warmup;
    cfg
}

struct EndToEnd {
    patients: Vec<PatientRecord>,
    split: murmur_core::dataset::SplitAssignment,
    store: FeatureStore,
    run: RunResult,
    took: Duration,
}

/// Synthetic data, split, log-mel features and a 50-epoch MLP run, all on one
/// worker thread.
fn end_to_end(dir: &Path) -> EndToEnd {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let t = Instant::now();
        let patients = generate_synthetic(
            &SyntheticSpec {
                patients_per_class: 20,
                recordings_per_patient: 3,
                seed: 7,
            },
            dir,
        )
        .unwrap();
        let split = stratified_split(&patients, 7, DEFAULT_FRACTIONS).unwrap();
        let cfg = mlp_config(50, 5);
        let store = FeatureStore::build(&patients, &FeatureSource::LogMel(MelConfig::default()), cfg.augments()).unwrap();
        let run = train_one(&cfg, &split, &patients, &store).unwrap();
        EndToEnd {
            patients,
            split,
            store,
            run,
            took: t.elapsed(),
        }
    })
}

fn end_to_end_outcome(e: &EndToEnd) -> Outcome {
    let r = &e.run.test_report;
    let uar = r.uar.unwrap_or(0.0);
    let pass = r.w_acc >= 0.9 && uar >= 0.85 && e.took < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "test W.acc {:.3}, UAR {uar:.3}, best epoch {}; {:.2?} on one thread (limit 300s)",
            r.w_acc, e.run.checkpoint.epoch, e.took
        ),
    )
}

fn ablations(e: &EndToEnd) -> Outcome {
    // (a) the two patient rules on shared predictions.
    let multi = e.patients.iter().all(|p| p.recordings.len() > 1);
    let test = e.split.select(murmur_core::dataset::Fold::Test, &e.patients).unwrap();
    let mut differing = Vec::new();
    let mut tried = Vec::new();
    let mut compare = |name: String, preds: &[PredictionRecord]| {
        let rule = score_predictions(preds, &test, PatientRule::Decision).unwrap();
        let avg = score_predictions(preds, &test, PatientRule::ProbAverage).unwrap();
        tried.push(name.clone());
        if rule.confusion != avg.confusion {
            differing.push(name);
        }
    };
    compare("50-epoch seed 7".into(), &e.run.test_predictions);

    // (c) one epoch of training.
    let one = train_one(&mlp_config(1, 0), &e.split, &e.patients, &e.store).unwrap();
    compare("1-epoch seed 7".into(), &one.test_predictions);
    for seed in 1..=4 {
        let mut cfg = mlp_config(1, 0);
        cfg.seed = seed;
        let r = train_one(&cfg, &e.split, &e.patients, &e.store).unwrap();
        compare(format!("1-epoch seed {seed}"), &r.test_predictions);
    }
    let a_ok = multi && !differing.is_empty();
    let c_ok = one.test_report.w_acc < e.run.test_report.w_acc;
    outcome(
        a_ok && c_ok,
        format!(
            "(a) rules differ on {:?} of {} seeded configs; (c) 1-epoch W.acc {:.3} < 50-epoch {:.3}: {c_ok}",
            differing,
            tried.len(),
            one.test_report.w_acc,
            e.run.test_report.w_acc
        ),
    )
}

fn run_bytes(dir: &Path, run: &RunResult) -> BTreeMap<String, Vec<u8>> {
    run.write(dir).unwrap();
    ["checkpoint.hsck", "test_predictions.json", "report.json", "val_curve.csv"]
        .into_iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn determinism(first: &EndToEnd, scratch: &Path) -> Outcome {
    // Second run from scratch: new data directory, default thread pool.
    let data = scratch.join("data2");
    let patients = generate_synthetic(
        &SyntheticSpec {
            patients_per_class: 20,
            recordings_per_patient: 3,
            seed: 7,
        },
        &data,
    )
    .unwrap();
    let split = stratified_split(&patients, 7, DEFAULT_FRACTIONS).unwrap();
    let cfg = mlp_config(50, 5);
    let store = FeatureStore::build(&patients, &FeatureSource::LogMel(MelConfig::default()), cfg.augments()).unwrap();
    let second = train_one(&cfg, &split, &patients, &store).unwrap();

    let a = run_bytes(&scratch.join("run_a"), &first.run);
    let b = run_bytes(&scratch.join("run_b"), &second);
    let differing: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    outcome(
        differing.is_empty() && split == first.split,
        format!("{} files compared, differing: {differing:?}", a.len()),
    )
}

fn embedding_bridge(dir: &Path, patients: &[PatientRecord], split: &murmur_core::dataset::SplitAssignment) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut set = EmbeddingSet::new(16).unwrap();
    for i in 0..10_000u32 {
        let v: Vec<f32> = (0..16)
            .map(|_| f32::from_bits(rng.random_range(0..0x7f00_0000u32)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        set.insert(&format!("rec{}", i % 977), i, v).unwrap();
    }
    let path = dir.join("bridge.hseb");
    murmur_core::dataset::write_embeddings(&set, &path).unwrap();
    let back = murmur_core::dataset::read_embeddings(&path).unwrap();
    let exact = back.len() == 10_000
        && set
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.0 == b.0 && a.1 == b.1 && a.2.iter().zip(b.2).all(|(x, y)| x.to_bits() == y.to_bits()));

    let emb = synthetic_embeddings(patients, 64, 3.0, 7).unwrap();
    let store = FeatureStore::build(patients, &FeatureSource::Embeddings(emb), false).unwrap();
    let mut cfg = TrainConfig::defaults(Backbone::EmbeddingProbe);
    cfg.seed = 7;
    let run = train_one(&cfg, split, patients, &store).unwrap();
    outcome(
        exact && run.test_report.w_acc >= 0.95,
        format!("10000-vector round trip bit-exact: {exact}; probe test W.acc {:.3}", run.test_report.w_acc),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("metric fidelity", timed(Duration::from_secs(1), metric_fidelity)));
    results.push(("decision-rule conformance", timed(Duration::from_secs(1), decision_rule)));
    results.push(("ensemble identity", timed(Duration::from_secs(1), ensemble_identity)));
    results.push(("gradient correctness", timed(Duration::from_secs(30), gradient_correctness)));
    results.push(("schedule and optimizer", timed(Duration::from_secs(1), schedule_and_optimizer)));
    results.push(("segmentation", segmentation()));

    let e2e = end_to_end(&scratch.path().join("data"));
    results.push(("end-to-end desk-scale run", end_to_end_outcome(&e2e)));
    results.push(("ablation directions", ablations(&e2e)));
    results.push(("determinism", determinism(&e2e, scratch.path())));
    results.push((
        "embedding bridge",
        timed(Duration::from_secs(60), || embedding_bridge(scratch.path(), &e2e.patients, &e2e.split)),
    ));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
