use murmur_core::audio::{
    decode_wav, resample_to_16k, segment_test, segment_train, Segment, Waveform, SEGMENT_SAMPLES, SUPPORTED_RATES,
    TRAIN_HOP,
};
use murmur_core::features::{log_mel, spec_augment, LogMelSpec, SpecAugmentConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ramp(n: usize) -> Waveform {
    Waveform::new((0..n).map(|i| ((i * 7919) % 2003) as f32 / 2003.0 - 0.5).collect(), 16_000, "r")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn segmentation_invariants(n in 1usize..1_000_000) {
        let w = ramp(n);
        let train = segment_train(&w).unwrap();
        let test = segment_test(&w).unwrap();
        prop_assert!(train.iter().chain(&test).all(|s| s.samples.len() == SEGMENT_SAMPLES));
        prop_assert!(!train.is_empty());
        prop_assert!(train.len() <= n.div_ceil(TRAIN_HOP));
        let rebuilt: Vec<f32> = test.iter().flat_map(|s| s.content().to_vec()).collect();
        prop_assert_eq!(rebuilt, w.samples);
    }

    #[test]
    fn resampling_is_length_homogeneous(n in 200usize..6000, pick in 0usize..6) {
        let rate = SUPPORTED_RATES[pick];
        let x: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37).sin() * 0.5).collect();
        let doubled = [x.clone(), x.clone()].concat();
        let a = resample_to_16k(&Waveform::new(x, rate, "a")).unwrap().samples.len();
        let b = resample_to_16k(&Waveform::new(doubled, rate, "b")).unwrap().samples.len();
        prop_assert!((b as i64 - 2 * a as i64).abs() <= 1, "{} -> {}, doubled {}", n, a, b);
    }
}

#[test]
fn short_recordings_give_one_padded_window_each_way() {
    let w = ramp(16_000);
    for segs in [segment_train(&w).unwrap(), segment_test(&w).unwrap()] {
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].padded_samples, SEGMENT_SAMPLES - 16_000);
        assert!(segs[0].samples[16_000..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn pcm16_decode_matches_hound() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 4000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    let values: Vec<i16> = (0..5000).map(|i| ((i * 7919) % 65536 - 32768) as i16).collect();
    for &v in &values {
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();

    let ours = decode_wav(&path).unwrap();
    let reference: Vec<f32> = hound::WavReader::open(&path)
        .unwrap()
        .samples::<i16>()
        .map(|s| s.unwrap() as f32 / 32768.0)
        .collect();
    assert_eq!(ours.sample_rate, 4000);
    assert_eq!(ours.samples, reference);
    assert_eq!(ours.samples.iter().cloned().fold(f32::MAX, f32::min), -1.0);
}

#[test]
fn float_decode_matches_hound() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16000,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for i in 0..3000 {
        w.write_sample((i as f32 * 0.01).sin() * 0.9).unwrap();
    }
    w.finalize().unwrap();
    let reference: Vec<f32> = hound::WavReader::open(&path).unwrap().samples::<f32>().map(Result::unwrap).collect();
    assert_eq!(decode_wav(&path).unwrap().samples, reference);
}

fn segment(seed: u32) -> Segment {
    let samples = (0..SEGMENT_SAMPLES)
        .map(|i| (((i as u32).wrapping_mul(2_654_435_761) ^ seed) % 1000) as f32 / 1000.0 - 0.5)
        .collect();
    Segment {
        samples,
        recording_id: "r".into(),
        start_sample: 0,
        padded_samples: 0,
    }
}

#[test]
fn log_mel_is_bit_deterministic() {
    let a = log_mel(&segment(3), 64, 400, 160).unwrap();
    let b = log_mel(&segment(3), 64, 400, 160).unwrap();
    assert_eq!((a.frames, a.mel_bins), (498, 64));
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn spec_augment_bounds() {
    let spec: LogMelSpec = log_mel(&segment(9), 64, 400, 160).unwrap();
    let cfg = SpecAugmentConfig::new(20, 50);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let out = spec_augment(&spec, &cfg, &mut rng);
        assert_eq!((out.frames, out.mel_bins, out.values.len()), (spec.frames, spec.mel_bins, spec.values.len()));
        assert!(out.values.iter().all(|v| v.is_finite()));
        let changed = out.values.iter().zip(&spec.values).filter(|(a, b)| a != b).count();
        assert!(changed <= 20 * spec.frames + 50 * spec.mel_bins);
    }
}
