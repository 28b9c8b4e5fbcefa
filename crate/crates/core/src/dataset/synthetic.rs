//! Deterministic desk-scale stand-in for the CirCor data.
//!
//! Every recording is a 4 kHz phonocardiogram-like signal:
//!
//! - Absent: a periodic S1/S2 click pair over low-level pink noise.
//! - Present: the same construction plus a 150–400 Hz noise burst in each
//!   systolic interval (between S1 and S2).
//! - Unknown: the click train buried in heavy white noise.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EmbeddingSet, MurmurLabel, PatientRecord, Recording};
use crate::audio::{candidate_window_starts, probe_wav, resampled_len, write_wav_pcm16, TRAIN_HOP};
use crate::error::{Error, Result};

pub const SYNTH_RATE: u32 = 4000;
const LOCATIONS: [&str; 4] = ["AV", "PV", "TV", "MV"];
const FIRST_PATIENT_ID: usize = 10_001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub patients_per_class: usize,
    pub recordings_per_patient: usize,
    pub seed: u64,
}

/// Recording id for the `j`-th recording of a patient.
fn location_name(patient_id: &str, j: usize) -> String {
    let loc = LOCATIONS[j % LOCATIONS.len()];
    if j < LOCATIONS.len() {
        format!("{patient_id}_{loc}")
    } else {
        format!("{patient_id}_{loc}_{}", j / LOCATIONS.len())
    }
}

fn damped_click(out: &mut [f64], at: f64, amp: f64, freq: f64, tau: f64) {
    let rate = SYNTH_RATE as f64;
    let start = (at * rate).ceil().max(0.0) as usize;
    let end = (((at + 6.0 * tau) * rate) as usize).min(out.len());
    for (i, o) in out.iter_mut().enumerate().take(end).skip(start) {
        let t = i as f64 / rate - at;
        *o += amp * (-t / tau).exp() * (2.0 * PI * freq * t).sin();
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Pink noise via Paul Kellet's refined filter on white Gaussian input,
/// scaled to the requested RMS.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize, target_rms: f64) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let white: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let y = b.iter().sum::<f64>() + white * 0.5362;
            b[6] = white * 0.115926;
            y
        })
        .collect();
    let scale = target_rms / rms(&out).max(1e-12);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

struct BandNoise {
    components: Vec<(f64, f64)>,
}

impl BandNoise {
    fn new(rng: &mut ChaCha8Rng, lo: f64, hi: f64, count: usize) -> Self {
        let components = (0..count)
            .map(|_| (rng.random_range(lo..hi), rng.random_range(0.0..2.0 * PI)))
            .collect();
        Self { components }
    }

    /// Unit-RMS sample at time `t` seconds.
    fn at(&self, t: f64) -> f64 {
        let norm = (2.0 / self.components.len() as f64).sqrt();
        norm * self
            .components
            .iter()
            .map(|&(f, ph)| (2.0 * PI * f * t + ph).sin())
            .sum::<f64>()
    }
}

fn synthesize(rng: &mut ChaCha8Rng, label: MurmurLabel) -> Vec<f32> {
    let rate = SYNTH_RATE as f64;
    let secs = rng.random_range(8.0..=20.0);
    let n = (secs * rate).round() as usize;
    let bpm: f64 = rng.random_range(60.0..110.0);
    let period = 60.0 / bpm;
    let systole = rng.random_range(0.28..0.36) * period;
    let s1_freq = rng.random_range(40.0..70.0);
    let s2_freq = rng.random_range(50.0..80.0);
    let offset = rng.random_range(0.0..period);

    let (click_gain, floor) = match label {
        MurmurLabel::Unknown => (0.4, 0.0),
        _ => (1.0, 0.01),
    };
    let mut x = if floor > 0.0 {
        pink_noise(rng, n, floor)
    } else {
        vec![0.0; n]
    };

    let beats: Vec<f64> = (0..)
        .map(|k| offset - period + k as f64 * period)
        .take_while(|&t| t < secs)
        .collect();
    for &s1 in &beats {
        damped_click(&mut x, s1, 0.5 * click_gain, s1_freq, 0.015);
        damped_click(&mut x, s1 + systole, 0.35 * click_gain, s2_freq, 0.012);
    }

    match label {
        MurmurLabel::Present => {
            let amp = rng.random_range(0.10..0.16);
            let band = BandNoise::new(rng, 150.0, 400.0, 48);
            for &s1 in &beats {
                let (a, b) = (s1 + 0.05, s1 + systole - 0.02);
                let start = (a * rate).ceil().max(0.0) as usize;
                let end = ((b * rate) as usize).min(n);
                for (i, v) in x.iter_mut().enumerate().take(end).skip(start) {
                    let t = i as f64 / rate;
                    let env = (PI * (t - a) / (b - a)).sin();
                    *v += amp * env * band.at(t);
                }
            }
        }
        MurmurLabel::Unknown => {
            let sigma = rng.random_range(0.22..0.30);
            for v in x.iter_mut() {
                let w: f64 = rng.sample(StandardNormal);
                *v += sigma * w;
            }
        }
        MurmurLabel::Absent => {}
    }
    x.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect()
}

fn patient_plan(spec: &SyntheticSpec) -> Vec<(String, MurmurLabel)> {
    (0..spec.patients_per_class)
        .flat_map(|i| MurmurLabel::ALL.into_iter().map(move |l| (i, l)))
        .enumerate()
        .map(|(n, (_, label))| ((FIRST_PATIENT_ID + n).to_string(), label))
        .collect()
}

/// Writes 4 kHz PCM16 recordings, CirCor-style `<patient>.txt` files and a
/// `manifest.csv` into `out_dir`. Output depends only on `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let dir = out_dir.as_ref();
    if spec.patients_per_class == 0 || spec.recordings_per_patient == 0 {
        return Err(Error::Precondition("synthetic counts must be at least 1".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let plan = patient_plan(spec);
    let mut patients = Vec::with_capacity(plan.len());
    let mut manifest = String::from("patient_id,label,wav_path\n");
    for (p, (patient_id, label)) in plan.into_iter().enumerate() {
        let mut txt = format!("{patient_id} {} {SYNTH_RATE}\n", spec.recordings_per_patient);
        let mut recordings = Vec::with_capacity(spec.recordings_per_patient);
        for j in 0..spec.recordings_per_patient {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream((p * spec.recordings_per_patient + j) as u64);
            let samples = synthesize(&mut rng, label);
            let id = location_name(&patient_id, j);
            let file = format!("{id}.wav");
            let path = dir.join(&file);
            write_wav_pcm16(&path, &samples, SYNTH_RATE)?;
            let loc = id.trim_start_matches(&format!("{patient_id}_")).to_string();
            let _ = writeln!(txt, "{loc} {id}.hea {file} {id}.tsv");
            let _ = writeln!(manifest, "{patient_id},{label},{file}");
            recordings.push(Recording { id, path });
        }
        let _ = writeln!(txt, "#Age: Child\n#Murmur: {label}\n#Outcome: Normal");
        let txt_path = dir.join(format!("{patient_id}.txt"));
        std::fs::write(&txt_path, txt).map_err(|e| Error::io(&txt_path, e))?;
        patients.push(PatientRecord {
            patient_id,
            label,
            recordings,
        });
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(patients)
}

/// Class-separable Gaussian embeddings for every window on the 2.5 s grid of
/// each recording. Class `c` is shifted by `separation` on every dimension
/// `d` with `d % 3 == c`; the noise is unit-variance and isotropic.
pub fn synthetic_embeddings(
    patients: &[PatientRecord],
    dim: usize,
    separation: f32,
    seed: u64,
) -> Result<EmbeddingSet> {
    if dim < 3 {
        return Err(Error::Precondition("synthetic embeddings need dim >= 3".into()));
    }
    let mut set = EmbeddingSet::new(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in patients {
        for rec in &p.recordings {
            let info = probe_wav(&rec.path)?;
            let len = resampled_len(info.num_samples, info.sample_rate)?;
            for start in candidate_window_starts(len) {
                let mut v: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                for x in v.iter_mut().skip(p.label.index()).step_by(3) {
                    *x += separation;
                }
                set.insert(&rec.id, (start / TRAIN_HOP) as u32, v)?;
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_ids() {
        let spec = SyntheticSpec {
            patients_per_class: 2,
            recordings_per_patient: 5,
            seed: 1,
        };
        let plan = patient_plan(&spec);
        assert_eq!(plan.len(), 6);
        assert_eq!(plan[0], ("10001".to_string(), MurmurLabel::Present));
        assert_eq!(plan[5], ("10006".to_string(), MurmurLabel::Absent));
        assert_eq!(location_name("7", 0), "7_AV");
        assert_eq!(location_name("7", 4), "7_AV_1");
    }

    #[test]
    fn lengths_in_range() {
        for (stream, label) in MurmurLabel::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            rng.set_stream(stream as u64);
            let x = synthesize(&mut rng, label);
            assert!((8 * 4000..=20 * 4000).contains(&x.len()));
            assert!(x.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
