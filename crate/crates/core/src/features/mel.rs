use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::LogMelSpec;
use crate::audio::{Segment, MODEL_RATE, SEGMENT_SAMPLES};
use crate::error::{Error, Result};

/// Added to mel power before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

const F_MIN: f64 = 50.0;
const F_MAX: f64 = 8000.0;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MelConfig {
    pub mel_bins: usize,
    pub win_length: usize,
    pub hop_length: usize,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            mel_bins: 64,
            win_length: 400,
            hop_length: 160,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mel_bins == 0 {
            return Err(Error::Precondition("mel_bins must be at least 1".into()));
        }
        if self.hop_length == 0
            || self.hop_length > self.win_length
            || self.win_length > SEGMENT_SAMPLES
        {
            return Err(Error::Precondition(format!(
                "need 0 < hop ({}) <= window ({}) <= {SEGMENT_SAMPLES}",
                self.hop_length, self.win_length
            )));
        }
        Ok(())
    }

    /// FFT size: the window zero-padded to the next power of two.
    pub fn n_fft(&self) -> usize {
        self.win_length.next_power_of_two()
    }

    pub fn frames(&self) -> usize {
        1 + (SEGMENT_SAMPLES - self.win_length) / self.hop_length
    }
}

/// Triangular filters on the HTK mel scale spanning 50 Hz to 8 kHz.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Number of one-sided FFT bins (`n_fft / 2 + 1`).
    pub fft_bins: usize,
    /// Per filter: first FFT bin and the weights from that bin onward.
    pub filters: Vec<(usize, Vec<f64>)>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(mel_bins: usize, n_fft: usize, sample_rate: u32) -> Self {
        let fft_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(F_MIN), hz_to_mel(F_MAX));
        let edges: Vec<f64> = (0..mel_bins + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (mel_bins + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let filters = (0..mel_bins)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f64)> = (0..fft_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = ((f - left) / (center - left)).min((right - f) / (right - center));
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let start = weights.first().map_or(0, |&(k, _)| k);
                (start, weights.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        Self {
            fft_bins,
            filters,
            centers_hz: edges[1..=mel_bins].to_vec(),
        }
    }

    /// Dense `mel_bins × fft_bins` weight matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.filters
            .iter()
            .map(|(start, w)| {
                let mut row = vec![0.0; self.fft_bins];
                row[*start..*start + w.len()].copy_from_slice(w);
                row
            })
            .collect()
    }

    fn apply(&self, power: &[f64], out: &mut [f32]) {
        for ((start, w), o) in self.filters.iter().zip(out.iter_mut()) {
            let e: f64 = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
            *o = (e + LOG_FLOOR).ln() as f32;
        }
    }
}

/// Reusable log-mel front end (FFT plan, window and filterbank built once).
#[derive(Clone)]
pub struct LogMelExtractor {
    config: MelConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    bank: MelFilterbank,
}

impl std::fmt::Debug for LogMelExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelExtractor")
            .field("config", &self.config)
            .finish()
    }
}

impl LogMelExtractor {
    pub fn new(config: MelConfig) -> Result<Self> {
        config.validate()?;
        let n = config.win_length;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft());
        let bank = MelFilterbank::new(config.mel_bins, config.n_fft(), MODEL_RATE);
        Ok(Self {
            config,
            window,
            fft,
            bank,
        })
    }

    pub fn config(&self) -> MelConfig {
        self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn extract(&self, seg: &Segment) -> Result<LogMelSpec> {
        if seg.samples.len() != SEGMENT_SAMPLES {
            return Err(Error::Precondition(format!(
                "segment of {} samples, expected {SEGMENT_SAMPLES}",
                seg.samples.len()
            )));
        }
        Ok(self.extract_samples(&seg.samples))
    }

    fn extract_samples(&self, x: &[f32]) -> LogMelSpec {
        let cfg = self.config;
        let frames = cfg.frames();
        let n_fft = cfg.n_fft();
        let mut values = vec![0.0f32; frames * cfg.mel_bins];
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f64; self.bank.fft_bins];
        for (f, out) in values.chunks_exact_mut(cfg.mel_bins).enumerate() {
            let start = f * cfg.hop_length;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < cfg.win_length {
                    Complex::new(x[start + i] as f64 * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.bank.apply(&power, out);
        }
        LogMelSpec {
            values,
            frames,
            mel_bins: cfg.mel_bins,
            frame_hop: cfg.hop_length as f64 / MODEL_RATE as f64,
        }
    }
}

/// Log-mel spectrogram of a segment: magnitude-squared STFT with a Hann
/// window and no centering, HTK mel filters over 50–8000 Hz, then
/// `ln(power + 1e-10)`.
pub fn log_mel(
    seg: &Segment,
    mel_bins: usize,
    win_length: usize,
    hop_length: usize,
) -> Result<LogMelSpec> {
    LogMelExtractor::new(MelConfig {
        mel_bins,
        win_length,
        hop_length,
    })?
    .extract(seg)
}
