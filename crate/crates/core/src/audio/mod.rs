//! Waveform decoding, resampling to the 16 kHz model rate, and 5 s segmentation.

mod resample;
mod segment;
mod wav;

pub use resample::{resample_to_16k, resampled_len, SUPPORTED_RATES};
pub use segment::{
    candidate_window_starts, segment_test, segment_train, test_window_starts, train_window_starts, Segment, SEGMENT_SAMPLES,
    TRAIN_HOP,
};
pub use wav::{decode_wav, decode_wav_bytes, encode_pcm16, probe_wav, write_wav_pcm16, SampleFormat, WavInfo};

/// Model input sample rate.
pub const MODEL_RATE: u32 = 16_000;

/// A mono recording with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub recording_id: String,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32, recording_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            recording_id: recording_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
