//! Log-mel front end for the built-in backbone and SpecAugment masking.

mod mel;
mod specaugment;

pub use mel::{hz_to_mel, log_mel, mel_to_hz, LogMelExtractor, MelConfig, MelFilterbank, LOG_FLOOR};
pub use specaugment::{apply_masks, draw_masks, spec_augment, Mask, SpecAugmentConfig};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Log-mel spectrogram stored row-major as `frames × mel_bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpec {
    pub values: Vec<f32>,
    pub frames: usize,
    pub mel_bins: usize,
    /// Frame hop in seconds.
    pub frame_hop: f64,
}

impl LogMelSpec {
    pub fn at(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.mel_bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.mel_bins..(frame + 1) * self.mel_bins]
    }

    pub fn mean(&self) -> f32 {
        let sum: f64 = self.values.iter().map(|&v| v as f64).sum();
        (sum / self.values.len().max(1) as f64) as f32
    }

    /// Time-mean pooling followed by time-max pooling: a `2 * mel_bins` vector.
    pub fn pooled_stats(&self) -> Vec<f32> {
        let mut sum = vec![0.0f64; self.mel_bins];
        let mut max = vec![f32::NEG_INFINITY; self.mel_bins];
        for f in 0..self.frames {
            for (b, &v) in self.row(f).iter().enumerate() {
                sum[b] += v as f64;
                max[b] = max[b].max(v);
            }
        }
        let n = self.frames.max(1) as f64;
        sum.iter()
            .map(|s| (s / n) as f32)
            .chain(max)
            .collect()
    }

    /// Debug dump with one frame per line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.values.len() * 10);
        for f in 0..self.frames {
            let row: Vec<String> = self.row(f).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut file| file.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}
