use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LogMelSpec;

/// Frequency/time masking parameters: `freq_param` is the largest mel-bin
/// mask width, `time_param` the largest frame mask width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecAugmentConfig {
    pub freq_param: usize,
    pub time_param: usize,
    pub num_masks_per_axis: usize,
}

impl SpecAugmentConfig {
    pub fn new(freq_param: usize, time_param: usize) -> Self {
        Self {
            freq_param,
            time_param,
            num_masks_per_axis: 1,
        }
    }

    pub fn disabled() -> Self {
        Self::new(0, 0)
    }

    pub fn is_identity(&self) -> bool {
        self.num_masks_per_axis == 0 || (self.freq_param == 0 && self.time_param == 0)
    }
}

impl std::fmt::Display for SpecAugmentConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.freq_param, self.time_param)
    }
}

/// A band of mel bins or a span of frames to overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    Freq { start: usize, width: usize },
    Time { start: usize, width: usize },
}

fn draw_one<R: Rng + ?Sized>(rng: &mut R, param: usize, size: usize) -> (usize, usize) {
    let width = rng.random_range(0..=param.min(size));
    let start = rng.random_range(0..=size - width);
    (start, width)
}

/// Draws masks in a fixed order: every frequency mask (width, then start),
/// then every time mask. Widths are uniform on `[0, param]` clamped to the
/// axis length; starts are uniform over the positions where the mask fits.
pub fn draw_masks<R: Rng + ?Sized>(
    cfg: &SpecAugmentConfig,
    frames: usize,
    mel_bins: usize,
    rng: &mut R,
) -> Vec<Mask> {
    let mut masks = Vec::with_capacity(2 * cfg.num_masks_per_axis);
    for _ in 0..cfg.num_masks_per_axis {
        let (start, width) = draw_one(rng, cfg.freq_param, mel_bins);
        masks.push(Mask::Freq { start, width });
    }
    for _ in 0..cfg.num_masks_per_axis {
        let (start, width) = draw_one(rng, cfg.time_param, frames);
        masks.push(Mask::Time { start, width });
    }
    masks
}

/// Sets every masked cell to the mean of the unmasked input.
pub fn apply_masks(spec: &LogMelSpec, masks: &[Mask]) -> LogMelSpec {
    let mut out = spec.clone();
    if masks.iter().all(|m| matches!(m, Mask::Freq { width: 0, .. } | Mask::Time { width: 0, .. })) {
        return out;
    }
    let fill = spec.mean();
    let bins = spec.mel_bins;
    for mask in masks {
        match *mask {
            Mask::Freq { start, width } => {
                for row in out.values.chunks_exact_mut(bins) {
                    row[start..start + width].fill(fill);
                }
            }
            Mask::Time { start, width } => {
                out.values[start * bins..(start + width) * bins].fill(fill);
            }
        }
    }
    out
}

/// One frequency mask and one time mask (per `num_masks_per_axis`) filled with
/// the spectrogram mean. A `0/0` config returns the input untouched and does
/// not consume randomness.
pub fn spec_augment<R: Rng + ?Sized>(
    spec: &LogMelSpec,
    cfg: &SpecAugmentConfig,
    rng: &mut R,
) -> LogMelSpec {
    if cfg.is_identity() {
        return spec.clone();
    }
    let masks = draw_masks(cfg, spec.frames, spec.mel_bins, rng);
    apply_masks(spec, &masks)
}
