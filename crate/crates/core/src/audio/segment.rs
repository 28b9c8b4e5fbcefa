use super::{Waveform, MODEL_RATE};
use crate::error::{Error, Result};

/// 5 s at 16 kHz.
pub const SEGMENT_SAMPLES: usize = 80_000;
/// 2.5 s stride used for training windows.
pub const TRAIN_HOP: usize = 40_000;

/// A fixed-length 5 s window cut from a recording.
///
/// Windows are identified by `index = start_sample / TRAIN_HOP`, which is
/// shared by both segmentation policies: test window `k` has index `2k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub recording_id: String,
    pub start_sample: usize,
    pub padded_samples: usize,
}

impl Segment {
    pub fn index(&self) -> u32 {
        (self.start_sample / TRAIN_HOP) as u32
    }

    /// The unpadded part of the window.
    pub fn content(&self) -> &[f32] {
        &self.samples[..SEGMENT_SAMPLES - self.padded_samples]
    }
}

fn padding_at(start: usize, len: usize) -> usize {
    (start + SEGMENT_SAMPLES).saturating_sub(len)
}

/// Window starts under the training policy for a recording of `len` samples:
/// every 2.5 s, dropping windows that are at least half padding unless that
/// leaves nothing.
pub fn train_window_starts(len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let kept: Vec<usize> = (0..len)
        .step_by(TRAIN_HOP)
        .filter(|&s| 2 * padding_at(s, len) < SEGMENT_SAMPLES)
        .collect();
    if kept.is_empty() {
        vec![0]
    } else {
        kept
    }
}

/// Every window start on the 2.5 s grid, before the padding drop rule. Both
/// segmentation policies pick their windows from this set.
pub fn candidate_window_starts(len: usize) -> Vec<usize> {
    (0..len).step_by(TRAIN_HOP).collect()
}

/// Window starts under the test policy: consecutive 5 s windows, final one padded.
pub fn test_window_starts(len: usize) -> Vec<usize> {
    (0..len).step_by(SEGMENT_SAMPLES).collect()
}

fn cut(w: &Waveform, starts: &[usize]) -> Vec<Segment> {
    starts
        .iter()
        .map(|&start| {
            let end = (start + SEGMENT_SAMPLES).min(w.samples.len());
            let mut samples = Vec::with_capacity(SEGMENT_SAMPLES);
            samples.extend_from_slice(&w.samples[start..end]);
            samples.resize(SEGMENT_SAMPLES, 0.0);
            Segment {
                samples,
                recording_id: w.recording_id.clone(),
                start_sample: start,
                padded_samples: padding_at(start, w.samples.len()),
            }
        })
        .collect()
}

fn check(w: &Waveform) -> Result<()> {
    if w.sample_rate != MODEL_RATE {
        return Err(Error::Precondition(format!(
            "segmentation needs {MODEL_RATE} Hz audio, got {} Hz for {}",
            w.sample_rate, w.recording_id
        )));
    }
    if w.samples.is_empty() {
        return Err(Error::Precondition(format!("recording {} is empty", w.recording_id)));
    }
    Ok(())
}

pub fn segment_train(w: &Waveform) -> Result<Vec<Segment>> {
    check(w)?;
    Ok(cut(w, &train_window_starts(w.samples.len())))
}

pub fn segment_test(w: &Waveform) -> Result<Vec<Segment>> {
    check(w)?;
    Ok(cut(w, &test_window_starts(w.samples.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(secs: f64) -> Waveform {
        let n = (secs * 16_000.0).round() as usize;
        Waveform::new((0..n).map(|i| (i % 7) as f32 * 0.1).collect(), 16_000, "r")
    }

    fn summary(segs: &[Segment]) -> Vec<(usize, usize)> {
        segs.iter().map(|s| (s.start_sample, s.padded_samples)).collect()
    }

    #[test]
    fn train_windows_12_5s() {
        let segs = segment_train(&wave(12.5)).unwrap();
        assert_eq!(
            summary(&segs),
            vec![(0, 0), (40_000, 0), (80_000, 0), (120_000, 0)]
        );
    }

    #[test]
    fn train_windows_5s_and_3s() {
        assert_eq!(summary(&segment_train(&wave(5.0)).unwrap()), vec![(0, 0)]);
        assert_eq!(summary(&segment_train(&wave(3.0)).unwrap()), vec![(0, 32_000)]);
    }

    #[test]
    fn test_windows() {
        assert_eq!(
            summary(&segment_test(&wave(12.5)).unwrap()),
            vec![(0, 0), (80_000, 0), (160_000, 40_000)]
        );
        assert_eq!(
            summary(&segment_test(&wave(10.0)).unwrap()),
            vec![(0, 0), (80_000, 0)]
        );
        assert_eq!(summary(&segment_test(&wave(0.5)).unwrap()), vec![(0, 72_000)]);
    }

    #[test]
    fn padding_is_zero_and_lengths_fixed() {
        let segs = segment_test(&wave(12.5)).unwrap();
        let last = segs.last().unwrap();
        assert!(segs.iter().all(|s| s.samples.len() == SEGMENT_SAMPLES));
        assert!(last.samples[40_000..].iter().all(|&v| v == 0.0));
        assert_eq!(last.index(), 4);
    }

    #[test]
    fn wrong_rate_is_precondition_error() {
        let w = Waveform::new(vec![0.0; 100], 4000, "r");
        assert!(matches!(segment_train(&w), Err(Error::Precondition(_))));
        assert!(matches!(segment_test(&w), Err(Error::Precondition(_))));
    }
}
