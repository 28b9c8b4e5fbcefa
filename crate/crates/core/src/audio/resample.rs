use super::{Waveform, MODEL_RATE};
use crate::error::{Error, Result};

/// Input rates the resampler accepts.
pub const SUPPORTED_RATES: [u32; 6] = [4000, 8000, 16000, 22050, 44100, 48000];

const TAPS: usize = 64;
const HALF: f64 = (TAPS / 2) as f64;
const KAISER_BETA: f64 = 8.6;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn check_rate(rate: u32) -> Result<()> {
    if SUPPORTED_RATES.contains(&rate) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "sample rate {rate} Hz (supported: {SUPPORTED_RATES:?})"
        )))
    }
}

/// Output length for `len` input samples at `in_rate`: `round(len * 16000 / in_rate)`.
pub fn resampled_len(len: usize, in_rate: u32) -> Result<usize> {
    check_rate(in_rate)?;
    let num = len as u64 * MODEL_RATE as u64;
    let den = in_rate as u64;
    Ok(((2 * num + den) / (2 * den)) as usize)
}

/// Polyphase filter bank: `phases[p][t]` weights input sample `n0 - 31 + t`
/// for an output position `n0 + p / up`.
struct PolyphaseBank {
    up: u64,
    down: u64,
    phases: Vec<[f64; TAPS]>,
}

impl PolyphaseBank {
    fn new(in_rate: u32) -> Self {
        let g = gcd(MODEL_RATE as u64, in_rate as u64);
        let up = MODEL_RATE as u64 / g;
        let down = in_rate as u64 / g;
        // cutoff relative to the input Nyquist frequency
        let cutoff = (up as f64 / down as f64).min(1.0);
        let i0_beta = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps = [0.0; TAPS];
                for (t, tap) in taps.iter_mut().enumerate() {
                    let d = t as f64 - (HALF - 1.0) - frac;
                    let r = d / HALF;
                    let window = if r.abs() <= 1.0 {
                        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
                    } else {
                        0.0
                    };
                    *tap = cutoff * sinc(cutoff * d) * window;
                }
                // unit DC gain per phase
                let sum: f64 = taps.iter().sum();
                for tap in taps.iter_mut() {
                    *tap /= sum;
                }
                taps
            })
            .collect();
        Self { up, down, phases }
    }

    fn run(&self, x: &[f32], out_len: usize) -> Vec<f32> {
        let n = x.len() as i64;
        let offset = HALF as i64 - 1;
        (0..out_len as u64)
            .map(|j| {
                let pos = j * self.down;
                let n0 = (pos / self.up) as i64;
                let taps = &self.phases[(pos % self.up) as usize];
                let first = n0 - offset;
                let mut acc = 0.0f64;
                if first >= 0 && first + TAPS as i64 <= n {
                    let window = &x[first as usize..first as usize + TAPS];
                    for (w, &s) in taps.iter().zip(window) {
                        acc += w * s as f64;
                    }
                } else {
                    for (t, w) in taps.iter().enumerate() {
                        let i = first + t as i64;
                        if (0..n).contains(&i) {
                            acc += w * x[i as usize] as f64;
                        }
                    }
                }
                acc as f32
            })
            .collect()
    }
}

/// Converts a waveform to 16 kHz with a 64-tap Kaiser-windowed sinc
/// (beta 8.6) evaluated in polyphase form. A 16 kHz input is returned as is.
pub fn resample_to_16k(w: &Waveform) -> Result<Waveform> {
    check_rate(w.sample_rate)?;
    if w.sample_rate == MODEL_RATE {
        return Ok(w.clone());
    }
    let out_len = resampled_len(w.samples.len(), w.sample_rate)?;
    let bank = PolyphaseBank::new(w.sample_rate);
    Ok(Waveform::new(
        bank.run(&w.samples, out_len),
        MODEL_RATE,
        w.recording_id.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_model_rate() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16_000, "a");
        assert_eq!(resample_to_16k(&w).unwrap(), w);
    }

    #[test]
    fn four_x_length() {
        let w = Waveform::new(vec![0.0; 5000], 4000, "a");
        assert_eq!(resample_to_16k(&w).unwrap().samples.len(), 20_000);
    }

    #[test]
    fn unsupported_rate() {
        let w = Waveform::new(vec![0.0; 10], 11_025, "a");
        assert!(matches!(resample_to_16k(&w), Err(Error::Unsupported(_))));
    }

    #[test]
    fn integer_upsampling_keeps_original_samples() {
        let x: Vec<f32> = (0..400).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect();
        let y = resample_to_16k(&Waveform::new(x.clone(), 4000, "a")).unwrap();
        for (i, &s) in x.iter().enumerate() {
            assert!((y.samples[4 * i] - s).abs() < 1e-6);
        }
    }

    #[test]
    fn downsampled_lengths_round() {
        assert_eq!(resampled_len(48_000, 48_000).unwrap(), 16_000);
        assert_eq!(resampled_len(1, 44_100).unwrap(), 0);
        assert_eq!(resampled_len(3, 44_100).unwrap(), 1);
        assert_eq!(resampled_len(22_050, 22_050).unwrap(), 16_000);
    }

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-13);
    }
}
