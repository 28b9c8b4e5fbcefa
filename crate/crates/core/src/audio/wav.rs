use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const WAVE_FORMAT_PCM: u16 = 0x0001;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 0x0003;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

impl SampleFormat {
    fn bytes_per_sample(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Float32 => 4,
        }
    }
}

/// Header facts of a WAV file, available without reading the sample data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub num_samples: usize,
    pub format: SampleFormat,
}

struct Fmt {
    sample_rate: u32,
    format: SampleFormat,
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("unexpected end of file while reading {what}")))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt> {
    if body.len() < 16 {
        return Err(Error::Format(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let block_align = u16_at(body, 12);
    let bits = u16_at(body, 14);

    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID whose
        // first two bytes carry the real format tag.
        if body.len() < 26 {
            return Err(Error::Format("extensible fmt chunk too short".into()));
        }
        tag = u16_at(body, 24);
    }
    if channels != 1 {
        return Err(Error::Unsupported(format!(
            "{channels} channels; only mono recordings are supported"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    let format = match (tag, bits) {
        (WAVE_FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (t, b) => {
            return Err(Error::Unsupported(format!(
                "sample encoding tag {t:#06x} with {b} bits (need PCM16 or float32)"
            )))
        }
    };
    if block_align as usize != format.bytes_per_sample() {
        return Err(Error::Format(format!(
            "block align {block_align} inconsistent with mono {bits}-bit samples"
        )));
    }
    Ok(Fmt { sample_rate, format })
}

/// Walks the RIFF chunk list. When `load` is false the data chunk is skipped
/// (but its bounds are still validated against the stream length).
fn read_wav<R: Read + Seek>(r: &mut R, load: bool) -> Result<(WavInfo, Option<Vec<u8>>)> {
    let stream_len = r
        .seek(SeekFrom::End(0))
        .and_then(|n| r.seek(SeekFrom::Start(0)).map(|_| n))
        .map_err(|e| Error::Format(format!("cannot seek: {e}")))?;

    let mut riff = [0u8; 12];
    read_exact_or(r, &mut riff, "RIFF header")?;
    if &riff[0..4] != b"RIFF" {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected RIFF",
            String::from_utf8_lossy(&riff[0..4])
        )));
    }
    if &riff[8..12] != b"WAVE" {
        return Err(Error::Format("RIFF form type is not WAVE".into()));
    }

    let mut fmt: Option<Fmt> = None;
    let mut data: Option<(u64, u64, Option<Vec<u8>>)> = None;
    let mut pos = 12u64;
    while pos + 8 <= stream_len {
        let mut hdr = [0u8; 8];
        read_exact_or(r, &mut hdr, "chunk header")?;
        let id = [hdr[0], hdr[1], hdr[2], hdr[3]];
        let size = u32_at(&hdr, 4) as u64;
        let body_start = pos + 8;
        match &id {
            b"fmt " => {
                if body_start + size > stream_len {
                    return Err(Error::Format("fmt chunk runs past end of file".into()));
                }
                let mut body = vec![0u8; size as usize];
                read_exact_or(r, &mut body, "fmt chunk")?;
                fmt = Some(parse_fmt(&body)?);
            }
            b"data" => {
                if body_start + size > stream_len {
                    return Err(Error::Format(format!(
                        "data chunk declares {size} bytes but only {} remain (truncated)",
                        stream_len - body_start
                    )));
                }
                let bytes = if load {
                    let mut body = vec![0u8; size as usize];
                    read_exact_or(r, &mut body, "data chunk")?;
                    Some(body)
                } else {
                    None
                };
                data = Some((body_start, size, bytes));
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + size + (size & 1);
        if pos >= stream_len {
            break;
        }
        r.seek(SeekFrom::Start(pos))
            .map_err(|e| Error::Format(format!("cannot seek: {e}")))?;
    }

    let fmt = fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let (_, size, bytes) = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    let width = fmt.format.bytes_per_sample() as u64;
    if size % width != 0 {
        return Err(Error::Format(format!(
            "data chunk of {size} bytes is not a whole number of {width}-byte samples"
        )));
    }
    if size == 0 {
        return Err(Error::Format("data chunk holds no samples".into()));
    }
    Ok((
        WavInfo {
            sample_rate: fmt.sample_rate,
            num_samples: (size / width) as usize,
            format: fmt.format,
        },
        bytes,
    ))
}

fn to_samples(info: &WavInfo, bytes: &[u8]) -> Vec<f32> {
    match info.format {
        SampleFormat::Pcm16 => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        SampleFormat::Float32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

/// Decodes a mono PCM16 or float32 WAV file. PCM16 samples are scaled by 1/32768.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let (info, bytes) = read_wav(&mut reader, true).map_err(|e| annotate(e, path))?;
    let samples = to_samples(&info, bytes.as_deref().unwrap_or_default());
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Waveform::new(samples, info.sample_rate, id))
}

/// Decodes WAV bytes already in memory.
pub fn decode_wav_bytes(bytes: &[u8], recording_id: &str) -> Result<Waveform> {
    let mut cursor = std::io::Cursor::new(bytes);
    let (info, data) = read_wav(&mut cursor, true)?;
    let samples = to_samples(&info, data.as_deref().unwrap_or_default());
    Ok(Waveform::new(samples, info.sample_rate, recording_id))
}

/// Reads and validates only the header chunks.
pub fn probe_wav(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    read_wav(&mut reader, false)
        .map(|(info, _)| info)
        .map_err(|e| annotate(e, path))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Unsupported(m) => Error::Unsupported(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Serializes mono samples as a 16-bit PCM WAV image. Samples are clipped to
/// [-1, 1) and quantized as `round(x * 32768)`.
pub fn encode_pcm16(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pcm16(samples, sample_rate)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_file(rate: u32, samples: &[i16]) -> Vec<u8> {
        let f: Vec<f32> = samples.iter().map(|&s| s as f32 / 32768.0).collect();
        encode_pcm16(&f, rate)
    }

    #[test]
    fn constant_half_scale() {
        let bytes = pcm16_file(4000, &[16384; 4000]);
        let w = decode_wav_bytes(&bytes, "x").unwrap();
        assert_eq!(w.sample_rate, 4000);
        assert_eq!(w.samples.len(), 4000);
        assert!(w.samples.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn rifx_is_rejected() {
        let mut bytes = pcm16_file(4000, &[1, 2, 3]);
        bytes[3] = b'X';
        assert!(matches!(decode_wav_bytes(&bytes, "x"), Err(Error::Format(_))));
    }

    #[test]
    fn stereo_is_unsupported() {
        let mut bytes = pcm16_file(4000, &[1, 2, 3, 4]);
        bytes[22] = 2;
        bytes[32] = 4;
        assert!(matches!(decode_wav_bytes(&bytes, "x"), Err(Error::Unsupported(_))));
    }

    #[test]
    fn truncated_data_chunk() {
        let bytes = pcm16_file(4000, &[7; 100]);
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(decode_wav_bytes(cut, "x"), Err(Error::Format(_))));
    }

    #[test]
    fn empty_data_is_an_error() {
        let bytes = pcm16_file(4000, &[]);
        assert!(matches!(decode_wav_bytes(&bytes, "x"), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let plain = pcm16_file(8000, &[100, -100, 3]);
        // splice a LIST chunk with an odd-sized body (padded) between fmt and data
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        let riff_len = (bytes.len() - 8) as u32;
        bytes[4..8].copy_from_slice(&riff_len.to_le_bytes());
        let w = decode_wav_bytes(&bytes, "x").unwrap();
        assert_eq!(w.samples, vec![100.0 / 32768.0, -100.0 / 32768.0, 3.0 / 32768.0]);
    }

    #[test]
    fn full_scale_negative_maps_to_minus_one() {
        let w = decode_wav_bytes(&pcm16_file(4000, &[i16::MIN, i16::MAX]), "x").unwrap();
        assert_eq!(w.samples[0], -1.0);
        assert_eq!(w.samples[1], 32767.0 / 32768.0);
    }
}
