use std::path::Path;

use super::AudioError;

pub const REQUIRED_SAMPLE_RATE: u32 = 16_000;

/// Decoded mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PcmAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes a RIFF/WAVE byte stream. Only PCM, mono, 16-bit, 16 kHz is
/// accepted; chunks other than `fmt ` and `data` are skipped.
pub fn parse_wav(bytes: &[u8]) -> Result<PcmAudio, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::BadMagic);
    }
    let mut pos = 12;
    let mut format_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let name = String::from_utf8_lossy(id).trim_end().to_string();
        if body + size > bytes.len() {
            return Err(AudioError::Truncated(name));
        }
        let chunk = &bytes[body..body + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(AudioError::Truncated(name));
                }
                check_format(chunk)?;
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(AudioError::MissingChunk("fmt"));
                }
                let samples = chunk
                    .chunks_exact(2)
                    .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0)
                    .collect();
                return Ok(PcmAudio {
                    samples,
                    sample_rate: REQUIRED_SAMPLE_RATE,
                });
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body + size + (size & 1);
    }
    if bytes.len() > pos {
        return Err(AudioError::Truncated("chunk header".into()));
    }
    Err(AudioError::MissingChunk("data"))
}

fn check_format(chunk: &[u8]) -> Result<(), AudioError> {
    let checks: [(&'static str, u32, u32); 4] = [
        ("codec", u16_at(chunk, 0) as u32, 1),
        ("channels", u16_at(chunk, 2) as u32, 1),
        ("sample rate", u32_at(chunk, 4), REQUIRED_SAMPLE_RATE),
        ("bit depth", u16_at(chunk, 14) as u32, 16),
    ];
    for (field, value, want) in checks {
        if value != want {
            return Err(AudioError::Unsupported { field, value });
        }
    }
    Ok(())
}

pub fn load_wav(path: &Path) -> Result<PcmAudio, AudioError> {
    let bytes = std::fs::read(path).map_err(|e| AudioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_wav(&bytes)
}

/// 16 kHz mono 16-bit PCM bytes with a 44-byte header. Samples are clamped
/// to [-1, 1] and rounded to the nearest step of 1/32768.
pub fn encode_wav(samples: &[f64]) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut b = Vec::with_capacity(44 + data_len as usize);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&REQUIRED_SAMPLE_RATE.to_le_bytes());
    b.extend_from_slice(&(REQUIRED_SAMPLE_RATE * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0)
            .round()
            .clamp(-32768.0, 32767.0) as i16;
        b.extend_from_slice(&q.to_le_bytes());
    }
    b
}

/// Scales so the largest |sample| equals `10^(target_dbfs / 20)`.
pub fn normalize_peak(audio: &PcmAudio, target_dbfs: f64) -> Result<PcmAudio, AudioError> {
    let peak = audio.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(AudioError::SilentInput);
    }
    let gain = 10f64.powf(target_dbfs / 20.0) / peak;
    Ok(PcmAudio {
        samples: audio.samples.iter().map(|s| s * gain).collect(),
        sample_rate: audio.sample_rate,
    })
}
