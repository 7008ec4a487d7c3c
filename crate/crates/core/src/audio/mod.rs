//! Speech front end: 16 kHz mono PCM decoding and MFCC extraction.

mod fft;
mod mfcc;
mod wav;

pub use fft::{fft_in_place, power_spectrum};
pub use mfcc::{frame_and_window, hamming, hz_to_mel, mel_to_hz, mfcc, MelFilterbank, MfccConfig};
pub use wav::{encode_wav, load_wav, normalize_peak, parse_wav, PcmAudio, REQUIRED_SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a RIFF/WAVE file")]
    BadMagic,
    #[error("unsupported {field}: {value}")]
    Unsupported { field: &'static str, value: u32 },
    #[error("truncated {0} chunk")]
    Truncated(String),
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
    #[error("input is silent")]
    SilentInput,
    #[error("{samples} samples is shorter than one {needed}-sample frame")]
    TooShort { samples: usize, needed: usize },
    #[error("bad FFT size {fft_size} for frame length {frame_len}")]
    BadSize { fft_size: usize, frame_len: usize },
    #[error("invalid MFCC config: {0}")]
    Config(String),
}
