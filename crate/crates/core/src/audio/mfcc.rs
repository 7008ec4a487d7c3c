use rayon::prelude::*;

use super::{power_spectrum, AudioError, PcmAudio};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_len: 400,
            hop: 160,
            fft_size: 512,
            n_filters: 26,
            n_coeffs: 13,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        let fail = |m: &str| Err(AudioError::Config(m.to_string()));
        if self.frame_len < 2 || self.hop == 0 {
            return fail("frame_len must be at least 2 and hop at least 1");
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.frame_len {
            return Err(AudioError::BadSize {
                fft_size: self.fft_size,
                frame_len: self.frame_len,
            });
        }
        if self.n_coeffs == 0 || self.n_filters < self.n_coeffs {
            return fail("need 1 <= n_coeffs <= n_filters");
        }
        if !(self.f_min >= 0.0
            && self.f_min < self.f_max
            && self.f_max <= self.sample_rate as f64 / 2.0)
        {
            return fail("need 0 <= f_min < f_max <= sample_rate / 2");
        }
        if !(self.log_floor > 0.0) {
            return fail("log_floor must be positive");
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            1 + (samples - self.frame_len) / self.hop
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn hamming(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
        .collect()
}

/// Overlapping frames, each multiplied by a Hamming window.
pub fn frame_and_window(samples: &[f64], cfg: &MfccConfig) -> Result<Tensor, AudioError> {
    cfg.validate()?;
    let f = cfg.num_frames(samples.len());
    if f == 0 {
        return Err(AudioError::TooShort {
            samples: samples.len(),
            needed: cfg.frame_len,
        });
    }
    let w = hamming(cfg.frame_len);
    let mut data = Vec::with_capacity(f * cfg.frame_len);
    for i in 0..f {
        let frame = &samples[i * cfg.hop..i * cfg.hop + cfg.frame_len];
        data.extend(frame.iter().zip(&w).map(|(x, w)| x * w));
    }
    Ok(Tensor::matrix(f, cfg.frame_len, data).expect("sized above"))
}

/// Triangular filters with unit peaks, on the FFT-bin grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Tensor,
    /// `n_filters + 2` FFT bins; filter `f` rises over `edges[f]..edges[f+1]`
    /// and falls over `edges[f+1]..edges[f+2]`.
    pub edges: Vec<usize>,
    pub edge_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MfccConfig) -> Result<Self, AudioError> {
        cfg.validate()?;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let n_edges = cfg.n_filters + 2;
        let edge_hz: Vec<f64> = (0..n_edges)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_edges - 1) as f64))
            .collect();
        let edges: Vec<usize> = edge_hz
            .iter()
            .map(|hz| {
                (((cfg.fft_size + 1) as f64 * hz / cfg.sample_rate as f64).floor() as usize)
                    .min(cfg.fft_size / 2)
            })
            .collect();
        let bins = cfg.num_bins();
        let mut weights = Tensor::zeros(&[cfg.n_filters, bins]);
        for f in 0..cfg.n_filters {
            let (l, c, r) = (edges[f], edges[f + 1], edges[f + 2]);
            let row = weights.row_mut(f);
            for (k, w) in row.iter_mut().enumerate().take(r + 1).skip(l) {
                *w = if k < c {
                    (k - l) as f64 / (c - l) as f64
                } else if k == c {
                    1.0
                } else {
                    (r - k) as f64 / (r - c) as f64
                };
            }
        }
        Ok(Self {
            weights,
            edges,
            edge_hz,
        })
    }

    pub fn center_hz(&self, f: usize) -> f64 {
        self.edge_hz[f + 1]
    }

    pub fn center_bin(&self, f: usize) -> usize {
        self.edges[f + 1]
    }

    /// Closed bin range outside of which the filter is zero.
    pub fn support(&self, f: usize) -> (usize, usize) {
        (self.edges[f], self.edges[f + 2])
    }

    pub fn energies(&self, power: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|f| {
                self.weights
                    .row(f)
                    .iter()
                    .zip(power)
                    .map(|(w, p)| w * p)
                    .sum()
            })
            .collect()
    }
}

/// Orthonormal DCT-II rows `0..n_out` over `n_in` inputs.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Tensor {
    let n = n_in as f64;
    let mut m = Tensor::zeros(&[n_out, n_in]);
    for k in 0..n_out {
        let s = if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        };
        for (i, v) in m.row_mut(k).iter_mut().enumerate() {
            *v = s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos();
        }
    }
    m
}

/// `F x n_coeffs` cepstra, one row per frame.
pub fn mfcc(audio: &PcmAudio, cfg: &MfccConfig) -> Result<Tensor, AudioError> {
    if audio.sample_rate != cfg.sample_rate {
        return Err(AudioError::Unsupported {
            field: "sample rate",
            value: audio.sample_rate,
        });
    }
    let frames = frame_and_window(&audio.samples, cfg)?;
    let bank = MelFilterbank::new(cfg)?;
    let dct = dct_matrix(cfg.n_coeffs, cfg.n_filters);
    let rows: Vec<Vec<f64>> = (0..frames.rows())
        .into_par_iter()
        .map(|i| {
            let power = power_spectrum(frames.row(i), cfg.fft_size)?;
            let logs: Vec<f64> = bank
                .energies(&power)
                .into_iter()
                .map(|e| e.max(cfg.log_floor).ln())
                .collect();
            Ok((0..cfg.n_coeffs)
                .map(|k| dct.row(k).iter().zip(&logs).map(|(a, b)| a * b).sum())
                .collect())
        })
        .collect::<Result<_, AudioError>>()?;
    Ok(Tensor::from_rows(&rows).expect("uniform rows"))
}
