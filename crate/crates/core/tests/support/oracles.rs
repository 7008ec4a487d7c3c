//! Brute-force reference implementations used as test oracles. Each one is
//! written independently of the library code it checks.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Triple-loop product of row-major `m x k` and `k x n` matrices.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// O(n^2) DFT of a real frame zero-padded to `n`; returns (re, im).
pub fn dft(x: &[f64], n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            (re, im)
        })
        .collect()
}

/// Straight-line MFCC at the default settings: 400-sample Hamming frames,
/// hop 160, 512-point DFT, 26 triangular mel filters over 0..8000 Hz,
/// natural log with floor 1e-10, orthonormal DCT-II, 13 coefficients.
pub fn mfcc_reference(samples: &[f64]) -> Vec<Vec<f64>> {
    const SR: f64 = 16000.0;
    const N: usize = 512;
    const FL: usize = 400;
    const HOP: usize = 160;
    const NF: usize = 26;
    const NC: usize = 13;

    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).ln() / 10f64.ln();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(8000.0);
    let mut bins = [0usize; NF + 2];
    for (i, b) in bins.iter_mut().enumerate() {
        let hz = inv(top * i as f64 / (NF + 1) as f64);
        *b = ((((N + 1) as f64) * hz / SR).floor() as usize).min(N / 2);
    }

    let mut out = Vec::new();
    let mut start = 0;
    while start + FL <= samples.len() {
        let frame: Vec<f64> = (0..FL)
            .map(|k| {
                samples[start + k] * (0.54 - 0.46 * (2.0 * PI * k as f64 / (FL - 1) as f64).cos())
            })
            .collect();
        let spectrum = dft(&frame, N);
        let power: Vec<f64> = spectrum[..=N / 2]
            .iter()
            .map(|(re, im)| (re * re + im * im) / N as f64)
            .collect();

        let mut logs = [0.0f64; NF];
        for (f, l) in logs.iter_mut().enumerate() {
            let (lo, mid, hi) = (bins[f], bins[f + 1], bins[f + 2]);
            let mut e = 0.0;
            for (k, &p) in power.iter().enumerate() {
                let w = if k > lo && k < mid {
                    (k - lo) as f64 / (mid - lo) as f64
                } else if k == mid {
                    1.0
                } else if k > mid && k < hi {
                    (hi - k) as f64 / (hi - mid) as f64
                } else {
                    0.0
                };
                e += w * p;
            }
            *l = if e > 1e-10 { e.ln() } else { 1e-10f64.ln() };
        }

        let mut row = Vec::with_capacity(NC);
        for c in 0..NC {
            let norm = if c == 0 {
                (1.0 / NF as f64).sqrt()
            } else {
                (2.0 / NF as f64).sqrt()
            };
            let s: f64 = (0..NF)
                .map(|n| logs[n] * (PI * c as f64 * (n as f64 + 0.5) / NF as f64).cos())
                .sum();
            row.push(norm * s);
        }
        out.push(row);
        start += HOP;
    }
    out
}

/// Level by counting crossed thresholds: +1 for every `t` with `x >= t`,
/// -1 for every `t` with `x <= -t`.
fn level(x: f64, thresholds: &[f64]) -> i64 {
    thresholds
        .iter()
        .map(|&t| i64::from(x >= t) - i64::from(x <= -t))
        .sum()
}

pub fn acc_k(preds: &[f64], labels: &[f64], k: usize) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = preds
        .iter()
        .copied()
        .zip(labels.iter().copied())
        .filter(|&(_, l)| k != 2 || l != 0.0)
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let lvl = |x: f64| match k {
        7 => level(x, &[0.5, 1.5, 2.5]),
        5 => level(x, &[0.5, 1.5]),
        3 => level(x, &[0.1]),
        2 => i64::from(x > 0.0),
        _ => unreachable!(),
    };
    let hits = pairs.iter().filter(|&&(p, l)| lvl(p) == lvl(l)).count();
    Some(hits as f64 / pairs.len() as f64)
}

/// Support-weighted mean of per-class `2PR / (P + R)` from a confusion matrix.
pub fn f1_weighted(preds: &[usize], labels: &[usize], n_classes: usize) -> f64 {
    let mut cm = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        cm[l][p] += 1;
    }
    let mut total = 0.0;
    for c in 0..n_classes {
        let tp = cm[c][c] as f64;
        let predicted: usize = (0..n_classes).map(|r| cm[r][c]).sum();
        let actual: usize = cm[c].iter().sum();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp / predicted as f64
        };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        total += f1 * actual as f64;
    }
    total / labels.len() as f64
}

pub fn binary_f1(preds: &[f64], labels: &[f64]) -> Option<f64> {
    let mut p = Vec::new();
    let mut l = Vec::new();
    for (&a, &b) in preds.iter().zip(labels) {
        if b != 0.0 {
            p.push(usize::from(a > 0.0));
            l.push(usize::from(b > 0.0));
        }
    }
    if l.is_empty() {
        None
    } else {
        Some(f1_weighted(&p, &l, 2))
    }
}

pub fn mae(preds: &[f64], labels: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..preds.len() {
        s += (preds[i] - labels[i]).abs();
    }
    s / preds.len() as f64
}

/// Mean product of z-scores (population standard deviation).
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let sd = |v: &[f64], m: f64| (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt();
    let (sx, sy) = (sd(x, mx), sd(y, my));
    if sx == 0.0 || sy == 0.0 {
        return None;
    }
    let r = x
        .iter()
        .zip(y)
        .map(|(a, b)| ((a - mx) / sx) * ((b - my) / sy))
        .sum::<f64>()
        / n;
    Some(r.clamp(-1.0, 1.0))
}
