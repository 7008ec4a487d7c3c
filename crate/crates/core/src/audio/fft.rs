use num_complex::Complex64;

use super::AudioError;

/// Iterative radix-2 decimation-in-time FFT, unnormalized forward transform.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<(), AudioError> {
    let n = buf.len();
    if !n.is_power_of_two() {
        return Err(AudioError::BadSize {
            fft_size: n,
            frame_len: n,
        });
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = if bits == 0 {
            0
        } else {
            i.reverse_bits() >> (usize::BITS - bits)
        };
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        // Twiddles computed directly, not by repeated multiplication, to keep error flat in n.
        let half = len / 2;
        let step = -2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
    Ok(())
}

/// Zero-pads `frame` to `fft_size` and returns `|X[k]|^2 / fft_size` for
/// `k = 0..=fft_size/2`.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>, AudioError> {
    if !fft_size.is_power_of_two() || fft_size < frame.len() {
        return Err(AudioError::BadSize {
            fft_size,
            frame_len: frame.len(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for (b, &x) in buf.iter_mut().zip(frame) {
        b.re = x;
    }
    fft_in_place(&mut buf)?;
    Ok(buf[..=fft_size / 2]
        .iter()
        .map(|c| c.norm_sqr() / fft_size as f64)
        .collect())
}
