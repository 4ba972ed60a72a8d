//! FFT abstraction used by the STFT and the fractional-delay spatializer.

use num_complex::Complex64;

/// An unnormalized discrete Fourier transform of arbitrary length.
///
/// `forward` computes `X[k] = Σ_t x[t] e^{-2πjkt/n}` and `inverse` computes
/// `x[t] = Σ_k X[k] e^{+2πjkt/n}` (no `1/n` factor), both in place.
pub trait Fft {
    fn forward(&self, buf: &mut [Complex64]);
    fn inverse(&self, buf: &mut [Complex64]);
}

/// Direct O(n²) DFT. Slow, but dependency-free and exact enough to serve as a
/// reference for faster backends.
#[derive(Debug, Default, Clone, Copy)]
pub struct NaiveDft;

impl NaiveDft {
    fn transform(buf: &mut [Complex64], sign: f64) {
        let n = buf.len();
        if n == 0 {
            return;
        }
        let input: alloc::vec::Vec<Complex64> = buf.to_vec();
        let step = sign * 2.0 * core::f64::consts::PI / n as f64;
        for (k, out) in buf.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &v) in input.iter().enumerate() {
                // reduce k*t mod n to keep the phase argument small
                let phase = step * ((k * t) % n) as f64;
                acc += v * Complex64::new(libm::cos(phase), libm::sin(phase));
            }
            *out = acc;
        }
    }
}

impl Fft for NaiveDft {
    fn forward(&self, buf: &mut [Complex64]) {
        Self::transform(buf, -1.0)
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        Self::transform(buf, 1.0)
    }
}
