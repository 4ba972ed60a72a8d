use std::sync::Mutex;

use mcvae_core::fft::Fft;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// [`Fft`] backed by `rustfft`. Plans are cached by the planner, so one
/// instance can serve transforms of any length.
pub struct RustFft {
    planner: Mutex<FftPlanner<f64>>,
}

impl RustFft {
    pub fn new() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
        }
    }

    fn plan(&self, len: usize, inverse: bool) -> std::sync::Arc<dyn rustfft::Fft<f64>> {
        let mut planner = self.planner.lock().unwrap_or_else(|p| p.into_inner());
        if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        }
    }
}

impl Default for RustFft {
    fn default() -> Self {
        Self::new()
    }
}

impl Fft for RustFft {
    fn forward(&self, buf: &mut [Complex64]) {
        if !buf.is_empty() {
            self.plan(buf.len(), false).process(buf);
        }
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        if !buf.is_empty() {
            self.plan(buf.len(), true).process(buf);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcvae_core::fft::NaiveDft;

    #[test]
    fn agrees_with_direct_dft() {
        for len in [1, 2, 7, 16, 45] {
            let x: Vec<Complex64> = (0..len)
                .map(|t| Complex64::new((t as f64 * 0.37).sin(), (t as f64 * 1.3).cos()))
                .collect();
            let (mut a, mut b) = (x.clone(), x.clone());
            RustFft::new().forward(&mut a);
            NaiveDft.forward(&mut b);
            let err = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (p - q).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9 * len as f64, "{len}: {err}");
            RustFft::new().inverse(&mut a);
            let err = a
                .iter()
                .zip(&x)
                .map(|(p, q)| (p / len as f64 - q).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }
}
