//! Sine-window STFT with weighted overlap-add resynthesis.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fft::Fft;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    /// 64 ms sine window at 16 kHz with 75 % overlap (F = 513).
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_length: 1024,
            hop: 256,
            fft_size: 1024,
        }
    }
}

impl StftConfig {
    /// Same overlap ratio with a different window length.
    pub fn with_window(sample_rate: u32, window_length: usize) -> Self {
        Self {
            sample_rate,
            window_length,
            hop: window_length / 4,
            fft_size: window_length,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.hop == 0 {
            return Err(Error::Config(
                "window length and hop must be positive".into(),
            ));
        }
        if !self.window_length.is_multiple_of(self.hop) || self.window_length / self.hop < 2 {
            return Err(Error::Config(alloc::format!(
                "hop {} must divide window length {} at least twice",
                self.hop,
                self.window_length
            )));
        }
        if self.fft_size < self.window_length {
            return Err(Error::Config("fft size shorter than the window".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// `w[t] = sin(π (t + 0.5) / window_length)`.
    pub fn window(&self) -> Vec<f64> {
        let len = self.window_length as f64;
        (0..self.window_length)
            .map(|t| libm::sin(core::f64::consts::PI * (t as f64 + 0.5) / len))
            .collect()
    }

    /// `Σ_m w²[t + m·hop]`, constant in `t` for this window family
    /// (`window_length / (2·hop)`, i.e. 2 at 75 % overlap).
    pub fn overlap_sum(&self) -> f64 {
        let w = self.window();
        (0..self.window_length / self.hop)
            .map(|m| w[m * self.hop] * w[m * self.hop])
            .sum()
    }

    fn pad(&self) -> usize {
        self.window_length - self.hop
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        let core = len + 2 * self.pad();
        let extra = (core - self.window_length).div_ceil(self.hop);
        extra + 1
    }

    /// Inverse of [`frames_for`](Self::frames_for) for signals whose length
    /// is a multiple of the hop.
    pub fn len_for_frames(&self, frames: usize) -> usize {
        ((frames - 1) * self.hop + self.window_length).saturating_sub(2 * self.pad())
    }
}

/// Complex STFT of a multichannel signal, stored bin-major so that the
/// channel vector `x_fn` of a time-frequency point is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelStft {
    channels: usize,
    bins: usize,
    frames: usize,
    /// Number of waveform samples this spectrogram resynthesizes to.
    pub signal_len: usize,
    data: Vec<Complex64>,
}

impl MultichannelStft {
    pub fn zeros(channels: usize, bins: usize, frames: usize, signal_len: usize) -> Self {
        Self {
            channels,
            bins,
            frames,
            signal_len,
            data: vec![Complex64::new(0.0, 0.0); channels * bins * frames],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    fn offset(&self, f: usize, n: usize) -> usize {
        (f * self.frames + n) * self.channels
    }

    /// Channel vector `x_fn`.
    #[inline]
    pub fn bin(&self, f: usize, n: usize) -> &[Complex64] {
        let o = self.offset(f, n);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn bin_mut(&mut self, f: usize, n: usize) -> &mut [Complex64] {
        let o = self.offset(f, n);
        &mut self.data[o..o + self.channels]
    }

    pub fn get(&self, i: usize, f: usize, n: usize) -> Complex64 {
        self.data[self.offset(f, n) + i]
    }

    pub fn set(&mut self, i: usize, f: usize, n: usize, v: Complex64) {
        let o = self.offset(f, n) + i;
        self.data[o] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.bins == other.bins && self.frames == other.frames
    }

    /// `Σ_i |x_ifn|² / I` for every bin of frame `n`.
    pub fn mean_power(&self, n: usize) -> Vec<f64> {
        (0..self.bins)
            .map(|f| {
                self.bin(f, n).iter().map(|v| v.norm_sqr()).sum::<f64>() / self.channels as f64
            })
            .collect()
    }

    /// Elementwise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::Dimension("STFT shapes differ".into()));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            ..self.clone()
        })
    }

    /// Keeps only the channels listed in `keep`.
    pub fn select_channels(&self, keep: &[usize]) -> Self {
        let mut out = Self::zeros(keep.len(), self.bins, self.frames, self.signal_len);
        for f in 0..self.bins {
            for n in 0..self.frames {
                let src = self.bin(f, n);
                for (dst, &i) in out.bin_mut(f, n).iter_mut().zip(keep) {
                    *dst = src[i];
                }
            }
        }
        out
    }
}

/// Forward transform of every channel of `signal`.
///
/// The signal is zero-padded by `window_length - hop` samples on both sides
/// (and up to one extra hop at the end) so every original sample is covered by
/// the same number of frames.
pub fn analyze<T: Fft + ?Sized>(
    signal: &[Vec<f64>],
    cfg: &StftConfig,
    fft: &T,
) -> Result<MultichannelStft> {
    cfg.validate()?;
    let channels = signal.len();
    if channels == 0 {
        return Err(Error::Input("signal has no channels".into()));
    }
    let len = signal[0].len();
    if len == 0 {
        return Err(Error::Input("empty signal".into()));
    }
    if signal.iter().any(|c| c.len() != len) {
        return Err(Error::Input("channels have different lengths".into()));
    }
    if signal.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("signal contains non-finite samples".into()));
    }
    let frames = cfg.frames_for(len);
    let bins = cfg.bins();
    let pad = cfg.pad();
    let window = cfg.window();
    let mut out = MultichannelStft::zeros(channels, bins, frames, len);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for (i, chan) in signal.iter().enumerate() {
        for n in 0..frames {
            let start = (n * cfg.hop) as isize - pad as isize;
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (t, &w) in window.iter().enumerate() {
                let idx = start + t as isize;
                if idx >= 0 && (idx as usize) < len {
                    buf[t] = Complex64::new(w * chan[idx as usize], 0.0);
                }
            }
            fft.forward(&mut buf);
            for f in 0..bins {
                out.set(i, f, n, buf[f]);
            }
        }
    }
    Ok(out)
}

/// Weighted overlap-add inverse of [`analyze`].
pub fn synthesize<T: Fft + ?Sized>(
    spec: &MultichannelStft,
    cfg: &StftConfig,
    fft: &T,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if spec.bins() != cfg.bins() {
        return Err(Error::Dimension(alloc::format!(
            "spectrogram has {} bins, configuration expects {}",
            spec.bins(),
            cfg.bins()
        )));
    }
    let frames = spec.frames();
    if frames == 0 {
        return Ok(vec![Vec::new(); spec.channels()]);
    }
    let pad = cfg.pad();
    let padded_len = (frames - 1) * cfg.hop + cfg.window_length;
    if spec.signal_len + pad > padded_len {
        return Err(Error::Dimension(
            "signal length exceeds what the frames cover".into(),
        ));
    }
    let window = cfg.window();
    let norm = 1.0 / (cfg.overlap_sum() * cfg.fft_size as f64);
    let nfft = cfg.fft_size;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut out = Vec::with_capacity(spec.channels());
    for i in 0..spec.channels() {
        let mut acc = vec![0.0; padded_len];
        for n in 0..frames {
            for f in 0..cfg.bins() {
                buf[f] = spec.get(i, f, n);
            }
            // Hermitian extension; DC and Nyquist must be real for a real frame
            buf[0].im = 0.0;
            if nfft.is_multiple_of(2) {
                buf[nfft / 2].im = 0.0;
            }
            for f in cfg.bins()..nfft {
                buf[f] = buf[nfft - f].conj();
            }
            fft.inverse(&mut buf);
            let start = n * cfg.hop;
            for (t, &w) in window.iter().enumerate() {
                acc[start + t] += w * buf[t].re * norm;
            }
        }
        out.push(acc[pad..pad + spec.signal_len].to_vec());
    }
    Ok(out)
}
