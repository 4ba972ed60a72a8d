//! Synthetic stereo mixtures: free-field spatialization, SNR mixing, and
//! forward sampling of the generative model.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::fft::Fft;
use crate::linalg::HermitianMatrix;
use crate::model::{SpatialNoise, UnsupervisedParams};
use crate::nn::{Scratch, VaeModel};
use crate::rng::{epoch, frame_rng};
use crate::stft::MultichannelStft;
use crate::{Error, Result};

/// Zero samples appended before the circular fractional delay.
pub const DELAY_PADDING: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    /// Direction of arrival in degrees, within `[-90, 90]`.
    pub doa_deg: f64,
    /// Microphone spacing in meters.
    pub mic_spacing: f64,
    /// Speed of sound in m/s.
    pub sound_speed: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            doa_deg: 0.0,
            mic_spacing: 0.05,
            sound_speed: 343.0,
            snr_db: 0.0,
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.doa_deg.abs() <= 90.0) {
            return Err(Error::Config(
                "direction of arrival must lie in [-90, 90] degrees".into(),
            ));
        }
        if !(self.mic_spacing > 0.0) || !self.mic_spacing.is_finite() {
            return Err(Error::Config("microphone spacing must be positive".into()));
        }
        if !(self.sound_speed > 0.0) || !self.sound_speed.is_finite() {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        Ok(())
    }

    /// Inter-microphone delay `d sin(θ) / c` in seconds.
    pub fn delay_seconds(&self) -> f64 {
        self.mic_spacing * libm::sin(self.doa_deg.to_radians()) / self.sound_speed
    }

    /// Uniform direction of arrival in `[-90, 90]` drawn from `seed`.
    pub fn random_doa(seed: u64) -> f64 {
        let mut rng = frame_rng(seed, epoch::GENERATE, usize::MAX);
        rng.random_range(-90.0..=90.0)
    }
}

/// Circularly delays `signal` by `delay` samples (fractional allowed) with a
/// linear phase ramp. The transform length is forced odd so that there is no
/// Nyquist bin and the output stays exactly real.
pub fn circular_delay<T: Fft + ?Sized>(signal: &[f64], delay: f64, fft: &T) -> Vec<f64> {
    let mut len = signal.len();
    if len == 0 {
        return Vec::new();
    }
    if len.is_multiple_of(2) {
        len += 1;
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    fft.forward(&mut buf);
    let half = len / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        let freq = if k <= half {
            k as f64
        } else {
            k as f64 - len as f64
        };
        let phase = -2.0 * core::f64::consts::PI * freq * delay / len as f64;
        *v *= Complex64::new(libm::cos(phase), libm::sin(phase));
    }
    fft.inverse(&mut buf);
    let scale = 1.0 / len as f64;
    buf.iter().map(|v| v.re * scale).collect()
}

/// Two-microphone free-field image of a mono source. Channel 0 is the input,
/// channel 1 the input delayed by [`MixSpec::delay_seconds`]. Both channels
/// are zero-padded by [`DELAY_PADDING`] samples (plus one if needed to reach
/// an odd length) so the circular delay does not wrap signal content.
pub fn spatialize<T: Fft + ?Sized>(
    mono: &[f64],
    spec: &MixSpec,
    sample_rate: u32,
    fft: &T,
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    if mono.is_empty() {
        return Err(Error::Input("empty source signal".into()));
    }
    let mut padded = mono.to_vec();
    padded.resize(mono.len() + DELAY_PADDING, 0.0);
    if padded.len().is_multiple_of(2) {
        padded.push(0.0);
    }
    let delayed = circular_delay(&padded, spec.delay_seconds() * sample_rate as f64, fft);
    Ok(vec![padded, delayed])
}

fn power(signal: &[Vec<f64>]) -> f64 {
    signal.iter().flatten().map(|v| v * v).sum()
}

/// A mixture with its exact additive components.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Vec<Vec<f64>>,
    pub speech: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
}

/// Scales `noise` (cropped or looped to the speech length) so the total
/// multichannel speech-to-noise power ratio is `snr_db`. `snr_db = +∞` yields
/// a noise-free mixture.
pub fn mix(speech: &[Vec<f64>], noise: &[Vec<f64>], snr_db: f64) -> Result<Mixture> {
    if speech.is_empty() || speech.len() != noise.len() {
        return Err(Error::Input(
            "speech and noise must have the same, non-zero channel count".into(),
        ));
    }
    let len = speech[0].len();
    if len == 0 || speech.iter().any(|c| c.len() != len) {
        return Err(Error::Input(
            "speech channels must be non-empty and of equal length".into(),
        ));
    }
    let nlen = noise[0].len();
    if nlen == 0 || noise.iter().any(|c| c.len() != nlen) {
        return Err(Error::Input(
            "noise channels must be non-empty and of equal length".into(),
        ));
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR is not a number".into()));
    }
    let fitted: Vec<Vec<f64>> = noise
        .iter()
        .map(|c| (0..len).map(|t| c[t % nlen]).collect())
        .collect();
    let ps = power(speech);
    let pn = power(&fitted);
    if !(ps > 0.0) {
        return Err(Error::Input("speech signal is silent".into()));
    }
    if !(pn > 0.0) {
        return Err(Error::Input("noise signal is silent".into()));
    }
    let gain = if snr_db == f64::INFINITY {
        0.0
    } else {
        libm::sqrt(ps / (pn * libm::pow(10.0, snr_db / 10.0)))
    };
    let scaled: Vec<Vec<f64>> = fitted
        .iter()
        .map(|c| c.iter().map(|v| v * gain).collect())
        .collect();
    let mixture = speech
        .iter()
        .zip(&scaled)
        .map(|(s, b)| s.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    Ok(Mixture {
        mixture,
        speech: speech.to_vec(),
        noise: scaled,
    })
}

/// STFT-domain draw from the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMixture {
    /// Gain-scaled speech image `√g_n s_fn`.
    pub speech: MultichannelStft,
    pub noise: MultichannelStft,
    pub mixture: MultichannelStft,
    /// Latent vectors `N × L` (empty when variances were given directly).
    pub latents: Vec<f64>,
}

/// Draws `y ~ N_c(0, v R)` with `r_sqrt` the PSD square root of `R`.
fn draw_image<R: Rng>(rng: &mut R, r_sqrt: &HermitianMatrix, v: f64, out: &mut [Complex64]) {
    let i_ch = out.len();
    let std = libm::sqrt(0.5 * v.max(0.0));
    let e: Vec<Complex64> = (0..i_ch)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * std, im * std)
        })
        .collect();
    let y = r_sqrt.as_matrix().mul_vec(&e);
    out.copy_from_slice(&y);
}

/// Samples speech and noise images given the speech variances (`F × N`,
/// before the gain), the noise NMF and the SCMs in `params`.
pub fn generate_from_variances(
    speech_var: &[f64],
    params: &UnsupervisedParams,
    signal_len: usize,
    seed: u64,
) -> Result<GeneratedMixture> {
    let d = params.dims();
    params.validate_against(d.channels, d.bins, d.frames)?;
    if speech_var.len() != d.bins * d.frames {
        return Err(Error::Dimension("speech variances must be F x N".into()));
    }
    let spatial: &SpatialNoise = &params.spatial;
    let rs_sqrt: Vec<HermitianMatrix> = spatial.r_s.iter().map(|r| r.psd_sqrt()).collect();
    let rb_sqrt: Vec<HermitianMatrix> = spatial.r_b.iter().map(|r| r.psd_sqrt()).collect();
    let mut speech = MultichannelStft::zeros(d.channels, d.bins, d.frames, signal_len);
    let mut noise = speech.clone();
    for n in 0..d.frames {
        let mut rng = frame_rng(seed, epoch::GENERATE, n);
        let gain = params.g[n];
        for f in 0..d.bins {
            draw_image(
                &mut rng,
                &rs_sqrt[f],
                gain * speech_var[f * d.frames + n],
                speech.bin_mut(f, n),
            );
            draw_image(
                &mut rng,
                &rb_sqrt[f],
                spatial.noise_variance(f, n),
                noise.bin_mut(f, n),
            );
        }
    }
    let mixture = speech.combine(1.0, &noise, 1.0)?;
    Ok(GeneratedMixture {
        speech,
        noise,
        mixture,
        latents: Vec::new(),
    })
}

/// Draws `z_n ~ N(0, I)`, decodes `σ²(z_n)` and samples the images.
pub fn generate_from_model(
    model: &VaeModel,
    params: &UnsupervisedParams,
    signal_len: usize,
    seed: u64,
) -> Result<GeneratedMixture> {
    let d = params.dims();
    if model.spectrum_dim != d.bins {
        return Err(Error::Dimension(alloc::format!(
            "decoder outputs {} bins, parameters have {}",
            model.spectrum_dim,
            d.bins
        )));
    }
    let l = model.latent_dim;
    let mut latents = vec![0.0; d.frames * l];
    let mut var = vec![0.0; d.bins * d.frames];
    let mut scratch = Scratch::default();
    let mut column = vec![0.0; d.bins];
    for n in 0..d.frames {
        let mut rng = frame_rng(seed, epoch::GENERATE, usize::MAX - 1 - n);
        let z = &mut latents[n * l..(n + 1) * l];
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        model.decode_into(z, &mut scratch, &mut column)?;
        for (f, &v) in column.iter().enumerate() {
            var[f * d.frames + n] = v;
        }
    }
    let mut out = generate_from_variances(&var, params, signal_len, seed)?;
    out.latents = latents;
    Ok(out)
}
