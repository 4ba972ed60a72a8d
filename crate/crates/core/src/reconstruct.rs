//! Posterior-mean estimation of the speech and noise images.
//!
//! For every kept latent sample the multichannel Wiener gain
//! `G = g_n σ_f²(z) R_s,f Σ_x,fn(z)^{-1}` is applied to the mixture and the
//! results are averaged. The noise estimate is `(I - Ḡ) x`, so the two
//! estimates add back to the mixture.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::SquareMatrix;
use crate::mcem::{sample_chain, LatentChain, PosteriorTarget, SamplerConfig};
use crate::model::{SpatialNoise, UnsupervisedParams};
use crate::moments::{JointBasis, SpeechCoef};
use crate::nn::VaeModel;
use crate::par::map_range;
use crate::rng::epoch;
use crate::stft::MultichannelStft;
use crate::{Error, Result};

/// Sampler used for reconstruction: 100 MH iterations, 50 burn-in, `ε² = 0.01`.
pub const RECONSTRUCTION_SAMPLER: SamplerConfig = SamplerConfig {
    iterations: 100,
    burn_in: 50,
    proposal_variance: 0.01,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementResult {
    /// Estimate of the gain-scaled speech image `√g_n s_fn`.
    pub speech: MultichannelStft,
    pub noise: MultichannelStft,
    /// Number of latent samples averaged per frame.
    pub samples: usize,
}

/// Single-sample speech gain `a R_s,f (a R_s,f + c R_b,f)^{-1}`.
pub fn speech_gain(
    spatial: &SpatialNoise,
    f: usize,
    speech_coef: f64,
    noise_coef: f64,
) -> Result<SquareMatrix> {
    let sigma = spatial.covariance(f, speech_coef, noise_coef);
    let inv = sigma.inverse(0.0)?;
    Ok(&spatial.r_s[f]
        .as_matrix()
        .scale(Complex64::new(speech_coef, 0.0))
        * inv.as_matrix())
}

/// Applies the sample-averaged Wiener gain, with `speech(r, f, n)` the
/// coefficient of `R_s,f` for sample `r`.
pub(crate) fn wiener_filter(
    x: &MultichannelStft,
    spatial: &SpatialNoise,
    samples: usize,
    speech: &SpeechCoef,
) -> Result<EnhancementResult> {
    if samples == 0 {
        return Err(Error::Input("no latent samples to average over".into()));
    }
    let basis = JointBasis::new(x, &spatial.r_s, &spatial.r_b)?;
    let noise = spatial.noise_variances();
    let frames = x.frames();
    let i_ch = x.channels();
    let inv_r = 1.0 / samples as f64;
    let rows: Vec<Vec<Complex64>> = map_range(x.bins(), |f| {
        let mut row = alloc::vec![Complex64::new(0.0, 0.0); frames * i_ch];
        for n in 0..frames {
            let acc = &mut row[n * i_ch..(n + 1) * i_ch];
            for r in 0..samples {
                let a = speech(r, f, n);
                let y = basis.whitened_observation(f, n, a, noise[f * frames + n]);
                let s = spatial.r_s[f].as_matrix().mul_vec(&y);
                for (dst, v) in acc.iter_mut().zip(&s) {
                    *dst += v * (a * inv_r);
                }
            }
        }
        row
    });
    let mut speech_stft = MultichannelStft::zeros(i_ch, x.bins(), frames, x.signal_len);
    let mut noise_stft = speech_stft.clone();
    for (f, row) in rows.iter().enumerate() {
        for n in 0..frames {
            let est = &row[n * i_ch..(n + 1) * i_ch];
            let mix = x.bin(f, n);
            speech_stft.bin_mut(f, n).copy_from_slice(est);
            for (dst, (m, s)) in noise_stft.bin_mut(f, n).iter_mut().zip(mix.iter().zip(est)) {
                *dst = m - s;
            }
        }
    }
    Ok(EnhancementResult {
        speech: speech_stft,
        noise: noise_stft,
        samples,
    })
}

/// Wiener estimate averaged over the samples already held by `chain`.
pub fn wiener_from_chain(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
) -> Result<EnhancementResult> {
    crate::mcem::sampler_check(x, params, model)?;
    let decoded = chain.decode_variances(model)?;
    let (frames, bins) = (x.frames(), x.bins());
    let g = &params.g;
    wiener_filter(x, &params.spatial, chain.kept(), &|r, f, n| {
        g[n] * decoded[(r * frames + n) * bins + f]
    })
}

/// Draws fresh latent samples (starting from the chain's current state) and
/// returns the sample-averaged Wiener estimates.
pub fn wiener_estimate(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<(EnhancementResult, f64)> {
    let target = PosteriorTarget::new(x, params, model)?;
    let pass = sample_chain(&target, chain, sampler, seed, epoch::RECONSTRUCTION)?;
    let result = wiener_from_chain(x, params, model, &pass.chain)?;
    Ok((result, pass.acceptance_rate))
}
