//! Synthetic data shared by the integration tests: a small random decoder
//! used as the ground-truth speech model, and stereo mixtures drawn from it.

#![allow(dead_code)]

use mcvae::RustFft;
use mcvae_core::model::{Dims, UnsupervisedParams};
use mcvae_core::nn::{Activation, Layer, Network, VaeModel};
use mcvae_core::simulate::{self, MixSpec, Mixture};
use mcvae_core::stft::{self, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const LATENT: usize = 8;
pub const HIDDEN: usize = 64;
pub const SAMPLE_RATE: u32 = 16_000;

/// 16 ms sine window, 75 % overlap: `F = 129`.
pub fn stft_config() -> StftConfig {
    StftConfig::with_window(SAMPLE_RATE, 256)
}

fn gaussian_layer(rng: &mut ChaCha8Rng, i: usize, o: usize, act: Activation, std: f64) -> Layer {
    let mut l = Layer::zeros(i, o, act);
    for w in &mut l.weight {
        *w = (std * rng.sample::<f64, _>(StandardNormal)) as f32;
    }
    l
}

/// Number of cosine shapes spanning each output column of the decoder.
const ENVELOPE_ORDER: usize = 10;

/// Random ReLU decoder with spectrally smooth output: every hidden unit adds
/// a random low-order cosine series to the log-variance, on top of a downward
/// tilt. The encoder is zero, so chains start from the prior mean.
pub fn random_decoder(seed: u64, bins: usize) -> VaeModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = gaussian_layer(&mut rng, LATENT, HIDDEN, Activation::Relu, 0.5);
    let mut out = Layer::zeros(HIDDEN, bins, Activation::Identity);
    for j in 0..HIDDEN {
        let coef: Vec<f64> = (1..=ENVELOPE_ORDER)
            .map(|q| 0.15 * rng.sample::<f64, _>(StandardNormal) / (q as f64).sqrt())
            .collect();
        for f in 0..bins {
            let phase = std::f64::consts::PI * f as f64 / bins as f64;
            let v: f64 = coef
                .iter()
                .enumerate()
                .map(|(q, a)| a * (phase * (q + 1) as f64).cos())
                .sum();
            out.weight[f * HIDDEN + j] = v as f32;
        }
    }
    for (f, b) in out.bias.iter_mut().enumerate() {
        *b = (-3.0 * f as f64 / bins as f64) as f32;
    }
    let zero = VaeModel::zeros(LATENT, bins);
    VaeModel::new(
        LATENT,
        bins,
        Network {
            layers: vec![hidden, out],
            standardization: None,
        },
        zero.encoder,
    )
    .expect("valid decoder")
}

pub struct SyntheticItem {
    pub mixture: Mixture,
    pub speech_doa: f64,
    pub noise_doa: f64,
}

/// Mono speech and noise waveforms of `len` samples drawn from the model
/// (speech) and a rank-4 NMF (noise).
pub fn sources(model: &VaeModel, len: usize, seed: u64, fft: &RustFft) -> (Vec<f64>, Vec<f64>) {
    let cfg = stft_config();
    let dims = Dims {
        channels: 1,
        bins: cfg.bins(),
        frames: cfg.frames_for(len),
        noise_rank: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let params = UnsupervisedParams::init(dims, &mut rng);
    let draw = simulate::generate_from_model(model, &params, len, seed).expect("generation");
    let speech = stft::synthesize(&draw.speech, &cfg, fft).expect("synthesis");
    let noise = stft::synthesize(&draw.noise, &cfg, fft).expect("synthesis");
    (
        speech.into_iter().next().unwrap(),
        noise.into_iter().next().unwrap(),
    )
}

/// Stereo 0 dB mixture: speech and noise arrive from directions 70 degrees
/// apart.
pub fn item(model: &VaeModel, len: usize, index: u64, fft: &RustFft) -> SyntheticItem {
    let (s, b) = sources(model, len, 1000 + index, fft);
    let speech_doa = -60.0 + 12.0 * index as f64;
    let noise_doa = if speech_doa < 0.0 {
        speech_doa + 70.0
    } else {
        speech_doa - 70.0
    };
    let at = |doa| MixSpec {
        doa_deg: doa,
        ..MixSpec::default()
    };
    let speech = simulate::spatialize(&s, &at(speech_doa), SAMPLE_RATE, fft).unwrap();
    let noise = simulate::spatialize(&b, &at(noise_doa), SAMPLE_RATE, fft).unwrap();
    SyntheticItem {
        mixture: simulate::mix(&speech, &noise, 0.0).unwrap(),
        speech_doa,
        noise_doa,
    }
}

/// Clean training speech for dictionary learning, disjoint from the test
/// items.
pub fn training_speech(model: &VaeModel, len: usize, count: u64, fft: &RustFft) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| sources(model, len, 50_000 + k, fft).0)
        .collect()
}
