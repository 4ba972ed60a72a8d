//! Random instances shared by the unit tests.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::testutil::random_pd;
use crate::model::{Dims, UnsupervisedParams};
use crate::nn::{Activation, Layer, Network, VaeModel};
use crate::stft::MultichannelStft;

fn random_layer<R: Rng>(rng: &mut R, i: usize, o: usize, act: Activation, scale: f64) -> Layer {
    let mut l = Layer::zeros(i, o, act);
    for w in &mut l.weight {
        *w = (scale * rng.sample::<f64, _>(StandardNormal)) as f32;
    }
    for b in &mut l.bias {
        *b = (0.1 * rng.sample::<f64, _>(StandardNormal)) as f32;
    }
    l
}

/// Small two-layer decoder and encoder with Gaussian weights.
pub fn random_model<R: Rng>(rng: &mut R, latent: usize, bins: usize) -> VaeModel {
    let hidden = 6;
    let decoder = Network {
        layers: alloc::vec![
            random_layer(rng, latent, hidden, Activation::Relu, 0.8),
            random_layer(rng, hidden, bins, Activation::Identity, 0.5),
        ],
        standardization: None,
    };
    let encoder = Network {
        layers: alloc::vec![
            random_layer(rng, bins, hidden, Activation::Relu, 0.3),
            random_layer(rng, hidden, 2 * latent, Activation::Identity, 0.3),
        ],
        standardization: None,
    };
    VaeModel::new(latent, bins, decoder, encoder).unwrap()
}

pub fn random_stft<R: Rng>(
    rng: &mut R,
    channels: usize,
    bins: usize,
    frames: usize,
) -> MultichannelStft {
    let mut x = MultichannelStft::zeros(channels, bins, frames, 0);
    for f in 0..bins {
        for n in 0..frames {
            for v in x.bin_mut(f, n) {
                *v = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
    }
    x
}

/// Random NMF factors and gains, random PD SCMs.
pub fn random_params<R: Rng>(rng: &mut R, dims: Dims) -> UnsupervisedParams {
    let mut p = UnsupervisedParams::init(dims, rng);
    for r in p.spatial.r_s.iter_mut().chain(p.spatial.r_b.iter_mut()) {
        *r = random_pd(rng, dims.channels, 0.3);
    }
    p.g = (0..dims.frames)
        .map(|_| rng.random_range(0.2..2.0))
        .collect();
    p
}

/// `N × L` standard normal latents.
pub fn random_latents<R: Rng>(rng: &mut R, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}
