//! With a latent-independent decoder and a rank-one speech dictionary that
//! reproduces its output, the baseline and the proposed model describe the
//! same speech variances, so their Wiener filters must coincide.

use mcvae_core::baseline::{baseline_wiener, BaselineParams, SpeechDictionary};
use mcvae_core::linalg::{hermitize, HermitianMatrix, SquareMatrix};
use mcvae_core::mcem::LatentChain;
use mcvae_core::model::{Dims, UnsupervisedParams};
use mcvae_core::nn::VaeModel;
use mcvae_core::reconstruct::wiener_from_chain;
use mcvae_core::stft::MultichannelStft;
use mcvae_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> HermitianMatrix {
    let e: Vec<Complex64> = (0..d * d)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let a = SquareMatrix::from_entries(d, &e).unwrap();
    hermitize(&(&a * &a.adjoint())).combine(1.0, &HermitianMatrix::identity(d), 0.2)
}

#[test]
fn rank_one_baseline_matches_constant_decoder() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dims = Dims {
        channels: 2,
        bins: 7,
        frames: 6,
        noise_rank: 3,
    };
    let latent = 2;

    let mut model = VaeModel::zeros(latent, dims.bins);
    for b in &mut model.decoder.layers[0].bias {
        *b = rng.random_range(-2.0f32..2.0);
    }
    let sigma2 = model.decoder_forward(&[0.0; 2]).unwrap();

    let mut params = UnsupervisedParams::init(dims, &mut rng);
    for f in 0..dims.bins {
        params.spatial.r_s[f] = random_pd(&mut rng, 2);
        params.spatial.r_b[f] = random_pd(&mut rng, 2);
    }
    params.g = (0..dims.frames)
        .map(|_| rng.random_range(0.2..3.0))
        .collect();

    let total: f64 = sigma2.iter().sum();
    let dict =
        SpeechDictionary::new(dims.bins, 1, sigma2.iter().map(|v| v / total).collect()).unwrap();
    let base = BaselineParams {
        h_s: params.g.iter().map(|g| g * total).collect(),
        spatial: params.spatial.clone(),
    };

    let mut x = MultichannelStft::zeros(2, dims.bins, dims.frames, 0);
    for f in 0..dims.bins {
        for n in 0..dims.frames {
            for v in x.bin_mut(f, n) {
                *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
    }
    let latents: Vec<f64> = (0..dims.frames * latent)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let chain = LatentChain::pinned(dims.frames, latent, latents, 3).unwrap();

    let proposed = wiener_from_chain(&x, &params, &model, &chain).unwrap();
    let baseline = baseline_wiener(&x, &dict, &base).unwrap();
    for (a, b) in proposed.speech.data().iter().zip(baseline.speech.data()) {
        assert!((a - b).norm() < 1e-12, "{a} vs {b}");
    }
    for (a, b) in proposed.noise.data().iter().zip(baseline.noise.data()) {
        assert!((a - b).norm() < 1e-12);
    }
}
