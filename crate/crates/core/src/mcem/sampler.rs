//! Random-walk Metropolis-Hastings over the per-frame latent vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::UnsupervisedParams;
use crate::moments::JointBasis;
use crate::nn::{Scratch, VaeModel};
use crate::par::map_range;
use crate::rng::{epoch, frame_rng};
use crate::stft::MultichannelStft;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Variance `ε²` of the Gaussian random-walk proposal.
    pub proposal_variance: f64,
}

impl SamplerConfig {
    /// Number of samples kept after burn-in.
    pub fn kept(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(alloc::format!(
                "burn-in ({}) must be smaller than the number of MH iterations ({})",
                self.burn_in,
                self.iterations
            )));
        }
        if !(self.proposal_variance > 0.0) || !self.proposal_variance.is_finite() {
            return Err(Error::Config("proposal variance must be positive".into()));
        }
        Ok(())
    }
}

/// Samples of `z_n` kept by the last sampling pass, plus the current chain
/// state used to start the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentChain {
    frames: usize,
    latent_dim: usize,
    kept: usize,
    /// `R × N × L`.
    samples: Vec<f64>,
    /// `N × L`.
    state: Vec<f64>,
}

impl LatentChain {
    /// A chain with no kept samples, positioned at `state` (`N × L`).
    pub fn from_state(frames: usize, latent_dim: usize, state: Vec<f64>) -> Result<Self> {
        if state.len() != frames * latent_dim {
            return Err(Error::Dimension("chain state must be N x L".into()));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("chain state must be finite".into()));
        }
        Ok(Self {
            frames,
            latent_dim,
            kept: 0,
            samples: Vec::new(),
            state,
        })
    }

    /// A chain whose every kept sample is `state` (useful to pin the latent
    /// variables, e.g. for deterministic comparisons).
    pub fn pinned(frames: usize, latent_dim: usize, state: Vec<f64>, kept: usize) -> Result<Self> {
        let mut chain = Self::from_state(frames, latent_dim, state)?;
        chain.samples = (0..kept)
            .flat_map(|_| chain.state.iter().copied())
            .collect();
        chain.kept = kept;
        Ok(chain)
    }

    /// A chain holding explicit samples (`R × N × L`); the current state is
    /// the last sample.
    pub fn from_samples(frames: usize, latent_dim: usize, samples: Vec<f64>) -> Result<Self> {
        let per = frames * latent_dim;
        if per == 0 || samples.is_empty() || !samples.len().is_multiple_of(per) {
            return Err(Error::Dimension(
                "samples must be R x N x L with R >= 1".into(),
            ));
        }
        let kept = samples.len() / per;
        let mut chain = Self::from_state(frames, latent_dim, samples[(kept - 1) * per..].to_vec())?;
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("samples must be finite".into()));
        }
        chain.samples = samples;
        chain.kept = kept;
        Ok(chain)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Number of kept samples `R`.
    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn sample(&self, r: usize, n: usize) -> &[f64] {
        let l = self.latent_dim;
        let o = (r * self.frames + n) * l;
        &self.samples[o..o + l]
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.state[n * self.latent_dim..(n + 1) * self.latent_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.state
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Decoder variances `σ²(z_n^(r))` of every kept sample, laid out `R × N × F`.
    pub fn decode_variances(&self, model: &VaeModel) -> Result<Vec<f64>> {
        let f = model.spectrum_dim;
        let per_frame: Vec<Result<Vec<f64>>> = map_range(self.kept * self.frames, |idx| {
            let (r, n) = (idx / self.frames, idx % self.frames);
            let mut out = vec![0.0; f];
            model.decode_into(self.sample(r, n), &mut Scratch::default(), &mut out)?;
            Ok(out)
        });
        let mut all = Vec::with_capacity(self.kept * self.frames * f);
        for v in per_frame {
            all.extend(v?);
        }
        Ok(all)
    }
}

/// Unnormalized log posterior `ln p(z_n) + Σ_f ln p(x_fn | z_n)` under fixed
/// parameters.
pub struct PosteriorTarget<'a> {
    model: &'a VaeModel,
    gain: &'a [f64],
    noise: Vec<f64>,
    basis: JointBasis,
}

/// Per-worker buffers for [`PosteriorTarget::log_density`].
#[derive(Debug, Default, Clone)]
pub struct TargetScratch {
    net: Scratch,
    variances: Vec<f64>,
    proposal: Vec<f64>,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(
        x: &MultichannelStft,
        params: &'a UnsupervisedParams,
        model: &'a VaeModel,
    ) -> Result<Self> {
        check_compatible(x, params, model)?;
        Ok(Self {
            model,
            gain: &params.g,
            noise: params.spatial.noise_variances(),
            basis: JointBasis::new(x, &params.spatial.r_s, &params.spatial.r_b)?,
        })
    }

    pub fn frames(&self) -> usize {
        self.basis.frames()
    }

    /// Log density of `z` for frame `n`; `-∞` if the decoder cannot evaluate
    /// it.
    pub fn log_density(&self, n: usize, z: &[f64], scratch: &mut TargetScratch) -> f64 {
        let bins = self.basis.bins();
        scratch.variances.resize(bins, 0.0);
        if self
            .model
            .decode_into(z, &mut scratch.net, &mut scratch.variances)
            .is_err()
        {
            return f64::NEG_INFINITY;
        }
        let l = z.len() as f64;
        let mut lp = -0.5 * z.iter().map(|v| v * v).sum::<f64>()
            - 0.5 * l * libm::log(2.0 * core::f64::consts::PI);
        let frames = self.basis.frames();
        let g = self.gain[n];
        for (f, &v) in scratch.variances.iter().enumerate() {
            lp -= self
                .basis
                .neg_log_likelihood(f, n, g * v, self.noise[f * frames + n]);
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// `ln α` for moving frame `n` from `current` to `proposal`.
    pub fn log_acceptance(&self, n: usize, current: &[f64], proposal: &[f64]) -> f64 {
        let mut scratch = TargetScratch::default();
        let old = self.log_density(n, current, &mut scratch);
        let new = self.log_density(n, proposal, &mut scratch);
        log_acceptance(old, new)
    }
}

pub(super) fn log_acceptance(current: f64, proposed: f64) -> f64 {
    if proposed == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if current == f64::NEG_INFINITY {
        return 0.0;
    }
    (proposed - current).min(0.0)
}

pub(crate) fn check_compatible(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
) -> Result<()> {
    if model.spectrum_dim != x.bins() {
        return Err(Error::Dimension(alloc::format!(
            "network spectrum dimension {} differs from the {} STFT bins",
            model.spectrum_dim,
            x.bins()
        )));
    }
    params.validate_against(x.channels(), x.bins(), x.frames())
}

/// One Metropolis-Hastings transition of frame `n`: propose
/// `z̃ ~ N(z, ε² I)` and accept when `ln u < ln α`. `log_density` holds the
/// target value at `z` and is updated on acceptance.
pub fn mh_step<R: Rng + ?Sized>(
    target: &PosteriorTarget<'_>,
    n: usize,
    z: &mut [f64],
    log_density: &mut f64,
    proposal_std: f64,
    rng: &mut R,
    scratch: &mut TargetScratch,
) -> bool {
    let mut proposal = core::mem::take(&mut scratch.proposal);
    proposal.clear();
    proposal.extend(z.iter().map(|&v| {
        let e: f64 = rng.sample(StandardNormal);
        v + proposal_std * e
    }));
    let candidate = target.log_density(n, &proposal, scratch);
    let log_alpha = log_acceptance(*log_density, candidate);
    let u: f64 = rng.random();
    let accept = libm::log(u) < log_alpha;
    if accept {
        z.copy_from_slice(&proposal);
        *log_density = candidate;
    }
    scratch.proposal = proposal;
    accept
}

/// Result of one sampling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPass {
    pub chain: LatentChain,
    pub acceptance_rate: f64,
}

/// Runs `cfg.iterations` MH transitions per frame starting from the chain's
/// current state and keeps the samples drawn after burn-in. Frame `n` uses its
/// own random stream derived from `(seed, pass, n)`.
pub fn sample_chain(
    target: &PosteriorTarget<'_>,
    chain: &LatentChain,
    cfg: &SamplerConfig,
    seed: u64,
    pass: u64,
) -> Result<SamplingPass> {
    cfg.validate()?;
    let frames = target.frames();
    if chain.frames != frames {
        return Err(Error::Dimension(
            "chain frame count differs from the data".into(),
        ));
    }
    let l = chain.latent_dim;
    let kept = cfg.kept();
    let std = libm::sqrt(cfg.proposal_variance);
    let per_frame = map_range(frames, |n| {
        let mut rng = frame_rng(seed, pass, n);
        let mut scratch = TargetScratch::default();
        let mut z = chain.state(n).to_vec();
        let mut lp = target.log_density(n, &z, &mut scratch);
        let mut samples = Vec::with_capacity(kept * l);
        let mut accepted = 0usize;
        for m in 0..cfg.iterations {
            if mh_step(target, n, &mut z, &mut lp, std, &mut rng, &mut scratch) {
                accepted += 1;
            }
            if m >= cfg.burn_in {
                samples.extend_from_slice(&z);
            }
        }
        (samples, z, accepted)
    });
    let mut samples = vec![0.0; kept * frames * l];
    let mut state = Vec::with_capacity(frames * l);
    let mut accepted = 0usize;
    for (n, (s, z, a)) in per_frame.into_iter().enumerate() {
        for r in 0..kept {
            let o = (r * frames + n) * l;
            samples[o..o + l].copy_from_slice(&s[r * l..(r + 1) * l]);
        }
        state.extend(z);
        accepted += a;
    }
    Ok(SamplingPass {
        chain: LatentChain {
            frames,
            latent_dim: l,
            kept,
            samples,
            state,
        },
        acceptance_rate: accepted as f64 / (frames * cfg.iterations).max(1) as f64,
    })
}

/// Monte Carlo E-step: samples the latent posterior under `params`.
pub fn e_step(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
    cfg: &SamplerConfig,
    seed: u64,
    pass: u64,
) -> Result<SamplingPass> {
    let target = PosteriorTarget::new(x, params, model)?;
    sample_chain(&target, chain, cfg, seed, pass)
}

/// Starts the chain from the encoder applied to the channel-averaged mixture
/// power: `z_n ~ N(μ̃, diag σ̃²)`.
pub fn init_chain(x: &MultichannelStft, model: &VaeModel, seed: u64) -> Result<LatentChain> {
    if model.spectrum_dim != x.bins() {
        return Err(Error::Dimension(alloc::format!(
            "network spectrum dimension {} differs from the {} STFT bins",
            model.spectrum_dim,
            x.bins()
        )));
    }
    let frames = x.frames();
    let per_frame: Vec<Result<Vec<f64>>> = map_range(frames, |n| {
        let (mu, var) = model.encoder_forward(&x.mean_power(n))?;
        let mut rng = frame_rng(seed, epoch::CHAIN_INIT, n);
        Ok(mu
            .iter()
            .zip(&var)
            .map(|(&m, &v)| {
                let e: f64 = rng.sample(StandardNormal);
                m + libm::sqrt(v) * e
            })
            .collect())
    });
    let mut state = Vec::with_capacity(frames * model.latent_dim);
    for z in per_frame {
        state.extend(z?);
    }
    LatentChain::from_state(frames, model.latent_dim, state)
}
