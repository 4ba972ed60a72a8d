//! Monte Carlo EM for the unsupervised parameters.
//!
//! Each iteration draws latent samples with Metropolis-Hastings under the
//! current parameters (E-step) and then applies one sweep of
//! majorization-minimization updates on those samples (M-step). The chain is
//! started from the encoder applied to the mixture, and every later E-step
//! resumes from the last state of the previous one.

mod mstep;
mod sampler;

pub use mstep::{cost, m_step, m_step_traced, q_tilde, SubUpdateCosts};
pub(crate) use sampler::check_compatible as sampler_check;
pub use sampler::{
    e_step, init_chain, mh_step, sample_chain, LatentChain, PosteriorTarget, SamplerConfig,
    SamplingPass, TargetScratch,
};

use crate::model::{Dims, UnsupervisedParams};
use crate::nn::VaeModel;
use crate::rng::{epoch, frame_rng};
use crate::stft::MultichannelStft;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McemConfig {
    pub em_iterations: usize,
    pub mh_iterations: usize,
    pub burn_in: usize,
    /// `ε²`.
    pub proposal_variance: f64,
    /// Noise NMF rank `K_b`.
    pub noise_rank: usize,
    pub seed: u64,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            em_iterations: 50,
            mh_iterations: 40,
            burn_in: 30,
            proposal_variance: 0.01,
            noise_rank: 10,
            seed: 0,
        }
    }
}

impl McemConfig {
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.mh_iterations,
            burn_in: self.burn_in,
            proposal_variance: self.proposal_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().validate()?;
        if self.noise_rank == 0 {
            return Err(Error::Config("noise rank must be at least 1".into()));
        }
        Ok(())
    }
}

/// Progress of one EM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `C(θ_u)` after the M-step, on that iteration's samples.
    pub cost: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McemOutcome {
    pub params: UnsupervisedParams,
    pub chain: LatentChain,
    pub history: alloc::vec::Vec<IterationRecord>,
}

/// Initial parameters for `x`: random noise NMF, identity SCMs, unit gains.
pub fn initial_params(x: &MultichannelStft, noise_rank: usize, seed: u64) -> UnsupervisedParams {
    let dims = Dims {
        channels: x.channels(),
        bins: x.bins(),
        frames: x.frames(),
        noise_rank,
    };
    UnsupervisedParams::init(dims, &mut frame_rng(seed, epoch::PARAM_INIT, 0))
}

/// Full MCEM run. `observer` is called after every iteration.
pub fn run(
    x: &MultichannelStft,
    model: &VaeModel,
    cfg: &McemConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<McemOutcome> {
    cfg.validate()?;
    let mut params = initial_params(x, cfg.noise_rank, cfg.seed);
    let mut chain = init_chain(x, model, cfg.seed)?;
    let sampler = cfg.sampler();
    let mut history = alloc::vec::Vec::with_capacity(cfg.em_iterations);
    for it in 0..cfg.em_iterations {
        let pass = e_step(x, &params, model, &chain, &sampler, cfg.seed, it as u64)?;
        chain = pass.chain;
        params = m_step(x, &params, model, &chain)?;
        let record = IterationRecord {
            iteration: it,
            cost: cost(x, &params, model, &chain)?,
            acceptance_rate: pass.acceptance_rate,
        };
        if !record.cost.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "cost became non-finite at iteration {it}"
            )));
        }
        observer(&record);
        history.push(record);
    }
    Ok(McemOutcome {
        params,
        chain,
        history,
    })
}

#[cfg(test)]
mod tests;
