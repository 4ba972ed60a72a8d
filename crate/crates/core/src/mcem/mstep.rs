//! Majorization-minimization M-step.
//!
//! Each sub-update minimizes the tight upper bound of the cost at the current
//! parameters, so the cost evaluated on a fixed sample set never increases.
//! The auxiliary variables of the bound are eliminated analytically.

use crate::mcem::sampler::{check_compatible, LatentChain};
use crate::model::UnsupervisedParams;
use crate::moments::{self, JointBasis, Source};
use crate::nn::VaeModel;
use crate::stft::MultichannelStft;
use crate::{Error, Result};

/// Cost after each sub-update, in the order
/// `[start, w_b, h_b, g, R_s, R_b]`, the last also being the cost after
/// normalization.
pub type SubUpdateCosts = [f64; 6];

struct Decoded<'a> {
    values: &'a [f64],
    frames: usize,
    bins: usize,
}

impl Decoded<'_> {
    #[inline]
    fn at(&self, r: usize, f: usize, n: usize) -> f64 {
        self.values[(r * self.frames + n) * self.bins + f]
    }
}

fn require_samples(chain: &LatentChain) -> Result<()> {
    if chain.kept() == 0 {
        return Err(Error::Input("the chain holds no kept samples".into()));
    }
    Ok(())
}

/// `C(θ_u) = Σ_r Σ_fn [x^H Σ_x^{-1} x + ln det Σ_x]` over the kept samples.
pub fn cost(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
) -> Result<f64> {
    check_compatible(x, params, model)?;
    require_samples(chain)?;
    let values = chain.decode_variances(model)?;
    let dec = Decoded {
        values: &values,
        frames: x.frames(),
        bins: x.bins(),
    };
    let basis = JointBasis::new(x, &params.spatial.r_s, &params.spatial.r_b)?;
    let noise = params.spatial.noise_variances();
    let g = &params.g;
    Ok(moments::cost(
        &basis,
        chain.kept(),
        &|r, f, n| g[n] * dec.at(r, f, n),
        &noise,
    ))
}

/// Monte Carlo estimate of the EM auxiliary function, up to an additive
/// constant: `-C(θ_u) / R`.
pub fn q_tilde(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
) -> Result<f64> {
    Ok(-cost(x, params, model, chain)? / chain.kept() as f64)
}

/// One sweep of the block-coordinate updates `w_b, h_b, g, R_s, R_b`
/// followed by normalization.
pub fn m_step(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
) -> Result<UnsupervisedParams> {
    Ok(run_m_step(x, params, model, chain, false)?.0)
}

/// [`m_step`] that also reports the cost after every sub-update.
pub fn m_step_traced(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
) -> Result<(UnsupervisedParams, SubUpdateCosts)> {
    let (p, costs) = run_m_step(x, params, model, chain, true)?;
    Ok((p, costs.unwrap_or_default()))
}

fn run_m_step(
    x: &MultichannelStft,
    params: &UnsupervisedParams,
    model: &VaeModel,
    chain: &LatentChain,
    trace: bool,
) -> Result<(UnsupervisedParams, Option<SubUpdateCosts>)> {
    check_compatible(x, params, model)?;
    require_samples(chain)?;
    let samples = chain.kept();
    let rank = params.dims().noise_rank;
    let values = chain.decode_variances(model)?;
    let dec = Decoded {
        values: &values,
        frames: x.frames(),
        bins: x.bins(),
    };
    let mut p = params.clone();
    let mut basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
    let mut noise = p.spatial.noise_variances();
    let mut costs = [0.0; 6];

    macro_rules! record {
        ($slot:expr) => {
            if trace {
                let g = &p.g;
                costs[$slot] =
                    moments::cost(&basis, samples, &|r, f, n| g[n] * dec.at(r, f, n), &noise);
            }
        };
    }
    record!(0);

    let w_b = {
        let g = &p.g;
        moments::noise_dictionary_step(
            &basis,
            samples,
            &|r, f, n| g[n] * dec.at(r, f, n),
            &noise,
            &p.spatial.w_b,
            &p.spatial.h_b,
            rank,
        )
    };
    p.spatial.w_b = w_b;
    noise = p.spatial.noise_variances();
    record!(1);

    let h_b = {
        let g = &p.g;
        moments::activation_step(
            &basis,
            samples,
            &|r, f, n| g[n] * dec.at(r, f, n),
            &noise,
            Source::Noise,
            &p.spatial.w_b,
            &p.spatial.h_b,
            rank,
        )
    };
    p.spatial.h_b = h_b;
    noise = p.spatial.noise_variances();
    record!(2);

    p.g = moments::gain_step(&basis, samples, &|r, f, n| dec.at(r, f, n), &p.g, &noise);
    record!(3);

    let r_s = {
        let g = &p.g;
        moments::scm_step(
            &basis,
            samples,
            &|r, f, n| g[n] * dec.at(r, f, n),
            &noise,
            Source::Speech,
            &p.spatial.r_s,
        )?
    };
    p.spatial.r_s = r_s;
    basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
    record!(4);

    let r_b = {
        let g = &p.g;
        moments::scm_step(
            &basis,
            samples,
            &|r, f, n| g[n] * dec.at(r, f, n),
            &noise,
            Source::Noise,
            &p.spatial.r_b,
        )?
    };
    p.spatial.r_b = r_b;
    p.normalize();
    if trace {
        basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
        noise = p.spatial.noise_variances();
        record!(5);
    }
    Ok((p, trace.then_some(costs)))
}
