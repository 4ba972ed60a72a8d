//! Supervised-NMF counterpart of the proposed model.
//!
//! The speech variance is `(W_s H_s)_fn` with a dictionary `W_s` learned
//! offline on clean speech; the noise model (NMF + SCM) is the same as in the
//! proposed model. There is no gain vector and no latent variable, so the
//! updates are the deterministic versions of the MCEM M-step with a single
//! "sample".

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::model::{Dims, SpatialNoise, NMF_FLOOR};
use crate::moments::{self, JointBasis, Source};
use crate::reconstruct::{self, EnhancementResult};
use crate::rng::{epoch, frame_rng};
use crate::stft::MultichannelStft;
use crate::{Error, Result};

/// Power floor applied to training spectra before the IS divergence.
pub const POWER_FLOOR: f64 = 1e-12;

/// Column-normalized speech dictionary `W_s` (`F × K_s`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechDictionary {
    pub bins: usize,
    pub rank: usize,
    pub w: Vec<f64>,
}

impl SpeechDictionary {
    pub fn new(bins: usize, rank: usize, w: Vec<f64>) -> Result<Self> {
        if bins == 0 || rank == 0 || w.len() != bins * rank {
            return Err(Error::Dimension(
                "dictionary must be F x K_s with F, K_s >= 1".into(),
            ));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input(
                "dictionary entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self { bins, rank, w })
    }
}

/// `d_IS(v; v̂) = v/v̂ - ln(v/v̂) - 1`.
pub fn is_divergence(v: f64, v_hat: f64) -> f64 {
    let q = v / v_hat;
    q - libm::log(q) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfTrainConfig {
    pub iterations: usize,
    /// Stop once the relative cost decrease of an iteration falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NmfTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Result of dictionary learning: the dictionary, the activations of the
/// training data and the IS cost before the first and after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfFit {
    pub dictionary: SpeechDictionary,
    pub activations: Vec<f64>,
    pub costs: Vec<f64>,
}

/// Learns `W_s` by Itakura-Saito NMF of `spectra`, given frame by frame
/// (`N × F`, row-major). The updates use the majorization-minimization
/// exponent 1/2, which makes the cost non-increasing.
pub fn pretrain_dictionary(
    spectra: &[f64],
    bins: usize,
    rank: usize,
    cfg: &NmfTrainConfig,
) -> Result<NmfFit> {
    if bins == 0 || spectra.is_empty() || !spectra.len().is_multiple_of(bins) {
        return Err(Error::Input("empty or ragged training spectra".into()));
    }
    if rank == 0 {
        return Err(Error::Config("dictionary rank must be at least 1".into()));
    }
    if spectra.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Input(
            "power spectra must be finite and non-negative".into(),
        ));
    }
    let frames = spectra.len() / bins;
    // V is F × N
    let mut v = vec![0.0; bins * frames];
    for n in 0..frames {
        for f in 0..bins {
            v[f * frames + n] = spectra[n * bins + f].max(POWER_FLOOR);
        }
    }
    let mut rng = frame_rng(cfg.seed, epoch::PARAM_INIT, 1);
    let mut w: Vec<f64> = (0..bins * rank)
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let mut h: Vec<f64> = (0..rank * frames)
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let mut approx = vec![0.0; bins * frames];
    let product = |w: &[f64], h: &[f64], out: &mut [f64]| {
        for f in 0..bins {
            for n in 0..frames {
                out[f * frames + n] = (0..rank).map(|k| w[f * rank + k] * h[k * frames + n]).sum();
            }
        }
    };
    let is_cost = |approx: &[f64]| {
        v.iter()
            .zip(approx)
            .map(|(&a, &b)| is_divergence(a, b))
            .sum::<f64>()
    };
    product(&w, &h, &mut approx);
    let mut costs = vec![is_cost(&approx)];
    for _ in 0..cfg.iterations {
        // H
        let mut num = vec![0.0; rank * frames];
        let mut den = vec![0.0; rank * frames];
        for f in 0..bins {
            for n in 0..frames {
                let a = approx[f * frames + n];
                let p = v[f * frames + n] / (a * a);
                let q = 1.0 / a;
                for k in 0..rank {
                    num[k * frames + n] += w[f * rank + k] * p;
                    den[k * frames + n] += w[f * rank + k] * q;
                }
            }
        }
        for (hv, (nu, de)) in h.iter_mut().zip(num.iter().zip(&den)) {
            *hv = (*hv * libm::sqrt(nu / de)).max(NMF_FLOOR);
        }
        product(&w, &h, &mut approx);
        // W
        for f in 0..bins {
            for k in 0..rank {
                let mut nu = 0.0;
                let mut de = 0.0;
                for n in 0..frames {
                    let a = approx[f * frames + n];
                    nu += h[k * frames + n] * v[f * frames + n] / (a * a);
                    de += h[k * frames + n] / a;
                }
                w[f * rank + k] = (w[f * rank + k] * libm::sqrt(nu / de)).max(NMF_FLOOR);
            }
        }
        normalize_columns(&mut w, &mut h, bins, rank, frames);
        product(&w, &h, &mut approx);
        let c = is_cost(&approx);
        let prev = *costs.last().unwrap_or(&c);
        costs.push(c);
        if !c.is_finite() {
            return Err(Error::Numerical("IS-NMF cost became non-finite".into()));
        }
        if prev - c <= cfg.tolerance * prev.abs() {
            break;
        }
    }
    Ok(NmfFit {
        dictionary: SpeechDictionary::new(bins, rank, w)?,
        activations: h,
        costs,
    })
}

fn normalize_columns(w: &mut [f64], h: &mut [f64], bins: usize, rank: usize, frames: usize) {
    for k in 0..rank {
        let s: f64 = (0..bins).map(|f| w[f * rank + k]).sum();
        if s > 0.0 {
            for f in 0..bins {
                w[f * rank + k] /= s;
            }
            for v in &mut h[k * frames..(k + 1) * frames] {
                *v *= s;
            }
        }
    }
}

/// Unsupervised parameters of the baseline: speech activations plus the
/// shared noise/SCM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    /// `K_s × N`, row-major.
    pub h_s: Vec<f64>,
    pub spatial: SpatialNoise,
}

impl BaselineParams {
    pub fn init(x: &MultichannelStft, speech_rank: usize, noise_rank: usize, seed: u64) -> Self {
        let dims = Dims {
            channels: x.channels(),
            bins: x.bins(),
            frames: x.frames(),
            noise_rank,
        };
        let mut rng = frame_rng(seed, epoch::PARAM_INIT, 0);
        let spatial = SpatialNoise::init(dims, &mut rng);
        let h_s = (0..speech_rank * dims.frames)
            .map(|_| rng.random_range(0.1..1.0))
            .collect();
        Self { h_s, spatial }
    }

    /// `(W_s H_s)` as an `F × N` matrix.
    pub fn speech_variances(&self, dict: &SpeechDictionary) -> Vec<f64> {
        let frames = self.spatial.dims.frames;
        let k = dict.rank;
        let mut out = vec![0.0; dict.bins * frames];
        for f in 0..dict.bins {
            for n in 0..frames {
                out[f * frames + n] = (0..k)
                    .map(|j| dict.w[f * k + j] * self.h_s[j * frames + n])
                    .sum();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub iterations: usize,
    pub noise_rank: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            noise_rank: 10,
            seed: 0,
        }
    }
}

/// Cost after each sub-update, in the order `[start, H_s, W_b, H_b, R_s, R_b]`.
pub type BaselineCosts = [f64; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub params: BaselineParams,
    pub result: EnhancementResult,
    pub history: Vec<BaselineCosts>,
}

fn check(x: &MultichannelStft, dict: &SpeechDictionary, params: &BaselineParams) -> Result<()> {
    if dict.bins != x.bins() {
        return Err(Error::Dimension(alloc::format!(
            "dictionary has {} bins, STFT has {}",
            dict.bins,
            x.bins()
        )));
    }
    if params.h_s.len() != dict.rank * x.frames() {
        return Err(Error::Dimension("H_s must be K_s x N".into()));
    }
    params
        .spatial
        .validate_against(x.channels(), x.bins(), x.frames())
}

/// `C = Σ_fn [x^H Σ^{-1} x + ln det Σ]` with `Σ = (W_s H_s) R_s + (W_b H_b) R_b`.
pub fn baseline_cost(
    x: &MultichannelStft,
    dict: &SpeechDictionary,
    params: &BaselineParams,
) -> Result<f64> {
    check(x, dict, params)?;
    let basis = JointBasis::new(x, &params.spatial.r_s, &params.spatial.r_b)?;
    let speech = params.speech_variances(dict);
    let frames = x.frames();
    let noise = params.spatial.noise_variances();
    Ok(moments::cost(
        &basis,
        1,
        &|_, f, n| speech[f * frames + n],
        &noise,
    ))
}

/// One sweep `H_s, W_b, H_b, R_s, R_b` + normalization, reporting the cost
/// after each sub-update.
pub fn baseline_step(
    x: &MultichannelStft,
    dict: &SpeechDictionary,
    params: &BaselineParams,
    trace: bool,
) -> Result<(BaselineParams, BaselineCosts)> {
    check(x, dict, params)?;
    let frames = x.frames();
    let noise_rank = params.spatial.dims.noise_rank;
    let mut p = params.clone();
    let mut basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
    let mut speech = p.speech_variances(dict);
    let mut noise = p.spatial.noise_variances();
    let mut costs = [0.0; 6];
    macro_rules! record {
        ($slot:expr) => {
            if trace {
                let s = &speech;
                costs[$slot] = moments::cost(&basis, 1, &|_, f, n| s[f * frames + n], &noise);
            }
        };
    }
    record!(0);
    p.h_s = {
        let s = &speech;
        moments::activation_step(
            &basis,
            1,
            &|_, f, n| s[f * frames + n],
            &noise,
            Source::Speech,
            &dict.w,
            &p.h_s,
            dict.rank,
        )
    };
    speech = p.speech_variances(dict);
    record!(1);
    p.spatial.w_b = {
        let s = &speech;
        moments::noise_dictionary_step(
            &basis,
            1,
            &|_, f, n| s[f * frames + n],
            &noise,
            &p.spatial.w_b,
            &p.spatial.h_b,
            noise_rank,
        )
    };
    noise = p.spatial.noise_variances();
    record!(2);
    p.spatial.h_b = {
        let s = &speech;
        moments::activation_step(
            &basis,
            1,
            &|_, f, n| s[f * frames + n],
            &noise,
            Source::Noise,
            &p.spatial.w_b,
            &p.spatial.h_b,
            noise_rank,
        )
    };
    noise = p.spatial.noise_variances();
    record!(3);
    p.spatial.r_s = {
        let s = &speech;
        moments::scm_step(
            &basis,
            1,
            &|_, f, n| s[f * frames + n],
            &noise,
            Source::Speech,
            &p.spatial.r_s,
        )?
    };
    basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
    record!(4);
    p.spatial.r_b = {
        let s = &speech;
        moments::scm_step(
            &basis,
            1,
            &|_, f, n| s[f * frames + n],
            &noise,
            Source::Noise,
            &p.spatial.r_b,
        )?
    };
    p.spatial.normalize();
    if trace {
        basis = JointBasis::new(x, &p.spatial.r_s, &p.spatial.r_b)?;
        noise = p.spatial.noise_variances();
        record!(5);
    }
    Ok((p, costs))
}

/// Wiener filtering with gain `(W_s H_s)_fn R_s,f Σ_x,fn^{-1}`.
pub fn baseline_wiener(
    x: &MultichannelStft,
    dict: &SpeechDictionary,
    params: &BaselineParams,
) -> Result<EnhancementResult> {
    check(x, dict, params)?;
    let speech = params.speech_variances(dict);
    let frames = x.frames();
    reconstruct::wiener_filter(x, &params.spatial, 1, &|_, f, n| speech[f * frames + n])
}

/// Runs `cfg.iterations` sweeps and reconstructs.
pub fn run_baseline(
    x: &MultichannelStft,
    dict: &SpeechDictionary,
    cfg: &BaselineConfig,
) -> Result<BaselineOutcome> {
    if cfg.noise_rank == 0 {
        return Err(Error::Config("noise rank must be at least 1".into()));
    }
    let mut params = BaselineParams::init(x, dict.rank, cfg.noise_rank, cfg.seed);
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (next, costs) = baseline_step(x, dict, &params, true)?;
        if !costs.iter().all(|c| c.is_finite()) {
            return Err(Error::Numerical(alloc::format!(
                "baseline cost became non-finite at iteration {it}"
            )));
        }
        params = next;
        history.push(costs);
    }
    let result = baseline_wiener(x, dict, &params)?;
    Ok(BaselineOutcome {
        params,
        result,
        history,
    })
}
