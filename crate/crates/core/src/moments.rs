//! Per-bin sufficient statistics of the mixture covariance via joint
//! diagonalization of the two spatial covariance matrices.
//!
//! With `T_f = U^H R_b,f^{-1/2}`, where `U Λ U^H` is the eigendecomposition of
//! `R_b,f^{-1/2} R_s,f R_b,f^{-1/2}`, we have `T R_b T^H = I` and
//! `T R_s T^H = Λ`, so for `Σ = a R_s + c R_b`:
//!
//! ```text
//! Σ^{-1}            = T^H D T,   D = diag(1 / (a λ_i + c))
//! ln det Σ          = ln det R_b + Σ_i ln(a λ_i + c)
//! x^H Σ^{-1} x      = Σ_i d_i |u_i|²,         u = T x
//! tr(Σ^{-1} R_b)    = Σ_i d_i,                tr(Σ^{-1} R_s) = Σ_i d_i λ_i
//! tr(M R_b)         = Σ_i d_i² |u_i|²,        tr(M R_s) = Σ_i d_i² λ_i |u_i|²
//! ```
//!
//! with `M = Σ^{-1} x x^H Σ^{-1}`. Every per-bin quantity the sampler and the
//! multiplicative updates need is therefore O(I) once `T` and `u` are known.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::{solve_riccati, HermitianMatrix, SquareMatrix};
use crate::model::NMF_FLOOR;
use crate::par::map_range;
use crate::stft::MultichannelStft;
use crate::{Error, Result};

/// Which source a statistic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Source {
    Speech,
    Noise,
}

pub(crate) struct JointBasis {
    channels: usize,
    frames: usize,
    transforms: Vec<SquareMatrix>,
    lambda: Vec<f64>,
    logdet_rb: Vec<f64>,
    projected: Vec<Complex64>,
}

/// Transform, eigenvalues, `ln det R_b` and projected observations of a bin.
type BinBasis = (SquareMatrix, Vec<f64>, f64, Vec<Complex64>);

impl JointBasis {
    pub(crate) fn new(
        x: &MultichannelStft,
        r_s: &[HermitianMatrix],
        r_b: &[HermitianMatrix],
    ) -> Result<Self> {
        let i_ch = x.channels();
        let bins = x.bins();
        let frames = x.frames();
        let per_bin: Vec<Result<BinBasis>> = map_range(bins, |f| {
            let (mu, q) = r_b[f].eigh();
            if !(mu[0] > 0.0) {
                return Err(Error::Numerical(alloc::format!(
                    "noise spatial covariance of bin {f} is not positive definite"
                )));
            }
            let inv_root = q_diag_qh(&q, mu.iter().map(|&m| 1.0 / libm::sqrt(m)));
            let whitened = r_s[f].sandwich(&inv_root);
            let (lam, u) = whitened.eigh();
            let t = &u.adjoint() * inv_root.as_matrix();
            let logdet: f64 = mu.iter().map(|&m| libm::log(m)).sum();
            let mut proj = Vec::with_capacity(frames * i_ch);
            for n in 0..frames {
                proj.extend(t.mul_vec(x.bin(f, n)));
            }
            Ok((
                t,
                lam.into_iter().map(|l| l.max(0.0)).collect(),
                logdet,
                proj,
            ))
        });
        let mut transforms = Vec::with_capacity(bins);
        let mut lambda = Vec::with_capacity(bins * i_ch);
        let mut logdet_rb = Vec::with_capacity(bins);
        let mut projected = Vec::with_capacity(bins * frames * i_ch);
        for item in per_bin {
            let (t, lam, ld, proj) = item?;
            transforms.push(t);
            lambda.extend(lam);
            logdet_rb.push(ld);
            projected.extend(proj);
        }
        Ok(Self {
            channels: i_ch,
            frames,
            transforms,
            lambda,
            logdet_rb,
            projected,
        })
    }

    pub(crate) fn bins(&self) -> usize {
        self.transforms.len()
    }

    pub(crate) fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub(crate) fn lambda(&self, f: usize) -> &[f64] {
        &self.lambda[f * self.channels..(f + 1) * self.channels]
    }

    #[inline]
    pub(crate) fn projected(&self, f: usize, n: usize) -> &[Complex64] {
        let o = (f * self.frames + n) * self.channels;
        &self.projected[o..o + self.channels]
    }

    /// `-ln N_c(x_fn; 0, a R_s + c R_b)`, constants included.
    #[inline]
    pub(crate) fn neg_log_likelihood(&self, f: usize, n: usize, a: f64, c: f64) -> f64 {
        let mut acc = self.logdet_rb[f] + self.channels as f64 * libm::log(core::f64::consts::PI);
        for (&l, u) in self.lambda(f).iter().zip(self.projected(f, n)) {
            let s = a * l + c;
            acc += libm::log(s) + u.norm_sqr() / s;
        }
        acc
    }

    /// `x^H Σ^{-1} x + ln det Σ`, the per-bin term of the M-step cost.
    #[inline]
    pub(crate) fn cost_term(&self, f: usize, n: usize, a: f64, c: f64) -> f64 {
        let mut acc = self.logdet_rb[f];
        for (&l, u) in self.lambda(f).iter().zip(self.projected(f, n)) {
            let s = a * l + c;
            acc += libm::log(s) + u.norm_sqr() / s;
        }
        acc
    }

    /// `(tr(M R), tr(Σ^{-1} R))` for the SCM `R` of `source`.
    #[inline]
    pub(crate) fn traces(&self, f: usize, n: usize, a: f64, c: f64, source: Source) -> (f64, f64) {
        let mut tm = 0.0;
        let mut ts = 0.0;
        for (&l, u) in self.lambda(f).iter().zip(self.projected(f, n)) {
            let d = 1.0 / (a * l + c);
            let w = match source {
                Source::Speech => l,
                Source::Noise => 1.0,
            };
            tm += w * d * d * u.norm_sqr();
            ts += w * d;
        }
        (tm, ts)
    }

    #[cfg(test)]
    /// `Σ_x^{-1}` rebuilt as a dense matrix.
    pub(crate) fn inverse(&self, f: usize, a: f64, c: f64) -> HermitianMatrix {
        let d: Vec<f64> = self.lambda(f).iter().map(|&l| 1.0 / (a * l + c)).collect();
        HermitianMatrix::from_real_diagonal(&d).congruence(&self.transforms[f])
    }

    /// `Σ_x^{-1} x`.
    pub(crate) fn whitened_observation(
        &self,
        f: usize,
        n: usize,
        a: f64,
        c: f64,
    ) -> Vec<Complex64> {
        let t = &self.transforms[f];
        let du: Vec<Complex64> = self
            .lambda(f)
            .iter()
            .zip(self.projected(f, n))
            .map(|(&l, &u)| u / (a * l + c))
            .collect();
        t.adjoint().mul_vec(&du).to_vec()
    }
}

/// `Q diag(d) Q^H`.
fn q_diag_qh(q: &SquareMatrix, d: impl Iterator<Item = f64>) -> HermitianMatrix {
    let diag: Vec<f64> = d.collect();
    HermitianMatrix::from_real_diagonal(&diag).congruence(&q.adjoint())
}

/// Speech coefficient `a_rfn` multiplying `R_s,f` for kept sample `r`.
pub(crate) type SpeechCoef<'a> = dyn Fn(usize, usize, usize) -> f64 + Sync + 'a;

/// `C = Σ_r Σ_fn [x^H Σ^{-1} x + ln det Σ]`.
pub(crate) fn cost(basis: &JointBasis, samples: usize, speech: &SpeechCoef, noise: &[f64]) -> f64 {
    let frames = basis.frames();
    let per_bin = map_range(basis.bins(), |f| {
        let mut acc = 0.0;
        for r in 0..samples {
            for n in 0..frames {
                acc += basis.cost_term(f, n, speech(r, f, n), noise[f * frames + n]);
            }
        }
        acc
    });
    per_bin.iter().sum()
}

fn multiplicative(value: f64, num: f64, den: f64) -> f64 {
    let ratio = if den > 0.0 { num / den } else { 1.0 };
    (value * libm::sqrt(ratio)).max(NMF_FLOOR)
}

/// Noise dictionary update: `w_fk ← w_fk [Σ_rn h_kn tr(M R_b) / Σ_rn h_kn tr(Σ^{-1} R_b)]^{1/2}`.
pub(crate) fn noise_dictionary_step(
    basis: &JointBasis,
    samples: usize,
    speech: &SpeechCoef,
    noise: &[f64],
    w_b: &[f64],
    h_b: &[f64],
    rank: usize,
) -> Vec<f64> {
    let frames = basis.frames();
    let rows = map_range(basis.bins(), |f| {
        let mut num = vec![0.0; rank];
        let mut den = vec![0.0; rank];
        for r in 0..samples {
            for n in 0..frames {
                let (tm, ts) =
                    basis.traces(f, n, speech(r, f, n), noise[f * frames + n], Source::Noise);
                for k in 0..rank {
                    let h = h_b[k * frames + n];
                    num[k] += h * tm;
                    den[k] += h * ts;
                }
            }
        }
        (0..rank)
            .map(|k| multiplicative(w_b[f * rank + k], num[k], den[k]))
            .collect::<Vec<f64>>()
    });
    rows.into_iter().flatten().collect()
}

/// Activation update for the NMF of `source`:
/// `h_kn ← h_kn [Σ_rf w_fk tr(M R) / Σ_rf w_fk tr(Σ^{-1} R)]^{1/2}`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn activation_step(
    basis: &JointBasis,
    samples: usize,
    speech: &SpeechCoef,
    noise: &[f64],
    source: Source,
    dict: &[f64],
    act: &[f64],
    rank: usize,
) -> Vec<f64> {
    let frames = basis.frames();
    let cols = map_range(frames, |n| {
        let mut num = vec![0.0; rank];
        let mut den = vec![0.0; rank];
        for r in 0..samples {
            for f in 0..basis.bins() {
                let (tm, ts) = basis.traces(f, n, speech(r, f, n), noise[f * frames + n], source);
                for k in 0..rank {
                    let w = dict[f * rank + k];
                    num[k] += w * tm;
                    den[k] += w * ts;
                }
            }
        }
        (0..rank)
            .map(|k| multiplicative(act[k * frames + n], num[k], den[k]))
            .collect::<Vec<f64>>()
    });
    let mut out = vec![0.0; rank * frames];
    for (n, col) in cols.into_iter().enumerate() {
        for (k, v) in col.into_iter().enumerate() {
            out[k * frames + n] = v;
        }
    }
    out
}

/// Gain update: `g_n ← g_n [Σ_rf σ² tr(M R_s) / Σ_rf σ² tr(Σ^{-1} R_s)]^{1/2}`,
/// where `decoded(r, f, n)` is `σ_f²(z_n^(r))`.
pub(crate) fn gain_step(
    basis: &JointBasis,
    samples: usize,
    decoded: &SpeechCoef,
    gain: &[f64],
    noise: &[f64],
) -> Vec<f64> {
    let frames = basis.frames();
    map_range(frames, |n| {
        let mut num = 0.0;
        let mut den = 0.0;
        for r in 0..samples {
            for f in 0..basis.bins() {
                let v = decoded(r, f, n);
                let (tm, ts) =
                    basis.traces(f, n, gain[n] * v, noise[f * frames + n], Source::Speech);
                num += v * tm;
                den += v * ts;
            }
        }
        multiplicative(gain[n], num, den)
    })
}

/// Spatial covariance update: solves `R Ψ R = R̃ Φ R̃` with
/// `Ψ = Σ_rn κ Σ^{-1}` and `Φ = Σ_rn κ M`, `κ` the variance coefficient of
/// `source`, then floors the eigenvalues so the result stays definite.
pub(crate) fn scm_step(
    basis: &JointBasis,
    samples: usize,
    speech: &SpeechCoef,
    noise: &[f64],
    source: Source,
    current: &[HermitianMatrix],
) -> Result<Vec<HermitianMatrix>> {
    let frames = basis.frames();
    let i_ch = basis.channels;
    let per_bin = map_range(basis.bins(), |f| {
        let lam = basis.lambda(f);
        let mut psi_diag = vec![0.0; i_ch];
        let mut phi_t = SquareMatrix::zeros(i_ch);
        let mut du = vec![Complex64::new(0.0, 0.0); i_ch];
        for r in 0..samples {
            for n in 0..frames {
                let a = speech(r, f, n);
                let c = noise[f * frames + n];
                let kappa = match source {
                    Source::Speech => a,
                    Source::Noise => c,
                };
                for (i, (&l, &u)) in lam.iter().zip(basis.projected(f, n)).enumerate() {
                    let d = 1.0 / (a * l + c);
                    psi_diag[i] += kappa * d;
                    du[i] = u * d;
                }
                for i in 0..i_ch {
                    let s = du[i] * kappa;
                    for j in 0..i_ch {
                        phi_t[(i, j)] += s * du[j].conj();
                    }
                }
            }
        }
        let t = &basis.transforms[f];
        let psi = HermitianMatrix::from_real_diagonal(&psi_diag).congruence(t);
        let phi = crate::linalg::hermitize(&phi_t)
            .congruence(t)
            .sandwich(&current[f]);
        solve_riccati(&psi, &phi).map(|r| r.clamp_pd())
    });
    per_bin.into_iter().collect()
}
