//! Parameters of the multichannel local Gaussian model and the per-bin
//! mixture covariance
//!
//! ```text
//! Σ_x,fn = g_n σ_f²(z_n) R_s,f + (W_b H_b)_fn R_b,f
//! ```

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::HermitianMatrix;
use crate::{Error, Result};

/// Floor applied to NMF factors and gains after every multiplicative update.
pub const NMF_FLOOR: f64 = 1e-10;

/// Problem dimensions: channels `I`, bins `F`, frames `N`, noise rank `K_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub noise_rank: usize,
}

/// Noise NMF factors and both sets of spatial covariance matrices; the part
/// of the parameter set that the proposed and the baseline model share.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialNoise {
    pub dims: Dims,
    /// `F × K_b`, row-major.
    pub w_b: Vec<f64>,
    /// `K_b × N`, row-major.
    pub h_b: Vec<f64>,
    pub r_s: Vec<HermitianMatrix>,
    pub r_b: Vec<HermitianMatrix>,
}

impl SpatialNoise {
    /// Uniform(0.1, 1) NMF factors, identity SCMs.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        let mut draw = |len: usize| {
            (0..len)
                .map(|_| rng.random_range(0.1..1.0))
                .collect::<Vec<f64>>()
        };
        let w_b = draw(dims.bins * dims.noise_rank);
        let h_b = draw(dims.noise_rank * dims.frames);
        Self {
            dims,
            w_b,
            h_b,
            r_s: vec![HermitianMatrix::identity(dims.channels); dims.bins],
            r_b: vec![HermitianMatrix::identity(dims.channels); dims.bins],
        }
    }

    /// `(W_b H_b)_fn`.
    #[inline]
    pub fn noise_variance(&self, f: usize, n: usize) -> f64 {
        let k = self.dims.noise_rank;
        let n_frames = self.dims.frames;
        let w = &self.w_b[f * k..(f + 1) * k];
        w.iter()
            .enumerate()
            .map(|(j, &wv)| wv * self.h_b[j * n_frames + n])
            .sum()
    }

    /// Full `F × N` noise variance matrix.
    pub fn noise_variances(&self) -> Vec<f64> {
        let d = self.dims;
        let mut out = vec![0.0; d.bins * d.frames];
        for f in 0..d.bins {
            for n in 0..d.frames {
                out[f * d.frames + n] = self.noise_variance(f, n);
            }
        }
        out
    }

    /// `a R_s,f + c R_b,f`.
    #[inline]
    pub fn covariance(&self, f: usize, speech_coef: f64, noise_coef: f64) -> HermitianMatrix {
        self.r_s[f].combine(speech_coef, &self.r_b[f], noise_coef)
    }

    /// Removes the scale indeterminacies: `trace(R_b,f) = 1` with the rows of
    /// `W_b` scaled accordingly, then unit-sum columns of `W_b` with the rows of
    /// `H_b` scaled accordingly. Every `Σ_b,fn` is left unchanged.
    pub fn normalize(&mut self) {
        let d = self.dims;
        let k = d.noise_rank;
        for f in 0..d.bins {
            let tr = self.r_b[f].trace();
            if tr > 0.0 && tr.is_finite() {
                self.r_b[f] = self.r_b[f].scale(1.0 / tr);
                for v in &mut self.w_b[f * k..(f + 1) * k] {
                    *v *= tr;
                }
            }
        }
        for j in 0..k {
            let sum: f64 = (0..d.bins).map(|f| self.w_b[f * k + j]).sum();
            if sum > 0.0 && sum.is_finite() {
                for f in 0..d.bins {
                    self.w_b[f * k + j] /= sum;
                }
                for v in &mut self.h_b[j * d.frames..(j + 1) * d.frames] {
                    *v *= sum;
                }
            }
        }
    }

    pub(crate) fn validate_against(
        &self,
        channels: usize,
        bins: usize,
        frames: usize,
    ) -> Result<()> {
        let d = self.dims;
        if d.channels != channels || d.bins != bins || d.frames != frames {
            return Err(Error::Dimension(alloc::format!(
                "parameters are {}x{}x{} (I x F x N), data is {}x{}x{}",
                d.channels,
                d.bins,
                d.frames,
                channels,
                bins,
                frames
            )));
        }
        if self.w_b.len() != d.bins * d.noise_rank
            || self.h_b.len() != d.noise_rank * d.frames
            || self.r_s.len() != d.bins
            || self.r_b.len() != d.bins
            || self
                .r_s
                .iter()
                .chain(&self.r_b)
                .any(|r| r.dim() != d.channels)
        {
            return Err(Error::Dimension(
                "parameter arrays do not match their dimensions".into(),
            ));
        }
        Ok(())
    }
}

/// Unsupervised parameters of the proposed model: noise NMF, SCMs and the
/// per-frame speech gain `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsupervisedParams {
    pub spatial: SpatialNoise,
    pub g: Vec<f64>,
}

impl UnsupervisedParams {
    /// Random NMF factors, identity SCMs, all-ones gain.
    pub fn init<R: Rng>(dims: Dims, rng: &mut R) -> Self {
        Self {
            spatial: SpatialNoise::init(dims, rng),
            g: vec![1.0; dims.frames],
        }
    }

    pub fn dims(&self) -> Dims {
        self.spatial.dims
    }

    /// `Σ_x,fn` for decoded variances `speech_var` of frame `n`.
    pub fn sigma_x(&self, speech_var: &[f64], f: usize, n: usize) -> HermitianMatrix {
        self.spatial.covariance(
            f,
            self.g[n] * speech_var[f],
            self.spatial.noise_variance(f, n),
        )
    }

    pub fn normalize(&mut self) {
        self.spatial.normalize();
    }

    pub fn validate_against(&self, channels: usize, bins: usize, frames: usize) -> Result<()> {
        self.spatial.validate_against(channels, bins, frames)?;
        if self.g.len() != frames {
            return Err(Error::Dimension(
                "gain vector length differs from frame count".into(),
            ));
        }
        Ok(())
    }
}

/// Proper complex Gaussian log-density `ln N_c(x; 0, Σ)`.
pub fn log_likelihood(x: &[Complex64], sigma: &HermitianMatrix) -> Result<f64> {
    if x.len() != sigma.dim() {
        return Err(Error::Dimension(
            "observation and covariance sizes differ".into(),
        ));
    }
    let log_det = sigma.log_det()?;
    let inv = sigma.inverse(0.0)?;
    Ok(-(x.len() as f64) * libm::log(core::f64::consts::PI) - log_det - inv.quad_form(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::random_pd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(i: usize, f: usize, n: usize, k: usize) -> Dims {
        Dims {
            channels: i,
            bins: f,
            frames: n,
            noise_rank: k,
        }
    }

    fn random_params(rng: &mut ChaCha8Rng, d: Dims) -> UnsupervisedParams {
        let mut p = UnsupervisedParams::init(d, rng);
        for f in 0..d.bins {
            p.spatial.r_s[f] = random_pd(rng, d.channels, 0.1);
            p.spatial.r_b[f] = random_pd(rng, d.channels, 0.1);
        }
        for g in &mut p.g {
            *g = rng.random_range(0.1..3.0);
        }
        p
    }

    #[test]
    fn init_follows_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = UnsupervisedParams::init(dims(2, 5, 7, 3), &mut rng);
        assert!(p
            .spatial
            .w_b
            .iter()
            .chain(&p.spatial.h_b)
            .all(|&v| (0.1..1.0).contains(&v)));
        assert!(p.g.iter().all(|&g| g == 1.0));
        assert!(p
            .spatial
            .r_s
            .iter()
            .all(|r| *r == HermitianMatrix::identity(2)));
    }

    #[test]
    fn sigma_x_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = UnsupervisedParams::init(dims(2, 1, 1, 1), &mut rng);
        p.g[0] = 0.0;
        p.spatial.w_b[0] = 1.0;
        p.spatial.h_b[0] = 1.0;
        assert_eq!(p.sigma_x(&[5.0], 0, 0), HermitianMatrix::identity(2));

        p.g[0] = 1.0;
        p.spatial.w_b[0] = NMF_FLOOR;
        let s = p.sigma_x(&[1.0], 0, 0);
        let diff = s.combine(1.0, &HermitianMatrix::identity(2), -1.0);
        assert!(diff.entries().iter().all(|v| v.norm() < 1e-9));
    }

    #[test]
    fn sigma_x_matches_direct_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = dims(2, 4, 3, 2);
        let p = random_params(&mut rng, d);
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..2.0)).collect();
        for f in 0..4 {
            for n in 0..3 {
                let c: f64 = (0..2)
                    .map(|k| p.spatial.w_b[f * 2 + k] * p.spatial.h_b[k * 3 + n])
                    .sum();
                let a = p.g[n] * v[f];
                let s = p.sigma_x(&v, f, n);
                for (idx, got) in s.entries().iter().enumerate() {
                    let want =
                        p.spatial.r_s[f].entries()[idx] * a + p.spatial.r_b[f].entries()[idx] * c;
                    assert!((got - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sigma_x_is_affine_in_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_params(&mut rng, dims(2, 2, 2, 2));
        let v = [0.7, 1.3];
        let at = |p: &mut UnsupervisedParams, g: f64| {
            p.g[1] = g;
            p.sigma_x(&v, 1, 1)
        };
        let (s0, s1, s2) = (at(&mut p, 0.0), at(&mut p, 1.0), at(&mut p, 2.0));
        let mid = s0.combine(0.5, &s2, 0.5);
        assert!(mid
            .entries()
            .iter()
            .zip(s1.entries())
            .all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn log_likelihood_examples() {
        let pi = core::f64::consts::PI;
        let zero = [Complex64::new(0.0, 0.0); 2];
        let ll = log_likelihood(&zero, &HermitianMatrix::identity(2)).unwrap();
        assert!((ll + 2.0 * pi.ln()).abs() < 1e-14);

        let s2: f64 = 2.5;
        let x = [Complex64::from_polar(s2.sqrt(), 0.3)];
        let ll = log_likelihood(&x, &HermitianMatrix::from_real_diagonal(&[s2])).unwrap();
        assert!((ll - (-pi.ln() - s2.ln() - 1.0)).abs() < 1e-12);

        assert!(log_likelihood(&zero, &HermitianMatrix::zeros(2)).is_err());
    }

    #[test]
    fn log_likelihood_matches_quadratic_form_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 1..=4 {
            let s = random_pd(&mut rng, d, 0.2);
            let x: Vec<Complex64> = (0..d)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            // Σ^{-1} x by solving with the eigendecomposition
            let (vals, vecs) = s.eigh();
            let mut quad = 0.0;
            for (k, lam) in vals.iter().enumerate() {
                let proj: Complex64 = (0..d).map(|i| vecs[(i, k)].conj() * x[i]).sum();
                quad += proj.norm_sqr() / lam;
            }
            let logdet: f64 = vals.iter().map(|v| v.ln()).sum();
            let want = -(d as f64) * core::f64::consts::PI.ln() - logdet - quad;
            assert!((log_likelihood(&x, &s).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn normalize_fixed_point_and_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = dims(2, 6, 4, 3);
        let mut p = random_params(&mut rng, d);
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
        let before: Vec<HermitianMatrix> = (0..6)
            .flat_map(|f| (0..4).map(move |n| (f, n)))
            .map(|(f, n)| p.sigma_x(&v, f, n))
            .collect();
        p.normalize();
        for f in 0..6 {
            assert!((p.spatial.r_b[f].trace() - 1.0).abs() < 1e-10);
        }
        for k in 0..3 {
            let s: f64 = (0..6).map(|f| p.spatial.w_b[f * 3 + k]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
        let after: Vec<HermitianMatrix> = (0..6)
            .flat_map(|f| (0..4).map(move |n| (f, n)))
            .map(|(f, n)| p.sigma_x(&v, f, n))
            .collect();
        for (a, b) in before.iter().zip(&after) {
            let scale = a.entries().iter().map(|z| z.norm()).fold(0.0, f64::max);
            for (x, y) in a.entries().iter().zip(b.entries()) {
                assert!((x - y).norm() / scale < 1e-10);
            }
        }
        let snapshot = p.clone();
        p.normalize();
        for (a, b) in p.spatial.w_b.iter().zip(&snapshot.spatial.w_b) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in p.spatial.h_b.iter().zip(&snapshot.spatial.h_b) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_transfers_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = UnsupervisedParams::init(dims(2, 1, 1, 1), &mut rng);
        p.spatial.r_b[0] = HermitianMatrix::scaled_identity(2, 2.0);
        p.spatial.w_b[0] = 1.0;
        p.spatial.h_b[0] = 0.5;
        let before = p.spatial.noise_variance(0, 0) * p.spatial.r_b[0].entries()[0].re;
        p.normalize();
        assert!((p.spatial.r_b[0].trace() - 1.0).abs() < 1e-15);
        let after = p.spatial.noise_variance(0, 0) * p.spatial.r_b[0].entries()[0].re;
        assert!((before - after).abs() < 1e-12);
    }
}
