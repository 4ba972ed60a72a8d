//! Multichannel speech enhancement with a deep generative speech prior.
//!
//! Every time-frequency bin of the mixture is modelled as a zero-mean proper
//! complex Gaussian whose covariance is the sum of a speech image and a noise
//! image:
//!
//! ```text
//! x_fn | z_n ~ N_c(0, g_n σ_f²(z_n) R_s,f + (W_b H_b)_fn R_b,f)
//! ```
//!
//! The speech variance `σ_f²(z)` is produced by a feed-forward decoder
//! ([`nn`]), the noise variance is a non-negative factorization and both
//! sources carry a free spatial covariance matrix. [`mcem`] estimates the
//! unsupervised parameters with Monte Carlo EM (random-walk
//! Metropolis-Hastings E-step, majorization-minimization M-step) and
//! [`reconstruct`] delivers the posterior-mean speech image. [`baseline`]
//! implements the supervised-NMF counterpart in the same framework.
//!
//! The crate is `no_std` with `alloc`. Transforms that need an FFT are generic
//! over [`fft::Fft`]; the `mcvae` crate supplies a backend together with file
//! formats and the command-line front end.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;

pub mod baseline;
pub mod fft;
pub mod linalg;
pub mod mcem;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod reconstruct;
pub mod simulate;
pub mod stft;

mod moments;
mod par;
mod rng;
#[cfg(test)]
mod testkit;

pub use error::{Error, Result};
pub use num_complex::Complex64;
