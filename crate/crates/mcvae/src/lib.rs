//! File formats, FFT backend, dataset tooling and pipelines on top of
//! [`mcvae_core`].

pub mod dataset;
pub mod error;
pub mod fft;
pub mod params_io;
pub mod pipeline;
pub mod report;
pub mod wav;
pub mod weights;

pub use error::{AppError, AppResult};
pub use fft::RustFft;
