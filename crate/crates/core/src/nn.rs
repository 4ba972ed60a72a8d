//! Inference-mode forward passes of the decoder (latent → log-variance
//! spectrum) and encoder (power spectrum → Gaussian posterior parameters).
//!
//! Tensors are stored as `f32`, exactly as they appear in the weight file;
//! arithmetic is carried out in `f64`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Lower bound applied to every decoded variance.
pub const VAR_FLOOR: f64 = 1e-10;
/// Offset added to power spectra before taking the logarithm in the encoder.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Frozen batch normalization, applied after the affine map and before the
/// activation: `gamma · (x - mean) / sqrt(var + epsilon) + beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
            batch_norm: None,
        }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, &b) in self.weight.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut acc = b as f64;
            for (&w, &x) in row.iter().zip(input) {
                acc += w as f64 * x;
            }
            out.push(acc);
        }
        if let Some(bn) = &self.batch_norm {
            for (j, v) in out.iter_mut().enumerate() {
                let scale = bn.gamma[j] as f64 / libm::sqrt(bn.running_var[j] as f64 + bn.epsilon);
                *v = (*v - bn.running_mean[j] as f64) * scale + bn.beta[j] as f64;
            }
        }
        if self.activation == Activation::Relu {
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |what: &str| Err(Error::CorruptWeights(alloc::format!("{name}: {what}")));
        if self.in_dim == 0 || self.out_dim == 0 {
            return bad("zero-sized layer");
        }
        if self.weight.len() != self.in_dim * self.out_dim {
            return bad("weight shape does not match declared dimensions");
        }
        if self.bias.len() != self.out_dim {
            return bad("bias length does not match output dimension");
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return bad("non-finite weight or bias");
        }
        if let Some(bn) = &self.batch_norm {
            let n = self.out_dim;
            if bn.gamma.len() != n
                || bn.beta.len() != n
                || bn.running_mean.len() != n
                || bn.running_var.len() != n
            {
                return bad("batch-norm statistics have the wrong length");
            }
            let all = bn
                .gamma
                .iter()
                .chain(&bn.beta)
                .chain(&bn.running_mean)
                .chain(&bn.running_var);
            if all.clone().any(|v| !v.is_finite()) || !bn.epsilon.is_finite() || bn.epsilon < 0.0 {
                return bad("non-finite batch-norm statistics");
            }
            if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                return bad("batch-norm running variance must be positive");
            }
        }
        Ok(())
    }
}

/// Frequency-wise standardization of the log-power input, estimated on the
/// training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub standardization: Option<Standardization>,
}

/// Reusable activation buffers for allocation-free forward passes.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::CorruptWeights(alloc::format!("{name}: no layers")));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(&alloc::format!("{name} layer {i}"))?;
            if i > 0 && self.layers[i - 1].out_dim != layer.in_dim {
                return Err(Error::CorruptWeights(alloc::format!(
                    "{name} layer {i}: input dimension {} does not chain with previous output {}",
                    layer.in_dim,
                    self.layers[i - 1].out_dim
                )));
            }
        }
        if let Some(st) = &self.standardization {
            let f = self.input_dim();
            if st.mean.len() != f || st.std.len() != f {
                return Err(Error::CorruptWeights(alloc::format!(
                    "{name}: standardization length does not match input dimension {f}"
                )));
            }
            if st.mean.iter().any(|v| !v.is_finite())
                || st.std.iter().any(|&v| !(v > 0.0) || !v.is_finite())
            {
                return Err(Error::CorruptWeights(alloc::format!(
                    "{name}: standardization std must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Raw network output. The result borrows `scratch`.
    pub fn forward<'s>(&self, input: &[f64], scratch: &'s mut Scratch) -> &'s [f64] {
        scratch.a.clear();
        scratch.a.extend_from_slice(input);
        for layer in &self.layers {
            layer.forward(&scratch.a, &mut scratch.b);
            core::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        &scratch.a
    }
}

/// A decoder/encoder pair sharing the latent and spectrum dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub latent_dim: usize,
    pub spectrum_dim: usize,
    pub decoder: Network,
    pub encoder: Network,
}

impl VaeModel {
    pub fn new(
        latent_dim: usize,
        spectrum_dim: usize,
        decoder: Network,
        encoder: Network,
    ) -> Result<Self> {
        let model = Self {
            latent_dim,
            spectrum_dim,
            decoder,
            encoder,
        };
        model.validate()?;
        Ok(model)
    }

    /// Zero networks: every decoded variance is 1 and the encoder returns the
    /// standard normal prior.
    pub fn zeros(latent_dim: usize, spectrum_dim: usize) -> Self {
        Self {
            latent_dim,
            spectrum_dim,
            decoder: Network {
                layers: vec![Layer::zeros(latent_dim, spectrum_dim, Activation::Identity)],
                standardization: None,
            },
            encoder: Network {
                layers: vec![Layer::zeros(
                    spectrum_dim,
                    2 * latent_dim,
                    Activation::Identity,
                )],
                standardization: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.spectrum_dim == 0 {
            return Err(Error::CorruptWeights(
                "zero latent or spectrum dimension".into(),
            ));
        }
        self.decoder.validate("decoder")?;
        self.encoder.validate("encoder")?;
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| -> Result<()> {
            if got != want {
                return Err(Error::CorruptWeights(alloc::format!(
                    "{name} maps {} -> {}, expected {} -> {}",
                    got.0,
                    got.1,
                    want.0,
                    want.1
                )));
            }
            Ok(())
        };
        expect(
            "decoder",
            (self.decoder.input_dim(), self.decoder.output_dim()),
            (self.latent_dim, self.spectrum_dim),
        )?;
        expect(
            "encoder",
            (self.encoder.input_dim(), self.encoder.output_dim()),
            (self.spectrum_dim, 2 * self.latent_dim),
        )?;
        if self.decoder.standardization.is_some() {
            return Err(Error::CorruptWeights(
                "decoder cannot carry input standardization".into(),
            ));
        }
        Ok(())
    }

    /// Speech variance spectrum `σ²(z)` written into `out` (length F).
    pub fn decode_into(&self, z: &[f64], scratch: &mut Scratch, out: &mut [f64]) -> Result<()> {
        if z.len() != self.latent_dim || out.len() != self.spectrum_dim {
            return Err(dim_error("decoder", self.latent_dim, z.len()));
        }
        let logvar = self.decoder.forward(z, scratch);
        for (o, &lv) in out.iter_mut().zip(logvar) {
            let v = libm::exp(lv);
            if !v.is_finite() {
                return Err(Error::CorruptWeights(
                    "decoder produced a non-finite variance".into(),
                ));
            }
            *o = v.max(VAR_FLOOR);
        }
        Ok(())
    }

    pub fn decoder_forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.spectrum_dim];
        self.decode_into(z, &mut Scratch::default(), &mut out)?;
        Ok(out)
    }

    /// Encoder input: `log(power + LOG_FLOOR)`, standardized if the network
    /// carries statistics.
    pub fn encoder_input(&self, power_spectrum: &[f64]) -> Result<Vec<f64>> {
        if power_spectrum.len() != self.spectrum_dim {
            return Err(dim_error(
                "encoder",
                self.spectrum_dim,
                power_spectrum.len(),
            ));
        }
        if power_spectrum
            .iter()
            .any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::Input(
                "power spectrum must be finite and non-negative".into(),
            ));
        }
        let mut input: Vec<f64> = power_spectrum
            .iter()
            .map(|&p| libm::log(p + LOG_FLOOR))
            .collect();
        if let Some(st) = &self.encoder.standardization {
            for ((v, &m), &s) in input.iter_mut().zip(&st.mean).zip(&st.std) {
                *v = (*v - m as f64) / s as f64;
            }
        }
        Ok(input)
    }

    /// Posterior mean and variance of the latent vector for one frame.
    pub fn encoder_forward(&self, power_spectrum: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let input = self.encoder_input(power_spectrum)?;
        let mut scratch = Scratch::default();
        let out = self.encoder.forward(&input, &mut scratch);
        let l = self.latent_dim;
        let mu = out[..l].to_vec();
        let var: Vec<f64> = out[l..].iter().map(|&lv| libm::exp(lv)).collect();
        if mu.iter().chain(&var).any(|v| !v.is_finite()) || var.iter().any(|&v| v <= 0.0) {
            return Err(Error::CorruptWeights(
                "encoder produced a non-finite output".into(),
            ));
        }
        Ok((mu, var))
    }
}

fn dim_error(what: &str, want: usize, got: usize) -> Error {
    Error::Dimension(
        String::from(what) + &alloc::format!(": expected input of length {want}, got {got}"),
    )
}
