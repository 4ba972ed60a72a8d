//! Binary container for network weights and NMF dictionaries.
//!
//! ```text
//! magic     8 bytes   "MCVAEWT\0"
//! length    u32 LE    byte length of the manifest
//! manifest  JSON      UTF-8, see `Manifest`
//! tensors   f32 LE    concatenated in manifest order, row-major
//! ```
//!
//! For a `"vae"` file the decoder tensors come first, then the encoder. For
//! each network, every layer contributes `weight` (out × in) and `bias`
//! (out), followed by `gamma`, `beta`, `running_mean`, `running_var` (out
//! each) when the layer has batch normalization. A network with input
//! standardization then appends `mean` and `std` (in of the first layer).
//!
//! An `"nmf_dictionary"` file holds a single `spectrum_dim × rank` tensor.

use std::io::Write;
use std::path::Path;

use mcvae_core::baseline::SpeechDictionary;
use mcvae_core::nn::{Activation, BatchNorm, Layer, Network, Standardization, VaeModel};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 8] = b"MCVAEWT\0";
pub const VERSION: u32 = 1;
pub const KIND_VAE: &str = "vae";
pub const KIND_DICTIONARY: &str = "nmf_dictionary";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
    pub activation: String,
    pub batch_norm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub standardization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Networks {
    pub decoder: NetworkSpec,
    pub encoder: NetworkSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: String,
    pub spectrum_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub networks: Option<Networks>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

fn encode(manifest: &Manifest, tensors: &[f32]) -> Vec<u8> {
    let json = serde_json::to_vec(manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * tensors.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in tensors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a container into its manifest and tensor payload.
pub fn decode(bytes: &[u8]) -> Result<(Manifest, Vec<f32>), String> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err("not a weight file (bad magic)".into());
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err("truncated manifest".into());
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[..len]).map_err(|e| format!("malformed manifest: {e}"))?;
    if manifest.version != VERSION {
        return Err(format!("unsupported version {}", manifest.version));
    }
    let payload = &body[len..];
    if !payload.len().is_multiple_of(4) {
        return Err("tensor payload is not a whole number of f32 values".into());
    }
    let tensors = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((manifest, tensors))
}

fn network_spec(net: &Network) -> NetworkSpec {
    NetworkSpec {
        layers: net
            .layers
            .iter()
            .map(|l| LayerSpec {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                activation: l.activation.tag().to_string(),
                batch_norm: l.batch_norm.is_some(),
                epsilon: l.batch_norm.as_ref().map(|b| b.epsilon),
            })
            .collect(),
        standardization: net.standardization.is_some(),
    }
}

fn push_network(net: &Network, out: &mut Vec<f32>) {
    for l in &net.layers {
        out.extend_from_slice(&l.weight);
        out.extend_from_slice(&l.bias);
        if let Some(bn) = &l.batch_norm {
            out.extend_from_slice(&bn.gamma);
            out.extend_from_slice(&bn.beta);
            out.extend_from_slice(&bn.running_mean);
            out.extend_from_slice(&bn.running_var);
        }
    }
    if let Some(st) = &net.standardization {
        out.extend_from_slice(&st.mean);
        out.extend_from_slice(&st.std);
    }
}

struct Cursor<'a> {
    data: &'a [f32],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<Vec<f32>, String> {
        if self.pos + n > self.data.len() {
            return Err(format!("truncated tensor data while reading {what}"));
        }
        let v = self.data[self.pos..self.pos + n].to_vec();
        self.pos += n;
        Ok(v)
    }
}

fn read_network(spec: &NetworkSpec, name: &str, cur: &mut Cursor<'_>) -> Result<Network, String> {
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, ls) in spec.layers.iter().enumerate() {
        let label = format!("{name} layer {i}");
        let activation = Activation::from_tag(&ls.activation)
            .ok_or_else(|| format!("{label}: unknown activation {:?}", ls.activation))?;
        let weight = cur.take(ls.in_dim * ls.out_dim, &label)?;
        let bias = cur.take(ls.out_dim, &label)?;
        let batch_norm = if ls.batch_norm {
            Some(BatchNorm {
                gamma: cur.take(ls.out_dim, &label)?,
                beta: cur.take(ls.out_dim, &label)?,
                running_mean: cur.take(ls.out_dim, &label)?,
                running_var: cur.take(ls.out_dim, &label)?,
                epsilon: ls
                    .epsilon
                    .ok_or_else(|| format!("{label}: batch norm without epsilon"))?,
            })
        } else {
            None
        };
        layers.push(Layer {
            in_dim: ls.in_dim,
            out_dim: ls.out_dim,
            weight,
            bias,
            activation,
            batch_norm,
        });
    }
    let standardization = if spec.standardization {
        let dim = spec.layers.first().map_or(0, |l| l.in_dim);
        Some(Standardization {
            mean: cur.take(dim, &format!("{name} standardization"))?,
            std: cur.take(dim, &format!("{name} standardization"))?,
        })
    } else {
        None
    };
    Ok(Network {
        layers,
        standardization,
    })
}

pub fn encode_model(model: &VaeModel) -> Vec<u8> {
    let manifest = Manifest {
        version: VERSION,
        kind: KIND_VAE.into(),
        spectrum_dim: model.spectrum_dim,
        latent_dim: Some(model.latent_dim),
        networks: Some(Networks {
            decoder: network_spec(&model.decoder),
            encoder: network_spec(&model.encoder),
        }),
        rank: None,
    };
    let mut tensors = Vec::new();
    push_network(&model.decoder, &mut tensors);
    push_network(&model.encoder, &mut tensors);
    encode(&manifest, &tensors)
}

pub fn decode_model(bytes: &[u8]) -> Result<VaeModel, String> {
    let (manifest, tensors) = decode(bytes)?;
    if manifest.kind != KIND_VAE {
        return Err(format!(
            "expected a {KIND_VAE:?} file, found {:?}",
            manifest.kind
        ));
    }
    let latent = manifest.latent_dim.ok_or("missing latent_dim")?;
    let nets = manifest.networks.as_ref().ok_or("missing networks")?;
    let mut cur = Cursor {
        data: &tensors,
        pos: 0,
    };
    let decoder = read_network(&nets.decoder, "decoder", &mut cur)?;
    let encoder = read_network(&nets.encoder, "encoder", &mut cur)?;
    if cur.pos != tensors.len() {
        return Err("trailing tensor data".into());
    }
    VaeModel::new(latent, manifest.spectrum_dim, decoder, encoder).map_err(|e| e.to_string())
}

pub fn encode_dictionary(dict: &SpeechDictionary) -> Vec<u8> {
    let manifest = Manifest {
        version: VERSION,
        kind: KIND_DICTIONARY.into(),
        spectrum_dim: dict.bins,
        latent_dim: None,
        networks: None,
        rank: Some(dict.rank),
    };
    let tensors: Vec<f32> = dict.w.iter().map(|&v| v as f32).collect();
    encode(&manifest, &tensors)
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<SpeechDictionary, String> {
    let (manifest, tensors) = decode(bytes)?;
    if manifest.kind != KIND_DICTIONARY {
        return Err(format!(
            "expected a {KIND_DICTIONARY:?} file, found {:?}",
            manifest.kind
        ));
    }
    let rank = manifest.rank.ok_or("missing rank")?;
    if tensors.len() != manifest.spectrum_dim * rank {
        return Err(format!(
            "dictionary payload has {} values, expected {}",
            tensors.len(),
            manifest.spectrum_dim * rank
        ));
    }
    SpeechDictionary::new(
        manifest.spectrum_dim,
        rank,
        tensors.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| e.to_string())
}

fn read_bytes(path: &Path) -> AppResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| AppError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let mut f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}

pub fn load_model(path: &Path) -> AppResult<VaeModel> {
    decode_model(&read_bytes(path)?).map_err(|m| AppError::format(path, m))
}

pub fn save_model(path: &Path, model: &VaeModel) -> AppResult<()> {
    write_bytes(path, &encode_model(model))
}

pub fn load_dictionary(path: &Path) -> AppResult<SpeechDictionary> {
    decode_dictionary(&read_bytes(path)?).map_err(|m| AppError::format(path, m))
}

pub fn save_dictionary(path: &Path, dict: &SpeechDictionary) -> AppResult<()> {
    write_bytes(path, &encode_dictionary(dict))
}
