//! JSON dump of estimated parameters. Matrices are row-major; complex
//! entries are `[re, im]` pairs.

use std::path::Path;

use mcvae_core::baseline::BaselineParams;
use mcvae_core::linalg::{hermitize_entries, HermitianMatrix};
use mcvae_core::model::{Dims, SpatialNoise, UnsupervisedParams};
use mcvae_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDump {
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub noise_rank: usize,
    pub w_b: Vec<f64>,
    pub h_b: Vec<f64>,
    pub r_s: Vec<Vec<[f64; 2]>>,
    pub r_b: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_s: Option<Vec<f64>>,
}

fn scm_entries(m: &HermitianMatrix) -> Vec<[f64; 2]> {
    m.entries().iter().map(|c| [c.re, c.im]).collect()
}

fn scm_from(dim: usize, e: &[[f64; 2]]) -> mcvae_core::Result<HermitianMatrix> {
    let entries: Vec<Complex64> = e.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    hermitize_entries(dim, &entries)
}

impl ParamsDump {
    fn from_spatial(s: &SpatialNoise) -> Self {
        Self {
            channels: s.dims.channels,
            bins: s.dims.bins,
            frames: s.dims.frames,
            noise_rank: s.dims.noise_rank,
            w_b: s.w_b.clone(),
            h_b: s.h_b.clone(),
            r_s: s.r_s.iter().map(scm_entries).collect(),
            r_b: s.r_b.iter().map(scm_entries).collect(),
            g: None,
            h_s: None,
        }
    }

    pub fn from_unsupervised(p: &UnsupervisedParams) -> Self {
        Self {
            g: Some(p.g.clone()),
            ..Self::from_spatial(&p.spatial)
        }
    }

    pub fn from_baseline(p: &BaselineParams) -> Self {
        Self {
            h_s: Some(p.h_s.clone()),
            ..Self::from_spatial(&p.spatial)
        }
    }

    fn spatial(&self) -> mcvae_core::Result<SpatialNoise> {
        let dims = Dims {
            channels: self.channels,
            bins: self.bins,
            frames: self.frames,
            noise_rank: self.noise_rank,
        };
        let convert = |v: &[Vec<[f64; 2]>]| {
            v.iter()
                .map(|e| scm_from(self.channels, e))
                .collect::<mcvae_core::Result<Vec<_>>>()
        };
        let s = SpatialNoise {
            dims,
            w_b: self.w_b.clone(),
            h_b: self.h_b.clone(),
            r_s: convert(&self.r_s)?,
            r_b: convert(&self.r_b)?,
        };
        Ok(s)
    }

    pub fn to_unsupervised(&self) -> mcvae_core::Result<UnsupervisedParams> {
        let g = self
            .g
            .clone()
            .ok_or_else(|| mcvae_core::Error::Input("parameter dump has no gain vector".into()))?;
        let p = UnsupervisedParams {
            spatial: self.spatial()?,
            g,
        };
        p.validate_against(self.channels, self.bins, self.frames)?;
        Ok(p)
    }

    pub fn to_baseline(&self) -> mcvae_core::Result<BaselineParams> {
        let h_s = self.h_s.clone().ok_or_else(|| {
            mcvae_core::Error::Input("parameter dump has no speech activations".into())
        })?;
        Ok(BaselineParams {
            h_s,
            spatial: self.spatial()?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_preserves_every_value() {
        let dims = Dims {
            channels: 2,
            bins: 3,
            frames: 4,
            noise_rank: 2,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut p = UnsupervisedParams::init(dims, &mut rng);
        p.spatial.r_s[1] = hermitize_entries(
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.1, 0.3),
                Complex64::new(0.1, -0.3),
                Complex64::new(1.0, 0.0),
            ],
        )
        .unwrap();
        p.g = vec![0.1, 1.0 / 3.0, 7.0, 1e-10];
        let dump = ParamsDump::from_unsupervised(&p);
        let back: ParamsDump = serde_json::from_str(&dump.to_json()).unwrap();
        assert_eq!(back.to_unsupervised().unwrap(), p);
        assert!(back.to_baseline().is_err());
    }
}
