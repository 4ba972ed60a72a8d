//! Mixture datasets described by a JSON manifest.

use std::path::{Path, PathBuf};

use mcvae_core::simulate::{self, MixSpec};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::fft::RustFft;
use crate::wav::{self, Audio};

/// One mixture to create. Relative paths are resolved against the manifest's
/// directory. Without `doa`, a direction is drawn uniformly from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureItem {
    pub speech_path: PathBuf,
    pub noise_path: PathBuf,
    #[serde(default)]
    pub doa: Option<f64>,
    #[serde(default)]
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_spacing")]
    pub mic_spacing: f64,
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
    pub mixture_out: PathBuf,
    pub speech_out: PathBuf,
    pub noise_out: PathBuf,
}

fn default_spacing() -> f64 {
    MixSpec::default().mic_spacing
}

fn default_sound_speed() -> f64 {
    MixSpec::default().sound_speed
}

impl MixtureItem {
    pub fn spec(&self) -> MixSpec {
        MixSpec {
            doa_deg: self.doa.unwrap_or_else(|| MixSpec::random_doa(self.seed)),
            mic_spacing: self.mic_spacing,
            sound_speed: self.sound_speed,
            snr_db: self.snr_db,
            seed: self.seed,
        }
    }
}

pub fn load_manifest(path: &Path) -> AppResult<Vec<MixtureItem>> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let items: Vec<MixtureItem> =
        serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))?;
    if items.is_empty() {
        return Err(AppError::Config(format!(
            "{}: manifest is empty",
            path.display()
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(items
        .into_iter()
        .map(|mut it| {
            for p in [
                &mut it.speech_path,
                &mut it.noise_path,
                &mut it.mixture_out,
                &mut it.speech_out,
                &mut it.noise_out,
            ] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            it
        })
        .collect())
}

/// Spatializes mono speech, and mono noise from a second direction drawn
/// from the seed; two-channel noise is used as recorded. The noise is then
/// scaled to the requested SNR.
pub fn make_mixture(
    speech: &[f64],
    noise: &[Vec<f64>],
    spec: &MixSpec,
    sample_rate: u32,
    fft: &RustFft,
) -> AppResult<simulate::Mixture> {
    let image = simulate::spatialize(speech, spec, sample_rate, fft)?;
    let noise_image = match noise.len() {
        1 => {
            let noise_spec = MixSpec {
                doa_deg: MixSpec::random_doa(spec.seed.wrapping_add(1)),
                ..*spec
            };
            simulate::spatialize(&noise[0], &noise_spec, sample_rate, fft)?
        }
        2 => noise.to_vec(),
        n => {
            return Err(AppError::Config(format!(
                "noise must be mono or stereo, got {n} channels"
            )))
        }
    };
    Ok(simulate::mix(&image, &noise_image, spec.snr_db)?)
}

pub fn simulate_item(item: &MixtureItem, fft: &RustFft) -> AppResult<()> {
    let speech = wav::read(&item.speech_path)?;
    let noise = wav::read(&item.noise_path)?;
    if speech.sample_rate != noise.sample_rate {
        return Err(AppError::Config(format!(
            "sample rates differ: {} vs {}",
            speech.sample_rate, noise.sample_rate
        )));
    }
    let mix = make_mixture(
        &speech.channels[0],
        &noise.channels,
        &item.spec(),
        speech.sample_rate,
        fft,
    )?;
    let sr = speech.sample_rate;
    for (path, channels) in [
        (&item.mixture_out, mix.mixture),
        (&item.speech_out, mix.speech),
        (&item.noise_out, mix.noise),
    ] {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        }
        wav::write(
            path,
            &Audio {
                sample_rate: sr,
                channels,
            },
        )?;
    }
    Ok(())
}
