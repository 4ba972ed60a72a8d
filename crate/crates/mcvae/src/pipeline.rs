//! End-to-end jobs: waveform in, enhanced waveforms and artifacts out.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mcvae_core::baseline::{
    self, BaselineConfig, BaselineOutcome, NmfTrainConfig, SpeechDictionary,
};
use mcvae_core::mcem::{self, IterationRecord, McemConfig, SamplerConfig};
use mcvae_core::model::UnsupervisedParams;
use mcvae_core::nn::VaeModel;
use mcvae_core::reconstruct::{self, RECONSTRUCTION_SAMPLER};
use mcvae_core::stft::{self, MultichannelStft, StftConfig};
use serde::Serialize;
use serde_json::json;

use crate::error::{AppError, AppResult};
use crate::fft::RustFft;
use crate::params_io::ParamsDump;
use crate::wav::{self, Audio};
use crate::weights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceOptions {
    pub stft: StftConfig,
    pub mcem: McemConfig,
    pub reconstruction: SamplerConfig,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            mcem: McemConfig::default(),
            reconstruction: RECONSTRUCTION_SAMPLER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceOutput {
    pub speech: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub params: UnsupervisedParams,
    pub history: Vec<IterationRecord>,
    pub reconstruction_acceptance: f64,
}

fn check_bins(cfg: &StftConfig, bins: usize, what: &str) -> AppResult<()> {
    cfg.validate()?;
    if cfg.bins() != bins {
        return Err(AppError::Config(format!(
            "{what} expects {bins} frequency bins but the STFT (fft size {}) yields {}",
            cfg.fft_size,
            cfg.bins()
        )));
    }
    Ok(())
}

/// Runs MCEM and posterior-mean Wiener filtering on `signal`.
pub fn enhance_signal(
    signal: &[Vec<f64>],
    model: &VaeModel,
    opts: &EnhanceOptions,
    fft: &RustFft,
    observer: impl FnMut(&IterationRecord),
) -> AppResult<EnhanceOutput> {
    check_bins(&opts.stft, model.spectrum_dim, "the network")?;
    opts.mcem.validate()?;
    opts.reconstruction.validate()?;
    let x = stft::analyze(signal, &opts.stft, fft)?;
    let outcome = mcem::run(&x, model, &opts.mcem, observer)?;
    let (result, acceptance) = reconstruct::wiener_estimate(
        &x,
        &outcome.params,
        model,
        &outcome.chain,
        &opts.reconstruction,
        opts.mcem.seed,
    )?;
    Ok(EnhanceOutput {
        speech: stft::synthesize(&result.speech, &opts.stft, fft)?,
        noise: stft::synthesize(&result.noise, &opts.stft, fft)?,
        params: outcome.params,
        history: outcome.history,
        reconstruction_acceptance: acceptance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub speech: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub outcome: BaselineOutcome,
}

pub fn enhance_baseline_signal(
    signal: &[Vec<f64>],
    dict: &SpeechDictionary,
    cfg: &BaselineConfig,
    stft_cfg: &StftConfig,
    fft: &RustFft,
) -> AppResult<BaselineOutput> {
    check_bins(stft_cfg, dict.bins, "the dictionary")?;
    let x = stft::analyze(signal, stft_cfg, fft)?;
    let outcome = baseline::run_baseline(&x, dict, cfg)?;
    Ok(BaselineOutput {
        speech: stft::synthesize(&outcome.result.speech, stft_cfg, fft)?,
        noise: stft::synthesize(&outcome.result.noise, stft_cfg, fft)?,
        outcome,
    })
}

fn create_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = serde_json::Value>) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).expect("metadata serializes");
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn stft_json(cfg: &StftConfig) -> serde_json::Value {
    json!({
        "sample_rate": cfg.sample_rate,
        "window_length": cfg.window_length,
        "hop": cfg.hop,
        "fft_size": cfg.fft_size,
    })
}

/// Paths of the artifacts written by the enhancement jobs.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub speech: PathBuf,
    pub noise: PathBuf,
    pub params: PathBuf,
    pub log: PathBuf,
    pub metadata: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            speech: dir.join("speech.wav"),
            noise: dir.join("noise.wav"),
            params: dir.join("params.json"),
            log: dir.join("log.jsonl"),
            metadata: dir.join("metadata.json"),
        }
    }
}

fn read_input(input: &Path, opts_stft: &StftConfig) -> AppResult<(Audio, StftConfig)> {
    let audio = wav::read(input)?;
    if audio.is_empty() {
        return Err(AppError::format(input, "no samples"));
    }
    let cfg = StftConfig {
        sample_rate: audio.sample_rate,
        ..*opts_stft
    };
    Ok((audio, cfg))
}

/// `enhance`: reads `input`, writes speech/noise WAVs, the parameter dump,
/// the per-iteration log and a metadata sidecar to `out_dir`.
pub fn enhance_files(
    input: &Path,
    weights_path: &Path,
    out_dir: &Path,
    opts: &EnhanceOptions,
) -> AppResult<Artifacts> {
    let model = weights::load_model(weights_path)?;
    let (audio, stft_cfg) = read_input(input, &opts.stft)?;
    let opts = EnhanceOptions {
        stft: stft_cfg,
        ..*opts
    };
    let out = enhance_signal(&audio.channels, &model, &opts, &RustFft::new(), |_| {})?;
    create_dir(out_dir)?;
    let art = Artifacts::in_dir(out_dir);
    let sr = audio.sample_rate;
    wav::write(
        &art.speech,
        &Audio {
            sample_rate: sr,
            channels: out.speech,
        },
    )?;
    wav::write(
        &art.noise,
        &Audio {
            sample_rate: sr,
            channels: out.noise,
        },
    )?;
    ParamsDump::from_unsupervised(&out.params).save(&art.params)?;
    write_lines(
        &art.log,
        out.history.iter().map(|r| {
            json!({"iteration": r.iteration, "cost": r.cost, "acceptance_rate": r.acceptance_rate})
        }),
    )?;
    let m = &opts.mcem;
    let r = &opts.reconstruction;
    write_json(
        &art.metadata,
        &json!({
            "method": "mcem",
            "input": input.display().to_string(),
            "weights": weights_path.display().to_string(),
            "channels": audio.channels.len(),
            "samples": audio.len(),
            "stft": stft_json(&opts.stft),
            "mcem": {
                "em_iterations": m.em_iterations,
                "mh_iterations": m.mh_iterations,
                "burn_in": m.burn_in,
                "proposal_variance": m.proposal_variance,
                "noise_rank": m.noise_rank,
                "seed": m.seed,
            },
            "reconstruction": {
                "mh_iterations": r.iterations,
                "burn_in": r.burn_in,
                "proposal_variance": r.proposal_variance,
                "acceptance_rate": out.reconstruction_acceptance,
            },
            "iterations_run": out.history.len(),
            "final_cost": out.history.last().map(|h| h.cost),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(art)
}

/// `enhance-baseline`: as [`enhance_files`] with the supervised-NMF model.
pub fn enhance_baseline_files(
    input: &Path,
    dictionary_path: &Path,
    out_dir: &Path,
    cfg: &BaselineConfig,
    stft_cfg: &StftConfig,
    expected_rank: Option<usize>,
) -> AppResult<Artifacts> {
    let dict = weights::load_dictionary(dictionary_path)?;
    if let Some(k) = expected_rank {
        if k != dict.rank {
            return Err(AppError::Config(format!(
                "--ks {k} does not match the dictionary rank {}",
                dict.rank
            )));
        }
    }
    let (audio, stft_cfg) = read_input(input, stft_cfg)?;
    let out = enhance_baseline_signal(&audio.channels, &dict, cfg, &stft_cfg, &RustFft::new())?;
    create_dir(out_dir)?;
    let art = Artifacts::in_dir(out_dir);
    let sr = audio.sample_rate;
    wav::write(
        &art.speech,
        &Audio {
            sample_rate: sr,
            channels: out.speech,
        },
    )?;
    wav::write(
        &art.noise,
        &Audio {
            sample_rate: sr,
            channels: out.noise,
        },
    )?;
    ParamsDump::from_baseline(&out.outcome.params).save(&art.params)?;
    write_lines(
        &art.log,
        out.outcome
            .history
            .iter()
            .enumerate()
            .map(|(i, c)| json!({"iteration": i, "cost": c[5], "sub_update_costs": c})),
    )?;
    write_json(
        &art.metadata,
        &json!({
            "method": "baseline",
            "input": input.display().to_string(),
            "dictionary": dictionary_path.display().to_string(),
            "speech_rank": dict.rank,
            "channels": audio.channels.len(),
            "samples": audio.len(),
            "stft": stft_json(&stft_cfg),
            "iterations": cfg.iterations,
            "noise_rank": cfg.noise_rank,
            "seed": cfg.seed,
            "final_cost": out.outcome.history.last().map(|h| h[5]),
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(art)
}

/// Frame-wise power spectra (`N × F`, channel-averaged) of a waveform.
pub fn power_spectra(x: &MultichannelStft) -> Vec<f64> {
    (0..x.frames()).flat_map(|n| x.mean_power(n)).collect()
}

/// Collects the `.wav` files under `dir` (recursively, sorted by path).
pub fn list_wavs(dir: &Path) -> AppResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            AppError::io(&path, e.into())
        })?;
        let is_wav = entry
            .path()
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

/// `pretrain-nmf`: learns a speech dictionary from every WAV in `corpus`.
pub fn pretrain_from_corpus(
    corpus: &Path,
    rank: usize,
    cfg: &NmfTrainConfig,
    stft_cfg: &StftConfig,
) -> AppResult<baseline::NmfFit> {
    let files = list_wavs(corpus)?;
    if files.is_empty() {
        return Err(AppError::Config(format!(
            "{}: no WAV files found",
            corpus.display()
        )));
    }
    let fft = RustFft::new();
    let mut spectra = Vec::new();
    for path in &files {
        let audio = wav::read(path)?;
        let x = stft::analyze(&audio.channels, stft_cfg, &fft)?;
        spectra.extend(power_spectra(&x));
    }
    Ok(baseline::pretrain_dictionary(
        &spectra,
        stft_cfg.bins(),
        rank,
        cfg,
    )?)
}
