use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcvae::dataset;
use mcvae::pipeline::{self, EnhanceOptions};
use mcvae::report::{self, EvalItem, Report};
use mcvae::{weights, AppError, AppResult, RustFft};
use mcvae_core::baseline::{BaselineConfig, NmfTrainConfig};
use mcvae_core::mcem::{McemConfig, SamplerConfig};
use mcvae_core::stft::StftConfig;

#[derive(Parser)]
#[command(
    name = "mcvae",
    version,
    about = "Multichannel speech enhancement with a VAE speech prior"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StftArgs {
    /// STFT window length in samples (published setting: 1024).
    #[arg(long, default_value_t = 1024)]
    window_length: usize,
    /// STFT hop in samples (published setting: 256).
    #[arg(long, default_value_t = 256)]
    hop: usize,
}

impl StftArgs {
    fn config(&self) -> StftConfig {
        StftConfig {
            sample_rate: 16_000,
            window_length: self.window_length,
            hop: self.hop,
            fft_size: self.window_length,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a multichannel mixture with the VAE speech model.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        /// MCEM iterations (published setting).
        #[arg(long, default_value_t = 50)]
        em_iters: usize,
        /// Metropolis-Hastings iterations per E-step (published setting).
        #[arg(long, default_value_t = 40)]
        mh_iters: usize,
        /// Discarded MH iterations per E-step (published setting).
        #[arg(long, default_value_t = 30)]
        burn_in: usize,
        /// Random-walk proposal variance (published setting).
        #[arg(long, default_value_t = 0.01)]
        eps2: f64,
        /// Noise NMF rank (published setting).
        #[arg(long, default_value_t = 10)]
        kb: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// MH iterations for the final Wiener estimate (project default).
        #[arg(long, default_value_t = 100)]
        recon_iters: usize,
        /// Discarded iterations of the final chain (project default).
        #[arg(long, default_value_t = 50)]
        recon_burn_in: usize,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Enhance a mixture with the supervised NMF baseline.
    EnhanceBaseline {
        #[arg(long)]
        input: PathBuf,
        /// Speech dictionary written by `pretrain-nmf`.
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// MM iterations (project default).
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Expected speech rank; checked against the dictionary.
        #[arg(long)]
        ks: Option<usize>,
        /// Noise NMF rank (published setting).
        #[arg(long, default_value_t = 10)]
        kb: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        stft: StftArgs,
    },
    /// Create spatialized mixtures from a JSON manifest.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score estimates with SI-SDR.
    Evaluate {
        #[arg(long, required_unless_present = "list")]
        reference: Option<PathBuf>,
        #[arg(long, required_unless_present = "list")]
        estimate: Option<PathBuf>,
        /// Unprocessed mixture, to report the improvement.
        #[arg(long)]
        mixture: Option<PathBuf>,
        /// JSON list of {reference, estimate, mixture?} entries.
        #[arg(long, conflicts_with_all = ["reference", "estimate", "mixture"])]
        list: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Learn a speech NMF dictionary from a directory of clean WAV files.
    PretrainNmf {
        #[arg(long)]
        corpus: PathBuf,
        /// Speech rank (published settings: 8, 16, 32).
        #[arg(long)]
        ks: usize,
        #[arg(long)]
        out: PathBuf,
        /// MM iterations (project default).
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        stft: StftArgs,
    },
}

fn run(cli: Cli) -> AppResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| AppError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Enhance {
            input,
            weights,
            output,
            em_iters,
            mh_iters,
            burn_in,
            eps2,
            kb,
            seed,
            recon_iters,
            recon_burn_in,
            stft,
        } => {
            let opts = EnhanceOptions {
                stft: stft.config(),
                mcem: McemConfig {
                    em_iterations: em_iters,
                    mh_iterations: mh_iters,
                    burn_in,
                    proposal_variance: eps2,
                    noise_rank: kb,
                    seed,
                },
                reconstruction: SamplerConfig {
                    iterations: recon_iters,
                    burn_in: recon_burn_in,
                    proposal_variance: eps2,
                },
            };
            pipeline::enhance_files(&input, &weights, &output, &opts)?;
        }
        Command::EnhanceBaseline {
            input,
            dictionary,
            output,
            iters,
            ks,
            kb,
            seed,
            stft,
        } => {
            let cfg = BaselineConfig {
                iterations: iters,
                noise_rank: kb,
                seed,
            };
            pipeline::enhance_baseline_files(
                &input,
                &dictionary,
                &output,
                &cfg,
                &stft.config(),
                ks,
            )?;
        }
        Command::Simulate { manifest } => {
            let fft = RustFft::new();
            for item in dataset::load_manifest(&manifest)? {
                dataset::simulate_item(&item, &fft)?;
            }
        }
        Command::Evaluate {
            reference,
            estimate,
            mixture,
            list,
            report,
            csv,
        } => {
            let items = match list {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
                    serde_json::from_str::<Vec<EvalItem>>(&text)
                        .map_err(|e| AppError::format(&path, e.to_string()))?
                }
                None => vec![EvalItem {
                    reference: reference.expect("required by clap"),
                    estimate: estimate.expect("required by clap"),
                    mixture,
                }],
            };
            let scored = items
                .iter()
                .map(report::evaluate_files)
                .collect::<AppResult<Vec<_>>>()?;
            let rep = Report::new(scored);
            rep.write_json(&report)?;
            if let Some(csv) = csv {
                rep.write_csv(&csv)?;
            }
            if let Some(s) = rep.si_sdr_out {
                println!(
                    "SI-SDR out: median {:.2} dB, mean {:.2} dB",
                    s.median, s.mean
                );
            }
            if let Some(s) = rep.improvement {
                println!(
                    "improvement: median {:.2} dB, mean {:.2} dB",
                    s.median, s.mean
                );
            }
        }
        Command::PretrainNmf {
            corpus,
            ks,
            out,
            iters,
            seed,
            stft,
        } => {
            let cfg = NmfTrainConfig {
                iterations: iters,
                seed,
                ..NmfTrainConfig::default()
            };
            let fit = pipeline::pretrain_from_corpus(&corpus, ks, &cfg, &stft.config())?;
            weights::save_dictionary(&out, &fit.dictionary)?;
            if let Some(c) = fit.costs.last() {
                println!("{} iterations, final IS cost {c:.6e}", fit.costs.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
