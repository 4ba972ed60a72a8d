use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::{hermitize, solve_riccati, HermitianMatrix};
use crate::model::{Dims, NMF_FLOOR};
use crate::moments::{self, JointBasis};
use crate::nn::{Activation, Layer, Network, VaeModel};
use crate::testkit::{random_latents, random_model, random_params, random_stft};

fn dims(i: usize, f: usize, n: usize, k: usize) -> Dims {
    Dims {
        channels: i,
        bins: f,
        frames: n,
        noise_rank: k,
    }
}

struct Instance {
    x: MultichannelStft,
    params: UnsupervisedParams,
    model: VaeModel,
    chain: LatentChain,
}

fn instance(seed: u64, d: Dims, latent: usize, kept: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, latent, d.bins);
    let x = random_stft(&mut rng, d.channels, d.bins, d.frames);
    let params = random_params(&mut rng, d);
    let chain = LatentChain::from_samples(
        d.frames,
        latent,
        random_latents(&mut rng, kept * d.frames * latent),
    )
    .unwrap();
    Instance {
        x,
        params,
        model,
        chain,
    }
}

/// Scalar decoder `σ²(z) = exp(w z + b)` with a matching zero encoder.
fn scalar_model(w: f32, b: f32, bins: usize) -> VaeModel {
    let mut dec = Layer::zeros(1, bins, Activation::Identity);
    dec.weight.iter_mut().for_each(|v| *v = w);
    dec.bias.iter_mut().for_each(|v| *v = b);
    VaeModel::new(
        1,
        bins,
        Network {
            layers: vec![dec],
            standardization: None,
        },
        Network {
            layers: vec![Layer::zeros(bins, 2, Activation::Identity)],
            standardization: None,
        },
    )
    .unwrap()
}

fn scalar_params(
    bins: usize,
    frames: usize,
    r_s: f64,
    r_b: f64,
    noise: f64,
    gain: f64,
) -> UnsupervisedParams {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut p = UnsupervisedParams::init(dims(1, bins, frames, 1), &mut rng);
    p.spatial.w_b = vec![noise; bins];
    p.spatial.h_b = vec![1.0; frames];
    p.spatial.r_s = vec![HermitianMatrix::from_real_diagonal(&[r_s]); bins];
    p.spatial.r_b = vec![HermitianMatrix::from_real_diagonal(&[r_b]); bins];
    p.g = vec![gain; frames];
    p
}

#[test]
fn scalar_acceptance_matches_direct_ratio() {
    let model = scalar_model(0.75, -0.25, 1);
    let params = scalar_params(1, 1, 1.3, 0.8, 0.4, 1.7);
    let mut x = MultichannelStft::zeros(1, 1, 1, 0);
    x.set(0, 0, 0, Complex64::new(0.9, -1.1));
    let target = PosteriorTarget::new(&x, &params, &model).unwrap();
    let log_p = |z: f64| {
        let v = 1.7 * libm::exp(0.75 * z - 0.25) * 1.3 + 0.4 * 0.8;
        let pi = core::f64::consts::PI;
        -0.5 * z * z - 0.5 * libm::log(2.0 * pi) - libm::log(pi * v) - (0.81 + 1.21) / v
    };
    for (a, b) in [(0.1, 0.5), (0.5, 0.1), (-1.0, 2.0), (0.3, -0.4)] {
        let direct = (log_p(b) - log_p(a)).min(0.0);
        let got = target.log_acceptance(0, &[a], &[b]);
        assert!((got - direct).abs() < 1e-10, "{got} vs {direct}");
        let mut scratch = TargetScratch::default();
        assert!((target.log_density(0, &[a], &mut scratch) - log_p(a)).abs() < 1e-10);
    }
}

#[test]
fn identical_proposal_is_always_accepted() {
    let inst = instance(1, dims(2, 5, 3, 2), 2, 1);
    let target = PosteriorTarget::new(&inst.x, &inst.params, &inst.model).unwrap();
    let z = [0.3, -0.8];
    assert_eq!(target.log_acceptance(1, &z, &z), 0.0);
}

#[test]
fn non_finite_proposal_is_always_rejected() {
    let model = scalar_model(1000.0, 0.0, 2);
    let params = scalar_params(2, 1, 1.0, 1.0, 1.0, 1.0);
    let x = MultichannelStft::zeros(1, 2, 1, 0);
    let target = PosteriorTarget::new(&x, &params, &model).unwrap();
    assert_eq!(
        target.log_acceptance(0, &[0.0], &[1000.0]),
        f64::NEG_INFINITY
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let u: f64 = rng.random();
        assert!(!(libm::log(u) < f64::NEG_INFINITY));
    }
}

#[test]
fn acceptance_is_invariant_to_constant_shift() {
    for (a, b) in [(-3.0, -1.0), (-1.0, -3.0), (10.0, 10.0)] {
        let base = sampler::log_acceptance(a, b);
        for c in [-1e3, 7.5, 1e4] {
            assert!((sampler::log_acceptance(a + c, b + c) - base).abs() < 1e-9);
        }
    }
}

#[test]
fn single_kept_sample_bookkeeping() {
    let inst = instance(2, dims(2, 4, 3, 2), 2, 1);
    let cfg = SamplerConfig {
        iterations: 1,
        burn_in: 0,
        proposal_variance: 0.01,
    };
    let start = LatentChain::from_state(3, 2, vec![0.0; 6]).unwrap();
    let pass = e_step(&inst.x, &inst.params, &inst.model, &start, &cfg, 5, 0).unwrap();
    assert_eq!(pass.chain.kept(), 1);
    assert_eq!(pass.chain.samples(), pass.chain.states());
    assert!(cfg.validate().is_ok());
    assert!(SamplerConfig { burn_in: 1, ..cfg }.validate().is_err());
    assert!(SamplerConfig {
        proposal_variance: 0.0,
        ..cfg
    }
    .validate()
    .is_err());
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let inst = instance(3, dims(2, 6, 5, 2), 3, 1);
    let cfg = McemConfig::default().sampler();
    let start = init_chain(&inst.x, &inst.model, 9).unwrap();
    let a = e_step(&inst.x, &inst.params, &inst.model, &start, &cfg, 9, 4).unwrap();
    let b = e_step(&inst.x, &inst.params, &inst.model, &start, &cfg, 9, 4).unwrap();
    assert_eq!(a, b);
    let c = e_step(&inst.x, &inst.params, &inst.model, &start, &cfg, 10, 4).unwrap();
    assert_ne!(a.chain, c.chain);
    assert_eq!(a.chain.kept(), 10);
    assert!(a.acceptance_rate > 0.0 && a.acceptance_rate <= 1.0);
}

#[test]
fn concentrated_posterior_keeps_samples_near_mode() {
    let bins = 2000;
    let z_star = 0.6;
    let model = scalar_model(1.0, 0.0, bins);
    let params = scalar_params(bins, 1, 1.0, 1.0, 1e-9, 1.0);
    let mut x = MultichannelStft::zeros(1, bins, 1, 0);
    let amp = libm::sqrt(libm::exp(z_star));
    for f in 0..bins {
        let phase = f as f64;
        x.set(0, f, 0, Complex64::from_polar(amp, phase));
    }
    let cfg = McemConfig::default().sampler();
    let start = LatentChain::from_state(1, 1, vec![z_star + 0.3]).unwrap();
    let pass = e_step(&x, &params, &model, &start, &cfg, 1, 0).unwrap();
    let eps = libm::sqrt(cfg.proposal_variance);
    for &z in pass.chain.samples() {
        assert!((z - z_star).abs() < 3.0 * eps, "{z}");
    }
}

fn dense_cost(inst: &Instance, params: &UnsupervisedParams) -> f64 {
    let dec = inst.chain.decode_variances(&inst.model).unwrap();
    let (f_n, n_n) = (inst.x.bins(), inst.x.frames());
    let mut c = 0.0;
    for r in 0..inst.chain.kept() {
        for n in 0..n_n {
            let v = &dec[(r * n_n + n) * f_n..(r * n_n + n + 1) * f_n];
            for f in 0..f_n {
                let sigma = params.sigma_x(v, f, n);
                c += sigma.inverse(0.0).unwrap().quad_form(inst.x.bin(f, n))
                    + sigma.log_det().unwrap();
            }
        }
    }
    c
}

#[test]
fn q_tilde_matches_direct_summation() {
    for seed in 0..5 {
        let inst = instance(10 + seed, dims(2, 4, 3, 2), 2, 3);
        let q = q_tilde(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
        let direct = -dense_cost(&inst, &inst.params) / 3.0;
        assert!(
            (q - direct).abs() < 1e-10 * direct.abs().max(1.0),
            "{q} vs {direct}"
        );
    }
}

#[test]
fn q_tilde_scalar_reduction() {
    let inst = instance(20, dims(1, 3, 4, 2), 2, 1);
    let dec = inst.chain.decode_variances(&inst.model).unwrap();
    let mut expect = 0.0;
    for n in 0..4 {
        for f in 0..3 {
            let r_s = inst.params.spatial.r_s[f].trace();
            let r_b = inst.params.spatial.r_b[f].trace();
            let v = inst.params.g[n] * dec[n * 3 + f] * r_s
                + inst.params.spatial.noise_variance(f, n) * r_b;
            expect -= inst.x.get(0, f, n).norm_sqr() / v + libm::log(v);
        }
    }
    let q = q_tilde(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
    assert!((q - expect).abs() < 1e-10 * expect.abs());
}

#[test]
fn doubling_covariances_shifts_q_tilde_by_log_two() {
    let mut inst = instance(21, dims(2, 4, 3, 2), 2, 2);
    inst.x = MultichannelStft::zeros(2, 4, 3, 0);
    let q1 = q_tilde(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
    let mut doubled = inst.params.clone();
    doubled.g.iter_mut().for_each(|g| *g *= 2.0);
    doubled.spatial.w_b.iter_mut().for_each(|w| *w *= 2.0);
    let q2 = q_tilde(&inst.x, &doubled, &inst.model, &inst.chain).unwrap();
    let expect = (4 * 3 * 2) as f64 * core::f64::consts::LN_2;
    assert!((q1 - q2 - expect).abs() < 1e-10 * q1.abs().max(1.0));
}

/// One M-step sweep written with dense per-bin matrices: `Σ`, `Σ^{-1}` and
/// `M = Σ^{-1} x x^H Σ^{-1}` are recomputed from scratch before every block.
fn dense_m_step(inst: &Instance) -> UnsupervisedParams {
    let x = &inst.x;
    let dec = inst.chain.decode_variances(&inst.model).unwrap();
    let (i_ch, f_n, n_n) = (x.channels(), x.bins(), x.frames());
    let kept = inst.chain.kept();
    let k_b = inst.params.dims().noise_rank;
    let sv = |r: usize, f: usize, n: usize| dec[(r * n_n + n) * f_n + f];
    let mut p = inst.params.clone();

    // (Σ^{-1}, M) for all (r, f, n)
    let stats = |p: &UnsupervisedParams| {
        let mut out = Vec::new();
        for r in 0..kept {
            for f in 0..f_n {
                for n in 0..n_n {
                    let sigma = p.spatial.covariance(
                        f,
                        p.g[n] * sv(r, f, n),
                        p.spatial.noise_variance(f, n),
                    );
                    let inv = sigma.inverse(0.0).unwrap();
                    let y = inv.as_matrix().mul_vec(x.bin(f, n));
                    out.push((inv, HermitianMatrix::outer(&y)));
                }
            }
        }
        out
    };
    let idx = |r: usize, f: usize, n: usize| (r * f_n + f) * n_n + n;

    let st = stats(&p);
    let mut w = p.spatial.w_b.clone();
    for f in 0..f_n {
        for k in 0..k_b {
            let (mut num, mut den) = (0.0, 0.0);
            for r in 0..kept {
                for n in 0..n_n {
                    let (inv, m) = &st[idx(r, f, n)];
                    let h = p.spatial.h_b[k * n_n + n];
                    num += h * m.trace_product(&p.spatial.r_b[f]);
                    den += h * inv.trace_product(&p.spatial.r_b[f]);
                }
            }
            w[f * k_b + k] = (w[f * k_b + k] * libm::sqrt(num / den)).max(NMF_FLOOR);
        }
    }
    p.spatial.w_b = w;

    let st = stats(&p);
    let mut h = p.spatial.h_b.clone();
    for k in 0..k_b {
        for n in 0..n_n {
            let (mut num, mut den) = (0.0, 0.0);
            for r in 0..kept {
                for f in 0..f_n {
                    let (inv, m) = &st[idx(r, f, n)];
                    let wv = p.spatial.w_b[f * k_b + k];
                    num += wv * m.trace_product(&p.spatial.r_b[f]);
                    den += wv * inv.trace_product(&p.spatial.r_b[f]);
                }
            }
            h[k * n_n + n] = (h[k * n_n + n] * libm::sqrt(num / den)).max(NMF_FLOOR);
        }
    }
    p.spatial.h_b = h;

    let st = stats(&p);
    let mut g = p.g.clone();
    for n in 0..n_n {
        let (mut num, mut den) = (0.0, 0.0);
        for r in 0..kept {
            for f in 0..f_n {
                let (inv, m) = &st[idx(r, f, n)];
                num += sv(r, f, n) * m.trace_product(&p.spatial.r_s[f]);
                den += sv(r, f, n) * inv.trace_product(&p.spatial.r_s[f]);
            }
        }
        g[n] = (g[n] * libm::sqrt(num / den)).max(NMF_FLOOR);
    }
    p.g = g;

    for speech in [true, false] {
        let st = stats(&p);
        for f in 0..f_n {
            let mut psi = HermitianMatrix::zeros(i_ch);
            let mut phi = HermitianMatrix::zeros(i_ch);
            for r in 0..kept {
                for n in 0..n_n {
                    let kappa = if speech {
                        p.g[n] * sv(r, f, n)
                    } else {
                        p.spatial.noise_variance(f, n)
                    };
                    let (inv, m) = &st[idx(r, f, n)];
                    psi.add_scaled(kappa, inv);
                    phi.add_scaled(kappa, m);
                }
            }
            let current = if speech {
                &p.spatial.r_s[f]
            } else {
                &p.spatial.r_b[f]
            };
            let phi = phi.sandwich(current);
            let new = solve_riccati(&psi, &phi).unwrap().clamp_pd();
            if speech {
                p.spatial.r_s[f] = new;
            } else {
                p.spatial.r_b[f] = new;
            }
        }
    }
    p.normalize();
    p
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn max_scm_diff(a: &[HermitianMatrix], b: &[HermitianMatrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.as_matrix().max_abs_diff(y.as_matrix()) / y.as_matrix().norm().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn m_step_matches_dense_formulas() {
    for (seed, i_ch) in [(30, 1), (31, 2), (32, 2), (33, 3)] {
        let inst = instance(seed, dims(i_ch, 5, 4, 2), 2, 3);
        let fast = m_step(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
        let dense = dense_m_step(&inst);
        assert!(max_diff(&fast.spatial.w_b, &dense.spatial.w_b) < 1e-8);
        assert!(max_diff(&fast.spatial.h_b, &dense.spatial.h_b) < 1e-8);
        assert!(max_diff(&fast.g, &dense.g) < 1e-8);
        assert!(max_scm_diff(&fast.spatial.r_s, &dense.spatial.r_s) < 1e-8);
        assert!(max_scm_diff(&fast.spatial.r_b, &dense.spatial.r_b) < 1e-8);
    }
}

#[test]
fn joint_basis_matches_dense_inverse() {
    let inst = instance(40, dims(3, 3, 2, 2), 2, 1);
    let basis =
        JointBasis::new(&inst.x, &inst.params.spatial.r_s, &inst.params.spatial.r_b).unwrap();
    for f in 0..3 {
        let sigma = inst.params.spatial.covariance(f, 0.7, 1.3);
        let dense = sigma.inverse(0.0).unwrap();
        assert!(
            basis
                .inverse(f, 0.7, 1.3)
                .as_matrix()
                .max_abs_diff(dense.as_matrix())
                < 1e-10
        );
        let lhs = basis.cost_term(f, 1, 0.7, 1.3);
        let rhs = dense.quad_form(inst.x.bin(f, 1)) + sigma.log_det().unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }
}

#[test]
fn m_step_sub_updates_do_not_increase_cost() {
    for seed in 0..20 {
        let inst = instance(100 + seed, dims(2, 8, 5, 2), 3, 3);
        let (_, costs) = m_step_traced(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "seed {seed}: {costs:?}");
        }
        let direct = dense_cost(&inst, &inst.params);
        assert!((costs[0] - direct).abs() < 1e-9 * direct.abs());
    }
}

#[test]
fn scalar_noise_dictionary_update() {
    // I = 1, speech term zero, w = h = 1, |x|² = 4: w ← w √(|x|² / (w h)) = 2
    let mut x = MultichannelStft::zeros(1, 1, 1, 0);
    x.set(0, 0, 0, Complex64::new(0.0, 2.0));
    let one = [HermitianMatrix::identity(1)];
    let basis = JointBasis::new(&x, &one, &one).unwrap();
    let w = moments::noise_dictionary_step(&basis, 1, &|_, _, _| 0.0, &[1.0], &[1.0], &[1.0], 1);
    assert!((w[0] - 2.0).abs() < 1e-12);
}

#[test]
fn stationary_point_is_fixed() {
    // noise variance equal to |x|² and no speech: numerator = denominator
    let mut x = MultichannelStft::zeros(1, 1, 2, 0);
    x.set(0, 0, 0, Complex64::new(1.5, 0.0));
    x.set(0, 0, 1, Complex64::new(0.0, -0.5));
    let one = [HermitianMatrix::identity(1)];
    let basis = JointBasis::new(&x, &one, &one).unwrap();
    let noise = [2.25, 0.25];
    let h = [2.25, 0.25];
    let zero = |_: usize, _: usize, _: usize| 0.0;
    let w = moments::noise_dictionary_step(&basis, 1, &zero, &noise, &[1.0], &h, 1);
    assert!((w[0] - 1.0).abs() < 1e-10);
    let h_new = moments::activation_step(
        &basis,
        1,
        &zero,
        &noise,
        moments::Source::Noise,
        &[1.0],
        &h,
        1,
    );
    assert!(max_diff(&h_new, &h) < 1e-10);
}

#[test]
fn riccati_updates_keep_scms_definite_and_normalized() {
    let inst = instance(50, dims(3, 6, 4, 2), 2, 2);
    let p = m_step(&inst.x, &inst.params, &inst.model, &inst.chain).unwrap();
    for (rs, rb) in p.spatial.r_s.iter().zip(&p.spatial.r_b) {
        assert!(rs.min_eigenvalue() > 0.0 && rb.min_eigenvalue() > 0.0);
        assert!((rb.trace() - 1.0).abs() < 1e-12);
        let herm = hermitize(rs.as_matrix());
        assert!(herm.as_matrix().max_abs_diff(rs.as_matrix()) < 1e-15);
    }
}

#[test]
fn zero_iterations_return_initial_params() {
    let inst = instance(60, dims(2, 4, 3, 2), 2, 1);
    let cfg = McemConfig {
        em_iterations: 0,
        noise_rank: 2,
        seed: 4,
        ..McemConfig::default()
    };
    let out = run(&inst.x, &inst.model, &cfg, |_| {}).unwrap();
    assert_eq!(out.params, initial_params(&inst.x, 2, 4));
    assert!(out.history.is_empty());
}

#[test]
fn run_is_deterministic_and_descends_on_model_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let model = random_model(&mut rng, 2, 8);
    let truth = random_params(&mut rng, dims(2, 8, 12, 2));
    let data = crate::simulate::generate_from_model(&model, &truth, 0, 5).unwrap();
    let cfg = McemConfig {
        em_iterations: 6,
        noise_rank: 2,
        seed: 11,
        ..McemConfig::default()
    };
    let mut seen = 0;
    let a = run(&data.mixture, &model, &cfg, |r| {
        assert_eq!(r.iteration, seen);
        seen += 1;
    })
    .unwrap();
    let b = run(&data.mixture, &model, &cfg, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.history.len(), 6);
    let init = initial_params(&data.mixture, 2, 11);
    let c0 = cost(&data.mixture, &init, &model, &a.chain).unwrap();
    let c1 = cost(&data.mixture, &a.params, &model, &a.chain).unwrap();
    assert!(c1 <= c0, "{c1} > {c0}");
}

#[test]
fn incompatible_inputs_are_rejected() {
    let inst = instance(80, dims(2, 4, 3, 2), 2, 1);
    let other = random_model(&mut ChaCha8Rng::seed_from_u64(1), 2, 5);
    assert!(cost(&inst.x, &inst.params, &other, &inst.chain).is_err());
    let empty = LatentChain::from_state(3, 2, vec![0.0; 6]).unwrap();
    assert!(m_step(&inst.x, &inst.params, &inst.model, &empty).is_err());
    assert!(LatentChain::from_samples(3, 2, vec![0.0; 7]).is_err());
    let bad = McemConfig {
        burn_in: 40,
        ..McemConfig::default()
    };
    assert!(bad.validate().is_err());
}
