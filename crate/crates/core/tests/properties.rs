use mcvae_core::fft::NaiveDft;
use mcvae_core::linalg::{hermitize, solve_riccati, HermitianMatrix, SquareMatrix};
use mcvae_core::metrics::{si_sdr, SI_SDR_CAP};
use mcvae_core::simulate::mix;
use mcvae_core::stft::{analyze, synthesize, StftConfig};
use mcvae_core::Complex64;
use proptest::prelude::*;

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn pd(dim: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |e| {
        let entries: Vec<Complex64> = e
            .into_iter()
            .map(|(re, im)| Complex64::new(re, im))
            .collect();
        let a = SquareMatrix::from_entries(dim, &entries).unwrap();
        hermitize(&(&a * &a.adjoint())).combine(1.0, &HermitianMatrix::identity(dim), 0.05)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip_any_length(
        x in signal(1..300),
        y in signal(1..300),
        shape in prop::sample::select(vec![(16usize, 8usize, 16usize), (16, 4, 16), (24, 8, 32), (12, 4, 12)]),
    ) {
        let len = x.len().min(y.len());
        let sig = vec![x[..len].to_vec(), y[..len].to_vec()];
        let cfg = StftConfig { sample_rate: 8000, window_length: shape.0, hop: shape.1, fft_size: shape.2 };
        let spec = analyze(&sig, &cfg, &NaiveDft).unwrap();
        let back = synthesize(&spec, &cfg, &NaiveDft).unwrap();
        prop_assert_eq!(back[0].len(), len);
        for (a, b) in sig.iter().flatten().zip(back.iter().flatten()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn riccati_residual_small(psi in pd(3), phi in pd(3)) {
        let r = solve_riccati(&psi, &phi).unwrap();
        let rpr = &(r.as_matrix() * psi.as_matrix()) * r.as_matrix();
        let res = (&rpr - phi.as_matrix()).norm() / phi.as_matrix().norm();
        prop_assert!(res < 1e-9, "residual {}", res);
        prop_assert!(r.min_eigenvalue() >= 0.0);
    }

    #[test]
    fn si_sdr_is_scale_invariant(x in signal(8..64), noise in signal(8..64), gain in 0.01f64..100.0) {
        let len = x.len().min(noise.len());
        prop_assume!(x[..len].iter().any(|v| v.abs() > 1e-3));
        let r = vec![x[..len].to_vec()];
        let e = vec![x[..len].iter().zip(&noise[..len]).map(|(a, b)| a + 0.3 * b).collect::<Vec<f64>>()];
        let scaled = vec![e[0].iter().map(|v| v * gain).collect::<Vec<f64>>()];
        let a = si_sdr(&r, &e).unwrap();
        let b = si_sdr(&r, &scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
        prop_assert!((-SI_SDR_CAP..=SI_SDR_CAP).contains(&a));
    }

    #[test]
    fn mix_hits_requested_snr(s in signal(16..128), b in signal(4..64), snr in -10.0f64..20.0) {
        prop_assume!(s.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let m = mix(std::slice::from_ref(&s), &[b], snr).unwrap();
        let power = |c: &[Vec<f64>]| c.iter().flatten().map(|v| v * v).sum::<f64>();
        let got = 10.0 * (power(&m.speech) / power(&m.noise)).log10();
        prop_assert!((got - snr).abs() < 1e-9);
        for ((x, a), c) in m.mixture[0].iter().zip(&m.speech[0]).zip(&m.noise[0]) {
            prop_assert!((x - a - c).abs() < 1e-12);
        }
    }
}
