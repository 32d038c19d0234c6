use csfg_core::kernel1n::{build_kernels, lossy_coeffs, sf_response, transfer_matrix};
use csfg_core::kernelmn::MnSolver;
use csfg_core::metrics::{metrics_1n, metrics_streamed};
use csfg_core::{hermite_gauss_pump, pump_from_unitary, random_isometry, FrequencyGrid, GateParams, MultiPump};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_pair_round_trips(seed in 0u64..1000, n in prop::sample::select(vec![3usize, 5, 11])) {
        let g = FrequencyGrid::new(n, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_isometry(1, n, &mut rng);
        let c: Vec<Complex64> = u.row(0).iter().copied().collect();
        let back = g.analyze(&g.synthesize(&c));
        let err = c.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn sf_bins_are_unitary(gamma in 1e-3f64..50.0, eta in 0.0f64..10.0, l in -3i64..=3) {
        let g = FrequencyGrid::new(11, 8).unwrap();
        let sf = sf_response(&GateParams::new(gamma, eta, 0.0, 1.0).unwrap(), l, &g).unwrap();
        for (mu, nu) in sf.mu.iter().zip(&sf.nu) {
            prop_assert!((mu.norm_sqr() + nu.norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lossy_coefficients_conserve(gamma in 1e-3f64..50.0, eta in 1e-3f64..10.0, x in 0.0f64..5.0, t in 0.1f64..10.0) {
        let (mu, nu, ups) = lossy_coeffs(&GateParams::new(gamma, eta, x * gamma, t).unwrap()).unwrap();
        prop_assert!((mu * mu + nu * nu + ups * ups - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_are_phase_invariant(theta in 0.0f64..6.3, r in 1e-3f64..0.5) {
        let g = FrequencyGrid::new(7, 8).unwrap();
        let p = GateParams::from_ratio(r, &g).unwrap();
        let pump = hermite_gauss_pump(1, 0.9, &g).unwrap();
        let a = metrics_1n(&build_kernels(&p, &pump).unwrap()).unwrap();
        let b = metrics_1n(&build_kernels(&p, &pump.with_global_phase(theta)).unwrap()).unwrap();
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries().iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn isometry_bounded_metrics(seed in 0u64..1000, m in 1usize..4, r in 1e-3f64..0.5) {
        let g = FrequencyGrid::new(5, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mp = pump_from_unitary(&random_isometry(m, 5, &mut rng), &g).unwrap();
        let rep = metrics_streamed(&MnSolver::new(&GateParams::from_ratio(r, &g).unwrap(), &mp, None).unwrap()).unwrap();
        for (name, v) in rep.entries() {
            prop_assert!((0.0..=1.0 + 1e-9).contains(&v), "{name} = {v}");
        }
        prop_assert!(rep.fm_fidelity <= rep.pc_fidelity + 1e-9);
        prop_assert!(rep.fm_fidelity <= rep.hd_fidelity + 1e-9);
        prop_assert!((rep.hd_ce - rep.fm_ce).abs() < 1e-12);
    }

    #[test]
    fn transfer_rows_isometric(r in 1e-3f64..0.5, x in 0.0f64..2.0) {
        // quadrature residual, shrinking at second order
        let residual = |os: usize| {
            let g = FrequencyGrid::new(5, os).unwrap();
            let base = GateParams::from_ratio(r, &g).unwrap();
            let p = base.with_iota(x * base.gamma);
            let pump = MultiPump::single(hermite_gauss_pump(0, 0.6, &g).unwrap());
            transfer_matrix(&build_kernels(&p, pump.envelope(0)).unwrap()).isometry_residual()
        };
        let (coarse, fine) = (residual(16), residual(32));
        prop_assert!(coarse < 5e-3, "{coarse}");
        prop_assert!(fine < coarse / 3.0 || fine < 1e-12, "{coarse} {fine}");
    }
}
