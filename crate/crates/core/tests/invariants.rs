// Copyright 2026 The errfilt Authors
// SPDX-License-Identifier: Apache-2.0

use errfilt::codec::Codec;
use errfilt::filtration::{run_exact, run_monte_carlo, run_nonuniform, ChannelNoise, FiltrationConfig};
use errfilt::hilbert::{random_state, random_unitary};
use errfilt::montecarlo::McPlan;
use errfilt::noise::{PhaseDistribution, PhaseNoiseSpec};
use errfilt::purification::{
    fidelity_closed_form, fidelity_unfiltered, fourier_decoder_a, protocol1_explicit, protocol1_fidelity,
    protocol2_fidelity, purify, rho_after_noise, total_success_closed_form, DecoderKind, PurifyConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn success_probability_closed_form(t in 1usize..7, a2 in 0.0f64..=1.0) {
        let cfg = FiltrationConfig::uniform(Codec::fourier(t).unwrap(), a2).unwrap();
        let out = run_exact(&cfg).unwrap();
        prop_assert!((out.p_success - (a2 + (1.0 - a2) / t as f64)).abs() < 1e-12);
        prop_assert!((out.p_success_no_error + out.p_success_error - out.p_success).abs() < 1e-12);
    }

    #[test]
    fn filtered_error_never_exceeds_bound(alphas in proptest::collection::vec(0.0f64..=1.0, 2..7)) {
        let t = alphas.len();
        let spec = PhaseNoiseSpec::from_alphas(&alphas).unwrap();
        let cfg = FiltrationConfig::new(Codec::fourier(t).unwrap(), ChannelNoise::Phase(spec)).unwrap();
        let rep = run_nonuniform(&cfg).unwrap();
        prop_assert!(rep.bound_holds);
        prop_assert!((rep.outcome.p_success_no_error - rep.predicted_no_error).abs() < 1e-12);
        prop_assert!((rep.outcome.p_success_error - rep.predicted_error).abs() < 1e-12);
    }

    #[test]
    fn window_beats_unfiltered_pair(n in 1usize..7, m_frac in 0.0f64..1.0, p in 0.0f64..=1.0) {
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let out = purify(&PurifyConfig::new(n, m, p, DecoderKind::FourierConjugatePair).unwrap()).unwrap();
        prop_assert!((out.fidelity_f_prime - fidelity_closed_form(n, m, p)).abs() < 1e-12);
        prop_assert!(out.fidelity_f_prime >= fidelity_unfiltered(m, p) - 1e-12);
        prop_assert!(out.rho_f.eigenvalues().iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn fourier_decoder_is_optimal_for_protocol1(s in 1usize..7, r_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let r = 1 + ((s - 1) as f64 * r_frac) as usize;
        let u = random_unitary(s, &mut ChaCha8Rng::seed_from_u64(seed));
        let rand_rep = protocol1_explicit(&u, r, 0.5).unwrap();
        let best = protocol1_explicit(&fourier_decoder_a(s), r, 0.5).unwrap();
        prop_assert!(rand_rep.y >= rand_rep.y_bound - 1e-12);
        prop_assert!(rand_rep.fidelity <= best.fidelity + 1e-12);
        prop_assert!((best.fidelity - protocol1_fidelity(s, r, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn protocol2_fidelity_grows_with_t(s in 1usize..6, seed in any::<u64>(), a2 in 0.0f64..=1.0) {
        let a = random_state(s, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut prev = 0.0;
        for t in 1..20 {
            let f = protocol2_fidelity(&a, a2, t).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
            prop_assert!(f >= prev - 1e-12);
            prev = f;
        }
    }

    #[test]
    fn pair_windows_approach_p_over_even_n(p in 0.0f64..=1.0) {
        let gaps: Vec<f64> = (1..=32).map(|h| (total_success_closed_form(2 * h, 2, p) - p).abs()).collect();
        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
    }

    #[test]
    fn noise_state_is_a_density_matrix(n in 1usize..6, p in 0.0f64..=1.0) {
        let rho = rho_after_noise(n, p).unwrap();
        prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
        prop_assert!(rho.eigenvalues().iter().all(|&e| e >= -1e-12));
    }
}

#[test]
fn monte_carlo_is_reproducible_per_seed_and_workers() {
    let cfg = FiltrationConfig::uniform(Codec::fourier(3).unwrap().multiplexed(2).unwrap(), 0.7).unwrap();
    let plan = McPlan::new(5_000, 9, 3).unwrap();
    let a = run_monte_carlo(&cfg, &plan, PhaseDistribution::default()).unwrap();
    let b = run_monte_carlo(&cfg, &plan, PhaseDistribution::default()).unwrap();
    assert_eq!(a, b);
    let exact = run_exact(&cfg).unwrap();
    assert!(a.p_success.agrees_with(exact.p_success, 4.0));
    assert!(a.visibility.unwrap().agrees_with(exact.visibility.unwrap(), 4.0));
}

#[test]
fn wrapped_gaussian_matches_exact_too() {
    let cfg = FiltrationConfig::uniform(Codec::fourier(4).unwrap(), 0.8).unwrap();
    let plan = McPlan::new(20_000, 5, 2).unwrap();
    let mc = run_monte_carlo(&cfg, &plan, PhaseDistribution::WrappedGaussian).unwrap();
    let exact = run_exact(&cfg).unwrap();
    assert!(mc.p_success_no_error.agrees_with(exact.p_success_no_error, 4.0));
    assert!(mc.p_success_error.agrees_with(exact.p_success_error, 4.0));
}

#[test]
fn mismatched_noise_length_is_rejected() {
    let spec = PhaseNoiseSpec::uniform(3, 0.9).unwrap();
    let err = FiltrationConfig::new(Codec::fourier(4).unwrap(), ChannelNoise::Phase(spec));
    assert!(err.is_err());
}
