use microcanon::diagnostics::ks_distance_with;
use microcanon::sampler::{
    brute_force_conditional, brute_force_marginal, run_chain, run_chains, sample_tilted, ChainParams, ShellSpec,
};
use microcanon::{power_set, QuadratureParams, TiltedDensity};
use proptest::prelude::*;

fn two_powers(n: usize, delta: f64, a: [f64; 2]) -> ShellSpec {
    ShellSpec::new(power_set(&[1.0, 2.0]).unwrap(), n, delta, a.to_vec()).unwrap()
}

fn column(states: &[Vec<f64>], j: usize) -> Vec<f64> {
    states.iter().map(|s| s[j]).collect()
}

/// Two-sample KS distance.
fn ks_two(a: &[f64], b: &[f64]) -> f64 {
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    ks_distance_with(a, |x| sorted.partition_point(|v| *v <= x) as f64 / m).unwrap()
}

/// Marginal CDF of `x₁` for the uniform law on `{x₁ + x₂ ∈ [2 − 2δ, 2 + 2δ]}`.
fn strip_cdf(delta: f64) -> impl Fn(f64) -> f64 {
    let (lo, hi) = (2.0 - 2.0 * delta, 2.0 + 2.0 * delta);
    let area = 4.0 * delta * lo + 0.5 * (4.0 * delta).powi(2);
    move |x: f64| {
        let x = x.clamp(0.0, hi);
        if x <= lo {
            4.0 * delta * x / area
        } else {
            (4.0 * delta * lo + 0.5 * ((4.0 * delta).powi(2) - (hi - x).powi(2))) / area
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn states_stay_in_shell(n in 4usize..24, delta in 0.05..0.3f64, b in 1.3..3.5f64, seed in 0u64..1000) {
        let spec = two_powers(n, delta, [1.0, b]);
        let params = ChainParams { burn_in: 200, n_samples: 300, ..ChainParams::default() };
        let batch = run_chain(&spec, &params, seed).unwrap();
        prop_assert_eq!(batch.states.len(), 300);
        for (x, r) in batch.states.iter().zip(&batch.shell_residuals) {
            prop_assert!(spec.contains(x));
            prop_assert!(*r <= delta);
        }
    }

    #[test]
    fn tilted_moments_within_four_sigma(p1 in -1.0..0.9f64, p2 in -0.8..-0.05f64, seed in 0u64..1000) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let d = TiltedDensity::new(&s, &[p1, p2], &QuadratureParams::default()).unwrap();
        let draws: Vec<f64> = sample_tilted(&d, 20, 500, seed).unwrap().concat();
        let count = draws.len() as f64;
        let cov = d.covariance();
        for (i, e) in [1, 2].into_iter().enumerate() {
            let mean = draws.iter().map(|x| x.powi(e)).sum::<f64>() / count;
            let sigma = (cov[(i, i)] / count).sqrt();
            prop_assert!((mean - d.moments()[i]).abs() <= 4.0 * sigma, "moment {e}: {mean} vs {}", d.moments()[i]);
        }
    }
}

#[test]
fn unreachable_shell_is_reported() {
    // With mean 1, two coordinates have mean square at most 2(1 + δ)².
    let spec = two_powers(2, 0.05, [1.0, 3.0]);
    let err = run_chain(&spec, &ChainParams::default(), 0).unwrap_err();
    assert!(matches!(err, microcanon::Error::Feasibility(_)), "{err:?}");
}

#[test]
fn chains_are_deterministic() {
    let spec = two_powers(8, 0.1, [1.0, 1.6]);
    let params = ChainParams { burn_in: 100, n_samples: 200, ..ChainParams::default() };
    assert_eq!(run_chain(&spec, &params, 11).unwrap(), run_chain(&spec, &params, 11).unwrap());
    assert_ne!(run_chain(&spec, &params, 11).unwrap().states, run_chain(&spec, &params, 12).unwrap().states);
    let seeds = [3, 4, 5];
    assert_eq!(run_chains(&spec, &params, &seeds).unwrap(), run_chains(&spec, &params, &seeds).unwrap());
}

#[test]
fn coordinates_are_exchangeable() {
    let n = 10;
    let spec = two_powers(n, 0.1, [1.0, 1.6]);
    let params = ChainParams { burn_in: 500, thin: 5, n_samples: 5000, ..ChainParams::default() };
    let batches = run_chains(&spec, &params, &[1, 2, 3, 4]).unwrap();
    let states: Vec<Vec<f64>> = batches.into_iter().flat_map(|b| b.states).collect();
    let ks = ks_two(&column(&states, 0), &column(&states, n.div_ceil(2) - 1));
    assert!(ks <= 0.03, "ks {ks}");
}

#[test]
fn strip_oracle_matches_geometry() {
    let delta = 0.05;
    let spec = ShellSpec::new(power_set(&[1.0]).unwrap(), 2, delta, vec![1.0]).unwrap();
    let table = brute_force_conditional(&spec, 400).unwrap();
    assert!((table.total_mass() - 1.0).abs() <= 1e-4);
    let exact = strip_cdf(delta);
    for i in 0..=200 {
        let x = 2.2 * i as f64 / 200.0;
        assert!((table.cdf_at(x) - exact(x)).abs() <= 5e-3, "x {x}: {} vs {}", table.cdf_at(x), exact(x));
    }
    let other = brute_force_marginal(&spec, 400, 1).unwrap();
    assert!(table.density.iter().zip(&other.density).all(|(a, b)| (a - b).abs() <= 1e-9));
}

#[test]
fn strip_chain_matches_geometry() {
    let delta = 0.05;
    let spec = ShellSpec::new(power_set(&[1.0]).unwrap(), 2, delta, vec![1.0]).unwrap();
    let params = ChainParams { burn_in: 500, thin: 5, n_samples: 10000, ..ChainParams::default() };
    let batch = run_chain(&spec, &params, 9).unwrap();
    let ks = ks_distance_with(&column(&batch.states, 0), strip_cdf(delta)).unwrap();
    assert!(ks <= 0.03, "ks {ks}");
}

#[test]
fn short_chain_matches_oracle() {
    let spec = two_powers(2, 0.15, [1.0, 1.6]);
    let table = brute_force_conditional(&spec, 300).unwrap();
    let params = ChainParams { burn_in: 500, thin: 5, n_samples: 5000, ..ChainParams::default() };
    let states: Vec<Vec<f64>> = run_chains(&spec, &params, &[21, 22, 23, 24])
        .unwrap()
        .into_iter()
        .flat_map(|b| b.states)
        .collect();
    let ks = ks_distance_with(&column(&states, 0), |x| table.cdf_at(x)).unwrap();
    assert!(ks <= 0.03, "ks {ks}");
}
