mod common;

use microcanon::{classify, g2, in_domain, power_set, solve_full, solve_reduced, QuadratureParams, Regime};
use proptest::prelude::*;

fn q() -> QuadratureParams {
    QuadratureParams::default()
}

#[test]
fn g2_of_two_powers() {
    let s = power_set(&[1.0, 2.0]).unwrap();
    for v in [0.5, 1.0, 2.0, 4.0] {
        // exp(mean v) has second moment 2v².
        assert!((g2(&s, &[v], &q()).unwrap() - 2.0 * v * v).abs() <= 1e-6);
    }
}

#[test]
fn classification_examples() {
    let s = power_set(&[1.0, 2.0]).unwrap();
    assert_eq!(classify(&s, &[1.0, 3.0], &q()).unwrap().regime, Regime::Extraneous);
    let r = classify(&s, &[1.0, 1.5], &q()).unwrap();
    assert_eq!(r.regime, Regime::InteriorS1);
    assert!(r.full.unwrap().p[1] < 0.0);
    assert_eq!(classify(&s, &[1.0, 0.5], &q()).unwrap().regime, Regime::Inadmissible);
    let s3 = power_set(&[1.0, 2.0, 3.0]).unwrap();
    let r = classify(&s3, &[1.0, 2.5, 7.0], &q()).unwrap();
    assert_eq!(r.regime, Regime::FullTiltS2);
    let full = r.full.unwrap();
    assert!(full.p[2] < 0.0 && full.residual <= 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_solution_reproduces_g2(v in 0.2..5.0f64) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        // The reduced problem is solvable for every first moment here.
        let sol = solve_reduced(&s, &[v], &q()).unwrap();
        prop_assert!(sol.residual <= 1e-8);
        prop_assert!(in_domain(&s, &sol.p));
        let g = g2(&s, &[v], &q()).unwrap();
        let (_, m) = common::tilt(&[1.0, 2.0], &sol.p);
        prop_assert!((g - m[1]).abs() <= 1e-8 * g.max(1.0), "{g} vs {}", m[1]);
    }

    #[test]
    fn regimes_on_either_side_of_g2(v in 0.3..3.0f64, frac in 0.05..0.9f64) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let g = 2.0 * v * v;
        prop_assert_eq!(classify(&s, &[v, g + 1.0], &q()).unwrap().regime, Regime::Extraneous);
        // Strictly between g₁ = v² and g₂.
        let below = g - frac * v * v;
        let r = classify(&s, &[v, below], &q()).unwrap();
        prop_assert_eq!(r.regime, Regime::InteriorS1);
        let full = r.full.unwrap();
        prop_assert!(full.residual <= 1e-8 && full.p[1] < 0.0 && in_domain(&s, &full.p));
    }

    #[test]
    fn full_solutions_match_targets(p1 in -2.0..2.0f64, p2 in -1.0..1.0f64, p3 in -1.0..-0.05f64) {
        let s = power_set(&[1.0, 2.0, 3.0]).unwrap();
        let (_, a) = common::tilt(&[1.0, 2.0, 3.0], &[p1, p2, p3]);
        let sol = solve_full(&s, &a, &q()).unwrap();
        prop_assert!(sol.residual <= 1e-8);
        prop_assert!(in_domain(&s, &sol.p));
        for (x, y) in sol.p.iter().zip([p1, p2, p3]) {
            prop_assert!((x - y).abs() < 1e-5, "{:?} vs {:?}", sol.p, (p1, p2, p3));
        }
    }
}
