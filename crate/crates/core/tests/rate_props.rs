mod common;

use microcanon::rate::entropy;
use microcanon::{jmax_projected, power_set, rate_i, rate_scan, QuadratureParams, TiltedDensity};
use proptest::prelude::*;

fn q() -> QuadratureParams {
    QuadratureParams::default()
}

fn round_trip(exps: &[f64], p: &[f64]) -> Result<(), TestCaseError> {
    let s = power_set(exps).unwrap();
    let (_, m) = common::tilt(exps, p);
    let h = common::log_partition(exps, p);
    let want = p.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() - h;
    let r = rate_i(&s, &m, &q()).unwrap();
    prop_assert!((r.value - want).abs() <= 1e-6, "value {} vs {want}", r.value);
    let got = r.maximizer.unwrap();
    for (g, w) in got.iter().zip(p) {
        prop_assert!((g - w).abs() <= 1e-4, "maximizer {got:?} vs {p:?}");
    }
    prop_assert!(!r.on_boundary);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn legendre_round_trip_two(p1 in -2.0..2.0f64, p2 in -1.0..-0.05f64) {
        round_trip(&[1.0, 2.0], &[p1, p2])?;
    }

    #[test]
    fn legendre_round_trip_three(p1 in -1.0..1.0f64, p2 in -1.0..1.0f64, p3 in -1.0..-0.05f64) {
        round_trip(&[1.0, 2.0, 3.0], &[p1, p2, p3])?;
    }

    #[test]
    fn non_increasing_in_last_moment(v in 0.5..2.0f64, lo in 1.05..1.9f64, step in 0.05..0.5f64) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let grid: Vec<f64> = (0..6).map(|i| v * v * (lo + step * i as f64)).collect();
        let vals: Vec<f64> = rate_scan(&s, &[v], &grid, &q()).unwrap().iter().map(|r| r.value).collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{vals:?}");
        }
    }

    #[test]
    fn constant_past_g2(v in 0.5..2.0f64, s1 in 0.01..5.0f64, t1 in 0.01..5.0f64) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let g = 2.0 * v * v;
        let a = rate_i(&s, &[v, g + s1], &q()).unwrap().value;
        let b = rate_i(&s, &[v, g + t1], &q()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }

    #[test]
    fn relative_entropy_identity(p1 in -2.0..0.9f64, p2 in -1.0..0.0f64) {
        let exps = [1.0, 2.0];
        let s = power_set(&exps).unwrap();
        let p = [p1, p2];
        let d = TiltedDensity::new(&s, &p, &q()).unwrap();
        // KL(ν|λ) by direct integration of ν log(ν/λ).
        let c = common::lebesgue(&p);
        let (log_nu, _) = common::tilt(&exps, &p);
        let (log_lambda, _) = common::tilt(&exps, &[0.0, 0.0]);
        let log_ratio = |x: f64| c[0] * x + c[1] * x * x - log_nu + x + log_lambda;
        let (_, kl) = common::integrate(&exps, &c, &[&log_ratio]);
        let rhs = -entropy(&d) + d.moments()[0] + log_lambda;
        prop_assert!((kl[0] - rhs).abs() <= 1e-6, "{} vs {rhs}", kl[0]);
    }
}

#[test]
fn projected_rate_vanishes_at_zero() {
    let s = power_set(&[1.0, 2.0]).unwrap();
    for a in [[1.0, 3.0], [1.0, 1.5], [2.0, 9.0]] {
        assert_eq!(jmax_projected(&s, &a, 0.0, &q()).unwrap(), 0.0);
    }
}

#[test]
fn closed_form_values() {
    let s = power_set(&[1.0, 2.0]).unwrap();
    // exp(mean 2) is the tilt p = (1/2, 0): I = 2·(1/2) − log 2.
    let r = rate_i(&s, &[2.0, 8.0], &q()).unwrap();
    assert!((r.value - (1.0 - 2f64.ln())).abs() <= 1e-6);
    assert!(r.on_boundary);
    let scan = rate_scan(&s, &[1.0], &[1.2, 1.6, 2.0, 2.5, 3.0], &q()).unwrap();
    assert!(scan[0].value > scan[1].value && scan[1].value > scan[2].value);
    for r in &scan[2..] {
        assert!(r.value.abs() <= 1e-6);
    }
    let pair = rate_scan(&s, &[1.0], &[2.0, 4.0], &q()).unwrap();
    assert!((pair[0].value - pair[1].value).abs() <= 1e-6);
    assert!(rate_scan(&s, &[1.0], &[0.9], &q()).unwrap()[0].is_infinite());
}
