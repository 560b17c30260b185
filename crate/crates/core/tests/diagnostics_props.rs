use microcanon::diagnostics::{
    appendix_checks, ks_distance_with, max_stats_of, tail_rate, AppendixGrid, Event, MaxStats, Scaling,
};
use microcanon::{power_set, QuadratureParams, TiltedDensity};
use proptest::prelude::*;

fn exp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-x).exp()
    }
}

/// `log P(|X²/n − M| < ε)` for `X ~ exp(1)`.
fn window_log_prob(m: f64, eps: f64, n: f64) -> f64 {
    let (lo, hi) = (((m - eps) * n).sqrt(), ((m + eps) * n).sqrt());
    -lo + (-(-(hi - lo)).exp_m1()).ln()
}

fn exponential_report(ms: Vec<f64>, ns: Vec<usize>) -> microcanon::diagnostics::AppendixReport {
    let s = power_set(&[1.0, 2.0]).unwrap();
    let d = TiltedDensity::new(&s, &[0.0, 0.0], &QuadratureParams::default()).unwrap();
    let grid = AppendixGrid {
        ms,
        eps: vec![0.1],
        ns,
        envelope: None,
    };
    appendix_checks(&s, &d, &grid).unwrap()
}

fn stats_strategy() -> impl Strategy<Value = Vec<MaxStats>> {
    prop::collection::vec(0.0..3.0f64, 1..200).prop_map(|ms| {
        ms.into_iter()
            .map(|m| MaxStats { m, n: 0.5 * m, argmax: 0 })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_is_bounded_and_order_free(mut xs in prop::collection::vec(0.0..8.0f64, 1..300)) {
        let d = ks_distance_with(&xs, exp_cdf).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-12);
        xs.reverse();
        prop_assert_eq!(d, ks_distance_with(&xs, exp_cdf).unwrap());
    }

    #[test]
    fn ks_vanishes_against_own_ecdf(xs in prop::collection::vec(0.0..8.0f64, 1..300)) {
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() as f64;
        let d = ks_distance_with(&xs, |x| sorted.partition_point(|v| *v <= x) as f64 / m).unwrap();
        // Each jump is compared from both sides, so the largest jump is the floor.
        let worst_tie = sorted.chunk_by(|a, b| a == b).map(|c| c.len()).max().unwrap() as f64;
        prop_assert!(d <= worst_tie / m + 1e-12, "{d}");
    }

    #[test]
    fn tail_rates_respect_event_nesting(stats in stats_strategy(), t in 0.0..3.0f64, dt in 0.0..1.0f64) {
        let sweep = vec![(100usize, stats)];
        for scaling in [Scaling::LinearN, Scaling::PowerGamma(0.5)] {
            let wide = &tail_rate(&sweep, &Event::MAtLeast(t), scaling).unwrap()[0];
            let narrow = &tail_rate(&sweep, &Event::MAtLeast(t + dt), scaling).unwrap()[0];
            prop_assert!(narrow.estimate <= wide.estimate);
            for r in [wide, narrow] {
                prop_assert!(r.estimate <= 0.0);
                prop_assert!(r.ci_hi <= 0.0);
                if let Some(lo) = r.ci_lo {
                    prop_assert!(lo <= r.estimate && r.estimate <= r.ci_hi);
                }
            }
            let below = &tail_rate(&sweep, &Event::MAtMost(t), scaling).unwrap()[0];
            let below_wider = &tail_rate(&sweep, &Event::MAtMost(t + dt), scaling).unwrap()[0];
            prop_assert!(below.estimate <= below_wider.estimate);
        }
    }

    #[test]
    fn max_stats_ignore_order(xs in prop::collection::vec(0.01..5.0f64, 2..40), seed in any::<u64>()) {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let a = max_stats_of(&s, &xs);
        let mut ys = xs.clone();
        // Deterministic shuffle.
        let mut state = seed | 1;
        for i in (1..ys.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ys.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let b = max_stats_of(&s, &ys);
        prop_assert_eq!(a.m, b.m);
        prop_assert_eq!(a.n, b.n);
        prop_assert!(a.m >= a.n && a.n >= 0.0);
        prop_assert_eq!(xs[a.argmax], ys[b.argmax]);
        prop_assert_eq!(xs.iter().position(|v| *v == xs[a.argmax]), Some(a.argmax));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn window_bound_holds_for_large_n(m in 0.5..2.0f64, n in 1000usize..10_000) {
        let r = exponential_report(vec![m], vec![n]);
        let p = &r.points[0];
        let exact = window_log_prob(m, 0.1, n as f64);
        prop_assert!((p.log_prob.unwrap() - exact).abs() <= 1e-8 * exact.abs());
        prop_assert!(p.holds == Some(true), "{p:?}");
    }
}

#[test]
fn window_bound_fails_for_wide_windows_at_small_n() {
    // At M = 2, n = 100 the window probability is too small for the
    // asymptotic bound −√M to hold yet: the exact value is about −1.446.
    let r = exponential_report(vec![2.0], vec![100]);
    let p = &r.points[0];
    let exact = window_log_prob(2.0, 0.1, 100.0) / 10.0;
    assert!((p.scaled_gamma.unwrap() - exact).abs() <= 1e-9);
    assert!(exact < -(2f64.sqrt()));
    assert_eq!(p.holds, Some(false));
    assert!(!r.dominates);
}

#[test]
fn linear_scaling_decays_to_zero() {
    let r = exponential_report(vec![0.5, 1.0, 2.0], vec![100, 1000, 10_000]);
    assert!(r.decreasing);
    for p in &r.points {
        let exact = window_log_prob(p.m, 0.1, p.n as f64);
        assert!((p.log_prob.unwrap() - exact).abs() <= 1e-8 * exact.abs(), "{p:?}");
    }
}
