//! Turning sample batches into order parameters, distances and tail rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{PhaseReport, Regime};
use crate::error::{Error, Result};
use crate::observables::ObservableSet;
use crate::quadrature::TiltedDensity;
use crate::sampler::{sample_tilted, SampleBatch};

/// Two-sided 95% normal quantile used for Wilson intervals.
const Z95: f64 = 1.959_963_984_540_054;
/// Grid points whose probability is below this are skipped.
const LOG_PROB_FLOOR: f64 = -690.775_527_898_213_7; // ln 1e-300

/// Kolmogorov–Smirnov distance between the ECDF of `samples` and `reference`.
pub fn ks_distance(samples: &[f64], reference: &TiltedDensity) -> Result<f64> {
    ks_distance_with(samples, |x| reference.cdf(x))
}

/// Same, against an arbitrary CDF.
pub fn ks_distance_with(samples: &[f64], cdf: impl Fn(f64) -> f64 + Sync) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("KS distance of an empty sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let f: Vec<f64> = xs.par_iter().map(|&x| cdf(x).clamp(0.0, 1.0)).collect();
    let n = xs.len() as f64;
    let mut best: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // Ties jump the ECDF once, at the last copy.
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        best = best
            .max((f[i] - i as f64 / n).abs())
            .max(((j + 1) as f64 / n - f[i]).abs());
        i = j + 1;
    }
    Ok(best)
}

/// Largest and second-largest `φ_k(x_j)/n` of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxStats {
    pub m: f64,
    pub n: f64,
    pub argmax: usize,
}

pub fn max_stats_of(set: &ObservableSet, x: &[f64]) -> MaxStats {
    let last = set.last();
    let scale = x.len() as f64;
    let (mut m, mut second, mut argmax) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
    for (j, &xj) in x.iter().enumerate() {
        let v = last.eval(xj) / scale;
        if v > m {
            second = m;
            m = v;
            argmax = j;
        } else if v > second {
            second = v;
        }
    }
    MaxStats {
        m,
        n: if x.len() > 1 { second } else { 0.0 },
        argmax,
    }
}

pub fn max_stats(set: &ObservableSet, batch: &SampleBatch) -> Vec<MaxStats> {
    batch.states.iter().map(|x| max_stats_of(set, x)).collect()
}

/// Normalization `g(n)` in `(1/g(n)) log P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "gamma", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scaling {
    LinearN,
    PowerGamma(f64),
}

impl Scaling {
    pub fn factor(&self, n: usize) -> f64 {
        match *self {
            Scaling::LinearN => n as f64,
            Scaling::PowerGamma(g) => (n as f64).powf(g),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scaling::LinearN => "n".into(),
            Scaling::PowerGamma(g) => format!("n^{g}"),
        }
    }
}

/// Threshold events on the order parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "threshold", rename_all = "snake_case")]
pub enum Event {
    MAtLeast(f64),
    MAtMost(f64),
    MAbove(f64),
    NAtLeast(f64),
}

impl Event {
    pub fn holds(&self, s: &MaxStats) -> bool {
        match *self {
            Event::MAtLeast(t) => s.m >= t,
            Event::MAtMost(t) => s.m <= t,
            Event::MAbove(t) => s.m > t,
            Event::NAtLeast(t) => s.n >= t,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Event::MAtLeast(t) => format!("M >= {t}"),
            Event::MAtMost(t) => format!("M <= {t}"),
            Event::MAbove(t) => format!("M > {t}"),
            Event::NAtLeast(t) => format!("N >= {t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRateEstimate {
    pub n: usize,
    pub scaling: Scaling,
    pub event: String,
    pub successes: usize,
    pub trials: usize,
    /// `(1/g(n)) log p̂`, with `p̂ = 1/trials` when no state hit the event.
    pub estimate: f64,
    pub censored: bool,
    /// `None` when the lower Wilson bound is zero.
    pub ci_lo: Option<f64>,
    pub ci_hi: f64,
}

/// Wilson score interval for `s` successes out of `t`.
pub fn wilson(s: usize, t: usize) -> (f64, f64) {
    let (s, t) = (s as f64, t as f64);
    let p = s / t;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / t;
    let center = (p + z2 / (2.0 * t)) / denom;
    let half = Z95 * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt() / denom;
    let lo = if s == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if s == t { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

fn rate_from(
    n: usize,
    successes: usize,
    trials: usize,
    event: String,
    scaling: Scaling,
) -> Result<TailRateEstimate> {
    if trials == 0 {
        return Err(Error::Argument(format!("no trials at n = {n}")));
    }
    let g = scaling.factor(n);
    let censored = successes == 0;
    let p = if censored {
        1.0 / trials as f64
    } else {
        successes as f64 / trials as f64
    };
    let (lo, hi) = wilson(successes, trials);
    Ok(TailRateEstimate {
        n,
        scaling,
        event,
        successes,
        trials,
        estimate: p.ln() / g,
        censored,
        ci_lo: (lo > 0.0).then(|| lo.ln() / g),
        ci_hi: hi.ln() / g,
    })
}

/// Tail-rate estimates for `event` at every `n` of a sweep.
pub fn tail_rate(
    sweep: &[(usize, Vec<MaxStats>)],
    event: &Event,
    scaling: Scaling,
) -> Result<Vec<TailRateEstimate>> {
    tail_rate_with(sweep, &event.describe(), |s| event.holds(s), scaling)
}

pub fn tail_rate_with(
    sweep: &[(usize, Vec<MaxStats>)],
    label: &str,
    pred: impl Fn(&MaxStats) -> bool,
    scaling: Scaling,
) -> Result<Vec<TailRateEstimate>> {
    sweep
        .iter()
        .map(|(n, stats)| {
            let hits = stats.iter().filter(|s| pred(s)).count();
            rate_from(*n, hits, stats.len(), label.to_string(), scaling)
        })
        .collect()
}

/// Localization threshold: a tenth of the surplus `a_k − g₂` when extraneous, else 0.1.
pub fn default_epsilon(report: &PhaseReport, a: &[f64]) -> f64 {
    match (report.regime, report.g2) {
        (Regime::Extraneous, Some(g2)) if a[a.len() - 1] > g2 => 0.1 * (a[a.len() - 1] - g2),
        _ => 0.1,
    }
}

/// One row of the per-cell diagnostics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub n: usize,
    pub delta: f64,
    pub ks: f64,
    #[serde(rename = "mean_M")]
    pub mean_m: f64,
    #[serde(rename = "mean_N")]
    pub mean_n: f64,
}

pub fn mean_stats(stats: &[MaxStats]) -> (f64, f64) {
    let c = stats.len().max(1) as f64;
    (
        stats.iter().map(|s| s.m).sum::<f64>() / c,
        stats.iter().map(|s| s.n).sum::<f64>() / c,
    )
}

/// Every coordinate of every state, pooled.
pub fn pooled(batch: &SampleBatch) -> Vec<f64> {
    batch.states.iter().flatten().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixGrid {
    pub ms: Vec<f64>,
    pub eps: Vec<f64>,
    pub ns: Vec<usize>,
    pub envelope: Option<EnvelopeProbe>,
}

impl Default for AppendixGrid {
    fn default() -> Self {
        Self {
            ms: vec![0.5, 1.0, 2.0],
            eps: vec![0.1],
            ns: vec![100, 1000, 10_000],
            envelope: Some(EnvelopeProbe::default()),
        }
    }
}

/// Monte Carlo probe of the sum-tail envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeProbe {
    pub theta: f64,
    pub js: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
}

impl Default for EnvelopeProbe {
    fn default() -> Self {
        Self {
            theta: 0.1,
            js: vec![1, 2, 3],
            thresholds: (1..=12).map(|i| 2.0 * i as f64).collect(),
            draws: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixPoint {
    pub m: f64,
    pub eps: f64,
    pub n: usize,
    /// `log ν(|φ_k/n − M| < ε)`.
    pub log_prob: Option<f64>,
    pub scaled_n: Option<f64>,
    pub scaled_gamma: Option<f64>,
    pub bound: f64,
    pub holds: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub j: usize,
    pub threshold: f64,
    pub frequency: f64,
    pub envelope: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub theta: f64,
    /// Smallest `C` on a doubling grid making the `j = 1` envelope hold.
    pub c: f64,
    pub points: Vec<EnvelopePoint>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixReport {
    /// Zero-based index of the last nonzero coefficient.
    pub m_index: usize,
    pub coefficient: f64,
    pub gamma: f64,
    pub points: Vec<AppendixPoint>,
    /// `(1/n) log ν` shrinks in magnitude along `n` for every `(M, ε)`.
    pub decreasing: bool,
    /// The `n^γ`-scaled lower bound holds at every evaluated point.
    pub dominates: bool,
    pub envelope: Option<EnvelopeReport>,
}

/// Quadrature checks of the window-probability asymptotics for a tilt `d`
/// whose last nonzero coefficient has index below `k` and is negative.
pub fn appendix_checks(set: &ObservableSet, d: &TiltedDensity, grid: &AppendixGrid) -> Result<AppendixReport> {
    let k = set.k();
    let c = d.coefficients();
    let m_index = c
        .iter()
        .rposition(|v| *v != 0.0)
        .ok_or_else(|| Error::Argument("tilt has no nonzero coefficient".into()))?;
    if m_index + 1 >= k || c[m_index] >= 0.0 {
        return Err(Error::Argument(format!(
            "need a negative last coefficient below index {}, got {c:?}",
            k - 1
        )));
    }
    let gamma = set
        .gamma()
        .ok_or_else(|| Error::Argument("growth exponents unknown for this set".into()))?[m_index];
    let cm = c[m_index];
    let last = set.last();
    let mut ns = grid.ns.clone();
    ns.sort_unstable();
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::Argument("n grid must be non-empty and positive".into()));
    }

    let mut points = Vec::new();
    let mut decreasing = true;
    let mut dominates = true;
    for &m in &grid.ms {
        for &eps in &grid.eps {
            let mut prev: Option<f64> = None;
            for &n in &ns {
                let nf = n as f64;
                let lo = last.inverse((nf * (m - eps)).max(0.0));
                let hi = last.inverse(nf * (m + eps));
                let bound = cm * m.powf(gamma);
                let lp = d.log_interval_prob(lo, hi)?;
                if !(lp >= LOG_PROB_FLOOR) {
                    points.push(AppendixPoint {
                        m,
                        eps,
                        n,
                        log_prob: None,
                        scaled_n: None,
                        scaled_gamma: None,
                        bound,
                        holds: None,
                        note: Some(format!("probability below 1e-300 (log {lp:.1}); skipped")),
                    });
                    continue;
                }
                let sn = lp / nf;
                let sg = lp / nf.powf(gamma);
                let holds = sg >= bound;
                dominates &= holds;
                if let Some(p) = prev {
                    decreasing &= sn.abs() < p.abs();
                }
                prev = Some(sn);
                points.push(AppendixPoint {
                    m,
                    eps,
                    n,
                    log_prob: Some(lp),
                    scaled_n: Some(sn),
                    scaled_gamma: Some(sg),
                    bound,
                    holds: Some(holds),
                    note: None,
                });
            }
        }
    }

    let envelope = match &grid.envelope {
        Some(probe) => Some(envelope_check(set, d, m_index, cm, probe)?),
        None => None,
    };
    Ok(AppendixReport {
        m_index,
        coefficient: cm,
        gamma,
        points,
        decreasing,
        dominates,
        envelope,
    })
}

fn envelope_at(c: f64, cm: f64, theta: f64, j: usize, t: f64) -> f64 {
    let s = t - c * j as f64;
    c * s.powi(j as i32 - 1) * ((cm + theta) * s).exp()
}

fn envelope_check(
    set: &ObservableSet,
    d: &TiltedDensity,
    m_index: usize,
    cm: f64,
    probe: &EnvelopeProbe,
) -> Result<EnvelopeReport> {
    if !(probe.theta > 0.0 && probe.theta < -cm) {
        return Err(Error::Argument(format!(
            "theta must lie in (0, {}), got {}",
            -cm, probe.theta
        )));
    }
    let jmax = probe.js.iter().copied().max().unwrap_or(1).max(1);
    let draws = sample_tilted(d, jmax, probe.draws, probe.seed)?;
    let phi = set.get(m_index);
    let sums: Vec<Vec<f64>> = draws
        .iter()
        .map(|x| {
            x.iter()
                .scan(0.0, |acc, &v| {
                    *acc += phi.eval(v);
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let freq = |j: usize, t: f64| {
        sums.iter().filter(|s| s[j - 1] > t).count() as f64 / sums.len() as f64
    };

    // Calibrate C on single draws, then test every j with that C.
    let mut c = 1.0;
    while c < 1e6 {
        let ok = probe
            .thresholds
            .iter()
            .filter(|&&t| t > c + 2.0)
            .all(|&t| freq(1, t) < envelope_at(c, cm, probe.theta, 1, t));
        if ok {
            break;
        }
        c *= 2.0;
    }
    let mut points = Vec::new();
    for &j in &probe.js {
        for &t in &probe.thresholds {
            if !(t > c * j as f64 + 2.0) {
                continue;
            }
            let f = freq(j, t);
            let e = envelope_at(c, cm, probe.theta, j, t);
            points.push(EnvelopePoint {
                j,
                threshold: t,
                frequency: f,
                envelope: e,
                holds: f < e,
            });
        }
    }
    let passed = points.iter().all(|p| p.holds);
    Ok(EnvelopeReport {
        theta: probe.theta,
        c,
        points,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::power_set;
    use crate::quadrature::QuadratureParams;

    #[test]
    fn ks_examples() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let q = QuadratureParams::default();
        let exp1 = TiltedDensity::new(&s, &[0.0, 0.0], &q).unwrap();
        let exp2 = TiltedDensity::new(&s, &[-1.0, 0.0], &q).unwrap();
        let xs = crate::sampler::sample_tilted(&exp1, 1, 10_000, 3).unwrap().concat();
        assert!(ks_distance(&xs, &exp1).unwrap() <= 0.05);
        let big = crate::sampler::sample_tilted(&exp1, 1, 100_000, 4).unwrap().concat();
        let d = ks_distance(&big, &exp2).unwrap();
        assert!((d - 0.25).abs() < 0.01, "{d}");
        assert!(ks_distance(&[], &exp1).is_err());
    }

    #[test]
    fn ks_against_own_ecdf() {
        let xs = [0.3, 1.0, 2.0, 2.5, 5.0];
        let ecdf = |x: f64| xs.iter().filter(|v| **v <= x).count() as f64 / xs.len() as f64;
        // Only the step at each sample remains.
        assert!(ks_distance_with(&xs, ecdf).unwrap() <= 1.0 / xs.len() as f64 + 1e-15);
    }

    #[test]
    fn max_stats_examples() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let st = max_stats_of(&s, &[1.0, 2.0]);
        assert_eq!((st.m, st.n, st.argmax), (2.0, 0.5, 1));
        let st = max_stats_of(&s, &[1.5, 1.5, 1.5]);
        assert_eq!(st.m, st.n);
        assert_eq!(st.argmax, 0);
    }

    #[test]
    fn censoring_and_wilson() {
        let stats = vec![
            MaxStats {
                m: 0.0,
                n: 0.0,
                argmax: 0
            };
            50
        ];
        let r = tail_rate(&[(10, stats.clone())], &Event::MAtLeast(1.0), Scaling::LinearN).unwrap();
        assert!(r[0].censored);
        assert!((r[0].estimate - (1.0f64 / 50.0).ln() / 10.0).abs() < 1e-15);
        assert!(r[0].ci_lo.is_none() && r[0].ci_hi < 0.0);
        assert!(tail_rate(&[(10, vec![])], &Event::MAtLeast(1.0), Scaling::LinearN).is_err());
        let (lo, hi) = wilson(5, 100);
        assert!(lo < 0.05 && 0.05 < hi);
    }

    #[test]
    fn appendix_exponential() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let q = QuadratureParams::default();
        let d = TiltedDensity::new(&s, &[0.0, 0.0], &q).unwrap();
        let grid = AppendixGrid {
            ms: vec![1.0],
            eps: vec![0.1],
            ns: vec![100, 1000, 10_000],
            envelope: Some(EnvelopeProbe {
                draws: 50_000,
                ..EnvelopeProbe::default()
            }),
        };
        let r = appendix_checks(&s, &d, &grid).unwrap();
        assert_eq!((r.m_index, r.coefficient, r.gamma), (0, -1.0, 0.5));
        for p in &r.points {
            let n = p.n as f64;
            let exact = ((-(0.9 * n).sqrt()).exp() - (-(1.1 * n).sqrt()).exp()).ln();
            assert!((p.log_prob.unwrap() - exact).abs() < 1e-8 * exact.abs(), "{p:?}");
        }
        assert!(r.decreasing && r.dominates);
        assert!(r.envelope.unwrap().passed);
    }
}
