//! Moment matching, the phase functions `g₁`, `g₂`, and regime classification.
//!
//! The reduced problem matches `a₁,…,a_{k−1}` with `p_k = 0`; the full problem
//! matches all `k` targets with `p_k < 0`. Which of the two exists decides the
//! limiting marginal and whether the last constraint condenses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newton::{self, Outcome, Problem};
use crate::observables::ObservableSet;
use crate::quadrature::{QuadratureParams, TiltedDensity};

/// Default distance of a cold start from the face `p_m = 0`.
const FACE_STEP: f64 = 0.01;

/// A solved tilt and the moments it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub p: Vec<f64>,
    /// All `k` moments under the tilt, matched or not.
    pub achieved: Vec<f64>,
    /// `H(p)`.
    pub log_partition: f64,
    pub iterations: usize,
    /// Max deviation over the matched indices.
    pub residual: f64,
    /// Number of leading coordinates that were matched.
    pub matched: usize,
}

impl DualSolution {
    pub fn density(&self, set: &ObservableSet, q: &QuadratureParams) -> Result<TiltedDensity> {
        TiltedDensity::new(set, &self.p, q)
    }

    fn from_iterate(it: newton::Iterate, matched: usize, base_log_norm: f64) -> Self {
        Self {
            achieved: it.density.moments().to_vec(),
            log_partition: it.density.log_norm() - base_log_norm,
            p: it.p,
            iterations: it.iterations,
            residual: it.residual,
            matched,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// The reduced tilt solves the prefix and `a_k ≥ g₂`: the surplus condenses.
    Extraneous,
    /// The prefix lies in S₁ and `g₁ < a_k < g₂`.
    InteriorS1,
    /// The prefix lies in S₂; only the full tilt exists.
    FullTiltS2,
    Inadmissible,
    /// A single constraint: the limit is always the matching tilt.
    Single,
}

/// `g₁` together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G1 {
    pub value: f64,
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub regime: Regime,
    pub g1: Option<G1>,
    pub g2: Option<f64>,
    pub reduced: Option<DualSolution>,
    pub full: Option<DualSolution>,
}

fn check_targets(set: &ObservableSet, a: &[f64], len: usize) -> Result<()> {
    if a.len() != len {
        return Err(Error::Argument(format!(
            "expected {len} targets for k = {}, got {}",
            set.k(),
            a.len()
        )));
    }
    if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Argument(format!("targets {a:?} must be positive")));
    }
    Ok(())
}

fn base_log_norm(set: &ObservableSet, q: &QuadratureParams) -> Result<f64> {
    crate::quadrature::base_log_normalizer(set, q)
}

pub(crate) enum Prefix {
    Solved(DualSolution),
    /// The face collapsed onto the one below, whose moment falls short of the target.
    Short(String),
    /// The tilt ran off to infinity.
    Diverged(String),
}

/// Matches the first `m` targets on the face `p_{m+1} = … = p_k = 0`.
pub(crate) fn solve_prefix(set: &ObservableSet, a: &[f64], m: usize, q: &QuadratureParams) -> Result<Prefix> {
    let k = set.k();
    let base = base_log_norm(set, q)?;
    let zero = vec![0.0; k];
    let d0 = TiltedDensity::new(set, &zero, q)?;
    let r0 = d0.moments()[..m]
        .iter()
        .zip(a)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if r0 <= newton::TOL {
        return Ok(Prefix::Solved(DualSolution {
            p: zero,
            achieved: d0.moments().to_vec(),
            log_partition: 0.0,
            iterations: 0,
            residual: r0,
            matched: m,
        }));
    }
    let bound = if m == 1 { 1.0 } else { 0.0 };
    let mut init = vec![0.0; k];
    init[m - 1] = if m == 1 { 0.0 } else { -FACE_STEP };
    let problem = Problem {
        set,
        q,
        targets: &a[..m],
        free: m,
        bound: Some(bound),
        base: vec![0.0; k],
    };
    match newton::solve(&problem, &init)? {
        Outcome::Converged(it) => Ok(Prefix::Solved(DualSolution::from_iterate(it, m, base))),
        Outcome::Drift(it) if m >= 2 => {
            // The face collapsed; the answer, if any, sits on the face below.
            match solve_prefix(set, a, m - 1, q)? {
                Prefix::Solved(lower) => {
                    let w = lower.achieved[m - 1];
                    if (w - a[m - 1]).abs() <= newton::TOL {
                        Ok(Prefix::Solved(DualSolution { matched: m, ..lower }))
                    } else if w < a[m - 1] {
                        Ok(Prefix::Short(format!(
                            "tilt coordinate {m} drifted to 0 after {} iterations; moment {m} \
                             reaches only {w} < {}",
                            it.iterations,
                            a[m - 1]
                        )))
                    } else {
                        // The lower face overshoots, so the optimum is interior and
                        // the cold start jammed. Restart from the lower solution.
                        match restart_from_face(&problem, &lower.p, m)? {
                            Outcome::Converged(it) => {
                                Ok(Prefix::Solved(DualSolution::from_iterate(it, m, base)))
                            }
                            _ => Err(Error::SolverStall {
                                iterations: it.iterations,
                                residual: it.residual,
                            }),
                        }
                    }
                }
                other => Ok(other),
            }
        }
        Outcome::Drift(it) | Outcome::Stall(it) => Err(Error::SolverStall {
            iterations: it.iterations,
            residual: it.residual,
        }),
        Outcome::Unbounded(it) => Ok(Prefix::Diverged(format!(
            "tilt diverged to {:?} while matching the first {m} targets",
            it.p
        ))),
    }
}

/// Newton on face `m` started just off the solution `lower` of face `m − 1`.
fn restart_from_face(problem: &Problem<'_>, lower: &[f64], m: usize) -> Result<Outcome> {
    let init = face_start(problem.set, problem.q, lower, problem.targets[m - 1], m)?;
    newton::solve(problem, &init)
}

/// Steps off face `m − 1` into face `m` by about half the one-dimensional Newton
/// offset `(E φ_m − a_m) / Var φ_m`, so a sharply peaked tilt is not overshot.
fn face_start(set: &ObservableSet, q: &QuadratureParams, lower: &[f64], target: f64, m: usize) -> Result<Vec<f64>> {
    let mut init = lower.to_vec();
    init[m - 1] = 0.0;
    let d = TiltedDensity::new(set, &init, q)?;
    let var = d.covariance()[(m - 1, m - 1)];
    let offset = 0.5 * (d.moments()[m - 1] - target) / var;
    init[m - 1] = -if offset.is_finite() {
        offset.clamp(1e-10, FACE_STEP)
    } else {
        FACE_STEP
    };
    Ok(init)
}

/// Solves for `p` with `p_k = 0` matching the first `k − 1` targets.
pub fn solve_reduced(set: &ObservableSet, prefix: &[f64], q: &QuadratureParams) -> Result<DualSolution> {
    let k = set.k();
    if k < 2 {
        return Err(Error::Argument("the reduced problem needs k >= 2".into()));
    }
    check_targets(set, prefix, k - 1)?;
    match solve_prefix(set, prefix, k - 1, q)? {
        Prefix::Solved(sol) => Ok(sol),
        Prefix::Short(why) | Prefix::Diverged(why) => Err(Error::Infeasible(why)),
    }
}

/// Solves for `p` with `p_k < 0` matching all `k` targets.
pub fn solve_full(set: &ObservableSet, a: &[f64], q: &QuadratureParams) -> Result<DualSolution> {
    solve_full_from(set, a, q, None)
}

fn solve_full_from(
    set: &ObservableSet,
    a: &[f64],
    q: &QuadratureParams,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    let k = set.k();
    check_targets(set, a, k)?;
    let base = base_log_norm(set, q)?;
    let bound = if k == 1 { 1.0 } else { 0.0 };
    let init = match warm {
        Some(w) if k >= 2 => face_start(set, q, w, a[k - 1], k)?,
        _ if k == 1 => vec![warm.map_or(0.0, |w| w[0].min(0.0))],
        _ => {
            let mut v = vec![0.0; k];
            v[k - 1] = -FACE_STEP;
            v
        }
    };
    let problem = Problem {
        set,
        q,
        targets: a,
        free: k,
        bound: Some(bound),
        base: vec![0.0; k],
    };
    let mut outcome = newton::solve(&problem, &init)?;
    if let (Outcome::Drift(_), true) = (&outcome, k >= 2) {
        // Retry from the lower face when it overshoots the last target.
        if let Prefix::Solved(lower) = solve_prefix(set, a, k - 1, q)? {
            if lower.achieved[k - 1] > a[k - 1] + newton::TOL {
                outcome = restart_from_face(&problem, &lower.p, k)?;
            }
        }
    }
    match outcome {
        Outcome::Converged(it) => Ok(DualSolution::from_iterate(it, k, base)),
        Outcome::Drift(it) => Err(Error::NoFullTilt(format!(
            "last tilt coordinate drifted to {:e} with moment {} vs target {}",
            it.p[k - 1],
            it.density.moments()[k - 1],
            a[k - 1]
        ))),
        Outcome::Unbounded(_) => Err(Error::Inadmissible(a.to_vec())),
        Outcome::Stall(it) => Err(Error::SolverStall {
            iterations: it.iterations,
            residual: it.residual,
        }),
    }
}

/// `g₂(prefix)`: the last moment of the reduced tilt.
pub fn g2(set: &ObservableSet, prefix: &[f64], q: &QuadratureParams) -> Result<f64> {
    let sol = solve_reduced(set, prefix, q)?;
    Ok(sol.achieved[set.k() - 1])
}

/// Closed-form `g₁` where one is known, `None` otherwise.
///
/// For two powers, Jensen's inequality applied to `Y = x^{e₁}` gives
/// `E x^{e₂} ≥ (E x^{e₁})^{e₂/e₁}`, with equality in the point-mass limit.
pub(crate) fn g1_closed_form(set: &ObservableSet, prefix: &[f64]) -> Option<f64> {
    let e = set.exponents()?;
    match e.len() {
        2 => Some(prefix[0].powf(e[1] / e[0])),
        3 if e == [1.0, 2.0, 3.0] => Some(prefix[1] * prefix[1] / prefix[0]),
        _ => None,
    }
}

/// Closed-form membership of the prefix in the admissible set of the first `k − 1`
/// constraints, where known.
pub(crate) fn prefix_admissible(set: &ObservableSet, prefix: &[f64]) -> Option<bool> {
    let e = set.exponents()?;
    match e.len() {
        2 => Some(true),
        3 if e == [1.0, 2.0, 3.0] => Some(prefix[0] * prefix[0] < prefix[1]),
        _ => None,
    }
}

/// `g₁(prefix)`: the infimum of the last moment compatible with the prefix.
///
/// Known power families use closed forms. Otherwise the full system is solved with
/// `p_k = −t` for `t ∈ {1, 10, 100, 1000}` and the decreasing sequence of last
/// moments is extrapolated; the result is flagged approximate.
pub fn g1(set: &ObservableSet, prefix: &[f64], q: &QuadratureParams) -> Result<G1> {
    let k = set.k();
    if k < 2 {
        return Err(Error::Argument("g1 needs k >= 2".into()));
    }
    check_targets(set, prefix, k - 1)?;
    if prefix_admissible(set, prefix) == Some(false) {
        return Err(Error::Inadmissible(prefix.to_vec()));
    }
    if let Some(value) = g1_closed_form(set, prefix) {
        return Ok(G1 {
            value,
            approximate: false,
        });
    }
    let mut seq = Vec::new();
    let mut warm = vec![0.0; k];
    let mut t_prev = 1.0;
    for t in [1.0, 10.0, 100.0, 1000.0] {
        let mut init: Vec<f64> = warm.iter().map(|v| v * t / t_prev).collect();
        init[k - 1] = -t;
        let mut base = vec![0.0; k];
        base[k - 1] = -t;
        let problem = Problem {
            set,
            q,
            targets: prefix,
            free: k - 1,
            bound: None,
            base,
        };
        match newton::solve(&problem, &init)? {
            Outcome::Converged(it) => {
                seq.push(it.density.moments()[k - 1]);
                warm = it.p;
                t_prev = t;
            }
            Outcome::Unbounded(_) => return Err(Error::Inadmissible(prefix.to_vec())),
            Outcome::Drift(it) | Outcome::Stall(it) => {
                return Err(Error::SolverStall {
                    iterations: it.iterations,
                    residual: it.residual,
                })
            }
        }
    }
    Ok(G1 {
        value: extrapolate(&seq),
        approximate: true,
    })
}

/// Aitken Δ² on the last three terms, falling back to the last term.
fn extrapolate(seq: &[f64]) -> f64 {
    let n = seq.len();
    let last = seq[n - 1];
    if n < 3 {
        return last;
    }
    let (s0, s1, s2) = (seq[n - 3], seq[n - 2], seq[n - 1]);
    let denom = (s2 - s1) - (s1 - s0);
    if denom.abs() < 1e-300 {
        return last;
    }
    let acc = s2 - (s2 - s1) * (s2 - s1) / denom;
    if acc.is_finite() && acc <= last {
        acc
    } else {
        last
    }
}

/// Decides which regime the targets fall into.
pub fn classify(set: &ObservableSet, a: &[f64], q: &QuadratureParams) -> Result<PhaseReport> {
    let k = set.k();
    check_targets(set, a, k)?;
    if k == 1 {
        let full = solve_full(set, a, q)?;
        return Ok(PhaseReport {
            regime: Regime::Single,
            g1: None,
            g2: None,
            reduced: None,
            full: Some(full),
        });
    }
    let prefix = &a[..k - 1];
    let inadmissible = |g1: Option<G1>, g2: Option<f64>, reduced: Option<DualSolution>| PhaseReport {
        regime: Regime::Inadmissible,
        g1,
        g2,
        reduced,
        full: None,
    };

    let g1v = match g1(set, prefix, q) {
        Ok(g) => Some(g),
        Err(Error::Inadmissible(_)) => return Ok(inadmissible(None, None, None)),
        Err(e) if e.is_numerical() => None,
        Err(e) => return Err(e),
    };
    if let Some(g) = g1v {
        if a[k - 1] <= g.value {
            return Ok(inadmissible(g1v, None, None));
        }
    }

    match solve_reduced(set, prefix, q) {
        Ok(reduced) => {
            let g2v = reduced.achieved[k - 1];
            // g₂ carries the solver's moment error, so equality is judged at that tolerance.
            if a[k - 1] >= g2v - newton::TOL {
                return Ok(PhaseReport {
                    regime: Regime::Extraneous,
                    g1: g1v,
                    g2: Some(g2v),
                    reduced: Some(reduced),
                    full: None,
                });
            }
            match solve_full_from(set, a, q, Some(&reduced.p)) {
                Ok(full) => Ok(PhaseReport {
                    regime: Regime::InteriorS1,
                    g1: g1v,
                    g2: Some(g2v),
                    reduced: Some(reduced),
                    full: Some(full),
                }),
                Err(Error::Inadmissible(_)) => Ok(inadmissible(g1v, Some(g2v), Some(reduced))),
                Err(e) if e.is_numerical() => Err(Error::ClassificationInconclusive {
                    reason: format!("reduced tilt solved but full solve failed: {e}"),
                    reduced: Some(Box::new(reduced)),
                    full: None,
                }),
                Err(e) => Err(e),
            }
        }
        Err(Error::Infeasible(why)) => match solve_full(set, a, q) {
            Ok(full) => Ok(PhaseReport {
                regime: Regime::FullTiltS2,
                g1: g1v,
                g2: None,
                reduced: None,
                full: Some(full),
            }),
            Err(Error::Inadmissible(_)) => Ok(inadmissible(g1v, None, None)),
            Err(e) if e.is_numerical() => Err(Error::ClassificationInconclusive {
                reason: format!("reduced problem infeasible ({why}) and full solve failed: {e}"),
                reduced: None,
                full: None,
            }),
            Err(e) => Err(e),
        },
        Err(e) if e.is_numerical() => Err(Error::ClassificationInconclusive {
            reason: format!("reduced solve failed: {e}"),
            reduced: None,
            full: None,
        }),
        Err(e) => Err(e),
    }
}

/// The limiting single-coordinate law `λ*` for admissible targets.
pub fn limiting_marginal(set: &ObservableSet, a: &[f64], q: &QuadratureParams) -> Result<TiltedDensity> {
    let report = classify(set, a, q)?;
    limiting_marginal_of(set, a, &report, q)
}

pub(crate) fn limiting_marginal_of(
    set: &ObservableSet,
    a: &[f64],
    report: &PhaseReport,
    q: &QuadratureParams,
) -> Result<TiltedDensity> {
    let sol = match report.regime {
        Regime::Inadmissible => return Err(Error::Inadmissible(a.to_vec())),
        Regime::Extraneous => report.reduced.as_ref(),
        _ => report.full.as_ref(),
    };
    sol.expect("report carries the solution for its regime")
        .density(set, q)
}
