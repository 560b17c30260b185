//! Pass/fail verdicts computed from the files of a finished run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::output;
use super::runner::TailRow;
use crate::diagnostics::DiagnosticsRow;
use crate::dual::{PhaseReport, Regime};
use crate::error::Result;

pub const KS_MAX: f64 = 0.05;
pub const LOCALIZATION_TOL: f64 = 0.1;
pub const SECOND_MAX: f64 = 0.1;
pub const DELOCALIZED_FRACTION: f64 = 0.01;
pub const MOMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

pub fn magnitude_shrinks(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1].abs() < w[0].abs())
}

pub fn magnitude_non_shrinking(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1].abs() >= w[0].abs())
}

fn check(name: String, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Reads `config.json`, `phase.json`, `diagnostics.csv` and `tail_rates.csv` from `dir`.
pub fn evaluate(dir: &Path) -> Result<VerifyReport> {
    let cfg: ExperimentConfig = output::read_json(dir, output::CONFIG_COPY)?;
    let phase: PhaseReport = output::read_json(dir, output::PHASE)?;
    let diag: Vec<DiagnosticsRow> = output::read_csv(dir, output::DIAGNOSTICS)?;
    let tails: Vec<TailRow> = output::read_csv(dir, output::TAIL_RATES)?;
    let mut checks = Vec::new();

    if let Some(want) = cfg.expect.regime {
        checks.push(check(
            "regime".into(),
            phase.regime == want,
            format!("expected {want:?}, got {:?}", phase.regime),
        ));
    }
    let solution = match phase.regime {
        Regime::Extraneous => phase.reduced.as_ref(),
        Regime::Inadmissible => None,
        _ => phase.full.as_ref(),
    };
    if let Some(sol) = solution {
        checks.push(check(
            "moments".into(),
            sol.residual <= MOMENT_TOL,
            format!("residual {:e} on {} matched moments", sol.residual, sol.matched),
        ));
    }

    // Group rows by delta, keeping n order as written.
    let mut by_delta: BTreeMap<String, Vec<&DiagnosticsRow>> = BTreeMap::new();
    for row in &diag {
        by_delta.entry(format!("{}", row.delta)).or_default().push(row);
    }
    let surplus = match (phase.regime, phase.g2) {
        (Regime::Extraneous, Some(g2)) => Some(cfg.targets[cfg.targets.len() - 1] - g2),
        _ => None,
    };
    for (delta, mut rows) in by_delta {
        rows.sort_by_key(|r| r.n);
        let last = rows[rows.len() - 1];
        let ks: Vec<f64> = rows.iter().map(|r| r.ks).collect();
        checks.push(check(
            format!("ks_trend[delta={delta}]"),
            non_increasing(&ks) && last.ks <= KS_MAX,
            format!("ks {ks:?} over n {:?}", rows.iter().map(|r| r.n).collect::<Vec<_>>()),
        ));
        let role = |name: &str| -> Vec<&TailRow> {
            let mut v: Vec<&TailRow> = tails
                .iter()
                .filter(|t| t.role == name && format!("{}", t.delta) == delta)
                .collect();
            v.sort_by_key(|t| t.n);
            v
        };
        let est = |rows: &[&TailRow]| rows.iter().map(|t| t.estimate).collect::<Vec<_>>();
        match surplus {
            Some(s) => {
                checks.push(check(
                    format!("localization[delta={delta}]"),
                    (last.mean_m - s).abs() <= LOCALIZATION_TOL && last.mean_n <= SECOND_MAX,
                    format!(
                        "n {}: mean M {} (surplus {s}), mean N {}",
                        last.n, last.mean_m, last.mean_n
                    ),
                ));
                let (up, lo, lin) = (est(&role("upper")), est(&role("lower")), est(&role("lower_linear")));
                if rows.len() >= 2 {
                    let ok = !up.is_empty()
                        && !lo.is_empty()
                        && up.iter().chain(&lo).all(|v| *v < 0.0)
                        && magnitude_non_shrinking(&up)
                        && magnitude_non_shrinking(&lo)
                        && magnitude_shrinks(&lin);
                    checks.push(check(
                        format!("tail_asymmetry[delta={delta}]"),
                        ok,
                        format!("upper/n {up:?}; lower/n^gamma {lo:?}; lower/n {lin:?}"),
                    ));
                }
            }
            None => {
                let rows_t = role("delocalization");
                let frac: Vec<f64> = rows_t
                    .iter()
                    .map(|t| t.successes as f64 / t.trials as f64)
                    .collect();
                let ok = frac.last().is_some_and(|f| *f <= DELOCALIZED_FRACTION) && non_increasing(&frac);
                checks.push(check(
                    format!("delocalization[delta={delta}]"),
                    ok,
                    format!("fraction with M above threshold: {frac:?}"),
                ));
            }
        }
    }

    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
