//! Executes one configuration and writes its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::output::{self, Manifest};
use super::verify::{self, VerifyReport};
use crate::diagnostics::{self, DiagnosticsRow, Event, MaxStats, Scaling};
use crate::dual::{self, DualSolution, PhaseReport, Regime};
use crate::error::{Error, Result};
use crate::observables::ObservableSet;
use crate::quadrature::{QuadratureParams, TiltedDensity};
use crate::rate;
use crate::sampler::{self, SampleBatch, ShellSpec};

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub verify: Option<VerifyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub reduced: Option<DualSolution>,
    pub reduced_error: Option<String>,
    pub full: Option<DualSolution>,
    pub full_error: Option<String>,
}

/// One row of `tail_rates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub delta: f64,
    pub role: String,
    pub event: String,
    pub scaling: String,
    pub estimate: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: f64,
    pub successes: usize,
    pub trials: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OracleRow {
    lo: f64,
    hi: f64,
    density: f64,
    cdf: f64,
}

/// Seed of chain `chain` in grid cell `cell`.
pub fn chain_seed(base: u64, cell: usize, chain: usize) -> u64 {
    base.wrapping_add(((cell as u64) << 16) | chain as u64)
}

/// Runs `cfg` into `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;

    // The copy is location independent so reruns elsewhere stay byte-identical.
    let mut copy = cfg.clone();
    copy.output_dir = PathBuf::from(".");
    output::write_json(&dir, output::CONFIG_COPY, &copy)?;

    let set = cfg.set()?;
    let q = QuadratureParams::default();
    let mut verify_report = None;
    match cfg.mode {
        Mode::Solve => solve(cfg, &set, &q, &dir)?,
        Mode::Classify => {
            let report = dual::classify(&set, &cfg.targets, &q)?;
            output::write_json(&dir, output::PHASE, &report)?;
        }
        Mode::Rate => rate_mode(cfg, &set, &q, &dir)?,
        Mode::Sample => sample(cfg, &set, &q, &dir, true)?,
        Mode::Bruteforce => bruteforce(cfg, &set, &dir)?,
        Mode::Verify => {
            sample(cfg, &set, &q, &dir, false)?;
            let report = verify::evaluate(&dir)?;
            output::write_json(&dir, output::VERIFY, &report)?;
            verify_report = Some(report);
        }
    }

    let files = output::digests(&dir)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode.name().to_string(),
        seed: cfg.seed,
        config_sha256: output::sha256_hex(serde_json::to_string(&copy)?.as_bytes()),
        files: files.clone(),
    };
    output::write_json(&dir, output::MANIFEST, &manifest)?;
    let since_epoch = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    fs::write(
        dir.join(output::TIMING),
        format!(
            "finished_unix={since_epoch}\nwall_clock_seconds={:.3}\n",
            started.elapsed().as_secs_f64()
        ),
    )?;
    Ok(RunOutcome {
        dir,
        files: files.into_iter().map(|f| f.name).collect(),
        verify: verify_report,
    })
}

fn solve(cfg: &ExperimentConfig, set: &ObservableSet, q: &QuadratureParams, dir: &Path) -> Result<()> {
    let k = set.k();
    let recoverable = |e: &Error| {
        matches!(
            e,
            Error::Infeasible(_) | Error::NoFullTilt(_) | Error::Inadmissible(_)
        )
    };
    let (reduced, reduced_error) = if k >= 2 {
        match dual::solve_reduced(set, &cfg.targets[..k - 1], q) {
            Ok(s) => (Some(s), None),
            Err(e) if recoverable(&e) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let (full, full_error) = match dual::solve_full(set, &cfg.targets, q) {
        Ok(s) => (Some(s), None),
        Err(e) if recoverable(&e) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    output::write_json(
        dir,
        output::SOLVE,
        &SolveOutput {
            reduced,
            reduced_error,
            full,
            full_error,
        },
    )
}

fn fmt(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn rate_mode(cfg: &ExperimentConfig, set: &ObservableSet, q: &QuadratureParams, dir: &Path) -> Result<()> {
    let k = set.k();
    let grid = &cfg.rate.as_ref().expect("validated").z_grid;
    let evals = rate::rate_scan(set, &cfg.targets[..k - 1], grid, q)?;
    let mut w = csv::Writer::from_path(dir.join(output::RATE_SCAN))?;
    let mut header: Vec<String> = (1..=k).map(|i| format!("v_{i}")).collect();
    header.push("value".into());
    header.push("on_boundary".into());
    header.extend((1..=k).map(|i| format!("p_{i}")));
    w.write_record(&header)?;
    for e in &evals {
        let mut row: Vec<String> = e.v.iter().map(|v| fmt(*v)).collect();
        row.push(fmt(e.value));
        row.push(e.on_boundary.to_string());
        match &e.maximizer {
            Some(p) => row.extend(p.iter().map(|v| fmt(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), k)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Threshold events tracked for a regime, tagged with the role `verify` looks for.
pub fn tail_events(
    report: &PhaseReport,
    set: &ObservableSet,
    a: &[f64],
    limiting: &TiltedDensity,
) -> Vec<(&'static str, Event, Scaling)> {
    let eps = diagnostics::default_epsilon(report, a);
    let c = limiting.coefficients();
    let gamma = c
        .iter()
        .rposition(|v| *v != 0.0)
        .filter(|m| m + 1 < set.k())
        .and_then(|m| set.gamma().map(|g| g[m]));
    let mut out = Vec::new();
    match (report.regime, report.g2) {
        (Regime::Extraneous, Some(g2)) => {
            let s = a[a.len() - 1] - g2;
            out.push(("upper", Event::MAtLeast(s + eps), Scaling::LinearN));
            if let Some(g) = gamma {
                out.push(("lower", Event::MAtMost(s - eps), Scaling::PowerGamma(g)));
            }
            out.push(("lower_linear", Event::MAtMost(s - eps), Scaling::LinearN));
        }
        _ => {
            out.push(("delocalization", Event::MAbove(eps), Scaling::LinearN));
            if let Some(g) = gamma {
                out.push(("delocalization_gamma", Event::MAbove(eps), Scaling::PowerGamma(g)));
            }
        }
    }
    out
}

struct Cell {
    n: usize,
    delta: f64,
    batches: Vec<SampleBatch>,
}

fn sample(
    cfg: &ExperimentConfig,
    set: &ObservableSet,
    q: &QuadratureParams,
    dir: &Path,
    write_samples: bool,
) -> Result<()> {
    let report = dual::classify(set, &cfg.targets, q)?;
    output::write_json(dir, output::PHASE, &report)?;
    let limiting = dual::limiting_marginal(set, &cfg.targets, q)?;

    let mut cells = Vec::new();
    for &delta in &cfg.delta_list {
        for &n in &cfg.n_list {
            let idx = cells.len();
            let spec = ShellSpec::new(set.clone(), n, delta, cfg.targets.clone())?;
            let seeds: Vec<u64> = (0..cfg.chains_per_cell)
                .map(|c| chain_seed(cfg.seed, idx, c))
                .collect();
            let batches = sampler::run_chains(&spec, &cfg.chains, &seeds)?;
            if write_samples {
                write_batches(dir, &spec, &cfg.chains, &batches)?;
            }
            cells.push(Cell { n, delta, batches });
        }
    }

    let mut diag = Vec::new();
    let mut stats: Vec<Vec<MaxStats>> = Vec::new();
    for cell in &cells {
        let st: Vec<MaxStats> = cell
            .batches
            .iter()
            .flat_map(|b| diagnostics::max_stats(set, b))
            .collect();
        let pooled: Vec<f64> = cell.batches.iter().flat_map(diagnostics::pooled).collect();
        let (mean_m, mean_n) = diagnostics::mean_stats(&st);
        diag.push(DiagnosticsRow {
            n: cell.n,
            delta: cell.delta,
            ks: diagnostics::ks_distance(&pooled, &limiting)?,
            mean_m,
            mean_n,
        });
        stats.push(st);
    }
    output::write_csv(dir, output::DIAGNOSTICS, &diag)?;

    let events = tail_events(&report, set, &cfg.targets, &limiting);
    let mut tails = Vec::new();
    for &delta in &cfg.delta_list {
        let sweep: Vec<(usize, Vec<MaxStats>)> = cells
            .iter()
            .zip(&stats)
            .filter(|(c, _)| c.delta == delta)
            .map(|(c, s)| (c.n, s.clone()))
            .collect();
        for (role, event, scaling) in &events {
            for est in diagnostics::tail_rate(&sweep, event, *scaling)? {
                tails.push(TailRow {
                    n: est.n,
                    delta,
                    role: role.to_string(),
                    event: est.event,
                    scaling: scaling.label(),
                    estimate: est.estimate,
                    ci_lo: est.ci_lo,
                    ci_hi: est.ci_hi,
                    successes: est.successes,
                    trials: est.trials,
                    censored: est.censored,
                });
            }
        }
    }
    output::write_csv(dir, output::TAIL_RATES, &tails)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainSummary {
    seed: u64,
    acceptance_rate: f64,
    step: f64,
    states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleSidecar {
    n: usize,
    delta: f64,
    params: sampler::ChainParams,
    chains: Vec<ChainSummary>,
}

/// `samples_n{n}_delta{δ}.csv` with one row per recorded state, plus a JSON sidecar.
fn write_batches(dir: &Path, spec: &ShellSpec, params: &sampler::ChainParams, batches: &[SampleBatch]) -> Result<()> {
    let (n, k) = (spec.n, spec.set.k());
    let stem = format!("samples_n{n}_delta{}", spec.delta);
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
    let mut header: Vec<String> = ["chain", "seed", "index", "residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=k).map(|i| format!("S_{i}")));
    header.push("M".into());
    w.write_record(&header)?;
    for (c, b) in batches.iter().enumerate() {
        for (i, (x, r)) in b.states.iter().zip(&b.shell_residuals).enumerate() {
            let mut row = vec![c.to_string(), b.seed.to_string(), i.to_string(), fmt(*r)];
            row.extend(x.iter().map(|v| fmt(*v)));
            row.extend(spec.means(x).into_iter().map(fmt));
            row.push(fmt(diagnostics::max_stats_of(&spec.set, x).m));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let sidecar = SampleSidecar {
        n,
        delta: spec.delta,
        params: params.clone(),
        chains: batches
            .iter()
            .map(|b| ChainSummary {
                seed: b.seed,
                acceptance_rate: b.acceptance_rate,
                step: b.step,
                states: b.states.len(),
            })
            .collect(),
    };
    output::write_json(dir, &format!("{stem}.json"), &sidecar)
}

fn bruteforce(cfg: &ExperimentConfig, set: &ObservableSet, dir: &Path) -> Result<()> {
    for &delta in &cfg.delta_list {
        for &n in &cfg.n_list {
            let spec = ShellSpec::new(set.clone(), n, delta, cfg.targets.clone())?;
            let table = sampler::brute_force_conditional(&spec, cfg.bruteforce.resolution)?;
            let rows: Vec<OracleRow> = table
                .edges
                .windows(2)
                .zip(&table.density)
                .zip(table.cdf.iter().skip(1))
                .map(|((w, d), c)| OracleRow {
                    lo: w[0],
                    hi: w[1],
                    density: *d,
                    cdf: *c,
                })
                .collect();
            output::write_csv(dir, &format!("oracle_n{n}_delta{delta}.csv"), &rows)?;
        }
    }
    Ok(())
}
