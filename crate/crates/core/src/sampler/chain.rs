//! Metropolis chains restricted to the shell.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ShellSpec;
use crate::dual::{self, PhaseReport, Regime};
use crate::error::{Error, Result};
use crate::quadrature::{QuadratureParams, TiltedDensity};

/// The product measure being conditioned on the shell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Lebesgue measure: the uniform distribution on the shell.
    #[default]
    Uniform,
    /// The reference measure `λ ∝ e^{-φ₁}`.
    Base,
    /// The limiting marginal `λ*` of the targets.
    Limiting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainParams {
    /// Sweeps (of `n` proposals each) discarded before recording.
    pub burn_in: usize,
    /// Sweeps between recorded states.
    pub thin: usize,
    /// Initial standard deviation of the Gaussian proposal.
    #[serde(deserialize_with = "crate::experiment::num::f64")]
    pub step_scale: f64,
    /// Proposals per step-size update during burn-in.
    pub adapt_window: usize,
    #[serde(deserialize_with = "crate::experiment::num::f64")]
    pub target_accept: f64,
    /// Number of recorded states.
    pub n_samples: usize,
    /// Probability that a proposal swaps two coordinates instead of moving one.
    #[serde(deserialize_with = "crate::experiment::num::f64")]
    pub swap_prob: f64,
    pub reference: ReferenceKind,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            burn_in: 2000,
            thin: 1,
            step_scale: 0.5,
            adapt_window: 200,
            target_accept: 0.3,
            n_samples: 1000,
            swap_prob: 0.1,
            reference: ReferenceKind::Uniform,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("chain parameter {what}")));
        if !(self.step_scale.is_finite() && self.step_scale > 0.0) {
            return bad("step_scale must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0,1)");
        }
        if self.thin == 0 || self.n_samples == 0 || self.adapt_window == 0 {
            return bad("thin, n_samples and adapt_window must be positive");
        }
        if !(0.0..1.0).contains(&self.swap_prob) {
            return bad("swap_prob must lie in [0,1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
    /// Acceptance rate of single-coordinate moves after burn-in.
    pub acceptance_rate: f64,
    /// Proposal scale after adaptation.
    pub step: f64,
    pub shell_residuals: Vec<f64>,
}

const MIN_ACCEPT: f64 = 1e-3;
/// Proposals are checked against a slightly shrunken shell so that rounding in the
/// running sums can never let a recorded state fall outside the true one.
const SHELL_MARGIN: f64 = 1e-9;
const FEASIBILITY_STEPS: usize = 500;

struct Prepared {
    report: Option<PhaseReport>,
    limiting: Option<TiltedDensity>,
}

fn prepare(spec: &ShellSpec, q: &QuadratureParams) -> Result<Prepared> {
    if spec.set.k() == 1 {
        return Ok(Prepared {
            report: None,
            limiting: None,
        });
    }
    let report = dual::classify(&spec.set, &spec.a, q)?;
    if report.regime == Regime::Inadmissible {
        return Err(Error::Feasibility(format!(
            "targets {:?} are not admissible",
            spec.a
        )));
    }
    let limiting = dual::limiting_marginal_of(&spec.set, &spec.a, &report, q)?;
    Ok(Prepared {
        report: Some(report),
        limiting: Some(limiting),
    })
}

/// A configuration inside the shell: quantiles of `λ*`, a spike carrying the
/// condensed surplus in the extraneous regime, then minimum-norm Gauss–Newton.
pub fn feasible_point(spec: &ShellSpec) -> Result<Vec<f64>> {
    let q = QuadratureParams::default();
    feasible_from(spec, &prepare(spec, &q)?)
}

fn feasible_from(spec: &ShellSpec, prep: &Prepared) -> Result<Vec<f64>> {
    let (n, k) = (spec.n, spec.set.k());
    if k == 1 {
        let x = vec![spec.set.get(0).inverse(spec.a[0]); n];
        return if spec.contains(&x) {
            Ok(x)
        } else {
            Err(Error::Feasibility("level set of phi_1 is not representable".into()))
        };
    }
    let lim = prep.limiting.as_ref().expect("prepared for k >= 2");
    let report = prep.report.as_ref().expect("prepared for k >= 2");
    let mut x: Vec<f64> = (0..n)
        .map(|j| lim.quantile((j as f64 + 0.5) / n as f64))
        .collect::<Result<_>>()?;
    // In the extraneous regime the last coordinate carries the surplus n(a_k − g₂)
    // and stays fixed while the bulk is adjusted.
    let mut frozen = None;
    if report.regime == Regime::Extraneous && n >= 2 {
        let g2 = report.g2.expect("extraneous regime carries g2");
        let surplus = n as f64 * (spec.a[k - 1] - g2);
        if surplus > 0.0 {
            x[n - 1] = spec.set.last().inverse(surplus);
            frozen = Some(n - 1);
        }
    }

    let (mut x, mut r) = refine(spec, x, frozen);
    if r > spec.delta && frozen.is_some() {
        // At small n the asymptotic spike can be too short for the bulk to make up
        // the rest; let it move too.
        (x, r) = refine(spec, x, None);
    }
    if r <= spec.delta {
        return Ok(x);
    }
    Err(Error::Feasibility(format!(
        "residual {r} still above delta = {} after refinement",
        spec.delta
    )))
}

/// Minimum-norm Gauss–Newton in `ln x` on the shell residuals; returns the point and
/// its sup-norm residual.
fn refine(spec: &ShellSpec, mut x: Vec<f64>, frozen: Option<usize>) -> (Vec<f64>, f64) {
    let (n, k) = (spec.n, spec.set.k());
    let residuals = |x: &[f64]| -> Vec<f64> {
        spec.means(x).iter().zip(&spec.a).map(|(s, a)| s - a).collect()
    };
    let sup = |r: &[f64]| r.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let mut r = residuals(&x);
    for _ in 0..FEASIBILITY_STEPS {
        if sup(&r) <= 0.5 * spec.delta {
            break;
        }
        // Work in u = ln x so positivity is automatic.
        let jac = DMatrix::from_fn(k, n, |i, j| {
            if frozen == Some(j) {
                0.0
            } else {
                spec.set.get(i).deriv(x[j]) * x[j] / n as f64
            }
        });
        let jjt = &jac * jac.transpose();
        let rhs = DVector::from_column_slice(&r);
        let Some(w) = jjt.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| {
            let mut reg = jjt;
            let tr = reg.trace().max(1e-300);
            for i in 0..k {
                reg[(i, i)] += 1e-10 * tr;
            }
            reg.cholesky().map(|c| c.solve(&rhs))
        }) else {
            break;
        };
        let step = -(jac.transpose() * w);
        let biggest = step.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let mut alpha: f64 = if biggest > 1.0 { 1.0 / biggest } else { 1.0 };
        let norm = sup(&r);
        let mut improved = false;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a * (alpha * s).exp()).collect();
            let rt = residuals(&xt);
            if sup(&rt) < norm {
                x = xt;
                r = rt;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let r = sup(&r);
    (x, r)
}

fn reference_coefficients(kind: ReferenceKind, spec: &ShellSpec, prep: &Prepared, q: &QuadratureParams) -> Result<Vec<f64>> {
    let k = spec.set.k();
    Ok(match kind {
        ReferenceKind::Uniform => vec![0.0; k],
        ReferenceKind::Base => {
            let mut c = vec![0.0; k];
            c[0] = -1.0;
            c
        }
        ReferenceKind::Limiting => match &prep.limiting {
            Some(d) => d.coefficients().to_vec(),
            None => dual::solve_full(&spec.set, &spec.a, q)?
                .density(&spec.set, q)?
                .coefficients()
                .to_vec(),
        },
    })
}

/// Runs one seeded chain and returns the recorded states.
pub fn run_chain(spec: &ShellSpec, params: &ChainParams, seed: u64) -> Result<SampleBatch> {
    params.validate()?;
    let q = QuadratureParams::default();
    let prep = prepare(spec, &q)?;
    let init = feasible_from(spec, &prep)?;
    let coeffs = reference_coefficients(params.reference, spec, &prep, &q)?;
    Chain::new(spec, params, coeffs, init, seed).run()
}

/// Independent chains with seeds `seeds`, run in parallel.
pub fn run_chains(spec: &ShellSpec, params: &ChainParams, seeds: &[u64]) -> Result<Vec<SampleBatch>> {
    params.validate()?;
    let q = QuadratureParams::default();
    let prep = prepare(spec, &q)?;
    let init = feasible_from(spec, &prep)?;
    let coeffs = reference_coefficients(params.reference, spec, &prep, &q)?;
    seeds
        .par_iter()
        .map(|&s| Chain::new(spec, params, coeffs.clone(), init.clone(), s).run())
        .collect()
}

struct Chain<'a> {
    spec: &'a ShellSpec,
    params: &'a ChainParams,
    coeffs: Vec<f64>,
    x: Vec<f64>,
    /// `φᵢ(x_j)` at index `j·k + i`.
    phi: Vec<f64>,
    totals: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rng: ChaCha8Rng,
    seed: u64,
    log_step: f64,
}

impl<'a> Chain<'a> {
    fn new(spec: &'a ShellSpec, params: &'a ChainParams, coeffs: Vec<f64>, x: Vec<f64>, seed: u64) -> Self {
        let k = spec.set.k();
        let nf = spec.n as f64;
        let d = spec.delta * (1.0 - SHELL_MARGIN);
        let mut phi = vec![0.0; spec.n * k];
        for (j, &xj) in x.iter().enumerate() {
            spec.set.eval_into(xj, &mut phi[j * k..(j + 1) * k]);
        }
        let mut chain = Self {
            spec,
            params,
            coeffs,
            x,
            phi,
            totals: vec![0.0; k],
            lo: spec.a.iter().map(|a| nf * (a - d)).collect(),
            hi: spec.a.iter().map(|a| nf * (a + d)).collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            log_step: params.step_scale.ln(),
        };
        chain.recompute();
        chain
    }

    fn recompute(&mut self) {
        let k = self.spec.set.k();
        self.totals.iter_mut().for_each(|t| *t = 0.0);
        for row in self.phi.chunks_exact(k) {
            for (t, v) in self.totals.iter_mut().zip(row) {
                *t += v;
            }
        }
    }

    /// One proposal; returns `Some(accepted)` for single-coordinate moves.
    fn step(&mut self, buf: &mut [f64], new_totals: &mut [f64]) -> Option<bool> {
        let n = self.spec.n;
        let k = self.spec.set.k();
        if n >= 2 && self.params.swap_prob > 0.0 && self.rng.random::<f64>() < self.params.swap_prob {
            let j = self.rng.random_range(0..n);
            let mut l = self.rng.random_range(0..n - 1);
            if l >= j {
                l += 1;
            }
            self.x.swap(j, l);
            for i in 0..k {
                self.phi.swap(j * k + i, l * k + i);
            }
            return None;
        }
        let j = self.rng.random_range(0..n);
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let y = self.x[j] + self.log_step.exp() * z;
        if !(y > 0.0) {
            return Some(false);
        }
        self.spec.set.eval_into(y, buf);
        let old = &self.phi[j * k..(j + 1) * k];
        let mut log_ratio = 0.0;
        for i in 0..k {
            let t = self.totals[i] - old[i] + buf[i];
            if !(t >= self.lo[i] && t <= self.hi[i]) {
                return Some(false);
            }
            new_totals[i] = t;
            log_ratio += self.coeffs[i] * (buf[i] - old[i]);
        }
        if log_ratio < 0.0 && self.rng.random::<f64>().ln() >= log_ratio {
            return Some(false);
        }
        self.x[j] = y;
        self.phi[j * k..(j + 1) * k].copy_from_slice(buf);
        self.totals.copy_from_slice(new_totals);
        Some(true)
    }

    fn run(mut self) -> Result<SampleBatch> {
        let n = self.spec.n;
        let k = self.spec.set.k();
        let mut buf = vec![0.0; k];
        let mut new_totals = vec![0.0; k];

        let (mut win_prop, mut win_acc, mut windows) = (0usize, 0usize, 0usize);
        for _ in 0..self.params.burn_in {
            for _ in 0..n {
                if let Some(acc) = self.step(&mut buf, &mut new_totals) {
                    win_prop += 1;
                    win_acc += acc as usize;
                    if win_prop == self.params.adapt_window {
                        let rate = win_acc as f64 / win_prop as f64;
                        windows += 1;
                        self.log_step += (rate - self.params.target_accept) / (windows as f64).sqrt();
                        win_prop = 0;
                        win_acc = 0;
                    }
                }
            }
            self.recompute();
        }

        let (mut props, mut accs) = (0usize, 0usize);
        let mut states = Vec::with_capacity(self.params.n_samples);
        let mut residuals = Vec::with_capacity(self.params.n_samples);
        for _ in 0..self.params.n_samples {
            for _ in 0..self.params.thin {
                for _ in 0..n {
                    if let Some(acc) = self.step(&mut buf, &mut new_totals) {
                        props += 1;
                        accs += acc as usize;
                    }
                }
                self.recompute();
            }
            let r = self.spec.residual(&self.x);
            debug_assert!(r <= self.spec.delta, "state left the shell: {r}");
            residuals.push(r);
            states.push(self.x.clone());
        }
        let acceptance_rate = if props == 0 { 0.0 } else { accs as f64 / props as f64 };
        if acceptance_rate < MIN_ACCEPT {
            return Err(Error::MixingFailure {
                acceptance: acceptance_rate,
                step: self.log_step.exp(),
            });
        }
        Ok(SampleBatch {
            n,
            states,
            seed: self.seed,
            acceptance_rate,
            step: self.log_step.exp(),
            shell_residuals: residuals,
        })
    }
}
