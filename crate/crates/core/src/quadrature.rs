//! Integrals against exponential tilts of the reference measure.
//!
//! A tilt `p` gives the Lebesgue density `exp(Σ cᵢ φᵢ(x)) / Z̃` on `(0,∞)` with
//! `c₁ = p₁ − 1` and `cᵢ = pᵢ` otherwise. Integrals are taken in `t = ln x` with
//! adaptive Gauss–Legendre panels; the integrand is shifted by its maximum before
//! exponentiation and truncated where it has fallen `tail_nats` below it.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::ObservableSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    pub rel_tol: f64,
    /// Maximum number of panel evaluations before giving up.
    pub max_panels: usize,
    /// Truncate where the (moment-weighted) log-integrand is this far below its peak.
    pub tail_nats: f64,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_panels: 20_000,
            tail_nats: 60.0,
        }
    }
}

impl QuadratureParams {
    fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::Argument(format!(
                "rel_tol must lie in (0, 1e-4], got {}",
                self.rel_tol
            )));
        }
        if self.max_panels == 0 || !(self.tail_nats > 0.0) {
            return Err(Error::Argument("panel budget and tail cutoff must be positive".into()));
        }
        Ok(())
    }
}

/// Membership in the domain of the log-partition function: the last nonzero
/// coordinate is negative, or every coordinate above the first vanishes and `p₁ < 1`.
pub fn in_domain(set: &ObservableSet, p: &[f64]) -> bool {
    if p.len() != set.k() || p.iter().any(|v| !v.is_finite()) {
        return false;
    }
    for i in (1..p.len()).rev() {
        if p[i] < 0.0 {
            return true;
        }
        if p[i] > 0.0 {
            return false;
        }
    }
    p[0] < 1.0
}

/// `H(p) = log ∫ e^{p·φ} dλ`; `H(0) = 0` exactly.
pub fn log_partition(set: &ObservableSet, p: &[f64], q: &QuadratureParams) -> Result<f64> {
    check_tilt(set, p)?;
    if p.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(log_normalizer(set, p, q)? - base_log_normalizer(set, q)?)
}

/// `log Z̃(p)`: the Lebesgue log-normalizer of the tilt.
pub fn log_normalizer(set: &ObservableSet, p: &[f64], q: &QuadratureParams) -> Result<f64> {
    Ok(TiltedDensity::new(set, p, q)?.log_norm())
}

/// `log Z = log ∫ e^{-φ₁} dx`, the normalizer of the reference measure.
pub fn base_log_normalizer(set: &ObservableSet, q: &QuadratureParams) -> Result<f64> {
    log_normalizer(set, &vec![0.0; set.k()], q)
}

pub fn moments(set: &ObservableSet, p: &[f64], q: &QuadratureParams) -> Result<Vec<f64>> {
    Ok(TiltedDensity::new(set, p, q)?.moments().to_vec())
}

pub fn covariance(set: &ObservableSet, p: &[f64], q: &QuadratureParams) -> Result<DMatrix<f64>> {
    Ok(TiltedDensity::new(set, p, q)?.covariance())
}

fn check_tilt(set: &ObservableSet, p: &[f64]) -> Result<()> {
    if p.len() != set.k() {
        return Err(Error::Argument(format!(
            "tilt has {} coordinates, observable set has {}",
            p.len(),
            set.k()
        )));
    }
    if !in_domain(set, p) {
        return Err(Error::Domain(p.to_vec()));
    }
    Ok(())
}

const GL_ORDER: usize = 15;
const SCAN_LO: f64 = -200.0;
const SCAN_HI: f64 = 200.0;
const SCAN_STEP: f64 = 0.1;
const INITIAL_PANEL: f64 = 0.5;

fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut xs = [0.0; GL_ORDER];
        let mut ws = [0.0; GL_ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            xs[i] = x;
            ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (xs, ws)
    })
}

/// Log of the t-space integrand `e^{Σ cᵢ φᵢ(eᵗ)} eᵗ`, writing `φᵢ(eᵗ)` into `phi`.
struct LogIntegrand<'a> {
    set: &'a ObservableSet,
    c: &'a [f64],
    /// Sign of the highest-index nonzero coefficient, which wins when terms overflow.
    tail_sign: f64,
}

impl<'a> LogIntegrand<'a> {
    fn new(set: &'a ObservableSet, c: &'a [f64]) -> Self {
        let tail_sign = c
            .iter()
            .rev()
            .find(|v| **v != 0.0)
            .map(|v| v.signum())
            .unwrap_or(1.0);
        Self { set, c, tail_sign }
    }

    #[inline]
    fn eval(&self, t: f64, phi: &mut [f64]) -> f64 {
        let x = t.exp();
        self.set.eval_into(x, phi);
        let mut acc = t;
        let mut overflow = false;
        for (ci, fi) in self.c.iter().zip(phi.iter()) {
            if *ci != 0.0 {
                let term = ci * fi;
                if term.is_finite() {
                    acc += term;
                } else {
                    overflow = true;
                }
            }
        }
        if overflow || !acc.is_finite() {
            if t > 0.0 {
                return self.tail_sign * f64::INFINITY;
            }
            return f64::NEG_INFINITY;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    cum_before: f64,
    mass: f64,
}

/// A normalized exponential tilt of the reference measure, with cached nodes.
#[derive(Debug, Clone)]
pub struct TiltedDensity {
    set: ObservableSet,
    p: Vec<f64>,
    c: Vec<f64>,
    log_norm: f64,
    shift: f64,
    z_scaled: f64,
    xs: Vec<f64>,
    probs: Vec<f64>,
    phis: Vec<f64>,
    panels: Vec<Panel>,
    moments: Vec<f64>,
}

impl TiltedDensity {
    pub fn new(set: &ObservableSet, p: &[f64], q: &QuadratureParams) -> Result<Self> {
        q.check()?;
        check_tilt(set, p)?;
        let k = set.k();
        let mut c = p.to_vec();
        c[0] -= 1.0;
        let f = LogIntegrand::new(set, &c);
        let mut phi = vec![0.0; k];
        let ncomp = 1 + 2 * k;

        // Coarse scan to locate the mass and fix the exponent shift.
        let steps = ((SCAN_HI - SCAN_LO) / SCAN_STEP).round() as usize;
        let mut scan_l = Vec::with_capacity(steps + 1);
        let mut scan_w = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let t = SCAN_LO + SCAN_STEP * i as f64;
            let l = f.eval(t, &mut phi);
            if l == f64::INFINITY || l.is_nan() {
                return Err(Error::Quadrature(format!("integrand overflows at t = {t}")));
            }
            let s: f64 = phi.iter().sum();
            scan_l.push(l);
            scan_w.push(l + 2.0 * s.ln_1p());
        }
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
        };
        let grid_t = |i: usize| SCAN_LO + SCAN_STEP * i as f64;
        let (iw, w_grid) = argmax(&scan_w);
        let (il, l_grid) = argmax(&scan_l);
        if !w_grid.is_finite() || !l_grid.is_finite() {
            return Err(Error::Quadrature("integrand vanishes on the scan range".into()));
        }
        // A peak narrower than the scan step is located by golden-section search.
        let w_at = |t: f64, phi: &mut [f64]| {
            let l = f.eval(t, phi);
            l + 2.0 * phi.iter().sum::<f64>().ln_1p()
        };
        let bracket = |i: usize| (grid_t(i.saturating_sub(1)), grid_t((i + 1).min(steps)));
        let (t_peak, w_peak) = golden_max(|t| w_at(t, &mut phi.clone()), bracket(iw));
        let (_, l_peak) = golden_max(|t| f.eval(t, &mut phi.clone()), bracket(il));
        let shift = l_grid.max(l_peak);
        let w_max = w_grid.max(w_peak);
        let threshold = w_max - q.tail_nats;

        let mut cand: Vec<(f64, f64)> = (0..=steps).map(|i| (grid_t(i), scan_w[i])).collect();
        let pos = cand.partition_point(|c| c.0 < t_peak);
        cand.insert(pos, (t_peak, w_peak));
        let first = cand.iter().position(|c| c.1 >= threshold).unwrap();
        let last = cand.iter().rposition(|c| c.1 >= threshold).unwrap();
        if last == cand.len() - 1 {
            return Err(Error::MomentDivergence(format!(
                "integrand for tilt {p:?} has not decayed at x = e^{SCAN_HI}"
            )));
        }
        if first == 0 {
            return Err(Error::Quadrature(format!(
                "integrand for tilt {p:?} has mass below x = e^{SCAN_LO}"
            )));
        }
        let mut crossing = |outside: f64, inside: f64| {
            let (mut o, mut i) = (outside, inside);
            for _ in 0..60 {
                let mid = 0.5 * (o + i);
                if w_at(mid, &mut phi) >= threshold {
                    i = mid;
                } else {
                    o = mid;
                }
            }
            o
        };
        let t_lo = crossing(cand[first - 1].0, cand[first].0);
        let t_hi = crossing(cand[last + 1].0, cand[last].0);

        let n_init = ((t_hi - t_lo) / INITIAL_PANEL).ceil().max(8.0) as usize;
        let width = (t_hi - t_lo) / n_init as f64;
        let initial: Vec<(f64, f64)> = (0..n_init)
            .map(|i| (t_lo + width * i as f64, t_lo + width * (i + 1) as f64))
            .collect();

        // One pass over the initial panels sets the absolute error scale per component.
        let mut scale = vec![0.0; ncomp];
        let mut probe = Panelled::new(ncomp, k);
        for &(a, b) in &initial {
            probe.fill(&f, shift, a, b, &mut phi);
            for (s, v) in scale.iter_mut().zip(&probe.sums) {
                *s += v.abs();
            }
        }
        for s in &mut scale {
            *s = s.max(1e-300);
        }

        let mut xs = Vec::new();
        let mut weights = Vec::new();
        let mut phis = Vec::new();
        let mut panels = Vec::new();
        let mut stack: Vec<(f64, f64)> = initial.into_iter().rev().collect();
        let tol = 0.1 * q.rel_tol;
        let mut budget = q.max_panels;
        let mut whole = Panelled::new(ncomp, k);
        let mut left = Panelled::new(ncomp, k);
        let mut right = Panelled::new(ncomp, k);
        while let Some((a, b)) = stack.pop() {
            if budget == 0 {
                return Err(Error::Quadrature(format!(
                    "panel budget {} exhausted for tilt {p:?}",
                    q.max_panels
                )));
            }
            budget -= 1;
            let m = 0.5 * (a + b);
            whole.fill(&f, shift, a, b, &mut phi);
            left.fill(&f, shift, a, m, &mut phi);
            right.fill(&f, shift, m, b, &mut phi);
            let err = (0..ncomp)
                .map(|j| (whole.sums[j] - left.sums[j] - right.sums[j]).abs() / scale[j])
                .fold(0.0, f64::max);
            if err <= tol || (b - a) < 1e-9 {
                for half in [&left, &right] {
                    panels.push(Panel {
                        a: half.a,
                        b: half.b,
                        cum_before: 0.0,
                        mass: half.sums[0],
                    });
                    xs.extend_from_slice(&half.xs);
                    weights.extend_from_slice(&half.ws);
                    phis.extend_from_slice(&half.phis);
                }
            } else {
                stack.push((m, b));
                stack.push((a, m));
            }
        }

        let z_scaled: f64 = weights.iter().sum();
        if !(z_scaled.is_finite() && z_scaled > 0.0) {
            return Err(Error::Quadrature(format!("normalizer for tilt {p:?} is {z_scaled}")));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / z_scaled).collect();
        let mut cum = 0.0;
        for panel in &mut panels {
            panel.mass /= z_scaled;
            panel.cum_before = cum;
            cum += panel.mass;
        }
        let mut moments = vec![0.0; k];
        for (j, pr) in probs.iter().enumerate() {
            for i in 0..k {
                moments[i] += pr * phis[j * k + i];
            }
        }
        if moments.iter().any(|m| !m.is_finite()) {
            return Err(Error::MomentDivergence(format!("tilt {p:?} has infinite moments")));
        }
        Ok(Self {
            set: set.clone(),
            p: p.to_vec(),
            log_norm: z_scaled.ln() + shift,
            c,
            shift,
            z_scaled,
            xs,
            probs,
            phis,
            panels,
            moments,
        })
    }

    pub fn set(&self) -> &ObservableSet {
        &self.set
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Lebesgue exponents `c₁ = p₁ − 1`, `cᵢ = pᵢ`.
    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// `log Z̃`, the Lebesgue log-normalizer.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `E[φᵢ]` for each `i`.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// Centered second moments of `(φ₁,…,φ_k)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.set.k();
        let mut cov = DMatrix::zeros(k, k);
        for (j, pr) in self.probs.iter().enumerate() {
            let row = &self.phis[j * k..(j + 1) * k];
            for a in 0..k {
                let da = row[a] - self.moments[a];
                for b in a..k {
                    cov[(a, b)] += pr * da * (row[b] - self.moments[b]);
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        cov
    }

    /// `E[f(X)]` by the cached quadrature rule.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.xs.iter().zip(&self.probs).map(|(&x, &pr)| pr * f(x)).sum()
    }

    /// Total mass of the quadrature rule; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Lebesgue density at `x > 0`.
    pub fn density_at(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let mut phi = vec![0.0; self.set.k()];
        let l = LogIntegrand::new(&self.set, &self.c).eval(x.ln(), &mut phi);
        (l - x.ln() - self.log_norm).exp()
    }

    fn t_density(&self, t: f64, phi: &mut [f64]) -> f64 {
        let l = LogIntegrand::new(&self.set, &self.c).eval(t, phi);
        (l - self.shift).exp() / self.z_scaled
    }

    /// Mass of `[a, t]` inside one panel.
    fn partial(&self, a: f64, t: f64, phi: &mut [f64]) -> f64 {
        if t <= a {
            return 0.0;
        }
        let (nodes, weights) = gauss_legendre();
        let (mid, half) = (0.5 * (a + t), 0.5 * (t - a));
        let mut s = 0.0;
        for (u, w) in nodes.iter().zip(weights) {
            s += w * self.t_density(mid + half * u, phi);
        }
        s * half
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let t = x.ln();
        let first = self.panels[0];
        let last = self.panels[self.panels.len() - 1];
        if t <= first.a {
            return 0.0;
        }
        if t >= last.b {
            return 1.0;
        }
        let idx = self.panels.partition_point(|p| p.b <= t);
        let panel = self.panels[idx];
        let mut phi = vec![0.0; self.set.k()];
        (panel.cum_before + self.partial(panel.a, t, &mut phi)).clamp(0.0, 1.0)
    }

    /// Inverse CDF at `u ∈ (0,1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Argument(format!("quantile level {u} is outside (0,1)")));
        }
        let mut idx = self
            .panels
            .partition_point(|p| p.cum_before + p.mass <= u)
            .min(self.panels.len() - 1);
        while idx > 0 && self.panels[idx].mass == 0.0 {
            idx -= 1;
        }
        let panel = self.panels[idx];
        let target = u - panel.cum_before;
        let mut phi = vec![0.0; self.set.k()];
        let (mut lo, mut hi) = (panel.a, panel.b);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..100 {
            let g = self.partial(panel.a, t, &mut phi) - target;
            if g.abs() <= 1e-13 {
                break;
            }
            if g < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.t_density(t, &mut phi);
            let newton = t - g / d;
            t = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        Ok(t.exp())
    }

    /// `log P(lo < X < hi)`, integrated directly so deep tails stay accurate.
    pub fn log_interval_prob(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::Argument(format!("interval ({lo}, {hi}) is empty")));
        }
        let f = LogIntegrand::new(&self.set, &self.c);
        let mut phi = vec![0.0; self.set.k()];
        let t_lo = if lo > 0.0 { lo.ln() } else { SCAN_LO };
        let t_hi = if hi.is_finite() { hi.ln() } else { SCAN_HI };
        if t_hi <= t_lo {
            return Err(Error::Argument(format!("interval ({lo}, {hi}) is empty")));
        }
        // Local shift so that a probability of e^{-10^4} is still representable in log form.
        let n_scan = 400;
        let step = (t_hi - t_lo) / n_scan as f64;
        let local_max = (0..=n_scan)
            .map(|i| f.eval(t_lo + step * i as f64, &mut phi))
            .fold(f64::NEG_INFINITY, f64::max);
        if !local_max.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = 0.0;
        let mut stack: Vec<(f64, f64)> = (0..n_scan)
            .rev()
            .map(|i| (t_lo + step * i as f64, t_lo + step * (i + 1) as f64))
            .collect();
        let mut scale = 0.0;
        for i in 0..=n_scan {
            scale += (f.eval(t_lo + step * i as f64, &mut phi) - local_max).exp() * step;
        }
        let mut budget = 200_000usize;
        while let Some((a, b)) = stack.pop() {
            budget = budget.checked_sub(1).ok_or_else(|| {
                Error::Quadrature(format!("interval ({lo}, {hi}) did not converge"))
            })?;
            let m = 0.5 * (a + b);
            let whole = gl_scalar(&f, local_max, a, b, &mut phi);
            let l = gl_scalar(&f, local_max, a, m, &mut phi);
            let r = gl_scalar(&f, local_max, m, b, &mut phi);
            if (whole - l - r).abs() <= 1e-12 * scale || b - a < 1e-12 {
                total += l + r;
            } else {
                stack.push((m, b));
                stack.push((a, m));
            }
        }
        Ok(total.ln() + local_max - self.log_norm)
    }
}

fn golden_max(f: impl Fn(f64) -> f64, (mut a, mut b): (f64, f64)) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a < 1e-13 {
            break;
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn gl_scalar(f: &LogIntegrand<'_>, shift: f64, a: f64, b: f64, phi: &mut [f64]) -> f64 {
    let (nodes, weights) = gauss_legendre();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (u, w) in nodes.iter().zip(weights) {
        s += w * (f.eval(mid + half * u, phi) - shift).exp();
    }
    s * half
}

/// One Gauss–Legendre panel with its nodes retained.
struct Panelled {
    a: f64,
    b: f64,
    k: usize,
    sums: Vec<f64>,
    xs: Vec<f64>,
    ws: Vec<f64>,
    phis: Vec<f64>,
}

impl Panelled {
    fn new(ncomp: usize, k: usize) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            k,
            sums: vec![0.0; ncomp],
            xs: Vec::with_capacity(GL_ORDER),
            ws: Vec::with_capacity(GL_ORDER),
            phis: Vec::with_capacity(GL_ORDER * k),
        }
    }

    fn fill(&mut self, f: &LogIntegrand<'_>, shift: f64, a: f64, b: f64, phi: &mut [f64]) {
        let (nodes, weights) = gauss_legendre();
        let k = self.k;
        self.a = a;
        self.b = b;
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        self.xs.clear();
        self.ws.clear();
        self.phis.clear();
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (u, w) in nodes.iter().zip(weights) {
            let t = mid + half * u;
            let l = f.eval(t, phi);
            let wt = w * half * (l - shift).exp();
            self.sums[0] += wt;
            for j in 0..k {
                self.sums[1 + j] += wt * phi[j];
                self.sums[1 + k + j] += wt * phi[j] * phi[j];
            }
            self.xs.push(t.exp());
            self.ws.push(wt);
            self.phis.extend_from_slice(phi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::power_set;

    fn q() -> QuadratureParams {
        QuadratureParams::default()
    }

    #[test]
    fn gl_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre();
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m28: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(28)).sum();
        assert!((m28 - 2.0 / 29.0).abs() < 1e-14);
    }

    #[test]
    fn domain_examples() {
        let s2 = power_set(&[1.0, 2.0]).unwrap();
        let s3 = power_set(&[1.0, 2.0, 3.0]).unwrap();
        assert!(in_domain(&s2, &[0.5, 0.0]));
        assert!(!in_domain(&s2, &[0.0, 0.1]));
        assert!(in_domain(&s3, &[5.0, 5.0, -1.0]));
        assert!(!in_domain(&s2, &[1.0, 0.0]));
        assert!(in_domain(&s3, &[7.0, -0.1, 0.0]));
        assert!(!in_domain(&s3, &[0.2, 0.0, 0.0 + 1e-300]));
    }

    #[test]
    fn log_partition_closed_forms() {
        let s2 = power_set(&[1.0, 2.0]).unwrap();
        assert_eq!(log_partition(&s2, &[0.0, 0.0], &q()).unwrap(), 0.0);
        let h = log_partition(&s2, &[0.5, 0.0], &q()).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-10, "{h}");
        assert!(matches!(
            log_partition(&s2, &[0.0, 0.1], &q()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn moments_closed_forms() {
        let s2 = power_set(&[1.0, 2.0]).unwrap();
        let m = moments(&s2, &[0.0, 0.0], &q()).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-10 && (m[1] - 2.0).abs() < 1e-10);
        let m = moments(&s2, &[0.5, 0.0], &q()).unwrap();
        assert!((m[0] - 2.0).abs() < 1e-9 && (m[1] - 8.0).abs() < 1e-9);
        let s3 = power_set(&[1.0, 2.0, 3.0]).unwrap();
        let m = moments(&s3, &[0.0; 3], &q()).unwrap();
        for (a, b) in m.iter().zip([1.0, 2.0, 6.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn exponential_quantile_and_cdf() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let d = TiltedDensity::new(&s, &[0.0, 0.0], &q()).unwrap();
        assert!((d.quantile(0.5).unwrap() - 2f64.ln()).abs() < 1e-9);
        assert!((d.cdf(1.0) - (1.0 - (-1f64).exp())).abs() < 1e-10);
        assert!((d.density_at(2.0) - (-2f64).exp()).abs() < 1e-12);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!(d.quantile(0.0).is_err() && d.quantile(1.0).is_err());
    }

    #[test]
    fn covariance_of_exponential() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let c = covariance(&s, &[0.0, 0.0], &q()).unwrap();
        // Var X = 1, Cov(X, X²) = 6 - 2, Var X² = 24 - 4.
        assert!((c[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((c[(0, 1)] - 4.0).abs() < 1e-9);
        assert!((c[(1, 1)] - 20.0).abs() < 1e-8);
    }

    #[test]
    fn deep_tail_interval() {
        let s = power_set(&[1.0, 2.0]).unwrap();
        let d = TiltedDensity::new(&s, &[0.0, 0.0], &q()).unwrap();
        let (a, b) = (150.0f64, 160.0f64);
        let exact = -a + (1.0 - (a - b).exp()).ln();
        let got = d.log_interval_prob(a, b).unwrap();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn rejects_loose_tolerance() {
        let s = power_set(&[1.0]).unwrap();
        let bad = QuadratureParams {
            rel_tol: 1e-3,
            ..q()
        };
        assert!(matches!(
            TiltedDensity::new(&s, &[0.0], &bad),
            Err(Error::Argument(_))
        ));
    }
}
