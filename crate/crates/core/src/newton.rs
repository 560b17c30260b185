//! Damped Newton on the convex dual `p ↦ log Z̃(p) − Σ_{i<m} pᵢ aᵢ`.
//!
//! The first `free` coordinates of `p` move; the rest stay at their base values.
//! When the face carries a strict bound on its last free coordinate, each step
//! closes at most 99% of the remaining gap, so the gap shrinks geometrically at
//! worst and every iterate stays in the domain.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::observables::ObservableSet;
use crate::quadrature::{QuadratureParams, TiltedDensity};

pub(crate) const TOL: f64 = 1e-8;
pub(crate) const MAX_ITER: usize = 200;
const DRIFT_RUN: usize = 20;
const DRIFT_GAP: f64 = 1e-14;
const P_MAX: f64 = 1e6;
const MAX_STEP: f64 = 5.0;
/// Largest fraction of the remaining gap one step may close.
const TO_BOUNDARY: f64 = 0.99;
const POLISH: f64 = 1e-12;
const MAX_POLISH: usize = 3;

#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    pub set: &'a ObservableSet,
    pub q: &'a QuadratureParams,
    /// Targets for coordinates `0..free`.
    pub targets: &'a [f64],
    pub free: usize,
    /// Strict upper bound on coordinate `free - 1`.
    pub bound: Option<f64>,
    /// Values of the coordinates that do not move (entries below `free` are ignored).
    pub base: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub p: Vec<f64>,
    pub density: TiltedDensity,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub(crate) enum Outcome {
    Converged(Iterate),
    /// The bounded coordinate ran into its bound without the residual closing.
    Drift(Iterate),
    /// The iterate left every bounded region.
    Unbounded(Iterate),
    Stall(Iterate),
}

impl Problem<'_> {
    fn assemble(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.base.clone();
        p[..self.free].copy_from_slice(x);
        p
    }

    fn objective(&self, p: &[f64], d: &TiltedDensity) -> f64 {
        d.log_norm()
            - p[..self.free]
                .iter()
                .zip(self.targets)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    fn residual(&self, d: &TiltedDensity) -> f64 {
        d.moments()[..self.free]
            .iter()
            .zip(self.targets)
            .map(|(m, a)| (m - a).abs())
            .fold(0.0, f64::max)
    }

    /// Log of the distance from the bounded coordinate to its bound.
    fn log_gap(&self, x: &[f64]) -> f64 {
        match self.bound {
            Some(b) => (b - x[self.free - 1]).ln(),
            None => f64::INFINITY,
        }
    }

    fn scale(&self) -> f64 {
        self.targets.iter().fold(1.0, |m, a| f64::max(m, a.abs()))
    }
}

pub(crate) fn solve(problem: &Problem<'_>, init: &[f64]) -> Result<Outcome> {
    let m = problem.free;
    let mut x = init[..m].to_vec();
    if let Some(b) = problem.bound {
        assert!(x[m - 1] < b, "initial point violates the face bound");
    }
    let mut p = problem.assemble(&x);
    let mut d = TiltedDensity::new(problem.set, &p, problem.q)?;
    let mut f = problem.objective(&p, &d);
    let mut res = problem.residual(&d);
    let mut drift_run = 0usize;
    let mut polish = 0usize;
    let polished = POLISH * problem.scale();

    let iterate = |p: Vec<f64>, density: TiltedDensity, residual: f64, iterations: usize| Iterate {
        p,
        density,
        residual,
        iterations,
    };

    for it in 0..MAX_ITER {
        if res <= TOL {
            // A couple of extra steps push the unmatched moments to full accuracy too.
            polish += 1;
            if res <= polished || polish > MAX_POLISH {
                return Ok(Outcome::Converged(iterate(p, d, res, it)));
            }
        }
        let mom = d.moments();
        let g = DVector::from_fn(m, |i, _| mom[i] - problem.targets[i]);
        let cov = d.covariance();
        let h = DMatrix::from_fn(m, m, |i, j| cov[(i, j)]);
        let mut step = newton_direction(&h, &g);
        if problem.bound.is_some() && step[m - 1] > 0.0 && g[m - 1] > 0.0 {
            // Coupling drags the bounded coordinate towards its bound against its
            // own gradient; truncation would then jam. Move it downhill instead.
            step = block_direction(&h, &g);
        }

        // Keep the step bounded and strictly inside the face.
        let norm = x.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let limit = MAX_STEP.max(norm);
        let big = step.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        if big > limit {
            step *= limit / big;
        }
        if let Some(b) = problem.bound {
            let gap = b - x[m - 1];
            if step[m - 1] > 0.0 && step[m - 1] >= TO_BOUNDARY * gap {
                step *= TO_BOUNDARY * gap / step[m - 1];
            }
        }
        let slope = g.dot(&step);

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
            let pt = problem.assemble(&xt);
            if let Ok(dt) = TiltedDensity::new(problem.set, &pt, problem.q) {
                let ft = problem.objective(&pt, &dt);
                let rt = problem.residual(&dt);
                let armijo = ft <= f + 1e-4 * alpha * slope;
                if ft.is_finite() && (armijo || rt <= (1.0 - 1e-4) * res) {
                    accepted = Some((xt, pt, dt, ft, rt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xt, pt, dt, ft, rt)) = accepted else {
            if res <= TOL {
                return Ok(Outcome::Converged(iterate(p, d, res, it)));
            }
            return Ok(Outcome::Stall(iterate(p, d, res, it)));
        };
        if res <= TOL && rt > res {
            return Ok(Outcome::Converged(iterate(p, d, res, it)));
        }

        let (gap_old, gap_new) = (problem.log_gap(&x), problem.log_gap(&xt));
        if gap_new < gap_old && rt > 0.9 * res {
            drift_run += 1;
        } else {
            drift_run = 0;
        }
        x = xt;
        p = pt;
        d = dt;
        f = ft;
        res = rt;

        if res <= TOL {
            continue;
        }
        if p.iter().any(|v| v.abs() > P_MAX) {
            return Ok(Outcome::Unbounded(iterate(p, d, res, it + 1)));
        }
        if drift_run >= DRIFT_RUN || gap_new < DRIFT_GAP.ln() {
            return Ok(Outcome::Drift(iterate(p, d, res, it + 1)));
        }
    }
    if res <= TOL {
        return Ok(Outcome::Converged(iterate(p, d, res, MAX_ITER)));
    }
    Ok(Outcome::Stall(iterate(p, d, res, MAX_ITER)))
}

/// Diagonal Newton move on the last coordinate, conditional Newton on the rest.
fn block_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let m = h.nrows();
    let sm = -g[m - 1] / h[(m - 1, m - 1)].max(1e-300);
    let mut step = DVector::zeros(m);
    step[m - 1] = sm;
    if m > 1 {
        let hr = h.view((0, 0), (m - 1, m - 1)).into_owned();
        let rhs = DVector::from_fn(m - 1, |i, _| g[i] + h[(i, m - 1)] * sm);
        let sr = newton_direction(&hr, &rhs);
        step.rows_mut(0, m - 1).copy_from(&sr);
    }
    step
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = h.nrows();
    let trace: f64 = (0..n).map(|i| h[(i, i)].abs()).sum::<f64>().max(1e-300);
    let mut mu = 0.0;
    for _ in 0..40 {
        let mut reg = h.clone();
        for i in 0..n {
            reg[(i, i)] += mu;
        }
        if let Some(ch) = reg.cholesky() {
            let s = ch.solve(&(-g));
            if s.iter().all(|v| v.is_finite()) {
                return s;
            }
        }
        mu = if mu == 0.0 { 1e-14 * trace } else { mu * 10.0 };
    }
    // Steepest descent as a last resort.
    -g / trace
}
