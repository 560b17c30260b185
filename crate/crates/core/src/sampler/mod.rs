//! Sampling on the constraint shell `C_n^δ = ∩ᵢ {|Sⁱ_n − aᵢ| ≤ δ}` and from tilted
//! product measures.

mod chain;
mod oracle;

pub use chain::{feasible_point, run_chain, run_chains, ChainParams, ReferenceKind, SampleBatch};
pub use oracle::{brute_force_conditional, brute_force_marginal, OracleTable};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::observables::ObservableSet;
use crate::quadrature::TiltedDensity;

/// `n` coordinates whose empirical means of `φ₁,…,φ_k` lie within `δ` of `a`.
#[derive(Debug, Clone)]
pub struct ShellSpec {
    pub set: ObservableSet,
    pub n: usize,
    pub delta: f64,
    pub a: Vec<f64>,
}

impl ShellSpec {
    pub fn new(set: ObservableSet, n: usize, delta: f64, a: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("shell needs n >= 1".into()));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Argument(format!("delta must be positive, got {delta}")));
        }
        if a.len() != set.k() || a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Argument(format!(
                "targets {a:?} must be {} positive values",
                set.k()
            )));
        }
        Ok(Self { set, n, delta, a })
    }

    /// `(S¹_n, …, S^k_n)`.
    pub fn means(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.set.k()];
        let mut phi = vec![0.0; self.set.k()];
        for &xj in x {
            self.set.eval_into(xj, &mut phi);
            for (a, b) in s.iter_mut().zip(&phi) {
                *a += b;
            }
        }
        s.iter().map(|v| v / x.len() as f64).collect()
    }

    /// `maxᵢ |Sⁱ_n − aᵢ|`, or `+∞` off `(0,∞)^n`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        if x.len() != self.n || x.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return f64::INFINITY;
        }
        self.means(x)
            .iter()
            .zip(&self.a)
            .map(|(s, a)| (s - a).abs())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.residual(x) <= self.delta
    }
}

/// `count` independent configurations of `n` i.i.d. draws from `d`, by quantile inversion.
pub fn sample_tilted(d: &TiltedDensity, n: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let mut u: f64 = rng.random();
                    while u == 0.0 {
                        u = rng.random();
                    }
                    d.quantile(u)
                })
                .collect()
        })
        .collect()
}
