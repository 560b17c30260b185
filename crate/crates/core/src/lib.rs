//! Equilibrium theory of microcanonical ensembles with several unbounded moment
//! constraints, and the numerical experiments that check it.
//!
//! The configuration space is `(0,∞)^n` with reference measure
//! `λ = e^{-φ₁(x)} dx / Z`. A microcanonical shell fixes the empirical means of
//! `φ₁,…,φ_k` to within `δ` of targets `a₁,…,a_k`. As `n → ∞` a single coordinate
//! is distributed according to an exponential tilt `λ*` of `λ`, unless the last
//! constraint is too large to be carried by the bulk, in which case the surplus
//! condenses onto one coordinate.
//!
//! * [`observables`]: the constraint functions and their growth conditions.
//! * [`quadrature`]: log-partition function, moments and quantiles of tilts.
//! * [`dual`]: moment matching, the phase functions `g₁`, `g₂` and classification.
//! * [`rate`]: the rate function `I`, its projection onto the maximum, entropy.
//! * [`sampler`]: shell MCMC, tilted product sampling and a brute-force oracle.
//! * [`diagnostics`]: KS distances, maximum statistics, tail rates.
//! * [`experiment`]: configuration files and the runs behind the CLI.

pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod experiment;
mod newton;
pub mod observables;
pub mod quadrature;
pub mod rate;
pub mod sampler;

pub use dual::{classify, g1, g2, limiting_marginal, solve_full, solve_reduced, DualSolution, G1, PhaseReport, Regime};
pub use error::{Error, Result};
pub use observables::{power_set, validate_assumptions, Observable, ObservableSet, ProbeGrid};
pub use quadrature::{covariance, in_domain, log_partition, moments, QuadratureParams, TiltedDensity};
pub use rate::{entropy, jmax_projected, k_of, rate_i, rate_scan, RateEval};
