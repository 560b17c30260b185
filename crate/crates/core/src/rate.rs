//! The rate function `I(v) = sup_{p∈D} p·v − H(p)`, its projection onto the
//! maximum component, and differential entropies of tilts.

use serde::{Deserialize, Serialize, Serializer};

use crate::dual::{self, g1_closed_form, prefix_admissible, DualSolution, Prefix};
use crate::error::{Error, Result};
use crate::observables::ObservableSet;
use crate::quadrature::{base_log_normalizer, QuadratureParams, TiltedDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEval {
    pub v: Vec<f64>,
    /// `+∞` when the supremum diverges.
    #[serde(serialize_with = "finite_or_inf", deserialize_with = "de_finite_or_inf")]
    pub value: f64,
    /// The maximizing tilt; absent when the value is infinite.
    pub maximizer: Option<Vec<f64>>,
    /// True when the supremum sits on a lower face (trailing tilt coordinates zero).
    pub on_boundary: bool,
}

impl RateEval {
    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }

    fn infinite(v: &[f64]) -> Self {
        Self {
            v: v.to_vec(),
            value: f64::INFINITY,
            maximizer: None,
            on_boundary: false,
        }
    }
}

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

fn de_finite_or_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(v),
        Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Repr::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s}"))),
    }
}

/// `I(v)` by concave maximization over the faces of `D`.
pub fn rate_i(set: &ObservableSet, v: &[f64], q: &QuadratureParams) -> Result<RateEval> {
    let k = set.k();
    if v.len() != k {
        return Err(Error::Argument(format!("expected {k} values, got {}", v.len())));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Ok(RateEval::infinite(v));
    }
    if k >= 2 {
        let prefix = &v[..k - 1];
        if prefix_admissible(set, prefix) == Some(false) {
            return Ok(RateEval::infinite(v));
        }
        if let Some(g) = g1_closed_form(set, prefix) {
            if v[k - 1] <= g {
                return Ok(RateEval::infinite(v));
            }
        }
    }
    let base = base_log_normalizer(set, q)?;
    sup_on_face(set, v, k, base, q)
}

fn sup_on_face(set: &ObservableSet, v: &[f64], m: usize, base: f64, q: &QuadratureParams) -> Result<RateEval> {
    let k = set.k();
    let found = |sol: DualSolution| -> Result<RateEval> {
        let d = TiltedDensity::new(set, &sol.p, q)?;
        let pv: f64 = sol.p.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok(RateEval {
            v: v.to_vec(),
            value: (pv - (d.log_norm() - base)).max(0.0),
            maximizer: Some(sol.p),
            on_boundary: m < k,
        })
    };
    if m == k {
        return match dual::solve_full(set, v, q) {
            Ok(sol) => found(sol),
            // The last moment is not carried by any full tilt: the sup sits below.
            Err(Error::NoFullTilt(_)) if k >= 2 => sup_on_face(set, v, k - 1, base, q),
            Err(Error::Inadmissible(_)) => Ok(RateEval::infinite(v)),
            Err(e) => Err(e),
        };
    }
    match dual::solve_prefix(set, v, m, q)? {
        Prefix::Solved(sol) => found(sol),
        Prefix::Short(_) if m >= 2 => sup_on_face(set, v, m - 1, base, q),
        Prefix::Short(why) => Err(Error::Infeasible(why)),
        Prefix::Diverged(_) => Ok(RateEval::infinite(v)),
    }
}

/// `I(a₁,…,a_{k−1}, a_k − z) − I(a)`: the rate for the maximum component to carry `z`.
pub fn jmax_projected(set: &ObservableSet, a: &[f64], z: f64, q: &QuadratureParams) -> Result<f64> {
    let k = set.k();
    if a.len() != k {
        return Err(Error::Argument(format!("expected {k} targets, got {}", a.len())));
    }
    if !(z >= 0.0 && z <= a[k - 1]) {
        return Err(Error::Argument(format!("z = {z} outside [0, {}]", a[k - 1])));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let base = rate_i(set, a, q)?;
    if base.is_infinite() {
        return Err(Error::Inadmissible(a.to_vec()));
    }
    let mut shifted = a.to_vec();
    shifted[k - 1] -= z;
    let moved = rate_i(set, &shifted, q)?;
    if moved.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok((moved.value - base.value).max(0.0))
}

/// Differential entropy `h = log Z̃ − Σ cᵢ E[φᵢ]` of a tilt.
pub fn entropy(d: &TiltedDensity) -> f64 {
    d.log_norm()
        - d.coefficients()
            .iter()
            .zip(d.moments())
            .map(|(c, m)| c * m)
            .sum::<f64>()
}

/// `K(a) = −h(λ*)`.
pub fn k_of(set: &ObservableSet, a: &[f64], q: &QuadratureParams) -> Result<f64> {
    Ok(-entropy(&dual::limiting_marginal(set, a, q)?))
}

/// `I(prefix, z)` along an increasing grid of last-coordinate values.
pub fn rate_scan(set: &ObservableSet, prefix: &[f64], z_grid: &[f64], q: &QuadratureParams) -> Result<Vec<RateEval>> {
    if prefix.len() + 1 != set.k() {
        return Err(Error::Argument(format!(
            "prefix must have {} entries, got {}",
            set.k() - 1,
            prefix.len()
        )));
    }
    if z_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("z grid must be strictly increasing".into()));
    }
    z_grid
        .iter()
        .map(|&z| {
            let mut v = prefix.to_vec();
            v.push(z);
            rate_i(set, &v, q)
        })
        .collect()
}
