//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dual::Regime;
use crate::error::{Error, Result};
use crate::observables::{power_set, ObservableSet};
use crate::sampler::ChainParams;

/// Accepts reals written either as JSON numbers or as decimal strings.
pub(crate) mod num {
    use serde::{de, Deserialize, Deserializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    fn convert<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| E::custom(format!("'{s}' is not a decimal number"))),
        }
    }

    pub fn f64<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        convert(Repr::deserialize(d)?)
    }

    pub fn vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?.into_iter().map(convert).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Solve,
    Classify,
    Rate,
    Sample,
    Bruteforce,
    Verify,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Solve => "SOLVE",
            Mode::Classify => "CLASSIFY",
            Mode::Rate => "RATE",
            Mode::Sample => "SAMPLE",
            Mode::Bruteforce => "BRUTEFORCE",
            Mode::Verify => "VERIFY",
        }
    }
}

/// Observable family. Only closed-form families can be declared in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ObservablesDecl {
    Powers {
        #[serde(deserialize_with = "num::vec")]
        exponents: Vec<f64>,
    },
}

impl ObservablesDecl {
    pub fn build(&self) -> Result<ObservableSet> {
        match self {
            ObservablesDecl::Powers { exponents } => power_set(exponents),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    /// Values of the last coordinate at which `I(a₁,…,a_{k−1}, z)` is evaluated.
    #[serde(deserialize_with = "num::vec")]
    pub z_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BruteforceSection {
    pub resolution: usize,
}

impl Default for BruteforceSection {
    fn default() -> Self {
        Self { resolution: 400 }
    }
}

/// Expected outcomes checked in VERIFY mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Expectations {
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub observables: ObservablesDecl,
    #[serde(deserialize_with = "num::vec")]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default, deserialize_with = "num::vec")]
    pub delta_list: Vec<f64>,
    #[serde(default)]
    pub chains: ChainParams,
    /// Independent chains per `(n, δ)` cell.
    #[serde(default = "default_chains_per_cell")]
    pub chains_per_cell: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub mode: Mode,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub bruteforce: BruteforceSection,
    #[serde(default)]
    pub expect: Expectations,
}

fn default_chains_per_cell() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("{field}: {why}")));
        let set = self
            .observables
            .build()
            .map_err(|e| Error::Config(format!("observables: {e}")))?;
        if self.targets.len() != set.k() {
            return bad(
                "targets",
                format!("expected {} values, got {}", set.k(), self.targets.len()),
            );
        }
        if self.targets.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return bad("targets", "values must be positive and finite".into());
        }
        if self.delta_list.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad("delta_list", "values must be positive".into());
        }
        if self.n_list.contains(&0) {
            return bad("n_list", "counts must be positive".into());
        }
        if matches!(self.mode, Mode::Sample | Mode::Verify | Mode::Bruteforce) {
            if self.n_list.is_empty() {
                return bad("n_list", format!("must be non-empty for {}", self.mode.name()));
            }
            if self.delta_list.is_empty() {
                return bad("delta_list", format!("must be non-empty for {}", self.mode.name()));
            }
        }
        if self.mode == Mode::Bruteforce {
            if let Some(n) = self.n_list.iter().find(|n| !(**n == 2 || **n == 3)) {
                return bad("n_list", format!("brute force needs n in {{2, 3}}, got {n}"));
            }
            if self.bruteforce.resolution < 2 {
                return bad("bruteforce.resolution", "must be at least 2".into());
            }
        }
        if self.mode == Mode::Rate {
            if set.k() < 2 {
                return bad("mode", "RATE needs at least two observables".into());
            }
            match &self.rate {
                None => return bad("rate", "z_grid is required for RATE".into()),
                Some(r) if r.z_grid.is_empty() || r.z_grid.windows(2).any(|w| w[0] >= w[1]) => {
                    return bad("rate.z_grid", "must be non-empty and strictly increasing".into())
                }
                _ => {}
            }
        }
        if self.chains_per_cell == 0 {
            return bad("chains_per_cell", "must be positive".into());
        }
        self.chains
            .validate()
            .map_err(|e| Error::Config(format!("chains: {e}")))
    }

    pub fn set(&self) -> Result<ObservableSet> {
        self.observables.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "observables": {"family": "POWERS", "exponents": [1, "2"]},
        "targets": ["1.0", 3],
        "n_list": [8],
        "delta_list": ["0.05"],
        "mode": "SAMPLE"
    }"#;

    #[test]
    fn parses_strings_and_numbers() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.targets, vec![1.0, 3.0]);
        assert_eq!(c.delta_list, vec![0.05]);
        assert_eq!(c.chains, ChainParams::default());
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::from_json(&BASE.replace("\"n_list\"", "\"n_lsit\"")).unwrap_err();
        assert!(e.to_string().contains("n_lsit"), "{e}");
        let e = ExperimentConfig::from_json(&BASE.replace("\"0.05\"", "\"abc\"")).unwrap_err();
        assert!(e.to_string().contains("delta_list"), "{e}");
        let e = ExperimentConfig::from_json(&BASE.replace("[8]", "[]")).unwrap_err();
        assert!(e.to_string().contains("n_list"), "{e}");
        let e = ExperimentConfig::from_json(&BASE.replace("\"mode\": \"SAMPLE\"", "\"mode\": \"SAMPLE\", \"chains\": {\"step\": 1}")).unwrap_err();
        assert!(e.to_string().contains("chains"), "{e}");
    }
}
