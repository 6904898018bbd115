//! Experiment configuration: a flat TOML document with one nesting level
//! for the box, the potential, and kind-specific parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ilac_core::lattice::{Boundary, BoxSpec, PotentialDistribution, DEFAULT_SITE_CAP};
use ilac_core::measures::DosEstimator;
use ilac_core::tails::TailSide;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Dos,
    Ilac,
    Rho,
    Corners,
    Tails,
    Verify21,
    Verify31,
    Covariance,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Dos => "dos",
            ExperimentKind::Ilac => "ilac",
            ExperimentKind::Rho => "rho",
            ExperimentKind::Corners => "corners",
            ExperimentKind::Tails => "tails",
            ExperimentKind::Verify21 => "verify21",
            ExperimentKind::Verify31 => "verify31",
            ExperimentKind::Covariance => "covariance",
        };
        write!(f, "{s}")
    }
}

/// Which measure a tail profile probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    DosPlus,
    DosMinus,
    Ilac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub dimension: usize,
    pub side_length: usize,
    pub boundary: Boundary,
    #[serde(default = "default_site_cap")]
    pub site_cap: usize,
}

fn default_site_cap() -> usize {
    DEFAULT_SITE_CAP
}

impl BoxConfig {
    pub fn to_spec(&self) -> Result<BoxSpec, RunError> {
        BoxSpec::with_site_cap(self.dimension, self.side_length, self.boundary, self.site_cap)
            .map_err(|e| RunError::Config(e.to_string()))
    }
}

/// Kind-specific parameters; unused fields are simply absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Density-of-states estimator (dos).
    pub estimator: Option<DosEstimator>,
    /// Window half-widths for the edge tables and corner bounds.
    pub a_grid: Option<Vec<f64>>,
    /// Tail window half-widths, strictly decreasing.
    pub delta_grid: Option<Vec<f64>>,
    /// Energies to probe (tails).
    pub energies: Option<Vec<f64>>,
    /// Number of random rectangles checked per realization (rho).
    pub check_rectangles: Option<usize>,
    /// Exact band edges, flattened lo/hi pairs (corners).
    pub bands_plus: Option<Vec<String>>,
    pub bands_minus: Option<Vec<String>>,
    /// Torus geometry (covariance).
    pub torus_dimension: Option<usize>,
    pub torus_modulus: Option<usize>,
    /// Number of randomized family pairs/triples (covariance).
    pub families: Option<usize>,
    /// Measure probed by tail profiles (tails).
    pub tail_source: Option<TailSource>,
    /// Window sidedness for tail profiles (tails).
    pub side: Option<TailSide>,
}

/// The on-disk document; `kind` may come from the subcommand instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_realizations")]
    pub realizations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub box_spec: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialDistribution>,
    #[serde(default)]
    pub params: Params,
}

fn default_seed() -> u64 {
    1
}

fn default_realizations() -> u64 {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: default_seed(),
            realizations: default_realizations(),
            workers: None,
            out_dir: None,
            box_spec: None,
            potential: None,
            params: Params::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            RunError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Effective box: configured or the kind's default.
    pub fn box_or_default(&self) -> BoxConfig {
        self.box_spec.unwrap_or(BoxConfig {
            dimension: 1,
            side_length: 64,
            boundary: Boundary::Dirichlet,
            site_cap: DEFAULT_SITE_CAP,
        })
    }

    /// Effective potential: configured or uniform on [0, 1].
    pub fn potential_or_default(&self) -> PotentialDistribution {
        self.potential
            .unwrap_or(PotentialDistribution::UniformInterval { a: 0.0, b: 1.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let text = r#"
kind = "verify21"
seed = 42
realizations = 10

[box]
dimension = 1
side_length = 80
boundary = "dirichlet"

[potential]
kind = "uniform_interval"
a = 0.0
b = 1.0

[params]
a_grid = [0.05, 0.1, 0.25]
"#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(config.kind, Some(ExperimentKind::Verify21));
        assert_eq!(config.seed, 42);
        let round = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(config, round);
    }

    #[test]
    fn two_interval_potential_parses() {
        let text = r#"
[potential]
kind = "two_interval_uniform"
a1 = 0.0
b1 = 1.0
a2 = 9.0
b2 = 10.0
"#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(
            config.potential,
            Some(PotentialDistribution::TwoIntervalUniform { a1: 0.0, b1: 1.0, a2: 9.0, b2: 10.0 })
        );
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("unknown_key = true").is_err());
        assert!(ExperimentConfig::from_toml("[params]\nbogus = 1").is_err());
    }

    #[test]
    fn defaults_are_sane() {
        let config = ExperimentConfig::default();
        assert_eq!(config.seed, 1);
        assert_eq!(config.realizations, 1);
        let spec = config.box_or_default().to_spec().unwrap();
        assert_eq!(spec.site_count(), 64);
    }
}
