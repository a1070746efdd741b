//! Run configuration: one JSON file with an optional section per subcommand.

use std::path::Path;

use equizero::bergman::BoundingBox;
use equizero::chebyshev::{BasisOptions, Family};
use equizero::compactset::ModelSet;
use equizero::ensemble::CoefficientMeasure;
use equizero::stats::ExperimentPlan;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub basis: Option<BasisSection>,
    #[serde(default)]
    pub green: Option<GreenSection>,
    /// Plan for expect/variance/sequence; the default plan when absent.
    #[serde(default)]
    pub experiment: Option<ExperimentPlan>,
    #[serde(default)]
    pub moment: Option<MomentSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub set: ModelSet,
    pub family: Family,
    pub degree: usize,
    #[serde(default)]
    pub options: BasisOptions,
    /// File name of the basis inside the output directory.
    #[serde(default = "default_basis_file")]
    pub file: String,
}

pub fn default_basis_file() -> String {
    "basis.json".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    /// Basis file; relative paths are taken inside the output directory.
    #[serde(default = "default_basis_file")]
    pub basis_file: String,
    /// Defaults to [-2, 2]^{2m}.
    #[serde(default)]
    pub bounds: Option<BoundingBox>,
    pub resolution: usize,
    /// Degrees at which to repeat the error computation on truncations of the basis.
    #[serde(default)]
    pub sweep: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    pub measure: CoefficientMeasure,
    /// Polynomial degrees n; the coefficient dimension is d_n for `variables`.
    pub degrees: Vec<usize>,
    #[serde(default = "one")]
    pub variables: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_directions() -> usize {
    32
}

fn default_trials() -> usize {
    10_000
}

/// Parsed config plus its canonical text (sorted keys, compact).
pub struct Loaded {
    pub config: RunConfig,
    pub canonical: String,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let canonical = serde_json::to_string(&value).map_err(|e| Failure::config(e.to_string()))?;
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(Loaded { config, canonical })
}
