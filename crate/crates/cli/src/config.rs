//! Run configuration: one JSON document, with command-line flags taking
//! precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use ssn_core::adversarial::{AdvConfig, FilterConfig};
use ssn_core::evaluation::SyntheticSpec;
use ssn_core::generator::GenConfig;
use ssn_core::sampling::{ReferenceStrategy, SamplerConfig};
use ssn_core::ssn::SSNConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Global seed; every random stream in a run derives from it.
    pub seed: u64,
    /// Output directory for artifacts and the manifest.
    pub out: PathBuf,
    /// Token corpus consumed by training/evaluation commands.
    pub corpus: Option<PathBuf>,
    /// Detector dimensions; defaults to the toy configuration sized to the
    /// corpus vocabulary when absent.
    pub ssn: Option<SSNConfig>,
    /// Generator dimensions; same defaulting rule as `ssn`.
    pub gen: Option<GenConfig>,
    pub adv: AdvConfig,
    pub filter: FilterConfig,
    pub sampler: SamplerConfig,
    pub strategy: ReferenceStrategy,
    pub synth: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            corpus: None,
            ssn: None,
            gen: None,
            adv: AdvConfig::default(),
            filter: FilterConfig::default(),
            sampler: SamplerConfig::default(),
            strategy: ReferenceStrategy::OneEach,
            synth: SyntheticSpec::toy(0.8, 0),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }
}
