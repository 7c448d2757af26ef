//! Run configuration, read from a TOML file with shared sections and one
//! section per command. Command-line flags override file values.
//!
//! ```toml
//! [model]
//! covariates = "M4"
//! degree = 5
//! t_max = 100
//!
//! [chain]
//! iterations = 20000
//! burn_in = 2000
//! seed = 7
//!
//! [ascertainment]
//! psi_a = 0.0006
//!
//! [simulate]
//! n_families = 50
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::likelihood::{AscertainmentConfig, LikelihoodSettings, TruncationPolicy};
use crate::nhpp::{CovariateSet, DEFAULT_DEGREE};
use crate::pedigree::DEFAULT_T_MAX;
use crate::predict::{CvConfig, FitSetup};
use crate::sampler::{ChainConfig, ModelSpec, PriorConfig};
use crate::simulate::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub covariates: CovariateSet,
    pub degree: usize,
    pub t_max: f64,
    pub truncation: TruncationPolicy,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            covariates: CovariateSet::preset(4).expect("preset exists"),
            degree: DEFAULT_DEGREE,
            t_max: DEFAULT_T_MAX,
            truncation: TruncationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenetranceSection {
    /// Queries such as `"G=1,S=0,k=1,T1=20"`.
    pub queries: Vec<String>,
    pub grid_max: f64,
    pub grid_step: f64,
    pub level: f64,
}

impl Default for PenetranceSection {
    fn default() -> Self {
        PenetranceSection {
            queries: vec!["G=1,S=0,k=0".into(), "G=1,S=0,k=1,T1=20".into()],
            grid_max: 50.0,
            grid_step: 1.0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdaSection {
    pub include_probands: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
    pub model: ModelSection,
    pub prior: PriorConfig,
    pub chain: ChainConfig,
    pub ascertainment: AscertainmentConfig,
    pub simulate: SimConfig,
    pub validate: CvConfig,
    pub penetrance: PenetranceSection,
    pub eda: EdaSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn settings(&self) -> LikelihoodSettings {
        LikelihoodSettings {
            t_max: self.model.t_max,
            truncation: self.model.truncation,
            ascertainment: self.ascertainment,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            covariates: self.model.covariates.clone(),
            degree: self.model.degree,
        }
    }

    pub fn fit_setup(&self) -> FitSetup {
        FitSetup {
            spec: self.spec(),
            chain: self.chain.clone(),
            prior: self.prior,
            settings: self.settings(),
        }
    }
}
