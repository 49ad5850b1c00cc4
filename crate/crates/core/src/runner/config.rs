use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::missingness::MissingnessSpec;
use crate::network::{Baseline, MlpConfig};

/// A compared method: the evolved activation or a fixed baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Evolved,
    Baseline(Baseline),
}

impl Method {
    pub const EVOLVED_NAME: &'static str = "3C-EA";

    pub fn all() -> Vec<Method> {
        std::iter::once(Method::Evolved)
            .chain(Baseline::ALL.into_iter().map(Method::Baseline))
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Evolved => f.write_str(Method::EVOLVED_NAME),
            Method::Baseline(b) => f.write_str(b.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case(Method::EVOLVED_NAME) {
            return Ok(Method::Evolved);
        }
        Baseline::from_name(s)
            .map(Method::Baseline)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Component removed from the evolved-activation system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoConfidence,
    NoFlag,
    NoChannelprop,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoConfidence, Ablation::NoFlag, Ablation::NoChannelprop];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoConfidence => "no_confidence",
            Ablation::NoFlag => "no_flag",
            Ablation::NoChannelprop => "no_channelprop",
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Path to a dataset manifest.
    Manifest(PathBuf),
    /// Standard-normal features labelled by how many are extreme.
    Synthetic {
        rows: usize,
        features: usize,
        min_extreme: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub missingness: Option<MissingnessSpec>,
    pub split: SplitSpec,
    pub gp: GpConfig,
    pub mlp: MlpConfig,
    pub methods: Vec<Method>,
    pub ablation: Ablation,
    pub runs: usize,
    pub base_seed: u64,
    /// Confidence floor for missing cells.
    pub tau: f64,
    /// Rates used by the sweep when none are given on the command line.
    pub sweep_rates: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Manifest(PathBuf::from("data/pima.toml")),
            missingness: None,
            split: SplitSpec::default(),
            gp: GpConfig::default(),
            mlp: MlpConfig::default(),
            methods: Method::all(),
            ablation: Ablation::Full,
            runs: 30,
            base_seed: 0,
            tau: crate::data::CONFIDENCE_FLOOR,
            sweep_rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config. A relative manifest path is resolved against
    /// the config file's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DatasetSource::Manifest(p) = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.ablation != Ablation::Full && !self.methods.contains(&Method::Evolved) {
            return Err(Error::Config("ablation variants apply to the evolved method only".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("confidence floor {} outside (0, 1]", self.tau)));
        }
        if let Some(m) = &self.missingness {
            m.validate()?;
        }
        self.split.validate()?;
        self.gp.validate()?;
        self.mlp.validate()
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|r| self.base_seed + r).collect()
    }
}
