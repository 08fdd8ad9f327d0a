//! Campaign configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sparsepix_core::de::DeParams;
use sparsepix_core::gsa::GsaParams;
use sparsepix_core::scores::{DEFAULT_BUDGET, DEFAULT_PIXELS};
use sparsepix_core::strmask::StrAttackParams;

use crate::error::{HarnessError, Result};

pub const DEFAULT_IMAGES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gsa,
    De,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Random,
    Mask,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gsa" => Ok(Self::Gsa),
            "de" => Ok(Self::De),
            other => Err(format!("unknown method {other:?} (expected gsa or de)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gsa => "gsa",
            Self::De => "de",
        })
    }
}

impl FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(Self::Random),
            "mask" | "strattack-mask" => Ok(Self::Mask),
            other => Err(format!("unknown initialization {other:?} (expected random or mask)")),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Mask => "mask",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Weights(PathBuf),
    Remote { endpoint: String, timeout_ms: u64, retries: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Directory(PathBuf),
    /// Synthetic shapes generated on the fly.
    Generated { count: usize, seed: u64 },
}

/// Everything that decides how a single image is attacked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub method: Method,
    pub init: InitMode,
    pub pixels: usize,
    pub budget: u64,
    /// Image `i` uses the RNG stream `seed + i`.
    pub seed: u64,
    pub gsa: GsaParams,
    pub de: DeParams,
    pub strattack: StrAttackParams,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            method: Method::Gsa,
            init: InitMode::Mask,
            pixels: DEFAULT_PIXELS,
            budget: DEFAULT_BUDGET,
            seed: 0,
            gsa: GsaParams::default(),
            de: DeParams::default(),
            strattack: StrAttackParams::default(),
        }
    }
}

impl AttackSettings {
    pub fn validate(&self) -> Result<()> {
        if self.pixels == 0 {
            return Err(HarnessError::config("pixel count must be >= 1"));
        }
        if self.budget == 0 {
            return Err(HarnessError::config("budget must be >= 1"));
        }
        match self.method {
            Method::Gsa => self.gsa.validate()?,
            Method::De => self.de.validate()?,
        }
        if self.init == InitMode::Mask {
            self.strattack.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub model: ModelSource,
    /// Weights used for mask generation when the model itself is remote.
    pub surrogate: Option<PathBuf>,
    pub dataset: DatasetSource,
    /// Leading images of the dataset to use.
    pub images: usize,
    pub attack: AttackSettings,
    /// Report directory; not echoed so reports do not depend on where they live.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
    pub annotate: bool,
    pub save_masks: bool,
}

impl CampaignConfig {
    pub fn new(model: ModelSource, dataset: DatasetSource) -> Self {
        Self {
            model,
            surrogate: None,
            dataset,
            images: DEFAULT_IMAGES,
            attack: AttackSettings::default(),
            out: None,
            jobs: 1,
            annotate: true,
            save_masks: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.attack.validate()?;
        if self.images == 0 {
            return Err(HarnessError::config("image count must be >= 1"));
        }
        if self.jobs == 0 {
            return Err(HarnessError::config("jobs must be >= 1"));
        }
        if self.attack.init == InitMode::Mask
            && matches!(self.model, ModelSource::Remote { .. })
            && self.surrogate.is_none()
        {
            return Err(HarnessError::config("mask initialization with a remote model needs --surrogate weights"));
        }
        Ok(())
    }
}
