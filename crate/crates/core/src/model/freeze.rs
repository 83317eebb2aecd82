use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{param_shapes, ModelConfig, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeScheme {
    None,
    Encoder,
    Predictor,
    /// The lowest 3/5 of the encoder stack plus predictor layer 0.
    LowerLayers,
}

impl FromStr for FreezeScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezeScheme::None),
            "encoder" => Ok(FreezeScheme::Encoder),
            "predictor" => Ok(FreezeScheme::Predictor),
            "lower-layers" => Ok(FreezeScheme::LowerLayers),
            other => Err(Error::Config(format!("unknown freeze scheme {other:?}"))),
        }
    }
}

impl fmt::Display for FreezeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreezeScheme::None => "none",
            FreezeScheme::Encoder => "encoder",
            FreezeScheme::Predictor => "predictor",
            FreezeScheme::LowerLayers => "lower-layers",
        })
    }
}

/// Names of parameters that receive no updates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    frozen: BTreeSet<String>,
}

impl FreezeMask {
    pub fn none() -> Self {
        Self::default()
    }

    /// Every name must exist in `params`.
    pub fn new<I, S>(names: I, params: &ParamSet) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let frozen: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if let Some(missing) = frozen.iter().find(|n| !params.contains(n)) {
            return Err(Error::Schema(format!("cannot freeze unknown parameter {missing}")));
        }
        Ok(FreezeMask { frozen })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.frozen.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.frozen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frozen.is_empty()
    }
}

pub fn freeze_mask(scheme: FreezeScheme, config: &ModelConfig) -> FreezeMask {
    let lower_encoder = 3 * config.encoder_layers / 5;
    let keep = |name: &str| -> bool {
        match scheme {
            FreezeScheme::None => false,
            FreezeScheme::Encoder => name.starts_with("encoder."),
            FreezeScheme::Predictor => name.starts_with("predictor."),
            FreezeScheme::LowerLayers => {
                name.starts_with("predictor.layer0.")
                    || (0..lower_encoder).any(|k| name.starts_with(&format!("encoder.layer{k}.")))
            }
        }
    };
    FreezeMask {
        frozen: param_shapes(config).into_keys().filter(|n| keep(n)).collect(),
    }
}
