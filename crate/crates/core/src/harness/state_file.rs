//! On-disk JSON form of a pool.
//!
//! Floats are written in their shortest round-trip representation, so
//! `load ∘ save` reproduces every reserve and weight bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::CfmmState;
use crate::error::{Error, Result};
use crate::trading_functions::TradingFunctionSpec;

pub const STATE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub version: u32,
    pub assets: Vec<String>,
    pub reserves: Vec<f64>,
    pub gamma: f64,
    pub trading_function: TradingFunctionSpec,
    pub providers: Vec<(String, f64)>,
}

impl StateFile {
    pub fn from_state(s: &CfmmState) -> Self {
        Self {
            version: STATE_FILE_VERSION,
            assets: s.assets().to_vec(),
            reserves: s.reserves().to_vec(),
            gamma: s.gamma(),
            trading_function: s.phi().clone(),
            providers: s.providers().iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }

    pub fn to_state(&self) -> Result<CfmmState> {
        if self.version != STATE_FILE_VERSION {
            return Err(Error::invalid(format!("unsupported state file version {}", self.version)));
        }
        let mut providers = BTreeMap::new();
        for (id, w) in &self.providers {
            if providers.insert(id.clone(), *w).is_some() {
                return Err(Error::invalid(format!("provider {id:?} listed twice")));
            }
        }
        CfmmState::from_parts(
            self.assets.clone(),
            self.reserves.clone(),
            self.gamma,
            self.trading_function.clone(),
            providers,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn load_state(path: &Path) -> Result<CfmmState> {
    StateFile::from_json(&fs::read_to_string(path)?)?.to_state()
}

/// Validates `s` and writes it atomically (temp file, then rename).
pub fn save_state(path: &Path, s: &CfmmState) -> Result<()> {
    s.validate()?;
    let text = StateFile::from_state(s).to_json()?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
