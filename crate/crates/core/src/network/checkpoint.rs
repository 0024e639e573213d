//! Versioned JSON model checkpoint.
//!
//! Layout (`version` 1):
//!
//! ```text
//! {
//!   "version": 1,
//!   "head": {"kind": "jsu"} | {"kind": "quantile", "grid": [0.1, ...]} | ...,
//!   "seed": u64,
//!   "scaler": {"feature_mean": [...], "feature_std": [...],
//!              "target_mean": [...], "target_std": [...]},
//!   "params": {
//!     "weights": {"w1": ndarray, "b1": ndarray, ..., "b3": ndarray},
//!     "input_norm": null | {"running_mean": ndarray, "running_var": ndarray,
//!                           "momentum": f64, "eps": f64}
//!   }
//! }
//! ```
//!
//! Each `ndarray` is `{"v": 1, "dim": [..], "data": [..]}` in row-major order.
//! Floats are written with shortest round-trip formatting, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ScalerState;
use crate::error::{Error, Result};
use crate::network::{HeadKind, MlpParams};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub head: HeadKind,
    pub seed: u64,
    pub scaler: ScalerState,
    pub params: MlpParams,
}

impl ModelCheckpoint {
    pub fn new(head: HeadKind, seed: u64, scaler: ScalerState, params: MlpParams) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            head,
            seed,
            scaler,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        if ck.params.n_outputs() != ck.head.n_outputs() {
            return Err(Error::Schema("checkpoint head and output layer disagree".into()));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
