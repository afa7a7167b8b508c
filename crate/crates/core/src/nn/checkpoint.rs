//! Self-describing JSON parameter checkpoints.
//!
//! Values are written with shortest round-trip formatting and parsed with
//! exact float parsing, so save → load reproduces every parameter bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stack::LayerStack;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dann-amc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which network a checkpoint holds, used to validate loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureTag {
    pub kind: String,
    pub input_dim: usize,
    #[serde(default)]
    pub dropout_rate: Option<f64>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedStack {
    pub name: String,
    pub stack: LayerStack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: ArchitectureTag,
    pub stacks: Vec<NamedStack>,
}

impl Checkpoint {
    pub fn new(architecture: ArchitectureTag, stacks: Vec<(&str, &LayerStack)>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            architecture,
            stacks: stacks
                .into_iter()
                .map(|(name, s)| NamedStack {
                    name: name.to_string(),
                    stack: s.clone(),
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut ckpt: Checkpoint = serde_json::from_slice(bytes)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unrecognized format {:?}",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        for named in &mut ckpt.stacks {
            named.stack.output_dim().map_err(|e| {
                Error::Checkpoint(format!("stack {:?} is malformed: {e}", named.name))
            })?;
            named.stack.restore();
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Removes and returns the stack with the given name.
    pub fn take_stack(&mut self, name: &str) -> Result<LayerStack> {
        let pos = self
            .stacks
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing stack {name:?}")))?;
        Ok(self.stacks.remove(pos).stack)
    }
}
