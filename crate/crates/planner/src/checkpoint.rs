//! JSON checkpoints: configuration, planning metadata and every parameter
//! tensor with its shape.

use std::fs;
use std::path::Path;

use catp_core::ToolUniverse;
use serde::{Deserialize, Serialize};

use crate::generate::PlanningMeta;
use crate::policy::{PolicyConfig, PolicyDims, PolicyNet};
use crate::tensor::Mat;
use crate::train::{TrainConfig, TrainReport};
use crate::PlannerError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub universe_digest: String,
    pub train: TrainConfig,
    pub config: PolicyConfig,
    pub dims: PolicyDims,
    pub meta: PlanningMeta,
    pub report: Option<TrainReport>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        policy: &PolicyNet,
        universe: &ToolUniverse,
        train: TrainConfig,
        meta: PlanningMeta,
        report: Option<TrainReport>,
    ) -> Self {
        let tensors = policy
            .names
            .iter()
            .zip(&policy.params)
            .map(|(name, m)| NamedTensor { name: name.clone(), rows: m.rows, cols: m.cols, data: m.data.clone() })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            universe_digest: universe.digest(),
            train,
            config: policy.config.clone(),
            dims: policy.dims.clone(),
            meta,
            report,
            tensors,
        }
    }

    /// Rebuilds the policy, rejecting a checkpoint made for another universe.
    pub fn policy(&self, universe: &ToolUniverse) -> Result<PolicyNet, PlannerError> {
        let digest = universe.digest();
        if digest != self.universe_digest {
            return Err(PlannerError::DigestMismatch { expected: digest, found: self.universe_digest.clone() });
        }
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(PlannerError::Shape(format!(
                    "tensor {} declares {}x{} but holds {} values",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
            tensors.push((t.name.clone(), Mat::from_vec(t.rows, t.cols, t.data.clone())));
        }
        let policy = PolicyNet::from_parts(self.config.clone(), self.dims.clone(), tensors)?;
        policy.check_universe(universe)?;
        Ok(policy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        let c: Self = serde_json::from_str(text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(PlannerError::Config(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PlannerError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| PlannerError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlannerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PlannerError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
