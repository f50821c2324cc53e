use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpArchitecture, MlpModel};
use crate::error::Result;
use crate::param::ParamVector;
use crate::report;

/// On-disk model: `{arch, params, seed, created_by}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: MlpArchitecture,
    pub params: Vec<f64>,
    pub seed: u64,
    pub created_by: String,
}

impl Checkpoint {
    pub fn new(model: &MlpModel, seed: u64, created_by: impl Into<String>) -> Self {
        Checkpoint {
            arch: model.arch.clone(),
            params: model.params.to_vec(),
            seed,
            created_by: created_by.into(),
        }
    }

    pub fn model(&self) -> Result<MlpModel> {
        MlpModel::new(self.arch.clone(), ParamVector::try_from_vec(self.params.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        report::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        report::read_json(path)
    }
}
