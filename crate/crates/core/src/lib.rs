//! Post-hoc fairness editing of trained tabular classifiers.
//!
//! Influence scores of every training instance on a group-fairness
//! surrogate are computed from inverse-Hessian-vector products, and the
//! fitted parameters are then moved as if the harmful instances had been
//! removed, without refitting.

pub mod data;
pub mod error;
pub mod fairness;
pub mod ihvp;
pub mod influence;
pub mod mitigate;
pub mod model;
pub mod oracle;
pub mod par;
pub mod param;
pub mod report;

pub use data::{DataSchema, TabularDataset};
pub use error::{Error, Result};
pub use fairness::FairnessMetricKind;
pub use ihvp::{IhvpConfig, IhvpMethod};
pub use influence::InfluenceReport;
pub use mitigate::{MitigationConfig, MitigationResult};
pub use model::{Activation, MlpArchitecture, MlpModel, TrainConfig};
pub use param::ParamVector;
