//! Objective functions: analytic test functions, a k-NN learner tuned on a
//! validation partition, and an external-process black box.
pub mod dataset;
pub mod external;
pub mod functions;
pub mod knn;

use crate::domain::{Point, SearchSpace};
use crate::trial::Outcome;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub use dataset::{load_csv, partition, BlobsSpec, Dataset, Partition, PartitionSpec};
pub use external::ExternalObjective;
pub use functions::{Builtin, BuiltinObjective};
pub use knn::{knn_eval, KnnObjective, KnnParams, Weighting};

/// Per-evaluation context handed to every black box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalContext {
    pub run_seed: u64,
    pub eval_id: u64,
}

/// A black box. Implementations must be reentrant: the manager calls
/// `evaluate` from several worker threads at once.
pub trait Objective: Send + Sync {
    fn evaluate(&self, p: &Point, ctx: &EvalContext) -> Outcome;
}

impl<F> Objective for F
where
    F: Fn(&Point) -> Outcome + Send + Sync,
{
    fn evaluate(&self, p: &Point, _ctx: &EvalContext) -> Outcome {
        self(p)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf, label: String },
    Blobs(BlobsSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Builtin {
        function: Builtin,
    },
    Knn {
        data: DataSource,
        #[serde(default)]
        partition: PartitionSpec,
    },
    External {
        command: Vec<String>,
        timeout_ms: u64,
    },
}

impl ObjectiveSpec {
    /// Builds the objective. Relative CSV paths resolve against `base_dir`.
    pub fn build(&self, space: &SearchSpace, base_dir: &Path) -> Result<Box<dyn Objective>, ObjectiveError> {
        match self {
            ObjectiveSpec::Builtin { function } => {
                Ok(Box::new(BuiltinObjective::new(function.clone(), space.clone())?))
            }
            ObjectiveSpec::Knn { data, partition: pspec } => {
                let ds = match data {
                    DataSource::Csv { path, label } => load_csv(&base_dir.join(path), label)?,
                    DataSource::Blobs(spec) => dataset::two_blobs(spec)?,
                };
                let part = partition(&ds, pspec)?;
                if !part.stratified && pspec.stratified {
                    log::warn!("a class has fewer than 2 rows; using an unstratified split");
                }
                Ok(Box::new(KnnObjective::new(space, ds, part)?))
            }
            ObjectiveSpec::External { command, timeout_ms } => {
                if *timeout_ms == 0 {
                    return Err(ObjectiveError::Config("timeout_ms must be > 0".into()));
                }
                if command.is_empty() {
                    return Err(ObjectiveError::Config("external command is empty".into()));
                }
                Ok(Box::new(ExternalObjective::new(space, command.clone(), *timeout_ms)))
            }
        }
    }
}
