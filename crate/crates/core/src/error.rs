use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("weapon spacing unsatisfiable after {attempts} attempts (episode seed {seed})")]
    SpacingUnsatisfiable { seed: u64, attempts: usize },

    #[error("unknown case `{label}`; valid cases: {valid}")]
    UnknownCase { label: String, valid: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("no closure: velocity does not close on the target")]
    NoClosure,

    #[error("value {0} is not one of the episode value classes")]
    UnknownValueClass(f64),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("instance too large for enumeration ({n}^{m} assignments)")]
    InstanceTooLarge { m: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("weights manifest {}: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },

    #[error("missing weights file {}", .0.display())]
    MissingWeights(PathBuf),

    #[error("non-finite loss in minibatch {minibatch} (seed {seed})")]
    NonFiniteLoss { minibatch: usize, seed: u64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
