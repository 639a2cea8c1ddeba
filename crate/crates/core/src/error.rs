use thiserror::Error;

/// Errors raised across parsing, binding, prediction and exploration.
#[derive(Debug, Error)]
pub enum Error {
    /// The input document does not match its schema (serde message names the field).
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unknown predecessor `{pred}` referenced by layer `{layer}`")]
    UnknownPredecessor { layer: String, pred: String },

    #[error("cyclic layer graph through `{0}`")]
    CyclicModel(String),

    #[error("shape mismatch at layer `{layer}`: {detail}")]
    ShapeMismatch { layer: String, detail: String },

    #[error("invalid cost library: {0}")]
    CostLibrary(String),

    #[error("negative cost `{field}` for implementation `{implementation}`")]
    NegativeCost { implementation: String, field: String },

    #[error("unknown implementation `{implementation}` for technology `{technology}`")]
    UnknownImplementation {
        implementation: String,
        technology: String,
    },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("dangling endpoint `{0}` in edge")]
    DanglingEndpoint(String),

    #[error("binding failed: {0}")]
    Binding(String),

    #[error("dependency cycle detected through node `{0}`")]
    DependencyCycle(String),

    #[error("too many critical-path candidates (more than {0})")]
    TooManyPaths(usize),

    #[error("simulation deadlock at cycle {cycle}; starved tokens: {starved:?}")]
    Deadlock { cycle: u64, starved: Vec<String> },

    #[error("simulation exceeded the cycle limit of {0}")]
    CycleLimit(u64),

    #[error("invalid template parameters: {0}")]
    Template(String),

    #[error("no feasible template: {0}")]
    NoFeasibleTemplate(String),

    #[error("invalid exploration config: {0}")]
    Config(String),

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}
