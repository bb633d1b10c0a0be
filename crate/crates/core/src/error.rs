use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmsjError>;

#[derive(Debug, Error)]
pub enum MmsjError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("validation failed: {0}")]
    ValidationError(String),

    #[error("parse error: {0}")]
    ParseError(String),

    /// Shortest-path distances are infinite between some vertices.
    /// `k` is the neighborhood size that produced the graph, when known.
    #[error("graph is disconnected into components of sizes {component_sizes:?}{}", k.map(|k| format!(" at k = {k}")).unwrap_or_default())]
    DisconnectedGraph {
        component_sizes: Vec<usize>,
        k: Option<usize>,
    },

    #[error("numerical routine failed: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MmsjError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MmsjError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Attach the neighborhood size to a disconnected-graph error.
    pub fn with_k(self, k: usize) -> Self {
        match self {
            MmsjError::DisconnectedGraph { component_sizes, .. } => MmsjError::DisconnectedGraph {
                component_sizes,
                k: Some(k),
            },
            other => other,
        }
    }

    pub fn is_disconnected(&self) -> bool {
        matches!(self, MmsjError::DisconnectedGraph { .. })
    }
}
