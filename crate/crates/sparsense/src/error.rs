use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Load {
        path: PathBuf,
        #[source]
        source: sparsense_core::Error,
    },

    #[error(transparent)]
    Core(#[from] sparsense_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn artifact(path: &Path, message: impl std::fmt::Display) -> Self {
        Error::Artifact {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn load(path: &Path, source: sparsense_core::Error) -> Self {
        Error::Load {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short category used in the one-line error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Artifact { .. } => "artifact",
            Error::Config(_) => "config",
            Error::Load { source, .. } | Error::Core(source) => core_kind(source),
        }
    }

    /// Outermost pipeline stage named by the error, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Core(sparsense_core::Error::Stage { stage, .. }) => Some(stage),
            _ => None,
        }
    }
}

fn core_kind(mut e: &sparsense_core::Error) -> &'static str {
    use sparsense_core::Error as C;
    while let C::Stage { source, .. } = e {
        e = source;
    }
    match e {
        C::DimensionMismatch { .. } => "dimension",
        C::InvalidParameter(_) => "invalid",
        C::Parse { .. } | C::Format(_) => "parse",
        C::NonFinite(_) => "non_finite",
        C::Singular { .. } => "singular",
        C::SvdNoConvergence { .. } => "no_convergence",
        C::Divergence { .. } => "divergence",
        C::ZeroNormTruth { .. } => "zero_norm",
        C::Stage { .. } => unreachable!(),
    }
}
