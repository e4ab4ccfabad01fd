use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] metaqst::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("no structure satisfies the criteria; nearest miss: {0}")]
    Infeasible(String),

    #[error("{failed} of {total} reconstructions did not converge")]
    NonConvergence { failed: usize, total: usize },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 resource guard, 4 non-convergence,
    /// 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(metaqst::Error::Resource { .. }) => 3,
            Self::Core(metaqst::Error::Io(_)) | Self::Io { .. } => 1,
            Self::Core(_) | Self::Config(_) | Self::Infeasible(_) => 2,
            Self::NonConvergence { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let resource = HarnessError::Core(metaqst::Error::Resource {
            what: "x".into(),
            required_bytes: 2,
            cap_bytes: 1,
        });
        assert_eq!(resource.exit_code(), 3);
        assert_eq!(
            HarnessError::Core(metaqst::Error::Parse("x".into())).exit_code(),
            2
        );
        assert_eq!(
            HarnessError::NonConvergence {
                failed: 1,
                total: 2
            }
            .exit_code(),
            4
        );
        let io = HarnessError::io("/x", std::io::Error::other("boom"));
        assert_eq!(io.exit_code(), 1);
        assert!(io.to_string().starts_with("/x"));
    }
}
