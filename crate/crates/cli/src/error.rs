use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// A library call failed; `op` names it.
    #[error("{op}: {source}")]
    Run {
        op: &'static str,
        #[source]
        source: bdkf::Error,
    },

    #[error("writing {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn run(op: &'static str) -> impl FnOnce(bdkf::Error) -> Self {
        move |source| CliError::Run { op, source }
    }

    /// 2 for bad configuration, 3 for numerical failure, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run { source, .. } if source.is_numerical() => 3,
            CliError::Run { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}
