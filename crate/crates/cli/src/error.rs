use std::process::ExitCode;

use surrogate_bvm::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(CoreError) -> Self {
        let context = context.into();
        move |source| Self::Core { context, source }
    }

    /// 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Config(_) => 2,
            Self::Io(_) => 4,
            Self::Core { source, .. } if source.is_io() || matches!(source, CoreError::Json(_)) => {
                4
            }
            Self::Core { source, .. } if source.is_numerical() => 3,
            // remaining core errors reject argument values taken from the config
            Self::Core { .. } => 2,
        })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
