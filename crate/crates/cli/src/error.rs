use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_DOMAIN: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{0}")]
    Input(String),

    #[error("{stage}: {source}")]
    Core {
        stage: String,
        #[source]
        source: patchy_core::Error,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn core(stage: impl Into<String>) -> impl Fn(patchy_core::Error) -> CliError {
        let stage = stage.into();
        move |source| CliError::Core {
            stage: stage.clone(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use patchy_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) | CliError::Io(_) => EXIT_INPUT,
            CliError::Core { source, .. } if source.is_domain() => EXIT_DOMAIN,
            CliError::Core { source, .. } => match source {
                E::Syntax { .. }
                | E::UnknownFunction { .. }
                | E::Unbound(_)
                | E::Validation(_)
                | E::Hyperbolicity { .. }
                | E::InputDegeneracy(_)
                | E::SchemaVersion { .. }
                | E::Corrupted(_) => EXIT_INPUT,
                _ => EXIT_SOLVER,
            },
        }
    }
}
