use magswarm_core::magnetics::MagneticsError;
use magswarm_core::navigation::NavigationError;
use magswarm_core::sonography::SonographyError;
use magswarm_core::swarm::SwarmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit status.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation { .. } => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Validation error for a parameter of config section `section`,
    /// naming the offending field where the core error does.
    pub fn in_section(section: &str, error: impl Into<magswarm_core::Error>) -> Self {
        use magswarm_core::Error as E;
        let error = error.into();
        let name = match &error {
            E::Magnetics(MagneticsError::InvalidParameter { name, reason })
            | E::Swarm(SwarmError::InvalidParameter { name, reason })
            | E::Sonography(SonographyError::InvalidParameter { name, reason })
            | E::Navigation(NavigationError::InvalidParameter { name, reason }) => Some((*name, reason.clone())),
            _ => None,
        };
        match name {
            Some((name, reason)) => CliError::invalid(format!("{section}.{name}"), reason),
            None => CliError::invalid(section, error.to_string()),
        }
    }
}

impl From<magswarm_core::Error> for CliError {
    fn from(e: magswarm_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(format!("csv: {e}"))
    }
}
