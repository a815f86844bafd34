use std::process::ExitCode;

use geodyn::GeodynError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] GeodynError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Plot(#[from] crate::svg::SvgError),

    /// Report already printed; only the status remains.
    #[error("check failed")]
    CheckFailed,
}

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Plot(_) => 2,
            CliError::Core(e) => {
                if is_usage(e) {
                    2
                } else {
                    1
                }
            }
            CliError::Io { .. } | CliError::CheckFailed => 1,
        }
    }

    pub fn report(&self) -> ExitCode {
        if !matches!(self, CliError::CheckFailed) {
            eprintln!("error: {self}");
        }
        ExitCode::from(self.exit_code())
    }
}

/// Errors caused by the request itself rather than by the computation.
fn is_usage(e: &GeodynError) -> bool {
    matches!(
        e,
        GeodynError::InvalidArgument(_)
            | GeodynError::InvalidSplit(_)
            | GeodynError::UnknownMethod(_)
            | GeodynError::UnknownLagrangian(_)
            | GeodynError::StabilityBoundary(_)
            | GeodynError::Dimension { .. }
            | GeodynError::SamplingDomain { .. }
            | GeodynError::Parse { .. }
            | GeodynError::NonNegativeEnergy(_)
            | GeodynError::DegenerateOrbit
            | GeodynError::CircularOrbit
    )
}
