use std::process::ExitCode;

use point_set_diffusion::Error;

/// Error classes are part of the command-line contract: each maps to a fixed
/// exit code and is printed as `error[class]: message` on one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Io,
    Mask,
    Usage,
    Domain,
    Numeric,
}

impl Class {
    pub fn name(self) -> &'static str {
        match self {
            Class::Io => "io",
            Class::Mask => "mask",
            Class::Usage => "usage",
            Class::Domain => "domain",
            Class::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Class::Io => 2,
            Class::Mask => 3,
            Class::Usage | Class::Domain => 4,
            Class::Numeric => 5,
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub class: Class,
    pub message: String,
}

impl CliError {
    pub fn new(class: Class, message: impl Into<String>) -> Self {
        CliError {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Class::Usage, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(Class::Io, message)
    }

    /// The single line written to stderr.
    pub fn line(&self) -> String {
        let flat: String = self.message.replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.class.name(), flat)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Io(_) | Error::Parse { .. } => Class::Io,
            Error::MaskViolation(_) => Class::Mask,
            Error::InvalidDomain(_)
            | Error::DomainMismatch(_)
            | Error::OutOfDomain { .. }
            | Error::DimensionMismatch { .. }
            | Error::DuplicatePoint { .. } => Class::Domain,
            Error::NonFinite(_) | Error::CountOverflow { .. } | Error::Shape(_) => Class::Numeric,
            _ => Class::Usage,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
