use std::fmt;

use hoi_core::HoiError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// A command failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    /// Single-line form for the terminal.
    pub fn line(&self) -> String {
        self.message.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<HoiError> for Failure {
    fn from(e: HoiError) -> Self {
        let code = match &e {
            HoiError::Config(_) => EXIT_USAGE,
            HoiError::Numeric(_) => EXIT_NUMERIC,
            HoiError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
            HoiError::Io(_) => EXIT_IO,
            HoiError::Validation(_)
            | HoiError::Domain(_)
            | HoiError::Lookup(_)
            | HoiError::Shape(_)
            | HoiError::Parse { .. }
            | HoiError::Format(_)
            | HoiError::Json(_)
            | HoiError::Csv(_) => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        HoiError::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        HoiError::Json(e).into()
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
