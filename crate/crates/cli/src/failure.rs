use std::fmt;
use std::path::Path;

use l2g_core::Error;

/// Process exit codes. Usage errors (2) come from clap itself.
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_RERANKER: u8 = 5;
pub const EXIT_IO: u8 = 6;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn with_path(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// Attaches the file name, giving `path:line: message` for parse errors.
    pub fn in_file(path: &Path, err: Error) -> Self {
        let code = code_of(&err);
        let message = match err.root() {
            Error::Parse { line, message } => format!("{}:{line}: {message}", path.display()),
            _ => format!("{}: {err}", path.display()),
        };
        Self { code, message }
    }
}

fn code_of(err: &Error) -> u8 {
    match err.root() {
        Error::Parse { .. } | Error::Input(_) | Error::GraphFormat(_) => EXIT_PARSE,
        Error::Config(_) | Error::NotFound(_) => EXIT_CONFIG,
        Error::Reranker(_) => EXIT_RERANKER,
        Error::Io(_) => EXIT_IO,
        Error::Query { .. } => unreachable!("root() unwraps query errors"),
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Self {
            code: code_of(&err),
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err).into()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
