use std::fmt;
use std::path::{Path, PathBuf};

/// Broad failure classes. Each maps to its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Validation,
    Parse,
    Io,
    Numeric,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Validation => "validation",
            Category::Parse => "parse",
            Category::Io => "io",
            Category::Numeric => "numeric",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Validation => 3,
            Category::Parse => 4,
            Category::Io => 5,
            Category::Numeric => 6,
        }
    }
}

/// Where inside a file a parse failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    /// Byte offset into a binary or header-based file.
    Offset(u64),
    /// JSON pointer to the offending value, e.g. `/poses/3/rotation`.
    Pointer(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Offset(o) => write!(f, "byte {o}"),
            Location::Pointer(p) if p.is_empty() => write!(f, "document root"),
            Location::Pointer(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0}")]
    Usage(String),
    /// Every problem found, not just the first.
    #[error("{}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("{}: {location}: {message}", file.display())]
    Parse { file: PathBuf, location: Location, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] mono4d_core::Error),
}

impl IoError {
    pub fn category(&self) -> Category {
        use mono4d_core::Error as E;
        match self {
            IoError::Usage(_) => Category::Usage,
            IoError::Validation(_) => Category::Validation,
            IoError::Parse { .. } => Category::Parse,
            IoError::Io { .. } => Category::Io,
            IoError::Core(e) => match e.root() {
                E::InvalidParameter(_) | E::ShapeMismatch { .. } | E::CountMismatch { .. } => Category::Validation,
                _ => Category::Numeric,
            },
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    pub fn at_offset(file: &Path, offset: u64, message: impl Into<String>) -> Self {
        IoError::Parse { file: file.to_path_buf(), location: Location::Offset(offset), message: message.into() }
    }

    pub fn at_pointer(file: &Path, pointer: impl Into<String>, message: impl Into<String>) -> Self {
        IoError::Parse {
            file: file.to_path_buf(),
            location: Location::Pointer(pointer.into()),
            message: message.into(),
        }
    }

    pub fn validation(problem: impl Into<String>) -> Self {
        IoError::Validation(vec![problem.into()])
    }

    /// The single machine-parsable line printed on failure: `error[<category>]: <message>`.
    pub fn report_line(&self) -> String {
        let message = self.to_string().replace('\n', " ");
        format!("error[{}]: {message}", self.category().name())
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
