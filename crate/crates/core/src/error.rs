use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Each variant maps to exactly one machine-readable [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0}")]
    Validation(String),
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("access denied: {0}")]
    Access(String),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("is-a cycle: {0}")]
    Cycle(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown theme `{0}`")]
    UnknownTheme(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("relation signature violated: {0}")]
    Signature(String),
    #[error("invalid conceptual graph: {}", .0.join("; "))]
    GraphInvalid(Vec<String>),
    #[error("graphs are bound to different ontologies")]
    OntologyMismatch,
    #[error("projection aborted after {budget} candidate mappings")]
    Budget { budget: u64 },
    #[error("unreachable path nodes: {}", .orphans.join(", "))]
    Unreachable { orphans: Vec<String> },
    #[error("{0}")]
    Conflict(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("internal: {0}")]
    Internal(String),
}

/// Coarse classes used for CLI exit codes and HTTP status selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Access,
    Conflict,
    Resource,
    Internal,
}

impl Error {
    pub fn not_found(kind: &'static str, id: impl ToString) -> Self {
        Error::NotFound {
            kind,
            id: id.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::NotFound { .. } => "not_found",
            Error::Access(_) => "access.denied",
            Error::InvalidInterval(_) => "segment.invalid_interval",
            Error::OutOfRange(_) => "segment.out_of_range",
            Error::Cycle(_) => "ontology.cycle",
            Error::DuplicateName(_) => "name.duplicate",
            Error::Syntax { .. } => "cg.syntax",
            Error::UnknownTheme(_) => "cg.unknown_theme",
            Error::UnknownRelation(_) => "cg.unknown_relation",
            Error::Signature(_) => "cg.signature",
            Error::GraphInvalid(_) => "cg.invalid",
            Error::OntologyMismatch => "cg.ontology_mismatch",
            Error::Budget { .. } => "cg.budget",
            Error::Unreachable { .. } => "montage.unreachable",
            Error::Conflict(_) => "conflict",
            Error::Io(_) => "store.io",
            Error::Corrupt(_) => "store.corrupt",
            Error::Internal(_) => "internal",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotFound { .. } => ErrorClass::NotFound,
            Error::Access(_) => ErrorClass::Access,
            Error::Conflict(_) => ErrorClass::Conflict,
            Error::Budget { .. } => ErrorClass::Resource,
            Error::Io(_) | Error::Corrupt(_) | Error::Internal(_) => ErrorClass::Internal,
            _ => ErrorClass::Validation,
        }
    }

    /// All codes the engine can emit, for documentation and exhaustiveness tests.
    pub const CODES: &'static [&'static str] = &[
        "validation",
        "not_found",
        "access.denied",
        "segment.invalid_interval",
        "segment.out_of_range",
        "ontology.cycle",
        "name.duplicate",
        "cg.syntax",
        "cg.unknown_theme",
        "cg.unknown_relation",
        "cg.signature",
        "cg.invalid",
        "cg.ontology_mismatch",
        "cg.budget",
        "montage.unreachable",
        "conflict",
        "store.io",
        "store.corrupt",
        "internal",
    ];
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Corrupt(e.to_string())
    }
}
