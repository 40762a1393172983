//! Diagnostics shared by every stage.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    NonAffineSubscript,
    UndeclaredArray,
    UndeclaredSymbol,
    ImperfectNest,
    Redeclared,
    UseBeforeDefinition,
    IncomparableBounds,
    CyclicDependency,
    BudgetExceeded,
    Unsupported,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "syntax error",
            ErrorKind::NonAffineSubscript => "non-affine subscript",
            ErrorKind::UndeclaredArray => "undeclared array",
            ErrorKind::UndeclaredSymbol => "undeclared symbol",
            ErrorKind::ImperfectNest => "imperfect nest",
            ErrorKind::Redeclared => "duplicate declaration",
            ErrorKind::UseBeforeDefinition => "use before definition",
            ErrorKind::IncomparableBounds => "incomparable bounds",
            ErrorKind::CyclicDependency => "cyclic dependency",
            ErrorKind::BudgetExceeded => "budget exceeded",
            ErrorKind::Unsupported => "unsupported construct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Error {
    pub kind: ErrorKind,
    /// 1-based source line, when the error comes from parsing.
    pub line: Option<usize>,
    pub message: String,
}

impl Error {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Error {
        Error { kind, line: None, message: message.into() }
    }

    pub fn at(kind: ErrorKind, line: usize, message: impl Into<String>) -> Error {
        Error { kind, line: Some(line), message: message.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {}: {}: {}", l, self.kind.name(), self.message),
            None => write!(f, "{}: {}", self.kind.name(), self.message),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
