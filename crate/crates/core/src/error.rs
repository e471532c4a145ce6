//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Errors produced by core operations.
///
/// Variants are grouped by what went wrong rather than where, so callers
/// (in particular the CLI) can map them onto exit-code categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Dimension or shape mismatch; the message names both shapes.
    Shape(String),
    /// An argument violated a precondition (bad k, alpha, fraction, ...).
    Param(String),
    /// Input data is malformed or inconsistent (pairs, items, tokens).
    Data(String),
    /// Model structure or weight problem (config invariants, missing tensors).
    Model(String),
    /// The requested hook site does not support this operation.
    UnsupportedSite(String),
    /// A finite-difference step was too small to change the computation.
    Resolution(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Param(msg) => write!(f, "parameter error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Model(msg) => write!(f, "model error: {msg}"),
            Error::UnsupportedSite(msg) => write!(f, "unsupported site: {msg}"),
            Error::Resolution(msg) => write!(f, "resolution error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
