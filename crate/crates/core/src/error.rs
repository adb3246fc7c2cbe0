use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or validating a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Syntax(String),
    #[error("missing required key [{section}] {key}")]
    MissingKey { section: String, key: String },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown {what} family '{tag}'")]
    UnknownFamily { what: &'static str, tag: String },
    #[error("[{section}] {key}: cannot parse '{value}' as a number")]
    BadNumber {
        section: String,
        key: String,
        value: String,
    },
    #[error("{0}")]
    OutOfRange(String),
    #[error("unknown builtin model '{0}'")]
    UnknownBuiltin(String),
}

/// Errors from kernel queries that have no meaning for the requested family.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("equal mitosis is a point mass at 1/2 and has no density")]
    NoDensity,
    #[error("fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("target below initial mass (x = {x}, y = {y})")]
    TargetBelowStart { x: f64, y: f64 },
    #[error("initial mass {0} outside (0, M)")]
    MassOutOfRange(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("profile grid (n = {found}) does not match solver grid (n = {expected})")]
    GridMismatch { expected: usize, found: usize },
    #[error("profile environment (S = {found_s}, D = {found_d}) does not match (S = {s}, D = {d})")]
    EnvironmentMismatch {
        s: f64,
        d: f64,
        found_s: f64,
        found_d: f64,
    },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
