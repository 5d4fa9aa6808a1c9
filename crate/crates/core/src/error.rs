use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("expected {expected} samples, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid frame parameters: {0}")]
    InvalidFrame(String),
    #[error("dual window solve did not converge for {params}: residual {residual:e} after {iterations} iterations")]
    DualWindowNotConverged { params: String, residual: f64, iterations: usize },
    #[error("inverse incomplete gamma: y = {y:e} is outside (0, Γ({a})) = (0, {gamma_a:e})")]
    GammaDomain { a: f64, y: f64, gamma_a: f64 },
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("numerical blowup at step {step} (t = {time})")]
    Blowup { step: usize, time: f64, report: Box<crate::driver::RunReport> },
    #[error("{context}: {source}")]
    Io {
        context: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { context: path.into(), source }
    }
}
