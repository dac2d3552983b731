//! Error type shared by the whole core crate.

use alloc::string::String;
use core::fmt;

/// Errors raised by tensor ops, layers, masking, schedules, and trainers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes or dimensions are inconsistent (e.g. matmul inner mismatch,
    /// non-positive conv output size).
    Dimension(String),
    /// A value argument is outside its contract (label out of range,
    /// fraction outside [0, 1], epoch index past the schedule end).
    Input(String),
    /// An operation was called in the wrong order (backward without a
    /// matching forward, resume past the end of training).
    State(String),
    /// A configuration is internally inconsistent (full-model prune,
    /// epochs not divisible by cycles, infeasible layer budget).
    Config(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, iteration: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Diverged { epoch, iteration } => write!(
                f,
                "training diverged: non-finite loss at epoch {epoch}, iteration {iteration}"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! err_ctor {
    ($name:ident, $variant:ident) => {
        pub fn $name(msg: impl fmt::Display) -> Error {
            Error::$variant(alloc::format!("{msg}"))
        }
    };
}

impl Error {
    err_ctor!(dimension, Dimension);
    err_ctor!(input, Input);
    err_ctor!(state, State);
    err_ctor!(config, Config);
}
