//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors produced by model construction, fitting, and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid argument or violated invariant, with a human-readable reason.
    Invalid(String),
    /// Input collection was empty where at least one element is required.
    EmptyInput(&'static str),
    /// Vector length does not match the expected dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// No subject in the batch experienced the requested event.
    NoEvents { event: u32 },
    /// A Breslow risk-set denominator collapsed to zero.
    ZeroRiskSet { time: f64 },
    /// Baseline hazard has no mass near the requested horizon, so the
    /// log-hazard ratio is undefined there.
    UndefinedHazard { horizon: f64 },
    /// Concordance is undefined: no comparable pairs.
    NoComparablePairs,
    /// A loss or gradient became non-finite during training.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::NoEvents { event } => {
                write!(f, "no events of type {event} in batch")
            }
            Error::ZeroRiskSet { time } => {
                write!(f, "zero risk-set denominator at time {time}")
            }
            Error::UndefinedHazard { horizon } => {
                write!(f, "undefined log hazard at horizon {horizon}")
            }
            Error::NoComparablePairs => write!(f, "no comparable pairs"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
