//! Toolkit for the asymmetric Renyi query process and random PATRICIA tries.
//!
//! The same quantities — external-profile moments, height/fillup/depth
//! statistics, and the constants governing their second-order asymptotics —
//! are computed along three independent routes and cross-validated:
//!
//! * **Simulation** ([`simulator`]): coupled construction of the query
//!   refinement tree and the PATRICIA trie from one set of bit streams.
//! * **Exact recurrences** ([`profile`]): first and second factorial moments
//!   of the external profile at extended precision.
//! * **Transform representations** ([`poisson`], [`xi`], [`cseries`]):
//!   Poisson transforms, the residue-sum inversion, the `xi` limit sequence,
//!   and the level-constant series with their symmetric-limit function.
//!
//! Everything numeric runs on [`numerics::HPReal`] (MPFR, default 256 bits).

pub mod asymptotics;
pub mod cseries;
pub mod numerics;
pub mod oracle;
pub mod poisson;
pub mod profile;
pub mod simulator;
pub mod xi;

pub mod cli;

pub use numerics::{default_precision, Bias, HPReal, DEFAULT_PRECISION};

/// Crate-wide error type. Variants mirror the failure modes named in the
/// module contracts: domain violations, unreachable tolerances, truncation
/// shortfalls, and root-bracketing failures in the level geometry.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
