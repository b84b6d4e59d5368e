//! Generalized chance adjustment of categorical similarity indices.
//!
//! An index `S` of a contingency table is adjusted against a null model `M`
//! and a maximum `S_max` as `(S - E_M[S]) / (S_max - E_M[S])`. This crate
//! provides the tables, indices, null models and moment engines needed to
//! compute such adjustments exactly or by simulation, plus checks of when
//! the adjusted index behaves as intended (mean zero, idempotency,
//! standardization) and when it does not.

pub mod adjust;
pub mod cli;
pub mod combinatorics;
pub mod error;
pub mod indices;
pub mod nullmodels;
pub mod properties;
pub mod report;
pub mod repro;
pub mod scalar;
pub mod tables;

pub use adjust::{adjust, named_measure, AdjustedIndex, Adjustment, AdjustmentResult, MaxSpec, NamedMeasure};
pub use error::{Error, Result};
pub use indices::{Builtin, Index, IndexRef, LinearMember};
pub use nullmodels::{expectation, variance, EstimateConfig, EstimateResult, McConfig, Method, NullModel};
pub use scalar::{Rational, Scalar};
pub use tables::{table_from_labels, ContingencyTable, PairTable, TableSet};
