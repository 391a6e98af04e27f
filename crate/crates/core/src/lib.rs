//! Penalty-functional multiplier extraction for constrained problems on
//! gram-metrized discretizations, with closed-range and observability
//! diagnostics and worked control families.

pub mod control;
pub mod convex;
pub mod diagnostics;
pub mod error;
pub mod numeric;
pub mod penalty;
pub mod problems;
pub mod spaces;

pub use error::{FcError, Result};
