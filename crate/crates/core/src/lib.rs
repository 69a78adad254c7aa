//! Planar crack-set modification engine.
//!
//! Configurations are finite unions of lattice cells removed from an ambient
//! square; the engine iteratively replaces unfavorable crack geometry by
//! rectangles, certifies components by fitting infinitesimal rigid motions,
//! and verifies Korn-Poincare-type inequalities for the resulting
//! discontinuous displacement fields.

pub mod engine;
pub mod field;
pub mod gen;
pub mod grid;
pub mod measures;
pub mod modify;
pub mod neighborhoods;
pub mod report;

use thiserror::Error as ThisError;

/// Library-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("corrupt configuration: {0}")]
    Corrupt(String),
    #[error("parameter constraint violated: {0}")]
    Params(String),
    #[error("construction failed: {0}")]
    Construction(String),
}
