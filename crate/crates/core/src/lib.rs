//! Exact symbolic construction of Fedosov-type star products on the dual of
//! a Lie algebroid given over a polynomial chart, with their equivalences,
//! the enveloping-algebra comparison and modular-class trace certificates.
//!
//! All arithmetic is over exact rationals in the real formal parameter ν.

pub mod algebroid;
pub mod equivalence;
pub mod error;
pub mod fedosov;
pub mod fixtures;
pub mod linalg;
pub mod modular;
pub mod pipeline;
pub mod random;
pub mod report;
pub mod ring;
pub mod spec;
pub mod structure;
pub mod uea;
pub mod wsl;

#[cfg(test)]
mod properties;

pub use algebroid::{AlgebroidChart, Connection, EFormSeries, Geometry, PhaseVectorField, PolySection, ValidChart};
pub use error::{Error, Result};
pub use fedosov::{solve_r, FedosovSetup, FedosovSolution, StarResult};
pub use report::{CheckLine, Report};
pub use ring::{BasePoly, NuTruncation, Scalar};
pub use wsl::{WslElement, WslKey};
