//! Krasnosel'skii–Mann fixed-point iterations with residual bounds evaluated
//! alongside every run.
//!
//! The crate is organized bottom-up: [`spaces`] and [`schedules`] provide the
//! geometry and step sequences, [`operators`] the catalog of nonexpansive maps,
//! [`engines`] the iteration drivers, [`bounds`] the residual bounds, [`markov`]
//! the fox-and-hare reward process, [`evolution`] the continuous-time analog
//! and [`experiment`] the config-driven runner used by the `km-lab` binary.

pub mod error;
pub mod spaces;
pub mod schedules;
pub mod operators;
pub mod engines;
pub mod quadrature;
pub mod bounds;
pub mod markov;
pub mod evolution;
pub mod fit;
pub mod experiment;
pub mod suite;

pub use error::{Error, Result};
pub use operators::{certify_nonexpansive, kappa_estimate, OperatorSequence, OperatorSpec};
pub use schedules::{sigma, ErrorModel, Magnitude, StepSchedule, TauTable};
pub use spaces::{ConvexSet, NormKind, Point};
