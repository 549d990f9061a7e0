//! Average conditional effects (ACE) for black-box regression models.
//!
//! The crate bundles seven learners behind one [`learners::Predictor`]
//! interface, finite-difference effect extraction in [`ace`], the simulated
//! data-generating processes in [`scenarios`], and the replication harness in
//! [`experiments`].

pub mod ace;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod learners;
pub mod randkit;
pub mod scenarios;

pub use error::{Error, Result};
