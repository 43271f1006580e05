//! Separable effects of a point treatment on an event of interest subject to
//! a competing event, estimated from discrete-time longitudinal data.
//!
//! The crate is organised around the data flow of an analysis:
//!
//! * [`event_history`] ingests and validates person-interval records;
//! * [`causal_graph`] checks whether a causal diagram licenses identification;
//! * [`glm`] fits the pooled logistic nuisance models;
//! * [`weights`] turns fitted models into per-subject weight processes;
//! * [`estimators`] produces risk curves, contrasts and bootstrap intervals;
//! * [`oracle`] simulates from, and computes exact truths for, finite
//!   data-generating processes.

pub mod causal_graph;
pub mod error;
pub mod estimators;
pub mod event_history;
pub mod glm;
pub mod oracle;
pub mod par;
pub mod regime;
pub mod weights;

pub use error::{Error, Result};
pub use regime::Regime;
