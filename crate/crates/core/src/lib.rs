//! Sensor placement and reconstruction of gridded geophysical fields.
//!
//! The pipeline estimates a per-cell information-entropy map from historical
//! snapshots, turns it into a sensor prior, trains a binary sensor mask with
//! a reconstruction decoder, and compares the result against climatology and
//! POD/pivoted-QR baselines.

pub mod baselines;
pub mod entropy;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod ordering;
pub mod patches;
pub mod pipeline;
pub mod prior;
pub mod seed;
pub mod selector;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{boxcar_smooth, Field, FieldSeries, GridShape, LandMask, Stamp};
