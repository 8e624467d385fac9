//! End-to-end run: data, entropy map, sensor prior, trained and baseline
//! reconstructions, evaluation and report, with a checksummed MANIFEST.

mod config;
mod manifest;
pub mod stages;

pub use config::{split, InitKind, Method, RunConfig};
pub use manifest::{sha256_hex, verify_dir, Manifest, Status, VerifyReport, MANIFEST};
pub use stages::{run_pipeline, run_stage};
