//! Reference reconstructions: day-of-year climatology, and POD modes
//! observed at pivoted-QR sensor locations.

mod climatology;
mod pod;

pub use climatology::{fit_climatology, Climatology};
pub use pod::{fit_pod, pod_reconstruct, pod_reconstruct_series, qr_pivot_sensors, PodBasis, PIVOT_TOLERANCE};
