//! Information-entropy estimation of a field series.
//!
//! Two estimators are provided:
//!
//! * a per-pixel Gaussian, whose entropy is `ln sigma + (1 + ln 2pi)/2`;
//! * a location-binned Gaussian autoregressive patch model. Each bin holds
//!   a mean and the Cholesky factor of the (shrunk) covariance in the
//!   coordinates of a pixel ordering, so the joint density factorizes into
//!   per-pixel conditionals whose scales are the Cholesky diagonal. With the
//!   spiral ordering, the first `L'^2` conditionals describe an `L' x L'`
//!   sub-patch, which gives entropies at every scale `L' <= L` from a single
//!   fit.
//!
//! Entropies are reported in nats per grid cell.

mod field;
mod patch_model;

use std::f64::consts::PI;

pub use field::{entropy_field, EntropyConfig, EntropyEstimator};
pub use patch_model::{
    bin_centers, conditional_nlls, entropy_closed_form, entropy_monte_carlo, fit_patch_model,
    patch_nll, patch_nll_prefix, DroppedBin, MonteCarloEstimate, PatchBin, PatchFit, PatchModel,
};

use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries};

/// Entropy of a unit-variance Gaussian per dimension: `(1 + ln 2pi) / 2`.
pub const GAUSSIAN_UNIT_ENTROPY: f64 = 1.418_938_533_204_672_7;

/// `ln(2pi) / 2`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Scalar entropy map in nats per cell.
#[derive(Debug, Clone)]
pub struct EntropyField {
    /// Entropy per sea cell; flagged cells hold `NaN` or `-inf`.
    pub h: Field,
    /// `true` where the value must not be used (land, uncovered, degenerate).
    pub flagged: Vec<bool>,
    /// Patch side the entropy refers to (1 for the per-pixel estimator).
    pub scale: usize,
    pub ensemble_size: usize,
}

impl EntropyField {
    /// Values of unflagged sea cells.
    pub fn usable(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.h
            .sea_values()
            .filter(move |(i, _)| !self.flagged[*i])
    }
}

/// Per-cell temporal mean and unbiased standard deviation.
#[derive(Debug, Clone)]
pub struct PixelStats {
    pub mu: Field,
    pub sigma: Field,
}

pub fn fit_pixel_gaussian(train: &FieldSeries) -> Result<PixelStats> {
    let t = train.len();
    if t < 2 {
        return Err(Error::insufficient(format!(
            "per-pixel statistics need at least 2 snapshots, got {t}"
        )));
    }
    let n = train.shape().len();
    let mut mean = vec![0.0; n];
    for f in train.fields() {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t as f64);
    let mut ss = vec![0.0; n];
    for f in train.fields() {
        for ((s, v), m) in ss.iter_mut().zip(f.values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sigma = ss.iter().map(|s| (s / (t - 1) as f64).sqrt()).collect();
    Ok(PixelStats {
        mu: Field::new(train.land().clone(), mean)?,
        sigma: Field::new(train.land().clone(), sigma)?,
    })
}

/// `H = ln sigma + 1/2 + ln(2pi)/2`; cells with `sigma = 0` get `-inf` and
/// are flagged.
pub fn pixel_entropy(stats: &PixelStats) -> EntropyField {
    let land = stats.sigma.land();
    let mut flagged = vec![false; land.shape().len()];
    let values = stats
        .sigma
        .values()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if land.is_land(i) {
                flagged[i] = true;
                f64::NAN
            } else if s > 0.0 {
                s.ln() + GAUSSIAN_UNIT_ENTROPY
            } else {
                flagged[i] = true;
                f64::NEG_INFINITY
            }
        })
        .collect();
    EntropyField {
        h: Field::with_sentinels(land.clone(), values).expect("shape taken from stats"),
        flagged,
        scale: 1,
        ensemble_size: 1,
    }
}

pub(crate) fn ln_2pi_e() -> f64 {
    (2.0 * PI).ln() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridShape, LandMask, Stamp};

    fn series(values: &[[f64; 2]], land: [bool; 2]) -> FieldSeries {
        let land = LandMask::new(GridShape::new(1, 2).unwrap(), land.to_vec()).unwrap();
        let fields = values
            .iter()
            .map(|v| Field::new(land.clone(), v.to_vec()).unwrap())
            .collect();
        let stamps = (0..values.len())
            .map(|d| Stamp::new(2000, d as u16 + 1).unwrap())
            .collect();
        FieldSeries::new(fields, stamps).unwrap()
    }

    #[test]
    fn constants() {
        assert!((GAUSSIAN_UNIT_ENTROPY - 0.5 * (1.0 + (2.0 * PI).ln())).abs() < 1e-15);
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_series_has_zero_sigma() {
        let s = series(&[[3.0, 1.0], [3.0, 1.0], [3.0, 1.0]], [false, false]);
        let st = fit_pixel_gaussian(&s).unwrap();
        assert!(st.sigma.values().iter().all(|&v| v == 0.0));
        let h = pixel_entropy(&st);
        assert!(h.flagged.iter().all(|&f| f));
        assert!(h.h.values().iter().all(|&v| v == f64::NEG_INFINITY));
    }

    #[test]
    fn alternating_cell_unbiased_std() {
        let s = series(&[[-1.0, 0.0], [1.0, 0.0]], [false, true]);
        let st = fit_pixel_gaussian(&s).unwrap();
        assert_eq!(st.mu.values()[0], 0.0);
        assert!((st.sigma.values()[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(st.sigma.values()[1].is_nan());
        let h = pixel_entropy(&st);
        assert!(h.flagged[1]);
        assert_eq!(h.usable().count(), 1);
    }

    #[test]
    fn too_short_series() {
        let s = series(&[[1.0, 2.0]], [false, false]);
        assert!(matches!(fit_pixel_gaussian(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn pixel_entropy_values() {
        let land = LandMask::all_sea(GridShape::new(1, 3).unwrap());
        let stats = PixelStats {
            mu: Field::filled(land.clone(), 0.0).unwrap(),
            sigma: Field::new(land, vec![1.0, 2.0, 0.0]).unwrap(),
        };
        let h = pixel_entropy(&stats);
        assert!((h.h.values()[0] - 1.418939).abs() < 1e-6);
        assert!((h.h.values()[1] - 2.112086).abs() < 1e-6);
        assert_eq!(h.h.values()[2], f64::NEG_INFINITY);
        assert_eq!(h.flagged, vec![false, false, true]);
    }

    #[test]
    fn pixel_entropy_monotone_in_sigma() {
        let land = LandMask::all_sea(GridShape::new(1, 50).unwrap());
        let sig: Vec<f64> = (1..=50).map(|i| 0.01 * i as f64 * i as f64).collect();
        let stats = PixelStats {
            mu: Field::filled(land.clone(), 0.0).unwrap(),
            sigma: Field::new(land, sig).unwrap(),
        };
        let h = pixel_entropy(&stats);
        assert!(h.h.values().windows(2).all(|w| w[0] < w[1]));
    }
}
