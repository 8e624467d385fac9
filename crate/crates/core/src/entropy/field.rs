use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::patch_model::{
    bins_near, closed_form_prefix, fit_bin, held_in_prefix, monte_carlo_prefix, resample,
};
use super::EntropyField;
use crate::error::{Error, Result};
use crate::grid::{boxcar_smooth, Field, FieldSeries, LandMask};
use crate::ordering::OrderingKind;
use crate::patches::{extract_at, valid_windows, window_center};
use crate::seed;

/// How a fitted bin is turned into an entropy value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyEstimator {
    /// Average prefix NLL of the patches each member was fitted on.
    #[default]
    HeldIn,
    /// `1/2 ln det` of the leading covariance block.
    ClosedForm,
    /// Average NLL of samples drawn from each member.
    MonteCarlo,
}

impl fmt::Display for EntropyEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::HeldIn => "held-in",
            Self::ClosedForm => "closed-form",
            Self::MonteCarlo => "monte-carlo",
        })
    }
}

impl FromStr for EntropyEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "held-in" => Ok(Self::HeldIn),
            "closed-form" => Ok(Self::ClosedForm),
            "monte-carlo" => Ok(Self::MonteCarlo),
            _ => Err(Error::invalid(format!(
                "unknown entropy estimator '{s}' (held-in, closed-form, monte-carlo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyConfig {
    /// Patch side `L`.
    pub patch_size: usize,
    /// Sub-patch side `L'` the entropy refers to.
    pub scale: usize,
    pub ordering: OrderingKind,
    /// Spacing of extracted windows.
    pub patch_stride: usize,
    /// Spacing of the bin lattice; a bin pools windows whose centers lie
    /// within this Chebyshev distance.
    pub bin_stride: usize,
    pub min_samples: usize,
    /// Relative shrinkage: `delta = shrinkage * mean(diag(cov))`.
    pub shrinkage: f64,
    /// Absolute lower bound on `delta`.
    pub shrinkage_floor: f64,
    /// Ensemble size `B`.
    pub ensemble: usize,
    /// Refit members on bootstrap resamples; without it all members coincide.
    pub bootstrap: bool,
    pub estimator: EntropyEstimator,
    pub mc_samples: usize,
    /// Boxcar window applied to the splatted field (1 disables).
    pub smooth_window: usize,
    pub seed: u64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            scale: 8,
            ordering: OrderingKind::Spiral,
            patch_stride: 2,
            bin_stride: 4,
            min_samples: 128,
            shrinkage: 1e-3,
            shrinkage_floor: 1e-9,
            ensemble: 8,
            bootstrap: true,
            estimator: EntropyEstimator::HeldIn,
            mc_samples: 1000,
            smooth_window: 5,
            seed: 0,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.patch_size == 0 {
            return bad("patch_size must be at least 1".into());
        }
        if self.scale == 0 || self.scale > self.patch_size {
            return bad(format!("scale {} outside 1..={}", self.scale, self.patch_size));
        }
        if self.patch_stride == 0 || self.bin_stride == 0 {
            return bad("patch_stride and bin_stride must be at least 1".into());
        }
        if self.min_samples < 2 {
            return bad(format!("min_samples must be at least 2, got {}", self.min_samples));
        }
        if !(self.shrinkage >= 0.0) || !(self.shrinkage_floor > 0.0) {
            return bad("shrinkage must be >= 0 and shrinkage_floor > 0".into());
        }
        if self.ensemble == 0 || self.mc_samples == 0 {
            return bad("ensemble and mc_samples must be at least 1".into());
        }
        if self.smooth_window % 2 == 0 {
            return bad(format!("smooth_window must be odd, got {}", self.smooth_window));
        }
        Ok(())
    }
}

struct BinEstimate {
    center: (usize, usize),
    value: Option<f64>,
    degenerate: bool,
}

fn estimate_bin(
    train: &FieldSeries,
    corners: &[(usize, usize)],
    center: (usize, usize),
    bin_index: usize,
    config: &EntropyConfig,
    ordering: &crate::ordering::Ordering,
) -> Result<BinEstimate> {
    let count = corners.len() * train.len();
    if count < config.min_samples {
        log::warn!(
            "dropping bin {center:?}: {count} samples < min_samples {}",
            config.min_samples
        );
        return Ok(BinEstimate {
            center,
            value: None,
            degenerate: false,
        });
    }
    let patches = extract_at(train, corners, ordering, 0..train.len());
    let all: Vec<usize> = (0..patches.len()).collect();
    let k = config.scale * config.scale;
    let mut sum = 0.0;
    let mut degenerate = false;
    for member in 0..config.ensemble {
        let member_seed = seed::mix(seed::mix(config.seed, bin_index as u64), member as u64);
        let members = if config.bootstrap {
            resample(&all, member_seed)
        } else {
            all.clone()
        };
        let bin = fit_bin(&patches, &members, center, config)?;
        degenerate |= bin.degenerate;
        sum += match config.estimator {
            EntropyEstimator::HeldIn => held_in_prefix(&bin, k),
            EntropyEstimator::ClosedForm => closed_form_prefix(&bin, k),
            EntropyEstimator::MonteCarlo => monte_carlo_prefix(&bin, k, config.mc_samples, member_seed).mean,
        };
    }
    let value = sum / config.ensemble as f64;
    if !value.is_finite() {
        return Err(Error::numeric(format!("entropy of bin {center:?} is {value}")));
    }
    Ok(BinEstimate {
        center,
        value: Some(value),
        degenerate,
    })
}

/// Entropy map of `train`: per-bin ensemble-averaged entropy at scale `L'`,
/// spread bilinearly between bin centers and smoothed.
///
/// Cells no fully-sea window covers are flagged with `NaN`; cells that draw
/// on a zero-variance bin are flagged but keep their (shrinkage-floor) value.
pub fn entropy_field(train: &FieldSeries, config: &EntropyConfig) -> Result<EntropyField> {
    config.validate()?;
    let shape = train.shape();
    let land = train.land();
    let l = config.patch_size;
    let s = config.bin_stride;
    let half = l / 2;
    if l > shape.rows.min(shape.cols) {
        return Err(Error::invalid(format!(
            "patch size {l} exceeds grid {}x{}",
            shape.rows, shape.cols
        )));
    }
    let ordering = config.ordering.build(l)?;
    let windows = valid_windows(land, l, config.patch_stride)?;
    if windows.is_empty() {
        return Err(Error::insufficient(format!(
            "no fully-sea {l}x{l} window on stride {}",
            config.patch_stride
        )));
    }

    let mut groups: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for &corner in &windows {
        for b in bins_near(window_center(corner, l), half, s) {
            groups.entry(b).or_default().push(corner);
        }
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let estimates = groups
        .par_iter()
        .enumerate()
        .map(|(i, (center, corners))| estimate_bin(train, corners, *center, i, config, &ordering))
        .collect::<Result<Vec<_>>>()?;
    let kept: BTreeMap<(usize, usize), (f64, bool)> = estimates
        .iter()
        .filter_map(|e| e.value.map(|v| (e.center, (v, e.degenerate))))
        .collect();
    if kept.is_empty() {
        return Err(Error::insufficient(format!(
            "every bin has fewer than {} samples",
            config.min_samples
        )));
    }

    let mut covered = vec![false; shape.len()];
    for &(r0, c0) in &windows {
        for r in r0..r0 + l {
            for c in c0..c0 + l {
                covered[shape.index(r, c)] = true;
            }
        }
    }

    // lattice coordinate and fractional offset along one axis
    let axis = |x: usize| -> (usize, f64) {
        if x <= half {
            (0, 0.0)
        } else {
            ((x - half) / s, ((x - half) % s) as f64 / s as f64)
        }
    };
    let n = shape.len();
    let mut values = vec![f64::NAN; n];
    let mut flagged = vec![true; n];
    for idx in 0..n {
        if land.is_land(idx) || !covered[idx] {
            continue;
        }
        let (r, c) = shape.coords(idx);
        let (a, fr) = axis(r);
        let (b, fc) = axis(c);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let mut degenerate = false;
        for (da, wr) in [(0, 1.0 - fr), (1, fr)] {
            for (db, wc) in [(0, 1.0 - fc), (1, fc)] {
                let w = wr * wc;
                if w <= 0.0 {
                    continue;
                }
                let center = (half + (a + da) * s, half + (b + db) * s);
                if let Some(&(v, deg)) = kept.get(&center) {
                    acc += w * v;
                    wsum += w;
                    degenerate |= deg;
                }
            }
        }
        if wsum > 0.0 {
            values[idx] = acc / wsum;
        } else {
            let dist = |p: &(usize, usize)| {
                let dr = p.0 as f64 - r as f64;
                let dc = p.1 as f64 - c as f64;
                dr * dr + dc * dc
            };
            let (_, &(v, deg)) = kept
                .iter()
                .min_by(|x, y| dist(x.0).total_cmp(&dist(y.0)))
                .expect("kept is non-empty");
            values[idx] = v;
            degenerate = deg;
        }
        flagged[idx] = degenerate;
    }

    let h = smooth_unflagged(land, &values, &flagged, config.smooth_window)?;
    Ok(EntropyField {
        h,
        flagged,
        scale: config.scale,
        ensemble_size: config.ensemble,
    })
}

/// Boxcar smoothing that ignores flagged cells; flagged sea cells keep their
/// raw values.
fn smooth_unflagged(land: &LandMask, values: &[f64], flagged: &[bool], window: usize) -> Result<Field> {
    let mut out = values.to_vec();
    if flagged.iter().any(|f| !f) {
        let mask = LandMask::new(land.shape(), flagged.to_vec())?;
        let usable = Field::new(mask, values.to_vec())?;
        let smoothed = boxcar_smooth(&usable, window)?;
        for (i, v) in smoothed.values().iter().enumerate() {
            if !flagged[i] {
                out[i] = *v;
            }
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        if land.is_land(i) {
            *v = f64::NAN;
        }
    }
    Field::with_sentinels(land.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridShape, Stamp};
    use crate::synth::{generate, SynthConfig};

    fn small_synth(seed: u64) -> FieldSeries {
        generate(&SynthConfig {
            shape: GridShape::new(32, 32).unwrap(),
            front_band: (12, 20),
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn small_cfg() -> EntropyConfig {
        EntropyConfig {
            patch_size: 4,
            scale: 4,
            bin_stride: 2,
            ensemble: 3,
            smooth_window: 3,
            ..EntropyConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(EntropyConfig::default().validate().is_ok());
        for bad in [
            EntropyConfig { scale: 9, ..Default::default() },
            EntropyConfig { scale: 0, ..Default::default() },
            EntropyConfig { ensemble: 0, ..Default::default() },
            EntropyConfig { smooth_window: 4, ..Default::default() },
            EntropyConfig { bin_stride: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidArgument(_))));
        }
        for e in [EntropyEstimator::HeldIn, EntropyEstimator::ClosedForm, EntropyEstimator::MonteCarlo] {
            assert_eq!(e.to_string().parse::<EntropyEstimator>().unwrap(), e);
        }
    }

    #[test]
    fn front_band_has_higher_entropy() {
        let series = small_synth(1);
        let h = entropy_field(&series, &small_cfg()).unwrap();
        let shape = series.shape();
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (i, v) in h.usable() {
            let (r, _) = shape.coords(i);
            if (12..20).contains(&r) {
                inside.push(v)
            } else {
                outside.push(v)
            }
        }
        let med = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[(v.len() - 1) / 2]
        };
        assert!(med(&mut inside) > med(&mut outside));
    }

    #[test]
    fn members_coincide_without_bootstrap() {
        let series = small_synth(2);
        let one = EntropyConfig { ensemble: 1, bootstrap: false, ..small_cfg() };
        let three = EntropyConfig { ensemble: 3, bootstrap: false, ..small_cfg() };
        let a = entropy_field(&series, &one).unwrap();
        let b = entropy_field(&series, &three).unwrap();
        for (x, y) in a.h.values().iter().zip(b.h.values()) {
            assert!(x.to_bits() == y.to_bits() || (x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn estimators_agree_roughly() {
        let series = small_synth(3);
        let held = entropy_field(&series, &EntropyConfig { bootstrap: false, ensemble: 1, ..small_cfg() }).unwrap();
        let closed = entropy_field(
            &series,
            &EntropyConfig { bootstrap: false, ensemble: 1, estimator: EntropyEstimator::ClosedForm, ..small_cfg() },
        )
        .unwrap();
        for ((_, a), (_, b)) in held.usable().zip(closed.usable()) {
            // shrinkage lowers the in-sample quadratic term slightly below k/2
            assert!(a <= b + 1e-12 && b - a < 0.1, "{a} {b}");
        }
    }

    #[test]
    fn constant_series_is_flagged() {
        let land = LandMask::all_sea(GridShape::new(8, 8).unwrap());
        let fields = (0..40).map(|_| Field::filled(land.clone(), 2.5).unwrap()).collect();
        let stamps = (0..40).map(|d| Stamp::new(2000, d + 1).unwrap()).collect();
        let series = FieldSeries::new(fields, stamps).unwrap();
        let cfg = EntropyConfig { min_samples: 10, ..small_cfg() };
        let h = entropy_field(&series, &cfg).unwrap();
        assert!(h.flagged.iter().all(|&f| f));
        assert_eq!(h.usable().count(), 0);
    }

    #[test]
    fn no_windows_is_insufficient() {
        let shape = GridShape::new(4, 4).unwrap();
        let mut mask = vec![false; 16];
        mask[5] = true;
        let land = LandMask::new(shape, mask).unwrap();
        let fields = (0..3).map(|_| Field::filled(land.clone(), 1.0).unwrap()).collect();
        let stamps = (0..3).map(|d| Stamp::new(2000, d + 1).unwrap()).collect();
        let series = FieldSeries::new(fields, stamps).unwrap();
        let cfg = EntropyConfig { patch_size: 4, scale: 2, min_samples: 2, ..small_cfg() };
        assert!(matches!(entropy_field(&series, &cfg), Err(Error::InsufficientData(_))));
    }
}
