//! Deterministic synthetic geophysical-like field series.
//!
//! `S(i,j,t) = cycle(i,j,d) + sum_m amp_m * band(i) * a_m(t) * phi_m(i,j)
//!            + drift(i,j,y) + noise`
//!
//! * `cycle` is a meridional gradient plus a spatially modulated annual cosine.
//! * `phi_m` are smooth modes built from separable Gaussian bumps, scaled to
//!   unit peak magnitude; rows inside the front band get three times the mode
//!   amplitude.
//! * `a_m(t)` is a unit-variance AR(1) process (0.9 per day) plus a small
//!   annual harmonic.
//! * `drift` steps once per year with a smooth spatial pattern.
//! * The left `land_fraction` of columns is land.
//!
//! Randomness is counter based: stream 0 drives the modes and amplitudes,
//! stream `1 + t` drives the noise of time step `t`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries, GridShape, LandMask, Stamp, DAYS_PER_YEAR};

pub const AR1_COEFF: f64 = 0.9;
pub const FRONT_GAIN: f64 = 3.0;
const BUMPS_PER_MODE: usize = 3;
const MODE_SEASONAL_SHARE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub shape: GridShape,
    pub years: usize,
    pub start_year: u16,
    pub rank: usize,
    /// Peak magnitude of the leading mode; later modes decay as `1/sqrt(1+m)`.
    pub mode_amp: f64,
    pub seasonal_amp: f64,
    pub drift_amp: f64,
    /// Half-open row range `[lo, hi)` with amplified mode variability.
    pub front_band: (usize, usize),
    pub noise_sigma: f64,
    pub land_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shape: GridShape { rows: 64, cols: 64 },
            years: 2,
            start_year: 2000,
            rank: 6,
            mode_amp: 1.0,
            seasonal_amp: 3.0,
            drift_amp: 0.5,
            front_band: (24, 40),
            noise_sigma: 0.3,
            land_fraction: 0.125,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        GridShape::new(self.shape.rows, self.shape.cols)?;
        if self.rank < 1 {
            return Err(Error::invalid("synthetic rank must be at least 1"));
        }
        if self.years < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 years"));
        }
        if self.start_year as usize + self.years > u16::MAX as usize {
            return Err(Error::invalid("years overflow the u16 calendar"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("mode_amp", self.mode_amp),
            ("seasonal_amp", self.seasonal_amp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.drift_amp.is_finite() {
            return Err(Error::invalid("drift_amp must be finite"));
        }
        if !(0.0..1.0).contains(&self.land_fraction) {
            return Err(Error::invalid(format!(
                "land_fraction must be in [0,1), got {}",
                self.land_fraction
            )));
        }
        if self.land_columns() >= self.shape.cols {
            return Err(Error::invalid("land_fraction leaves no sea column"));
        }
        let (lo, hi) = self.front_band;
        if lo >= hi || hi > self.shape.rows {
            return Err(Error::invalid(format!(
                "front band [{lo},{hi}) invalid for {} rows",
                self.shape.rows
            )));
        }
        Ok(())
    }

    pub fn land_columns(&self) -> usize {
        (self.land_fraction * self.shape.cols as f64).floor() as usize
    }

    pub fn in_front_band(&self, row: usize) -> bool {
        (self.front_band.0..self.front_band.1).contains(&row)
    }
}

struct Mode {
    phi: Vec<f64>,
    amp: f64,
    phase: f64,
}

fn build_modes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Mode> {
    let GridShape { rows, cols } = cfg.shape;
    let (rf, cf) = (rows as f64, cols as f64);
    (0..cfg.rank)
        .map(|m| {
            let mut phi = vec![0.0; rows * cols];
            for _ in 0..BUMPS_PER_MODE {
                let r0 = rng.random_range(0.0..rf);
                let c0 = rng.random_range(0.0..cf);
                let sr = rng.random_range(rf / 8.0..rf / 3.0);
                let sc = rng.random_range(cf / 8.0..cf / 3.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let w = sign * rng.random_range(0.5..1.0);
                let row_part: Vec<f64> = (0..rows)
                    .map(|i| (-0.5 * ((i as f64 - r0) / sr).powi(2)).exp())
                    .collect();
                let col_part: Vec<f64> = (0..cols)
                    .map(|j| (-0.5 * ((j as f64 - c0) / sc).powi(2)).exp())
                    .collect();
                for i in 0..rows {
                    for j in 0..cols {
                        phi[i * cols + j] += w * row_part[i] * col_part[j];
                    }
                }
            }
            let peak = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if peak > 0.0 {
                phi.iter_mut().for_each(|v| *v /= peak);
            }
            Mode {
                phi,
                amp: cfg.mode_amp / (1.0 + m as f64).sqrt(),
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect()
}

fn annual(day: u16) -> f64 {
    2.0 * PI * (day as f64 - 1.0) / DAYS_PER_YEAR as f64
}

/// Generates the series described in the module docs.
pub fn generate(cfg: &SynthConfig) -> Result<FieldSeries> {
    cfg.validate()?;
    let shape = cfg.shape;
    let GridShape { rows, cols } = shape;
    let land_cols = cfg.land_columns();
    let land = LandMask::new(shape, (0..shape.len()).map(|i| i % cols < land_cols).collect())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let modes = build_modes(cfg, &mut rng);

    let stamps: Vec<Stamp> = (0..cfg.years)
        .flat_map(|y| (1..=DAYS_PER_YEAR).map(move |d| (y, d)))
        .map(|(y, d)| Stamp::new(cfg.start_year + y as u16, d))
        .collect::<Result<_>>()?;
    let t_len = stamps.len();

    // Mode amplitudes: AR(1) plus a weak annual harmonic.
    let innov = (1.0 - AR1_COEFF * AR1_COEFF).sqrt();
    let mut coeffs = vec![vec![0.0; modes.len()]; t_len];
    let mut state: Vec<f64> = modes
        .iter()
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    for (t, stamp) in stamps.iter().enumerate() {
        for (m, mode) in modes.iter().enumerate() {
            if t > 0 {
                let eta: f64 = StandardNormal.sample(&mut rng);
                state[m] = AR1_COEFF * state[m] + innov * eta;
            }
            let seasonal = MODE_SEASONAL_SHARE * cfg.seasonal_amp * (annual(stamp.day) + mode.phase).cos();
            coeffs[t][m] = state[m] + seasonal;
        }
    }

    let rf = (rows.max(2) - 1) as f64;
    let cf = (cols.max(2) - 1) as f64;
    let base: Vec<f64> = (0..shape.len())
        .map(|k| {
            let (i, _) = shape.coords(k);
            8.0 - 6.0 * i as f64 / rf
        })
        .collect();
    let cycle_gain: Vec<f64> = (0..shape.len())
        .map(|k| 0.6 + 0.4 * shape.coords(k).1 as f64 / cf)
        .collect();
    let drift_pattern: Vec<f64> = (0..shape.len())
        .map(|k| 0.5 + shape.coords(k).0 as f64 / rf)
        .collect();
    let band_gain: Vec<f64> = (0..rows)
        .map(|i| if cfg.in_front_band(i) { FRONT_GAIN } else { 1.0 })
        .collect();

    let fields = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let stamp = stamps[t];
            let year_index = (stamp.year - cfg.start_year) as f64;
            let cyc = cfg.seasonal_amp * annual(stamp.day).cos();
            let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            noise_rng.set_stream(1 + t as u64);
            let values = (0..shape.len())
                .map(|k| {
                    if land.is_land(k) {
                        return f64::NAN;
                    }
                    let (i, _) = shape.coords(k);
                    let modal: f64 = modes
                        .iter()
                        .zip(&coeffs[t])
                        .map(|(mode, a)| mode.amp * a * mode.phi[k])
                        .sum();
                    let eps: f64 = if cfg.noise_sigma > 0.0 {
                        let z: f64 = StandardNormal.sample(&mut noise_rng);
                        cfg.noise_sigma * z
                    } else {
                        0.0
                    };
                    base[k]
                        + cyc * cycle_gain[k]
                        + band_gain[i] * modal
                        + cfg.drift_amp * year_index * drift_pattern[k]
                        + eps
                })
                .collect();
            Field::new(land.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSeries::new(fields, stamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::encode_series;
    use nalgebra::DMatrix;

    fn small() -> SynthConfig {
        SynthConfig {
            shape: GridShape::new(16, 12).unwrap(),
            front_band: (6, 10),
            ..SynthConfig::default()
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SynthConfig { rank: 0, ..small() },
            SynthConfig { years: 1, ..small() },
            SynthConfig { noise_sigma: -1.0, ..small() },
            SynthConfig { land_fraction: 1.0, ..small() },
            SynthConfig { front_band: (10, 6), ..small() },
            SynthConfig { front_band: (6, 17), ..small() },
        ];
        for cfg in bad {
            assert!(matches!(generate(&cfg), Err(Error::InvalidArgument(_))), "{cfg:?}");
        }
    }

    #[test]
    fn pure_cycle_repeats_every_year() {
        let cfg = SynthConfig {
            mode_amp: 0.0,
            drift_amp: 0.0,
            noise_sigma: 0.0,
            ..small()
        };
        let s = generate(&cfg).unwrap();
        assert_eq!(s.len(), 730);
        for d in 0..365 {
            assert_eq!(s.fields()[d].values()[5], s.fields()[d + 365].values()[5]);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = encode_series(&generate(&small()).unwrap());
        let b = encode_series(&generate(&small()).unwrap());
        assert_eq!(a, b);
        let c = encode_series(&generate(&SynthConfig { seed: 1, ..small() }).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn land_is_left_columns_and_empty() {
        let cfg = small();
        let s = generate(&cfg).unwrap();
        let lc = cfg.land_columns();
        assert!(lc > 0);
        for f in s.fields() {
            for (k, v) in f.values().iter().enumerate() {
                assert_eq!(f.land().is_land(k), k % cfg.shape.cols < lc);
                assert_eq!(v.is_nan(), f.land().is_land(k));
            }
        }
    }

    #[test]
    fn rank_one_data_has_rank_one_anomalies() {
        let cfg = SynthConfig {
            rank: 1,
            seasonal_amp: 0.0,
            drift_amp: 0.0,
            noise_sigma: 0.0,
            ..small()
        };
        let s = generate(&cfg).unwrap();
        let sea = s.land().sea_cells();
        let t = s.len();
        let mut m = DMatrix::from_fn(sea.len(), t, |i, k| s.fields()[k].values()[sea[i]]);
        for mut row in m.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        let sv = m.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        assert!(sv[1] < 1e-9 * sv[0], "{} vs {}", sv[1], sv[0]);
    }
}
