//! Grid containers: shapes, land masks, single fields and time-stamped series.
//!
//! Land cells carry `NaN` and are excluded from every statistic. A land mask
//! is shared (reference counted) between all fields of a series.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Days per calendar year; leap days are not modelled.
pub const DAYS_PER_YEAR: u16 = 365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "grid shape must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }
}

/// Per-cell land flags (`true` = land, excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandMask {
    shape: GridShape,
    land: Arc<[bool]>,
}

impl LandMask {
    pub fn new(shape: GridShape, land: Vec<bool>) -> Result<Self> {
        if land.len() != shape.len() {
            return Err(Error::invalid(format!(
                "land mask has {} cells, grid has {}",
                land.len(),
                shape.len()
            )));
        }
        Ok(Self {
            shape,
            land: land.into(),
        })
    }

    pub fn all_sea(shape: GridShape) -> Self {
        Self {
            shape,
            land: vec![false; shape.len()].into(),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    #[inline]
    pub fn is_land(&self, index: usize) -> bool {
        self.land[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.land
    }

    pub fn sea_count(&self) -> usize {
        self.land.iter().filter(|&&l| !l).count()
    }

    /// Flat indices of sea cells in row-major order.
    pub fn sea_cells(&self) -> Vec<usize> {
        (0..self.land.len()).filter(|&i| !self.land[i]).collect()
    }
}

/// One 2-D field in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    land: LandMask,
}

impl Field {
    /// Builds a field; land cells are overwritten with `NaN`, sea cells must
    /// be finite.
    pub fn new(land: LandMask, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != land.shape().len() {
            return Err(Error::invalid(format!(
                "field has {} values, grid has {}",
                values.len(),
                land.shape().len()
            )));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if land.is_land(i) {
                *v = f64::NAN;
            } else if !v.is_finite() {
                let (r, c) = land.shape().coords(i);
                return Err(Error::invalid(format!(
                    "non-finite value {v} at sea cell ({r},{c})"
                )));
            }
        }
        Ok(Self { values, land })
    }

    /// Builds a field without the finiteness check on sea cells. Used for
    /// derived maps that carry sentinels (e.g. `-inf` entropy).
    pub fn with_sentinels(land: LandMask, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != land.shape().len() {
            return Err(Error::invalid(format!(
                "field has {} values, grid has {}",
                values.len(),
                land.shape().len()
            )));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if land.is_land(i) {
                *v = f64::NAN;
            }
        }
        Ok(Self { values, land })
    }

    pub fn filled(land: LandMask, value: f64) -> Result<Self> {
        let n = land.shape().len();
        Self::new(land, vec![value; n])
    }

    pub fn shape(&self) -> GridShape {
        self.land.shape()
    }

    pub fn land(&self) -> &LandMask {
        &self.land
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape().index(row, col)]
    }

    #[inline]
    pub fn is_land(&self, row: usize, col: usize) -> bool {
        self.land.is_land(self.shape().index(row, col))
    }

    /// Iterator over `(flat index, value)` of sea cells.
    pub fn sea_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.land.is_land(*i))
            .map(|(i, &v)| (i, v))
    }

    /// Applies `f` to every sea cell.
    pub fn map_sea(&self, mut f: impl FnMut(f64) -> f64) -> Field {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.land.is_land(i) { f64::NAN } else { f(v) })
            .collect();
        Field {
            values,
            land: self.land.clone(),
        }
    }
}

/// Calendar label of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stamp {
    pub year: u16,
    /// Day of year, `1..=365`.
    pub day: u16,
}

impl Stamp {
    pub fn new(year: u16, day: u16) -> Result<Self> {
        if !(1..=DAYS_PER_YEAR).contains(&day) {
            return Err(Error::invalid(format!("day of year {day} not in 1..=365")));
        }
        Ok(Self { year, day })
    }
}

/// Chronological stack of fields sharing one grid and land mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    land: LandMask,
    fields: Vec<Field>,
    stamps: Vec<Stamp>,
}

impl FieldSeries {
    pub fn new(fields: Vec<Field>, stamps: Vec<Stamp>) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::invalid("a series needs at least one field"))?;
        let land = first.land().clone();
        if fields.len() != stamps.len() {
            return Err(Error::invalid(format!(
                "{} fields but {} stamps",
                fields.len(),
                stamps.len()
            )));
        }
        if fields.iter().any(|f| f.land() != &land) {
            return Err(Error::invalid("fields do not share one land mask"));
        }
        if let Some(w) = stamps.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "stamps not strictly increasing: {:?} then {:?}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            land,
            fields,
            stamps,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn shape(&self) -> GridShape {
        self.land.shape()
    }

    pub fn land(&self) -> &LandMask {
        &self.land
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn stamps(&self) -> &[Stamp] {
        &self.stamps
    }

    /// Contiguous sub-series; errors on an empty range.
    pub fn slice(&self, range: Range<usize>) -> Result<FieldSeries> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "slice {range:?} out of a series of length {}",
                self.len()
            )));
        }
        Ok(FieldSeries {
            land: self.land.clone(),
            fields: self.fields[range.clone()].to_vec(),
            stamps: self.stamps[range].to_vec(),
        })
    }
}

/// Mean over the `window x window` neighbourhood of each sea cell, counting
/// only sea cells. Land cells are left as they are.
pub fn boxcar_smooth(field: &Field, window: usize) -> Result<Field> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    let shape = field.shape();
    let half = window / 2;
    let land = field.land();
    let values = field.values();
    let mut out = values.to_vec();
    for r in 0..shape.rows {
        let r_lo = r.saturating_sub(half);
        let r_hi = (r + half).min(shape.rows - 1);
        for c in 0..shape.cols {
            let idx = shape.index(r, c);
            if land.is_land(idx) {
                continue;
            }
            let c_lo = c.saturating_sub(half);
            let c_hi = (c + half).min(shape.cols - 1);
            let mut sum = 0.0;
            let mut count = 0usize;
            for rr in r_lo..=r_hi {
                for cc in c_lo..=c_hi {
                    let j = shape.index(rr, cc);
                    if !land.is_land(j) {
                        sum += values[j];
                        count += 1;
                    }
                }
            }
            out[idx] = sum / count as f64;
        }
    }
    Field::with_sentinels(land.clone(), out)
}
