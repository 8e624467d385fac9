//! Trainable sensor selection with a reconstruction decoder.
//!
//! A binary mask `step(w)` over sea cells chooses where the field is
//! observed; the decoder maps the masked, standardized field back to every
//! sea cell. Mask logits are trained through the step function with the
//! straight-through rule, or replaced by `k` concrete (Gumbel-softmax)
//! selection heads.

mod decoder;
mod optim;
mod train;

pub use decoder::{Decoder, DecoderKind};
pub use optim::Adam;
pub use train::{
    loss, loss_with_grad, random_mask_params, reconstruct, train, EpochLog, LossGrad, LossTerms,
    Reconstructor, Selector, Standardizer, TrainConfig, TrainReport,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Field, LandMask};

/// Mask logits per cell; land cells hold `-inf` and are never on.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskParams {
    land: LandMask,
    w: Vec<f64>,
}

impl MaskParams {
    pub fn new(land: LandMask, mut w: Vec<f64>) -> Result<Self> {
        if w.len() != land.shape().len() {
            return Err(Error::invalid(format!(
                "{} mask logits for a grid of {} cells",
                w.len(),
                land.shape().len()
            )));
        }
        for (i, v) in w.iter_mut().enumerate() {
            if land.is_land(i) {
                *v = f64::NEG_INFINITY;
            } else if !v.is_finite() {
                return Err(Error::invalid(format!("mask logit {v} at sea cell {i}")));
            }
        }
        Ok(Self { land, w })
    }

    /// Logits `on` at `cells` and `off` elsewhere on sea.
    pub fn from_cells(land: LandMask, cells: &[usize], on: f64, off: f64) -> Result<Self> {
        let mut w = vec![off; land.shape().len()];
        for &i in cells {
            if i >= w.len() || land.is_land(i) {
                return Err(Error::invalid(format!("cell {i} is not a sea cell")));
            }
            w[i] = on;
        }
        Self::new(land, w)
    }

    pub fn land(&self) -> &LandMask {
        &self.land
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// `step(w)` per cell, with `step(0) = 1`.
    pub fn mask(&self) -> Vec<bool> {
        self.w.iter().map(|&v| v >= 0.0).collect()
    }

    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.w.len()).filter(|&i| self.w[i] >= 0.0).collect()
    }

    pub fn sensor_count(&self) -> usize {
        self.w.iter().filter(|&&v| v >= 0.0).count()
    }

    /// Logits as a field (land `NaN`).
    pub fn to_field(&self) -> Field {
        Field::with_sentinels(self.land.clone(), self.w.clone()).expect("lengths agree")
    }
}

/// Binary mask field: 1 where `w >= 0`, 0 elsewhere on sea.
pub fn step_mask(w: &MaskParams) -> Field {
    let values = w.w.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
    Field::with_sentinels(w.land.clone(), values).expect("lengths agree")
}

/// Gradient with respect to the logits: the mask gradient itself on sea
/// cells, zero on land.
pub fn straight_through_grad(land: &LandMask, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != land.shape().len() {
        return Err(Error::invalid(format!(
            "gradient has {} entries, grid has {}",
            upstream.len(),
            land.shape().len()
        )));
    }
    Ok(upstream
        .iter()
        .enumerate()
        .map(|(i, &g)| if land.is_land(i) { 0.0 } else { g })
        .collect())
}

/// Relaxed selection weights, one row per head:
/// `softmax((logits + noise) / t)` along each row.
pub fn concrete_select(logits: &DMatrix<f64>, t: f64, noise: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("concrete temperature must be positive, got {t}")));
    }
    if logits.shape() != noise.shape() {
        return Err(Error::invalid("logits and noise differ in shape"));
    }
    let mut out = (logits + noise) / t;
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
    }
    Ok(out)
}

/// Hard selection from relaxed weights: each head in turn takes its
/// highest-weight column not already taken by an earlier head.
pub fn concrete_argmax(weights: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (k, n) = weights.shape();
    if k > n {
        return Err(Error::invalid(format!("{k} heads cannot pick distinct cells among {n}")));
    }
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    for row in weights.row_iter() {
        let best = (0..n)
            .filter(|&j| !taken[j])
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a free column");
        taken[best] = true;
        picks.push(best);
    }
    Ok(picks)
}

/// Standard Gumbel noise of the given shape.
pub(crate) fn gumbel(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let u: f64 = rng.random();
        -(-(1.0 - u).ln()).ln()
    })
}
