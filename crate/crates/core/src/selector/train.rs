use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{concrete_argmax, concrete_select, gumbel, straight_through_grad, Adam, Decoder, DecoderKind, MaskParams};
use crate::entropy::fit_pixel_gaussian;
use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries, LandMask};
use crate::io::{Checkpoint, Section};
use crate::seed;

/// Per-cell affine map to and from the standardized space of a training set.
/// Cells whose training spread vanishes are standardized to 0 and excluded
/// from the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    land: LandMask,
    sea_cells: Vec<usize>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FieldSeries) -> Result<Self> {
        let stats = fit_pixel_gaussian(train)?;
        let land = train.land().clone();
        let sea_cells = land.sea_cells();
        let mu: Vec<f64> = sea_cells.iter().map(|&i| stats.mu.values()[i]).collect();
        let sigma = sea_cells
            .iter()
            .zip(&mu)
            .map(|(&i, m)| {
                let s = stats.sigma.values()[i];
                // spreads at rounding level come from constant cells
                if s > 1e-12 * (1.0 + m.abs()) {
                    s
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self { land, sea_cells, mu, sigma })
    }

    /// From per-cell grid fields of mean and spread.
    pub fn from_fields(mu: &Field, sigma: &Field) -> Result<Self> {
        if mu.land() != sigma.land() {
            return Err(Error::invalid("mean and spread fields have different land masks"));
        }
        let land = mu.land().clone();
        let sea_cells = land.sea_cells();
        let m: Vec<f64> = sea_cells.iter().map(|&i| mu.values()[i]).collect();
        let s: Vec<f64> = sea_cells.iter().map(|&i| sigma.values()[i]).collect();
        if s.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("negative spread in standardizer"));
        }
        Ok(Self { land, sea_cells, mu: m, sigma: s })
    }

    pub fn land(&self) -> &LandMask {
        &self.land
    }

    pub fn n_sea(&self) -> usize {
        self.sea_cells.len()
    }

    /// Grid index of each sea position.
    pub fn sea_cells(&self) -> &[usize] {
        &self.sea_cells
    }

    pub fn mu_field(&self) -> Field {
        self.to_field(&self.mu)
    }

    pub fn sigma_field(&self) -> Field {
        self.to_field(&self.sigma)
    }

    fn to_field(&self, sea: &[f64]) -> Field {
        let mut v = vec![f64::NAN; self.land.shape().len()];
        for (s, &i) in self.sea_cells.iter().enumerate() {
            v[i] = sea[s];
        }
        Field::with_sentinels(self.land.clone(), v).expect("lengths agree")
    }

    /// Sea positions that enter the loss.
    pub fn valid(&self) -> Vec<bool> {
        self.sigma.iter().map(|&s| s > 0.0).collect()
    }

    fn check(&self, land: &LandMask) -> Result<()> {
        if land != &self.land {
            return Err(Error::invalid("field land mask differs from the training land mask"));
        }
        Ok(())
    }

    /// Standardized values per sea position.
    pub fn standardize(&self, field: &Field) -> Result<Vec<f64>> {
        self.check(field.land())?;
        let v = field.values();
        Ok(self
            .sea_cells
            .iter()
            .enumerate()
            .map(|(s, &i)| if self.sigma[s] > 0.0 { (v[i] - self.mu[s]) / self.sigma[s] } else { 0.0 })
            .collect())
    }

    /// `n_sea x T` matrix of standardized snapshots.
    pub fn matrix(&self, series: &FieldSeries) -> Result<DMatrix<f64>> {
        self.check(series.land())?;
        let mut z = DMatrix::zeros(self.n_sea(), series.len());
        for (t, f) in series.fields().iter().enumerate() {
            let col = self.standardize(f)?;
            z.column_mut(t).copy_from_slice(&col);
        }
        Ok(z)
    }

    /// Back to physical units; cells with zero spread return the mean.
    pub fn destandardize(&self, y: &[f64]) -> Field {
        let mut v = vec![f64::NAN; self.land.shape().len()];
        for (s, &i) in self.sea_cells.iter().enumerate() {
            v[i] = self.mu[s] + if self.sigma[s] > 0.0 { self.sigma[s] * y[s] } else { 0.0 };
        }
        Field::with_sentinels(self.land.clone(), v).expect("lengths agree")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    /// Mask logits trained through `step` with the identity gradient.
    StraightThrough,
    /// `k` Gumbel-softmax heads, temperature annealed geometrically.
    Concrete { k: usize, t_start: f64, t_end: f64 },
    /// Mask held at its initial value; only the decoder trains.
    Fixed,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StraightThrough => f.write_str("straight-through"),
            Self::Concrete { k, t_start, t_end } => write!(f, "concrete:{k}:{t_start}:{t_end}"),
            Self::Fixed => f.write_str("fixed"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight-through" | "st" => return Ok(Self::StraightThrough),
            "fixed" => return Ok(Self::Fixed),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts[0] == "concrete" && parts.len() == 4 {
            if let (Ok(k), Ok(t_start), Ok(t_end)) = (parts[1].parse(), parts[2].parse(), parts[3].parse()) {
                return Ok(Self::Concrete { k, t_start, t_end });
            }
        }
        Err(Error::invalid(format!(
            "unknown selector '{s}' (straight-through, fixed, concrete:K:T0:T1)"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Final sparsity weight.
    pub lambda_max: f64,
    /// Epochs over which the sparsity weight ramps linearly from 0.
    pub lambda_ramp_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Decoder step size.
    pub step_size: f64,
    /// Step size of the mask logits (or concrete logits).
    pub mask_step_size: f64,
    /// Per-epoch multiplicative step-size decay.
    pub decay: f64,
    pub decoder: DecoderKind,
    pub selector: Selector,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_max: 0.05,
            lambda_ramp_epochs: 50,
            epochs: 120,
            batch_size: 32,
            step_size: 1e-3,
            mask_step_size: 1e-2,
            decay: 0.99,
            decoder: DecoderKind::Linear,
            selector: Selector::StraightThrough,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.lambda_max >= 0.0) || !self.lambda_max.is_finite() {
            return bad(format!("lambda_max must be >= 0, got {}", self.lambda_max));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if !(self.step_size > 0.0) || !(self.mask_step_size >= 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("step sizes must be positive and decay in (0, 1]".into());
        }
        if let Selector::Concrete { k, t_start, t_end } = self.selector {
            if k == 0 {
                return bad("concrete selector needs at least one head".into());
            }
            if !(t_end > 0.0 && t_end <= t_start) {
                return bad(format!("need 0 < t_end <= t_start, got {t_start} -> {t_end}"));
            }
        }
        Ok(())
    }

    /// Sparsity weight at `epoch` (0-based).
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        if self.lambda_ramp_epochs == 0 {
            self.lambda_max
        } else {
            self.lambda_max * (epoch as f64 / self.lambda_ramp_epochs as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub mse: f64,
    pub sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub terms: LossTerms,
    /// Gradient w.r.t. the decoder parameters.
    pub decoder: Vec<f64>,
    /// Gradient w.r.t. the mask value at each sea position.
    pub mask: Vec<f64>,
}

fn gather_inputs(z: &DMatrix<f64>, input_cells: &[usize], mask: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(input_cells.len(), z.ncols(), |a, b| {
        let s = input_cells[a];
        z[(s, b)] * mask[s]
    })
}

fn check_loss_inputs(
    decoder: &Decoder,
    input_cells: &[usize],
    mask: &[f64],
    batch: &DMatrix<f64>,
    valid: &[bool],
) -> Result<()> {
    let n_sea = batch.nrows();
    if mask.len() != n_sea || valid.len() != n_sea || input_cells.len() != decoder.n_inputs() {
        return Err(Error::invalid("mask, validity or input cells do not match the batch"));
    }
    if batch.ncols() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&s) = input_cells.iter().find(|&&s| s >= n_sea) {
        return Err(Error::invalid(format!("input cell {s} outside {n_sea} sea cells")));
    }
    Ok(())
}

/// Loss of a decoder reading `input_cells` of the masked batch
/// (`n_sea x B`, standardized), with gradients. `mask` holds one real value
/// per sea position (binary for the straight-through selector).
pub fn loss_with_grad(
    decoder: &Decoder,
    input_cells: &[usize],
    mask: &[f64],
    batch: &DMatrix<f64>,
    valid: &[bool],
    lambda: f64,
) -> Result<LossGrad> {
    check_loss_inputs(decoder, input_cells, mask, batch, valid)?;
    let n_sea = batch.nrows();
    let x = gather_inputs(batch, input_cells, mask);
    let (mse, grad, dx) = decoder.mse_grad(&x, batch, valid)?;
    let sparsity = lambda * mask.iter().sum::<f64>() / n_sea as f64;
    let mut dmask = vec![lambda / n_sea as f64; n_sea];
    for (a, &s) in input_cells.iter().enumerate() {
        dmask[s] += (0..batch.ncols()).map(|b| dx[(a, b)] * batch[(s, b)]).sum::<f64>();
    }
    Ok(LossGrad {
        terms: LossTerms {
            total: mse + sparsity,
            mse,
            sparsity,
        },
        decoder: grad,
        mask: dmask,
    })
}

/// Loss terms without gradients; see [`loss_with_grad`].
pub fn loss(
    decoder: &Decoder,
    input_cells: &[usize],
    mask: &[f64],
    batch: &DMatrix<f64>,
    valid: &[bool],
    lambda: f64,
) -> Result<LossTerms> {
    check_loss_inputs(decoder, input_cells, mask, batch, valid)?;
    let mse = decoder.mse(&gather_inputs(batch, input_cells, mask), batch, valid)?;
    let sparsity = lambda * mask.iter().sum::<f64>() / batch.nrows() as f64;
    Ok(LossTerms {
        total: mse + sparsity,
        mse,
        sparsity,
    })
}

/// Decoder that reads a fixed set of sea positions, plus the
/// standardization it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructor {
    pub standardizer: Standardizer,
    /// Sea positions feeding the decoder, in decoder input order.
    pub input_cells: Vec<usize>,
    pub decoder: Decoder,
}

impl Reconstructor {
    fn sea_mask(&self, mask: &MaskParams) -> Result<Vec<f64>> {
        if mask.land() != self.standardizer.land() {
            return Err(Error::invalid("mask grid does not match the decoder grid"));
        }
        let w = mask.w();
        Ok(self
            .standardizer
            .sea_cells()
            .iter()
            .map(|&i| if w[i] >= 0.0 { 1.0 } else { 0.0 })
            .collect())
    }

    /// Reconstructs every snapshot of `observed` (only sensor values are read).
    pub fn reconstruct_series(&self, mask: &MaskParams, observed: &FieldSeries) -> Result<FieldSeries> {
        let m = self.sea_mask(mask)?;
        let z = self.standardizer.matrix(observed)?;
        let y = self.decoder.forward(&gather_inputs(&z, &self.input_cells, &m))?;
        let fields = y
            .column_iter()
            .map(|col| self.standardizer.destandardize(col.as_slice()))
            .collect();
        FieldSeries::new(fields, observed.stamps().to_vec())
    }

    /// Checkpoint with the mask logits, decoder blocks and standardization.
    pub fn to_checkpoint(&self, mask: &MaskParams) -> Checkpoint {
        let shape = self.standardizer.land().shape();
        let mut ckp = Checkpoint::new(shape);
        ckp.push(Section::new("MASK", vec![shape.rows, shape.cols], mask.w().to_vec()));
        let (kind, hidden) = match self.decoder.kind() {
            DecoderKind::Linear => (0.0, 0),
            DecoderKind::Mlp1 { hidden } => (1.0, hidden),
        };
        let (n_in, n_out) = (self.decoder.n_inputs(), self.decoder.n_outputs());
        ckp.push(Section::vector("DEC_META", vec![kind, hidden as f64, n_in as f64, n_out as f64]));
        ckp.push(Section::vector("DEC_COLS", self.input_cells.iter().map(|&s| s as f64).collect()));
        let p = self.decoder.params();
        let mut off = 0;
        let mut block = |name: &str, dims: Vec<usize>| {
            let len: usize = dims.iter().product();
            ckp.push(Section::new(name, dims, p[off..off + len].to_vec()));
            off += len;
        };
        if hidden > 0 {
            block("DEC_V", vec![hidden, n_in]);
            block("DEC_C", vec![hidden]);
            block("DEC_W", vec![n_out, hidden]);
        } else {
            block("DEC_W", vec![n_out, n_in]);
        }
        block("DEC_B", vec![n_out]);
        ckp.push(Section::new("STD_MU", vec![shape.rows, shape.cols], self.standardizer.mu_field().into_values()));
        ckp.push(Section::new(
            "STD_SIGMA",
            vec![shape.rows, shape.cols],
            self.standardizer.sigma_field().into_values(),
        ));
        ckp
    }

    pub fn from_checkpoint(ckp: &Checkpoint) -> Result<(Self, MaskParams)> {
        let bad = |detail: String| Error::Format {
            what: "selector checkpoint",
            detail,
        };
        let w = ckp.section("MASK")?.data.clone();
        if w.len() != ckp.shape.len() {
            return Err(bad("MASK does not cover the grid".into()));
        }
        let land = LandMask::new(ckp.shape, w.iter().map(|&v| v == f64::NEG_INFINITY).collect())?;
        let mask = MaskParams::new(land.clone(), w)?;
        let meta = &ckp.section("DEC_META")?.data;
        if meta.len() != 4 {
            return Err(bad("DEC_META must hold 4 values".into()));
        }
        let (hidden, n_in, n_out) = (meta[1] as usize, meta[2] as usize, meta[3] as usize);
        let kind = match meta[0] as u8 {
            0 => DecoderKind::Linear,
            1 if hidden > 0 => DecoderKind::Mlp1 { hidden },
            _ => return Err(bad(format!("unknown decoder kind {}", meta[0]))),
        };
        let names: &[&str] = match kind {
            DecoderKind::Linear => &["DEC_W", "DEC_B"],
            DecoderKind::Mlp1 { .. } => &["DEC_V", "DEC_C", "DEC_W", "DEC_B"],
        };
        let mut theta = Vec::new();
        for n in names {
            theta.extend_from_slice(&ckp.section(n)?.data);
        }
        let decoder = Decoder::from_params(kind, n_in, n_out, theta).map_err(|e| bad(e.to_string()))?;
        let to_field = |name: &str| -> Result<Field> {
            let s = ckp.section(name)?;
            if s.data.len() != ckp.shape.len() {
                return Err(bad(format!("{name} does not cover the grid")));
            }
            Field::with_sentinels(land.clone(), s.data.clone())
        };
        let standardizer = Standardizer::from_fields(&to_field("STD_MU")?, &to_field("STD_SIGMA")?)?;
        if n_out != standardizer.n_sea() {
            return Err(bad(format!("decoder has {n_out} outputs for {} sea cells", standardizer.n_sea())));
        }
        let input_cells: Vec<usize> = ckp.section("DEC_COLS")?.data.iter().map(|&v| v as usize).collect();
        if input_cells.len() != n_in || input_cells.iter().any(|&s| s >= n_out) {
            return Err(bad("DEC_COLS inconsistent with the decoder".into()));
        }
        Ok((
            Self {
                standardizer,
                input_cells,
                decoder,
            },
            mask,
        ))
    }
}

/// Full-field estimate from the sensor values of `observed`, in physical
/// units.
pub fn reconstruct(model: &Reconstructor, mask: &MaskParams, observed: &Field) -> Result<Field> {
    let m = model.sea_mask(mask)?;
    let z = model.standardizer.standardize(observed)?;
    let x = DMatrix::from_iterator(
        model.input_cells.len(),
        1,
        model.input_cells.iter().map(|&s| z[s] * m[s]),
    );
    let y = model.decoder.forward(&x)?;
    Ok(model.standardizer.destandardize(y.as_slice()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    /// Training MSE (standardized units) at the end of the epoch.
    pub mse: f64,
    /// `lambda * mean(mask)`.
    pub sparsity: f64,
    pub sensors: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub mask: MaskParams,
    pub model: Reconstructor,
    pub wall_time: Duration,
    /// Epochs whose decoder update was rolled back for raising the loss.
    pub rejected_epochs: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mse,sparsity,sensors\n");
        for e in &self.log {
            s.push_str(&format!("{},{:.10e},{:.10e},{}\n", e.epoch, e.mse, e.sparsity, e.sensors));
        }
        s
    }

    /// First epoch (1-based count) whose MSE is at or below `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.log.iter().position(|e| e.mse <= threshold).map(|p| p + 1)
    }
}

/// Uniformly random `k0` sea cells switched on (`w = 1`), the rest off
/// (`w = -1`).
pub fn random_mask_params(land: &LandMask, k0: usize, seed: u64) -> Result<MaskParams> {
    let mut cells = land.sea_cells();
    if k0 == 0 || k0 > cells.len() {
        return Err(Error::invalid(format!("initial sensor count {k0} outside 1..={}", cells.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells.shuffle(&mut rng);
    cells.truncate(k0);
    cells.sort_unstable();
    MaskParams::from_cells(land.clone(), &cells, 1.0, -1.0)
}

fn batch_columns(z: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(z.nrows(), idx.len(), |r, c| z[(r, idx[c])])
}

fn check_finite(epoch: usize, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("training diverged at epoch {epoch}: loss {value}")))
    }
}

/// Jointly trains the mask (or concrete heads) and the decoder on the
/// standardized training series.
pub fn train(train_series: &FieldSeries, init: &MaskParams, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if train_series.is_empty() {
        return Err(Error::invalid("empty training series"));
    }
    if init.land() != train_series.land() {
        return Err(Error::invalid("initial mask grid does not match the training series"));
    }
    let standardizer = Standardizer::fit(train_series)?;
    let z = standardizer.matrix(train_series)?;
    let started = Instant::now();
    let mut report = match config.selector {
        Selector::StraightThrough | Selector::Fixed => train_mask(standardizer, &z, init, config)?,
        Selector::Concrete { k, t_start, t_end } => train_concrete(standardizer, &z, init, config, k, t_start, t_end)?,
    };
    report.wall_time = started.elapsed();
    Ok(report)
}

fn train_mask(std: Standardizer, z: &DMatrix<f64>, init: &MaskParams, config: &TrainConfig) -> Result<TrainReport> {
    let n_sea = std.n_sea();
    let t = z.ncols();
    let valid = std.valid();
    let sea_cells = std.sea_cells().to_vec();
    let mut w: Vec<f64> = sea_cells.iter().map(|&i| init.w()[i]).collect();
    // Cells off at the start never receive a reconstruction gradient (their
    // decoder columns stay zero), so the decoder only reads the initial set.
    let input_cells: Vec<usize> = (0..n_sea).filter(|&s| w[s] >= 0.0).collect();
    let mut decoder = Decoder::new(config.decoder, input_cells.len(), n_sea, seed::mix(config.seed, 1));
    let mut opt_dec = Adam::new(decoder.params().len(), config.step_size);
    let mut opt_mask = Adam::new(n_sea, config.mask_step_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, 2));
    let sea_land = LandMask::all_sea(crate::grid::GridShape::new(1, n_sea)?);
    let mut order: Vec<usize> = (0..t).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut rejected = 0;
    let binary = |w: &[f64]| -> Vec<f64> { w.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect() };

    for epoch in 0..config.epochs {
        let lambda = config.lambda_at(epoch);
        let snapshot = (decoder.clone(), opt_dec.clone());
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let zb = batch_columns(z, chunk);
            let m = binary(&w);
            let g = loss_with_grad(&decoder, &input_cells, &m, &zb, &valid, lambda)?;
            check_finite(epoch, g.terms.total)?;
            opt_dec.step(decoder.params_mut(), &g.decoder);
            if config.selector == Selector::StraightThrough {
                let gw = straight_through_grad(&sea_land, &g.mask)?;
                opt_mask.step(&mut w, &gw);
            }
        }
        let m = binary(&w);
        let mut mse = loss(&decoder, &input_cells, &m, z, &valid, 0.0)?.mse;
        check_finite(epoch, mse)?;
        let before = loss(&snapshot.0, &input_cells, &m, z, &valid, 0.0)?.mse;
        if mse > before {
            let step = opt_dec.step_size;
            (decoder, opt_dec) = snapshot;
            opt_dec.step_size = step * 0.5;
            mse = before;
            rejected += 1;
        }
        let sensors = m.iter().filter(|&&v| v > 0.0).count();
        log.push(EpochLog {
            epoch,
            lambda,
            mse,
            sparsity: lambda * sensors as f64 / n_sea as f64,
            sensors,
        });
        opt_dec.step_size *= config.decay;
        opt_mask.step_size *= config.decay;
    }

    let mut full = init.w().to_vec();
    for (s, &i) in sea_cells.iter().enumerate() {
        full[i] = w[s];
    }
    let mask = MaskParams::new(init.land().clone(), full)?;
    Ok(TrainReport {
        log,
        mask,
        model: Reconstructor {
            standardizer: std,
            input_cells,
            decoder,
        },
        wall_time: Duration::ZERO,
        rejected_epochs: rejected,
    })
}

fn train_concrete(
    std: Standardizer,
    z: &DMatrix<f64>,
    init: &MaskParams,
    config: &TrainConfig,
    k: usize,
    t_start: f64,
    t_end: f64,
) -> Result<TrainReport> {
    let n_sea = std.n_sea();
    if k > n_sea {
        return Err(Error::invalid(format!("{k} concrete heads for {n_sea} sea cells")));
    }
    let t = z.ncols();
    let valid = std.valid();
    let sea_cells = std.sea_cells().to_vec();
    let w0: Vec<f64> = sea_cells.iter().map(|&i| init.w()[i]).collect();
    let mut logits = DMatrix::from_fn(k, n_sea, |_, s| w0[s]);
    let mut decoder = Decoder::new(config.decoder, k, n_sea, seed::mix(config.seed, 1));
    let mut opt_dec = Adam::new(decoder.params().len(), config.step_size);
    let mut opt_logits = Adam::new(k * n_sea, config.mask_step_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, 2));
    let mut order: Vec<usize> = (0..t).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let sparsity_frac = k as f64 / n_sea as f64;

    for epoch in 0..config.epochs {
        let frac = if config.epochs > 1 { epoch as f64 / (config.epochs - 1) as f64 } else { 1.0 };
        let temp = t_start * (t_end / t_start).powf(frac);
        let lambda = config.lambda_at(epoch);
        order.shuffle(&mut rng);
        let (mut mse_sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let zb = batch_columns(z, chunk);
            let noise = gumbel(&mut rng, k, n_sea);
            let pi = concrete_select(&logits, temp, &noise)?;
            let x = &pi * &zb;
            let (mse, grad, dx) = decoder.mse_grad(&x, &zb, &valid)?;
            check_finite(epoch, mse)?;
            let dpi = &dx * zb.transpose();
            let mut dlogits = DMatrix::zeros(k, n_sea);
            for h in 0..k {
                let inner: f64 = (0..n_sea).map(|s| dpi[(h, s)] * pi[(h, s)]).sum();
                for s in 0..n_sea {
                    dlogits[(h, s)] = pi[(h, s)] * (dpi[(h, s)] - inner) / temp;
                }
            }
            opt_dec.step(decoder.params_mut(), &grad);
            opt_logits.step(logits.as_mut_slice(), dlogits.as_slice());
            mse_sum += mse;
            batches += 1;
        }
        log.push(EpochLog {
            epoch,
            lambda,
            mse: mse_sum / batches as f64,
            sparsity: lambda * sparsity_frac,
            sensors: k,
        });
        opt_dec.step_size *= config.decay;
        opt_logits.step_size *= config.decay;
    }

    let picks = concrete_argmax(&logits)?;
    let cells: Vec<usize> = picks.iter().map(|&s| sea_cells[s]).collect();
    let mask = MaskParams::from_cells(init.land().clone(), &cells, 1.0, -1.0)?;
    Ok(TrainReport {
        log,
        mask,
        model: Reconstructor {
            standardizer: std,
            input_cells: picks,
            decoder,
        },
        wall_time: Duration::ZERO,
        rejected_epochs: 0,
    })
}
