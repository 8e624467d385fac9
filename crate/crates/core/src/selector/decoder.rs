use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoderKind {
    /// `y = W x + b`.
    #[default]
    Linear,
    /// `y = U tanh(V x + c) + b`.
    Mlp1 { hidden: usize },
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => f.write_str("linear"),
            Self::Mlp1 { hidden } => write!(f, "mlp1:{hidden}"),
        }
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(Self::Linear);
        }
        let hidden = match s.strip_prefix("mlp1") {
            Some("") => 32,
            Some(rest) => rest
                .strip_prefix(':')
                .and_then(|h| h.parse().ok())
                .filter(|&h| h > 0)
                .ok_or_else(|| Error::invalid(format!("bad hidden width in '{s}'")))?,
            None => return Err(Error::invalid(format!("unknown decoder '{s}' (linear, mlp1[:H])"))),
        };
        Ok(Self::Mlp1 { hidden })
    }
}

/// Reconstruction operator on column batches (`n_in x B` to `n_out x B`).
///
/// Parameters live in one flat vector, column-major blocks:
/// linear `[W (n_out x n_in), b]`; mlp1 `[V (h x n_in), c, U (n_out x h), b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    kind: DecoderKind,
    n_in: usize,
    n_out: usize,
    theta: Vec<f64>,
}

impl Decoder {
    /// Zero weights, except the mlp1 input layer which is drawn from
    /// `N(0, 1/n_in)` so hidden units differ.
    pub fn new(kind: DecoderKind, n_in: usize, n_out: usize, seed: u64) -> Self {
        let len = Self::param_len(kind, n_in, n_out);
        let mut theta = vec![0.0; len];
        if let DecoderKind::Mlp1 { hidden } = kind {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Normal::new(0.0, 1.0 / (n_in.max(1) as f64).sqrt()).expect("finite scale");
            for v in &mut theta[..hidden * n_in] {
                *v = dist.sample(&mut rng);
            }
        }
        Self { kind, n_in, n_out, theta }
    }

    pub fn from_params(kind: DecoderKind, n_in: usize, n_out: usize, theta: Vec<f64>) -> Result<Self> {
        let len = Self::param_len(kind, n_in, n_out);
        if theta.len() != len {
            return Err(Error::invalid(format!(
                "{kind} decoder {n_in}->{n_out} needs {len} parameters, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite decoder parameter"));
        }
        Ok(Self { kind, n_in, n_out, theta })
    }

    fn param_len(kind: DecoderKind, n_in: usize, n_out: usize) -> usize {
        match kind {
            DecoderKind::Linear => n_out * n_in + n_out,
            DecoderKind::Mlp1 { hidden } => hidden * n_in + hidden + n_out * hidden + n_out,
        }
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn n_inputs(&self) -> usize {
        self.n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Output bias `b`.
    pub fn bias(&self) -> &[f64] {
        &self.theta[self.theta.len() - self.n_out..]
    }

    fn block(&self, offset: usize, rows: usize, cols: usize) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.theta[offset..offset + rows * cols], rows, cols)
    }

    fn add_bias(&self, y: &mut DMatrix<f64>) {
        let b = self.bias();
        for mut col in y.column_iter_mut() {
            for (v, bi) in col.iter_mut().zip(b) {
                *v += bi;
            }
        }
    }

    /// Hidden activations (mlp1 only).
    fn hidden(&self, x: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
        let v = self.block(0, h, self.n_in);
        let c = &self.theta[h * self.n_in..h * self.n_in + h];
        let mut a = v * x;
        for mut col in a.column_iter_mut() {
            for (z, ci) in col.iter_mut().zip(c) {
                *z = (*z + ci).tanh();
            }
        }
        a
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = match self.kind {
            DecoderKind::Linear => self.block(0, self.n_out, self.n_in) * x,
            DecoderKind::Mlp1 { hidden } => {
                let a = self.hidden(x, hidden);
                self.block(hidden * self.n_in + hidden, self.n_out, hidden) * a
            }
        };
        self.add_bias(&mut y);
        y
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n_in {
            return Err(Error::invalid(format!(
                "decoder takes {} inputs, got {}",
                self.n_in,
                x.nrows()
            )));
        }
        Ok(())
    }

    /// Mean squared error over valid outputs and batch columns.
    pub fn mse(&self, x: &DMatrix<f64>, target: &DMatrix<f64>, valid: &[bool]) -> Result<f64> {
        self.check_input(x)?;
        if target.nrows() != self.n_out || target.ncols() != x.ncols() || valid.len() != self.n_out {
            return Err(Error::invalid("target or validity shape does not match the decoder"));
        }
        let n_valid = valid.iter().filter(|&&v| v).count();
        if x.ncols() == 0 || n_valid == 0 {
            return Ok(0.0);
        }
        let y = self.forward_unchecked(x);
        let mut sum = 0.0;
        for (yc, tc) in y.column_iter().zip(target.column_iter()) {
            for i in (0..self.n_out).filter(|&i| valid[i]) {
                sum += (yc[i] - tc[i]).powi(2);
            }
        }
        Ok(sum / (n_valid * x.ncols()) as f64)
    }

    /// Mean squared error over valid outputs and batch columns, with its
    /// gradient w.r.t. the parameters and the inputs.
    pub fn mse_grad(
        &self,
        x: &DMatrix<f64>,
        target: &DMatrix<f64>,
        valid: &[bool],
    ) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        self.check_input(x)?;
        if target.nrows() != self.n_out || target.ncols() != x.ncols() || valid.len() != self.n_out {
            return Err(Error::invalid("target or validity shape does not match the decoder"));
        }
        let batch = x.ncols();
        let n_valid = valid.iter().filter(|&&v| v).count();
        let mut grad = vec![0.0; self.theta.len()];
        if batch == 0 || n_valid == 0 {
            return Ok((0.0, grad, DMatrix::zeros(self.n_in, batch)));
        }
        let scale = 1.0 / (n_valid * batch) as f64;

        let (y, hidden) = match self.kind {
            DecoderKind::Linear => (self.forward_unchecked(x), None),
            DecoderKind::Mlp1 { hidden } => {
                let a = self.hidden(x, hidden);
                let mut y = self.block(hidden * self.n_in + hidden, self.n_out, hidden) * &a;
                self.add_bias(&mut y);
                (y, Some((hidden, a)))
            }
        };
        let mut delta = y - target;
        let mut mse = 0.0;
        for mut col in delta.column_iter_mut() {
            for (i, d) in col.iter_mut().enumerate() {
                if valid[i] {
                    mse += *d * *d;
                    *d *= 2.0 * scale;
                } else {
                    *d = 0.0;
                }
            }
        }
        mse *= scale;

        let b_off = self.theta.len() - self.n_out;
        for col in delta.column_iter() {
            for (g, d) in grad[b_off..].iter_mut().zip(col.iter()) {
                *g += d;
            }
        }
        let dx = match hidden {
            None => {
                let dw = &delta * x.transpose();
                grad[..self.n_out * self.n_in].copy_from_slice(dw.as_slice());
                self.block(0, self.n_out, self.n_in).tr_mul(&delta)
            }
            Some((h, a)) => {
                let u_off = h * self.n_in + h;
                let du = &delta * a.transpose();
                grad[u_off..u_off + self.n_out * h].copy_from_slice(du.as_slice());
                let mut da = self.block(u_off, self.n_out, h).tr_mul(&delta);
                da.zip_apply(&a, |g, act| *g *= 1.0 - act * act);
                let dv = &da * x.transpose();
                grad[..h * self.n_in].copy_from_slice(dv.as_slice());
                for col in da.column_iter() {
                    for (g, d) in grad[h * self.n_in..u_off].iter_mut().zip(col.iter()) {
                        *g += d;
                    }
                }
                self.block(0, h, self.n_in).tr_mul(&da)
            }
        };
        Ok((mse, grad, dx))
    }
}
