use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ln_2pi_e, EntropyConfig, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::ordering::Ordering;
use crate::patches::PatchSet;
use crate::seed;

/// Gaussian density of the patches pooled around one location.
#[derive(Debug, Clone)]
pub struct PatchBin {
    pub center: (usize, usize),
    pub count: usize,
    pub mean: DVector<f64>,
    /// Lower Cholesky factor of `cov + shrinkage * I`, in ordering coordinates.
    chol: DMatrix<f64>,
    pub shrinkage: f64,
    /// The pooled samples had zero variance; the density is the shrinkage floor.
    pub degenerate: bool,
}

impl PatchBin {
    /// Shrinks `cov` by `max(rel * mean(diag), floor)` and factorizes it.
    pub fn from_moments(
        center: (usize, usize),
        count: usize,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        rel_shrinkage: f64,
        shrinkage_floor: f64,
    ) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::invalid(format!(
                "covariance is {}x{}, mean has {d} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let trace = cov.trace();
        let shrinkage = (rel_shrinkage * trace / d as f64).max(shrinkage_floor);
        let mut shrunk = cov;
        for i in 0..d {
            shrunk[(i, i)] += shrinkage;
        }
        let chol = shrunk
            .cholesky()
            .ok_or_else(|| {
                Error::numeric(format!(
                    "covariance of bin {center:?} not positive definite after shrinkage {shrinkage:e}"
                ))
            })?
            .unpack();
        Ok(Self {
            center,
            count,
            mean,
            chol,
            shrinkage,
            degenerate: !(trace > 0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// `L L^T`, i.e. the shrunk covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Whitened residuals `z = L^-1 (x - mean)` of the first `k` entries.
    fn whiten(&self, patch: &[f64], k: usize) -> Vec<f64> {
        let l = &self.chol;
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut acc = patch[i] - self.mean[i];
            for j in 0..i {
                acc -= l[(i, j)] * z[j];
            }
            z[i] = acc / l[(i, i)];
        }
        z
    }

    fn log_diag_sum(&self, k: usize) -> f64 {
        (0..k).map(|i| self.chol[(i, i)].ln()).sum()
    }
}

/// Location-binned patch densities sharing one ordering.
#[derive(Debug, Clone)]
pub struct PatchModel {
    pub ordering: Ordering,
    pub bins: Vec<PatchBin>,
}

impl PatchModel {
    pub fn new(ordering: Ordering, bins: Vec<PatchBin>) -> Result<Self> {
        if let Some(b) = bins.iter().find(|b| b.dim() != ordering.len()) {
            return Err(Error::invalid(format!(
                "bin {:?} has dimension {}, ordering has {}",
                b.center,
                b.dim(),
                ordering.len()
            )));
        }
        Ok(Self { ordering, bins })
    }

    pub fn bin(&self, index: usize) -> Result<&PatchBin> {
        self.bins.get(index).ok_or_else(|| {
            Error::invalid(format!("bin {index} out of {} bins", self.bins.len()))
        })
    }
}

/// A bin skipped for having fewer than `min_samples` patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedBin {
    pub center: (usize, usize),
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct PatchFit {
    pub model: PatchModel,
    pub dropped: Vec<DroppedBin>,
}

/// Bin centers on a `bin_stride` lattice anchored at the first window center
/// `(L/2, L/2)`, limited to centers of windows that fit in the grid.
pub fn bin_centers(shape: GridShape, patch_size: usize, bin_stride: usize) -> Vec<(usize, usize)> {
    let half = patch_size / 2;
    if patch_size > shape.rows.min(shape.cols) || bin_stride == 0 {
        return Vec::new();
    }
    let max_r = shape.rows - patch_size + half;
    let max_c = shape.cols - patch_size + half;
    (half..=max_r)
        .step_by(bin_stride)
        .flat_map(|r| (half..=max_c).step_by(bin_stride).map(move |c| (r, c)))
        .collect()
}

/// Lattice bins whose Chebyshev distance to `center` is below `stride`.
pub(crate) fn bins_near(center: (usize, usize), half: usize, stride: usize) -> impl Iterator<Item = (usize, usize)> {
    let axis = move |x: usize| {
        let off = x - half;
        let a = off / stride;
        let mut v = vec![half + a * stride];
        if off % stride != 0 {
            v.push(half + (a + 1) * stride);
        }
        v
    };
    let rows = axis(center.0);
    let cols = axis(center.1);
    rows.into_iter()
        .flat_map(move |r| cols.clone().into_iter().map(move |c| (r, c)))
}

/// Groups patches into overlapping lattice bins (Chebyshev radius
/// `bin_stride`) in deterministic center order.
pub(crate) fn group_by_bin(patches: &PatchSet, bin_stride: usize) -> BTreeMap<(usize, usize), Vec<usize>> {
    let half = patches.patch_size() / 2;
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, &c) in patches.centers().iter().enumerate() {
        for b in bins_near(c, half, bin_stride) {
            groups.entry(b).or_default().push(i);
        }
    }
    groups
}

/// MLE mean and covariance of the selected patches, shrunk and factorized.
pub(crate) fn fit_bin(
    patches: &PatchSet,
    members: &[usize],
    center: (usize, usize),
    config: &EntropyConfig,
) -> Result<PatchBin> {
    let d = patches.dim();
    let n = members.len();
    // One patch per column keeps the copy contiguous and the product a gemm.
    let mut x = DMatrix::<f64>::zeros(d, n);
    for (mut col, &i) in x.column_iter_mut().zip(members) {
        col.copy_from_slice(patches.patch(i));
    }
    let mean = DVector::from_iterator(d, x.row_iter().map(|r| r.sum() / n as f64));
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
    let cov = &x * x.transpose() / n as f64;
    PatchBin::from_moments(center, n, mean, cov, config.shrinkage, config.shrinkage_floor)
}

/// Bootstrap resample (with replacement) of `members`.
pub(crate) fn resample(members: &[usize], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..members.len())
        .map(|_| members[rng.random_range(0..members.len())])
        .collect()
}

/// Fits one Gaussian per lattice bin. With `resample_seed`, each bin is
/// fitted to a bootstrap resample of its patches.
pub fn fit_patch_model(
    patches: &PatchSet,
    config: &EntropyConfig,
    resample_seed: Option<u64>,
) -> Result<PatchFit> {
    if patches.patch_size() != config.patch_size {
        return Err(Error::invalid(format!(
            "patches are {0}x{0}, config expects {1}x{1}",
            patches.patch_size(),
            config.patch_size
        )));
    }
    let mut bins = Vec::new();
    let mut dropped = Vec::new();
    for (bin_index, (center, members)) in group_by_bin(patches, config.bin_stride).into_iter().enumerate() {
        if members.len() < config.min_samples {
            log::warn!(
                "dropping bin {center:?}: {} samples < min_samples {}",
                members.len(),
                config.min_samples
            );
            dropped.push(DroppedBin {
                center,
                count: members.len(),
            });
            continue;
        }
        let members = match resample_seed {
            Some(s) => resample(&members, seed::mix(s, bin_index as u64)),
            None => members,
        };
        bins.push(fit_bin(patches, &members, center, config)?);
    }
    Ok(PatchFit {
        model: PatchModel::new(patches.ordering().clone(), bins)?,
        dropped,
    })
}

fn check_patch(bin: &PatchBin, patch: &[f64]) -> Result<()> {
    if patch.len() != bin.dim() {
        return Err(Error::invalid(format!(
            "patch has {} values, model expects {}",
            patch.len(),
            bin.dim()
        )));
    }
    Ok(())
}

/// Negative log-likelihood (nats) of a whole patch serialized in the model's
/// ordering.
pub fn patch_nll(model: &PatchModel, bin: usize, patch: &[f64]) -> Result<f64> {
    let b = model.bin(bin)?;
    check_patch(b, patch)?;
    Ok(patch_nll_prefix(b, patch, b.dim()))
}

/// NLL of the marginal of the first `k` ordered pixels, using the leading
/// `k x k` block of the Cholesky factor.
pub fn patch_nll_prefix(bin: &PatchBin, patch: &[f64], k: usize) -> f64 {
    let z = bin.whiten(patch, k);
    k as f64 * HALF_LN_2PI + bin.log_diag_sum(k) + 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

/// Per-pixel conditional NLLs `-ln p(x_i | x_<i)` in ordering position. Each
/// conditional is Gaussian with scale `L_ii`; their sum is the joint NLL.
pub fn conditional_nlls(bin: &PatchBin, patch: &[f64]) -> Result<Vec<f64>> {
    check_patch(bin, patch)?;
    let z = bin.whiten(patch, bin.dim());
    Ok(z.iter()
        .enumerate()
        .map(|(i, zi)| HALF_LN_2PI + bin.chol[(i, i)].ln() + 0.5 * zi * zi)
        .collect())
}

fn check_scale(model: &PatchModel, scale: usize) -> Result<usize> {
    let l = model.ordering.size();
    if scale == 0 || scale > l {
        return Err(Error::invalid(format!("scale {scale} outside 1..={l}")));
    }
    Ok(scale * scale)
}

/// Closed-form entropy of the first `scale^2` ordered pixels, per cell:
/// `(k/2 ln(2 pi e) + sum_{i<k} ln L_ii) / k`.
pub fn entropy_closed_form(model: &PatchModel, bin: usize, scale: usize) -> Result<f64> {
    let k = check_scale(model, scale)?;
    Ok(closed_form_prefix(model.bin(bin)?, k))
}

pub(crate) fn closed_form_prefix(bin: &PatchBin, k: usize) -> f64 {
    (0.5 * k as f64 * ln_2pi_e() + bin.log_diag_sum(k)) / k as f64
}

/// Mean per-cell NLL of the bin's own fitting sample, without touching the
/// sample: with `S + dI = L L^T`, the average quadratic term is
/// `tr((S + dI)^-1 S) = k - d |L^-1|_F^2` on the prefix.
pub(crate) fn held_in_prefix(bin: &PatchBin, k: usize) -> f64 {
    let l = bin.chol.view((0, 0), (k, k)).into_owned();
    let inv = l
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .expect("positive Cholesky diagonal");
    let quad = k as f64 - bin.shrinkage * inv.norm_squared();
    (k as f64 * HALF_LN_2PI + bin.log_diag_sum(k) + 0.5 * quad) / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    /// Mean NLL per cell.
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
}

/// Monte-Carlo entropy: average NLL of `n` samples drawn from the bin's
/// prefix Gaussian, per cell.
pub fn entropy_monte_carlo(
    model: &PatchModel,
    bin: usize,
    scale: usize,
    n: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let k = check_scale(model, scale)?;
    if n == 0 {
        return Err(Error::invalid("Monte-Carlo entropy needs at least one sample"));
    }
    Ok(monte_carlo_prefix(model.bin(bin)?, k, n, seed))
}

pub(crate) fn monte_carlo_prefix(b: &PatchBin, k: usize, n: usize, seed: u64) -> MonteCarloEstimate {
    let l = &b.chol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; k];
    let mut x = vec![0.0; k];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..k {
            x[i] = b.mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>();
        }
        let nll = patch_nll_prefix(b, &x, k) / k as f64;
        sum += nll;
        sum_sq += nll * nll;
    }
    let mean = sum / n as f64;
    let var = if n > 1 {
        ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0)
    } else {
        0.0
    };
    MonteCarloEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::GAUSSIAN_UNIT_ENTROPY;
    use crate::grid::{Field, FieldSeries, LandMask, Stamp};
    use crate::ordering::{raster_ordering, spiral_ordering};
    use crate::patches::extract_patches;

    fn model_with(cov: DMatrix<f64>, mean: Vec<f64>, size: usize) -> PatchModel {
        let bin = PatchBin::from_moments((0, 0), 1, DVector::from_vec(mean), cov, 0.0, 0.0).unwrap();
        PatchModel::new(raster_ordering(size).unwrap(), vec![bin]).unwrap()
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    /// NLL through an explicit dense inverse and an LU determinant.
    fn dense_nll(cov: &DMatrix<f64>, mean: &[f64], x: &[f64]) -> f64 {
        let d = mean.len();
        let r = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
        let inv = cov.clone().try_inverse().unwrap();
        let quad = (r.transpose() * inv * &r)[(0, 0)];
        0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() + 0.5 * cov.clone().lu().determinant().ln() + 0.5 * quad
    }

    /// Per-pixel conditional NLLs by explicit Gaussian conditioning on the
    /// preceding pixels (Schur complements).
    fn schur_conditionals(cov: &DMatrix<f64>, mean: &[f64], x: &[f64]) -> Vec<f64> {
        let d = mean.len();
        (0..d)
            .map(|i| {
                let (mu, var) = if i == 0 {
                    (mean[0], cov[(0, 0)])
                } else {
                    let s_pp = cov.view((0, 0), (i, i)).into_owned();
                    let s_ip = cov.view((i, 0), (1, i)).into_owned();
                    let inv = s_pp.try_inverse().unwrap();
                    let r = DVector::from_iterator(i, (0..i).map(|j| x[j] - mean[j]));
                    let mu = mean[i] + (&s_ip * &inv * r)[(0, 0)];
                    let var = cov[(i, i)] - (&s_ip * &inv * s_ip.transpose())[(0, 0)];
                    (mu, var)
                };
                HALF_LN_2PI + 0.5 * var.ln() + 0.5 * (x[i] - mu).powi(2) / var
            })
            .collect()
    }

    #[test]
    fn nll_of_standard_normal_at_zero() {
        let m = model_with(DMatrix::identity(1, 1), vec![0.0], 1);
        assert!((patch_nll(&m, 0, &[0.0]).unwrap() - 0.918939).abs() < 1e-6);
        let m = model_with(DMatrix::identity(4, 4), vec![0.0; 4], 2);
        assert!((patch_nll(&m, 0, &[0.0; 4]).unwrap() - 3.675754).abs() < 1e-6);
    }

    #[test]
    fn nll_dimension_mismatch() {
        let m = model_with(DMatrix::identity(4, 4), vec![0.0; 4], 2);
        assert!(matches!(patch_nll(&m, 0, &[0.0; 3]), Err(Error::InvalidArgument(_))));
        assert!(patch_nll(&m, 1, &[0.0; 4]).is_err());
    }

    #[test]
    fn nll_matches_dense_oracle_and_conditionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d_side in 1..=3 {
            let d = d_side * d_side;
            for _ in 0..10 {
                let cov = random_spd(d, &mut rng);
                let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let m = model_with(cov.clone(), mean.clone(), d_side);
                let joint = patch_nll(&m, 0, &x).unwrap();
                let oracle = dense_nll(&cov, &mean, &x);
                assert!((joint - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{joint} {oracle}");
                let cond = conditional_nlls(&m.bins[0], &x).unwrap();
                let schur = schur_conditionals(&cov, &mean, &x);
                for (a, b) in cond.iter().zip(&schur) {
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
                }
                let sum: f64 = cond.iter().sum();
                assert!((sum - joint).abs() <= 1e-10 * joint.abs().max(1.0));
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let m = model_with(DMatrix::identity(9, 9), vec![0.0; 9], 3);
        for s in 1..=3 {
            assert!((entropy_closed_form(&m, 0, s).unwrap() - 1.418939).abs() < 1e-6);
        }
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 9.0, 16.0]));
        let m = model_with(diag, vec![0.0; 4], 2);
        assert!((entropy_closed_form(&m, 0, 1).unwrap() - 1.418939).abs() < 1e-6);
        // (4 * 1.4189385 + ln(576)/2) / 4, computed by hand
        assert!((entropy_closed_form(&m, 0, 2).unwrap() - 2.213452).abs() < 1e-6);
        assert!(entropy_closed_form(&m, 0, 0).is_err());
        assert!(entropy_closed_form(&m, 0, 3).is_err());
    }

    #[test]
    fn monte_carlo_standard_normal() {
        let m = model_with(DMatrix::identity(1, 1), vec![0.0], 1);
        let est = entropy_monte_carlo(&m, 0, 1, 100_000, 5).unwrap();
        assert!((est.mean - GAUSSIAN_UNIT_ENTROPY).abs() < 0.01);
        let a = entropy_monte_carlo(&m, 0, 1, 1, 9).unwrap();
        let b = entropy_monte_carlo(&m, 0, 1, 1, 9).unwrap();
        assert_eq!(a, b);
        assert!(entropy_monte_carlo(&m, 0, 1, 0, 9).is_err());
    }

    fn series_from(shape: GridShape, t: usize, f: impl Fn(usize, usize) -> f64) -> FieldSeries {
        let land = LandMask::all_sea(shape);
        let fields = (0..t)
            .map(|k| Field::new(land.clone(), (0..shape.len()).map(|i| f(k, i)).collect()).unwrap())
            .collect();
        let stamps = (0..t)
            .map(|k| Stamp::new(2000 + (k / 365) as u16, (k % 365) as u16 + 1).unwrap())
            .collect();
        FieldSeries::new(fields, stamps).unwrap()
    }

    fn cfg(l: usize) -> EntropyConfig {
        EntropyConfig {
            patch_size: l,
            scale: l,
            bin_stride: 1,
            min_samples: 10,
            shrinkage: 1e-3,
            shrinkage_floor: 1e-9,
            ..EntropyConfig::default()
        }
    }

    #[test]
    fn equal_patches_give_shrinkage_only_factor() {
        let s = series_from(GridShape::new(2, 2).unwrap(), 20, |_, i| i as f64 * 0.5);
        let p = extract_patches(&s, 2, 1, &raster_ordering(2).unwrap()).unwrap();
        let fit = fit_patch_model(&p, &cfg(2), None).unwrap();
        let b = &fit.model.bins[0];
        assert!(b.degenerate);
        assert_eq!(b.mean.as_slice(), &[0.0, 0.5, 1.0, 1.5]);
        let expect = DMatrix::<f64>::identity(4, 4) * b.shrinkage.sqrt();
        assert!((b.chol() - expect).abs().max() < 1e-15);
        assert_eq!(b.shrinkage, 1e-9);
    }

    #[test]
    fn iid_pixels_recover_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..40_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = series_from(GridShape::new(2, 2).unwrap(), 10_000, |k, i| vals[4 * k + i]);
        let p = extract_patches(&s, 2, 1, &spiral_ordering(2).unwrap()).unwrap();
        let fit = fit_patch_model(&p, &cfg(2), None).unwrap();
        let b = &fit.model.bins[0];
        let mut cov = b.covariance();
        for i in 0..4 {
            cov[(i, i)] -= b.shrinkage;
        }
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert!((cov[(i, i)] - 1.0).abs() < 0.05);
                } else {
                    assert!(cov[(i, j)].abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn small_bins_are_dropped() {
        let s = series_from(GridShape::new(2, 2).unwrap(), 5, |k, i| (k * i) as f64);
        let p = extract_patches(&s, 2, 1, &raster_ordering(2).unwrap()).unwrap();
        let fit = fit_patch_model(&p, &cfg(2), None).unwrap();
        assert!(fit.model.bins.is_empty());
        assert_eq!(fit.dropped, vec![DroppedBin { center: (1, 1), count: 5 }]);
    }

    #[test]
    fn full_patch_entropy_is_ordering_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mix = random_spd(9, &mut rng);
        let draws: Vec<f64> = (0..9 * 500).map(|_| rng.sample(StandardNormal)).collect();
        let s = series_from(GridShape::new(3, 3).unwrap(), 500, |k, i| {
            (0..9).map(|j| mix[(i, j)] * draws[9 * k + j]).sum()
        });
        let c = cfg(3);
        let fit_r = fit_patch_model(&extract_patches(&s, 3, 1, &raster_ordering(3).unwrap()).unwrap(), &c, None).unwrap();
        let fit_s = fit_patch_model(&extract_patches(&s, 3, 1, &spiral_ordering(3).unwrap()).unwrap(), &c, None).unwrap();
        let hr = entropy_closed_form(&fit_r.model, 0, 3).unwrap();
        let hs = entropy_closed_form(&fit_s.model, 0, 3).unwrap();
        assert!((hr - hs).abs() <= 1e-10 * hr.abs());
        // prefixes generally differ
        let pr = entropy_closed_form(&fit_r.model, 0, 2).unwrap();
        let ps = entropy_closed_form(&fit_s.model, 0, 2).unwrap();
        assert!((pr - ps).abs() > 1e-6);
    }

    #[test]
    fn unshrunk_in_sample_nll_equals_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let vals: Vec<f64> = (0..4 * 300).map(|_| rng.sample(StandardNormal)).collect();
        let s = series_from(GridShape::new(2, 2).unwrap(), 300, |k, i| vals[4 * k + i] * (1 + i) as f64);
        let p = extract_patches(&s, 2, 1, &spiral_ordering(2).unwrap()).unwrap();
        let c = EntropyConfig { shrinkage: 0.0, shrinkage_floor: 1e-300, ..cfg(2) };
        let fit = fit_patch_model(&p, &c, None).unwrap();
        let held_in = p.iter().map(|x| patch_nll(&fit.model, 0, x).unwrap()).sum::<f64>() / (4 * p.len()) as f64;
        let closed = entropy_closed_form(&fit.model, 0, 2).unwrap();
        assert!((held_in - closed).abs() < 1e-10);
    }

    #[test]
    fn held_in_trace_form_matches_sample_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let vals: Vec<f64> = (0..9 * 200).map(|_| rng.sample(StandardNormal)).collect();
        let s = series_from(GridShape::new(3, 3).unwrap(), 200, |t, i| {
            vals[9 * t + i] + 0.8 * vals[9 * t + (i + 1) % 9]
        });
        let p = extract_patches(&s, 3, 1, &spiral_ordering(3).unwrap()).unwrap();
        let all: Vec<usize> = (0..p.len()).collect();
        for (shrinkage, seed) in [(1e-3, 1), (0.3, 2)] {
            let c = EntropyConfig { shrinkage, ..cfg(3) };
            let members = resample(&all, seed);
            let bin = fit_bin(&p, &members, (1, 1), &c).unwrap();
            for k in [1, 4, 9] {
                let direct = members.iter().map(|&i| patch_nll_prefix(&bin, p.patch(i), k)).sum::<f64>()
                    / (members.len() * k) as f64;
                assert!((held_in_prefix(&bin, k) - direct).abs() < 1e-10, "k={k}");
            }
        }
    }

    #[test]
    fn overlapping_bins_pool_neighbours() {
        // 6x6 grid, 2x2 patches on stride 1: centers 1..=5 per axis.
        let s = series_from(GridShape::new(6, 6).unwrap(), 1, |_, i| i as f64);
        let p = extract_patches(&s, 2, 1, &raster_ordering(2).unwrap()).unwrap();
        let groups = group_by_bin(&p, 2);
        // lattice 1,3,5 per axis; interior bin (3,3) pools centers 2..=4
        assert_eq!(groups[&(3, 3)].len(), 9);
        assert_eq!(groups[&(1, 1)].len(), 4);
        assert_eq!(groups.len(), 9);
        assert_eq!(
            bin_centers(GridShape::new(6, 6).unwrap(), 2, 2),
            vec![(1, 1), (1, 3), (1, 5), (3, 1), (3, 3), (3, 5), (5, 1), (5, 3), (5, 5)]
        );
    }
}
