use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries, LandMask};
use crate::io::{Checkpoint, Section};

/// Pivots below this magnitude end the sensor search.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Leading POD modes of the centered training snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    land: LandMask,
    sea_cells: Vec<usize>,
    /// Temporal mean per sea position.
    mu: Vec<f64>,
    /// `n_sea x r`, orthonormal columns.
    modes: DMatrix<f64>,
    singular_values: Vec<f64>,
    /// Squared Frobenius norm of the centered snapshot matrix.
    total_energy: f64,
    /// Sensor grid cells, in pivot order.
    sensors: Vec<usize>,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    pub fn mean_field(&self) -> Field {
        let mut v = vec![f64::NAN; self.land.shape().len()];
        for (s, &i) in self.sea_cells.iter().enumerate() {
            v[i] = self.mu[s];
        }
        Field::new(self.land.clone(), v).expect("mean is finite")
    }

    /// Share of the centered energy captured by the retained modes.
    pub fn energy_fraction(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum::<f64>() / self.total_energy
    }

    /// Runs the pivoted QR and stores the sensors. When the pivots run out
    /// early, the basis is cut to as many modes as sensors found.
    pub fn with_sensors(mut self) -> Self {
        let sensors = qr_pivot_sensors(&self);
        let r = sensors.len();
        if r < self.rank() {
            self.modes = self.modes.columns(0, r).into_owned();
            self.singular_values.truncate(r);
        }
        self.sensors = sensors;
        self
    }

    fn sea_position(&self, cell: usize) -> Option<usize> {
        self.sea_cells.binary_search(&cell).ok()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckp = Checkpoint::new(self.land.shape());
        let shape = self.land.shape();
        ckp.push(Section::new("MU", vec![shape.rows, shape.cols], self.mean_field().into_values()));
        ckp.push(Section::new("W", vec![self.modes.nrows(), self.modes.ncols()], self.modes.as_slice().to_vec()));
        ckp.push(Section::vector("SV", self.singular_values.clone()));
        ckp.push(Section::vector("SENSORS", self.sensors.iter().map(|&c| c as f64).collect()));
        ckp.push(Section::vector("ENERGY", vec![self.total_energy]));
        ckp
    }

    pub fn from_checkpoint(ckp: &Checkpoint) -> Result<Self> {
        let bad = |detail: &str| Error::Format {
            what: "POD checkpoint",
            detail: detail.to_string(),
        };
        let mu_grid = &ckp.section("MU")?.data;
        if mu_grid.len() != ckp.shape.len() {
            return Err(bad("MU does not cover the grid"));
        }
        let land = LandMask::new(ckp.shape, mu_grid.iter().map(|v| v.is_nan()).collect())?;
        let sea_cells = land.sea_cells();
        let mu: Vec<f64> = sea_cells.iter().map(|&i| mu_grid[i]).collect();
        let w = ckp.section("W")?;
        if w.dims.len() != 2 || w.dims[0] != sea_cells.len() {
            return Err(bad("W has the wrong shape"));
        }
        let modes = DMatrix::from_column_slice(w.dims[0], w.dims[1], &w.data);
        let singular_values = ckp.section("SV")?.data.clone();
        let sensors: Vec<usize> = ckp.section("SENSORS")?.data.iter().map(|&v| v as usize).collect();
        let total_energy = *ckp.section("ENERGY")?.data.first().ok_or_else(|| bad("empty ENERGY"))?;
        if singular_values.len() != modes.ncols() || (!sensors.is_empty() && sensors.len() != modes.ncols()) {
            return Err(bad("mode, singular value and sensor counts disagree"));
        }
        let basis = Self {
            land,
            sea_cells,
            mu,
            modes,
            singular_values,
            total_energy,
            sensors,
        };
        if basis.sensors.iter().any(|&c| basis.sea_position(c).is_none()) {
            return Err(bad("sensor outside the sea"));
        }
        Ok(basis)
    }
}

/// Thin SVD of the centered `n_sea x T` snapshot matrix, keeping `r` modes.
pub fn fit_pod(train: &FieldSeries, r: usize) -> Result<PodBasis> {
    let land = train.land().clone();
    let sea_cells = land.sea_cells();
    let (n, t) = (sea_cells.len(), train.len());
    if r == 0 || r > n.min(t) {
        return Err(Error::invalid(format!(
            "mode count {r} outside 1..={} (sea cells {n}, snapshots {t})",
            n.min(t)
        )));
    }
    let mut x = DMatrix::from_fn(n, t, |s, k| train.fields()[k].values()[sea_cells[s]]);
    let mu: Vec<f64> = x.row_iter().map(|row| row.sum() / t as f64).collect();
    for mut col in x.column_iter_mut() {
        for (v, m) in col.iter_mut().zip(&mu) {
            *v -= m;
        }
    }
    let total_energy = x.norm_squared();
    let svd = x.svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    order.truncate(r);
    let u = svd.u.expect("left vectors requested");
    let modes = DMatrix::from_fn(n, r, |i, j| u[(i, order[j])]);
    let singular_values: Vec<f64> = order.iter().map(|&j| svd.singular_values[j]).collect();
    if !(singular_values[0] > 0.0) {
        return Err(Error::insufficient("centered snapshots are all zero; no POD mode exists"));
    }
    Ok(PodBasis {
        land,
        sea_cells,
        mu,
        modes,
        singular_values,
        total_energy,
        sensors: Vec::new(),
    })
}

/// Greedy column-pivoted Householder QR of `W^T` (`r x n_sea`); the first
/// pivots are the sensors, returned as grid cells in pivot order.
pub fn qr_pivot_sensors(basis: &PodBasis) -> Vec<usize> {
    let mut a = basis.modes.transpose();
    let (r, n) = a.shape();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut picked = Vec::with_capacity(r);
    for k in 0..r {
        let (best, norm) = (k..n)
            .map(|j| (j, a.view((k, j), (r - k, 1)).norm()))
            .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if norm < PIVOT_TOLERANCE {
            log::warn!("pivoted QR stopped after {k} of {r} sensors: remaining pivots below {PIVOT_TOLERANCE:e}");
            break;
        }
        a.swap_columns(k, best);
        perm.swap(k, best);
        picked.push(basis.sea_cells[perm[k]]);
        // Householder reflector zeroing column k below the diagonal
        let mut v: DVector<f64> = a.view((k, k), (r - k, 1)).column(0).into_owned();
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            let mut tail = a.view_mut((k, k), (r - k, n - k));
            let proj = v.tr_mul(&tail) * (2.0 / vnorm2);
            tail -= &v * proj;
        }
    }
    picked
}

/// `mu + W (P_s W)^-1 (m - P_s mu)` from measurements at the basis's sensors.
pub fn pod_reconstruct(basis: &PodBasis, measurements: &[f64]) -> Result<Field> {
    let s = basis.sensors.len();
    if s == 0 {
        return Err(Error::invalid("basis has no sensors; run the pivoted QR first"));
    }
    if measurements.len() != s {
        return Err(Error::invalid(format!("{} measurements for {s} sensors", measurements.len())));
    }
    let pos: Vec<usize> = basis
        .sensors
        .iter()
        .map(|&c| basis.sea_position(c).expect("sensors are sea cells"))
        .collect();
    let w = &basis.modes;
    let r = w.ncols();
    let pw = DMatrix::from_fn(s, r, |i, j| w[(pos[i], j)]);
    let rhs = DVector::from_iterator(s, pos.iter().zip(measurements).map(|(&p, m)| m - basis.mu[p]));
    let coeffs = pw
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::numeric("sensor rows of the POD basis are singular"))?;
    let x = w * coeffs;
    let mut v = vec![f64::NAN; basis.land.shape().len()];
    for (p, &i) in basis.sea_cells.iter().enumerate() {
        v[i] = basis.mu[p] + x[p];
    }
    Field::new(basis.land.clone(), v)
}

/// Reconstructs each snapshot of `observed` from its values at the sensors.
pub fn pod_reconstruct_series(basis: &PodBasis, observed: &FieldSeries) -> Result<FieldSeries> {
    if observed.land() != &basis.land {
        return Err(Error::invalid("series land mask differs from the POD basis"));
    }
    let fields = observed
        .fields()
        .iter()
        .map(|f| {
            let m: Vec<f64> = basis.sensors.iter().map(|&c| f.values()[c]).collect();
            pod_reconstruct(basis, &m)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSeries::new(fields, observed.stamps().to_vec())
}
