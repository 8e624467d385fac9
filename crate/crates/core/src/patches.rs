//! Extraction of fully-sea `L x L` patches from a field series.

use crate::error::{Error, Result};
use crate::grid::{FieldSeries, GridShape, LandMask};
use crate::ordering::Ordering;

/// Patches serialized in one ordering, labelled by window center and time.
#[derive(Debug, Clone)]
pub struct PatchSet {
    ordering: Ordering,
    centers: Vec<(usize, usize)>,
    time_index: Vec<usize>,
    data: Vec<f64>,
}

impl PatchSet {
    pub fn patch_size(&self) -> usize {
        self.ordering.size()
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn dim(&self) -> usize {
        self.ordering.len()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    /// True when no fully-sea window exists; callers treat this as a flag,
    /// not an error.
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[(usize, usize)] {
        &self.centers
    }

    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }
}

/// Top-left corners of all fully-sea windows on the `stride` lattice,
/// row-major.
pub fn valid_windows(land: &LandMask, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    let shape = land.shape();
    if size == 0 || size > shape.rows.min(shape.cols) {
        return Err(Error::invalid(format!(
            "patch side {size} does not fit a {}x{} grid",
            shape.rows, shape.cols
        )));
    }
    if stride == 0 {
        return Err(Error::invalid("patch stride must be at least 1"));
    }
    let sat = land_prefix_sums(land);
    let w = shape.cols + 1;
    let mut out = Vec::new();
    for r0 in (0..=shape.rows - size).step_by(stride) {
        for c0 in (0..=shape.cols - size).step_by(stride) {
            let (r1, c1) = (r0 + size, c0 + size);
            let land_cells = sat[r1 * w + c1] + sat[r0 * w + c0] - sat[r0 * w + c1] - sat[r1 * w + c0];
            if land_cells == 0 {
                out.push((r0, c0));
            }
        }
    }
    Ok(out)
}

fn land_prefix_sums(land: &LandMask) -> Vec<usize> {
    let shape = land.shape();
    let w = shape.cols + 1;
    let mut sat = vec![0usize; (shape.rows + 1) * w];
    for r in 0..shape.rows {
        let mut row = 0;
        for c in 0..shape.cols {
            row += land.is_land(shape.index(r, c)) as usize;
            sat[(r + 1) * w + c + 1] = sat[r * w + c + 1] + row;
        }
    }
    sat
}

/// Center cell of the window whose top-left corner is `corner`.
pub fn window_center(corner: (usize, usize), size: usize) -> (usize, usize) {
    (corner.0 + size / 2, corner.1 + size / 2)
}

/// Every fully-sea window on the stride lattice, one patch per time step,
/// traversed time-major then row-major over windows.
pub fn extract_patches(
    series: &FieldSeries,
    size: usize,
    stride: usize,
    ordering: &Ordering,
) -> Result<PatchSet> {
    if ordering.size() != size {
        return Err(Error::invalid(format!(
            "ordering is for {0}x{0} patches, requested {size}x{size}",
            ordering.size()
        )));
    }
    let windows = valid_windows(series.land(), size, stride)?;
    if windows.is_empty() {
        log::warn!("no fully-sea {size}x{size} window on stride {stride}; patch set is empty");
    }
    Ok(extract_at(series, &windows, ordering, 0..series.len()))
}

/// Patches at the given window corners for the given time steps.
pub(crate) fn extract_at(
    series: &FieldSeries,
    corners: &[(usize, usize)],
    ordering: &Ordering,
    times: std::ops::Range<usize>,
) -> PatchSet {
    let size = ordering.size();
    let shape: GridShape = series.shape();
    let offsets = ordering.sequence();
    let n = corners.len() * times.len();
    let mut data = Vec::with_capacity(n * offsets.len());
    let mut centers = Vec::with_capacity(n);
    let mut time_index = Vec::with_capacity(n);
    for t in times {
        let values = series.fields()[t].values();
        for &corner in corners {
            data.extend(
                offsets
                    .iter()
                    .map(|&(r, c)| values[shape.index(corner.0 + r, corner.1 + c)]),
            );
            centers.push(window_center(corner, size));
            time_index.push(t);
        }
    }
    PatchSet {
        ordering: ordering.clone(),
        centers,
        time_index,
        data,
    }
}
