//! Sensor proposal distribution derived from an entropy map.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::EntropyField;
use crate::error::{Error, Result};
use crate::grid::{Field, GridShape, LandMask};
use crate::io::{read_bytes, write_bytes};
use crate::selector::MaskParams;

/// Default softmax temperature, nats per cell.
pub const DEFAULT_TAU: f64 = 0.2;

/// Probability per sea cell; zero on flagged cells, `NaN` on land.
#[derive(Debug, Clone)]
pub struct PriorField {
    pub p: Field,
    pub tau: f64,
}

/// `p = softmax(H / tau)` over unflagged sea cells.
pub fn sensor_prior(h: &EntropyField, tau: f64) -> Result<PriorField> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let usable: Vec<(usize, f64)> = h.usable().collect();
    if usable.is_empty() {
        return Err(Error::insufficient("entropy field has no usable sea cell"));
    }
    let max = usable.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let land = h.h.land().clone();
    let mut p = vec![0.0; land.shape().len()];
    let mut total = 0.0;
    for &(i, v) in &usable {
        p[i] = ((v - max) / tau).exp();
        total += p[i];
    }
    for &(i, _) in &usable {
        p[i] /= total;
    }
    Ok(PriorField {
        p: Field::new(land, p)?,
        tau,
    })
}

/// Distinct sensor cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSet {
    pub locations: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SensorSet {
    pub fn from_cells(shape: GridShape, cells: &[usize], seed: u64) -> Self {
        Self {
            locations: cells.iter().map(|&i| shape.coords(i)).collect(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn cells(&self, shape: GridShape) -> Vec<usize> {
        self.locations.iter().map(|&(r, c)| shape.index(r, c)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col\n");
        for (r, c) in &self.locations {
            s.push_str(&format!("{r},{c}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "sensor CSV",
            detail,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("row,col") {
            return Err(bad("missing 'row,col' header".into()));
        }
        let mut locations = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)));
            match parsed {
                Some(rc) => locations.push(rc),
                None => return Err(bad(format!("line {}: '{line}'", n + 2))),
            }
        }
        Ok(Self { locations, seed: 0 })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Format {
            what: "sensor CSV",
            detail: e.to_string(),
        })?;
        Self::from_csv(&text)
    }
}

/// `k` distinct cells drawn without replacement from `prior` by perturbing
/// `ln p` with Gumbel noise and keeping the top `k`.
pub fn sample_sensors(prior: &PriorField, k: usize, seed: u64) -> Result<SensorSet> {
    let candidates: Vec<(usize, f64)> = prior.p.sea_values().filter(|&(_, p)| p > 0.0).collect();
    if k > candidates.len() {
        return Err(Error::invalid(format!(
            "cannot draw {k} sensors from {} cells with positive probability",
            candidates.len()
        )));
    }
    let mut keyed: Vec<(f64, usize)> = gumbel_keys(prior, seed).into_iter().map(|(i, key)| (key, i)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let cells: Vec<usize> = keyed.iter().take(k).map(|&(_, i)| i).collect();
    Ok(SensorSet::from_cells(prior.p.shape(), &cells, seed))
}

/// Mask logits `w = ln p - q`, with `q` the `k0`-th largest `ln p`, so the
/// `k0` most probable sea cells start switched on. Ties at the threshold go
/// to the lower cell index; cells with `p = 0` get the smallest finite
/// logarithm instead of `-inf`.
pub fn init_mask_params(prior: &PriorField, k0: usize) -> Result<MaskParams> {
    let land = prior.p.land().clone();
    let n_sea = land.sea_count();
    if k0 == 0 || k0 > n_sea {
        return Err(Error::invalid(format!("initial sensor count {k0} outside 1..={n_sea}")));
    }
    let floor = f64::MIN_POSITIVE.ln();
    let scores = prior
        .p
        .sea_values()
        .map(|(i, p)| (i, if p > 0.0 { p.ln().max(floor) } else { floor }))
        .collect();
    shifted_logits(land, scores, k0)
}

/// Like [`init_mask_params`], but on Gumbel-perturbed log-probabilities:
/// the cells switched on are exactly `sample_sensors(prior, k0, seed)`.
/// Cells with `p = 0` sit at the floor and are never drawn ahead of others.
pub fn init_mask_params_sampled(prior: &PriorField, k0: usize, seed: u64) -> Result<MaskParams> {
    let land = prior.p.land().clone();
    let positive = prior.p.sea_values().filter(|&(_, p)| p > 0.0).count();
    if k0 == 0 || k0 > positive {
        return Err(Error::invalid(format!(
            "initial sensor count {k0} outside 1..={positive} cells with positive probability"
        )));
    }
    let floor = f64::MIN_POSITIVE.ln();
    let mut key = vec![2.0 * floor; land.shape().len()];
    for (i, k) in gumbel_keys(prior, seed) {
        key[i] = k;
    }
    let scores = land.sea_cells().into_iter().map(|i| (i, key[i])).collect();
    shifted_logits(land, scores, k0)
}

/// `ln p + Gumbel` for every sea cell with `p > 0`, in cell order.
fn gumbel_keys(prior: &PriorField, seed: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prior
        .p
        .sea_values()
        .filter(|&(_, p)| p > 0.0)
        .map(|(i, p)| {
            let u: f64 = rng.random();
            // u is in [0, 1); 1 - u avoids ln(0)
            (i, p.ln() - (-(1.0 - u).ln()).ln())
        })
        .collect()
}

/// Shifts `scores` so the `k0`-th largest sits at zero; ties at the
/// threshold go to the lower cell index.
fn shifted_logits(land: LandMask, mut ranked: Vec<(usize, f64)>, k0: usize) -> Result<MaskParams> {
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let q = ranked[k0 - 1].1;
    let mut w = vec![f64::NEG_INFINITY; land.shape().len()];
    for (rank, &(i, lp)) in ranked.iter().enumerate() {
        let v = lp - q;
        w[i] = if rank >= k0 && v >= 0.0 { -1e-12 } else { v };
    }
    MaskParams::new(land, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridShape, LandMask};

    fn entropy(values: Vec<f64>, land: Vec<bool>) -> EntropyField {
        let shape = GridShape::new(1, values.len()).unwrap();
        let land = LandMask::new(shape, land).unwrap();
        let flagged = (0..values.len()).map(|i| land.is_land(i) || !values[i].is_finite()).collect();
        EntropyField {
            h: Field::with_sentinels(land, values).unwrap(),
            flagged,
            scale: 1,
            ensemble_size: 1,
        }
    }

    fn sea(h: Vec<f64>) -> EntropyField {
        let n = h.len();
        entropy(h, vec![false; n])
    }

    #[test]
    fn uniform_entropy_gives_uniform_prior() {
        let p = sensor_prior(&sea(vec![1.3; 5]), 0.2).unwrap();
        assert!(p.p.values().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn two_cell_softmax() {
        let tau = 0.2;
        let p = sensor_prior(&sea(vec![0.0, tau * 3f64.ln()]), tau).unwrap();
        assert!((p.p.values()[0] - 0.25).abs() < 1e-12);
        assert!((p.p.values()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn tiny_temperature_concentrates() {
        let p = sensor_prior(&sea(vec![0.1, 0.5, 0.3]), 1e-6).unwrap();
        assert!(p.p.values()[1] > 1.0 - 1e-9);
    }

    #[test]
    fn flagged_and_land_cells_get_nothing() {
        let h = entropy(vec![1.0, f64::NEG_INFINITY, 2.0, 0.0], vec![false, false, false, true]);
        let p = sensor_prior(&h, 0.5).unwrap();
        assert_eq!(p.p.values()[1], 0.0);
        assert!(p.p.values()[3].is_nan());
        let total: f64 = p.p.sea_values().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let all_flagged = entropy(vec![f64::NAN, f64::NEG_INFINITY], vec![false, false]);
        assert!(matches!(sensor_prior(&all_flagged, 0.2), Err(Error::InsufficientData(_))));
        assert!(sensor_prior(&h, 0.0).is_err());
    }

    #[test]
    fn gumbel_top_k_basics() {
        let p = sensor_prior(&sea(vec![0.0, 0.5, 1.0, 2.0]), 0.2).unwrap();
        let all = sample_sensors(&p, 4, 3).unwrap();
        let mut cells = all.cells(p.p.shape());
        cells.sort();
        assert_eq!(cells, vec![0, 1, 2, 3]);
        assert!(sample_sensors(&p, 5, 3).is_err());
        assert_eq!(sample_sensors(&p, 2, 9).unwrap(), sample_sensors(&p, 2, 9).unwrap());

        let point = PriorField {
            p: Field::new(LandMask::all_sea(GridShape::new(1, 3).unwrap()), vec![0.0, 1.0, 0.0]).unwrap(),
            tau: 1.0,
        };
        for seed in 0..20 {
            assert_eq!(sample_sensors(&point, 1, seed).unwrap().locations, vec![(0, 1)]);
        }
    }

    #[test]
    fn gumbel_frequency_matches_probability() {
        let p = PriorField {
            p: Field::new(LandMask::all_sea(GridShape::new(1, 2).unwrap()), vec![0.25, 0.75]).unwrap(),
            tau: 1.0,
        };
        let n = 100_000;
        let hits = (0..n)
            .filter(|&s| sample_sensors(&p, 1, s).unwrap().locations[0] == (0, 1))
            .count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn init_turns_on_top_cells() {
        let p = sensor_prior(&sea(vec![0.3, 0.9, 0.1, 0.7, 0.5, 0.8]), 0.2).unwrap();
        let w = init_mask_params(&p, 3).unwrap();
        let on: Vec<usize> = (0..6).filter(|&i| w.w()[i] >= 0.0).collect();
        assert_eq!(on, vec![1, 3, 5]);
        let all = init_mask_params(&p, 6).unwrap();
        assert!(all.w().iter().all(|&v| v >= 0.0));
        assert!(init_mask_params(&p, 0).is_err());
        assert!(init_mask_params(&p, 7).is_err());
    }

    #[test]
    fn init_breaks_ties_by_index() {
        let p = sensor_prior(&sea(vec![1.0; 5]), 0.2).unwrap();
        let w = init_mask_params(&p, 2).unwrap();
        let on: Vec<usize> = (0..5).filter(|&i| w.w()[i] >= 0.0).collect();
        assert_eq!(on, vec![0, 1]);
    }

    #[test]
    fn init_keeps_land_off_and_zero_prior_finite() {
        let h = entropy(vec![1.0, f64::NEG_INFINITY, 2.0, 0.0], vec![false, false, false, true]);
        let p = sensor_prior(&h, 0.2).unwrap();
        let w = init_mask_params(&p, 3).unwrap();
        assert_eq!(w.w()[3], f64::NEG_INFINITY);
        assert!(w.w()[1].is_finite());
        assert_eq!(w.mask(), vec![true, true, true, false]);
    }

    #[test]
    fn sampled_init_turns_on_the_drawn_cells() {
        let h = entropy(
            vec![0.3, 0.9, f64::NAN, 0.1, 0.7, 0.5, 0.8, 0.0],
            vec![false, false, false, false, false, false, false, true],
        );
        let p = sensor_prior(&h, 0.2).unwrap();
        for seed in 0..50 {
            let w = init_mask_params_sampled(&p, 3, seed).unwrap();
            let mut drawn = sample_sensors(&p, 3, seed).unwrap().cells(p.p.shape());
            drawn.sort_unstable();
            assert_eq!(w.active_cells(), drawn);
            assert_eq!(w.w()[7], f64::NEG_INFINITY);
            assert!(w.w()[2] < 0.0 && w.w()[2].is_finite());
        }
        assert!(init_mask_params_sampled(&p, 0, 0).is_err());
        assert!(init_mask_params_sampled(&p, 7, 0).is_err());
        assert!(init_mask_params_sampled(&p, 6, 0).is_ok());
    }

    #[test]
    fn sensor_csv_round_trip() {
        let s = SensorSet {
            locations: vec![(3, 4), (0, 7)],
            seed: 0,
        };
        assert_eq!(SensorSet::from_csv(&s.to_csv()).unwrap(), s);
        assert!(SensorSet::from_csv("x,y\n").is_err());
        assert!(SensorSet::from_csv("row,col\n1;2\n").is_err());
    }
}
