use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries, LandMask, Stamp, DAYS_PER_YEAR};
use crate::io::{Checkpoint, Section};

/// Day-of-year mean of the training years.
#[derive(Debug, Clone)]
pub struct Climatology {
    land: LandMask,
    day_mean: Vec<Field>,
    counts: Vec<u32>,
}

impl Climatology {
    /// Mean for `day` (1..=365).
    pub fn day(&self, day: u16) -> Result<&Field> {
        self.day_mean
            .get(usize::from(day).wrapping_sub(1))
            .ok_or_else(|| Error::invalid(format!("day of year {day} outside 1..=365")))
    }

    /// Number of training years contributing to `day`.
    pub fn count(&self, day: u16) -> Result<u32> {
        self.day(day)?;
        Ok(self.counts[usize::from(day) - 1])
    }

    pub fn land(&self) -> &LandMask {
        &self.land
    }

    /// The climatological field for every stamp.
    pub fn predict(&self, stamps: &[Stamp]) -> Result<FieldSeries> {
        let fields = stamps
            .iter()
            .map(|s| self.day(s.day).cloned())
            .collect::<Result<Vec<_>>>()?;
        FieldSeries::new(fields, stamps.to_vec())
    }

    /// Sections `DAY_MEAN` (365 x cells, land `NaN`) and `COUNTS`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let shape = self.land.shape();
        let mut ckp = Checkpoint::new(shape);
        let values = self.day_mean.iter().flat_map(|f| f.values().iter().copied()).collect();
        ckp.push(Section::new("DAY_MEAN", vec![self.day_mean.len(), shape.len()], values));
        ckp.push(Section::vector("COUNTS", self.counts.iter().map(|&c| f64::from(c)).collect()));
        ckp
    }

    pub fn from_checkpoint(ckp: &Checkpoint) -> Result<Self> {
        let bad = |detail: &str| Error::Format {
            what: "climatology checkpoint",
            detail: detail.to_string(),
        };
        let n = ckp.shape.len();
        let days = usize::from(DAYS_PER_YEAR);
        let means = ckp.section("DAY_MEAN")?;
        if means.dims != [days, n] {
            return Err(bad("DAY_MEAN must be 365 x cells"));
        }
        let counts = &ckp.section("COUNTS")?.data;
        if counts.len() != days || counts.iter().any(|&c| !(c >= 1.0 && c.fract() == 0.0 && c <= f64::from(u32::MAX))) {
            return Err(bad("COUNTS must hold 365 positive integers"));
        }
        let land = LandMask::new(ckp.shape, means.data[..n].iter().map(|v| v.is_nan()).collect())?;
        let day_mean = means
            .data
            .chunks(n)
            .map(|c| Field::new(land.clone(), c.to_vec()).map_err(|e| bad(&e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            land,
            day_mean,
            counts: counts.iter().map(|&c| c as u32).collect(),
        })
    }
}

fn day_ranges(days: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < days.len() {
        let mut j = i;
        while j + 1 < days.len() && days[j + 1] == days[j] + 1 {
            j += 1;
        }
        parts.push(if i == j {
            days[i].to_string()
        } else {
            format!("{}-{}", days[i], days[j])
        });
        i = j + 1;
    }
    parts.join(",")
}

pub fn fit_climatology(train: &FieldSeries) -> Result<Climatology> {
    let n = train.shape().len();
    let days = usize::from(DAYS_PER_YEAR);
    let mut sums = vec![vec![0.0; n]; days];
    let mut counts = vec![0u32; days];
    for (f, s) in train.fields().iter().zip(train.stamps()) {
        let d = usize::from(s.day) - 1;
        counts[d] += 1;
        for (acc, v) in sums[d].iter_mut().zip(f.values()) {
            *acc += v;
        }
    }
    let missing: Vec<usize> = (0..days).filter(|&d| counts[d] == 0).map(|d| d + 1).collect();
    if !missing.is_empty() {
        return Err(Error::insufficient(format!(
            "climatology needs every day of year; missing days {}",
            day_ranges(&missing)
        )));
    }
    let land = train.land().clone();
    let day_mean = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| Field::new(land.clone(), s.into_iter().map(|v| v / f64::from(c)).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Climatology { land, day_mean, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    fn years(values: &[f64], shape: GridShape) -> FieldSeries {
        let land = LandMask::all_sea(shape);
        let mut fields = Vec::new();
        let mut stamps = Vec::new();
        for (y, &v) in values.iter().enumerate() {
            for d in 1..=365u16 {
                fields.push(Field::filled(land.clone(), v + f64::from(d) * 0.01).unwrap());
                stamps.push(Stamp::new(2000 + y as u16, d).unwrap());
            }
        }
        FieldSeries::new(fields, stamps).unwrap()
    }

    #[test]
    fn one_year_is_reproduced() {
        let s = years(&[4.0], GridShape::new(2, 2).unwrap());
        let c = fit_climatology(&s).unwrap();
        let p = c.predict(s.stamps()).unwrap();
        assert_eq!(p.fields(), s.fields());
        assert_eq!(c.count(10).unwrap(), 1);
    }

    #[test]
    fn two_years_average() {
        let s = years(&[1.0, 3.0], GridShape::new(1, 1).unwrap());
        let c = fit_climatology(&s).unwrap();
        assert!((c.day(100).unwrap().values()[0] - 3.0).abs() < 1e-12);
        assert_eq!(c.count(100).unwrap(), 2);
        assert!(c.day(0).is_err());
        assert!(c.day(366).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let shape = GridShape::new(2, 2).unwrap();
        let land = LandMask::new(shape, vec![true, false, false, false]).unwrap();
        let mut fields = Vec::new();
        let mut stamps = Vec::new();
        for d in 1..=365u16 {
            fields.push(Field::new(land.clone(), vec![0.0, 1.0, f64::from(d), -2.5]).unwrap());
            stamps.push(Stamp::new(2001, d).unwrap());
        }
        let c = fit_climatology(&FieldSeries::new(fields, stamps).unwrap()).unwrap();
        let back = Climatology::from_checkpoint(&Checkpoint::decode(&c.to_checkpoint().encode()).unwrap()).unwrap();
        assert_eq!(back.land(), c.land());
        let sea = |c: &Climatology| -> Vec<Vec<(usize, f64)>> { c.day_mean.iter().map(|f| f.sea_values().collect()).collect() };
        assert_eq!(sea(&back), sea(&c));
        assert_eq!(back.counts, c.counts);
        let mut broken = c.to_checkpoint();
        broken.sections[1].data[0] = 0.0;
        assert!(Climatology::from_checkpoint(&broken).is_err());
    }

    #[test]
    fn missing_days_are_listed() {
        let s = years(&[1.0], GridShape::new(1, 1).unwrap()).slice(0..300).unwrap();
        let err = fit_climatology(&s).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        assert!(err.to_string().contains("301-365"), "{err}");
        assert_eq!(day_ranges(&[1, 2, 3, 7, 9, 10]), "1-3,7,9-10");
    }

    #[test]
    fn day_means_minimize_train_error() {
        let shape = GridShape::new(1, 2).unwrap();
        let land = LandMask::all_sea(shape);
        let mut fields = Vec::new();
        let mut stamps = Vec::new();
        for y in 0..3u16 {
            for d in 1..=365u16 {
                let v = f64::from((y * 7 + d) % 5);
                fields.push(Field::new(land.clone(), vec![v, -v]).unwrap());
                stamps.push(Stamp::new(2000 + y, d).unwrap());
            }
        }
        let s = FieldSeries::new(fields, stamps).unwrap();
        let c = fit_climatology(&s).unwrap();
        let sse = |shift: f64, day: u16| -> f64 {
            s.fields()
                .iter()
                .zip(s.stamps())
                .filter(|(_, st)| st.day == day)
                .map(|(f, _)| (f.values()[0] - c.day(day).unwrap().values()[0] - shift).powi(2))
                .sum()
        };
        for day in [1, 50, 365] {
            assert!(sse(0.01, day) > sse(0.0, day));
            assert!(sse(-0.01, day) > sse(0.0, day));
        }
    }
}
