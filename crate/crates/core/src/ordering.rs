//! Pixel orderings of an `L x L` patch.
//!
//! An ordering fixes the factorization order of the autoregressive patch
//! density. The spiral ordering has the property that its first `k*k`
//! cells form a contiguous `k x k` square for every `k <= L`, so one model
//! fitted at size `L` yields entropies at every smaller scale.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OrderingKind {
    Raster,
    SCurve,
    #[default]
    Spiral,
}

impl OrderingKind {
    pub fn build(self, size: usize) -> Result<Ordering> {
        match self {
            OrderingKind::Raster => raster_ordering(size),
            OrderingKind::SCurve => s_curve_ordering(size),
            OrderingKind::Spiral => spiral_ordering(size),
        }
    }
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingKind::Raster => "raster",
            OrderingKind::SCurve => "s-curve",
            OrderingKind::Spiral => "spiral",
        })
    }
}

impl FromStr for OrderingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(OrderingKind::Raster),
            "s-curve" | "s_curve" => Ok(OrderingKind::SCurve),
            "spiral" => Ok(OrderingKind::Spiral),
            other => Err(Error::invalid(format!("unknown ordering `{other}`"))),
        }
    }
}

/// A permutation of the cells of an `size x size` patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    size: usize,
    sequence: Vec<(usize, usize)>,
}

impl Ordering {
    /// Wraps an explicit sequence, checking that it visits every cell once.
    pub fn from_sequence(size: usize, sequence: Vec<(usize, usize)>) -> Result<Self> {
        check_size(size)?;
        if sequence.len() != size * size {
            return Err(Error::invalid(format!(
                "ordering of a {size}x{size} patch needs {} cells, got {}",
                size * size,
                sequence.len()
            )));
        }
        let mut seen = vec![false; size * size];
        for &(r, c) in &sequence {
            if r >= size || c >= size || std::mem::replace(&mut seen[r * size + c], true) {
                return Err(Error::invalid(format!(
                    "cell ({r},{c}) out of range or repeated"
                )));
            }
        }
        Ok(Self { size, sequence })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn sequence(&self) -> &[(usize, usize)] {
        &self.sequence
    }

    /// Row-major offsets (`r * size + c`) in ordering position.
    pub fn flat_offsets(&self) -> Vec<usize> {
        self.sequence
            .iter()
            .map(|&(r, c)| r * self.size + c)
            .collect()
    }
}

fn check_size(size: usize) -> Result<()> {
    if size == 0 {
        return Err(Error::invalid("patch side must be at least 1"));
    }
    Ok(())
}

pub fn raster_ordering(size: usize) -> Result<Ordering> {
    check_size(size)?;
    let sequence = (0..size)
        .flat_map(|r| (0..size).map(move |c| (r, c)))
        .collect();
    Ok(Ordering { size, sequence })
}

/// Boustrophedon: row-major with every odd row reversed.
pub fn s_curve_ordering(size: usize) -> Result<Ordering> {
    check_size(size)?;
    let mut sequence = Vec::with_capacity(size * size);
    for r in 0..size {
        if r % 2 == 0 {
            sequence.extend((0..size).map(|c| (r, c)));
        } else {
            sequence.extend((0..size).rev().map(|c| (r, c)));
        }
    }
    Ok(Ordering { size, sequence })
}

/// Clockwise spiral from the anchor `(ceil(L/2)-1, ceil(L/2)-1)`, starting
/// rightwards with run lengths 1,1,2,2,3,3,... Positions that fall outside
/// the patch are skipped.
pub fn spiral_ordering(size: usize) -> Result<Ordering> {
    check_size(size)?;
    const DIRS: [(i64, i64); 4] = [(0, 1), (1, 0), (0, -1), (-1, 0)];
    let n = size * size;
    let anchor = (size.div_ceil(2) - 1) as i64;
    let (mut r, mut c) = (anchor, anchor);
    let mut sequence = Vec::with_capacity(n);
    sequence.push((anchor as usize, anchor as usize));
    let in_bounds = |r: i64, c: i64| r >= 0 && c >= 0 && (r as usize) < size && (c as usize) < size;
    let mut leg = 0usize;
    while sequence.len() < n {
        let run = leg / 2 + 1;
        let (dr, dc) = DIRS[leg % 4];
        for _ in 0..run {
            r += dr;
            c += dc;
            if in_bounds(r, c) {
                sequence.push((r as usize, c as usize));
                if sequence.len() == n {
                    break;
                }
            }
        }
        leg += 1;
    }
    Ok(Ordering { size, sequence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_small_cases() {
        assert_eq!(spiral_ordering(1).unwrap().sequence(), &[(0, 0)]);
        assert_eq!(
            spiral_ordering(2).unwrap().sequence(),
            &[(0, 0), (0, 1), (1, 1), (1, 0)]
        );
        assert_eq!(
            spiral_ordering(3).unwrap().sequence(),
            &[
                (1, 1),
                (1, 2),
                (2, 2),
                (2, 1),
                (2, 0),
                (1, 0),
                (0, 0),
                (0, 1),
                (0, 2)
            ]
        );
    }

    #[test]
    fn raster_and_s_curve() {
        assert_eq!(
            raster_ordering(2).unwrap().sequence(),
            &[(0, 0), (0, 1), (1, 0), (1, 1)]
        );
        assert_eq!(
            s_curve_ordering(2).unwrap().sequence(),
            &[(0, 0), (0, 1), (1, 1), (1, 0)]
        );
        assert_eq!(s_curve_ordering(1).unwrap().sequence(), &[(0, 0)]);
    }

    #[test]
    fn zero_size_rejected() {
        for kind in [OrderingKind::Raster, OrderingKind::SCurve, OrderingKind::Spiral] {
            assert!(matches!(kind.build(0), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn every_ordering_is_a_permutation() {
        for l in 1..=16 {
            for kind in [OrderingKind::Raster, OrderingKind::SCurve, OrderingKind::Spiral] {
                let o = kind.build(l).unwrap();
                let mut cells = o.sequence().to_vec();
                cells.sort();
                let lattice: Vec<_> = (0..l).flat_map(|r| (0..l).map(move |c| (r, c))).collect();
                assert_eq!(cells, lattice, "{kind} L={l}");
                // from_sequence accepts it back
                Ordering::from_sequence(l, o.sequence().to_vec()).unwrap();
            }
        }
    }

    #[test]
    fn from_sequence_rejects_repeats() {
        assert!(Ordering::from_sequence(2, vec![(0, 0), (0, 0), (1, 0), (1, 1)]).is_err());
        assert!(Ordering::from_sequence(2, vec![(0, 0), (0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn spiral_prefixes_are_squares() {
        for l in 1..=16 {
            let o = spiral_ordering(l).unwrap();
            for k in 1..=l {
                let prefix = &o.sequence()[..k * k];
                let rmin = prefix.iter().map(|p| p.0).min().unwrap();
                let rmax = prefix.iter().map(|p| p.0).max().unwrap();
                let cmin = prefix.iter().map(|p| p.1).min().unwrap();
                let cmax = prefix.iter().map(|p| p.1).max().unwrap();
                assert_eq!(rmax - rmin + 1, k);
                assert_eq!(cmax - cmin + 1, k);
            }
        }
    }
}
