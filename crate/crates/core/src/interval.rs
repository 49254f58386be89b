use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Closed interval `[lo, hi]` of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(LabError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Interval spanned by two points given in either order.
    pub fn spanning(a: f64, b: f64) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_open(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    /// `other ⊆ self`, allowing `tol` of slack at either end.
    pub fn contains_interval(&self, other: &Interval, tol: f64) -> bool {
        other.lo >= self.lo - tol && other.hi <= self.hi + tol
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Length of the overlap of the two interiors.
    pub fn overlap_len(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn include(&self, x: f64) -> Interval {
        Interval {
            lo: self.lo.min(x),
            hi: self.hi.max(x),
        }
    }

    pub fn expand(&self, by: f64) -> Interval {
        Interval {
            lo: self.lo - by,
            hi: self.hi + by,
        }
    }
}

/// Maximal number of intervals sharing a common point (closed intervals).
pub fn max_overlap(intervals: &[Interval]) -> usize {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * intervals.len());
    for iv in intervals {
        events.push((iv.lo, 1));
        events.push((iv.hi, -1));
    }
    // openings sort before closings at equal coordinates
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut depth = 0i32;
    let mut best = 0i32;
    for (_, d) in events {
        depth += d;
        best = best.max(depth);
    }
    best as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_reversed() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(0.3, 0.3).unwrap().is_degenerate());
    }

    #[test]
    fn overlap_counts_touching_endpoints() {
        let ivs = [
            Interval::spanning(0.0, 1.0),
            Interval::spanning(1.0, 2.0),
            Interval::spanning(3.0, 4.0),
        ];
        assert_eq!(max_overlap(&ivs), 2);
        let nested: Vec<_> = (1..=5).map(|k| Interval::spanning(0.0, k as f64)).collect();
        assert_eq!(max_overlap(&nested), 5);
        let disjoint: Vec<_> = (0..5)
            .map(|k| Interval::spanning(k as f64, k as f64 + 0.5))
            .collect();
        assert_eq!(max_overlap(&disjoint), 1);
    }
}
