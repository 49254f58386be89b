use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::interval::Interval;
use crate::map_model::MapSpec;

/// Uniform-grid approximation of a measurable subset of an interval.
#[derive(Clone, PartialEq)]
pub struct GridSet {
    origin: f64,
    h: f64,
    bits: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for GridSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridSet")
            .field("origin", &self.origin)
            .field("h", &self.h)
            .field("cells", &self.bits.len())
            .field("set", &self.count())
            .finish()
    }
}

/// Run-length encoded export of a [`GridSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRle {
    pub origin: f64,
    pub h: f64,
    pub cells: usize,
    /// (first cell, run length) pairs
    pub runs: Vec<(usize, usize)>,
}

impl GridSet {
    /// Empty set over `span` with cell width close to `h` (the span is split
    /// into a whole number of cells).
    pub fn empty(span: Interval, h: f64) -> Self {
        let n = ((span.len() / h).round() as usize).max(1);
        GridSet {
            origin: span.lo,
            h: span.len() / n as f64,
            bits: bitvec![u64, Lsb0; 0; n],
        }
    }

    pub fn full(span: Interval, h: f64) -> Self {
        let mut g = Self::empty(span, h);
        g.bits.fill(true);
        g
    }

    /// Empty set on the hull of the phase space with `n_cells` cells.
    pub fn for_map(map: &MapSpec, h: f64) -> Self {
        Self::empty(map.hull(), h)
    }

    pub fn with_shape(&self) -> Self {
        GridSet { origin: self.origin, h: self.h, bits: bitvec![u64, Lsb0; 0; self.bits.len()] }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    pub fn span(&self) -> Interval {
        Interval { lo: self.origin, hi: self.origin + self.h * self.bits.len() as f64 }
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    /// λ-approximation: set cells times cell width.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.h
    }

    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let k = ((x - self.origin) / self.h).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.bits.len() - 1)
        }
    }

    pub fn cell_interval(&self, k: usize) -> Interval {
        Interval { lo: self.origin + k as f64 * self.h, hi: self.origin + (k + 1) as f64 * self.h }
    }

    pub fn cell_center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        self.bits[k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, v: bool) {
        self.bits.set(k, v);
    }

    #[inline]
    pub fn insert(&mut self, x: f64) {
        let k = self.cell_of(x);
        self.bits.set(k, true);
    }

    pub fn contains(&self, x: f64) -> bool {
        self.span().contains(x) && self.bits[self.cell_of(x)]
    }

    /// Cells meeting `[lo, hi]` (closed), clipped to the grid.
    pub fn cell_range(&self, j: &Interval) -> std::ops::RangeInclusive<usize> {
        self.cell_of(j.lo)..=self.cell_of(j.hi)
    }

    pub fn insert_interval(&mut self, j: &Interval) {
        let r = self.cell_range(j);
        self.bits[r].fill(true);
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    pub fn count_range(&self, r: std::ops::RangeInclusive<usize>) -> usize {
        self.bits[r].count_ones()
    }

    fn check_shape(&self, other: &GridSet) {
        assert!(
            self.bits.len() == other.bits.len() && self.origin == other.origin,
            "grid shapes differ"
        );
    }

    pub fn union_with(&mut self, other: &GridSet) {
        self.check_shape(other);
        *self.bits.as_mut_bitslice() |= other.bits.as_bitslice();
    }

    pub fn intersect_with(&mut self, other: &GridSet) {
        self.check_shape(other);
        *self.bits.as_mut_bitslice() &= other.bits.as_bitslice();
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        let mut g = self.clone();
        g.union_with(other);
        g
    }

    pub fn intersection(&self, other: &GridSet) -> GridSet {
        let mut g = self.clone();
        g.intersect_with(other);
        g
    }

    pub fn complement(&self) -> GridSet {
        let mut g = self.clone();
        g.bits = !g.bits;
        g
    }

    pub fn intersection_count(&self, other: &GridSet) -> usize {
        self.check_shape(other);
        self.bits
            .as_raw_slice()
            .iter()
            .zip(other.bits.as_raw_slice())
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn symmetric_difference_measure(&self, other: &GridSet) -> f64 {
        self.check_shape(other);
        let n: usize = self
            .bits
            .as_raw_slice()
            .iter()
            .zip(other.bits.as_raw_slice())
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum();
        n as f64 * self.h
    }

    /// Jaccard similarity of the two masks (1 for two empty sets).
    pub fn jaccard(&self, other: &GridSet) -> f64 {
        let inter = self.intersection_count(other);
        let uni = self.count() + other.count() - inter;
        if uni == 0 {
            1.0
        } else {
            inter as f64 / uni as f64
        }
    }

    /// Same set on a grid of half the width.
    pub fn refine(&self) -> GridSet {
        let mut bits = bitvec![u64, Lsb0; 0; 2 * self.bits.len()];
        for k in self.bits.iter_ones() {
            bits.set(2 * k, true);
            bits.set(2 * k + 1, true);
        }
        GridSet { origin: self.origin, h: self.h * 0.5, bits }
    }

    /// Grid `factor` times coarser; a coarse cell is set if any sub-cell is.
    pub fn coarsen(&self, factor: usize) -> GridSet {
        let n = self.bits.len().div_ceil(factor);
        let mut bits = bitvec![u64, Lsb0; 0; n];
        for k in self.bits.iter_ones() {
            bits.set(k / factor, true);
        }
        GridSet { origin: self.origin, h: self.h * factor as f64, bits }
    }

    /// Sets every cell within `k` cells of a set cell.
    pub fn dilate(&self, k: usize) -> GridSet {
        let n = self.bits.len();
        let mut out = self.with_shape();
        let mut last_end = 0usize;
        for (start, len) in self.runs() {
            let lo = start.saturating_sub(k).max(last_end);
            let hi = (start + len + k).min(n);
            if lo < hi {
                out.bits[lo..hi].fill(true);
            }
            last_end = hi;
        }
        out
    }

    /// Maximal runs of set cells as `(first, length)`.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut k = 0;
        let n = self.bits.len();
        while k < n {
            match self.bits[k..].first_one() {
                None => break,
                Some(off) => {
                    let start = k + off;
                    let len = self.bits[start..].first_zero().unwrap_or(n - start);
                    runs.push((start, len));
                    k = start + len;
                }
            }
        }
        runs
    }

    pub fn to_rle(&self) -> GridRle {
        GridRle { origin: self.origin, h: self.h, cells: self.bits.len(), runs: self.runs() }
    }

    pub fn from_rle(rle: &GridRle) -> GridSet {
        let mut bits = bitvec![u64, Lsb0; 0; rle.cells];
        for &(s, l) in &rle.runs {
            bits[s..s + l].fill(true);
        }
        GridSet { origin: rle.origin, h: rle.h, bits }
    }

    /// Connected components as intervals.
    pub fn intervals(&self) -> Vec<Interval> {
        self.runs()
            .into_iter()
            .map(|(s, l)| Interval { lo: self.cell_interval(s).lo, hi: self.cell_interval(s + l - 1).hi })
            .collect()
    }

    /// Distance from `x` to the nearest set cell centre-interval (0 inside).
    pub fn distance_to(&self, x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for iv in self.intervals() {
            let d = if iv.contains(x) { 0.0 } else { (iv.lo - x).abs().min((x - iv.hi).abs()) };
            best = best.min(d);
        }
        best
    }

    /// λ(X ∩ J) with fractional end cells.
    pub fn measure_in(&self, j: &Interval) -> f64 {
        let span = self.span();
        let Some(j) = j.intersection(&span) else {
            return 0.0;
        };
        if j.len() == 0.0 {
            return 0.0;
        }
        let a = self.cell_of(j.lo);
        let b = self.cell_of(j.hi);
        if a == b {
            return if self.bits[a] { j.len() } else { 0.0 };
        }
        let mut m = 0.0;
        if self.bits[a] {
            m += self.cell_interval(a).hi - j.lo;
        }
        if self.bits[b] {
            m += j.hi - self.cell_interval(b).lo;
        }
        if b > a + 1 {
            m += self.bits[a + 1..b].count_ones() as f64 * self.h;
        }
        m
    }

    /// `dens(X|J) = λ(X ∩ J) / λ(J)`.
    pub fn dens(&self, j: &Interval) -> Result<f64> {
        if !(j.len() > 0.0) {
            return Err(LabError::Degenerate(j.lo));
        }
        Ok((self.measure_in(j) / j.len()).clamp(0.0, 1.0))
    }

    /// One-sided density `Dens_a(X|J) = sup_y dens(X|[a, y])` seen from the
    /// endpoint `a` of `J`. The supremum is attained at a cell boundary or
    /// at the far endpoint, so those are the only candidates examined.
    pub fn dens_from(&self, a: f64, j: &Interval) -> Result<f64> {
        if !(j.len() > 0.0) {
            return Err(LabError::Degenerate(j.lo));
        }
        let from_left = if a == j.lo {
            true
        } else if a == j.hi {
            false
        } else {
            return Err(LabError::Precondition(format!("{a} is not an endpoint of [{}, {}]", j.lo, j.hi)));
        };
        let mut best: f64 = 0.0;
        let mut acc = 0.0;
        if let Some(clip) = j.intersection(&self.span()) {
            let (a0, b0) = (self.cell_of(clip.lo), self.cell_of(clip.hi));
            let mut visit = |k: usize| {
                let cell = self.cell_interval(k);
                let seg_lo = cell.lo.max(clip.lo);
                let seg_hi = cell.hi.min(clip.hi);
                if seg_hi <= seg_lo {
                    return;
                }
                if self.bits[k] {
                    acc += seg_hi - seg_lo;
                }
                let reach = if from_left { seg_hi - j.lo } else { j.hi - seg_lo };
                best = best.max(acc / reach);
            };
            if from_left {
                (a0..=b0).for_each(&mut visit);
            } else {
                (a0..=b0).rev().for_each(&mut visit);
            }
        }
        Ok(best.clamp(0.0, 1.0))
    }

    /// Cells where `dens(X | ball of radius 64h) >= 0.999`.
    pub fn density_points(&self) -> GridSet {
        let n = self.bits.len();
        let r = 64usize;
        let mut prefix = vec![0u32; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] + self.bits[k] as u32;
        }
        let mut out = self.with_shape();
        for k in self.bits.iter_ones() {
            let lo = k.saturating_sub(r);
            let hi = (k + r + 1).min(n);
            let d = (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64;
            if d >= 0.999 {
                out.bits.set(k, true);
            }
        }
        out
    }

    /// Reflects the mask through `tau` at extremum `c` and ORs the result in.
    pub fn symmetrize(&self, map: &MapSpec, c: f64) -> GridSet {
        let mut out = self.clone();
        for k in self.bits.iter_ones() {
            let x = self.cell_center(k);
            if (x - c).abs() <= map.eta() {
                out.insert(map.tau(c, x));
            }
        }
        out
    }
}

/// Cell-wise closure of `seed` under forward images and preimages, `steps`
/// rounds. Images are exact interval images of whole cells, so the result
/// over-approximates the smallest completely invariant set containing
/// `seed`.
pub fn invariant_hull(map: &MapSpec, seed: &GridSet, steps: usize) -> GridSet {
    let n = seed.len();
    let cell_images: Vec<(usize, usize)> = (0..n)
        .map(|k| {
            let img = map.image(&seed.cell_interval(k));
            (seed.cell_of(img.lo), seed.cell_of(img.hi))
        })
        .collect();
    let mut cur = seed.clone();
    let mut prefix = vec![0u32; n + 1];
    let mut diff = vec![0i32; n + 1];
    for _ in 0..steps {
        for k in 0..n {
            prefix[k + 1] = prefix[k] + cur.bits[k] as u32;
        }
        diff.iter_mut().for_each(|d| *d = 0);
        for k in cur.bits.iter_ones() {
            let (a, b) = cell_images[k];
            diff[a] += 1;
            diff[b + 1] -= 1;
        }
        let mut next = cur.clone();
        let mut run = 0i32;
        for k in 0..n {
            run += diff[k];
            if run > 0 {
                next.bits.set(k, true);
            } else if !cur.bits[k] {
                let (a, b) = cell_images[k];
                if prefix[b + 1] > prefix[a] {
                    next.bits.set(k, true);
                }
            }
        }
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(h: f64) -> GridSet {
        GridSet::empty(Interval { lo: 0.0, hi: 1.0 }, h)
    }

    #[test]
    fn dens_examples() {
        let h = 1.0 / 1024.0;
        let i = Interval { lo: 0.25, hi: 0.75 };
        let full = GridSet::full(Interval { lo: 0.0, hi: 1.0 }, h);
        assert_eq!(full.dens(&i).unwrap(), 1.0);
        assert_eq!(unit(h).dens(&i).unwrap(), 0.0);
        let mut left = unit(h);
        left.insert_interval(&Interval { lo: 0.25, hi: 0.5 - h / 2.0 });
        assert!((left.dens(&i).unwrap() - 0.5).abs() <= h / i.len());
        assert!(full.dens(&Interval::point(0.3)).is_err());
    }

    #[test]
    fn one_sided_density() {
        let h = 1.0 / 1024.0;
        let i = Interval { lo: 0.0, hi: 0.5 };
        let mut near = unit(h);
        near.insert_interval(&Interval { lo: 0.0, hi: 0.05 });
        let d = near.dens_from(0.0, &i).unwrap();
        assert!(d > near.dens(&i).unwrap());
        assert_eq!(d, 1.0);

        // missing only the cell adjacent to a: sup over prefixes is (k-1)/k
        // at the longest prefix of k cells
        let mut holed = GridSet::full(Interval { lo: 0.0, hi: 1.0 }, h);
        holed.set(0, false);
        let j = Interval { lo: 0.0, hi: 64.0 * h };
        let d = holed.dens_from(0.0, &j).unwrap();
        assert!((d - 63.0 / 64.0).abs() < 1e-12, "{d}");
        // and from the right endpoint the hole is the far cell
        let mut holed_r = GridSet::full(Interval { lo: 0.0, hi: 1.0 }, h);
        holed_r.set(63, false);
        let d = holed_r.dens_from(j.hi, &j).unwrap();
        assert!((d - 63.0 / 64.0).abs() < 1e-12, "{d}");
        assert!(holed.dens_from(0.3, &j).is_err());
    }

    #[test]
    fn refine_coarsen_dilate_rle() {
        let mut g = unit(1.0 / 64.0);
        g.insert_interval(&Interval { lo: 0.1, hi: 0.2 });
        g.insert(0.9);
        let r = g.refine();
        assert_eq!(r.measure(), g.measure());
        assert_eq!(r.coarsen(2), g);
        let d = g.dilate(1);
        assert_eq!(d.count(), g.count() + 4);
        assert_eq!(GridSet::from_rle(&g.to_rle()), g);
        assert_eq!(g.runs().len(), 2);
    }

    #[test]
    fn hull_of_fixed_point_cell() {
        let u = MapSpec::logistic(4.0).unwrap();
        let mut seed = GridSet::for_map(&u, 1.0 / 256.0);
        seed.insert(0.75);
        let same = invariant_hull(&u, &seed, 0);
        assert_eq!(same, seed);
        let hull = invariant_hull(&u, &seed, 2);
        assert!(hull.contains(0.75));
        for p in u.preimages(0.75) {
            assert!(hull.contains(p));
        }
    }

    #[test]
    fn hull_of_basin_sample_covers_interval() {
        let m = MapSpec::logistic(3.2).unwrap();
        let mut seed = GridSet::for_map(&m, 1.0 / 4096.0);
        seed.insert(0.513_044_5);
        seed.insert(0.799_455_5);
        let hull = invariant_hull(&m, &seed, 20);
        assert!(hull.measure() >= 0.99, "{}", hull.measure());
    }
}
