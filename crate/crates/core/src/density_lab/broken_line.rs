use serde::{Deserialize, Serialize};

use super::GridSet;
use crate::error::{LabError, Result};
use crate::interval::Interval;

/// Points `x_0 .. x_n`; the links are `[x_k, x_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokenLine {
    pub points: Vec<f64>,
}

/// Which links the `D(X, ε)` condition constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkReading {
    /// Links with `k >= 1`; the first link is exempt.
    SkipFirst,
    AllLinks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DVerdict {
    pub skip_first: bool,
    pub all_links: bool,
}

impl BrokenLine {
    pub fn new(points: Vec<f64>) -> Self {
        BrokenLine { points }
    }

    pub fn begin(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn links(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    /// All links non-degenerate and `[x_{k-1}, x_k] ⊂ [x_k, x_{k+1}]`.
    pub fn is_proper(&self) -> bool {
        if self.links().any(|(a, b)| a == b) {
            return false;
        }
        self.points.windows(3).all(|w| {
            let prev = Interval::spanning(w[0], w[1]);
            let next = Interval::spanning(w[1], w[2]);
            next.contains_interval(&prev, 0.0)
        })
    }
}

/// Rebuilds `line` as a proper broken line with the same ends.
///
/// The output keeps the points at which the line first leaves the hull of
/// everything before it. A record reached in the direction of the previous
/// output link extends that link from its start; a record on the other
/// side opens a new link from the current end. In both cases the new link
/// starts where some link of the input starts and contains it, so its
/// one-sided density from that start is at least the input link's.
///
/// Fails when the line ends strictly inside the hull of its earlier points:
/// no proper line can end there.
pub fn make_proper(line: &BrokenLine) -> Result<BrokenLine> {
    let pts = &line.points;
    if pts.is_empty() {
        return Err(LabError::Precondition("empty broken line".into()));
    }
    let mut out = vec![pts[0]];
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for &z in &pts[1..] {
        if z > hi || z < lo {
            let last = *out.last().unwrap();
            let same_dir = out.len() >= 2 && {
                let prev = out[out.len() - 2];
                (last - prev).signum() == (z - last).signum()
            };
            if same_dir {
                *out.last_mut().unwrap() = z;
            } else {
                out.push(z);
            }
            lo = lo.min(z);
            hi = hi.max(z);
        }
    }
    let end = line.end();
    if *out.last().unwrap() != end {
        return Err(LabError::Precondition(format!("line ends at {end}, inside the hull [{lo}, {hi}] of earlier points")));
    }
    Ok(BrokenLine { points: out })
}

/// `Dens` of every constrained non-degenerate link, seen from its earlier
/// endpoint, is at least `1 - eps`.
pub fn is_d_broken_line(line: &BrokenLine, x: &GridSet, eps: f64, reading: LinkReading) -> bool {
    let skip = match reading {
        LinkReading::SkipFirst => 1,
        LinkReading::AllLinks => 0,
    };
    line.links().skip(skip).all(|(a, b)| {
        if a == b {
            return true;
        }
        x.dens_from(a, &Interval::spanning(a, b)).map_or(false, |d| d >= 1.0 - eps)
    })
}

pub fn d_verdict(line: &BrokenLine, x: &GridSet, eps: f64) -> DVerdict {
    DVerdict {
        skip_first: is_d_broken_line(line, x, eps, LinkReading::SkipFirst),
        all_links: is_d_broken_line(line, x, eps, LinkReading::AllLinks),
    }
}

/// Smallest link density (from the earlier endpoint) over the constrained
/// links; 1 when there are none.
pub fn min_link_density(line: &BrokenLine, x: &GridSet, reading: LinkReading) -> f64 {
    let skip = match reading {
        LinkReading::SkipFirst => 1,
        LinkReading::AllLinks => 0,
    };
    line.links()
        .skip(skip)
        .filter(|(a, b)| a != b)
        .map(|(a, b)| x.dens_from(a, &Interval::spanning(a, b)).unwrap_or(0.0))
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proper_predicate() {
        assert!(BrokenLine::new(vec![0.5, 0.6, 0.3, 0.9]).is_proper());
        assert!(!BrokenLine::new(vec![0.0, 0.4, 0.8]).is_proper());
        assert!(!BrokenLine::new(vec![0.0, 0.4, 0.4]).is_proper());
        assert!(BrokenLine::new(vec![0.2, 0.7]).is_proper());
    }

    #[test]
    fn make_proper_examples() {
        let l = BrokenLine::new(vec![0.5, 0.6, 0.3, 0.9]);
        assert_eq!(make_proper(&l).unwrap(), l);
        let l = BrokenLine::new(vec![0.0, 0.5, 0.3, 0.9]);
        assert_eq!(make_proper(&l).unwrap().points, vec![0.0, 0.9]);
        let l = BrokenLine::new(vec![0.0, 0.4, 0.4, 0.8]);
        assert_eq!(make_proper(&l).unwrap().points, vec![0.0, 0.8]);
        let l = BrokenLine::new(vec![0.5, 0.6, 0.2, 0.4, 0.9]);
        assert_eq!(make_proper(&l).unwrap().points, vec![0.5, 0.6, 0.2, 0.9]);
        assert!(make_proper(&BrokenLine::new(vec![0.0, 0.5, 0.3])).is_err());
    }

    #[test]
    fn d_property_examples() {
        let span = Interval { lo: 0.0, hi: 1.0 };
        let full = GridSet::full(span, 1.0 / 1024.0);
        let l = BrokenLine::new(vec![0.1, 0.7, 0.05, 0.9]);
        assert_eq!(d_verdict(&l, &full, 0.0), DVerdict { skip_first: true, all_links: true });
        let empty = GridSet::empty(span, 1.0 / 1024.0);
        assert!(is_d_broken_line(&BrokenLine::new(vec![0.1, 0.7]), &empty, 0.1, LinkReading::SkipFirst));
        // second link [0.5, 0.0] is half empty as seen from 0.5
        let mut x = GridSet::empty(span, 1.0 / 1024.0);
        x.insert_interval(&Interval { lo: 0.0, hi: 0.2499 });
        x.insert_interval(&Interval { lo: 0.5, hi: 1.0 });
        let l = BrokenLine::new(vec![0.75, 0.5, 0.0]);
        assert!(!is_d_broken_line(&l, &x, 0.1, LinkReading::SkipFirst));
        assert!((min_link_density(&l, &x, LinkReading::SkipFirst) - 0.5).abs() < 2e-3);
        assert!(is_d_broken_line(&BrokenLine::new(vec![0.75, 0.5]), &x, 0.1, LinkReading::SkipFirst));
    }
}
