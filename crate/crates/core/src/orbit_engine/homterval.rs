use super::cascade::PeriodicIntervalCycle;
use crate::interval::Interval;
use crate::map_model::{bisect_monotone, MapSpec};

/// Bounds on the branch scan: highest period tried and the lap count of
/// `f^p` at which the scan stops.
#[derive(Debug, Clone, Copy)]
pub struct HomtervalScan {
    pub p_max: usize,
    pub lap_budget: usize,
    /// Iterations of each turning point's orbit used by the exclusion rule.
    pub critical_horizon: usize,
}

impl Default for HomtervalScan {
    fn default() -> Self {
        HomtervalScan { p_max: 64, lap_budget: 8192, critical_horizon: 20_000 }
    }
}

/// Maximal periodic homtervals found by scanning the monotone branches of
/// `f^p` (split at all critical points of `f^p`, inflections included) for
/// `p <= min(p_max, scan.p_max)`.
///
/// Branches whose invariant interval absorbs the orbit of a turning point
/// are left out: those intervals carry a limit cycle that attracts the
/// critical orbit and are reported through cycle detection instead.
pub fn detect_homtervals(map: &MapSpec, p_max: usize, scan: &HomtervalScan) -> Vec<PeriodicIntervalCycle> {
    let crit: Vec<f64> = map.critical_points().iter().map(|c| c.location).collect();
    let mut breaks: Vec<f64> = Vec::new();
    for comp in map.domain() {
        breaks.push(comp.lo);
        breaks.push(comp.hi);
    }
    breaks.extend(crit.iter().copied().filter(|&c| map.domain().iter().any(|d| d.contains_open(c))));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let turning_orbits: Vec<Vec<f64>> = map
        .extrema()
        .iter()
        .map(|&c| {
            let mut v = Vec::with_capacity(scan.critical_horizon);
            let mut y = c;
            for _ in 0..scan.critical_horizon {
                v.push(y);
                y = map.clamp(map.f(y));
            }
            v
        })
        .collect();

    let mut found: Vec<PeriodicIntervalCycle> = Vec::new();
    let top = p_max.min(scan.p_max);
    for p in 1..=top {
        let laps = branch_laps(map, &breaks);
        for lap in laps {
            if let Some(iv) = invariant_subinterval(map, &lap, p) {
                if found.iter().any(|h| p % h.period == 0 && h.interval.contains_interval(&iv, 1e-12)) {
                    continue;
                }
                let absorbs = turning_orbits.iter().any(|orb| orb.iter().any(|&y| iv.contains(y)));
                if absorbs {
                    continue;
                }
                found.push(PeriodicIntervalCycle { interval: iv, period: p, is_homterval: true });
            }
        }
        if p == top {
            break;
        }
        // refine the branch partition of f^p into that of f^(p+1)
        let mut next = breaks.clone();
        for w in breaks.windows(2) {
            let lap = Interval { lo: w[0], hi: w[1] };
            if lap.len() <= 0.0 || !map.in_domain(lap.mid()) {
                continue;
            }
            let (a, b) = (map.iterate_n(lap.lo, p), map.iterate_n(lap.hi, p));
            let img = Interval::spanning(a, b);
            for &c in &crit {
                if img.contains_open(c) {
                    next.push(bisect_monotone(|t| map.iterate_n(t, p), lap.lo, lap.hi, c));
                }
            }
        }
        next.sort_by(f64::total_cmp);
        next.dedup();
        breaks = next;
        if breaks.len() > scan.lap_budget {
            break;
        }
    }
    found.sort_by(|a, b| a.interval.lo.total_cmp(&b.interval.lo).then(a.period.cmp(&b.period)));
    found
}

fn branch_laps(map: &MapSpec, breaks: &[f64]) -> Vec<Interval> {
    breaks
        .windows(2)
        .map(|w| Interval { lo: w[0], hi: w[1] })
        .filter(|l| l.len() > 0.0 && map.in_domain(l.mid()))
        .collect()
}

/// Largest subinterval `I` of a monotone branch of `g = f^p` with
/// `g(I) ⊆ I`, for increasing branches. Decreasing branches are picked up
/// at period `2p`.
fn invariant_subinterval(map: &MapSpec, lap: &Interval, p: usize) -> Option<Interval> {
    let g = |t: f64| map.iterate_n(t, p);
    let (gl, gr) = (g(lap.lo), g(lap.hi));
    if gr < gl {
        return None;
    }
    let mut fixed = Vec::new();
    let samples = 64;
    let h = lap.len() / samples as f64;
    let mut px = lap.lo;
    let mut pv = gl - lap.lo;
    if pv == 0.0 {
        fixed.push(lap.lo);
    }
    for i in 1..=samples {
        let x = if i == samples { lap.hi } else { lap.lo + i as f64 * h };
        let v = g(x) - x;
        if v == 0.0 {
            fixed.push(x);
        } else if pv != 0.0 && (v > 0.0) != (pv > 0.0) {
            fixed.push(bisect_monotone(|t| g(t) - t, px, x, 0.0));
        }
        px = x;
        pv = v;
    }
    let mut left: Vec<f64> = fixed.clone();
    if gl >= lap.lo {
        left.push(lap.lo);
    }
    let mut right: Vec<f64> = fixed;
    if gr <= lap.hi {
        right.push(lap.hi);
    }
    let lo = left.into_iter().fold(f64::INFINITY, f64::min);
    let hi = right.into_iter().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo > 1e-9 * lap.len().max(1e-300)).then_some(Interval { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::FamilyHandle;

    #[test]
    fn logistic_3_2_has_none() {
        let m = MapSpec::logistic(3.2).unwrap();
        let scan = HomtervalScan { p_max: 8, ..Default::default() };
        assert!(detect_homtervals(&m, 4096, &scan).is_empty());
    }

    #[test]
    fn ulam_map_has_none() {
        let m = MapSpec::logistic(4.0).unwrap();
        assert!(detect_homtervals(&m, 4096, &HomtervalScan::default()).is_empty());
    }

    #[test]
    fn cube_map_branches() {
        let m = MapSpec::from_family(&FamilyHandle { family: "cube".into(), params: vec![] }).unwrap();
        let hs = detect_homtervals(&m, 4096, &HomtervalScan::default());
        assert_eq!(hs.len(), 2, "{hs:?}");
        assert_eq!(hs[0].interval, Interval { lo: -1.0, hi: 0.0 });
        assert_eq!(hs[1].interval, Interval { lo: 0.0, hi: 1.0 });
        assert!(hs.iter().all(|h| h.period == 1 && h.is_homterval && h.is_invariant(&m, 0.0)));
    }
}
