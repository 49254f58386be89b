use serde::{Deserialize, Serialize};

use crate::interval::Interval;
use crate::map_model::{bisect_monotone, MapSpec};

/// Interval `I` with `f^p(I) ⊆ I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicIntervalCycle {
    pub interval: Interval,
    pub period: usize,
    pub is_homterval: bool,
}

impl PeriodicIntervalCycle {
    /// The intervals `f^i(I)`, `0 <= i < p`.
    pub fn orbit(&self, map: &MapSpec) -> Vec<Interval> {
        let mut out = Vec::with_capacity(self.period);
        let mut j = self.interval;
        for _ in 0..self.period {
            out.push(j);
            j = map.image(&j);
        }
        out
    }

    /// Direct check of `f^p(I) ⊆ I` with slack `tol`.
    pub fn is_invariant(&self, map: &MapSpec, tol: f64) -> bool {
        self.interval.contains_interval(&map.image_n(&self.interval, self.period), tol)
    }
}

/// Nested restrictive intervals around an extremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub critical_point: f64,
    pub levels: Vec<PeriodicIntervalCycle>,
    /// The search stopped because the next period would exceed `p_max`.
    pub truncated: bool,
}

impl Cascade {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn periods(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.period).collect()
    }

    /// Cascade read as infinitely renormalizable: at least `min_depth`
    /// levels and still growing when the period cap was hit.
    pub fn looks_infinite(&self, min_depth: usize) -> bool {
        self.truncated && self.depth() >= min_depth
    }

    /// Index of the deepest level whose interval contains `x`.
    pub fn deepest_containing(&self, x: f64) -> Option<usize> {
        let mut best = None;
        for (k, l) in self.levels.iter().enumerate() {
            if l.interval.contains(x) {
                best = Some(k);
            } else {
                break;
            }
        }
        best
    }
}

const ROOT_SAMPLES: usize = 4096;

/// Maximal nested sequence of restrictive intervals `J_1 ⊃ J_2 ⊃ …` around
/// the extremum `c`. Each level is `J = [y, τ(y)]` for a fixed point `y` of
/// `g^s` (with `g = f^p` the previous level's return map), chosen as the
/// largest such interval with `g^s(J) ⊆ J` and `g^i(J)°` disjoint from `J°`
/// for `0 < i < s`. Candidate `s` are the closest-return times of `c`.
pub fn renormalization_cascade(map: &MapSpec, c: f64, p_max: usize) -> Cascade {
    let mut levels: Vec<PeriodicIntervalCycle> = Vec::new();
    let mut k_int = map.component_of(c).unwrap_or(map.hull());
    let mut p = 1usize;
    let mut truncated = false;
    loop {
        if 2 * p > p_max {
            truncated = true;
            break;
        }
        let s_max = p_max / p;
        let mut found = None;
        for s in closest_returns(map, c, p, s_max) {
            if let Some(j) = restrictive_interval(map, c, p, s, &k_int) {
                found = Some((j, s));
                break;
            }
        }
        match found {
            Some((j, s)) => {
                p *= s;
                levels.push(PeriodicIntervalCycle { interval: j, period: p, is_homterval: false });
                k_int = j;
            }
            None => break,
        }
    }
    Cascade { critical_point: c, levels, truncated }
}

/// Times `s >= 2` at which `g^s(c)` comes closer to `c` than ever before.
fn closest_returns(map: &MapSpec, c: f64, p: usize, s_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut y = c;
    let mut best = f64::INFINITY;
    for s in 1..=s_max {
        y = map.iterate_n(y, p);
        let d = (y - c).abs();
        if d < best {
            best = d;
            if s >= 2 {
                out.push(s);
            }
        }
        if d == 0.0 {
            break;
        }
    }
    out
}

fn restrictive_interval(map: &MapSpec, c: f64, p: usize, s: usize, k_int: &Interval) -> Option<Interval> {
    let period = p * s;
    let gs = |y: f64| map.iterate_n(y, period);
    let h = k_int.len() / ROOT_SAMPLES as f64;
    let mut roots = Vec::new();
    let mut prev_x = k_int.lo;
    let mut prev = gs(prev_x) - prev_x;
    for i in 1..=ROOT_SAMPLES {
        let x = if i == ROOT_SAMPLES { k_int.hi } else { k_int.lo + i as f64 * h };
        let v = gs(x) - x;
        if v == 0.0 {
            roots.push(x);
        } else if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
            roots.push(bisect_monotone(|t| gs(t) - t, prev_x, x, 0.0));
        }
        prev_x = x;
        prev = v;
    }
    let tol = 1e-6 * k_int.len();
    let mut best: Option<Interval> = None;
    for y in roots {
        if (y - c).abs() <= tol {
            continue;
        }
        let ty = map.tau(c, y);
        let j = Interval::spanning(y, ty);
        if !j.contains_open(c) || !k_int.contains_interval(&j, tol) {
            continue;
        }
        if j.len() >= k_int.len() - tol {
            continue;
        }
        if best.is_some_and(|b| b.len() >= j.len()) {
            continue;
        }
        if is_restrictive(map, &j, p, s, tol) {
            best = Some(j);
        }
    }
    best
}

fn is_restrictive(map: &MapSpec, j: &Interval, p: usize, s: usize, tol: f64) -> bool {
    let mut img = *j;
    for i in 1..=s {
        img = map.image_n(&img, p);
        if i < s && img.overlap_len(j) > tol {
            return false;
        }
    }
    j.contains_interval(&img, tol)
}
