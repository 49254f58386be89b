use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttractorClass, AttractorEstimate, DecomposeConfig};
use crate::density_lab::GridSet;
use crate::interval::Interval;
use crate::map_model::MapSpec;
use crate::orbit_engine::Classifier;
use crate::rng::substream;

/// Cells visited at least `visit_min` times, summed over the orbits of
/// `starts`, each run `steps` points after `burn_in`.
pub fn visit_support(map: &MapSpec, starts: &[f64], burn_in: usize, steps: usize, h: f64, visit_min: u8) -> GridSet {
    let template = GridSet::for_map(map, h);
    let n = template.len();
    let hull = map.hull();
    let scale = n as f64 / hull.len();
    let counts = starts
        .par_iter()
        .fold(
            || vec![0u8; n],
            |mut acc, &x| {
                let mut y = map.clamp(x);
                for _ in 0..burn_in {
                    y = map.clamp(map.f(y));
                }
                for _ in 0..steps {
                    let k = (((y - hull.lo) * scale) as usize).min(n - 1);
                    acc[k] = acc[k].saturating_add(1);
                    y = map.clamp(map.f(y));
                }
                acc
            },
        )
        .reduce(
            || vec![0u8; n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x = x.saturating_add(*y));
                a
            },
        );
    let mut g = template;
    for (k, &c) in counts.iter().enumerate() {
        if c >= visit_min {
            g.set(k, true);
        }
    }
    g
}

/// Cells visited at least once by one orbit after burn-in.
pub fn orbit_cells(map: &MapSpec, x: f64, burn_in: usize, steps: usize, h: f64) -> GridSet {
    let mut g = GridSet::for_map(map, h);
    let mut y = map.clamp(x);
    for _ in 0..burn_in {
        y = map.clamp(map.f(y));
    }
    for _ in 0..steps {
        g.insert(y);
        y = map.clamp(map.f(y));
    }
    g
}

/// `|A ∩ B| / |A|` in cells (1 for empty `a`).
pub fn coverage(a: &GridSet, b: &GridSet) -> f64 {
    if a.count() == 0 {
        1.0
    } else {
        a.intersection_count(b) as f64 / a.count() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringCheck {
    pub pairs: usize,
    pub passed: usize,
    /// `(J, K, first k with K covered by f^0 J ∪ … ∪ f^k J)`.
    pub witnesses: Vec<(Interval, Interval, Option<usize>)>,
}

impl CoveringCheck {
    pub fn holds(&self) -> bool {
        self.passed == self.pairs
    }
}

/// `∪_{k <= horizon} f^k J ⊇ K` for random pairs of subintervals of the
/// support runs.
pub fn covering_check(map: &MapSpec, support: &GridSet, pairs: usize, horizon: usize, seed: u64) -> CoveringCheck {
    let runs = support.intervals();
    let mut witnesses = Vec::with_capacity(pairs);
    if runs.is_empty() {
        return CoveringCheck { pairs, passed: 0, witnesses };
    }
    let mut rng = substream(seed, 0);
    let sub = |rng: &mut rand_chacha::ChaCha8Rng, frac: f64| {
        let r = runs[rng.gen_range(0..runs.len())];
        let l = r.len() * rng.gen_range(0.01..frac);
        let lo = r.lo + rng.gen::<f64>() * (r.len() - l);
        Interval { lo, hi: lo + l }
    };
    for _ in 0..pairs {
        let j = sub(&mut rng, 0.1);
        let k = sub(&mut rng, 0.5);
        let mut covered: Vec<Interval> = vec![j];
        let mut img = j;
        let mut hit = covers(&covered, &k).then_some(0);
        let mut step = 0;
        while hit.is_none() && step < horizon {
            step += 1;
            img = map.image(&img);
            covered.push(img);
            covered = merge(covered);
            if covers(&covered, &k) {
                hit = Some(step);
            }
        }
        witnesses.push((j, k, hit));
    }
    let passed = witnesses.iter().filter(|w| w.2.is_some()).count();
    CoveringCheck { pairs, passed, witnesses }
}

fn merge(mut v: Vec<Interval>) -> Vec<Interval> {
    v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for j in v {
        match out.last_mut() {
            Some(l) if j.lo <= l.hi => l.hi = l.hi.max(j.hi),
            _ => out.push(j),
        }
    }
    out
}

fn covers(u: &[Interval], k: &Interval) -> bool {
    u.iter().any(|p| p.lo <= k.lo && k.hi <= p.hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordComplexity {
    /// `(k, number of distinct itinerary words of length k)`.
    pub counts: Vec<(usize, usize)>,
    /// Least-squares slope of `ln N(k)` against `k`.
    pub exponent: f64,
    /// Word counts reached a tenth of the itinerary length, so the slope is
    /// limited by the sample rather than the dynamics.
    pub saturated: bool,
    pub consistent_with_zero_entropy: bool,
}

const WORD_LENGTHS: std::ops::RangeInclusive<usize> = 16..=32;

/// Growth of the number of distinct lap-itinerary words along one orbit.
pub fn word_complexity(map: &MapSpec, x: f64, burn_in: usize, len: usize, threshold: f64) -> WordComplexity {
    let laps = map.laps().len().max(2) as u128;
    let mut y = map.clamp(x);
    for _ in 0..burn_in {
        y = map.clamp(map.f(y));
    }
    let mut it = Vec::with_capacity(len);
    for _ in 0..len {
        it.push(map.lap_index(y).unwrap_or(0) as u128);
        y = map.clamp(map.f(y));
    }
    let counts: Vec<(usize, usize)> = WORD_LENGTHS
        .map(|k| {
            let mut seen = HashSet::new();
            for w in it.windows(k) {
                seen.insert(w.iter().fold(0u128, |a, &s| a.wrapping_mul(laps).wrapping_add(s)));
            }
            (k, seen.len())
        })
        .collect();
    let pts: Vec<(f64, f64)> = counts.iter().map(|&(k, c)| (k as f64, (c.max(1) as f64).ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let exponent = num / den;
    let saturated = counts.iter().any(|&(_, c)| c * 10 >= len);
    WordComplexity { counts, exponent, saturated, consistent_with_zero_entropy: !saturated && exponent < threshold }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Checks {
    /// Per sampled support point: share of support cells within one cell
    /// of its orbit.
    pub minimality_coverage: Vec<f64>,
    pub minimal: bool,
    /// Critical point used for the `ω(c)` comparison.
    pub critical_point: Option<f64>,
    /// Share of support cells near `ω(c)`, and of `ω(c)` cells near the
    /// support.
    pub omega_c_coverage: (f64, f64),
    pub equals_omega_c: bool,
    pub entropy: WordComplexity,
    /// Largest support intersection with another decomposition member.
    pub max_intersection_cells: usize,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyAttractorReport {
    pub klass: AttractorClass,
    /// Both verdicts when the refinement ratio lands between the A2 and
    /// A3 thresholds.
    pub candidates: Vec<AttractorClass>,
    pub covering: Option<CoveringCheck>,
    pub theorem4: Option<Theorem4Checks>,
}

/// Trichotomy for one attractor estimate. `orbit_points` are points on the
/// attractor (late orbit points of a member) and `others` the supports of
/// the other decomposition members.
pub fn classify_attractor(map: &MapSpec, a: &AttractorEstimate, orbit_points: &[f64], others: &[GridSet], cfg: &DecomposeConfig) -> ClassifyAttractorReport {
    let support = GridSet::from_rle(&a.support);
    if a.klass == AttractorClass::A1LimitCycle {
        return ClassifyAttractorReport { klass: AttractorClass::A1LimitCycle, candidates: vec![], covering: None, theorem4: None };
    }
    let ratio = a.refinement.as_ref().map_or(1.0, |r| r.shrink);
    let covering = covering_check(map, &support.coarsen(64), cfg.covering_pairs, cfg.covering_horizon, cfg.seed ^ 0xC0);
    let a2 = (ratio - 1.0).abs() <= cfg.stable_tol && covering.holds();
    let a3 = ratio >= cfg.shrink_ratio;
    let (klass, candidates) = match (a2, a3) {
        (true, false) => (AttractorClass::A2IntervalCycle, vec![]),
        (false, true) => (AttractorClass::A3Cantor, vec![]),
        _ => (AttractorClass::Ambiguous, vec![AttractorClass::A2IntervalCycle, AttractorClass::A3Cantor]),
    };
    let theorem4 = (klass != AttractorClass::A2IntervalCycle).then(|| theorem4_checks(map, &support, a, orbit_points, others, cfg));
    ClassifyAttractorReport { klass, candidates, covering: Some(covering), theorem4 }
}

fn theorem4_checks(map: &MapSpec, support: &GridSet, a: &AttractorEstimate, orbit_points: &[f64], others: &[GridSet], cfg: &DecomposeConfig) -> Theorem4Checks {
    let h = support.h();
    let steps = cfg.budget.saturating_sub(cfg.burn_in).max(1);
    let minimality_coverage: Vec<f64> = orbit_points
        .par_iter()
        .map(|&x| coverage(support, &orbit_cells(map, x, 0, steps, h).dilate(1)))
        .collect();
    let minimal = !minimality_coverage.is_empty() && minimality_coverage.iter().all(|&c| c >= cfg.coverage);
    let critical_point = a.contained_critical_points.first().copied();
    let omega_c_coverage = match critical_point {
        Some(c) => {
            let w = orbit_cells(map, c, cfg.burn_in, steps, h);
            (coverage(support, &w.dilate(1)), coverage(&w, &support.dilate(1)))
        }
        None => (0.0, 0.0),
    };
    let equals_omega_c = critical_point.is_some() && omega_c_coverage.0 >= cfg.coverage && omega_c_coverage.1 >= cfg.coverage;
    let entropy = word_complexity(map, orbit_points.first().copied().unwrap_or(map.hull().mid()), 0, steps, cfg.entropy_threshold);
    let max_intersection_cells = others.iter().map(|o| support.intersection_count(o)).max().unwrap_or(0);
    Theorem4Checks {
        minimality_coverage,
        minimal,
        critical_point,
        omega_c_coverage,
        equals_omega_c,
        entropy,
        max_intersection_cells,
        disjoint: max_intersection_cells <= 2 * cfg.orbit.p_max,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBReport {
    pub grid_h: f64,
    pub requested: usize,
    /// Λ-samples found; zero makes the check vacuous.
    pub samples: usize,
    /// Distances from each ω-support to the nearest critical point, sorted.
    pub distances: Vec<f64>,
    pub p50: Option<f64>,
    pub p99: Option<f64>,
    pub max: Option<f64>,
    pub bound: f64,
    pub vacuous: bool,
    pub holds: bool,
    /// Same distances to the nearest extremum only (diagnostic).
    pub extremum_p99: Option<f64>,
}

/// Distance from the ω-support of sampled non-trivial orbits to the
/// critical set, at grid resolution.
pub fn theorem_b_check(cl: &Classifier, n_samples: usize, budget: usize, burn_in: usize, grid_h: f64, seed: u64) -> TheoremBReport {
    let map = cl.map;
    let hull = map.hull();
    let crit: Vec<f64> = map.critical_points().iter().map(|c| c.location).collect();
    let ext: Vec<f64> = map.critical_points().iter().filter(|c| c.is_extremum()).map(|c| c.location).collect();
    let template = GridSet::for_map(map, grid_h);
    let h = template.h();
    let batch = n_samples.max(1);
    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(n_samples);
    // at most ten batches of attempts
    for b in 0..10 {
        if kept.len() >= n_samples {
            break;
        }
        let found: Vec<Option<(f64, f64)>> = (b * batch..(b + 1) * batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                let x = map.clamp(rng.gen_range(hull.lo..=hull.hi));
                if cl.classify(x, budget).tag.is_trivial() {
                    return None;
                }
                let mut y = x;
                for _ in 0..burn_in {
                    y = map.clamp(map.f(y));
                }
                let (mut dc, mut de) = (f64::INFINITY, f64::INFINITY);
                for _ in burn_in..budget {
                    let cell = template.cell_interval(template.cell_of(y));
                    let d = |c: f64| if cell.contains(c) { 0.0 } else { (cell.lo - c).abs().min((c - cell.hi).abs()) };
                    dc = crit.iter().map(|&c| d(c)).fold(dc, f64::min);
                    de = ext.iter().map(|&c| d(c)).fold(de, f64::min);
                    y = map.clamp(map.f(y));
                }
                Some((dc, de))
            })
            .collect();
        kept.extend(found.into_iter().flatten());
    }
    kept.truncate(n_samples);
    let mut distances: Vec<f64> = kept.iter().map(|k| k.0).collect();
    distances.sort_by(f64::total_cmp);
    let mut ed: Vec<f64> = kept.iter().map(|k| k.1).collect();
    ed.sort_by(f64::total_cmp);
    let q = |v: &[f64], p: f64| (!v.is_empty()).then(|| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1]);
    let bound = 16.0 * h;
    let p99 = q(&distances, 0.99);
    TheoremBReport {
        grid_h: h,
        requested: n_samples,
        samples: distances.len(),
        p50: q(&distances, 0.5),
        p99,
        max: distances.last().copied(),
        bound,
        vacuous: distances.is_empty(),
        holds: p99.map_or(true, |p| p <= bound),
        extremum_p99: q(&ed, 0.99),
        distances,
    }
}
