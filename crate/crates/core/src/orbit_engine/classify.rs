use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use super::cascade::{renormalization_cascade, Cascade, PeriodicIntervalCycle};
use super::cycle::{CycleEstimate, CycleWatcher};
use super::homterval::detect_homtervals;
use super::OrbitConfig;
use crate::interval::Interval;
use crate::map_model::MapSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitTag {
    AbsorbedByHomtervalCycle,
    TendsToLimitCycle,
    AbsorbedByBasicSet,
    FeigenbaumAttractor,
    BudgetExhausted,
}

impl OrbitTag {
    /// Cases (0) and (i) of the trichotomy: trivial dynamics.
    pub fn is_trivial(self) -> bool {
        matches!(self, OrbitTag::AbsorbedByHomtervalCycle | OrbitTag::TendsToLimitCycle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Homterval(PeriodicIntervalCycle),
    Cycle(CycleEstimate),
    /// Cycle of intervals enclosing a basic set (the whole phase space when
    /// `interval` is the phase-space hull and `period` is 1). The covering
    /// property is only tested on finitely many intervals, so the witness is
    /// consistent with a basic set rather than a proof of one.
    BasicSet { interval: Interval, period: usize },
    Cascade { critical_point: f64, depth: usize, entered_depth: usize, periods: Vec<usize> },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitClass {
    pub start: f64,
    pub tag: OrbitTag,
    pub witness: Witness,
    /// Iterations spent before the decision.
    pub steps: usize,
}

/// Map-level data shared by all classifications: homtervals and the
/// renormalization cascade of each extremum.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    pub map: &'a MapSpec,
    pub cfg: OrbitConfig,
    pub homtervals: Vec<PeriodicIntervalCycle>,
    pub cascades: Vec<Cascade>,
}

impl<'a> Classifier<'a> {
    pub fn new(map: &'a MapSpec, cfg: &OrbitConfig) -> Self {
        let homtervals = detect_homtervals(map, cfg.p_max, &cfg.homterval_scan());
        let cascades = map.extrema().iter().map(|&c| renormalization_cascade(map, c, cfg.p_max)).collect();
        Classifier { map, cfg: cfg.clone(), homtervals, cascades }
    }

    /// Cascades read as infinitely renormalizable.
    pub fn feigenbaum_cascades(&self) -> impl Iterator<Item = &Cascade> {
        self.cascades.iter().filter(|c| c.looks_infinite(self.cfg.cascade_min))
    }

    /// Deepest cascade level over all extrema.
    pub fn max_depth(&self) -> usize {
        self.cascades.iter().map(Cascade::depth).max().unwrap_or(0)
    }

    /// Decides which case of the trichotomy `orb(x)` falls into. The orbit
    /// is run until a cycle is certified, a homterval is entered, or its
    /// coarse visit signature is stable across a doubling window.
    pub fn classify(&self, x: f64, budget: usize) -> OrbitClass {
        self.classify_with_orbit(x, budget, |_, _| {})
    }

    /// As [`Classifier::classify`], also handing every visited point to
    /// `visit(k, x_k)`.
    pub fn classify_with_orbit(&self, x: f64, budget: usize, mut visit: impl FnMut(usize, f64)) -> OrbitClass {
        let map = self.map;
        let hull = map.hull();
        let sig_n = self.cfg.signature_cells;
        let scale = sig_n as f64 / hull.len();
        let mut watcher = CycleWatcher::new(map, &self.cfg);
        let mut entered: Vec<usize> = vec![0; self.cascades.len()];
        let mut prev_sig = bitvec![u64, Lsb0; 0; sig_n];
        let mut cur_sig = bitvec![u64, Lsb0; 0; sig_n];
        let mut window_end = self.cfg.min_window / 2;
        let mut y = map.clamp(x);
        for k in 0..=budget {
            visit(k, y);
            for h in &self.homtervals {
                if h.interval.contains_open(y) {
                    return OrbitClass { start: x, tag: OrbitTag::AbsorbedByHomtervalCycle, witness: Witness::Homterval(h.clone()), steps: k };
                }
            }
            if let Some(c) = watcher.push(y) {
                return OrbitClass { start: x, tag: OrbitTag::TendsToLimitCycle, witness: Witness::Cycle(c), steps: k };
            }
            for (ci, cas) in self.cascades.iter().enumerate() {
                let e = entered[ci];
                if e < cas.levels.len() && cas.levels[e].interval.contains(y) {
                    let deeper = cas.deepest_containing(y).map_or(0, |d| d + 1);
                    entered[ci] = e.max(deeper);
                }
            }
            let cell = (((y - hull.lo) * scale) as usize).min(sig_n - 1);
            cur_sig.set(cell, true);
            if k + 1 == window_end {
                if k + 1 >= self.cfg.min_window && signatures_agree(&prev_sig, &cur_sig) {
                    return self.decide(x, k, &entered);
                }
                std::mem::swap(&mut prev_sig, &mut cur_sig);
                cur_sig.fill(false);
                window_end *= 2;
            }
            y = map.clamp(map.f(y));
        }
        OrbitClass { start: x, tag: OrbitTag::BudgetExhausted, witness: Witness::None, steps: budget }
    }

    fn decide(&self, x: f64, k: usize, entered: &[usize]) -> OrbitClass {
        for (ci, cas) in self.cascades.iter().enumerate() {
            if cas.looks_infinite(self.cfg.cascade_min) && entered[ci] >= self.cfg.cascade_min {
                return OrbitClass {
                    start: x,
                    tag: OrbitTag::FeigenbaumAttractor,
                    witness: Witness::Cascade {
                        critical_point: cas.critical_point,
                        depth: cas.depth(),
                        entered_depth: entered[ci],
                        periods: cas.periods(),
                    },
                    steps: k,
                };
            }
        }
        // smallest entered cycle of intervals, defaulting to the phase space
        let mut witness = Witness::BasicSet { interval: self.map.hull(), period: 1 };
        let mut best_len = f64::INFINITY;
        for (ci, cas) in self.cascades.iter().enumerate() {
            if entered[ci] > 0 {
                let l = &cas.levels[entered[ci] - 1];
                if l.interval.len() < best_len {
                    best_len = l.interval.len();
                    witness = Witness::BasicSet { interval: l.interval, period: l.period };
                }
            }
        }
        OrbitClass { start: x, tag: OrbitTag::AbsorbedByBasicSet, witness, steps: k }
    }
}

/// Windows agree when they differ in at most 0.1% of the occupied cells.
fn signatures_agree(a: &BitVec<u64, Lsb0>, b: &BitVec<u64, Lsb0>) -> bool {
    let mut diff = 0usize;
    let mut union = 0usize;
    for (x, y) in a.as_raw_slice().iter().zip(b.as_raw_slice()) {
        diff += (x ^ y).count_ones() as usize;
        union += (x | y).count_ones() as usize;
    }
    union > 0 && diff * 1000 <= union
}

/// One-shot classification; builds the map-level data on every call, so
/// loops should hold a [`Classifier`] instead.
pub fn classify_orbit(map: &MapSpec, x: f64, budget: usize, cfg: &OrbitConfig) -> OrbitClass {
    Classifier::new(map, cfg).classify(x, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::FamilyHandle;

    #[test]
    fn limit_cycle_case() {
        let m = MapSpec::logistic(3.2).unwrap();
        let c = classify_orbit(&m, 0.1, 1_000_000, &OrbitConfig::default());
        assert_eq!(c.tag, OrbitTag::TendsToLimitCycle);
        match c.witness {
            Witness::Cycle(cy) => assert_eq!(cy.period, 2),
            w => panic!("{w:?}"),
        }
    }

    #[test]
    fn basic_set_case() {
        let m = MapSpec::logistic(4.0).unwrap();
        let cl = Classifier::new(&m, &OrbitConfig::default());
        for x in [0.123, 0.377, 0.71] {
            let c = cl.classify(x, 1_000_000);
            assert_eq!(c.tag, OrbitTag::AbsorbedByBasicSet);
            assert_eq!(c.witness, Witness::BasicSet { interval: Interval { lo: 0.0, hi: 1.0 }, period: 1 });
        }
    }

    #[test]
    fn feigenbaum_case() {
        let m = MapSpec::logistic(crate::FEIGENBAUM_LOGISTIC).unwrap();
        let cl = Classifier::new(&m, &OrbitConfig::default());
        for x in [0.123, 0.377, 0.71] {
            let c = cl.classify(x, 1_000_000);
            assert_eq!(c.tag, OrbitTag::FeigenbaumAttractor, "{c:?}");
        }
    }

    #[test]
    fn homterval_case() {
        let m = MapSpec::from_family(&FamilyHandle { family: "cube".into(), params: vec![] }).unwrap();
        let c = classify_orbit(&m, 0.5, 1000, &OrbitConfig::default());
        assert_eq!(c.tag, OrbitTag::AbsorbedByHomtervalCycle);
    }

    #[test]
    fn deterministic() {
        let m = MapSpec::logistic(3.7).unwrap();
        let cl = Classifier::new(&m, &OrbitConfig::default());
        assert_eq!(cl.classify(0.3, 200_000), cl.classify(0.3, 200_000));
    }
}
