use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::OrbitConfig;
use crate::map_model::MapSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Attracting,
    Parabolic,
    Repelling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEstimate {
    /// Cycle points along the orbit, starting from the smallest.
    pub points: Vec<f64>,
    pub period: usize,
    pub multiplier: f64,
    pub stability: Stability,
}

impl CycleEstimate {
    /// Builds the cycle through `z` of period `p`, rotating it to start at
    /// its smallest point.
    pub fn through(map: &MapSpec, z: f64, p: usize, tol_mult: f64) -> CycleEstimate {
        let mut pts = Vec::with_capacity(p);
        let mut y = z;
        let mut mult = 1.0;
        for _ in 0..p {
            pts.push(y);
            mult *= map.df(y);
            y = map.f(y);
        }
        let start = pts
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        pts.rotate_left(start);
        CycleEstimate { points: pts, period: p, multiplier: mult, stability: stability_of(mult, tol_mult) }
    }

    pub fn residual(&self, map: &MapSpec) -> f64 {
        self.points
            .iter()
            .map(|&z| (map.iterate_n(z, self.period) - z).abs())
            .fold(0.0, f64::max)
    }

    /// Distance from `x` to the nearest cycle point.
    pub fn distance(&self, x: f64) -> f64 {
        self.points.iter().map(|z| (z - x).abs()).fold(f64::INFINITY, f64::min)
    }
}

pub fn stability_of(mult: f64, tol_mult: f64) -> Stability {
    let m = mult.abs();
    if m < 1.0 - tol_mult {
        Stability::Attracting
    } else if (m - 1.0).abs() <= tol_mult {
        Stability::Parabolic
    } else {
        Stability::Repelling
    }
}

/// `f^p(z)` and `(f^p)'(z)`.
fn compose(map: &MapSpec, z: f64, p: usize) -> (f64, f64) {
    let mut y = z;
    let mut d = 1.0;
    for _ in 0..p {
        d *= map.df(y);
        y = map.f(y);
    }
    (y, d)
}

/// Newton iteration on `f^p(z) = z`; `None` unless the residual drops
/// below `tol`.
pub fn polish(map: &MapSpec, z0: f64, p: usize, tol: f64) -> Option<f64> {
    let mut z = z0;
    let mut last = f64::INFINITY;
    let mut strikes = 0;
    for _ in 0..100 {
        let (v, d) = compose(map, z, p);
        let g = v - z;
        let gp = d - 1.0;
        if !(g.is_finite() && gp.is_finite()) {
            return None;
        }
        if g == 0.0 || gp == 0.0 || g.abs() <= 1e-3 * tol {
            break;
        }
        // Newton must make steady progress; near repelling orbits of high
        // period it wanders instead
        if g.abs() > 0.9 * last {
            strikes += 1;
            if strikes > 2 {
                break;
            }
        }
        last = g.abs();
        let step = g / gp;
        let next = map.clamp(z - step);
        if !next.is_finite() {
            return None;
        }
        let done = (next - z).abs() <= 1e-16 * z.abs().max(1.0);
        z = next;
        if done {
            break;
        }
    }
    let (v, _) = compose(map, z, p);
    ((v - z).abs() <= tol).then_some(z)
}

fn divisors(p: usize) -> impl Iterator<Item = usize> {
    (1..p).filter(move |q| p % q == 0)
}

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    /// Looking for a near-return to `anchor` within `p_max` steps.
    Scan { anchor: f64, since: usize },
    /// A polished attracting cycle; checking that the orbit keeps tracking it.
    Verify { cycle: CycleEstimate, phase: Vec<f64>, k: usize, e0: f64, until: usize },
    /// Multiplier of modulus one: the lag differences must decay monotonically.
    /// Lag-`q` differences are compared with those `q` steps earlier, since
    /// the two sides of a flip-parabolic point decay at different rates.
    Parabolic { cycle: CycleEstimate, buf: VecDeque<f64>, diffs: VecDeque<f64>, left: usize },
}

/// Streaming limit-cycle detector. Feed orbit points in order with
/// [`CycleWatcher::push`]; returns the cycle once the tail is certified.
#[derive(Debug, Clone)]
pub struct CycleWatcher<'a> {
    map: &'a MapSpec,
    cfg: OrbitConfig,
    t: usize,
    next_checkpoint: usize,
    phase: Phase,
    cand_tol: f64,
}

impl<'a> CycleWatcher<'a> {
    pub fn new(map: &'a MapSpec, cfg: &OrbitConfig) -> Self {
        CycleWatcher {
            map,
            cfg: cfg.clone(),
            t: 0,
            next_checkpoint: 32,
            phase: Phase::Idle,
            cand_tol: cfg.cand_tol * map.hull().len(),
        }
    }

    /// Consumes the next orbit point.
    pub fn push(&mut self, x: f64) -> Option<CycleEstimate> {
        let t = self.t;
        self.t += 1;
        // fast paths: nothing to do, or scanning without a near-return
        match &self.phase {
            Phase::Idle if t < self.next_checkpoint => return None,
            Phase::Scan { anchor, since } if t > *since && t - since < self.cfg.p_max && (x - anchor).abs() > self.cand_tol => {
                return None;
            }
            _ => {}
        }
        let phase = std::mem::replace(&mut self.phase, Phase::Idle);
        let (next, found) = self.step(phase, x, t);
        self.phase = next;
        if found.is_none() && matches!(self.phase, Phase::Idle) && t >= self.next_checkpoint {
            self.phase = Phase::Scan { anchor: x, since: t };
            self.next_checkpoint = (2 * t).max(t + self.cfg.p_max + 1);
        }
        found
    }

    fn step(&self, phase: Phase, x: f64, t: usize) -> (Phase, Option<CycleEstimate>) {
        match phase {
            Phase::Idle => (Phase::Idle, None),
            Phase::Scan { anchor, since } => {
                let p = t - since;
                if p == 0 {
                    return (Phase::Scan { anchor, since }, None);
                }
                if (x - anchor).abs() <= self.cand_tol {
                    return match self.candidate(anchor, p) {
                        Some(next) => (next, None),
                        None => (Phase::Idle, None),
                    };
                }
                if p >= self.cfg.p_max {
                    (Phase::Idle, None)
                } else {
                    (Phase::Scan { anchor, since }, None)
                }
            }
            Phase::Verify { cycle, phase, k, e0, until } => {
                let err = (x - phase[k % phase.len()]).abs();
                let bound = (10.0 * e0).max(10.0 * self.cand_tol);
                if err > bound {
                    return (Phase::Idle, None);
                }
                if t >= until {
                    return if err <= e0 + 1e-12 * self.map.hull().len() {
                        (Phase::Idle, Some(cycle))
                    } else {
                        (Phase::Idle, None)
                    };
                }
                (Phase::Verify { cycle, phase, k: k + 1, e0, until }, None)
            }
            Phase::Parabolic { cycle, mut buf, mut diffs, left } => {
                let q = cycle.period;
                buf.push_back(x);
                if buf.len() <= q {
                    return (Phase::Parabolic { cycle, buf, diffs, left }, None);
                }
                let old = buf.pop_front().unwrap();
                let d = (x - old).abs();
                diffs.push_back(d);
                if diffs.len() > q {
                    let prev = diffs.pop_front().unwrap();
                    if d > prev + 1e-15 * self.map.hull().len() {
                        return (Phase::Idle, None);
                    }
                }
                if left == 0 {
                    return (Phase::Idle, Some(cycle));
                }
                (Phase::Parabolic { cycle, buf, diffs, left: left - 1 }, None)
            }
        }
    }

    /// Polishes a near-return of period `p` and decides how to certify it.
    fn candidate(&self, z: f64, p: usize) -> Option<Phase> {
        let tol = self.cfg.tol_cycle;
        let y = polish(self.map, z, p, tol)?;
        // slowly converging (parabolic) tails sit about cand_tol^(1/3) away
        if (y - z).abs() > 10.0 * self.cfg.cand_tol.cbrt() * self.map.hull().len() {
            return None;
        }
        let mut q = p;
        let mut y = y;
        let reach = 10.0 * (y - z).abs().max(self.cand_tol);
        for d in divisors(p) {
            if let Some(w) = polish(self.map, y, d, tol) {
                if (w - y).abs() <= reach {
                    q = d;
                    y = w;
                    break;
                }
            }
        }
        let cycle = CycleEstimate::through(self.map, y, q, self.cfg.tol_mult);
        let m = cycle.multiplier.abs();
        if m < 1.0 - self.cfg.parabolic_slack {
            // align the phase with the anchor: the point after z is f(y)
            let mut phase = Vec::with_capacity(q);
            let mut w = self.map.f(y);
            for _ in 0..q {
                phase.push(w);
                w = self.map.f(w);
            }
            let e0 = (z - y).abs();
            let until = self.t + (10 * q).max(64);
            Some(Phase::Verify { cycle, phase, k: 0, e0, until })
        } else if (m - 1.0).abs() <= self.cfg.parabolic_slack {
            let mut cycle = cycle;
            if cycle.stability == Stability::Repelling {
                return None;
            }
            cycle.stability = stability_of(cycle.multiplier, self.cfg.tol_mult);
            Some(Phase::Parabolic {
                cycle,
                buf: VecDeque::with_capacity(q + 1),
                diffs: VecDeque::with_capacity(q + 1),
                left: self.cfg.parabolic_window,
            })
        } else {
            None
        }
    }
}

/// Runs `orb(x)` for up to `max_iter` steps and returns the limit cycle its
/// tail converges to, if one of period at most `p_max` is certified.
pub fn detect_cycle(map: &MapSpec, x: f64, max_iter: usize, cfg: &OrbitConfig) -> Option<CycleEstimate> {
    let mut w = CycleWatcher::new(map, cfg);
    let mut y = map.clamp(x);
    for _ in 0..=max_iter {
        if let Some(c) = w.push(y) {
            return Some(c);
        }
        y = map.clamp(map.f(y));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OrbitConfig {
        OrbitConfig::default()
    }

    #[test]
    fn period_two_closed_form() {
        let a: f64 = 3.2;
        let m = MapSpec::logistic(a).unwrap();
        let c = detect_cycle(&m, 0.1, 100_000, &cfg()).expect("cycle");
        assert_eq!(c.period, 2);
        let r = ((a - 3.0) * (a + 1.0)).sqrt();
        let lo = (a + 1.0 - r) / (2.0 * a);
        let hi = (a + 1.0 + r) / (2.0 * a);
        assert!((c.points[0] - lo).abs() < 1e-8);
        assert!((c.points[1] - hi).abs() < 1e-8);
        assert!((c.multiplier - (4.0 + 2.0 * a - a * a)).abs() < 1e-8);
        assert_eq!(c.stability, Stability::Attracting);
        assert!(c.residual(&m) <= 1e-10);
    }

    #[test]
    fn superattracting_fixed_point() {
        let m = MapSpec::logistic(2.0).unwrap();
        let c = detect_cycle(&m, 0.3, 100_000, &cfg()).expect("cycle");
        assert_eq!(c.period, 1);
        assert!((c.points[0] - 0.5).abs() < 1e-10);
        assert!(c.multiplier.abs() < 1e-10);
    }

    #[test]
    fn no_cycle_for_ulam_map() {
        let m = MapSpec::logistic(4.0).unwrap();
        assert!(detect_cycle(&m, 0.123_456_789, 100_000, &cfg()).is_none());
    }

    #[test]
    fn period_three_window() {
        let m = MapSpec::logistic(3.83).unwrap();
        let c = detect_cycle(&m, 0.2, 100_000, &cfg()).expect("cycle");
        assert_eq!(c.period, 3);
    }

    #[test]
    fn parabolic_fixed_point() {
        let m = MapSpec::logistic(3.0).unwrap();
        let c = detect_cycle(&m, 0.3, 1_000_000, &cfg()).expect("cycle");
        assert_eq!(c.period, 1);
        assert!((c.points[0] - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(c.stability, Stability::Parabolic);
    }

    #[test]
    fn reported_period_is_minimal() {
        for a in [3.2, 3.5, 3.55, 3.74, 3.83] {
            let m = MapSpec::logistic(a).unwrap();
            let c = detect_cycle(&m, 0.37, 1_000_000, &cfg()).expect("cycle");
            for q in (1..c.period).filter(|q| c.period % q == 0) {
                let z = c.points[0];
                assert!((m.iterate_n(z, q) - z).abs() > cfg().tol_cycle, "a={a} period {} not minimal", c.period);
            }
        }
    }
}
