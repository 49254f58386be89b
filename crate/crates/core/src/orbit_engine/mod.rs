//! Orbits, limit cycles, periodic intervals and orbit classification.

pub mod cascade;
pub mod classify;
pub mod cycle;
pub mod homterval;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cascade::{renormalization_cascade, Cascade, PeriodicIntervalCycle};
pub use classify::{classify_orbit, Classifier, OrbitClass, OrbitTag, Witness};
pub use cycle::{detect_cycle, CycleEstimate, CycleWatcher, Stability};
pub use homterval::{detect_homtervals, HomtervalScan};

use crate::density_lab::GridSet;
use crate::error::{LabError, Result};
use crate::interval::Interval;
use crate::map_model::MapSpec;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitConfig {
    pub p_max: usize,
    pub tol_cycle: f64,
    pub tol_mult: f64,
    /// Near-return distance (relative to the phase-space length) that
    /// triggers a cycle polish.
    pub cand_tol: f64,
    /// Multipliers within this distance of modulus one take the slow
    /// parabolic certification path.
    pub parabolic_slack: f64,
    pub parabolic_window: usize,
    pub cascade_min: usize,
    /// Cells of the coarse visit signature used to decide stabilization.
    pub signature_cells: usize,
    /// Orbit length before a stable signature may end a classification.
    pub min_window: usize,
    pub homterval_p_max: usize,
    pub homterval_lap_budget: usize,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            p_max: 4096,
            tol_cycle: 1e-10,
            tol_mult: 1e-6,
            cand_tol: 1e-7,
            parabolic_slack: 1e-3,
            parabolic_window: 10_000,
            cascade_min: 5,
            signature_cells: 4096,
            min_window: 65_536,
            homterval_p_max: 64,
            homterval_lap_budget: 8192,
        }
    }
}

impl OrbitConfig {
    pub fn homterval_scan(&self) -> HomtervalScan {
        HomtervalScan { p_max: self.homterval_p_max, lap_budget: self.homterval_lap_budget, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub start: f64,
    pub points: Vec<f64>,
    pub n: usize,
    /// Steps at which roundoff pushed the orbit out of the phase space and
    /// the point was clamped back.
    pub clamped_at: Vec<usize>,
}

/// `x_0 .. x_n` with `x_{k+1} = f(x_k)`.
pub fn iterate(map: &MapSpec, x: f64, n: usize) -> Result<OrbitRecord> {
    if !map.in_domain(x) {
        return Err(LabError::Domain { x });
    }
    let mut points = Vec::with_capacity(n + 1);
    let mut clamped_at = Vec::new();
    let mut y = x;
    points.push(y);
    for k in 1..=n {
        let z = map.f(y);
        y = map.clamp(z);
        if y != z {
            clamped_at.push(k);
        }
        points.push(y);
    }
    Ok(OrbitRecord { start: x, points, n, clamped_at })
}

/// Cells visited by `x_k`, `burn_in <= k <= burn_in + n_collect`.
pub fn omega_limit(map: &MapSpec, x: f64, burn_in: usize, n_collect: usize, grid_h: f64) -> GridSet {
    let mut g = GridSet::for_map(map, grid_h);
    let mut y = map.clamp(x);
    for _ in 0..burn_in {
        y = map.clamp(map.f(y));
    }
    for _ in 0..=n_collect {
        g.insert(y);
        y = map.clamp(map.f(y));
    }
    g
}

/// `min_{0 < m <= n} λ(f^m J)` from exact images.
pub fn min_image_length(map: &MapSpec, j: &Interval, n: usize) -> f64 {
    let mut img = *j;
    let mut best = f64::INFINITY;
    for _ in 0..n {
        img = map.image(&img);
        best = best.min(img.len());
    }
    if n == 0 {
        j.len()
    } else {
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEstimate {
    pub gamma: f64,
    /// `(τ, N(τ))`; `None` when some sampled interval never exceeded γ.
    pub n_of_tau: Vec<(f64, Option<usize>)>,
    pub samples: usize,
    pub horizon: usize,
}

/// Empirical sensitivity constant on a region: samples closed intervals
/// meeting `region`, takes `γ` as half the smallest late image length, and
/// for each `τ` the first `N` after which every sampled interval of length
/// at least `τ` keeps images longer than `γ` up to `horizon`.
pub fn sensitivity(map: &MapSpec, region: &Interval, taus: &[f64], samples: usize, horizon: usize, seed: u64) -> SensitivityEstimate {
    let runs: Vec<(f64, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let tau = taus[i % taus.len()];
            let x = rng.gen_range(region.lo..=region.hi);
            let off = rng.gen_range(0.0..=tau);
            let comp = map.component_of(x).unwrap_or(map.hull());
            let lo = (x - off).max(comp.lo);
            let j = Interval { lo, hi: (lo + tau).min(comp.hi) };
            let mut lens = Vec::with_capacity(horizon);
            let mut img = j;
            for _ in 0..horizon {
                img = map.image(&img);
                lens.push(img.len());
            }
            (tau, lens)
        })
        .collect();
    let late = horizon / 2;
    let gamma = 0.5
        * runs
            .iter()
            .map(|(_, l)| l[late..].iter().copied().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min);
    let n_of_tau = taus
        .iter()
        .map(|&t| {
            let mut worst = Some(0usize);
            for (tau, lens) in runs.iter().filter(|(tau, _)| *tau >= t) {
                let _ = tau;
                let last_bad = lens.iter().rposition(|&l| l <= gamma);
                match last_bad {
                    Some(k) if k + 1 >= lens.len() => worst = None,
                    Some(k) => worst = worst.map(|w| w.max(k + 2)),
                    None => {}
                }
            }
            (t, worst)
        })
        .collect();
    SensitivityEstimate { gamma, n_of_tau, samples, horizon }
}

/// Grid approximation of Λ(f). The hull is cut into `samples` strata; the
/// orbit of one random point per stratum is classified and the stratum's
/// cells are kept unless that orbit falls in the trivial cases.
pub fn lambda_set(classifier: &Classifier, grid_h: f64, samples: usize, budget: usize, seed: u64) -> GridSet {
    let map = classifier.map;
    let mut g = GridSet::for_map(map, grid_h);
    let n = g.len();
    let hull = map.hull();
    let keep: Vec<bool> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let w = hull.len() / samples as f64;
            let x = map.clamp(hull.lo + (i as f64 + rng.gen::<f64>()) * w);
            !classifier.classify(x, budget).tag.is_trivial()
        })
        .collect();
    for (i, k) in keep.iter().enumerate() {
        if *k {
            let a = i * n / samples;
            let b = ((i + 1) * n / samples).min(n);
            for c in a..b {
                g.set(c, true);
            }
        }
    }
    g
}
