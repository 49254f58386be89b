//! Empirical probes of the distortion and density lemmas. Every constant
//! reported here is an envelope over the sampled instances, not a bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distortion::abs_derivative_n;
use super::GridSet;
use crate::chain_lab::{generate_instances, is_periodic_interval, pull_back_along, orbit_points, stats, StartPoints};
use crate::error::{LabError, Result};
use crate::interval::{max_overlap, Interval};
use crate::map_model::MapSpec;
use crate::orbit_engine::{omega_limit, Classifier, OrbitTag};
use crate::rng::substream;

/// Cells of the local grids laid over instance intervals.
const LOCAL_CELLS: usize = 4096;
/// Derivative samples per instance; cell weights interpolate between them.
const DERIV_SAMPLES: usize = 256;
/// Shorter pull-backs are dropped: their iterates are no longer resolved in
/// double precision.
pub const MIN_INSTANCE_LEN: f64 = 1e-10;

/// A monotone chain `f^l J`, `l = 0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneInstance {
    pub chain: Vec<Interval>,
}

impl MonotoneInstance {
    /// The `n = 0` instance on `j`.
    pub fn trivial(j: Interval) -> Self {
        MonotoneInstance { chain: vec![j] }
    }

    pub fn j(&self) -> Interval {
        self.chain[0]
    }

    pub fn n(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn image(&self) -> Interval {
        *self.chain.last().unwrap()
    }

    pub fn multiplicity(&self) -> usize {
        max_overlap(&self.chain)
    }
}

/// Monotone first-entry pull-backs of random small targets, at least
/// [`MIN_INSTANCE_LEN`] long.
pub fn monotone_instances(map: &MapSpec, count: usize, len_range: (f64, f64), horizon: usize, seed: u64) -> Vec<MonotoneInstance> {
    let mut out = Vec::with_capacity(count);
    let mut round = 0u64;
    while out.len() < count && round < 20 {
        let inst = generate_instances(map, &StartPoints::Lebesgue, len_range, horizon, count, seed.wrapping_add(round));
        for s in inst {
            let orbit = orbit_points(map, s.x, s.n);
            let ch = pull_back_along(map, &orbit, &s.target);
            let j = ch.intervals[0];
            if stats(map, &ch).order == 0 && j.len() >= MIN_INSTANCE_LEN && map.is_monotone_n(&j, s.n) && out.len() < count {
                out.push(MonotoneInstance { chain: ch.intervals });
            }
        }
        round += 1;
    }
    out
}

/// Preimage of `sub ⊆ f^n J` inside `J`, pulled back one lap at a time.
pub fn pull_back_sub(map: &MapSpec, inst: &MonotoneInstance, sub: &Interval) -> Interval {
    let mut cur = *sub;
    for m in (0..inst.n()).rev() {
        let host = inst.chain[m];
        let lap = map.lap_index(host.mid()).unwrap_or(0);
        let pre = |y: f64| map.lap_preimage(lap, y).unwrap_or(host.mid()).clamp(host.lo, host.hi);
        cur = Interval::spanning(pre(cur.lo), pre(cur.hi));
    }
    cur
}

/// Image-measure weight of each local cell of `j` under `f^n`, normalised to
/// sum to one; `|Df^n|` is sampled at `DERIV_SAMPLES + 1` points and
/// interpolated in log scale.
fn image_weights(map: &MapSpec, j: &Interval, n: usize) -> Vec<f64> {
    let logd: Vec<f64> = (0..=DERIV_SAMPLES)
        .map(|i| {
            let x = j.lo + j.len() * i as f64 / DERIV_SAMPLES as f64;
            abs_derivative_n(map, x, n).max(1e-300).ln()
        })
        .collect();
    let mut w: Vec<f64> = (0..LOCAL_CELLS)
        .map(|k| {
            let t = (k as f64 + 0.5) / LOCAL_CELLS as f64 * DERIV_SAMPLES as f64;
            let i = (t.floor() as usize).min(DERIV_SAMPLES - 1);
            let f = t - i as f64;
            (logd[i] * (1.0 - f) + logd[i + 1] * f).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoebeProbeReport {
    /// Only instances with multiplicity at most `mu` are used.
    pub mu: usize,
    pub delta: Option<f64>,
    pub k: Option<f64>,
    /// `min λ(J^±)/λ(I)` over the instances.
    pub sigma_hat: Option<f64>,
    /// `(ε, q)` ascending in ε, after the monotone envelope.
    pub q_hat: Vec<(f64, f64)>,
    /// `(δ, α)` ascending in δ, after the monotone envelope.
    pub alpha_hat: Vec<(f64, f64)>,
    pub samples: usize,
    /// The raw table was already non-decreasing.
    pub raw_monotone: bool,
    pub seed: u64,
}

/// Smallest non-decreasing majorant of `(key, value)` rows sorted by key.
fn monotone_envelope(rows: &mut [(f64, f64)]) -> bool {
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let raw = rows.windows(2).all(|w| w[0].1 <= w[1].1);
    let mut run = f64::NEG_INFINITY;
    for r in rows.iter_mut() {
        run = run.max(r.1);
        r.1 = run;
    }
    raw
}

struct ThreeOutcome {
    sigma: f64,
    q: Vec<f64>,
}

/// Three-interval probe. Each instance `J` gets an inner interval `I` whose
/// image leaves room at least `δ λ(f^n I)` on both sides; `sigma_hat` is the
/// smallest `λ(J^±)/λ(I)`, and `q_hat(ε)` is the largest `1 - dens(X|I)`
/// over sets `X ⊆ I` with `dens(f^n X|f^n I) >= 1 - ε`, the worst such `X`
/// dropping the cells with the least image measure per unit length.
pub fn three_interval_probe(map: &MapSpec, instances: &[MonotoneInstance], mu: usize, delta: f64, eps: &[f64], seed: u64) -> Result<KoebeProbeReport> {
    let used: Vec<(usize, &MonotoneInstance)> = instances.iter().enumerate().filter(|(_, s)| s.multiplicity() <= mu).collect();
    if used.is_empty() {
        return Err(LabError::EmptyInstances);
    }
    let outcomes: Vec<Option<ThreeOutcome>> = used
        .par_iter()
        .map(|&(idx, inst)| {
            let mut rng = substream(seed, idx as u64);
            let t = inst.image();
            let u = rng.gen_range(0.05..=1.0 / (1.0 + 2.0 * delta));
            let l = t.len() * u;
            let slack = (t.len() - l * (1.0 + 2.0 * delta)).max(0.0);
            let lo = t.lo + delta * l + rng.gen::<f64>() * slack;
            let sub = Interval { lo, hi: (lo + l).min(t.hi) };
            let side = (sub.lo - t.lo).min(t.hi - sub.hi);
            if side < delta * sub.len() * (1.0 - 1e-9) || sub.is_degenerate() {
                return None;
            }
            let j = inst.j();
            let i = pull_back_sub(map, inst, &sub);
            if i.is_degenerate() {
                return None;
            }
            let sigma = (i.lo - j.lo).min(j.hi - i.hi) / i.len();
            let w = image_weights(map, &i, inst.n());
            let mut order: Vec<usize> = (0..LOCAL_CELLS).collect();
            order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
            let q = eps
                .iter()
                .map(|&e| {
                    let mut x = GridSet::full(i, i.len() / LOCAL_CELLS as f64);
                    let mut removed = 0.0;
                    for &k in &order {
                        if removed + w[k] > e {
                            break;
                        }
                        removed += w[k];
                        x.set(k, false);
                    }
                    1.0 - x.dens(&i).unwrap_or(1.0)
                })
                .collect();
            Some(ThreeOutcome { sigma, q })
        })
        .collect();
    let ok: Vec<&ThreeOutcome> = outcomes.iter().flatten().collect();
    if ok.is_empty() {
        return Err(LabError::EmptyInstances);
    }
    let sigma_hat = ok.iter().map(|o| o.sigma).fold(f64::INFINITY, f64::min);
    let mut q_hat: Vec<(f64, f64)> = eps.iter().enumerate().map(|(k, &e)| (e, ok.iter().map(|o| o.q[k]).fold(0.0, f64::max))).collect();
    let raw_monotone = monotone_envelope(&mut q_hat);
    Ok(KoebeProbeReport { mu, delta: Some(delta), k: None, sigma_hat: Some(sigma_hat), q_hat, alpha_hat: Vec::new(), samples: ok.len(), raw_monotone, seed })
}

/// Two-interval probe. Each instance `J` is split at `a` so that the image
/// ratio `λ(f^n L)/λ(f^n R)` lies in `[0.1, K]`. For every `δ`, comb sets
/// `X` on a prefix of `L` (seen from `a`) with `Dens_a(X|L) >= 1 - δ` are
/// pushed forward and `alpha_hat(δ)` is the largest `1 - Dens_b(f^n X|f^n L)`.
/// Inside each comb block the removed cells are those of largest image
/// measure.
pub fn two_interval_probe(map: &MapSpec, instances: &[MonotoneInstance], mu: usize, deltas: &[f64], k_bound: f64, seed: u64) -> Result<KoebeProbeReport> {
    let used: Vec<(usize, &MonotoneInstance)> = instances.iter().enumerate().filter(|(_, s)| s.multiplicity() <= mu).collect();
    if used.is_empty() {
        return Err(LabError::EmptyInstances);
    }
    let outcomes: Vec<Option<Vec<f64>>> = used
        .par_iter()
        .map(|&(idx, inst)| {
            let mut rng = substream(seed, idx as u64);
            let t = inst.image();
            let ratio = rng.gen_range(0.1f64.min(k_bound)..=k_bound);
            let l_on_left = rng.gen::<bool>();
            let l_len = t.len() * ratio / (1.0 + ratio);
            let b = if l_on_left { t.lo + l_len } else { t.hi - l_len };
            let a = pull_back_sub(map, inst, &Interval::point(b)).lo;
            let j = inst.j();
            let l = if (a - j.lo).abs() < 1e-300 || (j.hi - a).abs() < 1e-300 {
                return None;
            } else {
                // L is the part of J mapped onto the L side of the image
                let left_pre = Interval { lo: j.lo, hi: a };
                let img_left = pull_back_sub(map, inst, &Interval::point(t.lo)).lo;
                let left_maps_left = (img_left - j.lo).abs() <= (img_left - j.hi).abs();
                if left_maps_left == l_on_left { left_pre } else { Interval { lo: a, hi: j.hi } }
            };
            if l.is_degenerate() {
                return None;
            }
            let from_lo = a == l.lo;
            // cell weights ordered outward from a
            let mut w = image_weights(map, &l, inst.n());
            if !from_lo {
                w.reverse();
            }
            let h = l.len() / LOCAL_CELLS as f64;
            let alphas = deltas
                .iter()
                .map(|&d| {
                    let mut worst: f64 = 0.0;
                    let base = (1.0 / d).round().max(1.0) as usize;
                    for block in [base, 4 * base] {
                        let drop = ((d * block as f64) + 1e-9).floor() as usize;
                        for frac in [1.0, 0.5, 0.125] {
                            let prefix = ((LOCAL_CELLS as f64 * frac) as usize).max(block.min(LOCAL_CELLS));
                            let mut keep = vec![false; LOCAL_CELLS];
                            for start in (0..prefix).step_by(block) {
                                let end = (start + block).min(prefix);
                                let mut idx: Vec<usize> = (start..end).collect();
                                idx.sort_by(|&x, &y| w[y].total_cmp(&w[x]).then(x.cmp(&y)));
                                let cut = ((drop * (end - start)) as f64 / block as f64).ceil() as usize;
                                for &k in &idx[cut..] {
                                    keep[k] = true;
                                }
                            }
                            let mut x = GridSet::empty(l, h);
                            for (k, &on) in keep.iter().enumerate() {
                                let cell = if from_lo { k } else { LOCAL_CELLS - 1 - k };
                                if on && cell < x.len() {
                                    x.set(cell, true);
                                }
                            }
                            if x.dens_from(a, &l).unwrap_or(0.0) < 1.0 - d - 1e-12 {
                                continue;
                            }
                            // image prefixes from b
                            let (mut acc, mut tot, mut best) = (0.0, 0.0, 0.0f64);
                            for (k, &wk) in w.iter().enumerate() {
                                tot += wk;
                                if keep[k] {
                                    acc += wk;
                                }
                                best = best.max(acc / tot);
                            }
                            worst = worst.max(1.0 - best.min(1.0));
                        }
                    }
                    worst
                })
                .collect();
            Some(alphas)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
    if ok.is_empty() {
        return Err(LabError::EmptyInstances);
    }
    let mut alpha_hat: Vec<(f64, f64)> = deltas.iter().enumerate().map(|(k, &d)| (d, ok.iter().map(|o| o[k]).fold(0.0, f64::max))).collect();
    let raw_monotone = monotone_envelope(&mut alpha_hat);
    Ok(KoebeProbeReport { mu, delta: None, k: Some(k_bound), sigma_hat: None, q_hat: Vec::new(), alpha_hat, samples: ok.len(), raw_monotone, seed })
}

fn require_finitely_renormalizable(cl: &Classifier) -> Result<()> {
    if cl.feigenbaum_cascades().next().is_some() {
        return Err(LabError::Precondition("map is infinitely renormalizable".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma43Report {
    pub x: f64,
    pub target: Interval,
    pub eps: f64,
    pub n_omit: usize,
    /// Some run of `n_omit` consecutive orbit points misses `I` and the
    /// orbit comes back to `I` afterwards, within the budget.
    pub hypothesis_met: bool,
    /// Best interval found; `None` means `J = ∅` and `L = I`.
    pub best_j: Option<Interval>,
    pub min_density: f64,
    pub conclusion_met: bool,
}

/// Searches `J ⊆ I ∖ ω(x)` (endpoints on a 64-part partition of `I`)
/// maximising the smaller density of `X` on the components of `I ∖ J`.
pub fn lemma_4_3_probe(cl: &Classifier, x_set: &GridSet, x: f64, target: &Interval, eps: f64, n_omit: usize, budget: usize) -> Result<Lemma43Report> {
    let map = cl.map;
    require_finitely_renormalizable(cl)?;
    if !x_set.density_points().contains(x) {
        return Err(LabError::Precondition(format!("{x} is not a density point of X")));
    }
    let class = cl.classify(x, budget);
    if class.tag != OrbitTag::AbsorbedByBasicSet {
        return Err(LabError::Precondition(format!("orbit of {x} is {:?}, not absorbed by a basic set", class.tag)));
    }
    if target.is_degenerate() || target.len() >= map.eta() {
        return Err(LabError::Precondition("target length must be positive and below eta".into()));
    }
    let orbit = orbit_points(map, x, budget);
    let mut run = 0usize;
    let mut hypothesis_met = false;
    for &y in &orbit {
        if target.contains(y) {
            if run >= n_omit {
                hypothesis_met = true;
                break;
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    let omega = omega_limit(map, x, budget / 2, budget / 2, x_set.h());
    let parts = 64usize;
    let s = target.len() / parts as f64;
    let at = |i: usize| if i == parts { target.hi } else { target.lo + i as f64 * s };
    let score = |j: Option<Interval>| -> f64 {
        let comps: Vec<Interval> = match j {
            None => vec![*target],
            Some(j) => [Interval { lo: target.lo, hi: j.lo }, Interval { lo: j.hi, hi: target.hi }].into_iter().filter(|c| !c.is_degenerate()).collect(),
        };
        comps.iter().map(|c| x_set.dens(c).unwrap_or(0.0)).fold(1.0, f64::min)
    };
    let mut best_j = None;
    let mut best = score(None);
    for i in 0..parts {
        for k in i + 1..=parts {
            let j = Interval { lo: at(i), hi: at(k) };
            if omega.measure_in(&j) > 0.0 || omega.contains(j.mid()) {
                break;
            }
            let v = score(Some(j));
            if v > best {
                best = v;
                best_j = Some(j);
            }
        }
    }
    Ok(Lemma43Report { x, target: *target, eps, n_omit, hypothesis_met, best_j, min_density: best, conclusion_met: best >= 1.0 - eps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub scale: f64,
    pub value: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub rows: Vec<DensityRow>,
    /// Whether a trend is claimed at all (more than one usable row).
    pub trend_claimed: bool,
    /// Values do not decrease as the scale shrinks, up to the grid tolerance.
    pub trend_ok: bool,
}

fn trend(rows: &[DensityRow], h: f64) -> (bool, bool) {
    let claimed = rows.len() > 1;
    let mut sorted: Vec<&DensityRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.scale.total_cmp(&a.scale));
    let ok = sorted.windows(2).all(|w| w[1].value >= w[0].value - 10.0 * h / w[1].scale);
    (claimed, ok)
}

/// `max(dens(X|[a-ρ, a]), dens(X|[a, a+ρ]))` for each radius.
pub fn cor_4_1_probe(cl: &Classifier, x_set: &GridSet, a: f64, radii: &[f64], x: f64, budget: usize) -> Result<DensityTable> {
    let map = cl.map;
    require_finitely_renormalizable(cl)?;
    let omega = omega_limit(map, x, budget / 2, budget / 2, x_set.h()).dilate(1);
    if !omega.contains(a) {
        return Err(LabError::Precondition(format!("{a} is not in the estimated omega-limit set of {x}")));
    }
    let hull = map.hull();
    let rows: Vec<DensityRow> = radii
        .iter()
        .map(|&r| {
            let left = Interval { lo: (a - r).max(hull.lo), hi: a };
            let right = Interval { lo: a, hi: (a + r).min(hull.hi) };
            let d = |j: &Interval| if j.is_degenerate() { 0.0 } else { x_set.dens(j).unwrap_or(0.0) };
            DensityRow { scale: r, value: d(&left).max(d(&right)), samples: 1 }
        })
        .collect();
    let (trend_claimed, trend_ok) = trend(&rows, x_set.h());
    Ok(DensityTable { rows, trend_claimed, trend_ok })
}

/// For each `δ`, the smallest `dens(X|I)` over sampled non-periodic
/// `c`-symmetric intervals `I` with `λ(I) < δ`. `X` is symmetrized at `c`
/// first; scales below `2h` are dropped.
pub fn lemma_4_4_probe(map: &MapSpec, x_set: &GridSet, c: f64, deltas: &[f64], samples: usize, p_max: usize, seed: u64) -> Result<DensityTable> {
    let xs = x_set.symmetrize(map, c);
    let h = xs.h();
    let mut mismatch = 0usize;
    let mut near = 0usize;
    for k in xs.iter_ones() {
        let y = xs.cell_center(k);
        if (y - c).abs() <= map.eta() {
            near += 1;
            let t = map.tau(c, y);
            if !(xs.contains(t) || xs.contains(t - h) || xs.contains(t + h)) {
                mismatch += 1;
            }
        }
    }
    if near > 0 && mismatch * 100 > near {
        return Err(LabError::Precondition(format!("X is not tau-symmetric: {mismatch} of {near} cells unmatched")));
    }
    let rows: Vec<DensityRow> = deltas
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= 2.0 * h)
        .filter_map(|(di, &d)| {
            let mut rng = substream(seed, di as u64);
            let mut worst: f64 = 1.0;
            let mut kept = 0;
            for _ in 0..samples {
                let r = rng.gen_range(h..(d / 2.0).min(map.eta()));
                let y = c + r;
                let i = Interval::spanning(map.tau(c, y), y);
                if i.len() >= d || is_periodic_interval(map, &i, p_max).is_some() {
                    continue;
                }
                kept += 1;
                worst = worst.min(xs.dens(&i).unwrap_or(0.0));
            }
            (kept > 0).then_some(DensityRow { scale: d, value: worst, samples: kept })
        })
        .collect();
    let (trend_claimed, trend_ok) = trend(&rows, h);
    Ok(DensityTable { rows, trend_claimed, trend_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit_engine::OrbitConfig;

    #[test]
    fn trivial_instances() {
        let u = MapSpec::logistic(4.0).unwrap();
        let inst: Vec<MonotoneInstance> = (0..8).map(|k| MonotoneInstance::trivial(Interval { lo: 0.1 + 0.05 * k as f64, hi: 0.12 + 0.05 * k as f64 })).collect();
        let r = three_interval_probe(&u, &inst, 6, 0.5, &[0.1, 0.01], 1).unwrap();
        assert!(r.sigma_hat.unwrap() >= 0.5 - 1e-9);
        for (e, q) in &r.q_hat {
            assert!(*q <= e + 1.0 / LOCAL_CELLS as f64);
        }
        let r = two_interval_probe(&u, &inst, 6, &[0.1, 0.01, 0.001], 2.0, 1).unwrap();
        for (d, a) in &r.alpha_hat {
            assert!((a - d).abs() < 1e-9, "{d} {a}");
        }
    }

    #[test]
    fn empty_instance_set() {
        let u = MapSpec::logistic(4.0).unwrap();
        assert!(matches!(three_interval_probe(&u, &[], 6, 0.5, &[0.1], 1), Err(LabError::EmptyInstances)));
        assert!(matches!(two_interval_probe(&u, &[], 6, &[0.1], 2.0, 1), Err(LabError::EmptyInstances)));
    }

    #[test]
    fn full_set_density_probes() {
        let u = MapSpec::logistic(4.0).unwrap();
        let cl = Classifier::new(&u, &OrbitConfig::default());
        let x = GridSet::full(u.hull(), 1.0 / 4096.0);
        let t = cor_4_1_probe(&cl, &x, 0.3, &[0.1, 0.01, 0.001], 0.123, 1_000_000).unwrap();
        assert!(t.rows.iter().all(|r| r.value == 1.0) && t.trend_ok);
        let i = Interval { lo: 0.3, hi: 0.31 };
        let r = lemma_4_3_probe(&cl, &x, 0.123, &i, 0.05, 10, 1_000_000).unwrap();
        assert!(r.conclusion_met && r.hypothesis_met);
        let t = lemma_4_4_probe(&u, &x, 0.5, &[0.1, 0.03, 0.01, 1e-5], 50, 256, 3).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows.iter().all(|r| r.value == 1.0));
    }
}
