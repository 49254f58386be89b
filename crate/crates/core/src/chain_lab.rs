//! Pull-back chains, intersection multiplicity, multiple collections and
//! depth certificates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::interval::{max_overlap, Interval};
use crate::map_model::MapSpec;
use crate::orbit_engine::{CycleWatcher, OrbitConfig};
use crate::rng::substream;

/// Resolution of the maximality probe.
pub const H_MAX: f64 = 1e-9;

/// Absolute slack for comparing recomputed endpoints, a few ulps on the
/// unit interval.
const ULP_SLACK: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub intervals: Vec<Interval>,
    pub base_point: f64,
    pub target: Interval,
    /// `x_0 .. x_n`
    pub orbit: Vec<f64>,
    pub maximal: bool,
}

impl Chain {
    pub fn n(&self) -> usize {
        self.intervals.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub order: usize,
    pub multiplicity: usize,
    pub extremal_indices: Vec<usize>,
}

/// Which endpoint of `I = [lo, hi]` plays the role of `a` in D1–D3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `a = lo`, `b = hi`
    A,
    /// `a = hi`, `b = lo`
    B,
}

impl Side {
    pub fn endpoints(self, i: &Interval) -> (f64, f64) {
        match self {
            Side::A => (i.lo, i.hi),
            Side::B => (i.hi, i.lo),
        }
    }

    fn sign(self) -> f64 {
        match self {
            Side::A => 1.0,
            Side::B => -1.0,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleCollection {
    pub side: Side,
    pub p: usize,
    pub r: usize,
    pub m: usize,
    pub v: f64,
    pub j: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthCertificate {
    pub n: usize,
    /// Depths under the convention that a point without collections has
    /// depth one.
    pub dp_a: usize,
    pub dp_b: usize,
    pub dp: usize,
    /// The same depths under the convention that a point without
    /// collections has depth zero.
    pub zero_convention_dp_a: usize,
    pub zero_convention_dp_b: usize,
    pub witness_a: Option<MultipleCollection>,
    pub witness_b: Option<MultipleCollection>,
}

/// `x_0 .. x_len` with roundoff excursions clamped back into the phase space.
pub fn orbit_points(map: &MapSpec, x: f64, len: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(len + 1);
    let mut y = x;
    v.push(y);
    for _ in 0..len {
        y = map.clamp(map.f(y));
        v.push(y);
    }
    v
}

/// First `k` with `x_k ∈ I°`.
pub fn first_entry(orbit: &[f64], i: &Interval) -> Option<usize> {
    orbit.iter().position(|&y| i.contains_open(y))
}

fn target_precondition(map: &MapSpec, i: &Interval) -> Result<()> {
    if i.is_degenerate() {
        return Err(LabError::Degenerate(i.lo));
    }
    if !map.in_interior(i) {
        return Err(LabError::Precondition(format!("target [{}, {}] is not inside M°", i.lo, i.hi)));
    }
    if i.len() >= map.xi() {
        return Err(LabError::Precondition(format!("target length {} is not below xi = {}", i.len(), map.xi())));
    }
    Ok(())
}

/// Part of lap `k` mapped into `t`.
fn lap_pullback(map: &MapSpec, k: usize, t: &Interval) -> Option<Interval> {
    let lap = map.laps()[k];
    let (fl, fr) = (map.f(lap.lo), map.f(lap.hi));
    let range = Interval::spanning(fl, fr);
    let hit = range.intersection(t)?;
    let u = map.lap_preimage(k, hit.lo)?;
    let w = map.lap_preimage(k, hit.hi)?;
    Some(Interval::spanning(u, w))
}

/// Connected component of `f^{-1}(t)` containing `y`; `f(y) ∈ t` assumed.
pub fn preimage_component(map: &MapSpec, y: f64, t: &Interval) -> Interval {
    let laps = map.laps();
    let Some(k0) = map.lap_index(y) else {
        return Interval::point(y);
    };
    let mut comp = lap_pullback(map, k0, t).unwrap_or(Interval::point(y)).include(y);
    // walk left across turning points while the component reaches them
    let mut k = k0;
    while k > 0 && comp.lo == laps[k].lo && laps[k - 1].hi == laps[k].lo {
        match lap_pullback(map, k - 1, t) {
            Some(piece) if piece.hi == laps[k - 1].hi => {
                comp = comp.hull(&piece);
                k -= 1;
            }
            _ => break,
        }
    }
    let mut k = k0;
    while k + 1 < laps.len() && comp.hi == laps[k].hi && laps[k + 1].lo == laps[k].hi {
        match lap_pullback(map, k + 1, t) {
            Some(piece) if piece.lo == laps[k + 1].lo => {
                comp = comp.hull(&piece);
                k += 1;
            }
            _ => break,
        }
    }
    comp
}

/// Maximal chain obtained by pulling `I` back along `orb_n(x)`.
pub fn pull_back(map: &MapSpec, x: f64, n: usize, i: &Interval) -> Result<Chain> {
    if !map.in_domain(x) {
        return Err(LabError::Domain { x });
    }
    target_precondition(map, i)?;
    let orbit = orbit_points(map, x, n);
    if !i.contains(orbit[n]) {
        return Err(LabError::Precondition(format!("f^{n}(x) = {} is not in the target", orbit[n])));
    }
    Ok(pull_back_along(map, &orbit, i))
}

/// Pull-back of `i` along a precomputed orbit segment `x_0 .. x_n`.
pub fn pull_back_along(map: &MapSpec, orbit: &[f64], i: &Interval) -> Chain {
    let n = orbit.len() - 1;
    let mut intervals = vec![*i; n + 1];
    for m in (0..n).rev() {
        intervals[m] = preimage_component(map, orbit[m], &intervals[m + 1]);
    }
    Chain { intervals, base_point: orbit[0], target: *i, orbit: orbit.to_vec(), maximal: true }
}

/// Number of chain intervals `I_m`, `m < n`, meeting an extremum.
pub fn order(map: &MapSpec, chain: &Chain) -> usize {
    extremal_indices(map, chain).len()
}

pub fn extremal_indices(map: &MapSpec, chain: &Chain) -> Vec<usize> {
    let n = chain.n();
    (0..n)
        .filter(|&m| map.extrema().iter().any(|&c| chain.intervals[m].contains(c)))
        .collect()
}

/// Maximal number of chain intervals sharing a point.
pub fn multiplicity(chain: &Chain) -> usize {
    max_overlap(&chain.intervals)
}

pub fn stats(map: &MapSpec, chain: &Chain) -> ChainStats {
    let extremal_indices = extremal_indices(map, chain);
    ChainStats { order: extremal_indices.len(), multiplicity: multiplicity(chain), extremal_indices }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub inclusions: bool,
    pub contains_orbit: bool,
    pub maximal: bool,
    pub dichotomy: bool,
    /// Indices at which some check failed.
    pub failures: Vec<(usize, String)>,
}

impl ChainCheck {
    pub fn passed(&self) -> bool {
        self.inclusions && self.contains_orbit && self.maximal && self.dichotomy
    }
}

/// Tests the chain invariants: inclusions through exact images, orbit
/// membership, maximality at resolution [`H_MAX`], and the
/// homeomorphism / symmetric-step dichotomy.
pub fn verify_chain(map: &MapSpec, chain: &Chain) -> ChainCheck {
    let n = chain.n();
    let mut out = ChainCheck { inclusions: true, contains_orbit: true, maximal: true, dichotomy: true, failures: Vec::new() };
    let slack = 1e-12;
    for m in 0..=n {
        let im = chain.intervals[m];
        if !im.contains(chain.orbit[m]) {
            out.contains_orbit = false;
            out.failures.push((m, "orbit point outside".into()));
        }
        if m == n {
            continue;
        }
        let next = chain.intervals[m + 1];
        let img = map.image(&im);
        if !next.contains_interval(&img, slack) {
            out.inclusions = false;
            out.failures.push((m, "f(I_m) ⊄ I_{m+1}".into()));
        }
        // maximality, stepwise: once I_{m+1} is maximal, a larger I_m maps
        // into I_n under f^{n-m} only if its image stays inside I_{m+1}
        let comp = map.component_of(im.mid()).unwrap_or(map.hull());
        for (lo, hi) in [(im.lo - H_MAX, im.hi), (im.lo, im.hi + H_MAX)] {
            if lo < comp.lo || hi > comp.hi {
                continue;
            }
            let bigger = Interval { lo, hi };
            if next.contains_interval(&map.image(&bigger), 0.0) {
                out.maximal = false;
                out.failures.push((m, "not maximal".into()));
            }
        }
        // dichotomy
        let turning: Vec<f64> = map.extrema().iter().copied().filter(|&c| im.contains_open(c)).collect();
        if !turning.is_empty() {
            let ok = turning.len() == 1 && {
                let c = turning[0];
                let t = map.tau(c, im.lo);
                let sym = (t - im.hi).abs() <= 1e-7 * im.len().max(1e-300) + 1e-12;
                let hits = |y: f64| (y - next.lo).abs() <= slack || (y - next.hi).abs() <= slack;
                sym && hits(map.f(im.lo)) && hits(map.f(im.hi))
            };
            if !ok {
                out.dichotomy = false;
                out.failures.push((m, "neither monotone nor symmetric".into()));
            }
        }
    }
    out
}

/// Intervals `H_j = [y_j, e_j]`, `j = 0..k`, where `f` maps each `H_j`
/// homeomorphically onto `H_{j+1}` and `H_k = [y_k, far]`. `None` if some
/// step would have to cross a turning point.
pub fn one_sided_pullback(map: &MapSpec, ys: &[f64], far: f64) -> Option<Vec<Interval>> {
    let k = ys.len() - 1;
    let mut ends = vec![0.0; k + 1];
    ends[k] = far;
    if ys[k] == far {
        return None;
    }
    for j in (0..k).rev() {
        let y = ys[j];
        let target = ends[j + 1];
        let mut found = None;
        for (idx, lap) in map.laps().iter().enumerate() {
            if !lap.contains(y) {
                continue;
            }
            if let Some(w) = map.lap_preimage(idx, target) {
                if w != y {
                    found = Some(w);
                    break;
                }
            }
        }
        ends[j] = found?;
    }
    Some(ys.iter().zip(&ends).map(|(&y, &e)| Interval::spanning(y, e)).collect())
}

fn check_first_entry(orbit: &[f64], n: usize, i: &Interval) -> Result<()> {
    match first_entry(&orbit[..=n], i) {
        Some(k) if k == n => Ok(()),
        Some(k) => Err(LabError::Precondition(format!("orbit enters the target at {k} < {n}"))),
        None => Err(LabError::Precondition(format!("x_{n} is not in the target interior"))),
    }
}

/// Shortest orbit segment watched for convergence to a limit cycle.
const CYCLE_WATCH_MIN: usize = 128;

/// The orbit segment (extended to [`CYCLE_WATCH_MIN`] points) must not
/// certify convergence to an attracting cycle.
fn check_not_limit_cycle(map: &MapSpec, orbit: &[f64]) -> Result<()> {
    let mut w = CycleWatcher::new(map, &OrbitConfig::default());
    let mut y = *orbit.last().unwrap();
    let extra = CYCLE_WATCH_MIN.saturating_sub(orbit.len());
    let tail = std::iter::from_fn(|| {
        y = map.clamp(map.f(y));
        Some(y)
    });
    for y in orbit.iter().copied().chain(tail.take(extra)) {
        if let Some(c) = w.push(y) {
            return Err(LabError::Precondition(format!("orbit converges to a limit cycle of period {}", c.period)));
        }
    }
    Ok(())
}

/// Orbit `x_0 .. x_{2n+1}` after checking the D1–D3 preconditions.
pub fn collection_orbit(map: &MapSpec, x: f64, n: usize, i: &Interval) -> Result<Vec<f64>> {
    if !map.in_domain(x) {
        return Err(LabError::Domain { x });
    }
    let orbit = orbit_points(map, x, 2 * n + 1);
    check_first_entry(&orbit, n, i)?;
    check_not_limit_cycle(map, &orbit)?;
    Ok(orbit)
}

/// All multiple collections of `x(n)` on `side`, `n` the first entry time
/// into `I°`.
pub fn find_multiple_collections(map: &MapSpec, x: f64, n: usize, i: &Interval, side: Side) -> Result<Vec<MultipleCollection>> {
    let orbit = collection_orbit(map, x, n, i)?;
    Ok(collections_in_orbit(map, &orbit, n, i, side))
}

/// D1–D3 search over a precomputed orbit of length at least `2n + 2`.
pub fn collections_in_orbit(map: &MapSpec, orbit: &[f64], n: usize, i: &Interval, side: Side) -> Vec<MultipleCollection> {
    let (a, b) = side.endpoints(i);
    let s = side.sign();
    let u = |z: f64| s * z;
    let mut out = Vec::new();
    for p in 1..=n {
        for r in 2..=(1 + n / p) {
            let m = n - (r - 1) * p;
            let xm = orbit[m];
            if !(u(xm) < u(a)) {
                continue;
            }
            // earlier ladder points sit between x(m) and a
            let ladder_ok = (1..=r - 2).all(|i| {
                let y = orbit[n - i * p];
                u(xm) < u(y) && u(y) <= u(a)
            }) && (1..=r - 2).all(|i| {
                let y = orbit[n + i * p];
                u(xm) < u(y) && u(y) < u(b)
            });
            if !ladder_ok {
                continue;
            }
            let Some(hs) = one_sided_pullback(map, &orbit[m..=m + p], b) else {
                continue;
            };
            let v = if hs[0].lo == xm { hs[0].hi } else { hs[0].lo };
            // orientation preserving: the far end sits on the b side of x(m)
            if !(u(v) > u(xm)) {
                continue;
            }
            let j = Interval::spanning(xm, v);
            if check_d1_d3(orbit, n, i, side, p, r, v) {
                out.push(MultipleCollection { side, p, r, m, v, j });
            }
        }
    }
    out
}

/// D1 and D3 for `J = [x(m), v]`; D2 holds by construction of `v`.
fn check_d1_d3(orbit: &[f64], n: usize, i: &Interval, side: Side, p: usize, r: usize, v: f64) -> bool {
    let (a, b) = side.endpoints(i);
    let m = n - (r - 1) * p;
    let j = Interval::spanning(orbit[m], v);
    if !(j.contains_open(orbit[n]) && j.contains_open(a) && !j.contains_open(b)) {
        return false;
    }
    let last = n + (r - 2) * p;
    for (l, &y) in orbit.iter().enumerate().take(last + 1) {
        let listed = l >= m + p && (l + p * (r - 1) - n) % p == 0;
        if listed != j.contains_open(y) {
            return false;
        }
    }
    true
}

/// Depth certificate of `x(n)`, with both depth conventions.
pub fn depth(map: &MapSpec, x: f64, n: usize, i: &Interval) -> Result<DepthCertificate> {
    let orbit = collection_orbit(map, x, n, i)?;
    Ok(depth_in_orbit(map, &orbit, n, i))
}

pub fn depth_in_orbit(map: &MapSpec, orbit: &[f64], n: usize, i: &Interval) -> DepthCertificate {
    let best = |side| {
        collections_in_orbit(map, orbit, n, i, side)
            .into_iter()
            .max_by(|x, y| x.r.cmp(&y.r).then(y.p.cmp(&x.p)))
    };
    let wa = best(Side::A);
    let wb = best(Side::B);
    let za = wa.as_ref().map_or(0, |c| c.r);
    let zb = wb.as_ref().map_or(0, |c| c.r);
    let dp_a = za.max(1);
    let dp_b = zb.max(1);
    DepthCertificate {
        n,
        dp_a,
        dp_b,
        dp: dp_a.max(dp_b),
        zero_convention_dp_a: za,
        zero_convention_dp_b: zb,
        witness_a: wa,
        witness_b: wb,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma31Report {
    pub side: Side,
    pub certificate: DepthCertificate,
    /// `mult{f^k H}` for the one-sided interval `H`; `None` when `f^n` does
    /// not map any interval ending at `x` monotonously onto `[x(n), b]`.
    pub h_multiplicity: Option<usize>,
    pub lemma_applies: bool,
    /// `mult{f^k H} <= 2 dp_a(n)` (only meaningful when the lemma applies).
    pub lemma_holds: Option<bool>,
    pub chain_stats: ChainStats,
    pub chain_monotone: bool,
    /// Bound `mult <= 2 (dp + 1)` on the full pull-back.
    pub corollary_bound: usize,
    pub corollary_holds: bool,
}

/// One-sided multiplicity bound and the depth bound on one instance.
pub fn check_lemma_3_1(map: &MapSpec, x: f64, n: usize, i: &Interval, side: Side) -> Result<Lemma31Report> {
    target_precondition(map, i)?;
    let orbit = collection_orbit(map, x, n, i)?;
    Ok(lemma_3_1_in_orbit(map, &orbit, n, i, side))
}

pub fn lemma_3_1_in_orbit(map: &MapSpec, orbit: &[f64], n: usize, i: &Interval, side: Side) -> Lemma31Report {
    let cert = depth_in_orbit(map, orbit, n, i);
    let (_, b) = side.endpoints(i);
    let h = one_sided_pullback(map, &orbit[..=n], b);
    let h_mult = h.as_ref().map(|hs| max_overlap(hs));
    let dp_side = match side {
        Side::A => cert.dp_a,
        Side::B => cert.dp_b,
    };
    let lemma_applies = cert.dp >= 2 && h_mult.is_some();
    let lemma_holds = if lemma_applies { h_mult.map(|mu| mu <= 2 * dp_side) } else { None };
    let chain = pull_back_along(map, &orbit[..=n], i);
    let st = stats(map, &chain);
    let corollary_bound = 2 * (cert.dp + 1);
    Lemma31Report {
        side,
        corollary_holds: st.multiplicity <= corollary_bound,
        chain_monotone: st.order == 0,
        chain_stats: st,
        corollary_bound,
        certificate: cert,
        h_multiplicity: h_mult,
        lemma_applies,
        lemma_holds,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop22Clause {
    pub i: usize,
    pub m_i: usize,
    pub m_i_minus_d: usize,
    pub nested: bool,
    pub periodic: Option<usize>,
    pub first_passage: bool,
    pub monotone_onto_half: bool,
}

impl Prop22Clause {
    pub fn clause_i(&self) -> bool {
        self.nested && self.periodic.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop22Report {
    pub n: usize,
    pub d: usize,
    pub stats: ChainStats,
    pub clauses: Vec<Prop22Clause>,
    pub clause_i: bool,
    pub clause_ii: bool,
    pub clause_iii: bool,
}

impl Prop22Report {
    pub fn passed(&self) -> bool {
        self.clause_i && self.clause_ii && self.clause_iii
    }

    /// No index exceeds the number of extrema, so the clauses are vacuous.
    pub fn vacuous(&self) -> bool {
        self.clauses.is_empty()
    }
}

/// Nesting, return-time and onto clauses on the first-passage pull-back of `I` along `orb(x)`,
/// looking for the first passage within `horizon` steps.
pub fn check_prop_2_2(map: &MapSpec, x: f64, i: &Interval, horizon: usize) -> Result<Prop22Report> {
    target_precondition(map, i)?;
    let orbit = orbit_points(map, x, horizon);
    let n = first_entry(&orbit, i)
        .ok_or_else(|| LabError::Precondition(format!("orbit does not pass through the target within {horizon} steps")))?;
    Ok(prop_2_2_in_orbit(map, &orbit[..=n], i))
}

/// Clauses (i)–(iii) for the chain along `orbit = x_0 .. x_n`, `n` the
/// first passage time. Clause (ii) reads "first moment" as the first time
/// after `m_{i-d}` that the orbit is in `int I_{m_{i-d}}`.
pub fn prop_2_2_in_orbit(map: &MapSpec, orbit: &[f64], i: &Interval) -> Prop22Report {
    let n = orbit.len() - 1;
    let d = map.num_extrema();
    let chain = pull_back_along(map, orbit, i);
    let st = stats(map, &chain);
    let ms = &st.extremal_indices;
    let mut clauses = Vec::new();
    for idx in d..ms.len() {
        let mi = ms[idx];
        let mj = ms[idx - d];
        let big = chain.intervals[mj];
        let small = chain.intervals[mi];
        let nested = big.contains_interval(&small, 0.0) && small != big;
        let tol = 1e-9 * small.len() + ULP_SLACK;
        let periodic = (1..=mi).find(|&q| small.contains_interval(&map.image_n(&small, q), tol));
        let first_passage = orbit[mj + 1..].iter().position(|&y| big.contains_open(y)).map(|k| k + mj + 1) == Some(mi);
        let monotone_onto_half = monotone_onto_half(map, orbit, mi, &big);
        clauses.push(Prop22Clause { i: idx + 1, m_i: mi, m_i_minus_d: mj, nested, periodic, first_passage, monotone_onto_half });
    }
    Prop22Report {
        n,
        d,
        clause_i: clauses.iter().all(Prop22Clause::clause_i),
        clause_ii: clauses.iter().all(|c| c.first_passage),
        clause_iii: clauses.iter().all(|c| c.monotone_onto_half),
        stats: st,
        clauses,
    }
}

/// Whether `f^{m}` maps a neighbourhood of `x_0` monotonously onto the half
/// of `big` (split at its extremum) that contains `x_m`.
fn monotone_onto_half(map: &MapSpec, orbit: &[f64], m: usize, big: &Interval) -> bool {
    let Some(&c) = map.extrema().iter().find(|&&c| big.contains_open(c)) else {
        return false;
    };
    let y = orbit[m];
    let half = if y < c {
        Interval { lo: big.lo, hi: c }
    } else if y > c {
        Interval { lo: c, hi: big.hi }
    } else {
        return false;
    };
    // stepwise: every step is monotone and onto the next interval, which
    // avoids pushing roundoff through m forward iterations
    let chain = pull_back_along(map, &orbit[..=m], &half);
    let onto = (0..m).all(|k| {
        let (cur, next) = (chain.intervals[k], chain.intervals[k + 1]);
        let img = map.image(&cur);
        let tol = 1e-9 * next.len() + ULP_SLACK;
        !map.has_turning_point(&cur) && (img.lo - next.lo).abs() <= tol && (img.hi - next.hi).abs() <= tol
    });
    onto && chain.intervals[0].contains_open(orbit[0])
}

/// Periodicity test for a target: some `f^q(I) ⊆ I`, `q <= q_max`.
pub fn is_periodic_interval(map: &MapSpec, i: &Interval, q_max: usize) -> Option<usize> {
    let mut img = *i;
    for q in 1..=q_max {
        img = map.image(&img);
        if i.contains_interval(&img, 0.0) {
            return Some(q);
        }
        if img == map.hull() {
            return None;
        }
    }
    None
}

/// A first-entry instance: `n` is the first time `orb(x)` enters `target°`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x: f64,
    pub n: usize,
    pub target: Interval,
}

/// Where instance base points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartPoints {
    /// Uniform on the phase-space hull.
    Lebesgue,
    /// Backward orbits of a repelling fixed point along random branches,
    /// `depth_lo ..= depth_hi` steps deep. These points stay off the basins
    /// of attracting cycles.
    RepellerPreimages { anchor: f64, depth_lo: usize, depth_hi: usize },
}

/// Repelling fixed point in `M°` with the largest coordinate.
pub fn repelling_fixed_point(map: &MapSpec) -> Option<f64> {
    let hull = map.hull();
    let samples = 4096;
    let g = |x: f64| map.f(x) - x;
    let mut best = None;
    let mut px = hull.lo;
    let mut pv = g(px);
    for i in 1..=samples {
        let x = hull.lo + hull.len() * i as f64 / samples as f64;
        let v = g(x);
        let root = if v == 0.0 {
            Some(x)
        } else if pv != 0.0 && (v > 0.0) != (pv > 0.0) {
            Some(crate::map_model::bisect_monotone(g, px, x, 0.0))
        } else {
            None
        };
        if let Some(z) = root {
            if map.df(z).abs() > 1.0 && map.in_domain(z) && z > hull.lo && z < hull.hi {
                best = Some(z);
            }
        }
        px = x;
        pv = v;
    }
    best
}

/// Draws one instance: a base point, then a target of length in
/// `len_range` (kept inside `M°` and below ξ), then the first entry time
/// within `horizon`. `None` when the draw fails a precondition.
pub fn random_instance(map: &MapSpec, rng: &mut ChaCha8Rng, starts: &StartPoints, len_range: (f64, f64), horizon: usize) -> Option<Instance> {
    let hull = map.hull();
    let len_hi = len_range.1.min(0.999 * map.xi());
    if len_hi <= len_range.0 {
        return None;
    }
    let len = rng.gen_range(len_range.0..len_hi);
    let (x, near) = match starts {
        StartPoints::Lebesgue => (rng.gen_range(hull.lo..hull.hi), None),
        StartPoints::RepellerPreimages { anchor, depth_lo, depth_hi } => {
            let k = rng.gen_range(*depth_lo..=*depth_hi);
            let mut y = *anchor;
            for _ in 0..k {
                let pre = map.preimages(y);
                if pre.is_empty() {
                    return None;
                }
                y = pre[rng.gen_range(0..pre.len())];
            }
            (y, Some(k))
        }
    };
    let lo = match near {
        // a target around one of the first k orbit points
        Some(k) => {
            let j = rng.gen_range(0..=k);
            let z = map.iterate_n(x, j);
            z - rng.gen_range(0.0..len)
        }
        None => rng.gen_range(hull.lo..hull.hi - len),
    };
    let target = Interval { lo, hi: lo + len };
    if !map.in_interior(&target) {
        return None;
    }
    let orbit = orbit_points(map, x, horizon);
    let n = first_entry(&orbit, &target)?;
    collection_orbit(map, x, n, &target).ok()?;
    Some(Instance { x, n, target })
}

/// `count` instances drawn in parallel, one substream per attempt; attempts
/// that fail a precondition are skipped, up to `20 * count` attempts.
pub fn generate_instances(map: &MapSpec, starts: &StartPoints, len_range: (f64, f64), horizon: usize, count: usize, seed: u64) -> Vec<Instance> {
    let attempts = 20 * count;
    let mut out = Vec::with_capacity(count);
    let batch = count.max(64);
    let mut next = 0;
    while out.len() < count && next < attempts {
        let end = (next + batch).min(attempts);
        let got: Vec<Option<Instance>> = (next..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                random_instance(map, &mut rng, starts, len_range, horizon)
            })
            .collect();
        out.extend(got.into_iter().flatten());
        next = end;
    }
    out.truncate(count);
    out
}
