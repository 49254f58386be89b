//! Realms of attraction, ergodic components of Λ(f), the decomposition of
//! the global attractor into primitive attractors and the conservative
//! kernel.
//!
//! "Infinitely often" is read at grid scale: a cell belongs to an attractor
//! when the representative orbits of its component visit it at least
//! `visit_min` times after burn-in.

mod checks;
mod realms;
mod recurrence;

use serde::{Deserialize, Serialize};

pub use checks::{
    classify_attractor, coverage, covering_check, orbit_cells, theorem_b_check, visit_support, word_complexity, ClassifyAttractorReport, CoveringCheck,
    Theorem4Checks, TheoremBReport, WordComplexity,
};
pub use realms::{cluster_signatures, ergodic_components, sample_points, sample_realms, signature_hash, ErgodicComponentEstimate, Fate, RealmCluster, RealmSample};
pub use recurrence::{conservative_kernel, recurrence_csv, CellRecurrence, CellStatus, RecurrenceConfig, RecurrenceReport};

use crate::density_lab::{GridRle, GridSet};
use crate::error::Result;
use crate::map_model::MapSpec;
use crate::orbit_engine::{Classifier, OrbitConfig, Stability, Witness};
use crate::rng::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub grid_h: f64,
    pub budget: usize,
    pub samples: usize,
    pub burn_in: usize,
    pub visit_min: u8,
    /// Grid of the ω-signatures used for clustering.
    pub signature_h: f64,
    /// Orbit points after burn-in collected into a signature.
    pub signature_steps: usize,
    pub jaccard: f64,
    /// Components below this share of `λ(M)` are not declared.
    pub component_floor: f64,
    /// Attractor supports are built from this many orbit lengths of
    /// `budget - burn_in` points.
    pub support_orbits: usize,
    pub refine_factor: usize,
    /// Support shrink factor under refinement that reads as Cantor.
    pub shrink_ratio: f64,
    /// Support change under refinement that reads as full intervals.
    pub stable_tol: f64,
    pub minimality_points: usize,
    pub coverage: f64,
    pub covering_pairs: usize,
    pub covering_horizon: usize,
    pub entropy_threshold: f64,
    pub sampling_tol: f64,
    pub recurrence: RecurrenceConfig,
    pub orbit: OrbitConfig,
    pub seed: u64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            grid_h: 1.0 / (1u64 << 20) as f64,
            budget: 1_000_000,
            samples: 10_000,
            burn_in: 10_000,
            visit_min: 50,
            signature_h: 1.0 / 4096.0,
            signature_steps: 1 << 16,
            jaccard: 0.9,
            component_floor: 1e-3,
            support_orbits: 128,
            refine_factor: 4,
            shrink_ratio: 1.5,
            stable_tol: 0.02,
            minimality_points: 20,
            coverage: 0.95,
            covering_pairs: 10,
            covering_horizon: 1000,
            entropy_threshold: 0.05,
            sampling_tol: 0.02,
            recurrence: RecurrenceConfig::default(),
            orbit: OrbitConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttractorClass {
    #[serde(rename = "A1_limit_cycle")]
    A1LimitCycle,
    #[serde(rename = "A2_interval_cycle")]
    A2IntervalCycle,
    #[serde(rename = "A3_cantor")]
    A3Cantor,
    #[serde(rename = "ambiguous")]
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub h: f64,
    pub measure: f64,
    pub fine_h: f64,
    pub fine_measure: f64,
    /// `measure / fine_measure`.
    pub shrink: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorEstimate {
    pub support: GridRle,
    pub support_measure: f64,
    pub klass: AttractorClass,
    pub candidates: Vec<AttractorClass>,
    pub period: Option<usize>,
    pub contained_critical_points: Vec<f64>,
    /// Sampled measure of points with `ω(x) ⊆ A`.
    pub realm_measure: f64,
    /// Sampled measure of points with `ω(x) = A`.
    pub exact_realm_measure: f64,
    pub refinement: Option<Refinement>,
    pub cascade_depth: Option<usize>,
    pub covering: Option<CoveringCheck>,
    pub theorem4: Option<Theorem4Checks>,
    /// Limit cycle with a neutral multiplier: primitive, possibly not
    /// minimal. No minimality verdict is made for these.
    pub parabolic_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Checks {
    pub trivial_measure: f64,
    pub component_measure: f64,
    pub unassigned_measure: f64,
    /// Trivial dynamics, component realms and the remainder split `M` with
    /// the remainder below the sampling tolerance.
    pub near_partition: bool,
    pub contains_critical_point: Vec<bool>,
    pub max_pairwise_intersection_cells: usize,
    /// Intersections were recomputed on the refined supports.
    pub intersections_refined: bool,
    pub finite_intersections: bool,
    /// Per attractor: `|λ(RL) - λ(E)|`.
    pub realm_component_gap: Vec<f64>,
    pub realms_match_components: bool,
    pub pairing_bijective: bool,
    /// Critical points whose own orbit is non-trivial.
    pub nontrivial_critical_points: usize,
    pub attractors_within_critical_count: bool,
    pub components_within_envelope: bool,
}

impl Theorem2Checks {
    pub fn all_pass(&self) -> bool {
        self.near_partition
            && self.contains_critical_point.iter().all(|&b| b)
            && self.finite_intersections
            && self.realms_match_components
            && self.pairing_bijective
            && self.attractors_within_critical_count
            && self.components_within_envelope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub config: DecomposeConfig,
    pub lambda_estimate: GridRle,
    pub lambda_measure: f64,
    pub realms: Vec<RealmCluster>,
    pub components: Vec<ErgodicComponentEstimate>,
    /// Infinite primitive attractors, one per component.
    pub attractors: Vec<AttractorEstimate>,
    pub limit_cycles: Vec<AttractorEstimate>,
    /// `(component, attractor)` index pairs.
    pub pairing: Vec<(usize, usize)>,
    pub theorem2: Theorem2Checks,
    pub recurrence: RecurrenceReport,
}

/// Cells of `g` re-expressed on the grid of `template`.
fn regrid(g: &GridSet, template: &GridSet) -> GridSet {
    let mut out = template.with_shape();
    for j in g.intervals() {
        let j = crate::interval::Interval { lo: j.lo + 0.25 * g.h(), hi: j.hi - 0.25 * g.h() };
        out.insert_interval(&j);
    }
    out
}

fn contained_critical(map: &MapSpec, support: &GridSet) -> Vec<f64> {
    map.critical_points().iter().map(|c| c.location).filter(|&c| support.distance_to(c) <= 2.0 * support.h()).collect()
}

/// Full pipeline: realms, components, one attractor per component, the
/// limit cycles, the per-clause checks and the conservative kernel.
pub fn decompose(map: &MapSpec, cfg: &DecomposeConfig) -> Result<DecompositionReport> {
    let cl = Classifier::new(map, &cfg.orbit);
    let samples = sample_points(&cl, cfg);
    let clustered = realms::cluster_samples(map, &samples, cfg.jaccard);
    let comps = realms::components_from(map, &clustered, cfg.component_floor);
    let m_measure = map.measure();
    let weight = m_measure / samples.len().max(1) as f64;

    let mut lambda = GridSet::for_map(map, cfg.grid_h);
    let n_cells = lambda.len();
    for (i, s) in samples.iter().enumerate() {
        if !s.trivial() {
            for c in i * n_cells / samples.len()..((i + 1) * n_cells / samples.len()).min(n_cells) {
                lambda.set(c, true);
            }
        }
    }

    let steps = cfg.budget.saturating_sub(cfg.burn_in).max(1);
    let mut attractors = Vec::new();
    let mut orbit_samples = Vec::new();
    let mut fine_supports = Vec::new();
    for (ci, _) in &comps {
        let xs: Vec<f64> = clustered.members[*ci].iter().map(|&m| samples[m].x).collect();
        let starts = realms::spread(&xs, cfg.support_orbits);
        let per = (cfg.support_orbits * steps).div_ceil(starts.len());
        let support = visit_support(map, &starts, cfg.burn_in, per, cfg.grid_h, cfg.visit_min);
        let fine_h = cfg.grid_h / cfg.refine_factor as f64;
        let fine = visit_support(map, &starts, cfg.burn_in, per * cfg.refine_factor, fine_h, cfg.visit_min);
        let refinement = Refinement {
            h: support.h(),
            measure: support.measure(),
            fine_h: fine.h(),
            fine_measure: fine.measure(),
            shrink: if fine.measure() > 0.0 { support.measure() / fine.measure() } else { f64::INFINITY },
        };
        let contained = contained_critical(map, &support);
        let cascade_depth = cl.cascades.iter().filter(|c| contained.iter().any(|&x| (x - c.critical_point).abs() < 1e-12)).map(|c| c.depth()).max();
        // late points of one representative orbit, on the attractor
        let mut pts = Vec::with_capacity(cfg.minimality_points);
        let mut y = map.clamp(starts[0]);
        for _ in 0..cfg.burn_in {
            y = map.clamp(map.f(y));
        }
        let gap = (steps / cfg.minimality_points.max(1)).max(1);
        for k in 0..cfg.minimality_points * gap {
            if k % gap == 0 {
                pts.push(y);
            }
            y = map.clamp(map.f(y));
        }
        attractors.push(AttractorEstimate {
            support_measure: support.measure(),
            support: support.to_rle(),
            klass: AttractorClass::Ambiguous,
            candidates: vec![],
            period: None,
            contained_critical_points: contained,
            realm_measure: 0.0,
            exact_realm_measure: 0.0,
            refinement: Some(refinement),
            cascade_depth,
            covering: None,
            theorem4: None,
            parabolic_candidate: false,
        });
        orbit_samples.push(pts);
        fine_supports.push(fine);
    }

    let mut limit_cycles = Vec::new();
    for (ci, k) in clustered.clusters.iter().enumerate() {
        if k.fate != Fate::Trivial {
            continue;
        }
        let first = &samples[clustered.members[ci][0]];
        let mut support = GridSet::for_map(map, cfg.grid_h);
        let (period, parabolic) = match &first.witness {
            Witness::Cycle(c) => {
                c.points.iter().for_each(|&p| support.insert(p));
                (Some(c.period), c.stability == Stability::Parabolic)
            }
            Witness::Homterval(h) => {
                h.orbit(map).iter().for_each(|j| support.insert_interval(j));
                (Some(h.period), false)
            }
            _ => (None, false),
        };
        limit_cycles.push(AttractorEstimate {
            support_measure: support.measure(),
            contained_critical_points: contained_critical(map, &support),
            support: support.to_rle(),
            klass: AttractorClass::A1LimitCycle,
            candidates: vec![],
            period,
            realm_measure: k.measure,
            exact_realm_measure: k.measure,
            refinement: None,
            cascade_depth: None,
            covering: None,
            theorem4: None,
            parabolic_candidate: parabolic,
        });
    }

    // realms of the infinite attractors, read off the sample signatures
    let sig_template = GridSet::for_map(map, cfg.signature_h);
    let supports: Vec<GridSet> = attractors.iter().map(|a| GridSet::from_rle(&a.support)).collect();
    for (a, s) in attractors.iter_mut().zip(&supports) {
        let coarse = regrid(s, &sig_template);
        let near = coarse.dilate(1);
        let mut rl = 0usize;
        let mut exact = 0usize;
        for x in &samples {
            if coverage(&x.signature, &near) >= cfg.coverage {
                rl += 1;
                if !x.trivial() && x.signature.jaccard(&coarse) >= cfg.jaccard {
                    exact += 1;
                }
            }
        }
        a.realm_measure = rl as f64 * weight;
        a.exact_realm_measure = exact as f64 * weight;
    }

    for i in 0..attractors.len() {
        let others: Vec<GridSet> = supports.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()).collect();
        let r = classify_attractor(map, &attractors[i], &orbit_samples[i], &others, cfg);
        let a = &mut attractors[i];
        a.klass = r.klass;
        a.candidates = r.candidates;
        a.covering = r.covering;
        a.theorem4 = r.theorem4;
        if a.klass == AttractorClass::A2IntervalCycle {
            a.period = Some(supports[i].coarsen(256).dilate(1).runs().len());
        }
    }

    // partition, attractor and pairing clauses
    let trivial_measure: f64 = clustered.clusters.iter().filter(|k| k.fate == Fate::Trivial).map(|k| k.measure).fold(0.0, |a, b| a + b);
    let component_measure: f64 = comps.iter().map(|(_, e)| e.member_measure).fold(0.0, |a, b| a + b);
    let unassigned_measure = (m_measure - trivial_measure - component_measure).max(0.0);
    let tol = cfg.sampling_tol * m_measure;
    let mut max_inter = 0usize;
    for i in 0..supports.len() {
        for j in i + 1..supports.len() {
            max_inter = max_inter.max(supports[i].intersection_count(&supports[j]));
        }
    }
    let ceiling = 2 * cfg.orbit.p_max;
    let mut intersections_refined = false;
    if max_inter > ceiling {
        intersections_refined = true;
        max_inter = 0;
        for i in 0..fine_supports.len() {
            for j in i + 1..fine_supports.len() {
                max_inter = max_inter.max(fine_supports[i].intersection_count(&fine_supports[j]));
            }
        }
    }
    let realm_component_gap: Vec<f64> = attractors.iter().zip(&comps).map(|(a, (_, e))| (a.exact_realm_measure - e.member_measure).abs()).collect();
    let mut pairing_bijective = true;
    for i in 0..supports.len() {
        for j in i + 1..supports.len() {
            if supports[i].jaccard(&supports[j]) >= cfg.jaccard {
                pairing_bijective = false;
            }
        }
    }
    let crit = map.critical_points();
    let nontrivial_critical_points = crit.iter().filter(|c| !cl.classify(c.location, cfg.budget).tag.is_trivial()).count();
    let theorem2 = Theorem2Checks {
        trivial_measure,
        component_measure,
        unassigned_measure,
        near_partition: unassigned_measure <= tol,
        contains_critical_point: attractors.iter().map(|a| !a.contained_critical_points.is_empty()).collect(),
        max_pairwise_intersection_cells: max_inter,
        intersections_refined,
        finite_intersections: max_inter <= ceiling,
        realms_match_components: realm_component_gap.iter().all(|&g| g <= tol) && attractors.iter().all(|a| a.exact_realm_measure <= a.realm_measure),
        realm_component_gap,
        pairing_bijective,
        nontrivial_critical_points,
        attractors_within_critical_count: attractors.len() <= nontrivial_critical_points,
        components_within_envelope: comps.len() <= 2 * crit.len(),
    };

    let mut rcfg = cfg.recurrence.clone();
    rcfg.seed = child_seed(cfg.seed, 0x5EC);
    let mut recurrence = conservative_kernel(&cl, &rcfg);
    let kernel = recurrence.kernel_set();
    let mut global = kernel.with_shape();
    for a in attractors.iter().chain(&limit_cycles) {
        global.union_with(&regrid(&GridSet::from_rle(&a.support), &kernel));
    }
    recurrence.symmetric_difference = Some(kernel.symmetric_difference_measure(&global));

    Ok(DecompositionReport {
        config: cfg.clone(),
        lambda_measure: lambda.measure(),
        lambda_estimate: lambda.to_rle(),
        realms: clustered.clusters,
        pairing: (0..comps.len()).map(|i| (i, i)).collect(),
        components: comps.into_iter().map(|(_, e)| e).collect(),
        attractors,
        limit_cycles,
        theorem2,
        recurrence,
    })
}

/// One row per attractor (infinite ones first) as CSV.
pub fn attractors_csv(report: &DecompositionReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "class", "period", "support_measure", "realm_measure", "exact_realm_measure", "critical_points", "cascade_depth"]).unwrap();
    for (i, a) in report.attractors.iter().chain(&report.limit_cycles).enumerate() {
        let class = serde_json::to_value(a.klass).unwrap().as_str().unwrap_or_default().to_string();
        w.write_record([
            i.to_string(),
            class,
            a.period.map(|p| p.to_string()).unwrap_or_default(),
            format!("{:.16e}", a.support_measure),
            format!("{:.16e}", a.realm_measure),
            format!("{:.16e}", a.exact_realm_measure),
            a.contained_critical_points.iter().map(|c| format!("{c:.16e}")).collect::<Vec<_>>().join(" "),
            a.cascade_depth.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
