use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DecomposeConfig;
use crate::density_lab::{GridRle, GridSet};
use crate::map_model::MapSpec;
use crate::orbit_engine::{Classifier, OrbitTag, Witness};
use crate::rng::substream;

/// One stratified initial point with its fate and ω-signature.
#[derive(Debug, Clone)]
pub struct RealmSample {
    pub x: f64,
    pub tag: OrbitTag,
    /// Cycle or homterval the orbit settles on, for trivial fates.
    pub witness: Witness,
    /// Cells of the signature grid visited after burn-in (for trivial
    /// fates, the cells of the attracting cycle).
    pub signature: GridSet,
}

impl RealmSample {
    pub fn trivial(&self) -> bool {
        self.tag.is_trivial()
    }
}

/// Classifies `cfg.samples` stratified points of the hull and records
/// their ω-signatures.
pub fn sample_points(cl: &Classifier, cfg: &DecomposeConfig) -> Vec<RealmSample> {
    let map = cl.map;
    let hull = map.hull();
    let n = cfg.samples.max(1);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, i as u64);
            let x = map.clamp(hull.lo + (i as f64 + rng.gen::<f64>()) * hull.len() / n as f64);
            sample_one(cl, cfg, x)
        })
        .collect()
}

fn sample_one(cl: &Classifier, cfg: &DecomposeConfig, x: f64) -> RealmSample {
    let map = cl.map;
    let mut sig = GridSet::for_map(map, cfg.signature_h);
    let mut last = (0usize, x);
    let class = cl.classify_with_orbit(x, cfg.budget, |k, y| {
        if k >= cfg.burn_in {
            sig.insert(y);
        }
        last = (k, y);
    });
    if class.tag.is_trivial() {
        let mut s = GridSet::for_map(map, cfg.signature_h);
        match &class.witness {
            Witness::Cycle(c) => c.points.iter().for_each(|&p| s.insert(p)),
            Witness::Homterval(h) => h.orbit(map).iter().for_each(|j| s.insert_interval(j)),
            _ => {}
        }
        return RealmSample { x, tag: class.tag, witness: class.witness, signature: s };
    }
    let (mut k, mut y) = last;
    let end = cfg.burn_in + cfg.signature_steps;
    while k < end {
        y = map.clamp(map.f(y));
        k += 1;
        if k >= cfg.burn_in {
            sig.insert(y);
        }
    }
    RealmSample { x, tag: class.tag, witness: Witness::None, signature: sig }
}

/// Single-linkage clusters of `sigs` under Jaccard similarity `>= thr`,
/// ordered by their first member.
pub fn cluster_signatures(sigs: &[&GridSet], thr: f64) -> Vec<Vec<usize>> {
    // identical signatures first
    let mut uniq: BTreeMap<Vec<(usize, usize)>, Vec<usize>> = BTreeMap::new();
    for (i, s) in sigs.iter().enumerate() {
        uniq.entry(s.runs()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = {
        let mut g: Vec<Vec<usize>> = uniq.into_values().collect();
        g.sort_by_key(|m| m[0]);
        g
    };
    let mut parent: Vec<usize> = (0..groups.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b && sigs[groups[i][0]].jaccard(sigs[groups[j][0]]) >= thr {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, members) in groups.iter().enumerate() {
        let r = find(&mut parent, g);
        by_root.entry(r).or_default().extend(members.iter().copied());
    }
    let mut out: Vec<Vec<usize>> = by_root
        .into_values()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect();
    out.sort_by_key(|m| m[0]);
    out
}

/// Stable 64-bit hash of a signature's runs.
pub fn signature_hash(g: &GridSet) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    g.len().hash(&mut h);
    g.runs().hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    /// Attracted to a limit cycle or a homterval cycle.
    Trivial,
    Nontrivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealmCluster {
    pub fate: Fate,
    /// Most frequent orbit tag among the members.
    pub tag: OrbitTag,
    /// Union of the member signatures.
    pub signature: GridRle,
    pub signature_hash: u64,
    pub measure: f64,
    pub members: usize,
    pub representative_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicComponentEstimate {
    pub signature: GridRle,
    pub signature_hash: u64,
    pub member_measure: f64,
    pub members: usize,
    pub representative_points: Vec<f64>,
}

const REPRESENTATIVES: usize = 20;

pub(super) struct Clustered {
    pub clusters: Vec<RealmCluster>,
    /// Member sample indices of each cluster.
    pub members: Vec<Vec<usize>>,
    pub union: Vec<GridSet>,
}

/// Clusters trivial and non-trivial samples separately.
pub(super) fn cluster_samples(map: &MapSpec, samples: &[RealmSample], thr: f64) -> Clustered {
    let weight = map.measure() / samples.len().max(1) as f64;
    let mut out = Clustered { clusters: Vec::new(), members: Vec::new(), union: Vec::new() };
    for fate in [Fate::Trivial, Fate::Nontrivial] {
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].trivial() == (fate == Fate::Trivial)).collect();
        let sigs: Vec<&GridSet> = idx.iter().map(|&i| &samples[i].signature).collect();
        for group in cluster_signatures(&sigs, thr) {
            let members: Vec<usize> = group.iter().map(|&g| idx[g]).collect();
            let mut union = samples[members[0]].signature.with_shape();
            let mut tags: BTreeMap<String, (usize, OrbitTag)> = BTreeMap::new();
            for &m in &members {
                union.union_with(&samples[m].signature);
                let t = samples[m].tag;
                tags.entry(format!("{t:?}")).or_insert((0, t)).0 += 1;
            }
            let tag = tags.values().max_by_key(|(c, _)| *c).map(|(_, t)| *t).unwrap();
            out.clusters.push(RealmCluster {
                fate,
                tag,
                signature: union.to_rle(),
                signature_hash: signature_hash(&union),
                measure: members.len() as f64 * weight,
                members: members.len(),
                representative_points: spread(&members, REPRESENTATIVES).iter().map(|&m| samples[m].x).collect(),
            });
            out.members.push(members);
            out.union.push(union);
        }
    }
    out
}

/// Up to `k` evenly spaced entries of `v`.
pub(super) fn spread<T: Copy>(v: &[T], k: usize) -> Vec<T> {
    if v.len() <= k {
        return v.to_vec();
    }
    (0..k).map(|i| v[i * v.len() / k]).collect()
}

/// Realms of attraction: samples clustered by ω-signature overlap, each
/// cluster weighted by its share of the phase-space measure.
pub fn sample_realms(cl: &Classifier, cfg: &DecomposeConfig) -> Vec<RealmCluster> {
    let samples = sample_points(cl, cfg);
    cluster_samples(cl.map, &samples, cfg.jaccard).clusters
}

pub(super) fn components_from(map: &MapSpec, c: &Clustered, floor: f64) -> Vec<(usize, ErgodicComponentEstimate)> {
    c.clusters
        .iter()
        .enumerate()
        .filter(|(_, k)| k.fate == Fate::Nontrivial && k.measure > floor * map.measure())
        .map(|(i, k)| {
            (
                i,
                ErgodicComponentEstimate {
                    signature: k.signature.clone(),
                    signature_hash: k.signature_hash,
                    member_measure: k.measure,
                    members: k.members,
                    representative_points: k.representative_points.clone(),
                },
            )
        })
        .collect()
}

/// Non-trivial realm clusters above the component floor.
pub fn ergodic_components(cl: &Classifier, cfg: &DecomposeConfig) -> Vec<ErgodicComponentEstimate> {
    let samples = sample_points(cl, cfg);
    let c = cluster_samples(cl.map, &samples, cfg.jaccard);
    components_from(cl.map, &c, cfg.component_floor).into_iter().map(|(_, e)| e).collect()
}
